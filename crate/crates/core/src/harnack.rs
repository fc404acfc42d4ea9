//! Harmonic and caloric functions with exterior data, Harnack constants,
//! Hölder exponents, and the equivalence matrix.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::{check_csj, check_pi, CsjParams, PiParams};
use crate::heat::{
    check_ephi, check_ndl, default_times, hk_sweep, Domain, EphiParams, HeatOptions, HeatSolver, HkMode, NdlParams,
};
use crate::kernel::{check_j_bounds, check_ujs, JumpKernel};
use crate::linalg;
use crate::report::{top_drift, ConditionReport, Relation, Verdict, Witness};
use crate::sample::{self, STREAM_FAMILY};
use crate::scale::ScaleFunction;
use crate::space::{grid_label, MetricMeasureSpace, DIST_EPS};

/// Space-time cylinder `(t0, t0 + C4 phi(R)) x B(x0, R)` with the windows
/// `Q- = [t0 + C1 phi(R), t0 + C2 phi(R)] x B(x0, C5 R)` and
/// `Q+ = [t0 + C3 phi(R), t0 + C4 phi(R)] x B(x0, C5 R)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cylinder {
    pub t0: f64,
    pub x0: usize,
    pub r: f64,
    /// `C1..C5`.
    pub c: [f64; 5],
}

pub const DEFAULT_CYLINDER: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 0.5];

/// Samples per time window.
const WINDOW_SAMPLES: usize = 6;

pub fn validate_constants(c: &[f64; 5]) -> Result<()> {
    let ok = c[0] > 0.0 && c[0] < c[1] && c[1] < c[2] && c[2] < c[3] && c[4] > 0.0 && c[4] < 1.0;
    if ok && c.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!(
            "cylinder constants must satisfy 0 < C1 < C2 < C3 < C4 and 0 < C5 < 1, got {c:?}"
        )))
    }
}

/// The constants `C_k = k C1`, keeping `C5`.
pub fn plus_shape(c: &[f64; 5]) -> [f64; 5] {
    [c[0], 2.0 * c[0], 3.0 * c[0], 4.0 * c[0], c[4]]
}

impl Cylinder {
    pub fn new(t0: f64, x0: usize, r: f64, c: [f64; 5]) -> Result<Self> {
        validate_constants(&c)?;
        if !(r > 0.0) {
            return Err(Error::InvalidSpec("cylinder radius must be positive".into()));
        }
        Ok(Self { t0, x0, r, c })
    }

    fn linspace(a: f64, b: f64) -> Vec<f64> {
        (0..WINDOW_SAMPLES).map(|k| a + (b - a) * k as f64 / (WINDOW_SAMPLES - 1) as f64).collect()
    }

    pub fn minus_times(&self, phi: &ScaleFunction) -> Vec<f64> {
        let p = phi.eval(self.r);
        Self::linspace(self.t0 + self.c[0] * p, self.t0 + self.c[1] * p)
    }

    pub fn plus_times(&self, phi: &ScaleFunction) -> Vec<f64> {
        let p = phi.eval(self.r);
        Self::linspace(self.t0 + self.c[2] * p, self.t0 + self.c[3] * p)
    }

    pub fn end(&self, phi: &ScaleFunction) -> f64 {
        self.t0 + self.c[3] * phi.eval(self.r)
    }

    pub fn inner_radius(&self) -> f64 {
        self.c[4] * self.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    SemigroupColumn,
    ExteriorValueProblem,
    DirichletKernelColumn,
}

/// `u(t, x)` on a time grid, values over every point of the space.
#[derive(Debug, Clone)]
pub struct CaloricField {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Points where the caloric identity holds.
    pub domain: Vec<usize>,
    pub provenance: Provenance,
}

impl CaloricField {
    /// Largest `|(u(t_k+1) - u(t_k)) / dt - Q u(t_k+1)|` over the domain.
    pub fn implicit_residual(&self, space: &MetricMeasureSpace, kernel: &JumpKernel) -> f64 {
        let mut worst = 0.0_f64;
        for k in 1..self.times.len() {
            let dt = self.times[k] - self.times[k - 1];
            let (u0, u1) = (&self.values[k - 1], &self.values[k]);
            for &x in &self.domain {
                let qu: f64 = (0..space.len()).map(|y| kernel.get(x, y) * space.mu(y) * (u1[y] - u1[x])).sum();
                worst = worst.max(((u1[x] - u0[x]) / dt - qu).abs());
            }
        }
        worst
    }
}

fn mask(n: usize, d: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &x in d {
        m[x] = true;
    }
    m
}

/// `-Q_DD` and the drive `Q_{D,D^c} g`.
fn killed_system(space: &MetricMeasureSpace, kernel: &JumpKernel, d: &[usize], g: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
    let inside = mask(space.len(), d);
    let m = d.len();
    let a = DMatrix::from_fn(
        m,
        m,
        |i, j| {
            if i == j {
                kernel.lambda(d[i])
            } else {
                -kernel.get(d[i], d[j]) * space.mu(d[j])
            }
        },
    );
    let drive = d
        .iter()
        .map(|&x| (0..space.len()).filter(|&z| !inside[z]).map(|z| kernel.get(x, z) * space.mu(z) * g[z]).sum())
        .collect();
    (a, drive)
}

fn check_proper(space: &MetricMeasureSpace, d: &[usize]) -> Result<()> {
    if d.is_empty() || d.len() >= space.len() {
        return Err(Error::InvalidSpec("domain must be a nonempty proper subset".into()));
    }
    Ok(())
}

/// Harmonic in `d` with `u = g` outside `d`.
pub fn solve_harmonic(space: &MetricMeasureSpace, kernel: &JumpKernel, d: &[usize], g: &[f64]) -> Result<Vec<f64>> {
    check_proper(space, d)?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSpec("exterior data must be finite".into()));
    }
    let (a, drive) = killed_system(space, kernel, d, g);
    let ud = linalg::solve_vec(a, &drive)?;
    let mut u = g.to_vec();
    for (i, &x) in d.iter().enumerate() {
        u[x] = ud[i];
    }
    Ok(u)
}

pub struct CaloricData<'a> {
    /// Initial values on every point; only the domain is used.
    pub initial: Vec<f64>,
    /// Exterior values at time `t` on every point; only the complement is used.
    pub exterior: &'a dyn Fn(f64) -> Vec<f64>,
}

/// Implicit Euler `(I - dt Q_D) u(t + dt) = u(t) + dt Q_{D,D^c} g(t + dt)` on `[t0, t1]`.
pub fn solve_caloric(
    space: &MetricMeasureSpace,
    kernel: &JumpKernel,
    d: &[usize],
    data: &CaloricData<'_>,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<CaloricField> {
    check_proper(space, d)?;
    if steps == 0 || !(t1 > t0) {
        return Err(Error::InvalidSpec("caloric solve needs t1 > t0 and at least one step".into()));
    }
    let dt = (t1 - t0) / steps as f64;
    let (a, _) = killed_system(space, kernel, d, &vec![0.0; space.len()]);
    let m = d.len();
    let lhs = DMatrix::identity(m, m) + a * dt;
    let lu = lhs.lu();
    let inside = mask(space.len(), d);
    let mut times = vec![t0];
    let mut u = data.initial.clone();
    let g0 = (data.exterior)(t0);
    for z in 0..space.len() {
        if !inside[z] {
            u[z] = g0[z];
        }
    }
    let mut values = vec![u.clone()];
    for k in 1..=steps {
        let t = t0 + dt * k as f64;
        let g = (data.exterior)(t);
        let rhs: Vec<f64> = d
            .iter()
            .map(|&x| {
                let drive: f64 =
                    (0..space.len()).filter(|&z| !inside[z]).map(|z| kernel.get(x, z) * space.mu(z) * g[z]).sum();
                u[x] + dt * drive
            })
            .collect();
        let sol =
            lu.solve(&nalgebra::DVector::from_vec(rhs)).ok_or_else(|| Error::SingularSystem("implicit step".into()))?;
        let mut next = g;
        for (i, &x) in d.iter().enumerate() {
            next[x] = sol[i];
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonconvergentStepping);
        }
        u = next;
        times.push(t);
        values.push(u.clone());
    }
    Ok(CaloricField { times, values, domain: d.to_vec(), provenance: Provenance::ExteriorValueProblem })
}

/// Spectral propagation on a ball for time-constant exterior data:
/// `u(t) = u_inf + exp((t - t0) Q_B)(u0 - u_inf)` with `u_inf` harmonic.
pub struct BallPropagator {
    solver: HeatSolver,
    /// `u(t)` restricted to `rows` is `u_inf + W (e^{-a t} * c)`.
    inside: Vec<bool>,
    /// `M^{1/2} U` row-scaled, used to project `(u0 - u_inf)` onto modes.
    proj: DMatrix<f64>,
}

impl BallPropagator {
    pub fn new(
        space: &MetricMeasureSpace,
        kernel: &JumpKernel,
        center: usize,
        radius: f64,
        opts: &HeatOptions,
    ) -> Result<Self> {
        let ball = space.ball(center, radius);
        check_proper(space, &ball)?;
        let opts = HeatOptions {
            allow_translation: false,
            force_stepped: false,
            dense_limit: opts.max_points,
            ..opts.clone()
        };
        let solver = HeatSolver::on_points(space, kernel, Domain::Ball { center, radius }, ball, &opts)?;
        let (_, u) = solver.spectral().expect("dense ball solver");
        let s = solver.sqrt_mu();
        let mut proj = u.clone();
        for (i, &si) in s.iter().enumerate() {
            proj.row_mut(i).scale_mut(si);
        }
        Ok(Self { inside: mask(space.len(), solver.index()), solver, proj })
    }

    pub fn ball(&self) -> &[usize] {
        self.solver.index()
    }

    pub fn solver(&self) -> &HeatSolver {
        &self.solver
    }

    /// `Q_{B,B^c} g` on the ball.
    pub fn drive(&self, space: &MetricMeasureSpace, kernel: &JumpKernel, g: &[f64]) -> Vec<f64> {
        self.ball()
            .iter()
            .map(|&x| {
                (0..space.len()).filter(|&z| !self.inside[z]).map(|z| kernel.get(x, z) * space.mu(z) * g[z]).sum()
            })
            .collect()
    }

    /// Modal form `(u_inf, c)` of the member with ball initial data `u0` and drive `b`.
    pub fn modes(&self, u0: &[f64], drive: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (a, u) = self.solver.spectral().unwrap();
        let s = self.solver.sqrt_mu();
        let m = self.solver.len();
        let sb: Vec<f64> = (0..m).map(|i| s[i] * drive[i]).collect();
        let coeff = u.tr_mul(&nalgebra::DVector::from_vec(sb));
        let scaled = nalgebra::DVector::from_fn(m, |k, _| coeff[k] / a[k]);
        let w = u * scaled;
        let u_inf: Vec<f64> = (0..m).map(|i| w[i] / s[i]).collect();
        let diff = nalgebra::DVector::from_fn(m, |i, _| u0[i] - u_inf[i]);
        let c = self.proj.tr_mul(&diff);
        (u_inf, c.as_slice().to_vec())
    }

    /// `u(t)` at local rows from the modal form, `t` measured from the start.
    pub fn eval(&self, u_inf: &[f64], c: &[f64], t: f64, rows: &[usize], out: &mut Vec<f64>) {
        let (a, u) = self.solver.spectral().unwrap();
        let s = self.solver.sqrt_mu();
        let e: Vec<f64> = a.iter().zip(c).map(|(&ak, &ck)| (-t * ak).exp() * ck).collect();
        out.clear();
        for &i in rows {
            let mut v = 0.0;
            for (k, ek) in e.iter().enumerate() {
                v += u[(i, k)] * ek;
            }
            out.push(u_inf[i] + v / s[i]);
        }
    }
}

/// Caloric field with constant exterior data from the exact propagator.
pub fn caloric_exact(
    space: &MetricMeasureSpace,
    kernel: &JumpKernel,
    center: usize,
    radius: f64,
    u0: &[f64],
    g: &[f64],
    times: &[f64],
) -> Result<CaloricField> {
    let prop = BallPropagator::new(space, kernel, center, radius, &HeatOptions::default())?;
    let local0: Vec<f64> = prop.ball().iter().map(|&x| u0[x]).collect();
    let (u_inf, c) = prop.modes(&local0, &prop.drive(space, kernel, g));
    let rows: Vec<usize> = (0..prop.ball().len()).collect();
    let mut buf = Vec::new();
    let values = times
        .iter()
        .map(|&t| {
            prop.eval(&u_inf, &c, t, &rows, &mut buf);
            let mut v = g.to_vec();
            for (i, &x) in prop.ball().iter().enumerate() {
                v[x] = buf[i];
            }
            v
        })
        .collect();
    Ok(CaloricField {
        times: times.to_vec(),
        values,
        domain: prop.ball().to_vec(),
        provenance: Provenance::ExteriorValueProblem,
    })
}

/// Exterior points with a jump into the ball, capped at `budget` seeded samples.
fn connected_exterior(
    space: &MetricMeasureSpace,
    kernel: &JumpKernel,
    ball: &[usize],
    budget: usize,
    seed: u64,
) -> Vec<usize> {
    let inside = mask(space.len(), ball);
    let ext: Vec<usize> =
        (0..space.len()).filter(|&z| !inside[z] && ball.iter().any(|&x| kernel.get(x, z) > 0.0)).collect();
    sample::subset(ext.len(), budget, seed, STREAM_FAMILY).into_iter().map(|i| ext[i]).collect()
}

fn random_exterior(space: &MetricMeasureSpace, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = sample::stream(seed, STREAM_FAMILY + 1000);
    (0..count).map(|_| (0..space.len()).map(|_| rng.random::<f64>()).collect()).collect()
}

#[derive(Debug, Clone)]
pub struct EhiParams {
    pub delta: f64,
    pub centers: usize,
    pub budget: usize,
    pub seed: u64,
}

impl Default for EhiParams {
    fn default() -> Self {
        Self { delta: 0.5, centers: 4, budget: 256, seed: 0 }
    }
}

/// Largest `sup / inf` over `B(x0, delta r)` of harmonic measures of exterior points.
pub fn check_ehi(
    space: &MetricMeasureSpace,
    _phi: &ScaleFunction,
    kernel: &JumpKernel,
    p: &EhiParams,
) -> Result<ConditionReport> {
    if !(p.delta > 0.0 && p.delta < 1.0) {
        return Err(Error::InvalidSpec("EHI delta must lie in (0,1)".into()));
    }
    let mut per_r = Vec::new();
    let mut wit = (0usize, 0.0, 0usize, 1.0_f64);
    let mut skipped = 0usize;
    for r in space.radius_grid() {
        let mut cr = 1.0_f64;
        for x0 in space.centers(p.centers, p.seed, kernel.is_translation_invariant()) {
            let ball = space.ball(x0, r);
            if ball.len() >= space.len() {
                continue;
            }
            let zs = connected_exterior(space, kernel, &ball, p.budget, p.seed);
            let (a, _) = killed_system(space, kernel, &ball, &vec![0.0; space.len()]);
            let rhs = DMatrix::from_fn(ball.len(), zs.len(), |i, k| kernel.get(ball[i], zs[k]) * space.mu(zs[k]));
            let sol = linalg::solve(a, rhs)?;
            let inner: Vec<usize> =
                (0..ball.len()).filter(|&i| space.d(x0, ball[i]) <= p.delta * r + DIST_EPS).collect();
            for (k, &z) in zs.iter().enumerate() {
                let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
                for &i in &inner {
                    lo = lo.min(sol[(i, k)]);
                    hi = hi.max(sol[(i, k)]);
                }
                if !(lo > 1e-14 * hi) {
                    skipped += 1;
                    continue;
                }
                let q = hi / lo;
                cr = cr.max(q);
                if q > wit.3 {
                    wit = (x0, r, z, q);
                }
            }
        }
        per_r.push((r, cr));
    }
    let c = wit.3;
    let ok = c.is_finite() && skipped == 0 && top_drift(&per_r, true) <= 2.0;
    let mut rep = ConditionReport::new("EHI", Verdict::from_bool(ok), grid_label(space))
        .constant("c", c)
        .constant("delta", p.delta)
        .witness(Witness::new("c", Relation::Le, c).at("x0", wit.0 as f64).at("r", wit.1).at("z", wit.2 as f64))
        .tolerance("max_drift", 2.0);
    if skipped > 0 {
        rep = rep.note(format!("{skipped} harmonic measures vanish somewhere on the inner ball"));
    }
    for &(r, v) in &per_r {
        rep = rep.constant(&format!("c(r={r})"), v);
    }
    Ok(rep)
}

#[derive(Debug, Clone)]
pub struct PhiParams {
    pub constants: [f64; 5],
    pub centers: usize,
    /// Exterior indicator members per cylinder.
    pub budget: usize,
    /// Random exterior data members per cylinder.
    pub random: usize,
    pub seed: u64,
    pub opts: HeatOptions,
}

impl Default for PhiParams {
    fn default() -> Self {
        Self { constants: DEFAULT_CYLINDER, centers: 4, budget: 256, random: 4, seed: 0, opts: HeatOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct PhiReport {
    /// `(R, C6(R))`.
    pub per_scale: Vec<(f64, f64)>,
    pub report: ConditionReport,
}

struct Extremes {
    best: f64,
    at: (usize, f64, usize, usize),
    members: usize,
    skipped: usize,
}

impl Extremes {
    fn offer(&mut self, hi: f64, lo: f64, x0: usize, r: f64, kind: usize, idx: usize) {
        self.members += 1;
        if !(hi > 0.0) || !(lo >= 1e-14 * hi) {
            self.skipped += 1;
            return;
        }
        let q = hi / lo;
        if q > self.best {
            self.best = q;
            self.at = (x0, r, kind, idx);
        }
    }
}

/// Fitted `C6(R)` over a caloric family: global heat columns, exterior value
/// problems with indicator data (started from 0 and from 1), the survival
/// probability, and random exterior data.
pub fn check_phi(
    space: &MetricMeasureSpace,
    phi: &ScaleFunction,
    kernel: &JumpKernel,
    p: &PhiParams,
    plus: bool,
) -> Result<PhiReport> {
    let consts = if plus { plus_shape(&p.constants) } else { p.constants };
    validate_constants(&consts)?;
    let global = HeatSolver::new(space, kernel, Domain::Global, &p.opts)?;
    let centers = space.centers(p.centers, p.seed, kernel.is_translation_invariant());
    let mut per_scale = Vec::new();
    let mut ext = Extremes { best: 1.0, at: (centers[0], 0.0, 0, 0), members: 0, skipped: 0 };
    for r in space.radius_grid() {
        let mut scale = Extremes { best: 1.0, at: (centers[0], r, 0, 0), members: 0, skipped: 0 };
        for &x0 in &centers {
            let cyl = Cylinder::new(0.0, x0, r, consts)?;
            let (tm, tp) = (cyl.minus_times(phi), cyl.plus_times(phi));
            let inner_global = space.ball(x0, cyl.inner_radius());

            let mut times = tm.clone();
            times.extend_from_slice(&tp);
            let tensor = global.tensor(&times)?;
            for y in 0..space.len() {
                let (mut hi, mut lo) = (0.0_f64, f64::INFINITY);
                for (ti, _) in times.iter().enumerate() {
                    for &x in &inner_global {
                        let v = tensor.get(ti, x, y);
                        if ti < WINDOW_SAMPLES {
                            hi = hi.max(v);
                        } else {
                            lo = lo.min(v);
                        }
                    }
                }
                scale.offer(hi, lo, x0, r, 0, y);
            }

            let prop = BallPropagator::new(space, kernel, x0, r, &p.opts)?;
            let ball = prop.ball().to_vec();
            let rows: Vec<usize> =
                (0..ball.len()).filter(|&i| space.d(x0, ball[i]) <= cyl.inner_radius() + DIST_EPS).collect();
            let zero = vec![0.0; ball.len()];
            let one = vec![1.0; ball.len()];
            let mut buf = Vec::new();
            let mut member = |u0: &[f64], drive: &[f64], kind: usize, idx: usize, scale: &mut Extremes| {
                let (u_inf, c) = prop.modes(u0, drive);
                let (mut hi, mut lo) = (0.0_f64, f64::INFINITY);
                for &t in &tm {
                    prop.eval(&u_inf, &c, t, &rows, &mut buf);
                    hi = buf.iter().fold(hi, |a, &b| a.max(b));
                }
                for &t in &tp {
                    prop.eval(&u_inf, &c, t, &rows, &mut buf);
                    lo = buf.iter().fold(lo, |a, &b| a.min(b));
                }
                scale.offer(hi, lo, x0, r, kind, idx);
            };
            for z in connected_exterior(space, kernel, &ball, p.budget, p.seed) {
                let mut g = vec![0.0; space.len()];
                g[z] = 1.0;
                let drive = prop.drive(space, kernel, &g);
                member(&zero, &drive, 1, z, &mut scale);
                member(&one, &drive, 2, z, &mut scale);
            }
            member(&one, &zero, 3, 0, &mut scale);
            for (k, g) in random_exterior(space, p.random, p.seed).iter().enumerate() {
                member(&zero, &prop.drive(space, kernel, g), 4, k, &mut scale);
            }
        }
        if scale.members == scale.skipped {
            return Err(Error::Degenerate(format!("every caloric member vanishes on Q+ at R = {r}")));
        }
        per_scale.push((r, scale.best));
        ext.members += scale.members;
        ext.skipped += scale.skipped;
        if scale.best >= ext.best {
            ext.best = scale.best;
            ext.at = scale.at;
        }
    }
    let c6 = ext.best;
    let ok = per_scale.iter().all(|e| e.1.is_finite()) && top_drift(&per_scale, true) <= 2.0;
    let id = if plus { "PHI+" } else { "PHI" };
    let (x0, r, kind, idx) = ext.at;
    let mut rep = ConditionReport::new(id, Verdict::from_bool(ok), grid_label(space))
        .constant("C6", c6)
        .witness(
            Witness::new("C6", Relation::Le, c6)
                .at("x0", x0 as f64)
                .at("R", r)
                .at("member_kind", kind as f64)
                .at("member", idx as f64),
        )
        .tolerance("max_drift", 2.0)
        .tolerance("skip_ratio", 1e-14);
    for (k, name) in ["C1", "C2", "C3", "C4", "C5"].iter().enumerate() {
        rep = rep.constant(name, consts[k]);
    }
    for &(r, v) in &per_scale {
        rep = rep.constant(&format!("C6(R={r})"), v);
    }
    rep = rep.note(format!(
        "{} members, {} skipped; kinds: 0 heat column, 1 exterior indicator from 0, 2 exterior indicator from 1, 3 survival, 4 random exterior",
        ext.members, ext.skipped
    ));
    Ok(PhiReport { per_scale, report: rep })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HolderMode {
    Ehr,
    Phr,
}

#[derive(Debug, Clone)]
pub struct HolderParams {
    pub budget: usize,
    pub random: usize,
    pub centers: usize,
    pub seed: u64,
}

impl Default for HolderParams {
    fn default() -> Self {
        Self { budget: 256, random: 8, centers: 1, seed: 0 }
    }
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    (slope, (sy - slope * sx) / m)
}

/// Hölder exponent from oscillation decay of harmonic (EHR) or caloric (PHR)
/// members on `B(x0, R_h 2^-k)`, `R_h = max(2 r_max, 8 r_min)`.
pub fn fit_holder(
    space: &MetricMeasureSpace,
    phi: &ScaleFunction,
    kernel: &JumpKernel,
    mode: HolderMode,
    p: &HolderParams,
) -> Result<ConditionReport> {
    let (r_min, r_max) = space.window();
    let rh = (2.0 * r_max).max(8.0 * r_min);
    let mut radii = Vec::new();
    let mut rho = rh / 2.0;
    while rho >= r_min * (1.0 - 1e-12) {
        radii.push(rho);
        rho /= 2.0;
    }
    if radii.len() < 3 {
        return Err(Error::InsufficientScales(radii.len()));
    }
    let lx: Vec<f64> = radii.iter().map(|r| (r / rh).ln()).collect();
    let mut theta = f64::INFINITY;
    let mut wit_theta = (0usize, 0usize);
    let mut fits: Vec<(usize, usize, f64, Vec<f64>)> = Vec::new();
    let mut used = 0usize;
    for x0 in space.centers(p.centers, p.seed, kernel.is_translation_invariant()) {
        let prop = BallPropagator::new(space, kernel, x0, rh, &HeatOptions::default())?;
        let ball = prop.ball().to_vec();
        let zs = connected_exterior(space, kernel, &ball, p.budget, p.seed);
        let mut data: Vec<Vec<f64>> = zs
            .iter()
            .map(|&z| {
                let mut g = vec![0.0; space.len()];
                g[z] = 1.0;
                g
            })
            .collect();
        data.extend(random_exterior(space, p.random, p.seed));
        let subballs: Vec<Vec<usize>> = radii
            .iter()
            .map(|&r| (0..ball.len()).filter(|&i| space.d(x0, ball[i]) <= r + DIST_EPS).collect())
            .collect();
        let t_end = phi.eval(rh);
        let zero = vec![0.0; ball.len()];
        let mut buf = Vec::new();
        for (k, g) in data.iter().enumerate() {
            let drive = prop.drive(space, kernel, g);
            let (u_inf, c) = prop.modes(&zero, &drive);
            let norm = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let osc: Vec<f64> = match mode {
                HolderMode::Ehr => {
                    let scale = u_inf.iter().fold(norm, |a, v| a.max(v.abs()));
                    subballs
                        .iter()
                        .map(|rows| {
                            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &i| {
                                (l.min(u_inf[i]), h.max(u_inf[i]))
                            });
                            (hi - lo) / scale
                        })
                        .collect()
                }
                HolderMode::Phr => radii
                    .iter()
                    .zip(&subballs)
                    .map(|(&r, rows)| {
                        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                        for t in Cylinder::linspace(t_end - phi.eval(r), t_end) {
                            prop.eval(&u_inf, &c, t, rows, &mut buf);
                            for &v in &buf {
                                lo = lo.min(v);
                                hi = hi.max(v);
                            }
                        }
                        (hi - lo) / norm
                    })
                    .collect(),
            };
            if osc.iter().any(|&o| !(o > 1e-14)) {
                continue;
            }
            used += 1;
            let ly: Vec<f64> = osc.iter().map(|o| o.ln()).collect();
            let (slope, _) = ls_slope(&lx, &ly);
            if slope < theta {
                theta = slope;
                wit_theta = (x0, k);
            }
            fits.push((x0, k, slope, osc));
        }
    }
    let id = match mode {
        HolderMode::Ehr => "EHR",
        HolderMode::Phr => "PHR",
    };
    if used == 0 {
        return Err(Error::Degenerate(format!("{id}: every member has vanishing oscillation")));
    }
    let theta = theta.min(1.0);
    // osc(rho) <= c (rho / R_h)^theta at every member and radius
    let mut c = 0.0_f64;
    let mut wc = (0usize, 0usize, 0.0);
    for (x0, k, _, osc) in &fits {
        for (i, o) in osc.iter().enumerate() {
            let v = o / (radii[i] / rh).powf(theta);
            if v > c {
                c = v;
                wc = (*x0, *k, radii[i]);
            }
        }
    }
    let mut rep = ConditionReport::new(
        id,
        Verdict::from_bool(theta > 0.0 && theta.is_finite()),
        format!("{} radii R_h 2^-k, R_h = {rh}", radii.len()),
    )
    .constant("theta", theta)
    .constant("c", c)
    .constant("R_h", rh)
    .constant("K", radii.len() as f64)
    .witness(Witness::new("theta", Relation::Ge, theta).at("x0", wit_theta.0 as f64).at("member", wit_theta.1 as f64))
    .witness(Witness::new("c", Relation::Le, c).at("x0", wc.0 as f64).at("member", wc.1 as f64).at("rho", wc.2))
    .note(format!("{used} members fitted"));
    for r in &radii {
        rep.grid.push_str(&format!(" {r}"));
    }
    Ok(rep)
}

/// Equivalence groups of the main theorem, as condition ids.
pub const GROUPS: [(&str, &[&str]); 7] = [
    ("PHI", &["PHI"]),
    ("PHI+", &["PHI+"]),
    ("UHK+NDL+UJS", &["UHK", "NDL", "UJS"]),
    ("NDL+UJS", &["NDL", "UJS"]),
    ("PHR+E_phi+UJS", &["PHR", "E_phi", "UJS"]),
    ("EHR+E_phi+UJS", &["EHR", "E_phi", "UJS"]),
    ("PI+J_le+CSJ+UJS", &["PI", "J_le", "CSJ", "UJS"]),
];

/// Rows reported for information only.
pub const EXTRA_ROWS: [(&str, &[&str]); 1] = [("EHR+E_phi", &["EHR", "E_phi"])];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub members: Vec<String>,
    pub verdict: Verdict,
    pub failing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryRow {
    /// `UHK` and `LHK` together.
    pub hk: Verdict,
    pub hk_failing: Vec<String>,
    pub phi: Verdict,
    pub j_ge: Verdict,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceMatrix {
    pub groups: Vec<GroupRow>,
    pub extra: Vec<GroupRow>,
    pub corollary: Option<CorollaryRow>,
    pub consistent: bool,
    pub disagreements: Vec<String>,
}

fn row(reports: &[ConditionReport], group: &str, members: &[&str]) -> Option<GroupRow> {
    let mut verdict = Verdict::Pass;
    let mut failing = Vec::new();
    for &m in members {
        let r = reports.iter().find(|r| r.condition == m)?;
        if !r.verdict.is_pass() {
            failing.push(m.to_string());
        }
        verdict = verdict.and(r.verdict);
    }
    Some(GroupRow {
        group: group.to_string(),
        members: members.iter().map(|s| s.to_string()).collect(),
        verdict,
        failing,
    })
}

/// Groups whose member reports are all present, and the corollary row.
pub fn assemble_matrix(reports: &[ConditionReport]) -> EquivalenceMatrix {
    let groups: Vec<GroupRow> = GROUPS.iter().filter_map(|(g, m)| row(reports, g, m)).collect();
    let extra = EXTRA_ROWS.iter().filter_map(|(g, m)| row(reports, g, m)).collect();
    let find = |id: &str| reports.iter().find(|r| r.condition == id).map(|r| r.verdict);
    let corollary = match (find("UHK"), find("LHK"), find("PHI"), find("J_ge")) {
        (Some(u), Some(l), Some(p), Some(j)) => {
            let hk = u.and(l);
            let hk_failing =
                [("UHK", u), ("LHK", l)].iter().filter(|e| !e.1.is_pass()).map(|e| e.0.to_string()).collect();
            Some(CorollaryRow { hk, hk_failing, phi: p, j_ge: j, consistent: hk == p.and(j) })
        }
        _ => None,
    };
    let mut disagreements = Vec::new();
    if let Some(first) = groups.first() {
        for g in &groups[1..] {
            if g.verdict != first.verdict {
                disagreements.push(format!(
                    "{} is {} but {} is {} (failing: {})",
                    g.group,
                    g.verdict.as_str(),
                    first.group,
                    first.verdict.as_str(),
                    if g.failing.is_empty() { first.failing.join(",") } else { g.failing.join(",") }
                ));
            }
        }
    }
    if let Some(c) = &corollary {
        if !c.consistent {
            disagreements.push(format!("HK is {} but PHI and J_ge give {}", c.hk.as_str(), c.phi.and(c.j_ge).as_str()));
        }
    }
    EquivalenceMatrix { consistent: disagreements.is_empty(), groups, extra, corollary, disagreements }
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub ndl: NdlParams,
    pub ephi: EphiParams,
    pub pi: PiParams,
    pub csj: CsjParams,
    pub phi: PhiParams,
    pub holder: HolderParams,
    pub ujs_budget: usize,
    pub seed: u64,
    pub heat: HeatOptions,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            ndl: NdlParams::default(),
            ephi: EphiParams::default(),
            pi: PiParams::default(),
            csj: CsjParams::default(),
            phi: PhiParams::default(),
            holder: HolderParams::default(),
            ujs_budget: 64,
            seed: 0,
            heat: HeatOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub reports: Vec<ConditionReport>,
    pub matrix: EquivalenceMatrix,
    pub phi_per_scale: Vec<(f64, f64)>,
}

/// Every condition that enters the equivalence groups and the corollary, in a fixed order.
pub fn equivalence_suite(
    space: &MetricMeasureSpace,
    phi: &ScaleFunction,
    kernel: &JumpKernel,
    cfg: &SuiteConfig,
) -> Result<SuiteResult> {
    let mut reports = Vec::new();
    let phi_rep = check_phi(space, phi, kernel, &cfg.phi, false)?;
    let phi_per_scale = phi_rep.per_scale.clone();
    let plus = if plus_shape(&cfg.phi.constants) == cfg.phi.constants {
        let mut r = phi_rep.report.clone();
        r.condition = "PHI+".to_string();
        r
    } else {
        check_phi(space, phi, kernel, &cfg.phi, true)?.report
    };
    reports.push(phi_rep.report);
    reports.push(plus);
    let global = HeatSolver::new(space, kernel, Domain::Global, &cfg.heat)?;
    let tensor = global.tensor(&default_times(space, phi))?;
    let sweep = hk_sweep(space, phi, &tensor, false);
    reports.push(sweep.report(space, HkMode::Upper));
    reports.push(sweep.report(space, HkMode::Lower));
    reports.push(check_ndl(space, phi, kernel, &cfg.ndl)?);
    reports.push(check_ujs(space, kernel, cfg.ujs_budget.max(1), cfg.seed).to_report(space));
    reports.push(fit_holder(space, phi, kernel, HolderMode::Phr, &cfg.holder)?);
    reports.push(fit_holder(space, phi, kernel, HolderMode::Ehr, &cfg.holder)?);
    reports.push(check_ephi(space, phi, kernel, &cfg.ephi)?);
    reports.push(check_pi(space, phi, kernel, &cfg.pi));
    let [j_le, j_ge] = check_j_bounds(space, phi, kernel).to_reports();
    reports.push(j_le);
    reports.push(j_ge);
    reports.push(check_csj(space, phi, kernel, &cfg.csj, Some(&global)));
    let matrix = assemble_matrix(&reports);
    Ok(SuiteResult { reports, matrix, phi_per_scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{make_kernel, KernelSpec};
    use crate::space::Metric;
    use proptest::prelude::*;
    use rand::Rng;

    fn stable(n: usize) -> (MetricMeasureSpace, ScaleFunction, JumpKernel) {
        let s = MetricMeasureSpace::torus(1, n, Metric::L2).unwrap();
        let phi = ScaleFunction::power(1.0);
        let k = make_kernel(&s, &phi, &KernelSpec::StableLike).unwrap();
        (s, phi, k)
    }

    #[test]
    fn cylinder_constants() {
        assert!(Cylinder::new(0.0, 0, 2.0, DEFAULT_CYLINDER).is_ok());
        assert!(Cylinder::new(0.0, 0, 2.0, [1.0, 1.0, 3.0, 4.0, 0.5]).is_err());
        assert!(Cylinder::new(0.0, 0, 2.0, [1.0, 2.0, 3.0, 4.0, 1.0]).is_err());
        let c = Cylinder::new(1.0, 0, 2.0, DEFAULT_CYLINDER).unwrap();
        let phi = ScaleFunction::power(1.0);
        assert_eq!(c.minus_times(&phi).first(), Some(&3.0));
        assert_eq!(c.plus_times(&phi).last(), Some(&9.0));
        assert!(c.minus_times(&phi).last() < c.plus_times(&phi).first());
        assert_eq!(plus_shape(&[0.5, 7.0, 8.0, 9.0, 0.25]), [0.5, 1.0, 1.5, 2.0, 0.25]);
    }

    #[test]
    fn harmonic_constants_and_signs() {
        let (s, _, k) = stable(32);
        let d = s.ball(0, 4.0);
        let u = solve_harmonic(&s, &k, &d, &vec![2.5; 32]).unwrap();
        assert!(u.iter().all(|v| (v - 2.5).abs() < 1e-12));
        let mut g = vec![0.0; 32];
        g[10] = 1.0;
        let u = solve_harmonic(&s, &k, &d, &g).unwrap();
        assert!(u.iter().all(|&v| (-1e-15..=1.0 + 1e-15).contains(&v)));
        assert!(solve_harmonic(&s, &k, &(0..32).collect::<Vec<_>>(), &g).is_err());
    }

    #[test]
    fn caloric_constant_and_exact_agree() {
        let (s, _, k) = stable(32);
        let d = s.ball(0, 3.0);
        let one = |_t: f64| vec![1.0; 32];
        let f =
            solve_caloric(&s, &k, &d, &CaloricData { initial: vec![1.0; 32], exterior: &one }, 0.0, 2.0, 40).unwrap();
        assert!(f.values.iter().flatten().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(f.implicit_residual(&s, &k) < 1e-10);

        let mut g = vec![0.0; 32];
        g[12] = 1.0;
        g[20] = 0.5;
        let ext = |_t: f64| g.clone();
        let exact = caloric_exact(&s, &k, 0, 3.0, &vec![0.0; 32], &g, &[2.0]).unwrap();
        let run = |steps| {
            solve_caloric(&s, &k, &d, &CaloricData { initial: vec![0.0; 32], exterior: &ext }, 0.0, 2.0, steps).unwrap()
        };
        let (a, b) = (run(400), run(800));
        // first order in dt: Richardson combination 2 b - a
        for &x in &d {
            let rich = 2.0 * b.values[800][x] - a.values[400][x];
            assert!((rich - exact.values[0][x]).abs() < 1e-6, "{rich} {}", exact.values[0][x]);
        }
    }

    #[test]
    fn caloric_point_mass_is_dirichlet_column() {
        let (s, _, k) = stable(32);
        let d = s.ball(0, 3.0);
        let y0 = 1;
        let mut init = vec![0.0; 32];
        init[y0] = 1.0;
        let zero = |_t: f64| vec![0.0; 32];
        let h = HeatSolver::new(&s, &k, Domain::Ball { center: 0, radius: 3.0 }, &HeatOptions::default()).unwrap();
        let col = h.column(1.0, y0);
        let run = |steps| {
            solve_caloric(&s, &k, &d, &CaloricData { initial: init.clone(), exterior: &zero }, 0.0, 1.0, steps).unwrap()
        };
        let (a, b) = (run(500), run(1000));
        for &x in &d {
            let rich = 2.0 * b.values[1000][x] - a.values[500][x];
            assert!((rich - col[x] * s.mu(y0)).abs() < 1e-6);
        }
    }

    // Oracle: dense expm on Z_64 over indicator members, heat columns and survival;
    // survival attains the maximum at every scale.
    const PHI_Z64: [f64; 4] = [7.156551469947058, 17.234407270249715, 33.31050658245112, 44.1279502162042];

    #[test]
    fn phi_stable_matches_oracle() {
        let (s, phi, k) = stable(64);
        let p = PhiParams { random: 0, ..PhiParams::default() };
        let r = check_phi(&s, &phi, &k, &p, false).unwrap();
        for (e, want) in r.per_scale.iter().zip(PHI_Z64) {
            assert!((e.1 - want).abs() < 1e-8 * want, "{} {want}", e.1);
        }
        assert_eq!(r.report.verdict, Verdict::Pass);
        assert!(r.report.revalidate());
        let full = check_phi(&s, &phi, &k, &PhiParams::default(), false).unwrap();
        assert!(full.per_scale.iter().zip(&r.per_scale).all(|(a, b)| a.1 >= b.1 && a.1 >= 1.0));
    }

    // Oracle: indicator-only minimum slope.
    #[test]
    fn ehr_stable_matches_oracle() {
        for (n, want) in [(32, 0.8170949684948441), (64, 0.8734719987912182)] {
            let (s, phi, k) = stable(n);
            let p = HolderParams { random: 0, ..HolderParams::default() };
            let r = fit_holder(&s, &phi, &k, HolderMode::Ehr, &p).unwrap();
            assert!((r.get("theta").unwrap() - want).abs() < 1e-9);
            assert!(r.revalidate());
        }
    }

    #[test]
    fn phr_positive_and_scales_checked() {
        let (s, phi, k) = stable(32);
        let r = fit_holder(&s, &phi, &k, HolderMode::Phr, &HolderParams::default()).unwrap();
        let th = r.get("theta").unwrap();
        assert!(th > 0.0 && th <= 1.0);
        let narrow = s.clone().with_window(1.0, 1.0).unwrap();
        let r = fit_holder(&narrow, &phi, &k, HolderMode::Ehr, &HolderParams::default()).unwrap();
        assert_eq!(r.get("K"), Some(3.0));
    }

    #[test]
    fn ehi_stable_passes() {
        let (s, phi, k) = stable(64);
        let r = check_ehi(&s, &phi, &k, &EhiParams::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert!(r.get("c").unwrap() >= 1.0);
        assert!(r.revalidate());
    }

    fn rep(id: &str, v: Verdict) -> ConditionReport {
        ConditionReport::new(id, v, String::new())
    }

    #[test]
    fn matrix_assembly() {
        let ids = ["PHI", "PHI+", "UHK", "LHK", "NDL", "UJS", "PHR", "EHR", "E_phi", "PI", "J_le", "J_ge", "CSJ"];
        let all: Vec<_> = ids.iter().map(|i| rep(i, Verdict::Pass)).collect();
        let m = assemble_matrix(&all);
        assert_eq!(m.groups.len(), 7);
        assert!(m.consistent);
        // cone signature: J_ge and LHK fail, everything else passes
        let cone: Vec<_> = ids.iter().map(|&i| rep(i, Verdict::from_bool(i != "J_ge" && i != "LHK"))).collect();
        let m = assemble_matrix(&cone);
        assert!(m.consistent);
        assert_eq!(m.corollary.as_ref().unwrap().hk, Verdict::Fail);
        assert_eq!(m.corollary.as_ref().unwrap().hk_failing, vec!["LHK".to_string()]);
        // axis signature: UJS fails, EHR and E_phi pass
        let axis: Vec<_> = ids.iter().map(|&i| rep(i, Verdict::from_bool(i != "UJS"))).collect();
        let m = assemble_matrix(&axis);
        assert!(!m.consistent);
        assert!(m.groups.iter().filter(|g| g.members.iter().any(|x| x == "UJS")).all(|g| g.verdict == Verdict::Fail));
        assert_eq!(m.extra[0].verdict, Verdict::Pass);
        let partial = assemble_matrix(&[rep("PHI", Verdict::Pass)]);
        assert_eq!(partial.groups.len(), 1);
        assert!(partial.corollary.is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn harmonic_linear_and_bounded(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
            let (s, _, k) = stable(24);
            let d = s.ball(3, 3.0);
            let mut rng = sample::stream(seed, 0);
            let g1: Vec<f64> = (0..24).map(|_| rng.random::<f64>()).collect();
            let g2: Vec<f64> = (0..24).map(|_| rng.random::<f64>() - 0.5).collect();
            let u1 = solve_harmonic(&s, &k, &d, &g1).unwrap();
            let u2 = solve_harmonic(&s, &k, &d, &g2).unwrap();
            let g: Vec<f64> = g1.iter().zip(&g2).map(|(x, y)| a * x + b * y).collect();
            let u = solve_harmonic(&s, &k, &d, &g).unwrap();
            let (lo, hi) = g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            for x in 0..24 {
                prop_assert!((u[x] - a * u1[x] - b * u2[x]).abs() <= 1e-10);
                prop_assert!(u[x] >= lo - 1e-12 && u[x] <= hi + 1e-12);
            }
        }
    }
}
