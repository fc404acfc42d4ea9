//! Heat kernels on the whole space or killed outside a ball, exit times,
//! and the HK, NDL, E_phi and conservativeness checkers.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::form::symmetrized_restriction;
use crate::kernel::JumpKernel;
use crate::linalg;
use crate::report::{top_drift, ConditionReport, Relation, Verdict, Witness};
use crate::scale::ScaleFunction;
use crate::space::{grid_label, MetricMeasureSpace, Torus, DIST_EPS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Global,
    Ball { center: usize, radius: f64 },
}

#[derive(Debug, Clone)]
pub struct HeatOptions {
    /// Largest domain accepted at all.
    pub max_points: usize,
    /// Largest domain handled by dense eigendecomposition.
    pub dense_limit: usize,
    /// Use scaled time stepping even where a faster backend applies.
    pub force_stepped: bool,
    /// Allow the Fourier backend for translation invariant kernels.
    pub allow_translation: bool,
}

impl Default for HeatOptions {
    fn default() -> Self {
        Self { max_points: 16384, dense_limit: 4096, force_stepped: false, allow_translation: true }
    }
}

#[derive(Debug, Clone)]
enum Backend {
    /// `A = U diag(a) U^T` with `A` the symmetrized killed `-Q`.
    Spectral {
        a: Vec<f64>,
        u: DMatrix<f64>,
    },
    /// Characters of the torus: `lam[k]` is the eigenvalue of `Q` at frequency `k`.
    Translation {
        torus: Torus,
        lam: Vec<f64>,
        coords: Vec<[u32; 3]>,
        cos: Vec<f64>,
    },
    Stepped {
        a: DMatrix<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct HeatSolver {
    domain: Domain,
    index: Vec<usize>,
    sqrt_mu: Vec<f64>,
    backend: Backend,
}

impl HeatSolver {
    pub fn new(space: &MetricMeasureSpace, kernel: &JumpKernel, domain: Domain, opts: &HeatOptions) -> Result<Self> {
        let index = match domain {
            Domain::Global => (0..space.len()).collect(),
            Domain::Ball { center, radius } => space.ball(center, radius),
        };
        Self::on_points(space, kernel, domain, index, opts)
    }

    /// Solver killed outside an arbitrary point set.
    pub fn on_points(
        space: &MetricMeasureSpace,
        kernel: &JumpKernel,
        domain: Domain,
        index: Vec<usize>,
        opts: &HeatOptions,
    ) -> Result<Self> {
        let m = index.len();
        if m > opts.max_points {
            return Err(Error::SizeExceeded { n: m, cap: opts.max_points });
        }
        let sqrt_mu: Vec<f64> = index.iter().map(|&x| space.mu(x).sqrt()).collect();
        let global = m == space.len();
        let backend = match space.torus_info() {
            Some(torus)
                if global
                    && opts.allow_translation
                    && !opts.force_stepped
                    && kernel.is_translation_invariant()
                    && space.is_homogeneous() =>
            {
                let n = space.len();
                let mu = space.mu(0);
                let coords: Vec<[u32; 3]> = (0..n)
                    .map(|x| {
                        let c = torus.coords(x);
                        let mut a = [0u32; 3];
                        for (k, v) in c.iter().enumerate() {
                            a[k] = *v as u32;
                        }
                        a
                    })
                    .collect();
                let side = torus.side;
                let cos: Vec<f64> = (0..side).map(|k| (2.0 * PI * k as f64 / side as f64).cos()).collect();
                let row = kernel.row(0);
                let lam = (0..n)
                    .map(|k| {
                        let mut s = 0.0;
                        for h in 1..n {
                            if row[h] != 0.0 {
                                let phase = phase(&coords[k], &coords[h], side);
                                s += row[h] * mu * (cos[phase] - 1.0);
                            }
                        }
                        s
                    })
                    .collect();
                Backend::Translation { torus, lam, coords, cos }
            }
            _ if m <= opts.dense_limit && !opts.force_stepped => {
                let eig = linalg::sym_eigen(symmetrized_restriction(space, kernel, &index));
                Backend::Spectral { a: eig.values, u: eig.vectors }
            }
            _ => Backend::Stepped { a: symmetrized_restriction(space, kernel, &index) },
        };
        Ok(Self { domain, index, sqrt_mu, backend })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Global point of every local index.
    pub fn index(&self) -> &[usize] {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn is_translation(&self) -> bool {
        matches!(self.backend, Backend::Translation { .. })
    }

    /// Spectral data `(a, U)` with `-Q_D = M^{-1/2} U diag(a) U^T M^{1/2}`.
    pub fn spectral(&self) -> Option<(&[f64], &DMatrix<f64>)> {
        match &self.backend {
            Backend::Spectral { a, u } => Some((a, u)),
            _ => None,
        }
    }

    pub fn sqrt_mu(&self) -> &[f64] {
        &self.sqrt_mu
    }

    /// `p(t, 0, h)` for every difference `h` (translation backend only).
    pub fn translation_row(&self, t: f64) -> Option<Vec<f64>> {
        let Backend::Translation { torus, lam, coords, cos } = &self.backend else {
            return None;
        };
        let n = lam.len();
        let mu = self.sqrt_mu[0] * self.sqrt_mu[0];
        let weights: Vec<f64> = lam.iter().map(|&l| (t * l).exp()).collect();
        let row = (0..n)
            .map(|h| {
                let mut s = 0.0;
                for k in 0..n {
                    s += weights[k] * cos[phase(&coords[k], &coords[h], torus.side)];
                }
                s / (n as f64 * mu)
            })
            .collect();
        Some(row)
    }

    /// Symmetrized propagator `exp(-t A)` on the domain.
    fn sym_propagator(&self, t: f64) -> Result<DMatrix<f64>> {
        match &self.backend {
            Backend::Spectral { a, u } => {
                let mut scaled = u.clone();
                for (k, &ak) in a.iter().enumerate() {
                    let e = (-t * ak).exp();
                    scaled.column_mut(k).scale_mut(e);
                }
                Ok(&scaled * u.transpose())
            }
            Backend::Stepped { a } => expm_stepped(a, t),
            Backend::Translation { .. } => {
                let row = self.translation_row(t).unwrap();
                let n = self.len();
                let mu = self.sqrt_mu[0] * self.sqrt_mu[0];
                let Backend::Translation { torus, .. } = &self.backend else { unreachable!() };
                Ok(DMatrix::from_fn(n, n, |i, j| row[torus.difference(i, j)] * mu))
            }
        }
    }

    /// Dense `p(t, ., .)` on local indices.
    pub fn kernel_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        let mut p = self.sym_propagator(t)?;
        let m = self.len();
        for i in 0..m {
            for j in 0..m {
                p[(i, j)] /= self.sqrt_mu[i] * self.sqrt_mu[j];
            }
        }
        Ok(p)
    }

    /// `x -> p(t, x, y)` over the whole space, zero outside the domain.
    pub fn column(&self, t: f64, y: usize) -> Vec<f64> {
        let n_space = self.index.iter().copied().max().map_or(0, |m| m + 1);
        let mut out = vec![0.0; n_space.max(self.len())];
        if let (Backend::Translation { torus, .. }, Some(row)) = (&self.backend, self.translation_row(t)) {
            for x in 0..self.len() {
                out[x] = row[torus.difference(y, x)];
            }
            return out;
        }
        let Some(j) = self.index.iter().position(|&v| v == y) else {
            return out;
        };
        let p = self.kernel_matrix(t).expect("propagator");
        for (i, &x) in self.index.iter().enumerate() {
            out[x] = p[(i, j)];
        }
        out
    }

    pub fn tensor(&self, times: &[f64]) -> Result<HeatTensor> {
        if times.iter().any(|&t| !(t >= 0.0)) {
            return Err(Error::InvalidSpec("heat times must be nonnegative".into()));
        }
        let data = match &self.backend {
            Backend::Translation { torus, .. } => TensorData::Translation {
                torus: *torus,
                rows: times.iter().map(|&t| self.translation_row(t).unwrap()).collect(),
            },
            _ => {
                let mut vals = Vec::with_capacity(times.len());
                for &t in times {
                    vals.push(self.kernel_matrix(t)?.transpose().as_slice().to_vec());
                }
                TensorData::Dense(vals)
            }
        };
        Ok(HeatTensor {
            domain: self.domain,
            index: self.index.clone(),
            mu: self.sqrt_mu.iter().map(|s| s * s).collect(),
            times: times.to_vec(),
            data,
        })
    }
}

#[inline]
fn phase(k: &[u32; 3], h: &[u32; 3], side: usize) -> usize {
    ((k[0] * h[0] + k[1] * h[1] + k[2] * h[2]) as usize) % side
}

/// `exp(-t A)` by Taylor scaling and squaring; the number of squarings is
/// increased until two successive results agree to 1e-8 relative.
fn expm_stepped(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    let norm = (0..m).map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max) * t;
    let mut s = 0i32;
    while norm / 2f64.powi(s) > 0.5 {
        s += 1;
    }
    let run = |s: i32| -> DMatrix<f64> {
        let b = a * (-t / 2f64.powi(s));
        let mut term = DMatrix::identity(m, m);
        let mut sum = DMatrix::identity(m, m);
        for k in 1..=18 {
            term = &term * &b / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    };
    let mut prev = run(s);
    for _ in 0..40 {
        s += 1;
        let next = run(s);
        let diff = (&next - &prev).amax();
        let scale = next.amax().max(1e-300);
        if diff <= 1e-8 * scale {
            return Ok((&next + next.transpose()) * 0.5);
        }
        prev = next;
    }
    Err(Error::NonconvergentStepping)
}

#[derive(Debug, Clone)]
pub enum TensorData {
    /// Per time, the row-major `m x m` matrix on local indices.
    Dense(Vec<Vec<f64>>),
    /// Per time, `p(t, 0, h)` indexed by the difference point `h`.
    Translation { torus: Torus, rows: Vec<Vec<f64>> },
}

/// `p(t, x, y)` on a time grid; values are densities against `mu`.
#[derive(Debug, Clone)]
pub struct HeatTensor {
    pub domain: Domain,
    pub index: Vec<usize>,
    pub mu: Vec<f64>,
    pub times: Vec<f64>,
    pub data: TensorData,
}

impl HeatTensor {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Local indices `i`, `j`.
    #[inline]
    pub fn get(&self, ti: usize, i: usize, j: usize) -> f64 {
        match &self.data {
            TensorData::Dense(v) => v[ti][i * self.index.len() + j],
            TensorData::Translation { torus, rows } => rows[ti][torus.difference(i, j)],
        }
    }

    pub fn is_translation(&self) -> bool {
        matches!(self.data, TensorData::Translation { .. })
    }

    /// Rows to sweep in the checkers: a single row when translations act transitively.
    fn sweep_rows(&self) -> Vec<usize> {
        if self.is_translation() {
            vec![0]
        } else {
            (0..self.len()).collect()
        }
    }

    /// `sum_y p(t,x,y) mu(y)` for local `x`.
    pub fn mass(&self, ti: usize, i: usize) -> f64 {
        (0..self.len()).map(|j| self.get(ti, i, j) * self.mu[j]).sum()
    }
}

/// `min(1/V(x, phi^-1(t)), t / (V(x,d) phi(d)))`; the diagonal keeps the first branch.
pub fn hk_profile(space: &MetricMeasureSpace, phi: &ScaleFunction, t: f64, x: usize, y: usize, vol_at: usize) -> f64 {
    let near = 1.0 / space.volume(vol_at, phi.invert(t));
    if x == y {
        return near;
    }
    let d = space.d(x, y);
    near.min(t / (space.volume(vol_at, d) * phi.eval(d)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HkMode {
    Upper,
    Lower,
    DiagUpper,
}

#[derive(Debug, Clone)]
pub struct HkSweep {
    /// `(t, min ratio, max ratio, max diagonal ratio)` per admissible time.
    pub per_time: Vec<(f64, f64, f64, f64)>,
    /// `(t, x, y, ratio)` at the extremes: lower, upper, diagonal.
    pub witnesses: [(f64, usize, usize, f64); 3],
}

/// Ratios `p / profile` over the tensor times inside `[phi(r_min), phi(r_max)]`.
/// With `at_y` the volumes are taken around `y` instead of `x`.
pub fn hk_sweep(space: &MetricMeasureSpace, phi: &ScaleFunction, tensor: &HeatTensor, at_y: bool) -> HkSweep {
    let (r_min, r_max) = space.window();
    let (t_lo, t_hi) = (phi.eval(r_min) * (1.0 - 1e-9), phi.eval(r_max) * (1.0 + 1e-9));
    let mut per_time = Vec::new();
    let mut wl = (0.0, 0, 0, f64::INFINITY);
    let mut wu = (0.0, 0, 0, 0.0);
    let mut wd = (0.0, 0, 0, 0.0);
    for (ti, &t) in tensor.times.iter().enumerate() {
        if t < t_lo || t > t_hi {
            continue;
        }
        let (mut lo, mut hi, mut dg) = (f64::INFINITY, 0.0_f64, 0.0_f64);
        for i in tensor.sweep_rows() {
            let x = tensor.index[i];
            for j in 0..tensor.len() {
                let y = tensor.index[j];
                let q = tensor.get(ti, i, j) / hk_profile(space, phi, t, x, y, if at_y { y } else { x });
                if q < lo {
                    lo = q;
                }
                if q < wl.3 {
                    wl = (t, x, y, q);
                }
                if q > hi {
                    hi = q;
                }
                if q > wu.3 {
                    wu = (t, x, y, q);
                }
                if i == j {
                    dg = dg.max(q);
                    if q > wd.3 {
                        wd = (t, x, y, q);
                    }
                }
            }
        }
        per_time.push((t, lo, hi, dg));
    }
    per_time.sort_by(|a, b| a.0.total_cmp(&b.0));
    HkSweep { per_time, witnesses: [wl, wu, wd] }
}

impl HkSweep {
    /// Report for one mode. Drift is measured toward small times: the lower
    /// constant may not shrink, and the upper constants may not grow, by more
    /// than a factor 2 between the largest and the smallest admissible time.
    pub fn report(&self, space: &MetricMeasureSpace, mode: HkMode) -> ConditionReport {
        let (id, name) = match mode {
            HkMode::Upper => ("UHK", "c2"),
            HkMode::Lower => ("LHK", "c1"),
            HkMode::DiagUpper => ("UHKD", "c"),
        };
        let grid = format!("{} times in [phi(r_min), phi(r_max)], {}", self.per_time.len(), grid_label(space));
        if self.per_time.is_empty() {
            return ConditionReport::new(id, Verdict::Fail, grid).note("no tensor time inside the window".into());
        }
        let pick = |e: &(f64, f64, f64, f64)| match mode {
            HkMode::Upper => e.2,
            HkMode::Lower => e.1,
            HkMode::DiagUpper => e.3,
        };
        let first = pick(&self.per_time[0]);
        let last = pick(&self.per_time[self.per_time.len() - 1]);
        let (c, ok, drift, w) = match mode {
            HkMode::Lower => {
                let c = self.per_time.iter().map(pick).fold(f64::INFINITY, f64::min);
                (
                    c,
                    c > 0.0 && last <= 2.0 * first,
                    if first > 0.0 { last / first } else { f64::INFINITY },
                    self.witnesses[0],
                )
            }
            _ => {
                let c = self.per_time.iter().map(pick).fold(0.0, f64::max);
                let w = if mode == HkMode::Upper { self.witnesses[1] } else { self.witnesses[2] };
                (c, c.is_finite() && first <= 2.0 * last, first / last, w)
            }
        };
        let rel = if mode == HkMode::Lower { Relation::Ge } else { Relation::Le };
        let mut rep = ConditionReport::new(id, Verdict::from_bool(ok), grid)
            .constant(name, c)
            .constant("drift", drift)
            .witness(Witness::new(name, rel, w.3).at("t", w.0).at("x", w.1 as f64).at("y", w.2 as f64))
            .tolerance("max_drift", 2.0);
        for e in &self.per_time {
            rep = rep.constant(&format!("{name}(t={})", e.0), pick(e));
        }
        rep
    }
}

pub fn check_hk(space: &MetricMeasureSpace, phi: &ScaleFunction, tensor: &HeatTensor, mode: HkMode) -> ConditionReport {
    hk_sweep(space, phi, tensor, false).report(space, mode)
}

/// Default tensor grid `phi(r_max) 2^-k`, `k = 0..=5`, kept inside the window.
pub fn default_times(space: &MetricMeasureSpace, phi: &ScaleFunction) -> Vec<f64> {
    let (r_min, r_max) = space.window();
    let lo = phi.eval(r_min) * (1.0 - 1e-12);
    let mut ts: Vec<f64> = (0..6).map(|k| phi.eval(r_max) * 0.5f64.powi(k)).filter(|&t| t >= lo).collect();
    ts.reverse();
    ts
}

/// `(max deviation of the mass from 1, verdict at tolerance tol)`.
pub fn check_conservative(tensor: &HeatTensor, tol: f64) -> (f64, Verdict) {
    let mut dev = 0.0_f64;
    for ti in 0..tensor.times.len() {
        for i in tensor.sweep_rows() {
            dev = dev.max((tensor.mass(ti, i) - 1.0).abs());
        }
    }
    (dev, Verdict::from_bool(dev <= tol))
}

#[derive(Debug, Clone)]
pub struct NdlParams {
    pub epsilon: f64,
    pub centers: usize,
    pub seed: u64,
    pub opts: HeatOptions,
}

impl Default for NdlParams {
    fn default() -> Self {
        Self { epsilon: 0.5, centers: 4, seed: 0, opts: HeatOptions::default() }
    }
}

/// `(per-radius constants, witness (x0, r, t, x, y, value), skipped-inner warnings)`.
type NdlSweep = (Vec<(f64, f64)>, (usize, f64, f64, usize, usize, f64), usize);

fn ndl_sweep(
    space: &MetricMeasureSpace,
    phi: &ScaleFunction,
    kernel: &JumpKernel,
    eps: f64,
    p: &NdlParams,
) -> Result<NdlSweep> {
    let mut per_r = Vec::new();
    let mut wit = (0, 0.0, 0.0, 0, 0, f64::INFINITY);
    let mut thin = 0;
    for r in space.radius_grid() {
        let mut cr = f64::INFINITY;
        for x0 in space.centers(p.centers, p.seed, kernel.is_translation_invariant()) {
            let solver = HeatSolver::new(space, kernel, Domain::Ball { center: x0, radius: r }, &p.opts)?;
            for k in 0..4 {
                let t = phi.eval(eps * r) * 0.5f64.powi(k);
                let inner_r = eps * phi.invert(t);
                if inner_r < space.min_spacing() {
                    thin += 1;
                }
                let pm = solver.kernel_matrix(t)?;
                let inner: Vec<usize> =
                    (0..solver.len()).filter(|&i| space.d(x0, solver.index()[i]) <= inner_r + DIST_EPS).collect();
                let v = space.volume(x0, phi.invert(t));
                for &i in &inner {
                    for &j in &inner {
                        let q = pm[(i, j)] * v;
                        if q < cr {
                            cr = q;
                        }
                        if q < wit.5 {
                            wit = (x0, r, t, solver.index()[i], solver.index()[j], q);
                        }
                    }
                }
            }
        }
        per_r.push((r, cr));
    }
    Ok((per_r, wit, thin))
}

/// NDL at `epsilon`, with the stability comparison against `epsilon / 2`.
pub fn check_ndl(
    space: &MetricMeasureSpace,
    phi: &ScaleFunction,
    kernel: &JumpKernel,
    p: &NdlParams,
) -> Result<ConditionReport> {
    let (per_r, wit, thin) = ndl_sweep(space, phi, kernel, p.epsilon, p)?;
    let (half, _, _) = ndl_sweep(space, phi, kernel, p.epsilon / 2.0, p)?;
    let c1 = per_r.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let c1_half = half.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let ok = c1 > 0.0 && c1.is_finite() && c1_half >= 0.5 * c1 && top_drift(&per_r, false) <= 2.0;
    let mut rep = ConditionReport::new("NDL", Verdict::from_bool(ok), grid_label(space))
        .constant("c1", c1)
        .constant("c1_half_eps", c1_half)
        .constant("epsilon", p.epsilon)
        .witness(
            Witness::new("c1", Relation::Ge, wit.5)
                .at("x0", wit.0 as f64)
                .at("r", wit.1)
                .at("t", wit.2)
                .at("x", wit.3 as f64)
                .at("y", wit.4 as f64),
        );
    if thin > 0 {
        rep =
            rep.note(format!("{thin} samples with inner radius below the lattice spacing (inner ball is the center)"));
    }
    for &(r, v) in &per_r {
        rep = rep.constant(&format!("c1(r={r})"), v);
    }
    Ok(rep)
}

/// `u = E^x tau_B`: solves `-Q_B u = 1` on `B`, zero elsewhere.
pub fn exit_time_green(space: &MetricMeasureSpace, kernel: &JumpKernel, ball: &[usize]) -> Result<Vec<f64>> {
    let m = ball.len();
    if m == space.len() {
        return Err(Error::SingularSystem("domain is the whole space".into()));
    }
    let a = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            kernel.lambda(ball[i])
        } else {
            -kernel.get(ball[i], ball[j]) * space.mu(ball[j])
        }
    });
    let u = linalg::solve_vec(a, &vec![1.0; m])?;
    if u.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::SingularSystem("nonpositive exit time".into()));
    }
    let mut out = vec![0.0; space.len()];
    for (i, &x) in ball.iter().enumerate() {
        out[x] = u[i];
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EphiParams {
    pub centers: usize,
    pub seed: u64,
}

impl Default for EphiParams {
    fn default() -> Self {
        Self { centers: 8, seed: 0 }
    }
}

/// `c = max max(phi(r)/u(x), u(x)/phi(r))` with `u` the mean exit time of `B(x,r)`.
pub fn check_ephi(
    space: &MetricMeasureSpace,
    phi: &ScaleFunction,
    kernel: &JumpKernel,
    p: &EphiParams,
) -> Result<ConditionReport> {
    let mut per_r = Vec::new();
    let mut wit = (0, 0.0, 0.0, 0.0_f64);
    for r in space.radius_grid() {
        let mut cr = 0.0_f64;
        for x in space.centers(p.centers, p.seed, kernel.is_translation_invariant()) {
            let u = exit_time_green(space, kernel, &space.ball(x, r))?;
            let q = (phi.eval(r) / u[x]).max(u[x] / phi.eval(r));
            cr = cr.max(q);
            if q > wit.3 {
                wit = (x, r, u[x], q);
            }
        }
        per_r.push((r, cr));
    }
    let c = wit.3;
    let ok = c.is_finite() && top_drift(&per_r, true) <= 2.0;
    let mut rep = ConditionReport::new("E_phi", Verdict::from_bool(ok), grid_label(space))
        .constant("c", c)
        .witness(Witness::new("c", Relation::Le, c).at("x", wit.0 as f64).at("r", wit.1).at("exit_time", wit.2));
    for &(r, v) in &per_r {
        rep = rep.constant(&format!("c(r={r})"), v);
    }
    Ok(rep)
}
