//! The Dirichlet form, its generator and carre du champ, Dirichlet
//! eigenvalues, and the FK, PI and CSJ checkers.
//!
//! `energy` is the full double sum without a factor one half, while the
//! generator has off-diagonal rates `J(x,y) mu(y)`; hence
//! `<-Q f, f>_mu = energy(f, f) / 2`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::heat::HeatSolver;
use crate::kernel::JumpKernel;
use crate::linalg;
use crate::report::{top_drift, ConditionReport, Relation, Verdict, Witness};
use crate::sample;
use crate::scale::ScaleFunction;
use crate::space::{grid_label, MetricMeasureSpace, DIST_EPS};

/// Dense rate matrix `Q(x,y) = J(x,y) mu(y)`, `Q(x,x) = -lambda(x)`.
#[derive(Debug, Clone)]
pub struct Generator {
    n: usize,
    q: Vec<f64>,
}

impl Generator {
    pub fn new(space: &MetricMeasureSpace, kernel: &JumpKernel) -> Self {
        let n = space.len();
        let mut q = vec![0.0; n * n];
        for x in 0..n {
            let mut diag = 0.0;
            for y in 0..n {
                if y != x {
                    let v = kernel.get(x, y) * space.mu(y);
                    q[x * n + y] = v;
                    diag += v;
                }
            }
            q[x * n + x] = -diag;
        }
        Self { n, q }
    }

    #[inline]
    pub fn rate(&self, x: usize, y: usize) -> f64 {
        self.q[x * self.n + y]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.n).map(|x| self.q[x * self.n..(x + 1) * self.n].iter().zip(f).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.q)
    }
}

/// Positive semidefinite symmetrization of `-Q` restricted to `idx` with
/// killing: `S(x,x) = lambda(x)`, `S(x,y) = -J(x,y) sqrt(mu(x) mu(y))`.
pub fn symmetrized_restriction(space: &MetricMeasureSpace, kernel: &JumpKernel, idx: &[usize]) -> DMatrix<f64> {
    let m = idx.len();
    DMatrix::from_fn(m, m, |i, j| {
        let (x, y) = (idx[i], idx[j]);
        if i == j {
            kernel.lambda(x)
        } else {
            -kernel.get(x, y) * (space.mu(x) * space.mu(y)).sqrt()
        }
    })
}

/// `sum_{x != y} (f(x)-f(y)) (g(x)-g(y)) J(x,y) mu(x) mu(y)`.
pub fn energy(space: &MetricMeasureSpace, kernel: &JumpKernel, f: &[f64], g: &[f64]) -> f64 {
    let n = space.len();
    let mut total = 0.0;
    for x in 0..n {
        let row = kernel.row(x);
        let mut s = 0.0;
        for y in 0..n {
            s += (f[x] - f[y]) * (g[x] - g[y]) * row[y] * space.mu(y);
        }
        total += s * space.mu(x);
    }
    total
}

/// Density of `Gamma(f,g)` against `mu`.
pub fn carre_du_champ(space: &MetricMeasureSpace, kernel: &JumpKernel, f: &[f64], g: &[f64]) -> Vec<f64> {
    let n = space.len();
    (0..n)
        .map(|x| {
            let row = kernel.row(x);
            (0..n).map(|y| (f[x] - f[y]) * (g[x] - g[y]) * row[y] * space.mu(y)).sum()
        })
        .collect()
}

/// Bottom of the Dirichlet spectrum of `D` in the energy normalization.
pub fn lambda1(space: &MetricMeasureSpace, kernel: &JumpKernel, d: &[usize]) -> f64 {
    2.0 * linalg::smallest_eigenvalue(symmetrized_restriction(space, kernel, d))
}

#[derive(Debug, Clone)]
pub struct FkParams {
    pub centers: usize,
    pub seed: u64,
    pub densities: Vec<f64>,
}

impl Default for FkParams {
    fn default() -> Self {
        Self { centers: 8, seed: 0, densities: vec![0.125, 0.25, 0.5, 1.0] }
    }
}

/// Faber-Krahn fit `lambda1(D) >= (C / phi(r)) (V(x,r)/mu(D))^nu`.
pub fn check_fk(space: &MetricMeasureSpace, phi: &ScaleFunction, kernel: &JumpKernel, p: &FkParams) -> ConditionReport {
    let mut rng = sample::stream(p.seed, sample::STREAM_FK);
    // (ln V/mu(D), ln lambda1 phi(r), x, r, |D|)
    let mut samples = Vec::new();
    for x in space.centers(p.centers, p.seed, kernel.is_translation_invariant()) {
        for r in space.radius_grid() {
            let ball = space.ball(x, r);
            let v = space.volume(x, r);
            let mut domains: Vec<Vec<usize>> = Vec::new();
            let mut rho = r;
            loop {
                let sub = space.ball(x, rho);
                if domains.last() != Some(&sub) {
                    domains.push(sub);
                }
                if rho < space.min_spacing() {
                    break;
                }
                rho /= 2.0;
            }
            for &density in &p.densities {
                if density >= 1.0 {
                    continue;
                }
                let mut d: Vec<usize> = ball.iter().copied().filter(|_| rng.random::<f64>() < density).collect();
                if d.is_empty() {
                    d.push(x);
                }
                domains.push(d);
            }
            for d in domains {
                let mass: f64 = d.iter().map(|&y| space.mu(y)).sum();
                let l1 = lambda1(space, kernel, &d);
                samples.push(((v / mass).ln(), (l1 * phi.eval(r)).ln(), x, r, d.len()));
            }
        }
    }
    let m = samples.len() as f64;
    let (sx, sy) = samples.iter().fold((0.0, 0.0), |a, s| (a.0 + s.0, a.1 + s.1));
    let sxx: f64 = samples.iter().map(|s| (s.0 - sx / m).powi(2)).sum();
    let sxy: f64 = samples.iter().map(|s| (s.0 - sx / m) * (s.1 - sy / m)).sum();
    let slope = if sxx > 1e-12 { sxy / sxx } else { 1.0 };
    let nu = slope.clamp(1e-3, 2.0);
    let mut c = f64::INFINITY;
    let mut wit = &samples[0];
    let mut per_r: Vec<(f64, f64)> = Vec::new();
    for s in &samples {
        let v = (s.1 - nu * s.0).exp();
        if v < c {
            c = v;
            wit = s;
        }
        match per_r.iter_mut().find(|e| e.0 == s.3) {
            Some(e) => e.1 = e.1.min(v),
            None => per_r.push((s.3, v)),
        }
    }
    let ok = c > 0.0 && c.is_finite() && top_drift(&per_r, false) <= 2.0;
    let mut rep = ConditionReport::new("FK", Verdict::from_bool(ok), grid_label(space))
        .constant("C", c)
        .constant("nu", nu)
        .witness(Witness::new("C", Relation::Ge, c).at("x", wit.2 as f64).at("r", wit.3).at("size", wit.4 as f64))
        .note(format!("{} domains", samples.len()));
    for &(r, v) in &per_r {
        rep = rep.constant(&format!("C(r={r})"), v);
    }
    rep
}

/// `C(B_r)`: the smallest constant in the Poincare inequality on `B(x,r)`
/// with energy restricted to `B(x, kappa r)`; infinite when the restricted
/// energy vanishes on a nonconstant function.
pub fn pi_constant(
    space: &MetricMeasureSpace,
    phi: &ScaleFunction,
    kernel: &JumpKernel,
    x: usize,
    r: f64,
    kappa: f64,
) -> f64 {
    let big = space.ball(x, kappa * r);
    let inner: Vec<bool> = big.iter().map(|&y| space.d(x, y) <= r + DIST_EPS).collect();
    let m = big.len();
    if m == 1 {
        return 0.0;
    }
    let vol: f64 = big.iter().zip(&inner).filter(|p| *p.1).map(|(&y, _)| space.mu(y)).sum();
    let nmat = DMatrix::from_fn(m, m, |i, j| {
        if !(inner[i] && inner[j]) {
            return 0.0;
        }
        let (a, b) = (space.mu(big[i]), space.mu(big[j]));
        let diag = if i == j { a } else { 0.0 };
        diag - a * b / vol
    });
    let mut l = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let w = kernel.get(big[i], big[j]) * space.mu(big[i]) * space.mu(big[j]);
                l[(i, j)] = -2.0 * w;
                l[(i, i)] += 2.0 * w;
            }
        }
    }
    let shift = l.trace() / (m * m) as f64;
    l.add_scalar_mut(shift);
    match linalg::max_generalized_eigenvalue(&nmat, l) {
        Some(v) => v.max(0.0) / phi.eval(r),
        None => f64::INFINITY,
    }
}

/// The Poincare quotient of a single test function on `B(x,r)`.
pub fn pi_ratio(
    space: &MetricMeasureSpace,
    phi: &ScaleFunction,
    kernel: &JumpKernel,
    x: usize,
    r: f64,
    kappa: f64,
    f: &[f64],
) -> f64 {
    let inner = space.ball(x, r);
    let big = space.ball(x, kappa * r);
    let vol: f64 = inner.iter().map(|&y| space.mu(y)).sum();
    let mean = inner.iter().map(|&y| f[y] * space.mu(y)).sum::<f64>() / vol;
    let num: f64 = inner.iter().map(|&y| (f[y] - mean).powi(2) * space.mu(y)).sum();
    let mut den = 0.0;
    for &a in &big {
        for &b in &big {
            den += (f[a] - f[b]).powi(2) * kernel.get(a, b) * space.mu(a) * space.mu(b);
        }
    }
    num / (phi.eval(r) * den)
}

#[derive(Debug, Clone)]
pub struct PiParams {
    pub kappa: f64,
    pub centers: usize,
    pub seed: u64,
}

impl Default for PiParams {
    fn default() -> Self {
        Self { kappa: 2.0, centers: 8, seed: 0 }
    }
}

pub fn check_pi(space: &MetricMeasureSpace, phi: &ScaleFunction, kernel: &JumpKernel, p: &PiParams) -> ConditionReport {
    let mut best = (0.0_f64, 0usize, 0.0);
    let mut per_r: Vec<(f64, f64)> = Vec::new();
    for r in space.radius_grid() {
        let mut cr = 0.0_f64;
        for x in space.centers(p.centers, p.seed, kernel.is_translation_invariant()) {
            let c = pi_constant(space, phi, kernel, x, r, p.kappa);
            cr = cr.max(c);
            if c > best.0 || (c.is_infinite() && !best.0.is_infinite()) {
                best = (c, x, r);
            }
        }
        per_r.push((r, cr));
    }
    let ok = best.0.is_finite() && top_drift(&per_r, true) <= 2.0;
    let mut rep = ConditionReport::new("PI", Verdict::from_bool(ok), grid_label(space))
        .constant("C", best.0)
        .constant("kappa", p.kappa)
        .witness(Witness::new("C", Relation::Le, best.0).at("x", best.1 as f64).at("r", best.2));
    if best.0.is_infinite() {
        rep = rep.note(format!("restricted energy degenerate on B({}, {})", best.1, p.kappa * best.2));
    }
    for &(r, v) in &per_r {
        rep = rep.constant(&format!("C(r={r})"), v);
    }
    rep
}

#[derive(Debug, Clone)]
pub struct CsjParams {
    pub c0: f64,
    pub centers: usize,
    pub seed: u64,
    pub functions: usize,
}

impl Default for CsjParams {
    fn default() -> Self {
        Self { c0: 0.5, centers: 4, seed: 0, functions: 20 }
    }
}

/// Terms of the cutoff Sobolev inequality for the radial cutoff of
/// `B(x,R) subset B(x,R+r)`: `(lhs, annulus energy, mass / phi(r))`.
#[allow(clippy::too_many_arguments)]
pub fn csj_terms(
    space: &MetricMeasureSpace,
    phi: &ScaleFunction,
    kernel: &JumpKernel,
    x: usize,
    big_r: f64,
    r: f64,
    c0: f64,
    f: &[f64],
) -> (f64, f64, f64) {
    let n = space.len();
    let psi: Vec<f64> = (0..n).map(|y| ((big_r + r - space.d(x, y)) / r).clamp(0.0, 1.0)).collect();
    let outer = space.ball(x, big_r + (1.0 + c0) * r);
    let mut lhs = 0.0;
    let mut mass = 0.0;
    for &z in &outer {
        if f[z] != 0.0 {
            let row = kernel.row(z);
            let gamma: f64 = (0..n).map(|y| (psi[z] - psi[y]).powi(2) * row[y] * space.mu(y)).sum();
            lhs += f[z] * f[z] * gamma * space.mu(z);
        }
        mass += f[z] * f[z] * space.mu(z);
    }
    let in_u = |y: usize| {
        let d = space.d(x, y);
        d > big_r + DIST_EPS && d <= big_r + r + DIST_EPS
    };
    let in_ustar = |y: usize| {
        let d = space.d(x, y);
        d > big_r - c0 * r + DIST_EPS && d <= big_r + (1.0 + c0) * r + DIST_EPS
    };
    let ustar: Vec<usize> = outer.iter().copied().filter(|&y| in_ustar(y)).collect();
    let mut annulus = 0.0;
    for a in outer.iter().copied().filter(|&y| in_u(y)) {
        for &b in &ustar {
            annulus += (f[a] - f[b]).powi(2) * kernel.get(a, b) * space.mu(a) * space.mu(b);
        }
    }
    (lhs, annulus, mass / phi.eval(r))
}

/// CSJ with the radial cutoff: for `C1` in `{1,2,4,8}` the smallest `C2`
/// valid on every sample, keeping the pair minimizing `max(C1, C2)`.
pub fn check_csj(
    space: &MetricMeasureSpace,
    phi: &ScaleFunction,
    kernel: &JumpKernel,
    p: &CsjParams,
    heat: Option<&HeatSolver>,
) -> ConditionReport {
    let n = space.len();
    let mut rng = sample::stream(p.seed, sample::STREAM_CSJ);
    let grid = space.radius_grid();
    // (r, lhs, annulus, mass, x, R, member)
    let mut rows = Vec::new();
    for x in space.centers(p.centers, p.seed, kernel.is_translation_invariant()) {
        for &big_r in &grid {
            for &r in grid.iter().filter(|&&r| r <= big_r) {
                let reach = big_r + (1.0 + p.c0) * r;
                if reach > space.diameter() / 2.0 + DIST_EPS {
                    continue;
                }
                let outer = space.ball(x, reach);
                let mut fams: Vec<Vec<f64>> = vec![vec![1.0; n]];
                for rad in [big_r, big_r + r, reach] {
                    fams.push((0..n).map(|y| if space.d(x, y) <= rad + DIST_EPS { 1.0 } else { 0.0 }).collect());
                }
                let quota = p.functions.saturating_sub(fams.len());
                for k in 0..quota {
                    let c = outer[rng.random_range(0..outer.len())];
                    let f = match (k % 3, heat) {
                        (0, _) => (0..n).map(|y| if space.d(c, y) <= r / 2.0 + DIST_EPS { 1.0 } else { 0.0 }).collect(),
                        (1, Some(h)) => h.column(phi.eval(r) / 2.0, c),
                        _ => (0..n).map(|_| rng.random::<f64>()).collect(),
                    };
                    fams.push(f);
                }
                for (m, f) in fams.iter().enumerate() {
                    let (lhs, a, mass) = csj_terms(space, phi, kernel, x, big_r, r, p.c0, f);
                    rows.push((r, lhs, a, mass, x, big_r, m));
                }
            }
        }
    }
    let c2_for = |c1: f64| -> (f64, usize) {
        let mut best = (0.0_f64, 0);
        for (i, row) in rows.iter().enumerate() {
            if row.3 > 0.0 {
                let v = ((row.1 - c1 * row.2) / row.3).max(0.0);
                if v > best.0 {
                    best = (v, i);
                }
            } else if row.1 > c1 * row.2 {
                best = (f64::INFINITY, i);
            }
        }
        best
    };
    let mut choice = (f64::INFINITY, f64::INFINITY, 0);
    for c1 in [1.0, 2.0, 4.0, 8.0] {
        let (c2, i) = c2_for(c1);
        if c1.max(c2) < choice.0.max(choice.1) {
            choice = (c1, c2, i);
        }
    }
    let (c1, c2, wi) = choice;
    let mut per_r: Vec<(f64, f64)> = Vec::new();
    for row in &rows {
        let v = if row.3 > 0.0 { ((row.1 - c1 * row.2) / row.3).max(0.0) } else { 0.0 };
        match per_r.iter_mut().find(|e| e.0 == row.0) {
            Some(e) => e.1 = e.1.max(v),
            None => per_r.push((row.0, v)),
        }
    }
    per_r.sort_by(|a, b| a.0.total_cmp(&b.0));
    let drift_ok = match per_r.len() {
        0 | 1 => true,
        k => per_r[k - 1].1 <= 2.0 * per_r[k - 2].1.max(c2 * 1e-6) || per_r[k - 1].1 <= 1e-12,
    };
    let ok = !rows.is_empty() && c2.is_finite() && drift_ok;
    let mut rep = ConditionReport::new("CSJ", Verdict::from_bool(ok), grid_label(space))
        .constant("C0", p.c0)
        .constant("C1", c1)
        .constant("C2", c2)
        .note(format!("{} samples", rows.len()));
    if let Some(w) = rows.get(wi) {
        let v = if w.3 > 0.0 { ((w.1 - c1 * w.2) / w.3).max(0.0) } else { 0.0 };
        rep = rep.witness(
            Witness::new("C2", Relation::Le, v).at("x", w.4 as f64).at("R", w.5).at("r", w.0).at("member", w.6 as f64),
        );
    }
    for &(r, v) in &per_r {
        rep = rep.constant(&format!("C2(r={r})"), v);
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{make_kernel, KernelSpec};
    use crate::space::Metric;
    use proptest::prelude::*;
    use rand::Rng;

    fn setup(n: usize) -> (MetricMeasureSpace, ScaleFunction, JumpKernel) {
        let s = MetricMeasureSpace::torus(1, n, Metric::L2).unwrap();
        let phi = ScaleFunction::power(1.0);
        let k = make_kernel(&s, &phi, &KernelSpec::StableLike).unwrap();
        (s, phi, k)
    }

    fn complete(n: usize, j: f64) -> (MetricMeasureSpace, JumpKernel) {
        let d: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 1.0 }).collect();
        let s = MetricMeasureSpace::custom(vec![1.0; n], d).unwrap();
        let jm: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { j }).collect();
        let k = JumpKernel::from_matrix(&s, jm, KernelSpec::StableLike, false).unwrap();
        (s, k)
    }

    #[test]
    fn two_state_energy() {
        let s = MetricMeasureSpace::custom(vec![1.0, 1.0], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let k = JumpKernel::from_matrix(&s, vec![0.0, 1.0, 1.0, 0.0], KernelSpec::StableLike, false).unwrap();
        assert_eq!(energy(&s, &k, &[0.0, 1.0], &[0.0, 1.0]), 2.0);
        assert_eq!(energy(&s, &k, &[3.0, 3.0], &[3.0, 3.0]), 0.0);
    }

    #[test]
    fn generator_rows_and_balance() {
        let (s, _, k) = setup(16);
        let g = Generator::new(&s, &k);
        for x in 0..16 {
            let row: f64 = (0..16).map(|y| g.rate(x, y)).sum();
            assert!(row.abs() <= 1e-14 * k.lambda(x));
            for y in 0..16 {
                assert_eq!(s.mu(x) * g.rate(x, y), s.mu(y) * g.rate(y, x));
            }
        }
    }

    #[test]
    fn carre_du_champ_indicator() {
        let (s, _, k) = setup(16);
        let mut f = vec![0.0; 16];
        f[5] = 1.0;
        let gam = carre_du_champ(&s, &k, &f, &f);
        assert!((gam[5] - k.lambda(5)).abs() < 1e-14);
        assert!(carre_du_champ(&s, &k, &[2.0; 16], &[2.0; 16]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lambda1_examples() {
        let (s, _, k) = setup(32);
        assert!((lambda1(&s, &k, &[7]) - 2.0 * k.lambda(7)).abs() < 1e-12);
        let small = lambda1(&s, &k, &s.ball(0, 2.0));
        let large = lambda1(&s, &k, &s.ball(0, 6.0));
        assert!(small >= large);
        let k2 = k.scaled(&s, 2.0);
        assert!((lambda1(&s, &k2, &s.ball(0, 2.0)) - 2.0 * small).abs() < 1e-12 * small);
    }

    #[test]
    fn pi_complete_graph() {
        let (s, k) = complete(7, 0.3);
        let c = pi_constant(&s, &ScaleFunction::power(1.0), &k, 0, 1.0, 1.0);
        assert!((c - 1.0 / (2.0 * 0.3 * 7.0)).abs() < 1e-12, "{c}");
    }

    #[test]
    fn pi_stable_passes() {
        let (s, phi, k) = setup(64);
        let rep = check_pi(&s, &phi, &k, &PiParams::default());
        assert_eq!(rep.verdict, Verdict::Pass);
        assert!(rep.revalidate());
    }

    #[test]
    fn pi_constant_dominates_quotients() {
        let (s, phi, k) = setup(32);
        let c = pi_constant(&s, &phi, &k, 0, 2.0, 2.0);
        let mut rng = sample::stream(5, 0);
        for _ in 0..50 {
            let f: Vec<f64> = (0..32).map(|_| rng.random::<f64>()).collect();
            assert!(pi_ratio(&s, &phi, &k, 0, 2.0, 2.0, &f) <= c * (1.0 + 1e-10));
        }
    }

    #[test]
    fn pi_disconnected_ball_is_infinite() {
        // only jumps of length 3: B(0, 2) has no internal edges
        let s = MetricMeasureSpace::torus(1, 16, Metric::L2).unwrap().with_window(1.0, 1.0).unwrap();
        let mut j = vec![0.0; 256];
        for x in 0..16 {
            for h in [3usize, 13] {
                j[x * 16 + (x + h) % 16] = 1.0;
            }
        }
        let k = JumpKernel::from_matrix(&s, j, KernelSpec::StableLike, true).unwrap();
        assert!(pi_constant(&s, &ScaleFunction::power(1.0), &k, 0, 1.0, 1.0).is_infinite());
    }

    #[test]
    fn fk_and_csj_stable() {
        let (s, phi, k) = setup(64);
        let fk = check_fk(&s, &phi, &k, &FkParams::default());
        assert_eq!(fk.verdict, Verdict::Pass);
        assert!(fk.revalidate());
        let csj = check_csj(&s, &phi, &k, &CsjParams::default(), None);
        assert_eq!(csj.verdict, Verdict::Pass, "{csj:?}");
        assert!(csj.revalidate());
        assert!(csj.get("C2").unwrap() < 10.0);
    }

    #[test]
    fn fk_full_ball_is_direct() {
        let (s, phi, k) = setup(64);
        let b = s.ball(0, 4.0);
        let direct = lambda1(&s, &k, &b) * phi.eval(4.0);
        assert!(direct > 0.0);
        let fk = check_fk(&s, &phi, &k, &FkParams::default());
        assert!(fk.get("C").unwrap() <= direct * (1.0 + 1e-12));
    }

    #[test]
    fn csj_zero_and_constant() {
        let (s, phi, k) = setup(64);
        let zero = csj_terms(&s, &phi, &k, 0, 4.0, 2.0, 0.5, &[0.0; 64]);
        assert_eq!(zero, (0.0, 0.0, 0.0));
        let c = 3.0;
        let (lhs, a, m) = csj_terms(&s, &phi, &k, 0, 4.0, 2.0, 0.5, &[c; 64]);
        assert_eq!(a, 0.0);
        assert!((m - c * c * s.volume(0, 7.0) / 2.0).abs() < 1e-12);
        let psi: Vec<f64> = (0..64).map(|y| ((6.0 - s.d(0, y)) / 2.0).clamp(0.0, 1.0)).collect();
        let gam = carre_du_champ(&s, &k, &psi, &psi);
        let expect: f64 = s.ball(0, 7.0).iter().map(|&z| c * c * gam[z]).sum();
        assert!((lhs - expect).abs() < 1e-12 * expect);
    }

    proptest! {
        #[test]
        fn bridge_identity(seed in 0u64..1000) {
            let (s, _, k) = setup(16);
            let g = Generator::new(&s, &k);
            let mut rng = sample::stream(seed, 0);
            let f: Vec<f64> = (0..16).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let qf = g.apply(&f);
            let lhs: f64 = -(0..16).map(|x| qf[x] * f[x] * s.mu(x)).sum::<f64>();
            let e = energy(&s, &k, &f, &f);
            let norm: f64 = f.iter().map(|v| v * v).sum();
            prop_assert!((lhs - 0.5 * e).abs() <= 1e-12 * norm);
        }

        #[test]
        fn energy_bilinear_symmetric(seed in 0u64..1000, a in -3.0f64..3.0) {
            let (s, _, k) = setup(16);
            let mut rng = sample::stream(seed, 1);
            let mut v = || (0..16).map(|_| rng.random::<f64>()).collect::<Vec<f64>>();
            let (f, g, h) = (v(), v(), v());
            let fg: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + y).collect();
            let lhs = energy(&s, &k, &fg, &h);
            let rhs = a * energy(&s, &k, &f, &h) + energy(&s, &k, &g, &h);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
            prop_assert!((energy(&s, &k, &f, &g) - energy(&s, &k, &g, &f)).abs() <= 1e-12);
            prop_assert!(energy(&s, &k, &f, &f) >= 0.0);
            let gam = carre_du_champ(&s, &k, &f, &g);
            let agg: f64 = (0..16).map(|x| gam[x] * s.mu(x)).sum();
            prop_assert!((agg - energy(&s, &k, &f, &g)).abs() <= 1e-12 * (1.0 + agg.abs()));
        }

        #[test]
        fn pi_quotient_shift_invariant(seed in 0u64..200, c in -5.0f64..5.0) {
            let (s, phi, k) = setup(32);
            let mut rng = sample::stream(seed, 2);
            let f: Vec<f64> = (0..32).map(|_| rng.random::<f64>()).collect();
            let g: Vec<f64> = f.iter().map(|v| v + c).collect();
            let a = pi_ratio(&s, &phi, &k, 3, 2.0, 2.0, &f);
            let b = pi_ratio(&s, &phi, &k, 3, 2.0, 2.0, &g);
            prop_assert!((a - b).abs() <= 1e-10 * a);
        }

        #[test]
        fn lambda1_domain_monotone(seed in 0u64..200) {
            let (s, _, k) = setup(32);
            let mut rng = sample::stream(seed, 3);
            let big: Vec<usize> = (0..32).filter(|_| rng.random::<f64>() < 0.6).collect();
            let small: Vec<usize> = big.iter().copied().filter(|_| rng.random::<f64>() < 0.5).collect();
            if !small.is_empty() && big.len() < 32 {
                prop_assert!(lambda1(&s, &k, &small) >= lambda1(&s, &k, &big) - 1e-10);
            }
        }
    }
}
