//! Jump kernels built from the example families, and the kernel-level
//! conditions: two-sided bounds, UJS, tail integrals and nonlocal tails.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{top_drift, ConditionReport, Relation, Verdict, Witness};
use crate::sample;
use crate::scale::ScaleFunction;
use crate::space::{grid_label, MetricMeasureSpace, Torus, DIST_EPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    StableLike,
    PerturbedStable {
        c_bounds: [f64; 2],
        seed: u64,
    },
    /// Double cone around `axis`: offsets with `|cos angle(h, axis)| >= theta`.
    Cone {
        axis: Vec<f64>,
        theta: f64,
    },
    /// A seeded axis per point; a pair is kept when either endpoint sees the
    /// other inside its cone.
    PerPointCone {
        theta: f64,
        seed: u64,
    },
    /// Planar offsets whose folded angle lies in the lacunary set built from
    /// `theta_i = (3 pi / 8) 4^-i` and `theta_i' = (3 pi / 8) 2^-i`.
    Sector,
    /// Jumps along one lattice coordinate with weight `|delta|^(-1-alpha)`.
    Axis {
        alpha: f64,
    },
}

impl KernelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::StableLike => "stable-like",
            KernelSpec::PerturbedStable { .. } => "perturbed-stable",
            KernelSpec::Cone { .. } => "cone",
            KernelSpec::PerPointCone { .. } => "per-point-cone",
            KernelSpec::Sector => "sector",
            KernelSpec::Axis { .. } => "axis",
        }
    }
}

#[derive(Debug, Clone)]
pub struct JumpKernel {
    n: usize,
    j: Vec<f64>,
    lambda: Vec<f64>,
    spec: KernelSpec,
    translation_invariant: bool,
}

impl JumpKernel {
    /// Kernel from an explicit symmetric matrix. Fails on asymmetry, negative
    /// entries, a nonzero diagonal or a disconnected jump graph.
    pub fn from_matrix(
        space: &MetricMeasureSpace,
        j: Vec<f64>,
        spec: KernelSpec,
        translation_invariant: bool,
    ) -> Result<Self> {
        let n = space.len();
        if j.len() != n * n {
            return Err(Error::InvalidSpec(format!("kernel has {} entries, expected {}", j.len(), n * n)));
        }
        for x in 0..n {
            if j[x * n + x] != 0.0 {
                return Err(Error::InvalidSpec(format!("J({x},{x}) != 0")));
            }
            for y in x + 1..n {
                let (a, b) = (j[x * n + y], j[y * n + x]);
                if a != b || !(a >= 0.0) || !a.is_finite() {
                    return Err(Error::InvalidSpec(format!("J({x},{y}) = {a}, J({y},{x}) = {b}")));
                }
            }
        }
        let lambda: Vec<f64> = (0..n).map(|x| (0..n).map(|y| j[x * n + y] * space.mu(y)).sum()).collect();
        let k = Self { n, j, lambda, spec, translation_invariant };
        if !k.is_connected() {
            return Err(Error::DisconnectedKernel);
        }
        Ok(k)
    }

    fn is_connected(&self) -> bool {
        let n = self.n;
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(x) = stack.pop() {
            for (y, s) in seen.iter_mut().enumerate() {
                if !*s && self.j[x * n + y] > 0.0 {
                    *s = true;
                    count += 1;
                    stack.push(y);
                }
            }
        }
        count == n
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.j[x * self.n + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.j[x * self.n..(x + 1) * self.n]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.j
    }

    /// Total jump rate `lambda(x) = sum_y J(x,y) mu(y)`.
    pub fn lambda(&self, x: usize) -> f64 {
        self.lambda[x]
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    /// `J(x,y)` depends only on `y - x` on a homogeneous torus.
    pub fn is_translation_invariant(&self) -> bool {
        self.translation_invariant
    }

    /// The same kernel multiplied by `k`.
    pub fn scaled(&self, space: &MetricMeasureSpace, k: f64) -> Self {
        let j = self.j.iter().map(|v| v * k).collect();
        Self::from_matrix(space, j, self.spec.clone(), self.translation_invariant).expect("scaling keeps validity")
    }
}

fn require_torus(space: &MetricMeasureSpace, what: &str) -> Result<Torus> {
    space.torus_info().ok_or_else(|| Error::InvalidSpec(format!("{what} kernel needs a torus space")))
}

/// Largest `|cos|` between `axis` and any representative of the wrapped offset.
/// Coordinates equal to `N/2` have two representatives; taking the maximum
/// keeps membership symmetric in the pair.
fn max_abs_cos(t: &Torus, h: &[i64], axis: &[f64]) -> f64 {
    let half = t.side as i64 / 2;
    let ambiguous: Vec<usize> =
        if t.side.is_multiple_of(2) { (0..h.len()).filter(|&k| h[k].abs() == half).collect() } else { Vec::new() };
    let an = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut best = 0.0_f64;
    for mask in 0..(1usize << ambiguous.len()) {
        let mut dot = 0.0;
        let mut nn = 0.0;
        for (k, &hk) in h.iter().enumerate() {
            let mut v = hk as f64;
            if let Some(b) = ambiguous.iter().position(|&a| a == k) {
                if mask >> b & 1 == 1 {
                    v = -v;
                }
            }
            dot += v * axis[k];
            nn += v * v;
        }
        best = best.max(dot.abs() / (nn.sqrt() * an));
    }
    best
}

/// Folded angles kept by the sector family, as half-open intervals in `[0, pi/2]`.
pub fn sector_intervals(side: usize) -> Vec<(f64, f64)> {
    let resolution = (2.0 / side as f64).atan();
    let theta = |i: i32| 3.0 * PI / 8.0 * 4f64.powi(-i);
    let theta_p = |i: i32| 3.0 * PI / 8.0 * 2f64.powi(-i);
    let mut out = vec![(0.0, theta(1))];
    let mut s = 0.0;
    let mut n = 1;
    loop {
        s += theta(n) + theta_p(n);
        let w = theta(n + 1);
        if w < resolution {
            break;
        }
        out.push((s, s + w));
        n += 1;
    }
    out
}

pub fn make_kernel(space: &MetricMeasureSpace, phi: &ScaleFunction, spec: &KernelSpec) -> Result<JumpKernel> {
    let n = space.len();
    let stable = |x: usize, vols: &[f64], vols_t: &dyn Fn(usize) -> f64, y: usize| -> f64 {
        let d = space.d(x, y);
        1.0 / ((vols[y] * vols_t(y)).sqrt() * phi.eval(d))
    };
    // V(x, d(x,y)) for all pairs, computed row by row.
    let mut vd = vec![0.0; n * n];
    for x in 0..n {
        vd[x * n..(x + 1) * n].copy_from_slice(&space.volumes_at_distances(x));
    }
    let base = |x: usize, y: usize| -> f64 {
        if x == y {
            0.0
        } else {
            stable(x, &vd[x * n..(x + 1) * n], &|y| vd[y * n + x], y)
        }
    };
    let homogeneous = space.is_homogeneous();
    let mut j = vec![0.0; n * n];
    let translation_invariant;
    match spec {
        KernelSpec::StableLike => {
            for x in 0..n {
                for y in 0..n {
                    j[x * n + y] = base(x, y);
                }
            }
            translation_invariant = homogeneous;
        }
        KernelSpec::PerturbedStable { c_bounds: [lo, hi], seed } => {
            if !(*lo > 0.0 && lo <= hi) {
                return Err(Error::InvalidSpec(format!("perturbation bounds [{lo}, {hi}]")));
            }
            let mut rng = sample::stream(*seed, sample::STREAM_PERTURB);
            let ratio = hi / lo;
            for x in 0..n {
                for y in x + 1..n {
                    let u: f64 = rng.random();
                    let c = lo * ratio.powf(u);
                    let v = c * base(x, y);
                    j[x * n + y] = v;
                    j[y * n + x] = v;
                }
            }
            translation_invariant = false;
        }
        KernelSpec::Cone { axis, theta } => {
            let t = require_torus(space, "cone")?;
            if axis.len() != t.dim || axis.iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidSpec(format!("cone axis must be a nonzero {}-vector", t.dim)));
            }
            if !(*theta > 0.0 && *theta < 1.0) {
                return Err(Error::InvalidSpec(format!("cone aperture {theta} not in (0,1)")));
            }
            for x in 0..n {
                for y in 0..n {
                    if x != y && max_abs_cos(&t, &t.offset(x, y), axis) >= theta - 1e-12 {
                        j[x * n + y] = base(x, y);
                    }
                }
            }
            translation_invariant = homogeneous;
        }
        KernelSpec::PerPointCone { theta, seed } => {
            let t = require_torus(space, "per-point-cone")?;
            if !(*theta > 0.0 && *theta < 1.0) {
                return Err(Error::InvalidSpec(format!("cone aperture {theta} not in (0,1)")));
            }
            let mut rng = sample::stream(*seed, sample::STREAM_CONE_AXES);
            let axes: Vec<Vec<f64>> = (0..n)
                .map(|_| loop {
                    let v: Vec<f64> = (0..t.dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                    let nn = v.iter().map(|a| a * a).sum::<f64>();
                    if nn > 1e-6 && nn <= 1.0 {
                        break v;
                    }
                })
                .collect();
            for x in 0..n {
                for y in 0..n {
                    if x == y {
                        continue;
                    }
                    let inside = max_abs_cos(&t, &t.offset(x, y), &axes[x]) >= theta - 1e-12
                        || max_abs_cos(&t, &t.offset(y, x), &axes[y]) >= theta - 1e-12;
                    if inside {
                        j[x * n + y] = base(x, y);
                    }
                }
            }
            translation_invariant = false;
        }
        KernelSpec::Sector => {
            let t = require_torus(space, "sector")?;
            if t.dim != 2 {
                return Err(Error::InvalidSpec("sector kernel needs a planar torus".into()));
            }
            let intervals = sector_intervals(t.side);
            for x in 0..n {
                for y in 0..n {
                    if x == y {
                        continue;
                    }
                    let h = t.offset(x, y);
                    let psi = (h[1].abs() as f64).atan2(h[0].abs() as f64);
                    if intervals.iter().any(|&(a, b)| psi >= a - 1e-12 && psi < b - 1e-12) {
                        j[x * n + y] = base(x, y);
                    }
                }
            }
            translation_invariant = homogeneous;
        }
        KernelSpec::Axis { alpha } => {
            let t = require_torus(space, "axis")?;
            if !(*alpha > 0.0) {
                return Err(Error::InvalidExponent(format!("axis alpha = {alpha}")));
            }
            for x in 0..n {
                for y in 0..n {
                    let h = t.offset(x, y);
                    let moved: Vec<i64> = h.into_iter().filter(|&v| v != 0).collect();
                    if moved.len() == 1 {
                        let delta = moved[0].unsigned_abs() as f64;
                        j[x * n + y] = delta.powf(-1.0 - alpha) / (space.mu(x) * space.mu(y)).sqrt();
                    }
                }
            }
            translation_invariant = homogeneous;
        }
    }
    JumpKernel::from_matrix(space, j, spec.clone(), translation_invariant)
}

fn kernel_centers(space: &MetricMeasureSpace, kernel: &JumpKernel) -> Vec<usize> {
    if kernel.is_translation_invariant() && space.is_homogeneous() {
        vec![0]
    } else {
        (0..space.len()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JBoundsReport {
    pub c1_lower: f64,
    pub c2_upper: f64,
    pub verdict_lower: Verdict,
    pub verdict_upper: Verdict,
    pub witness_lower: (usize, usize),
    pub witness_upper: (usize, usize),
}

/// Extremes of `J(x,y) V(x,d(x,y)) phi(d(x,y))` over all pairs.
pub fn check_j_bounds(space: &MetricMeasureSpace, phi: &ScaleFunction, kernel: &JumpKernel) -> JBoundsReport {
    let mut lo = (f64::INFINITY, (0, 0));
    let mut hi = (0.0_f64, (0, 0));
    for x in kernel_centers(space, kernel) {
        let vols = space.volumes_at_distances(x);
        for (y, &v) in vols.iter().enumerate() {
            if y == x {
                continue;
            }
            let q = kernel.get(x, y) * v * phi.eval(space.d(x, y));
            if q < lo.0 {
                lo = (q, (x, y));
            }
            if q > hi.0 {
                hi = (q, (x, y));
            }
        }
    }
    JBoundsReport {
        c1_lower: lo.0,
        c2_upper: hi.0,
        verdict_lower: Verdict::from_bool(lo.0 > 0.0),
        verdict_upper: Verdict::from_bool(hi.0.is_finite()),
        witness_lower: lo.1,
        witness_upper: hi.1,
    }
}

impl JBoundsReport {
    pub fn to_reports(&self) -> [ConditionReport; 2] {
        let grid = String::from("all pairs x != y");
        let (x, y) = self.witness_upper;
        let upper = ConditionReport::new("J_le", self.verdict_upper, grid.clone())
            .constant("c2", self.c2_upper)
            .witness(Witness::new("c2", Relation::Le, self.c2_upper).at("x", x as f64).at("y", y as f64));
        let (x, y) = self.witness_lower;
        let lower = ConditionReport::new("J_ge", self.verdict_lower, grid)
            .constant("c1", self.c1_lower)
            .witness(Witness::new("c1", Relation::Ge, self.c1_lower).at("x", x as f64).at("y", y as f64));
        [upper, lower]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UjsReport {
    /// `(r, c(r))` for every grid radius with at least one admissible pair.
    pub per_radius: Vec<(f64, f64)>,
    pub c: f64,
    /// Largest `c(r') / c(r)` over `r < r'`.
    pub growth: f64,
    pub verdict: Verdict,
    /// `(x, y, r, ratio)` at the overall maximum.
    pub witness: (usize, usize, f64, f64),
    pub centers: usize,
}

/// Empirical UJS constant `J(x,y) V(x,r) / sum_{z in B(x,r)} J(z,y) mu(z)`
/// for every grid radius `r <= d(x,y)/2`.
pub fn check_ujs(space: &MetricMeasureSpace, kernel: &JumpKernel, sample_budget: usize, seed: u64) -> UjsReport {
    let n = space.len();
    let grid = space.radius_grid();
    let centers = if kernel.is_translation_invariant() && space.is_homogeneous() {
        vec![0]
    } else if n * n * n.saturating_sub(1) <= 1_000_000 {
        (0..n).collect()
    } else {
        sample::subset(n, sample_budget.max(1), seed, sample::STREAM_UJS)
    };
    let mut per_radius = Vec::new();
    let mut witness = (0, 0, grid[0], 0.0);
    let mut c = 0.0_f64;
    for &r in &grid {
        let mut cr: Option<f64> = None;
        for &x in &centers {
            let ball = space.ball(x, r);
            let vx: f64 = ball.iter().map(|&z| space.mu(z)).sum();
            let mut den = vec![0.0; n];
            for &z in &ball {
                let mz = space.mu(z);
                for (y, d) in den.iter_mut().enumerate() {
                    *d += kernel.get(z, y) * mz;
                }
            }
            for (y, &dy) in den.iter().enumerate() {
                if y == x || space.d(x, y) + DIST_EPS < 2.0 * r {
                    continue;
                }
                let num = kernel.get(x, y) * vx;
                let ratio = if num == 0.0 {
                    0.0
                } else if dy == 0.0 {
                    f64::INFINITY
                } else {
                    num / dy
                };
                cr = Some(cr.map_or(ratio, |v: f64| v.max(ratio)));
                if ratio > c {
                    c = ratio;
                    witness = (x, y, r, ratio);
                }
            }
        }
        if let Some(v) = cr {
            per_radius.push((r, v));
        }
    }
    let mut growth = 1.0_f64;
    for i in 0..per_radius.len() {
        for k in i + 1..per_radius.len() {
            if per_radius[i].1 > 0.0 {
                growth = growth.max(per_radius[k].1 / per_radius[i].1);
            }
        }
    }
    let verdict = Verdict::from_bool(c.is_finite() && growth <= 2.0);
    UjsReport { per_radius, c, growth, verdict, witness, centers: centers.len() }
}

impl UjsReport {
    pub fn to_report(&self, space: &MetricMeasureSpace) -> ConditionReport {
        let (x, y, r, ratio) = self.witness;
        let mut rep = ConditionReport::new("UJS", self.verdict, grid_label(space))
            .constant("c", self.c)
            .constant("growth", self.growth)
            .witness(Witness::new("c", Relation::Le, ratio).at("x", x as f64).at("y", y as f64).at("r", r))
            .tolerance("max_growth", 2.0)
            .note(format!("{} centers", self.centers));
        for &(r, v) in &self.per_radius {
            rep = rep.constant(&format!("c(r={r})"), v);
        }
        rep
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub c1: f64,
    pub per_radius: Vec<(f64, f64)>,
    pub verdict: Verdict,
    pub witness: (usize, f64),
}

/// `c1 = max_{x,r} phi(r) sum_{y notin B(x,r)} J(x,y) mu(y)`.
pub fn check_tail_integral(space: &MetricMeasureSpace, phi: &ScaleFunction, kernel: &JumpKernel) -> TailReport {
    let mut per_radius = Vec::new();
    let mut best = (0.0_f64, (0, 0.0));
    for r in space.radius_grid() {
        let mut cr = 0.0_f64;
        for x in kernel_centers(space, kernel) {
            let tail: f64 = (0..space.len())
                .filter(|&y| space.d(x, y) > r + DIST_EPS)
                .map(|y| kernel.get(x, y) * space.mu(y))
                .sum();
            let v = phi.eval(r) * tail;
            cr = cr.max(v);
            if v > best.0 {
                best = (v, (x, r));
            }
        }
        per_radius.push((r, cr));
    }
    let ok = best.0.is_finite() && top_drift(&per_radius, true) <= 2.0;
    TailReport { c1: best.0, per_radius, verdict: Verdict::from_bool(ok), witness: best.1 }
}

impl TailReport {
    pub fn to_report(&self, space: &MetricMeasureSpace) -> ConditionReport {
        let (x, r) = self.witness;
        let mut rep = ConditionReport::new("tail", self.verdict, grid_label(space))
            .constant("c1", self.c1)
            .witness(Witness::new("c1", Relation::Le, self.c1).at("x", x as f64).at("r", r));
        for &(r, v) in &self.per_radius {
            rep = rep.constant(&format!("c1(r={r})"), v);
        }
        rep
    }
}

/// `phi(r) sum_{z notin B(x0,r)} |u(z)| mu(z) / (V(x0,d(x0,z)) phi(d(x0,z)))`.
pub fn nonlocal_tail(space: &MetricMeasureSpace, phi: &ScaleFunction, u: &[f64], x0: usize, r: f64) -> f64 {
    let vols = space.volumes_at_distances(x0);
    let s: f64 = (0..space.len())
        .filter(|&z| space.d(x0, z) > r + DIST_EPS)
        .map(|z| u[z].abs() * space.mu(z) / (vols[z] * phi.eval(space.d(x0, z))))
        .sum();
    phi.eval(r) * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Metric;
    use proptest::prelude::*;
    use rand::Rng;

    fn z(n: usize) -> MetricMeasureSpace {
        MetricMeasureSpace::torus(1, n, Metric::L2).unwrap()
    }

    #[test]
    fn stable_like_entry() {
        let s = z(16);
        let k = make_kernel(&s, &ScaleFunction::power(1.0), &KernelSpec::StableLike).unwrap();
        assert!((k.get(0, 2) - 0.1).abs() < 1e-15);
        assert!(k.is_translation_invariant());
    }

    #[test]
    fn cone_membership() {
        let s = MetricMeasureSpace::torus(2, 8, Metric::L2).unwrap();
        let theta = 1.0 / 2f64.sqrt();
        let k = make_kernel(&s, &ScaleFunction::power(1.0), &KernelSpec::Cone { axis: vec![1.0, 0.0], theta }).unwrap();
        let t = s.torus_info().unwrap();
        let o = t.index(&[0, 0]);
        assert!(k.get(o, t.index(&[1, 1])) > 0.0);
        assert_eq!(k.get(o, t.index(&[0, 1])), 0.0);
        assert!(k.get(o, t.index(&[1, 0])) > 0.0);
    }

    #[test]
    fn axis_moves_one_coordinate() {
        let s = MetricMeasureSpace::torus(3, 8, Metric::L2).unwrap();
        let k = make_kernel(&s, &ScaleFunction::power(1.0), &KernelSpec::Axis { alpha: 1.0 }).unwrap();
        let t = s.torus_info().unwrap();
        for y in 0..s.len() {
            let moved = t.offset(0, y).iter().filter(|&&v| v != 0).count();
            assert_eq!(k.get(0, y) > 0.0, moved == 1);
        }
        assert_eq!(k.get(0, t.index(&[0, 0, 2])), 0.25);
    }

    #[test]
    fn translation_invariance_holds() {
        let s = MetricMeasureSpace::torus(2, 10, Metric::Linf).unwrap();
        let t = s.torus_info().unwrap();
        for spec in [
            KernelSpec::StableLike,
            KernelSpec::Cone { axis: vec![1.0, 2.0], theta: 0.8 },
            KernelSpec::Sector,
            KernelSpec::Axis { alpha: 1.0 },
        ] {
            let k = make_kernel(&s, &ScaleFunction::power(1.0), &spec).unwrap();
            for x in [3, 17, 55] {
                for y in 0..s.len() {
                    assert_eq!(k.get(x, y), k.get(0, t.difference(x, y)), "{spec:?}");
                }
            }
        }
    }

    #[test]
    fn disconnected_rejected() {
        let s = z(8);
        let mut j = vec![0.0; 64];
        j[1] = 1.0;
        j[8] = 1.0;
        assert!(matches!(
            JumpKernel::from_matrix(&s, j, KernelSpec::StableLike, false),
            Err(Error::DisconnectedKernel)
        ));
    }

    #[test]
    fn j_bounds_examples() {
        let s = z(64);
        let phi = ScaleFunction::power(1.0);
        let k = make_kernel(&s, &phi, &KernelSpec::StableLike).unwrap();
        let r = check_j_bounds(&s, &phi, &k);
        assert!((r.c1_lower - 1.0).abs() < 1e-12 && (r.c2_upper - 1.0).abs() < 1e-12);
        let p = make_kernel(&s, &phi, &KernelSpec::PerturbedStable { c_bounds: [0.5, 2.0], seed: 9 }).unwrap();
        let r = check_j_bounds(&s, &phi, &p);
        assert!(r.c1_lower >= 0.5 - 1e-12 && r.c2_upper <= 2.0 + 1e-12);
        for rep in r.to_reports() {
            assert!(rep.revalidate());
        }
        let s2 = MetricMeasureSpace::torus(2, 16, Metric::Linf).unwrap();
        let c = make_kernel(&s2, &phi, &KernelSpec::Cone { axis: vec![1.0, 0.0], theta: (PI / 8.0).cos() }).unwrap();
        let r = check_j_bounds(&s2, &phi, &c);
        assert_eq!(r.c1_lower, 0.0);
        assert_eq!(r.verdict_lower, Verdict::Fail);
    }

    #[test]
    fn ujs_pointwise_comparable() {
        // stable-like on Z_64: J(x,y) <= 2 J(z,y) on half-distance balls
        let s = z(64);
        let phi = ScaleFunction::power(1.0);
        let k = make_kernel(&s, &phi, &KernelSpec::StableLike).unwrap();
        let r = check_ujs(&s, &k, 64, 1);
        assert!(r.c <= 2.0);
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.to_report(&s).revalidate());
    }

    #[test]
    fn ujs_scale_invariant() {
        let s = z(32).with_window(1.0, 4.0).unwrap();
        let phi = ScaleFunction::power(1.0);
        let k = make_kernel(&s, &phi, &KernelSpec::PerturbedStable { c_bounds: [0.5, 2.0], seed: 3 }).unwrap();
        let a = check_ujs(&s, &k, 8, 1);
        let b = check_ujs(&s, &k.scaled(&s, 7.0), 8, 1);
        assert!((a.c - b.c).abs() <= 1e-12 * a.c);
    }

    #[test]
    fn tail_nearest_neighbour() {
        let s = z(16).with_window(0.5, 2.0).unwrap();
        let mut j = vec![0.0; 256];
        for x in 0..16 {
            j[x * 16 + (x + 1) % 16] = 1.0;
            j[((x + 1) % 16) * 16 + x] = 1.0;
        }
        let k = JumpKernel::from_matrix(&s, j, KernelSpec::StableLike, true).unwrap();
        let rep = check_tail_integral(&s, &ScaleFunction::power(1.0), &k);
        assert_eq!(rep.per_radius, vec![(0.5, 1.0), (1.0, 0.0), (2.0, 0.0)]);
    }

    #[test]
    fn tail_linear_in_measure() {
        let s = z(64);
        let phi = ScaleFunction::power(1.0);
        let k = make_kernel(&s, &phi, &KernelSpec::StableLike).unwrap();
        let a = check_tail_integral(&s, &phi, &k);
        let s3 = s.rescaled_measure(3.0);
        let k3 = JumpKernel::from_matrix(&s3, k.matrix().to_vec(), KernelSpec::StableLike, true).unwrap();
        let b = check_tail_integral(&s3, &phi, &k3);
        assert!((b.c1 - 3.0 * a.c1).abs() < 1e-12 * b.c1);
        assert_eq!(a.verdict, Verdict::Pass);
    }

    #[test]
    fn nonlocal_tail_examples() {
        let s = z(64);
        let phi = ScaleFunction::power(1.0);
        let k = make_kernel(&s, &phi, &KernelSpec::StableLike).unwrap();
        assert_eq!(nonlocal_tail(&s, &phi, &vec![0.0; 64], 0, 4.0), 0.0);
        let mut u = vec![0.0; 64];
        for y in s.ball(0, 4.0) {
            u[y] = 5.0;
        }
        assert_eq!(nonlocal_tail(&s, &phi, &u, 0, 4.0), 0.0);
        let ones = vec![1.0; 64];
        let direct: f64 = (0..64).filter(|&y| s.d(0, y) > 4.0).map(|y| k.get(0, y)).sum();
        assert!((nonlocal_tail(&s, &phi, &ones, 0, 4.0) - 4.0 * direct).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn tail_homogeneous(lam in 0.0f64..10.0, seed in 0u64..1000) {
            let s = z(32).with_window(1.0, 4.0).unwrap();
            let phi = ScaleFunction::power(1.0);
            let mut rng = sample::stream(seed, 0);
            let u: Vec<f64> = (0..32).map(|_| rng.random::<f64>() - 0.5).collect();
            let lu: Vec<f64> = u.iter().map(|v| lam * v).collect();
            let a = nonlocal_tail(&s, &phi, &u, 3, 2.0);
            let b = nonlocal_tail(&s, &phi, &lu, 3, 2.0);
            prop_assert!((b - lam * a).abs() <= 1e-12 * (1.0 + b.abs()));
        }

        #[test]
        fn kernels_symmetric(seed in 0u64..50) {
            let s = MetricMeasureSpace::torus(2, 8, Metric::L2).unwrap();
            let k = make_kernel(&s, &ScaleFunction::power(1.0), &KernelSpec::PerPointCone { theta: 0.3, seed }).unwrap();
            for x in 0..64 {
                prop_assert_eq!(k.get(x, x), 0.0);
                for y in 0..64 {
                    prop_assert_eq!(k.get(x, y), k.get(y, x));
                }
            }
        }
    }
}
