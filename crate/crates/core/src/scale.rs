//! Scale functions `phi` and their regularity exponents.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{ConditionReport, Relation, Verdict, Witness};
use crate::space::dyadic_grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleKind {
    Power,
    Mixed,
    Piecewise,
}

/// Configuration form of a scale function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSpec {
    pub family: ScaleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// `(beta, weight)` atoms of the mixing measure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<[f64; 2]>>,
    /// `[alpha_low, alpha_high]` for radii below and above 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<[f64; 2]>,
}

impl ScaleSpec {
    pub fn power(alpha: f64) -> Self {
        Self { family: ScaleKind::Power, alpha: Some(alpha), atoms: None, alphas: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScaleFamily {
    Power {
        alpha: f64,
    },
    /// `phi(r) = 1 / sum_i w_i r^{-beta_i}`.
    Mixed {
        atoms: Vec<(f64, f64)>,
    },
    Piecewise {
        low: f64,
        high: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleFunction {
    family: ScaleFamily,
    factor: f64,
}

pub fn make_scale(spec: &ScaleSpec) -> Result<ScaleFunction> {
    let family = match spec.family {
        ScaleKind::Power => ScaleFamily::Power {
            alpha: spec.alpha.ok_or_else(|| Error::InvalidSpec("power scale needs alpha".into()))?,
        },
        ScaleKind::Mixed => ScaleFamily::Mixed {
            atoms: spec
                .atoms
                .as_ref()
                .ok_or_else(|| Error::InvalidSpec("mixed scale needs atoms".into()))?
                .iter()
                .map(|a| (a[0], a[1]))
                .collect(),
        },
        ScaleKind::Piecewise => {
            let [low, high] = spec.alphas.ok_or_else(|| Error::InvalidSpec("piecewise scale needs alphas".into()))?;
            ScaleFamily::Piecewise { low, high }
        }
    };
    ScaleFunction::new(family)
}

impl ScaleFunction {
    pub fn new(family: ScaleFamily) -> Result<Self> {
        match &family {
            ScaleFamily::Power { alpha } => {
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::InvalidExponent(format!("alpha = {alpha}")));
                }
            }
            ScaleFamily::Mixed { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::InvalidSpec("mixed scale has no atoms".into()));
                }
                for &(beta, w) in atoms {
                    if !(beta > 0.0 && beta < 2.0) {
                        return Err(Error::InvalidExponent(format!("atom beta = {beta} not in (0, 2)")));
                    }
                    if !(w > 0.0) {
                        return Err(Error::InvalidSpec(format!("atom weight {w} is not positive")));
                    }
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::WeightsNotNormalized(total));
                }
            }
            ScaleFamily::Piecewise { low, high } => {
                if !(*low > 0.0 && *high > 0.0) {
                    return Err(Error::InvalidExponent(format!("piecewise exponents ({low}, {high})")));
                }
            }
        }
        Ok(Self { family, factor: 1.0 })
    }

    pub fn power(alpha: f64) -> Self {
        Self::new(ScaleFamily::Power { alpha }).expect("positive alpha")
    }

    pub fn family(&self) -> &ScaleFamily {
        &self.family
    }

    /// `lambda * phi`. No longer normalized at 1; used for sensitivity checks.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self { family: self.family.clone(), factor: self.factor * lambda }
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let v = match &self.family {
            ScaleFamily::Power { alpha } => r.powf(*alpha),
            ScaleFamily::Mixed { atoms } => 1.0 / atoms.iter().map(|&(b, w)| w * r.powf(-b)).sum::<f64>(),
            ScaleFamily::Piecewise { low, high } => {
                if r <= 1.0 {
                    r.powf(*low)
                } else {
                    r.powf(*high)
                }
            }
        };
        self.factor * v
    }

    /// `phi^{-1}(t)`: closed form for powers, log-space bisection otherwise.
    pub fn invert(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if let ScaleFamily::Power { alpha } = self.family {
            return (t / self.factor).powf(1.0 / alpha);
        }
        let target = t.ln();
        let f = |s: f64| self.eval(s.exp()).ln() - target;
        let (mut lo, mut hi) = (-1.0, 1.0);
        while f(lo) > 0.0 {
            lo *= 2.0;
        }
        while f(hi) < 0.0 {
            hi *= 2.0;
        }
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        (0.5 * (lo + hi)).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyconReport {
    pub beta1: f64,
    pub beta2: f64,
    pub c1: f64,
    pub c2: f64,
    pub verdict: Verdict,
    /// Exponents from the twice finer grid.
    pub refined: (f64, f64),
    pub witness_lower: (f64, f64),
    pub witness_upper: (f64, f64),
}

fn fit_exponents(phi: &ScaleFunction, grid: &[f64]) -> (f64, f64, (f64, f64), (f64, f64)) {
    let mut b1 = (f64::INFINITY, (grid[0], grid[0]));
    let mut b2 = (f64::NEG_INFINITY, (grid[0], grid[0]));
    for (i, &r) in grid.iter().enumerate() {
        for &big in &grid[i + 1..] {
            let s = (phi.eval(big) / phi.eval(r)).ln() / (big / r).ln();
            if s < b1.0 {
                b1 = (s, (r, big));
            }
            if s > b2.0 {
                b2 = (s, (r, big));
            }
        }
    }
    (b1.0, b2.0, b1.1, b2.1)
}

fn geometric_grid(a: f64, b: f64, step: f64) -> Vec<f64> {
    let mut g = Vec::new();
    let mut r = a;
    while r <= b * (1.0 + 1e-12) {
        g.push(r);
        r *= step;
    }
    if g.last().is_some_and(|&l| l < b * (1.0 - 1e-12)) {
        g.push(b);
    }
    g
}

/// Tightest exponents `beta1 <= beta2` with
/// `c1 (R/r)^beta1 <= phi(R)/phi(r) <= c2 (R/r)^beta2` on the dyadic grid of
/// `window`, plus a stability check on the grid refined by `sqrt 2`.
pub fn check_polycon(phi: &ScaleFunction, window: (f64, f64)) -> PolyconReport {
    let grid = dyadic_grid(window.0, window.1);
    let grid = if grid.len() < 2 { alloc::vec![window.0, 2.0 * window.0] } else { grid };
    let (beta1, beta2, wl, wu) = fit_exponents(phi, &grid);
    let fine = geometric_grid(grid[0], *grid.last().unwrap(), 2f64.sqrt());
    let (f1, f2, _, _) = fit_exponents(phi, &fine);
    let mut c1 = f64::INFINITY;
    let mut c2 = 0.0_f64;
    for (i, &r) in grid.iter().enumerate() {
        for &big in &grid[i + 1..] {
            let q = phi.eval(big) / phi.eval(r);
            c1 = c1.min(q / (big / r).powf(beta1));
            c2 = c2.max(q / (big / r).powf(beta2));
        }
    }
    let stable = |a: f64, b: f64| (a - b).abs() <= 0.05 * a.abs().max(1e-12);
    let ok = c1.is_finite() && c1 > 0.0 && c2.is_finite() && beta1 > 0.0 && stable(beta1, f1) && stable(beta2, f2);
    PolyconReport {
        beta1,
        beta2,
        c1,
        c2,
        verdict: Verdict::from_bool(ok),
        refined: (f1, f2),
        witness_lower: wl,
        witness_upper: wu,
    }
}

impl PolyconReport {
    pub fn to_report(&self, phi: &ScaleFunction, window: (f64, f64)) -> ConditionReport {
        let (r, big) = self.witness_lower;
        let lower = phi.eval(big) / phi.eval(r) / (big / r).powf(self.beta1);
        let (r2, big2) = self.witness_upper;
        let upper = phi.eval(big2) / phi.eval(r2) / (big2 / r2).powf(self.beta2);
        ConditionReport::new("polycon", self.verdict, format!("dyadic radii in [{}, {}]", window.0, window.1))
            .constant("beta1", self.beta1)
            .constant("beta2", self.beta2)
            .constant("c1", self.c1)
            .constant("c2", self.c2)
            .constant("beta1_refined", self.refined.0)
            .constant("beta2_refined", self.refined.1)
            .witness(Witness::new("c1", Relation::Ge, lower).at("r", r).at("R", big))
            .witness(Witness::new("c2", Relation::Le, upper).at("r", r2).at("R", big2))
            .tolerance("exponent_rel_change", 0.05)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mixed() -> ScaleFunction {
        ScaleFunction::new(ScaleFamily::Mixed { atoms: alloc::vec![(0.5, 0.5), (1.5, 0.5)] }).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(ScaleFunction::power(1.0).eval(2.0), 2.0);
        assert_eq!(ScaleFunction::power(2.0).invert(9.0), 3.0);
        let m = mixed();
        assert!((m.eval(1.0) - 1.0).abs() < 1e-15);
        let r: f64 = 2.3;
        assert!((m.eval(r) - 2.0 / (r.powf(-0.5) + r.powf(-1.5))).abs() < 1e-14);
        assert!((m.invert(m.eval(3.7)) - 3.7).abs() < 1e-10 * 3.7);
        let p = ScaleFunction::new(ScaleFamily::Piecewise { low: 1.5, high: 1.2 }).unwrap();
        assert_eq!(p.eval(1.0), 1.0);
        assert!((p.eval(1.0 + 1e-12) - 1.0).abs() < 1e-11);
        assert_eq!(m.eval(0.0), 0.0);
        assert_eq!(m.invert(0.0), 0.0);
    }

    #[test]
    fn invalid_specs() {
        assert!(matches!(ScaleFunction::new(ScaleFamily::Power { alpha: 0.0 }), Err(Error::InvalidExponent(_))));
        assert!(matches!(
            ScaleFunction::new(ScaleFamily::Mixed { atoms: alloc::vec![(0.5, 0.5), (1.5, 0.6)] }),
            Err(Error::WeightsNotNormalized(_))
        ));
        assert!(ScaleFunction::new(ScaleFamily::Piecewise { low: -1.0, high: 1.0 }).is_err());
    }

    #[test]
    fn polycon_power() {
        let rep = check_polycon(&ScaleFunction::power(1.3), (0.25, 16.0));
        assert!((rep.beta1 - 1.3).abs() < 1e-12 && (rep.beta2 - 1.3).abs() < 1e-12);
        assert!((rep.c1 - 1.0).abs() < 1e-12 && (rep.c2 - 1.0).abs() < 1e-12);
        assert_eq!(rep.verdict, Verdict::Pass);
    }

    #[test]
    fn polycon_mixed_bracketed() {
        let rep = check_polycon(&mixed(), (1.0 / 64.0, 64.0));
        assert!(rep.beta1 >= 0.45 && rep.beta2 <= 1.55, "{rep:?}");
        assert!(rep.beta1 <= rep.beta2);
    }

    #[test]
    fn polycon_piecewise() {
        let p = ScaleFunction::new(ScaleFamily::Piecewise { low: 1.5, high: 1.2 }).unwrap();
        let rep = check_polycon(&p, (1.0 / 16.0, 16.0));
        assert!((rep.beta1 - 1.2).abs() < 1e-9 && (rep.beta2 - 1.5).abs() < 1e-9, "{rep:?}");
        assert!(rep.to_report(&p, (1.0 / 16.0, 16.0)).revalidate());
    }

    proptest! {
        #[test]
        fn monotone_and_roundtrip(a in 0.05f64..50.0, b in 0.05f64..50.0, w in 0.05f64..0.95) {
            let phi = ScaleFunction::new(ScaleFamily::Mixed { atoms: alloc::vec![(0.3, w), (1.7, 1.0 - w)] }).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if hi > lo * (1.0 + 1e-9) {
                prop_assert!(phi.eval(lo) < phi.eval(hi));
            }
            prop_assert!((phi.invert(phi.eval(a)) - a).abs() <= 1e-10 * a);
        }

        #[test]
        fn power_scaling(alpha in 0.1f64..1.99, lam in 0.1f64..10.0, r in 0.1f64..10.0) {
            let phi = ScaleFunction::power(alpha);
            let lhs = phi.eval(lam * r);
            let rhs = lam.powf(alpha) * phi.eval(r);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        }

        #[test]
        fn fitted_bounds_hold(lo in 0.2f64..1.9, hi in 0.2f64..1.9) {
            let phi = ScaleFunction::new(ScaleFamily::Piecewise { low: lo, high: hi }).unwrap();
            let rep = check_polycon(&phi, (0.125, 8.0));
            prop_assert!(rep.beta1 <= rep.beta2);
            let g = dyadic_grid(0.125, 8.0);
            for (i, &r) in g.iter().enumerate() {
                for &big in &g[i + 1..] {
                    let q = phi.eval(big) / phi.eval(r);
                    prop_assert!(q >= rep.c1 * (big / r).powf(rep.beta1) * (1.0 - 1e-12));
                    prop_assert!(q <= rep.c2 * (big / r).powf(rep.beta2) * (1.0 + 1e-12));
                }
            }
        }
    }
}
