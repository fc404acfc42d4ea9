use harnacklab_core::harnack::{equivalence_suite, SuiteConfig};
use harnacklab_core::heat::{check_conservative, default_times, hk_sweep, Domain, HeatOptions, HeatSolver, HkMode};
use harnacklab_core::kernel::make_kernel;
use harnacklab_core::montecarlo::{estimate, Estimand};
use harnacklab_core::space::{check_doubling, Metric};
use harnacklab_core::{KernelSpec, MetricMeasureSpace, ScaleFunction, Verdict};

#[test]
fn gasket_heat_tensor_is_a_markov_kernel() {
    let s = MetricMeasureSpace::gasket(3).unwrap();
    let phi = ScaleFunction::power(5.0_f64.ln() / 2.0_f64.ln());
    let k = make_kernel(&s, &phi, &KernelSpec::StableLike).unwrap();
    let solver = HeatSolver::new(&s, &k, Domain::Global, &HeatOptions::default()).unwrap();
    assert!(!solver.is_translation());
    let times = default_times(&s, &phi);
    let t = solver.tensor(&times).unwrap();
    let (dev, verdict) = check_conservative(&t, 1e-10);
    assert_eq!(verdict, Verdict::Pass, "mass deviation {dev}");
    for ti in 0..times.len() {
        for x in 0..s.len() {
            for y in 0..x {
                let (a, b) = (t.get(ti, x, y), t.get(ti, y, x));
                assert!(a >= 0.0 && (a - b).abs() <= 1e-10 * a.max(b));
            }
        }
    }
    let sweep = hk_sweep(&s, &phi, &t, false);
    assert!(sweep.report(&s, HkMode::Upper).revalidate());
    assert!(sweep.report(&s, HkMode::Lower).revalidate());
}

#[test]
fn gasket_doubling_is_finite() {
    let s = MetricMeasureSpace::gasket(4).unwrap();
    let [vd, rvd] = check_doubling(&s).to_reports(&s);
    assert!(vd.get("C_mu").unwrap().is_finite());
    assert!(rvd.get("d1").unwrap() > 0.0);
}

#[test]
fn perturbation_keeps_the_matrix() {
    let s = MetricMeasureSpace::torus(1, 32, Metric::L2).unwrap();
    let phi = ScaleFunction::power(1.0);
    let cfg = SuiteConfig::default();
    let a = equivalence_suite(&s, &phi, &make_kernel(&s, &phi, &KernelSpec::StableLike).unwrap(), &cfg).unwrap();
    let k = make_kernel(&s, &phi, &KernelSpec::PerturbedStable { c_bounds: [0.5, 2.0], seed: 21 }).unwrap();
    let b = equivalence_suite(&s, &phi, &k, &cfg).unwrap();
    assert_eq!(a.matrix, b.matrix);
    assert!(a.matrix.consistent);
    assert!(a.reports.iter().chain(&b.reports).all(|r| r.revalidate()));
}

#[test]
fn kernel_estimand_matches_heat_kernel() {
    let s = MetricMeasureSpace::torus(1, 16, Metric::L2).unwrap();
    let phi = ScaleFunction::power(1.0);
    let k = make_kernel(&s, &phi, &KernelSpec::StableLike).unwrap();
    let p = HeatSolver::new(&s, &k, Domain::Global, &HeatOptions::default()).unwrap().column(0.5, 3)[0];
    let e = estimate(&s, &k, Estimand::Kernel { t: 0.5, x: 0, y: 3 }, 40_000, 2).unwrap();
    assert!((e.mean - p).abs() < 4.0 * e.stderr, "{} vs {p}", e.mean);
}
