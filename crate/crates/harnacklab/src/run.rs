//! Building spaces and kernels from a config, scheduling checkers and
//! driving simulations.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use harnacklab_core::form::{check_csj, check_fk, check_pi, CsjParams, FkParams, PiParams};
use harnacklab_core::harnack::{
    assemble_matrix, check_ehi, check_phi, fit_holder, validate_constants, EhiParams, HolderMode, HolderParams,
    PhiParams,
};
use harnacklab_core::heat::{
    check_conservative, check_ephi, check_ndl, default_times, exit_time_green, hk_sweep, Domain, EphiParams,
    HeatOptions, HeatSolver, HeatTensor, HkMode, NdlParams,
};
use harnacklab_core::kernel::{check_j_bounds, check_tail_integral, check_ujs, make_kernel};
use harnacklab_core::montecarlo::{chunk_count, merge_chunks, verify_levy_system, Estimand, Estimate, Estimator};
use harnacklab_core::scale::{check_polycon, make_scale};
use harnacklab_core::space::{check_doubling, grid_label, Metric};
use harnacklab_core::{ConditionReport, Error, JumpKernel, MetricMeasureSpace, ScaleFunction, Verdict};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::TensorCache;
use crate::config::{CheckerId, ExperimentConfig, SpaceFamily};
use crate::emit::{Canonical, Drift, Meta, Refinement, SpaceSummary, SuiteReport};
use crate::{formats, CliError, Result};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; the rayon default when `None`.
    pub threads: Option<usize>,
    /// Run again one refinement level up.
    pub refine: bool,
    pub cache: Option<PathBuf>,
}

/// Errors raised while building the objects a config describes.
fn spec_error(e: Error) -> CliError {
    match e {
        Error::SizeExceeded { .. } => CliError::Core(e),
        e => CliError::Config(e.to_string()),
    }
}

fn required<T: Copy>(v: Option<T>, field: &str, family: &str) -> Result<T> {
    v.ok_or_else(|| CliError::Config(format!("space.{field} is required for family {family}")))
}

pub fn build_space(cfg: &ExperimentConfig) -> Result<MetricMeasureSpace> {
    let s = &cfg.space;
    let mut space = match s.family {
        SpaceFamily::Torus => MetricMeasureSpace::torus(
            required(s.dim, "dim", "torus")?,
            required(s.side, "side", "torus")?,
            s.metric.unwrap_or(Metric::L2),
        ),
        SpaceFamily::Gasket => MetricMeasureSpace::gasket(required(s.level, "level", "gasket")?),
        SpaceFamily::Custom => {
            let path =
                s.file.as_ref().ok_or_else(|| CliError::Config("space.file is required for family custom".into()))?;
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let (mu, d) = formats::parse_mmspace(&text)?;
            MetricMeasureSpace::custom(mu, d)
        }
    }
    .map_err(spec_error)?;
    if let Some([lo, hi]) = s.window {
        space.set_window(lo, hi).map_err(spec_error)?;
    }
    Ok(space)
}

/// Space, scale function and kernel described by a config.
pub struct Prepared {
    pub space: MetricMeasureSpace,
    pub phi: ScaleFunction,
    pub kernel: JumpKernel,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let space = build_space(cfg)?;
        Self::on(cfg, space)
    }

    fn on(cfg: &ExperimentConfig, space: MetricMeasureSpace) -> Result<Self> {
        let phi = make_scale(&cfg.scale).map_err(spec_error)?;
        let kernel = make_kernel(&space, &phi, &cfg.kernel).map_err(spec_error)?;
        Ok(Self { space, phi, kernel })
    }
}

/// Checker list with `suite` expanded and duplicates dropped.
pub fn expand(run: &[CheckerId]) -> Vec<CheckerId> {
    let mut out = Vec::new();
    for &id in run {
        let ids: &[CheckerId] = if id == CheckerId::Suite { &CheckerId::SUITE } else { std::slice::from_ref(&id) };
        for &c in ids {
            if !out.contains(&c) {
                out.push(c);
            }
        }
    }
    out
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    let c = &cfg.checkers;
    validate_constants(&c.phi.cylinder).map_err(|e| CliError::Config(format!("checkers.phi.cylinder: {e}")))?;
    let positive = [
        ("checkers.ndl.epsilon", c.ndl.epsilon),
        ("checkers.pi.kappa", c.pi.kappa),
        ("checkers.csj.c0", c.csj.c0),
        ("checkers.ehi.delta", c.ehi.delta),
        ("tolerances.conservative", cfg.tolerances.conservative),
        ("tolerances.refine_exponent", cfg.tolerances.refine_exponent),
    ];
    for (field, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Config(format!("{field} must be positive, got {v}")));
        }
    }
    if !(cfg.tolerances.refine_ratio >= 1.0) {
        return Err(CliError::Config(format!(
            "tolerances.refine_ratio must be at least 1, got {}",
            cfg.tolerances.refine_ratio
        )));
    }
    if c.ndl.epsilon > 1.0 || c.ehi.delta >= 1.0 {
        return Err(CliError::Config("checkers.ndl.epsilon must be <= 1 and checkers.ehi.delta < 1".into()));
    }
    if let Some(ts) = &c.hk.times {
        if ts.is_empty() || ts.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(CliError::Config("checkers.hk.times must be a nonempty list of positive times".into()));
        }
    }
    Ok(())
}

/// Shared global heat objects, built once per run.
struct Global {
    solver: Option<HeatSolver>,
    tensor: Option<HeatTensor>,
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    p: &'a Prepared,
    heat: HeatOptions,
    global: Global,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a ExperimentConfig, p: &'a Prepared, ids: &[CheckerId], cache: &TensorCache) -> Result<Self> {
        let heat = HeatOptions { max_points: cfg.checkers.hk.max_points, ..HeatOptions::default() };
        let needs_tensor = ids.iter().any(|id| matches!(id, CheckerId::Hk | CheckerId::Conservative));
        let needs_solver = needs_tensor || ids.contains(&CheckerId::Csj);
        let solver =
            if needs_solver { Some(HeatSolver::new(&p.space, &p.kernel, Domain::Global, &heat)?) } else { None };
        let tensor = match (&solver, needs_tensor) {
            (Some(s), true) => {
                let times = cfg.checkers.hk.times.clone().unwrap_or_else(|| default_times(&p.space, &p.phi));
                Some(cache.global_tensor(&p.space, &p.kernel, s, &times)?)
            }
            _ => None,
        };
        Ok(Self { cfg, p, heat, global: Global { solver, tensor } })
    }

    fn run(&self, id: CheckerId) -> Result<Vec<ConditionReport>> {
        let (s, phi, k) = (&self.p.space, &self.p.phi, &self.p.kernel);
        let c = &self.cfg.checkers;
        let seed = self.cfg.seed;
        let tensor = || self.global.tensor.as_ref().expect("tensor prepared");
        Ok(match id {
            CheckerId::Doubling => check_doubling(s).to_reports(s).to_vec(),
            CheckerId::Polycon => vec![check_polycon(phi, s.window()).to_report(phi, s.window())],
            CheckerId::JBounds => check_j_bounds(s, phi, k).to_reports().to_vec(),
            CheckerId::Ujs => vec![check_ujs(s, k, c.ujs.budget.max(1), seed).to_report(s)],
            CheckerId::Tail => vec![check_tail_integral(s, phi, k).to_report(s)],
            CheckerId::Fk => {
                vec![check_fk(s, phi, k, &FkParams { centers: c.fk.centers, seed, densities: c.fk.densities.clone() })]
            }
            CheckerId::Pi => vec![check_pi(s, phi, k, &PiParams { kappa: c.pi.kappa, centers: c.pi.centers, seed })],
            CheckerId::Csj => {
                let p = CsjParams { c0: c.csj.c0, centers: c.csj.centers, seed, functions: c.csj.functions };
                vec![check_csj(s, phi, k, &p, self.global.solver.as_ref())]
            }
            CheckerId::Hk => {
                let sweep = hk_sweep(s, phi, tensor(), false);
                [HkMode::Upper, HkMode::Lower, HkMode::DiagUpper].iter().map(|&m| sweep.report(s, m)).collect()
            }
            CheckerId::Ndl => {
                vec![check_ndl(
                    s,
                    phi,
                    k,
                    &NdlParams { epsilon: c.ndl.epsilon, centers: c.ndl.centers, seed, opts: self.heat.clone() },
                )?]
            }
            CheckerId::Ephi => vec![check_ephi(s, phi, k, &EphiParams { centers: c.ephi.centers, seed })?],
            CheckerId::Conservative => {
                let tol = self.cfg.tolerances.conservative;
                let (dev, verdict) = check_conservative(tensor(), tol);
                vec![ConditionReport::new("conservative", verdict, grid_label(s))
                    .constant("deviation", dev)
                    .tolerance("mass", tol)
                    .witness(harnacklab_core::report::Witness::new(
                        "deviation",
                        harnacklab_core::report::Relation::Le,
                        dev,
                    ))]
            }
            CheckerId::Ehi => {
                let p = EhiParams { delta: c.ehi.delta, centers: c.ehi.centers, budget: c.ehi.budget, seed };
                vec![check_ehi(s, phi, k, &p)?]
            }
            CheckerId::Phi | CheckerId::PhiPlus => {
                let p = PhiParams {
                    constants: c.phi.cylinder,
                    centers: c.phi.centers,
                    budget: c.phi.budget,
                    random: c.phi.random,
                    seed,
                    opts: self.heat.clone(),
                };
                vec![check_phi(s, phi, k, &p, id == CheckerId::PhiPlus)?.report]
            }
            CheckerId::Ehr | CheckerId::Phr => {
                let p =
                    HolderParams { budget: c.holder.budget, random: c.holder.random, centers: c.holder.centers, seed };
                let mode = if id == CheckerId::Ehr { HolderMode::Ehr } else { HolderMode::Phr };
                vec![fit_holder(s, phi, k, mode, &p)?]
            }
            CheckerId::Suite => unreachable!("expanded before scheduling"),
        })
    }
}

/// Reports of every checker in `ids`, in order, with per-checker wall times.
fn run_checkers(
    cfg: &ExperimentConfig,
    p: &Prepared,
    ids: &[CheckerId],
    cache: &TensorCache,
) -> Result<(Vec<ConditionReport>, BTreeMap<String, f64>)> {
    let runner = Runner::new(cfg, p, ids, cache)?;
    let timed: Vec<Result<(Vec<ConditionReport>, f64)>> = ids
        .par_iter()
        .map(|&id| {
            let start = Instant::now();
            runner.run(id).map(|r| (r, start.elapsed().as_secs_f64()))
        })
        .collect();
    let mut reports = Vec::new();
    let mut times = BTreeMap::new();
    for res in timed {
        let (rs, secs) = res?;
        for r in rs {
            times.insert(r.condition.clone(), secs);
            reports.push(r);
        }
    }
    Ok((reports, times))
}

const PARAMETERS: [&str; 7] = ["kappa", "epsilon", "delta", "K", "R_h", "C0", "drift"];
const EXPONENTS: [&str; 7] = ["theta", "d1", "d2", "beta1", "beta2", "nu", "growth"];

fn drifted(name: &str, a: f64, b: f64, ratio: f64, exponent: f64) -> bool {
    if EXPONENTS.contains(&name) {
        return !((a - b).abs() <= exponent) && !(a == b);
    }
    if a == b {
        return false;
    }
    if !(a.is_finite() && b.is_finite()) || a <= 0.0 || b <= 0.0 {
        return true;
    }
    a.max(b) / a.min(b) > ratio
}

/// Compares constants that exist at both levels; a passing coarse report with
/// an unstable constant is flagged.
fn compare(coarse: &mut [ConditionReport], fine: &[ConditionReport], ratio: f64, exponent: f64) -> Vec<Drift> {
    let mut out = Vec::new();
    for r in coarse.iter_mut() {
        let Some(f) = fine.iter().find(|f| f.condition == r.condition) else { continue };
        let mut moved = Vec::new();
        for (name, &a) in &r.constants {
            let base = name.split('(').next().unwrap_or(name);
            if PARAMETERS.contains(&base) || base.ends_with("_refined") {
                continue;
            }
            if let Some(&b) = f.constants.get(name) {
                if drifted(base, a, b, ratio, exponent) {
                    moved.push(Drift { condition: r.condition.clone(), constant: name.clone(), coarse: a, fine: b });
                }
            }
        }
        if !moved.is_empty() && r.verdict == Verdict::Pass {
            r.verdict = Verdict::Flagged;
            let names: Vec<&str> = moved.iter().map(|d| d.constant.as_str()).collect();
            r.notes.push(format!("unstable under refinement: {}", names.join(", ")));
        }
        out.extend(moved);
    }
    out
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

pub fn check(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SuiteReport> {
    let start = Instant::now();
    validate(cfg)?;
    let prepared = Prepared::new(cfg)?;
    let ids = expand(&cfg.checkers.run);
    let cache = TensorCache::new(opts.cache.clone());
    let pool = pool(opts.threads)?;
    let refine = opts.refine || cfg.output.refine;
    let (mut conditions, condition_times, refinement) = pool.install(|| -> Result<_> {
        let (mut conditions, times) = run_checkers(cfg, &prepared, &ids, &cache)?;
        let refinement = if refine {
            match prepared.space.refined() {
                Some(next) => {
                    let fine = Prepared::on(cfg, next.map_err(spec_error)?)?;
                    let (fine_reports, _) = run_checkers(cfg, &fine, &ids, &cache)?;
                    let tol = &cfg.tolerances;
                    let unstable = compare(&mut conditions, &fine_reports, tol.refine_ratio, tol.refine_exponent);
                    Some(Refinement { space: Some(SpaceSummary::of(&fine.space)), conditions: fine_reports, unstable })
                }
                None => Some(Refinement { space: None, conditions: Vec::new(), unstable: Vec::new() }),
            }
        } else {
            None
        };
        Ok((conditions, times, refinement))
    })?;
    for r in &mut conditions {
        debug_assert!(r.revalidate(), "{} witnesses", r.condition);
        r.notes.sort();
    }
    let matrix = assemble_matrix(&conditions);
    let mut config = cfg.clone();
    config.output.refine = refine;
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    Ok(SuiteReport {
        canonical: Canonical { config, space: SpaceSummary::of(&prepared.space), conditions, matrix, refinement },
        meta: Meta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
            threads: pool.current_num_threads(),
            wall_time: start.elapsed().as_secs_f64(),
            condition_times,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub config: ExperimentConfig,
    pub estimand: Estimand,
    pub estimate: Estimate,
    /// Green function value when the estimand is an untruncated exit time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levy: Option<ConditionReport>,
}

/// Horizon of the default exit-time estimand, in units of `phi(r_max)`.
pub const DEFAULT_HORIZON: f64 = 1000.0;

pub fn simulate(cfg: &ExperimentConfig, paths: usize, opts: &RunOptions) -> Result<Simulation> {
    if paths < 100 {
        return Err(CliError::Config(format!("--paths must be at least 100, got {paths}")));
    }
    let p = Prepared::new(cfg)?;
    let r_max = p.space.window().1;
    let estimand = cfg.simulate.estimand.clone().unwrap_or(Estimand::ExitTime {
        x0: 0,
        center: 0,
        radius: r_max,
        horizon: DEFAULT_HORIZON * p.phi.eval(r_max),
    });
    let est = Estimator::new(&p.space, &p.kernel, estimand.clone(), cfg.seed).map_err(spec_error)?;
    let pool = pool(opts.threads)?;
    let chunks: Vec<_> =
        pool.install(|| (0..chunk_count(paths)).into_par_iter().map(|c| est.chunk(c, paths)).collect());
    let estimate = merge_chunks(&chunks);
    let exact = match &estimand {
        Estimand::ExitTime { x0, center, radius, horizon }
            if cfg.simulate.estimand.is_none() || horizon.is_infinite() =>
        {
            Some(exit_time_green(&p.space, &p.kernel, &p.space.ball(*center, *radius))?[*x0])
        }
        _ => None,
    };
    let levy = match &cfg.simulate.levy {
        Some(l) => {
            let n = p.space.len();
            if l.x0 >= n || l.target.iter().any(|&y| y >= n) {
                return Err(CliError::Config(format!("simulate.levy points must lie in 0..{n}")));
            }
            let mut inside = vec![false; n];
            for &y in &l.target {
                inside[y] = true;
            }
            let f = move |_s: f64, _x: usize, y: usize| if inside[y] { 1.0 } else { 0.0 };
            Some(verify_levy_system(&p.space, &p.kernel, &f, l.x0, l.time, paths, cfg.seed)?.to_report(l.time))
        }
        None => None,
    };
    Ok(Simulation { config: cfg.clone(), estimand, estimate, exact, levy })
}
