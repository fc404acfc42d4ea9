//! Path simulation of the jump process and Monte Carlo estimators.
//!
//! Path `i` of a run with seed `s` draws from its own ChaCha8 stream, and
//! paths are grouped in fixed chunks whose moments are merged in chunk
//! order, so estimates do not depend on how chunks are scheduled.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::distr::weighted::WeightedIndex;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::JumpKernel;
use crate::report::{ConditionReport, Relation, Verdict, Witness};
use crate::sample::{stream, STREAM_PATHS};
use crate::space::MetricMeasureSpace;

pub const CHUNK: usize = 1024;
pub const DEFAULT_MAX_JUMPS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Terminal {
    Horizon,
    Exit,
    JumpCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub seed: u64,
    pub path: u64,
    /// Jump times, increasing and positive.
    pub jump_times: Vec<f64>,
    /// Visited states, starting with the initial one.
    pub states: Vec<usize>,
    pub terminal: Terminal,
    /// Time at which simulation stopped: the horizon, the exit time, or the last jump.
    pub end: f64,
}

impl PathSample {
    /// State occupied at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.jump_times.partition_point(|&s| s <= t);
        self.states[k]
    }
}

pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    stream(seed, STREAM_PATHS + path)
}

/// Holding rates and jump distributions of every state.
#[derive(Debug, Clone)]
pub struct Sampler {
    rates: Vec<f64>,
    holding: Vec<Exp<f64>>,
    targets: Vec<Vec<usize>>,
    choice: Vec<WeightedIndex<f64>>,
}

impl Sampler {
    pub fn new(space: &MetricMeasureSpace, kernel: &JumpKernel) -> Result<Self> {
        let n = space.len();
        let mut rates = Vec::with_capacity(n);
        let mut holding = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        let mut choice = Vec::with_capacity(n);
        for x in 0..n {
            let ys: Vec<usize> = (0..n).filter(|&y| y != x && kernel.get(x, y) > 0.0).collect();
            let w: Vec<f64> = ys.iter().map(|&y| kernel.get(x, y) * space.mu(y)).collect();
            let rate = kernel.lambda(x);
            choice.push(WeightedIndex::new(&w).map_err(|_| Error::DisconnectedKernel)?);
            holding.push(Exp::new(rate).map_err(|_| Error::DisconnectedKernel)?);
            rates.push(rate);
            targets.push(ys);
        }
        Ok(Self { rates, holding, targets, choice })
    }

    pub fn rate(&self, x: usize) -> f64 {
        self.rates[x]
    }

    /// Runs until `horizon`, the first jump out of `inside` (when given), or `max_jumps`.
    pub fn run(
        &self,
        x0: usize,
        horizon: f64,
        inside: Option<&[bool]>,
        max_jumps: usize,
        rng: &mut ChaCha8Rng,
    ) -> (Vec<f64>, Vec<usize>, Terminal, f64) {
        let mut t = 0.0;
        let mut x = x0;
        let mut times = Vec::new();
        let mut states = vec![x0];
        loop {
            if times.len() >= max_jumps {
                return (times, states, Terminal::JumpCap, t);
            }
            let hold = self.holding[x].sample(rng);
            if t + hold > horizon {
                return (times, states, Terminal::Horizon, horizon);
            }
            t += hold;
            x = self.targets[x][self.choice[x].sample(rng)];
            times.push(t);
            states.push(x);
            if let Some(m) = inside {
                if !m[x] {
                    return (times, states, Terminal::Exit, t);
                }
            }
        }
    }

    pub fn path(
        &self,
        x0: usize,
        horizon: f64,
        inside: Option<&[bool]>,
        max_jumps: usize,
        seed: u64,
        path: u64,
    ) -> PathSample {
        let mut rng = path_rng(seed, path);
        let (jump_times, states, terminal, end) = self.run(x0, horizon, inside, max_jumps, &mut rng);
        PathSample { seed, path, jump_times, states, terminal, end }
    }
}

/// Path 0 of the stream for `seed`.
pub fn simulate_path(
    space: &MetricMeasureSpace,
    kernel: &JumpKernel,
    x0: usize,
    horizon: f64,
    seed: u64,
) -> Result<PathSample> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidSpec("horizon must be positive".into()));
    }
    Ok(Sampler::new(space, kernel)?.path(x0, horizon, None, DEFAULT_MAX_JUMPS, seed, 0))
}

/// Count, mean and centered second moment.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn merge(self, o: Moments) -> Moments {
        if self.n == 0 {
            return o;
        }
        if o.n == 0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        let mean = self.mean + d * o.n as f64 / n as f64;
        let m2 = self.m2 + o.m2 + d * d * self.n as f64 * o.n as f64 / n as f64;
        Moments { n, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Estimand {
    /// `E^x0 [tau_B ^ horizon]` for `B = B(center, radius)`.
    ExitTime { x0: usize, center: usize, radius: f64, horizon: f64 },
    /// `P^x0 (X at the exit from domain = z)`.
    Hitting { x0: usize, domain: Vec<usize>, z: usize },
    /// `P^x (X_t = y) / mu(y)`.
    Kernel { t: f64, x: usize, y: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub paths: u64,
}

/// Prepared estimator; `chunk` evaluates one fixed block of paths.
pub struct Estimator<'a> {
    space: &'a MetricMeasureSpace,
    sampler: Sampler,
    what: Estimand,
    inside: Option<Vec<bool>>,
    seed: u64,
    max_jumps: usize,
}

impl<'a> Estimator<'a> {
    pub fn new(space: &'a MetricMeasureSpace, kernel: &JumpKernel, what: Estimand, seed: u64) -> Result<Self> {
        let n = space.len();
        let check = |x: usize| {
            if x < n {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!("point {x} out of range")))
            }
        };
        let inside = match &what {
            Estimand::ExitTime { x0, center, radius, horizon } => {
                check(*x0)?;
                check(*center)?;
                if !(*horizon > 0.0) {
                    return Err(Error::InvalidSpec("horizon must be positive".into()));
                }
                let mut m = vec![false; n];
                for x in space.ball(*center, *radius) {
                    m[x] = true;
                }
                if m.iter().all(|&b| b) {
                    return Err(Error::InvalidSpec("exit-time ball is the whole space".into()));
                }
                Some(m)
            }
            Estimand::Hitting { x0, domain, z } => {
                check(*x0)?;
                check(*z)?;
                let mut m = vec![false; n];
                for &x in domain {
                    check(x)?;
                    m[x] = true;
                }
                if m.iter().all(|&b| b) || m[*z] {
                    return Err(Error::InvalidSpec("hitting target must lie outside a proper domain".into()));
                }
                Some(m)
            }
            Estimand::Kernel { t, x, y } => {
                check(*x)?;
                check(*y)?;
                if !(*t > 0.0) {
                    return Err(Error::InvalidSpec("kernel time must be positive".into()));
                }
                None
            }
        };
        Ok(Self { space, sampler: Sampler::new(space, kernel)?, what, inside, seed, max_jumps: DEFAULT_MAX_JUMPS })
    }

    fn value(&self, path: u64) -> f64 {
        let mut rng = path_rng(self.seed, path);
        match &self.what {
            Estimand::ExitTime { x0, horizon, .. } => {
                let (_, _, _, end) = self.sampler.run(*x0, *horizon, self.inside.as_deref(), self.max_jumps, &mut rng);
                end
            }
            Estimand::Hitting { x0, z, .. } => {
                if !self.inside.as_ref().unwrap()[*x0] {
                    return if x0 == z { 1.0 } else { 0.0 };
                }
                let (_, states, term, _) =
                    self.sampler.run(*x0, f64::INFINITY, self.inside.as_deref(), self.max_jumps, &mut rng);
                if term == Terminal::Exit && states.last() == Some(z) {
                    1.0
                } else {
                    0.0
                }
            }
            Estimand::Kernel { t, x, y } => {
                let (_, states, _, _) = self.sampler.run(*x, *t, None, self.max_jumps, &mut rng);
                if states.last() == Some(y) {
                    1.0 / self.space.mu(*y)
                } else {
                    0.0
                }
            }
        }
    }

    /// Moments of chunk `c` out of `paths` total.
    pub fn chunk(&self, c: usize, paths: usize) -> Moments {
        let mut m = Moments::default();
        for p in c * CHUNK..((c + 1) * CHUNK).min(paths) {
            m.push(self.value(p as u64));
        }
        m
    }
}

pub fn chunk_count(paths: usize) -> usize {
    paths.div_ceil(CHUNK)
}

/// Chunk moments merged in chunk order.
pub fn merge_chunks(chunks: &[Moments]) -> Estimate {
    let m = chunks.iter().fold(Moments::default(), |a, &b| a.merge(b));
    Estimate { mean: m.mean, stderr: m.stderr(), paths: m.n }
}

pub fn estimate(
    space: &MetricMeasureSpace,
    kernel: &JumpKernel,
    what: Estimand,
    paths: usize,
    seed: u64,
) -> Result<Estimate> {
    if paths < 100 {
        return Err(Error::InvalidSpec("at least 100 paths are required".into()));
    }
    let est = Estimator::new(space, kernel, what, seed)?;
    let chunks: Vec<Moments> = (0..chunk_count(paths)).map(|c| est.chunk(c, paths)).collect();
    Ok(merge_chunks(&chunks))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevyReport {
    pub lhs: f64,
    pub rhs: f64,
    /// Mean and standard error of the paired difference.
    pub diff: f64,
    pub stderr: f64,
    pub paths: u64,
    pub verdict: Verdict,
}

impl LevyReport {
    pub fn to_report(&self, t: f64) -> ConditionReport {
        let z = if self.stderr > 0.0 {
            self.diff.abs() / self.stderr
        } else if self.diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        ConditionReport::new("levy", self.verdict, format!("{} paired paths, T = {t}", self.paths))
            .constant("lhs", self.lhs)
            .constant("rhs", self.rhs)
            .constant("diff", self.diff)
            .constant("stderr", self.stderr)
            .constant("z", z)
            .witness(Witness::new("z", Relation::Le, z))
            .tolerance("max_z", 3.0)
    }
}

/// Paired check of `E sum_{s <= T} f(s, X_s-, X_s) = E int_0^T sum_y f(s, X_s, y) J(X_s, y) mu(y) ds`.
/// The time integral uses Simpson's rule on each holding interval.
#[allow(clippy::too_many_arguments)]
pub fn verify_levy_system(
    space: &MetricMeasureSpace,
    kernel: &JumpKernel,
    f: &dyn Fn(f64, usize, usize) -> f64,
    x0: usize,
    t_end: f64,
    paths: usize,
    seed: u64,
) -> Result<LevyReport> {
    if !(t_end > 0.0) || paths < 2 {
        return Err(Error::InvalidSpec("Lévy check needs T > 0 and at least two paths".into()));
    }
    let sampler = Sampler::new(space, kernel)?;
    let n = space.len();
    let rate = |s: f64, x: usize| -> f64 {
        (0..n).filter(|&y| y != x).map(|y| f(s, x, y) * kernel.get(x, y) * space.mu(y)).sum()
    };
    let mut chunks = Vec::new();
    for c in 0..chunk_count(paths) {
        let (mut d, mut l, mut r) = (Moments::default(), Moments::default(), Moments::default());
        for p in c * CHUNK..((c + 1) * CHUNK).min(paths) {
            let path = sampler.path(x0, t_end, None, DEFAULT_MAX_JUMPS, seed, p as u64);
            let lhs: f64 =
                path.jump_times.iter().enumerate().map(|(k, &s)| f(s, path.states[k], path.states[k + 1])).sum();
            let mut rhs = 0.0;
            let mut a = 0.0;
            for (k, &x) in path.states.iter().enumerate() {
                let b = path.jump_times.get(k).copied().unwrap_or(t_end).min(t_end);
                if b > a {
                    rhs += (b - a) / 6.0 * (rate(a, x) + 4.0 * rate(0.5 * (a + b), x) + rate(b, x));
                }
                a = b;
            }
            d.push(lhs - rhs);
            l.push(lhs);
            r.push(rhs);
        }
        chunks.push((d, l, r));
    }
    let fold = |k: usize| {
        chunks.iter().fold(Moments::default(), |acc, c| {
            acc.merge(match k {
                0 => c.0,
                1 => c.1,
                _ => c.2,
            })
        })
    };
    let (d, l, r) = (fold(0), fold(1), fold(2));
    let ok = d.mean.abs() <= 3.0 * d.stderr();
    Ok(LevyReport {
        lhs: l.mean,
        rhs: r.mean,
        diff: d.mean,
        stderr: d.stderr(),
        paths: d.n,
        verdict: Verdict::from_bool(ok),
    })
}

/// Jump counts `x -> y` divided by the total time, from one long path.
pub fn empirical_flow(sampler: &Sampler, n: usize, x0: usize, horizon: f64, seed: u64) -> Vec<f64> {
    let path = sampler.path(x0, horizon, None, usize::MAX, seed, 0);
    let mut flow = vec![0.0; n * n];
    for k in 0..path.jump_times.len() {
        flow[path.states[k] * n + path.states[k + 1]] += 1.0 / horizon;
    }
    flow
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harnack::solve_harmonic;
    use crate::heat::{exit_time_green, Domain, HeatOptions, HeatSolver};
    use crate::kernel::{make_kernel, KernelSpec};
    use crate::scale::ScaleFunction;
    use crate::space::Metric;

    fn complete(n: usize) -> (MetricMeasureSpace, JumpKernel) {
        let d: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 1.0 }).collect();
        let s = MetricMeasureSpace::custom(vec![1.0; n], d).unwrap();
        let j: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 1.0 }).collect();
        let k = JumpKernel::from_matrix(&s, j, KernelSpec::StableLike, false).unwrap();
        (s, k)
    }

    fn stable(n: usize) -> (MetricMeasureSpace, JumpKernel) {
        let s = MetricMeasureSpace::torus(1, n, Metric::L2).unwrap();
        let k = make_kernel(&s, &ScaleFunction::power(1.0), &KernelSpec::StableLike).unwrap();
        (s, k)
    }

    #[test]
    fn two_state_alternates() {
        let (s, k) = complete(2);
        let p = simulate_path(&s, &k, 0, 50.0, 7).unwrap();
        assert!(p.states.len() > 10);
        for (i, &x) in p.states.iter().enumerate() {
            assert_eq!(x, i % 2);
        }
        assert!(p.jump_times.windows(2).all(|w| w[0] < w[1]) && p.jump_times[0] > 0.0);
        assert_eq!(p.terminal, Terminal::Horizon);
    }

    #[test]
    fn deterministic_paths() {
        let (s, k) = stable(16);
        let a = simulate_path(&s, &k, 3, 10.0, 11).unwrap();
        let b = simulate_path(&s, &k, 3, 10.0, 11).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&s, &k, 3, 10.0, 12).unwrap();
        assert_ne!(a, c);
        assert!(a.states.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn jump_cap_is_a_terminal_reason() {
        let (s, k) = stable(16);
        let sm = Sampler::new(&s, &k).unwrap();
        let p = sm.path(0, 1e9, None, 5, 1, 0);
        assert_eq!((p.terminal, p.jump_times.len()), (Terminal::JumpCap, 5));
    }

    #[test]
    fn poisson_jump_count() {
        let (s, k) = complete(4);
        let sm = Sampler::new(&s, &k).unwrap();
        let t = 2.0;
        let mut m = Moments::default();
        for p in 0..20_000 {
            m.push(sm.path(0, t, None, usize::MAX, 5, p).jump_times.len() as f64);
        }
        let lam_t = 3.0 * t;
        assert!((m.mean - lam_t).abs() <= 3.0 * (lam_t / 20_000.0).sqrt());
        assert!((m.variance() - lam_t).abs() < 0.3);
    }

    #[test]
    fn exit_time_singleton_and_green() {
        let (s, k) = stable(32);
        let e =
            estimate(&s, &k, Estimand::ExitTime { x0: 0, center: 0, radius: 0.5, horizon: f64::INFINITY }, 20_000, 1)
                .unwrap();
        assert!((e.mean - 1.0 / k.lambda(0)).abs() <= 3.0 * e.stderr);
        let green = exit_time_green(&s, &k, &s.ball(0, 3.0)).unwrap();
        let e =
            estimate(&s, &k, Estimand::ExitTime { x0: 0, center: 0, radius: 3.0, horizon: f64::INFINITY }, 20_000, 2)
                .unwrap();
        assert!((e.mean - green[0]).abs() <= 3.5 * e.stderr, "{} {} {}", e.mean, green[0], e.stderr);
        let capped =
            estimate(&s, &k, Estimand::ExitTime { x0: 0, center: 0, radius: 3.0, horizon: 0.5 }, 2_000, 2).unwrap();
        let longer =
            estimate(&s, &k, Estimand::ExitTime { x0: 0, center: 0, radius: 3.0, horizon: 1.0 }, 2_000, 2).unwrap();
        assert!(capped.mean <= longer.mean && capped.mean <= 0.5);
    }

    #[test]
    fn hitting_matches_harmonic() {
        let (s, k) = stable(16);
        let d = s.ball(0, 2.0);
        let z = 5;
        let mut g = vec![0.0; 16];
        g[z] = 1.0;
        let u = solve_harmonic(&s, &k, &d, &g).unwrap();
        let e = estimate(&s, &k, Estimand::Hitting { x0: 0, domain: d, z }, 20_000, 3).unwrap();
        assert!((e.mean - u[0]).abs() <= 3.0 * e.stderr, "{} {}", e.mean, u[0]);
    }

    #[test]
    fn kernel_mode_two_state() {
        let (s, k) = complete(2);
        let e = estimate(&s, &k, Estimand::Kernel { t: 1.0, x: 0, y: 1 }, 20_000, 4).unwrap();
        let exact = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((e.mean - exact).abs() <= 3.0 * e.stderr);
        let (s, k) = stable(16);
        let h = HeatSolver::new(&s, &k, Domain::Global, &HeatOptions::default()).unwrap();
        let p = h.kernel_matrix(0.7).unwrap()[(0, 2)];
        let e = estimate(&s, &k, Estimand::Kernel { t: 0.7, x: 0, y: 2 }, 20_000, 4).unwrap();
        assert!((e.mean - p).abs() <= 3.5 * e.stderr);
    }

    #[test]
    fn chunk_merge_is_schedule_free() {
        let (s, k) = stable(16);
        let what = Estimand::Kernel { t: 0.5, x: 0, y: 1 };
        let est = Estimator::new(&s, &k, what.clone(), 9).unwrap();
        let paths = 3000;
        let mut chunks: Vec<(usize, Moments)> =
            (0..chunk_count(paths)).rev().map(|c| (c, est.chunk(c, paths))).collect();
        chunks.sort_by_key(|c| c.0);
        let m: Vec<Moments> = chunks.into_iter().map(|c| c.1).collect();
        assert_eq!(merge_chunks(&m), estimate(&s, &k, what, paths, 9).unwrap());
        assert!(estimate(&s, &k, Estimand::Kernel { t: 0.5, x: 0, y: 1 }, 50, 9).is_err());
    }

    #[test]
    fn moments_merge() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut all = Moments::default();
        xs.iter().for_each(|&v| all.push(v));
        let (mut a, mut b) = (Moments::default(), Moments::default());
        xs[..37].iter().for_each(|&v| a.push(v));
        xs[37..].iter().for_each(|&v| b.push(v));
        let m = a.merge(b);
        assert!((m.mean - all.mean).abs() < 1e-14 && (m.m2 - all.m2).abs() < 1e-12);
    }

    #[test]
    fn levy_trivial_cases() {
        let (s, k) = complete(4);
        let zero = verify_levy_system(&s, &k, &|_, _, _| 0.0, 0, 1.0, 500, 1).unwrap();
        assert_eq!((zero.lhs, zero.rhs, zero.verdict), (0.0, 0.0, Verdict::Pass));
        let count = verify_levy_system(&s, &k, &|_, x, y| if x != y { 1.0 } else { 0.0 }, 0, 1.0, 20_000, 2).unwrap();
        assert!((count.rhs - 3.0).abs() < 1e-12);
        assert_eq!(count.verdict, Verdict::Pass);
        let timed = verify_levy_system(&s, &k, &|t, _, y| t * t * (y as f64 + 1.0), 0, 1.5, 20_000, 3).unwrap();
        assert_eq!(timed.verdict, Verdict::Pass, "{timed:?}");
    }

    #[test]
    fn flow_is_reversible() {
        let (s, k) = stable(16);
        let sm = Sampler::new(&s, &k).unwrap();
        let horizon = 20_000.0;
        let flow = empirical_flow(&sm, 16, 0, horizon, 8);
        for (x, y) in [(0, 1), (3, 5), (2, 10)] {
            let (a, b) = (flow[x * 16 + y], flow[y * 16 + x]);
            let sigma = ((a + b) / horizon).sqrt();
            assert!((a - b).abs() <= 4.0 * sigma, "{a} {b}");
            let expect = k.get(x, y) * s.mu(x) * s.mu(y) / s.total_mass();
            assert!((a - expect).abs() <= 0.1 * expect + 4.0 * sigma);
        }
    }
}
