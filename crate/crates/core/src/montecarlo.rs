//! Path-parallel Monte Carlo: expected costs, optimality perturbations and
//! the drift of the unaffected price.
//!
//! Path `i` of a run with master seed `s` draws from the ChaCha8 stream `i`
//! of seed `s`, and per-path results are reduced in index order, so every
//! estimate is bit-identical for any number of workers.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::hawkes::{simulate_with, EventPath, HawkesSpec};
use crate::market::{realized_cost, ImpactParams, MarketState, RateSegment, TradeSchedule};
use crate::pms::poisson_arbitrage;
use crate::strategy::{ow_schedule, ExecutionProblem, Mode, OptimalStrategy};

/// Environment variable capping the number of worker threads (`0` = auto).
pub const THREADS_ENV: &str = "MIHEXEC_THREADS";

/// Default policy discretization, as a fraction of `T`.
pub const DEFAULT_GRID_STEPS: usize = 2000;

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub ci95: [f64; 2],
}

impl Estimate {
    /// Sample mean and `std/√n`, both summed in slice order.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return domain(format!("need at least 2 samples, got {n}"));
        }
        if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                name: "Monte Carlo sample",
                value: *bad,
            });
        }
        let (mean, stderr) = if samples.iter().all(|&x| x == samples[0]) {
            (samples[0], 0.0)
        } else {
            let mean = samples.iter().sum::<f64>() / n as f64;
            let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
            (mean, (ss / (n - 1) as f64 / n as f64).sqrt())
        };
        Ok(Self {
            mean,
            stderr,
            n_paths: n,
            ci95: [mean - 1.96 * stderr, mean + 1.96 * stderr],
        })
    }

    /// `|mean − value| ≤ k·stderr`.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

/// RNG of path `index` under master seed `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Worker count requested through [`THREADS_ENV`], if any.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(n) => Ok(Some(n)),
            Err(_) => domain(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}")),
        },
    }
}

/// Runs `f` for paths `0..n_paths` in parallel and returns the results in
/// path order.
pub fn map_paths<T, F>(n_paths: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<T> + Sync,
{
    let run = || {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| f(&mut path_rng(seed, i)))
            .collect::<Result<Vec<T>>>()
    };
    match threads_from_env()? {
        None => run(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Domain(format!("cannot start {n} workers: {e}")))?
            .install(run),
    }
}

/// Maps a simulated path to the schedule to be costed.
pub type ScheduleFn = dyn Fn(&EventPath) -> Result<TradeSchedule> + Send + Sync;

/// Strategy whose expected cost is estimated.
#[derive(Clone)]
pub enum CostPolicy {
    /// The optimal strategy in feedback mode.
    Optimal,
    /// The OW schedule for the problem's `x₀`, `ρ`, `T`.
    Ow,
    /// The Poisson round trip with fraction `λ`.
    PoissonArb(f64),
    /// Any path-dependent schedule.
    Custom(Arc<ScheduleFn>),
}

impl CostPolicy {
    pub fn label(&self) -> String {
        match self {
            CostPolicy::Optimal => "optimal".into(),
            CostPolicy::Ow => "ow".into(),
            CostPolicy::PoissonArb(l) => format!("poisson_arb({l})"),
            CostPolicy::Custom(_) => "custom".into(),
        }
    }
}

impl fmt::Debug for CostPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn check_paths(n_paths: usize) -> Result<()> {
    if n_paths < 2 {
        return domain(format!("n_paths must be >= 2, got {n_paths}"));
    }
    Ok(())
}

/// Per-path realized costs of `policy`.
pub fn cost_samples(policy: &CostPolicy, problem: &ExecutionProblem, n_paths: usize, seed: u64, grid_step: f64) -> Result<Vec<f64>> {
    problem.validate()?;
    let strat = match policy {
        CostPolicy::Optimal => Some(OptimalStrategy::new(problem.clone())?),
        _ => None,
    };
    let ow = ow_schedule(problem.x0, problem.params.rho, problem.horizon);
    let init = MarketState::new(problem.s0, problem.d0, problem.x0);
    map_paths(n_paths, seed, |rng| {
        let path = simulate_with(&problem.spec, problem.horizon, rng)?;
        let schedule = match policy {
            CostPolicy::Optimal => strat.as_ref().expect("built above").schedule(&path, Mode::Feedback, grid_step)?,
            CostPolicy::Ow => ow.clone(),
            CostPolicy::PoissonArb(l) => poisson_arbitrage(*l, &path, &problem.params)?,
            CostPolicy::Custom(f) => f(&path)?,
        };
        realized_cost(&path, &schedule, init, &problem.params)
    })
}

pub fn estimate_cost(policy: &CostPolicy, problem: &ExecutionProblem, n_paths: usize, seed: u64, grid_step: f64) -> Result<Estimate> {
    check_paths(n_paths)?;
    Estimate::from_samples(&cost_samples(policy, problem, n_paths, seed, grid_step)?)
}

/// Round trip selling `u` in a block at `t1` and buying it back at `t2`
/// (negative `u` buys first).
pub fn block_round_trip(u: f64, t1: f64, t2: f64) -> TradeSchedule {
    TradeSchedule {
        event_blocks: vec![(t1, -u), (t2, u)],
        ..Default::default()
    }
}

/// Round trip selling `u` at a constant rate over `[a, b]` and buying it
/// back at a constant rate over `[c, d]`.
pub fn rate_round_trip(u: f64, (a, b): (f64, f64), (c, d): (f64, f64)) -> TradeSchedule {
    TradeSchedule {
        rate_segments: vec![
            RateSegment { start: a, end: b, rate: -u / (b - a) },
            RateSegment { start: c, end: d, rate: u / (d - c) },
        ],
        ..Default::default()
    }
}

/// Estimates of `E[C(X* + π)] − E[C(X*)]` for each round trip `π`, on
/// common paths. `X*` is the feedback schedule of the unperturbed run.
pub fn perturbation_test(
    problem: &ExecutionProblem,
    perturbations: &[TradeSchedule],
    n_paths: usize,
    seed: u64,
    grid_step: f64,
) -> Result<Vec<Estimate>> {
    check_paths(n_paths)?;
    for (i, p) in perturbations.iter().enumerate() {
        p.check_liquidates(0.0)
            .map_err(|e| Error::Domain(format!("perturbation {i} is not a round trip: {e}")))?;
    }
    let strat = OptimalStrategy::new(problem.clone())?;
    let init = MarketState::new(problem.s0, problem.d0, problem.x0);
    let per_path = map_paths(n_paths, seed, |rng| {
        let path = simulate_with(&problem.spec, problem.horizon, rng)?;
        let base = strat.schedule(&path, Mode::Feedback, grid_step)?;
        let base_cost = realized_cost(&path, &base, init, &problem.params)?;
        perturbations
            .iter()
            .map(|p| Ok(realized_cost(&path, &base.superpose(p), init, &problem.params)? - base_cost))
            .collect::<Result<Vec<f64>>>()
    })?;
    (0..perturbations.len())
        .map(|k| Estimate::from_samples(&per_path.iter().map(|d| d[k]).collect::<Vec<_>>()))
        .collect()
}

/// Least-squares fit `y = c s²` with its coefficient of determination.
pub fn quadratic_fit(scales: &[f64], values: &[f64]) -> (f64, f64) {
    let s4: f64 = scales.iter().map(|s| s.powi(4)).sum();
    let c = scales.iter().zip(values).map(|(s, y)| s * s * y).sum::<f64>() / s4;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let ss_res: f64 = scales.iter().zip(values).map(|(s, y)| (y - c * s * s).powi(2)).sum();
    let ss_tot: f64 = values.iter().map(|y| (y - mean).powi(2)).sum();
    (c, 1.0 - ss_res / ss_tot)
}

/// Drift of the unaffected price on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub t: Vec<f64>,
    /// Estimates of `E[P_t] − P₀`.
    pub drift: Vec<Estimate>,
    /// Sample `E[D_t²]`.
    pub mean_d2: Vec<f64>,
}

impl MartingaleReport {
    /// Whether every drift estimate is within `k` standard errors of 0.
    pub fn driftless(&self, k: f64) -> bool {
        self.drift.iter().all(|e| e.covers(0.0, k))
    }
}

/// Simulates `P_t − P₀` and `D_t` on `t_grid` with no trading, starting from
/// deviation `d0` and the intensities of `spec`.
pub fn martingale_diagnostic(
    spec: &HawkesSpec,
    params: &ImpactParams,
    d0: f64,
    t_grid: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<MartingaleReport> {
    check_paths(n_paths)?;
    spec.validate()?;
    params.validate()?;
    let horizon = match t_grid.last() {
        Some(&t) if t > 0.0 => t,
        _ => return domain("t_grid must be non-empty with a positive last point"),
    };
    if t_grid.windows(2).any(|w| w[1] < w[0]) || t_grid[0] < 0.0 {
        return domain("t_grid must be nondecreasing in [0, T]");
    }
    let per_path = map_paths(n_paths, seed, |rng| {
        let path = simulate_with(spec, horizon, rng)?;
        let mut state = MarketState::new(0.0, d0, 0.0);
        let p0 = state.price();
        let mut ev = 0;
        let mut out = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            while ev < path.events.len() && path.events[ev].tau <= t {
                let e = &path.events[ev];
                state.advance_to(e.tau, 0.0, params)?;
                state.apply_market_order(e.tau, e.signed_volume(), params)?;
                ev += 1;
            }
            state.advance_to(t, 0.0, params)?;
            out.push((state.price() - p0, state.d * state.d));
        }
        Ok(out)
    })?;
    let mut drift = Vec::with_capacity(t_grid.len());
    let mut mean_d2 = Vec::with_capacity(t_grid.len());
    for k in 0..t_grid.len() {
        let col: Vec<f64> = per_path.iter().map(|r| r[k].0).collect();
        drift.push(Estimate::from_samples(&col)?);
        mean_d2.push(per_path.iter().map(|r| r[k].1).sum::<f64>() / n_paths as f64);
    }
    Ok(MartingaleReport {
        t: t_grid.to_vec(),
        drift,
        mean_d2,
    })
}

/// Results artifact of a cost estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResults {
    pub policy: String,
    pub n_paths: usize,
    pub seed: u64,
    pub grid_step: f64,
    pub mean: f64,
    pub stderr: f64,
    pub ci95: [f64; 2],
    /// `𝓒` at the initial state, when the policy is the optimal one.
    pub value_function: Option<f64>,
    pub params_echo: ExecutionProblem,
}

impl McResults {
    pub fn new(policy: &CostPolicy, problem: &ExecutionProblem, seed: u64, grid_step: f64, est: &Estimate) -> Result<Self> {
        let value_function = match policy {
            CostPolicy::Optimal => Some(OptimalStrategy::new(problem.clone())?.initial_value()?),
            _ => None,
        };
        Ok(Self {
            policy: policy.label(),
            n_paths: est.n_paths,
            seed,
            grid_step,
            mean: est.mean,
            stderr: est.stderr,
            ci95: est.ci95,
            value_function,
            params_echo: problem.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use rand::Rng;

    use super::*;
    use crate::figure1;
    use crate::hawkes::MarkLaw;
    use crate::strategy::ow_expected_cost;

    #[test]
    fn estimate_arithmetic() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(e.mean, 2.5);
        assert_relative_eq!(e.stderr, (5.0f64 / 3.0 / 4.0).sqrt(), max_relative = 1e-15);
        assert_relative_eq!(e.ci95[1] - e.mean, 1.96 * e.stderr);
        let flat = Estimate::from_samples(&[0.1; 7]).unwrap();
        assert_eq!((flat.mean, flat.stderr), (0.1, 0.0));
        assert!(Estimate::from_samples(&[1.0]).is_err());
        assert!(Estimate::from_samples(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn streams_are_distinct_and_stable() {
        let a: u64 = path_rng(7, 0).random();
        let b: u64 = path_rng(7, 1).random();
        let c: u64 = path_rng(8, 0).random();
        assert!(a != b && a != c);
        assert_eq!(a, path_rng(7, 0).random::<u64>());
    }

    #[test]
    fn quiet_market_costs_exactly_ow() {
        let mut p = figure1::problem(25.0);
        p.spec = HawkesSpec::poisson(0.0, MarkLaw::Dirac { m1: 1.0 });
        p.d0 = 0.0;
        let e = estimate_cost(&CostPolicy::Optimal, &p, 8, 1, 1e-2).unwrap();
        assert_eq!(e.stderr, 0.0);
        assert_relative_eq!(e.mean, ow_expected_cost(p.x0, p.p0(), &p.params, 1.0), max_relative = 1e-10);
        assert!(estimate_cost(&CostPolicy::Optimal, &p, 1, 1, 1e-2).is_err());
    }

    #[test]
    fn results_do_not_depend_on_workers() {
        let p = figure1::problem(16.0);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_cost(&CostPolicy::Optimal, &p, 24, 99, 1e-2).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(3));
        assert_eq!(one, run(8));
    }

    #[test]
    fn zero_perturbation_is_free() {
        let p = figure1::problem(25.0);
        let diffs = perturbation_test(&p, &[TradeSchedule::default(), block_round_trip(0.0, 0.2, 0.4)], 6, 3, 1e-2).unwrap();
        for d in diffs {
            assert_eq!((d.mean, d.stderr), (0.0, 0.0));
        }
        let bad = TradeSchedule {
            event_blocks: vec![(0.3, 5.0)],
            ..Default::default()
        };
        assert!(perturbation_test(&p, &[bad], 6, 3, 1e-2).is_err());
    }

    #[test]
    fn perturbation_cost_is_quadratic_on_common_paths() {
        let p = figure1::problem(25.0);
        let base = block_round_trip(40.0, 0.3, 0.6);
        let scales = [1.0, 2.0, 4.0];
        let battery: Vec<TradeSchedule> = scales.iter().map(|&s| base.scaled(s)).collect();
        let d = perturbation_test(&p, &battery, 400, 5, 1e-2).unwrap();
        let means: Vec<f64> = d.iter().map(|e| e.mean).collect();
        let (c, r2) = quadratic_fit(&scales, &means);
        assert!(c > 0.0 && r2 > 0.99, "c={c} r2={r2} {means:?}");
    }

    #[test]
    fn quadratic_fit_is_exact_on_parabola() {
        let (c, r2) = quadratic_fit(&[1.0, 2.0, 3.0], &[2.0, 8.0, 18.0]);
        assert_relative_eq!(c, 2.0, max_relative = 1e-15);
        assert_relative_eq!(r2, 1.0);
    }

    #[test]
    fn round_trip_builders() {
        block_round_trip(3.0, 0.1, 0.2).check_liquidates(0.0).unwrap();
        let r = rate_round_trip(3.0, (0.1, 0.3), (0.5, 0.9));
        r.check_liquidates(0.0).unwrap();
        assert_relative_eq!(r.scaled(2.0).rate_segments[1].rate, 15.0, max_relative = 1e-15);
    }

    #[test]
    fn poisson_drift_reverts_deviation() {
        let spec = HawkesSpec::poisson(4.0, MarkLaw::Exponential { mean: 1.0 });
        let params = ImpactParams { q: 10.0, rho: 3.0, nu: 0.4, epsilon: 0.0 };
        let grid = [0.25, 0.5, 1.0];
        let r = martingale_diagnostic(&spec, &params, 0.5, &grid, 2000, 4).unwrap();
        for (t, e) in grid.iter().zip(&r.drift) {
            let want = -0.5 * (1.0 - (-3.0 * t).exp());
            assert!(e.covers(want, 4.0), "t={t}: {e:?} vs {want}");
            assert!(e.mean < 0.0);
        }
    }

    #[test]
    fn results_json_keys() {
        let p = figure1::problem(25.0);
        let e = Estimate::from_samples(&[1.0, 2.0]).unwrap();
        let r = McResults::new(&CostPolicy::Optimal, &p, 3, 0.01, &e).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for k in ["policy", "n_paths", "seed", "grid_step", "mean", "stderr", "ci95", "value_function", "params_echo"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["policy"], "optimal");
        assert_eq!(CostPolicy::PoissonArb(0.5).label(), "poisson_arb(0.5)");
    }
}
