//! The two-panel illustration: one simulated order flow, the optimal
//! strategy under a mean-reverting (`ρ = 25`) and a trend-following
//! (`ρ = 16`) resilience, plus the OW benchmark.

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::hawkes::{simulate, EventPath, ExcitationPair, HawkesSpec, MarkLaw, PowerSeries, PowerTerm};
use crate::market::ImpactParams;
use crate::strategy::{ow_schedule, write_trajectory_csv, Execution, ExecutionProblem, Mode, OptimalStrategy};

pub const Q: f64 = 100.0;
pub const HORIZON: f64 = 1.0;
pub const BETA: f64 = 20.0;
pub const KAPPA_INFTY: f64 = 12.0;
pub const KAPPA0: f64 = 60.0;
pub const NU: f64 = 0.3;
pub const EPSILON: f64 = 0.3;
pub const D0: f64 = 0.1;
pub const M1: f64 = 50.0;
pub const X0: f64 = -500.0;
pub const RHO_REVERTING: f64 = 25.0;
pub const RHO_TRENDING: f64 = 16.0;

/// `φs(y) = 1.2y^0.2 + 0.5y^0.7 + 14.4y`, `φc(y) = 1.2y^0.2 + 0.5y^0.7 + 0.4y`.
pub fn excitation() -> ExcitationPair {
    let with_linear = |coef: f64| {
        PowerSeries(vec![
            PowerTerm { coef: 1.2, power: 0.2 },
            PowerTerm { coef: 0.5, power: 0.7 },
            PowerTerm { coef, power: 1.0 },
        ])
    };
    ExcitationPair {
        phi_s: with_linear(14.4),
        phi_c: with_linear(0.4),
    }
}

pub fn spec() -> HawkesSpec {
    HawkesSpec {
        beta: BETA,
        kappa_infty: KAPPA_INFTY,
        kappa0_plus: KAPPA0,
        kappa0_minus: KAPPA0,
        marks: MarkLaw::Exponential { mean: M1 },
        excitation: excitation(),
    }
}

pub fn problem(rho: f64) -> ExecutionProblem {
    ExecutionProblem {
        x0: X0,
        horizon: HORIZON,
        d0: D0,
        s0: 0.0,
        params: ImpactParams {
            q: Q,
            rho,
            nu: NU,
            epsilon: EPSILON,
        },
        spec: spec(),
        stability: Default::default(),
        ode_step: None,
    }
}

/// Both panels and the benchmark, computed on one shared path.
#[derive(Debug, Clone)]
pub struct Figure1 {
    pub path: EventPath,
    pub reverting: Execution,
    pub trending: Execution,
    pub ow: Execution,
}

/// Share of reaction blocks whose sign is opposite to (`opposite = true`)
/// or equal to the triggering market order.
pub fn reaction_share(path: &EventPath, exec: &Execution, opposite: bool) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for &(t, dx) in &exec.schedule.event_blocks {
        let Some(e) = path.events.iter().find(|e| e.tau == t) else {
            continue;
        };
        if dx == 0.0 {
            continue;
        }
        total += 1;
        let same = dx.signum() == e.signed_volume().signum();
        if same != opposite {
            hits += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

pub fn run(seed: u64, grid_step: f64) -> Result<Figure1> {
    let path = simulate(&spec(), HORIZON, seed)?;
    let reverting = OptimalStrategy::new(problem(RHO_REVERTING))?.execute(&path, Mode::Feedback, grid_step)?;
    let trending = OptimalStrategy::new(problem(RHO_TRENDING))?.execute(&path, Mode::Feedback, grid_step)?;
    let ow = {
        let p = problem(RHO_REVERTING);
        let schedule = ow_schedule(p.x0, p.params.rho, p.horizon);
        OptimalStrategy::new(p)?.follow(&path, &schedule, grid_step)?
    };
    Ok(Figure1 {
        path,
        reverting,
        trending,
        ow,
    })
}

impl Figure1 {
    /// Writes `figure1_rho25.csv`, `figure1_rho16.csv`, `figure1_ow.csv` and
    /// `figure1_events.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, exec) in [
            ("figure1_rho25.csv", &self.reverting),
            ("figure1_rho16.csv", &self.trending),
            ("figure1_ow.csv", &self.ow),
        ] {
            let file = dir.join(name);
            write_trajectory_csv(&exec.trajectory, std::fs::File::create(&file)?)?;
            written.push(file);
        }
        let file = dir.join("figure1_events.csv");
        self.path.write_csv(std::fs::File::create(&file)?)?;
        written.push(file);
        Ok(written)
    }
}
