//! Running the optimal strategy along an event path.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::explicit::ExplicitWalker;
use super::{ModelConstants, OptimalStrategy};
use crate::error::{domain, ensure_finite, Result};
use crate::hawkes::{EventPath, MarketEvent};
use crate::market::{realized_cost, MarketState, RateSegment, TradeSchedule};
use crate::special_functions::zeta;

/// How the optimal trades are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Restore the optimality identity from the observed state at `0⁺`,
    /// after every market order and at every grid point.
    Feedback,
    /// Follow the explicit formulas for `X*` built from the event record.
    Explicit,
}

/// One row of the strategy trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "dX_block")]
    pub dx_block: f64,
    pub rate: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "N")]
    pub n: f64,
    pub delta: f64,
}

/// Schedule, trajectory and realized cost of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub schedule: TradeSchedule,
    pub trajectory: Vec<TrajectoryRow>,
    pub cost: f64,
}

/// Writes `t,X,dX_block,rate,D,P,N,delta`.
pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(["t", "X", "dX_block", "rate", "D", "P", "N", "delta"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// State seen by a policy at a stop.
struct Observed {
    market: MarketState,
    delta: f64,
}

trait Policy {
    fn initial_block(&mut self, obs: &Observed) -> Result<f64>;
    /// Constant rate on `(obs.t, to]`, given `δ` at `to`.
    fn rate(&mut self, obs: &Observed, to: f64, delta_to: f64) -> Result<f64>;
    fn on_event(&mut self, event: &MarketEvent) -> Result<()>;
    fn reaction(&mut self, obs: &Observed) -> Result<f64>;
}

struct FeedbackPolicy<'a> {
    strat: &'a OptimalStrategy,
}

impl Policy for FeedbackPolicy<'_> {
    fn initial_block(&mut self, obs: &Observed) -> Result<f64> {
        let m = &obs.market;
        Ok(self.strat.restoring_block(0.0, m.x, m.d, obs.delta))
    }

    fn rate(&mut self, obs: &Observed, to: f64, delta_to: f64) -> Result<f64> {
        let ModelConstants { q, rho, epsilon, horizon, .. } = self.strat.k;
        let m = &obs.market;
        let h = to - m.t;
        let v = horizon - to;
        // identity at `to` with qD_to = qD e^{−ρh} + (1−ε) r h ζ(ρh)
        let z = zeta(rho * h);
        let target = self.strat.k_tilde(v) * delta_to
            - (1.0 + rho * v) * q * m.d * (-rho * h).exp()
            - (1.0 - epsilon) * m.x;
        Ok(target / (h * (1.0 - epsilon) * (1.0 + (1.0 + rho * v) * z)))
    }

    fn on_event(&mut self, _event: &MarketEvent) -> Result<()> {
        Ok(())
    }

    fn reaction(&mut self, obs: &Observed) -> Result<f64> {
        let m = &obs.market;
        Ok(self.strat.restoring_block(m.t, m.x, m.d, obs.delta))
    }
}

struct ExplicitPolicy<'a> {
    walker: ExplicitWalker<'a>,
}

impl Policy for ExplicitPolicy<'_> {
    fn initial_block(&mut self, obs: &Observed) -> Result<f64> {
        Ok(self.walker.x_at(0.0, obs.delta)? - obs.market.x)
    }

    fn rate(&mut self, obs: &Observed, to: f64, delta_to: f64) -> Result<f64> {
        let target = self.walker.x_at(to, delta_to)?;
        Ok((target - obs.market.x) / (to - obs.market.t))
    }

    fn on_event(&mut self, event: &MarketEvent) -> Result<()> {
        self.walker.on_event(event)
    }

    fn reaction(&mut self, obs: &Observed) -> Result<f64> {
        Ok(self.walker.x_at(obs.market.t, obs.delta)? - obs.market.x)
    }
}

/// Replays a given schedule, sampled on the same stops as the optimal
/// strategy.
struct ScheduledPolicy<'a> {
    schedule: &'a TradeSchedule,
}

impl Policy for ScheduledPolicy<'_> {
    fn initial_block(&mut self, _obs: &Observed) -> Result<f64> {
        Ok(self.schedule.initial_block)
    }

    fn rate(&mut self, obs: &Observed, to: f64, _delta_to: f64) -> Result<f64> {
        let mid = 0.5 * (obs.market.t + to);
        let segs = &self.schedule.rate_segments;
        let i = segs.partition_point(|s| s.end < mid);
        Ok(match segs.get(i) {
            Some(s) if s.start <= mid => s.rate,
            _ => 0.0,
        })
    }

    fn on_event(&mut self, _event: &MarketEvent) -> Result<()> {
        Ok(())
    }

    fn reaction(&mut self, obs: &Observed) -> Result<f64> {
        Ok(self
            .schedule
            .event_blocks
            .iter()
            .filter(|b| b.0 == obs.market.t)
            .map(|b| b.1)
            .sum())
    }
}

impl OptimalStrategy {
    /// Trajectory and cost of an arbitrary schedule on `path`, sampled on
    /// the grid of `grid_step` and at every event.
    pub fn follow(&self, path: &EventPath, schedule: &TradeSchedule, grid_step: f64) -> Result<Execution> {
        let grid = self.grid(grid_step)?;
        let (_, trajectory) = self.drive_with(path, &grid, ScheduledPolicy { schedule }, true)?;
        let p = &self.problem;
        let cost = realized_cost(path, schedule, MarketState::new(p.s0, p.d0, p.x0), &p.params)?;
        Ok(Execution {
            schedule: schedule.clone(),
            trajectory,
            cost,
        })
    }

    /// Uniform grid `t_k = kT/n`, `k = 1..=n`, with `n = ⌈T/grid_step⌉`.
    pub fn grid(&self, grid_step: f64) -> Result<Vec<f64>> {
        ensure_finite("grid_step", grid_step)?;
        if grid_step <= 0.0 {
            return domain(format!("grid_step must be > 0, got {grid_step}"));
        }
        let horizon = self.k.horizon;
        let n = ((horizon / grid_step * (1.0 - 1e-12)).ceil() as usize).max(1);
        Ok((1..=n).map(|i| i as f64 * horizon / n as f64).collect())
    }

    /// Trading schedule of the optimal strategy on `path`.
    pub fn schedule(&self, path: &EventPath, mode: Mode, grid_step: f64) -> Result<TradeSchedule> {
        Ok(self.drive(path, mode, grid_step, false)?.0)
    }

    /// Schedule, trajectory and realized cost on `path`.
    pub fn execute(&self, path: &EventPath, mode: Mode, grid_step: f64) -> Result<Execution> {
        let (schedule, trajectory) = self.drive(path, mode, grid_step, true)?;
        let p = &self.problem;
        let cost = realized_cost(path, &schedule, MarketState::new(p.s0, p.d0, p.x0), &p.params)?;
        Ok(Execution {
            schedule,
            trajectory,
            cost,
        })
    }

    fn drive(&self, path: &EventPath, mode: Mode, grid_step: f64, record: bool) -> Result<(TradeSchedule, Vec<TrajectoryRow>)> {
        if (path.horizon - self.k.horizon).abs() > 1e-12 * self.k.horizon {
            return domain(format!("path horizon {} differs from problem horizon {}", path.horizon, self.k.horizon));
        }
        let grid = self.grid(grid_step)?;
        match mode {
            Mode::Feedback => self.drive_with(path, &grid, FeedbackPolicy { strat: self }, record),
            Mode::Explicit => self.drive_with(
                path,
                &grid,
                ExplicitPolicy {
                    walker: ExplicitWalker::new(self, path),
                },
                record,
            ),
        }
    }

    fn drive_with<P: Policy>(
        &self,
        path: &EventPath,
        grid: &[f64],
        mut policy: P,
        record: bool,
    ) -> Result<(TradeSchedule, Vec<TrajectoryRow>)> {
        let p = &self.problem;
        let params = &p.params;
        let horizon = self.k.horizon;
        let beta = path.beta;
        let mut obs = Observed {
            market: MarketState::new(p.s0, p.d0, p.x0),
            delta: path.delta0(),
        };
        let mut n_cum = 0.0;
        let mut rows = Vec::new();
        let mut row = |obs: &Observed, n: f64, block: f64, rate: f64| {
            if record {
                rows.push(TrajectoryRow {
                    t: obs.market.t,
                    x: obs.market.x,
                    dx_block: block,
                    rate,
                    d: obs.market.d,
                    p: obs.market.price(),
                    n,
                    delta: obs.delta,
                });
            }
        };

        let initial = policy.initial_block(&obs)?;
        obs.market.apply_block(initial, params);
        row(&obs, 0.0, initial, 0.0);

        let mut schedule = TradeSchedule {
            initial_block: initial,
            event_blocks: Vec::new(),
            rate_segments: Vec::with_capacity(grid.len() + path.events.len()),
            terminal_block: 0.0,
        };
        let (mut gi, mut ei) = (0, 0);
        while gi < grid.len() || ei < path.events.len() {
            let next_grid = grid.get(gi).copied().unwrap_or(f64::INFINITY);
            let next_event = path.events.get(ei).map_or(f64::INFINITY, |e| e.tau);
            let to = next_grid.min(next_event);
            let from = obs.market.t;
            let delta_to = obs.delta * (-beta * (to - from)).exp();
            let rate = if to > from { policy.rate(&obs, to, delta_to)? } else { 0.0 };
            obs.market.advance_to(to, rate, params)?;
            obs.delta = delta_to;
            if to > from {
                schedule.rate_segments.push(RateSegment {
                    start: from,
                    end: to,
                    rate,
                });
            }
            let mut block = 0.0;
            if next_event == to {
                let e = &path.events[ei];
                obs.market.apply_market_order(to, e.signed_volume(), params)?;
                obs.delta += e.delta_i;
                n_cum += e.signed_volume();
                policy.on_event(e)?;
                if to < horizon {
                    block = policy.reaction(&obs)?;
                    obs.market.apply_block(block, params);
                    schedule.event_blocks.push((to, block));
                }
                ei += 1;
            }
            if next_grid == to {
                gi += 1;
            }
            row(&obs, n_cum, block, rate);
        }
        let terminal = -obs.market.x;
        schedule.terminal_block = terminal;
        obs.market.apply_block(terminal, params);
        row(&obs, n_cum, terminal, 0.0);
        Ok((schedule, rows))
    }
}
