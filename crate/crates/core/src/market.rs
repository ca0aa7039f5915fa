//! Price state under market orders and strategy trades, and the realized
//! cost of a trading schedule.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, ensure_finite, Error, Result};
use crate::hawkes::EventPath;
use crate::special_functions::{omega, zeta};

/// Depth and impact parameters of the order book.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactParams {
    /// Depth (assets per unit of price).
    pub q: f64,
    /// Resilience rate of the price deviation.
    pub rho: f64,
    /// Permanent fraction of market-order impact.
    pub nu: f64,
    /// Permanent fraction of strategy-order impact.
    pub epsilon: f64,
}

impl ImpactParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("q", self.q), ("rho", self.rho), ("nu", self.nu), ("epsilon", self.epsilon)] {
            ensure_finite(name, v)?;
        }
        if self.q <= 0.0 {
            return domain(format!("q must be > 0, got {}", self.q));
        }
        if self.rho <= 0.0 {
            return domain(format!("rho must be > 0, got {}", self.rho));
        }
        if !(0.0..=1.0).contains(&self.nu) {
            return domain(format!("nu must lie in [0, 1], got {}", self.nu));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return domain(format!("epsilon must lie in [0, 1), got {}", self.epsilon));
        }
        Ok(())
    }
}

/// `(t, S, D, X)` plus the running cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub t: f64,
    pub s: f64,
    pub d: f64,
    pub x: f64,
    pub realized_cost: f64,
}

impl MarketState {
    pub fn new(s0: f64, d0: f64, x0: f64) -> Self {
        Self {
            t: 0.0,
            s: s0,
            d: d0,
            x: x0,
            realized_cost: 0.0,
        }
    }

    /// `P = S + D`.
    pub fn price(&self) -> f64 {
        self.s + self.d
    }

    /// Trades at constant `rate` for a duration `h`, updating the state
    /// exactly; returns `∫ P dX` over the step.
    pub fn evolve(&mut self, h: f64, rate: f64, params: &ImpactParams) -> Result<f64> {
        ensure_finite("h", h)?;
        ensure_finite("rate", rate)?;
        if h < 0.0 {
            return domain(format!("evolve step must be >= 0, got {h}"));
        }
        if h == 0.0 {
            return Ok(0.0);
        }
        let ImpactParams { q, rho, epsilon, .. } = *params;
        let y = rho * h;
        let (z, w) = (zeta(y), omega(y));
        // ∫S = S h + ε r h²/(2q), ∫D = D h ζ + (1−ε) r h² ω / q
        let cost = rate
            * (self.s * h
                + epsilon * rate * h * h / (2.0 * q)
                + self.d * h * z
                + (1.0 - epsilon) * rate * h * h * w / q);
        self.d = self.d * (-y).exp() + (1.0 - epsilon) * rate * h * z / q;
        self.s += epsilon * rate * h / q;
        self.x += rate * h;
        self.t += h;
        self.realized_cost += cost;
        Ok(cost)
    }

    /// Advances to `t` at constant `rate`.
    pub fn advance_to(&mut self, t: f64, rate: f64, params: &ImpactParams) -> Result<f64> {
        if t < self.t {
            return Err(Error::TimeRegression {
                state_t: self.t,
                requested: t,
            });
        }
        let h = t - self.t;
        let cost = self.evolve(h, rate, params)?;
        // land exactly on t regardless of round-off in the accumulation
        self.t = t;
        Ok(cost)
    }

    /// Decays `D` up to `tau` (no trading), then applies the market order.
    pub fn apply_market_order(&mut self, tau: f64, signed_volume: f64, params: &ImpactParams) -> Result<()> {
        ensure_finite("signed volume", signed_volume)?;
        self.advance_to(tau, 0.0, params)?;
        self.s += params.nu * signed_volume / params.q;
        self.d += (1.0 - params.nu) * signed_volume / params.q;
        Ok(())
    }

    /// Executes a block of `dx` assets at the current price; returns its
    /// cost `P·dx + dx²/(2q)`.
    pub fn apply_block(&mut self, dx: f64, params: &ImpactParams) -> f64 {
        let cost = self.price() * dx + dx * dx / (2.0 * params.q);
        self.s += params.epsilon * dx / params.q;
        self.d += (1.0 - params.epsilon) * dx / params.q;
        self.x += dx;
        self.realized_cost += cost;
        cost
    }
}

/// Constant trading rate on `(start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSegment {
    pub start: f64,
    pub end: f64,
    pub rate: f64,
}

/// A liquidation schedule with càglàd semantics: every block at time `τ`
/// executes after any market order at `τ`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TradeSchedule {
    pub initial_block: f64,
    /// `(time, assets)` blocks in `(0, T]`, nondecreasing in time.
    pub event_blocks: Vec<(f64, f64)>,
    /// Sorted, non-overlapping rate segments inside `[0, T]`.
    pub rate_segments: Vec<RateSegment>,
    pub terminal_block: f64,
}

impl TradeSchedule {
    /// Net traded volume.
    pub fn total_traded(&self) -> f64 {
        self.initial_block
            + self.event_blocks.iter().map(|b| b.1).sum::<f64>()
            + self.rate_segments.iter().map(|s| s.rate * (s.end - s.start)).sum::<f64>()
            + self.terminal_block
    }

    /// The same trades multiplied by `k`.
    pub fn scaled(&self, k: f64) -> TradeSchedule {
        TradeSchedule {
            initial_block: k * self.initial_block,
            event_blocks: self.event_blocks.iter().map(|&(t, x)| (t, k * x)).collect(),
            rate_segments: self
                .rate_segments
                .iter()
                .map(|s| RateSegment { rate: k * s.rate, ..*s })
                .collect(),
            terminal_block: k * self.terminal_block,
        }
    }

    /// Schedule trading both `self` and `other`. At a shared block time the
    /// blocks of `self` come first.
    pub fn superpose(&self, other: &TradeSchedule) -> TradeSchedule {
        let mut event_blocks = Vec::with_capacity(self.event_blocks.len() + other.event_blocks.len());
        let (mut i, mut j) = (0, 0);
        while i < self.event_blocks.len() || j < other.event_blocks.len() {
            let take_self = match (self.event_blocks.get(i), other.event_blocks.get(j)) {
                (Some(a), Some(b)) => a.0 <= b.0,
                (Some(_), None) => true,
                _ => false,
            };
            if take_self {
                event_blocks.push(self.event_blocks[i]);
                i += 1;
            } else {
                event_blocks.push(other.event_blocks[j]);
                j += 1;
            }
        }

        let mut cuts: Vec<f64> = self
            .rate_segments
            .iter()
            .chain(&other.rate_segments)
            .flat_map(|s| [s.start, s.end])
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let rate_at = |segs: &[RateSegment], k: &mut usize, mid: f64| {
            while *k < segs.len() && segs[*k].end < mid {
                *k += 1;
            }
            match segs.get(*k) {
                Some(s) if s.start <= mid && mid <= s.end => s.rate,
                _ => 0.0,
            }
        };
        let (mut a, mut b) = (0, 0);
        let mut rate_segments = Vec::with_capacity(cuts.len());
        for w in cuts.windows(2) {
            if w[1] <= w[0] {
                continue;
            }
            let mid = 0.5 * (w[0] + w[1]);
            let rate = rate_at(&self.rate_segments, &mut a, mid) + rate_at(&other.rate_segments, &mut b, mid);
            if rate != 0.0 {
                rate_segments.push(RateSegment {
                    start: w[0],
                    end: w[1],
                    rate,
                });
            }
        }
        TradeSchedule {
            initial_block: self.initial_block + other.initial_block,
            event_blocks,
            rate_segments,
            terminal_block: self.terminal_block + other.terminal_block,
        }
    }

    fn gross_traded(&self) -> f64 {
        self.initial_block.abs()
            + self.event_blocks.iter().map(|b| b.1.abs()).sum::<f64>()
            + self.rate_segments.iter().map(|s| (s.rate * (s.end - s.start)).abs()).sum::<f64>()
            + self.terminal_block.abs()
    }

    /// Checks `x0 + Σ trades = 0` up to round-off.
    pub fn check_liquidates(&self, x0: f64) -> Result<()> {
        let residual = x0 + self.total_traded();
        let scale = x0.abs() + self.gross_traded();
        if residual.abs() > 1e-9 * scale.max(1.0) {
            return Err(Error::NotLiquidating { residual });
        }
        Ok(())
    }

    fn validate(&self, horizon: f64) -> Result<()> {
        ensure_finite("initial block", self.initial_block)?;
        ensure_finite("terminal block", self.terminal_block)?;
        let mut last = 0.0;
        for &(t, dx) in &self.event_blocks {
            ensure_finite("block", dx)?;
            if !(t >= last && t > 0.0 && t <= horizon) {
                return domain(format!("block time {t} out of order or outside (0, {horizon}]"));
            }
            last = t;
        }
        let mut last = 0.0;
        for s in &self.rate_segments {
            ensure_finite("rate", s.rate)?;
            if !(s.start >= last && s.end >= s.start && s.end <= horizon) {
                return domain(format!("rate segment [{}, {}] out of order or outside [0, {horizon}]", s.start, s.end));
            }
            last = s.end;
        }
        Ok(())
    }
}

/// Kind of a replay trace row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Market,
    Block,
    Rate,
    Terminal,
}

/// One row of the replay trace, as written to CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub event_kind: TraceKind,
    #[serde(rename = "dN")]
    pub dn: f64,
    #[serde(rename = "dX")]
    pub dx: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "X")]
    pub x: f64,
    pub cost_increment: f64,
}

impl TraceRow {
    fn new(state: &MarketState, kind: TraceKind, dn: f64, dx: f64, cost: f64) -> Self {
        Self {
            t: state.t,
            event_kind: kind,
            dn,
            dx,
            s: state.s,
            d: state.d,
            p: state.price(),
            x: state.x,
            cost_increment: cost,
        }
    }
}

/// Result of replaying a schedule against a path.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub cost: f64,
    pub final_state: MarketState,
    pub trace: Vec<TraceRow>,
}

/// Realized cost `C(X)` of a schedule on a path.
pub fn realized_cost(path: &EventPath, schedule: &TradeSchedule, init: MarketState, params: &ImpactParams) -> Result<f64> {
    Ok(replay(path, schedule, init, params, false)?.cost)
}

/// Replays the interleaving of market orders and schedule trades.
///
/// At a shared timestamp the market order comes first and the strategy
/// block second; the terminal block is executed last at `T`.
pub fn replay(
    path: &EventPath,
    schedule: &TradeSchedule,
    init: MarketState,
    params: &ImpactParams,
    record_trace: bool,
) -> Result<Replay> {
    params.validate()?;
    let horizon = path.horizon;
    schedule.validate(horizon)?;
    schedule.check_liquidates(init.x)?;
    let mut state = init;
    let mut trace = Vec::new();
    let mut record = |row: TraceRow| {
        if record_trace {
            trace.push(row);
        }
    };

    let cost = state.apply_block(schedule.initial_block, params);
    if schedule.initial_block != 0.0 {
        record(TraceRow::new(&state, TraceKind::Block, 0.0, schedule.initial_block, cost));
    }

    let mut knots: Vec<f64> = Vec::with_capacity(2 * schedule.rate_segments.len() + path.events.len() + schedule.event_blocks.len() + 1);
    knots.extend(path.events.iter().map(|e| e.tau));
    knots.extend(schedule.event_blocks.iter().map(|b| b.0));
    for s in &schedule.rate_segments {
        knots.push(s.start);
        knots.push(s.end);
    }
    knots.push(horizon);
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let (mut ev, mut bl, mut seg) = (0, 0, 0);
    for &t in &knots {
        if t <= state.t {
            // only t = 0 can coincide with the start
        } else {
            while seg < schedule.rate_segments.len() && schedule.rate_segments[seg].end <= state.t {
                seg += 1;
            }
            let rate = match schedule.rate_segments.get(seg) {
                Some(s) if s.start <= state.t && t <= s.end => s.rate,
                _ => 0.0,
            };
            let h = t - state.t;
            let cost = state.advance_to(t, rate, params)?;
            if rate != 0.0 {
                record(TraceRow::new(&state, TraceKind::Rate, 0.0, rate * h, cost));
            }
        }
        while ev < path.events.len() && path.events[ev].tau == t {
            let dn = path.events[ev].signed_volume();
            state.apply_market_order(t, dn, params)?;
            record(TraceRow::new(&state, TraceKind::Market, dn, 0.0, 0.0));
            ev += 1;
        }
        while bl < schedule.event_blocks.len() && schedule.event_blocks[bl].0 == t {
            let dx = schedule.event_blocks[bl].1;
            let cost = state.apply_block(dx, params);
            record(TraceRow::new(&state, TraceKind::Block, 0.0, dx, cost));
            bl += 1;
        }
    }

    // −P_T X_T + X_T²/(2q) is the cost of the block −X_T
    let terminal = -state.x;
    let cost = state.apply_block(terminal, params);
    record(TraceRow::new(&state, TraceKind::Terminal, 0.0, terminal, cost));
    Ok(Replay {
        cost: state.realized_cost - init.realized_cost,
        final_state: state,
        trace,
    })
}

/// Writes `t,event_kind,dN,dX,S,D,P,X,cost_increment`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(["t", "event_kind", "dN", "dX", "S", "D", "P", "X", "cost_increment"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
