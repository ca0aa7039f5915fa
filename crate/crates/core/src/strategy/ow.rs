use crate::market::{ImpactParams, RateSegment, TradeSchedule};

/// Block–rate–block liquidation of `x0`: blocks `−x0/(2+ρT)` at both ends
/// and the constant rate `−ρx0/(2+ρT)` in between.
pub fn ow_schedule(x0: f64, rho: f64, horizon: f64) -> TradeSchedule {
    let denom = 2.0 + rho * horizon;
    TradeSchedule {
        initial_block: -x0 / denom,
        event_blocks: Vec::new(),
        rate_segments: vec![RateSegment {
            start: 0.0,
            end: horizon,
            rate: -rho * x0 / denom,
        }],
        terminal_block: -x0 / denom,
    }
}

/// Expected cost of [`ow_schedule`] when the price is a martingale:
/// `−P₀x₀ + [(1−ε)/(2+ρT) + ε/2] x₀²/q`.
pub fn ow_expected_cost(x0: f64, p0: f64, params: &ImpactParams, horizon: f64) -> f64 {
    let ImpactParams { q, rho, epsilon, .. } = *params;
    -p0 * x0 + ((1.0 - epsilon) / (2.0 + rho * horizon) + 0.5 * epsilon) * x0 * x0 / q
}
