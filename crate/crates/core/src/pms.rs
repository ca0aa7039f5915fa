//! Price manipulation diagnostics, the Poisson round-trip arbitrage and the
//! conditional price drift.

use serde::{Deserialize, Serialize};

use crate::error::{domain, ensure_finite, Result};
use crate::hawkes::{EventPath, HawkesSpec};
use crate::market::{ImpactParams, TradeSchedule};
use crate::special_functions::zeta;
use crate::strategy::ExecutionProblem;

/// Relative tolerance of the structural equalities.
pub const STRUCTURAL_TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= STRUCTURAL_TOL * a.abs().max(b.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "no_PMS")]
    NoPms,
    #[serde(rename = "PMS_possible")]
    PmsPossible,
}

/// The four conditions under which the unaffected price is a martingale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MihmReport {
    pub beta_eq_rho: bool,
    /// `α = (1−ν)ρ`.
    pub alpha_eq_resilience: bool,
    pub phi_diff_linear: bool,
    /// `sup |(φs−φc)(x) − αx|` over the sampled normalized support.
    pub phi_diff_max_dev: f64,
    /// `qD₀ = m₁δ₀/ρ`.
    pub steady_state: bool,
    pub steady_state_residual: f64,
    pub verdict: Verdict,
}

/// Largest deviation of `φs − φc` from `αx` on the sampled support, and
/// whether it is within tolerance.
fn linearity(spec: &HawkesSpec, alpha: f64) -> (bool, f64) {
    let support = spec.marks.support_sample();
    let mut dev = 0.0f64;
    let mut scale = 0.0f64;
    for x in support {
        let lin = alpha * x;
        dev = dev.max((spec.excitation.diff(x) - lin).abs());
        scale = scale.max(lin.abs());
    }
    (dev <= STRUCTURAL_TOL * scale.max(1.0), dev)
}

pub fn mihm_diagnosis(problem: &ExecutionProblem) -> Result<MihmReport> {
    problem.validate()?;
    let spec = &problem.spec;
    let ImpactParams { q, rho, nu, .. } = problem.params;
    let alpha = spec.moments()?.alpha;
    let (phi_diff_linear, phi_diff_max_dev) = linearity(spec, alpha);
    let qd = q * problem.d0;
    let target = spec.marks.m1() * spec.delta0() / rho;
    let beta_eq_rho = close(spec.beta, rho);
    let alpha_eq_resilience = close(alpha, (1.0 - nu) * rho);
    let steady_state = close(qd, target);
    let all = beta_eq_rho && alpha_eq_resilience && phi_diff_linear && steady_state;
    let trivial = spec.marks.is_dirac_zero() && problem.d0 == 0.0;
    Ok(MihmReport {
        beta_eq_rho,
        alpha_eq_resilience,
        phi_diff_linear,
        phi_diff_max_dev,
        steady_state,
        steady_state_residual: qd - target,
        verdict: if all || trivial { Verdict::NoPms } else { Verdict::PmsPossible },
    })
}

/// `true` when no block posted in response to a market order can lower the
/// expected cost, which happens exactly when every reaction block of the
/// optimal strategy vanishes.
pub fn wpms_check(spec: &HawkesSpec, params: &ImpactParams) -> Result<bool> {
    spec.validate()?;
    params.validate()?;
    if spec.marks.is_dirac_zero() {
        return Ok(true);
    }
    let alpha = spec.moments()?.alpha;
    Ok(close(spec.beta, params.rho)
        && close(alpha, (1.0 - params.nu) * params.rho)
        && linearity(spec, alpha).0)
}

/// Balanced Poisson flows with `κ₀⁺ ≠ κ₀⁻` give a trivial arbitrage; this is
/// only flagged, not constructed.
pub fn poisson_imbalance(spec: &HawkesSpec) -> bool {
    spec.beta == 0.0 && spec.excitation.phi_s.is_zero() && spec.excitation.phi_c.is_zero() && spec.delta0() != 0.0
}

fn check_lambda(lambda: f64) -> Result<()> {
    ensure_finite("lambda", lambda)?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return domain(format!("lambda must lie in (0, 1), got {lambda}"));
    }
    Ok(())
}

/// Round trip that answers every market order `ΔN` with the block
/// `−λ(1−ν)ΔN/(1−ε)` and unwinds at `T`.
pub fn poisson_arbitrage(lambda: f64, path: &EventPath, params: &ImpactParams) -> Result<TradeSchedule> {
    check_lambda(lambda)?;
    params.validate()?;
    if path.beta != 0.0 || path.kappa0_plus != path.kappa0_minus {
        return domain("poisson_arbitrage needs a balanced Poisson path (beta = 0, kappa0+ = kappa0-)");
    }
    let scale = -lambda * (1.0 - params.nu) / (1.0 - params.epsilon);
    let event_blocks: Vec<(f64, f64)> = path
        .events
        .iter()
        .filter(|e| e.tau < path.horizon)
        .map(|e| (e.tau, scale * e.signed_volume()))
        .collect();
    let held: f64 = event_blocks.iter().map(|b| b.1).sum();
    Ok(TradeSchedule {
        initial_block: 0.0,
        event_blocks,
        rate_segments: Vec::new(),
        terminal_block: -held,
    })
}

/// Expected cost of [`poisson_arbitrage`]:
/// `2λ(1−λ) κ₀m₂(1−ν)²/(q(1−ε)) [(1−e^{−ρT})/ρ − T]`.
pub fn poisson_arbitrage_cost(lambda: f64, kappa0: f64, m2: f64, params: &ImpactParams, horizon: f64) -> Result<f64> {
    check_lambda(lambda)?;
    params.validate()?;
    let ImpactParams { q, rho, nu, epsilon } = *params;
    // (1−e^{−ρT})/ρ − T = T(ζ(ρT) − 1)
    let bracket = horizon * (zeta(rho * horizon) - 1.0);
    Ok(2.0 * lambda * (1.0 - lambda) * kappa0 * m2 * (1.0 - nu).powi(2) / (q * (1.0 - epsilon)) * bracket)
}

/// Optimal liquidation cost of a zero position under balanced Poisson flows
/// with initial deviation `d0`.
pub fn poisson_optimal_cost(d0: f64, kappa0: f64, m2: f64, params: &ImpactParams, horizon: f64) -> Result<f64> {
    params.validate()?;
    let ImpactParams { q, rho, nu, epsilon } = *params;
    let rt = rho * horizon;
    let scaled = -0.5 * rt / (2.0 + rt) * (q * d0).powi(2)
        - (1.0 - nu).powi(2) * 2.0 * kappa0 * m2 * (0.5 * horizon - (0.5 * rt).ln_1p() / rho);
    Ok(scaled / ((1.0 - epsilon) * q))
}

/// `E[P_{t+h} − P_t | D_t = d, δ_t = delta]` when the trader is inactive.
///
/// The conditional means solve `E[δ]' = −ηE[δ]` and
/// `E[D]' = −ρE[D] + (1−ν)(m₁/q)E[δ]`, and the price drifts at
/// `m₁E[δ]/q − ρE[D]`.
pub fn expected_price(d: f64, delta: f64, h: f64, problem: &ExecutionProblem) -> Result<f64> {
    ensure_finite("h", h)?;
    if h < 0.0 {
        return domain(format!("h must be >= 0, got {h}"));
    }
    let ImpactParams { q, rho, nu, .. } = problem.params;
    let eta = problem.spec.eta()?;
    let flow = problem.spec.marks.m1() * delta / q;
    Ok(nu * flow * h * zeta(eta * h) + (1.0 - nu) * flow * h * (-rho * h).exp() * zeta((eta - rho) * h)
        - rho * d * h * zeta(rho * h))
}
