//! Explicit form of the optimal strategy.
//!
//! Along the optimal trajectory `qD` moves between events only through the
//! order-flow imbalance: `d(qD_t) = −m₁ φ_η(t) δ_t dt`. Integrating with
//! `δ_u = e^{−βu}(δ₀ + Θ_{χ_u})` splits `∫ φ_η δ` into the pieces
//! `Φ_η(s, t) = ∫ₛᵗ φ_η(u) e^{−βu} du`, which are closed forms in `L`.

use serde::{Deserialize, Serialize};

use super::{ModelConstants, OptimalStrategy};
use crate::error::{domain, ensure_finite, Result};
use crate::hawkes::{EventPath, MarketEvent};
use crate::quadrature;
use crate::special_functions::{omega, scaled_l, zeta};

/// `e^{−βs} − e^{−βt}` without cancellation.
fn exp_gap(beta: f64, s: f64, t: f64) -> f64 {
    -(-beta * s).exp() * (-beta * (t - s)).exp_m1()
}

/// `(e^{−βs} − e^{−βt})/β`, continuous at `β = 0`.
fn exp_gap_over_beta(beta: f64, s: f64, t: f64) -> f64 {
    (-beta * s).exp() * (t - s) * zeta(beta * (t - s))
}

fn phi_with(k: &ModelConstants, eta: f64, t: f64) -> f64 {
    let ModelConstants { rho, nu, beta, horizon, .. } = *k;
    let v = horizon - t;
    let y = eta * v;
    let z = zeta(y);
    let big_k = 2.0 + rho * v * (1.0 + z + nu * rho * v * omega(y));
    (1.0 + (-y).exp() + nu * rho * v * z + beta / rho * big_k) / (2.0 * (2.0 + rho * v))
}

impl OptimalStrategy {
    /// `φ_η(t)`.
    pub fn phi_eta(&self, t: f64) -> f64 {
        phi_with(&self.k, self.k.eta, t)
    }

    /// `Φ₀(s, t)`: closed form of `∫ₛᵗ φ₀(u) e^{−βu} du`, where `φ₀` is
    /// `φ_η` with `η` set to zero.
    pub fn big_phi_0(&self, s: f64, t: f64) -> f64 {
        let ModelConstants { rho, nu, beta, horizon, .. } = self.k;
        let lw = -beta * horizon;
        let l_diff = scaled_l(rho, beta, horizon - s, lw) - scaled_l(rho, beta, horizon - t, lw);
        (beta / rho + 0.5 * nu * (0.5 - beta / rho)) * exp_gap_over_beta(beta, s, t)
            + (1.0 - nu) * (1.0 - beta / rho) / rho * l_diff
            + 0.25 * nu * ((horizon - s) * (-beta * s).exp() - (horizon - t) * (-beta * t).exp())
    }

    /// `Φ_η(s, t)` from the `1/η` closed form (requires `η ≠ 0`).
    fn big_phi_generic(&self, s: f64, t: f64) -> f64 {
        let ModelConstants { rho, nu, beta, alpha, eta, horizon, .. } = self.k;
        let lw = -beta * horizon;
        let tail = beta / eta * (1.0 - nu * rho / eta);
        let w_beta = (1.0 + nu * (rho - 2.0 * beta) / eta + tail) / (2.0 * rho);
        let w_alpha = (1.0 - nu * rho / eta - tail) / (2.0 * rho);
        let l_beta = scaled_l(rho, beta, horizon - s, lw) - scaled_l(rho, beta, horizon - t, lw);
        let l_alpha = scaled_l(rho, alpha, horizon - s, lw) - scaled_l(rho, alpha, horizon - t, lw);
        0.5 * (1.0 / rho + nu / eta) * exp_gap(beta, s, t) + w_beta * l_beta + w_alpha * l_alpha
    }

    /// `Φ_η(s, t) = ∫ₛᵗ φ_η(u) e^{−βu} du`.
    ///
    /// For `|η|T` below `eta_threshold` the `1/η` form loses too many
    /// digits; there `Φ₀` plus the quadrature of the small remainder
    /// `(φ_η − φ₀) e^{−βu}` is used instead.
    pub fn big_phi(&self, s: f64, t: f64) -> Result<f64> {
        ensure_finite("s", s)?;
        ensure_finite("t", t)?;
        if !(0.0 <= s && s <= t && t <= self.k.horizon) {
            return domain(format!("need 0 <= s <= t <= T, got s={s}, t={t}"));
        }
        if s == t {
            return Ok(0.0);
        }
        let eta = self.k.eta;
        if (eta * self.k.horizon).abs() >= self.problem.stability.eta_threshold && eta != 0.0 {
            return Ok(self.big_phi_generic(s, t));
        }
        let base = self.big_phi_0(s, t);
        if eta == 0.0 {
            return Ok(base);
        }
        let k = self.k;
        let cfg = &self.problem.stability;
        let correction = quadrature::integrate_to(
            |u| (phi_with(&k, eta, u) - phi_with(&k, 0.0, u)) * (-k.beta * u).exp(),
            s,
            t,
            cfg.quad_rel_tol,
            cfg.quad_rel_tol * base.abs(),
            cfg.max_quad_subdivisions,
        )?;
        Ok(base + correction)
    }

    /// `∫₀ᵗ φ_η(u) δ_u du` on a path, summed piecewise between events.
    pub fn int_phi_delta(&self, path: &EventPath, t: f64) -> Result<f64> {
        ensure_finite("t", t)?;
        if !(0.0..=path.horizon).contains(&t) {
            return domain(format!("t={t} outside [0, {}]", path.horizon));
        }
        let beta = path.beta;
        let chi = path.count_until(t);
        let mut total = path.delta0() * self.big_phi(0.0, t)?;
        let mut theta = 0.0;
        for i in 0..chi {
            let e = &path.events[i];
            theta += (beta * e.tau).exp() * e.delta_i;
            let end = if i + 1 < chi { path.events[i + 1].tau } else { t };
            total += theta * self.big_phi(e.tau, end)?;
        }
        Ok(total)
    }
}

/// Decomposition `X* = X^OW + X^trend + X^dyn` at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplicitSplit {
    pub t: f64,
    pub ow: f64,
    pub trend: f64,
    pub dynamic: f64,
}

impl ExplicitSplit {
    pub fn total(&self) -> f64 {
        self.ow + self.trend + self.dynamic
    }
}

/// Forward evaluator of the explicit optimal position along a path.
pub(crate) struct ExplicitWalker<'a> {
    strat: &'a OptimalStrategy,
    delta0: f64,
    /// `qD` right after the initial block.
    y_start: f64,
    /// Jumps of `qD` caused by market orders and reaction blocks so far.
    jumps: f64,
    /// `Σ_{i<χ} Θ_i Φ_η(τ_i, τ_{i+1})`.
    completed: f64,
    theta: f64,
    last_tau: f64,
    chi: usize,
}

impl<'a> ExplicitWalker<'a> {
    pub(crate) fn new(strat: &'a OptimalStrategy, path: &EventPath) -> Self {
        let ModelConstants { q, epsilon, rho, horizon, .. } = strat.k;
        let p = &strat.problem;
        let delta0 = path.delta0();
        let y_start = (q * p.d0 - (1.0 - epsilon) * p.x0 + strat.k_tilde(horizon) * delta0) / (2.0 + rho * horizon);
        Self {
            strat,
            delta0,
            y_start,
            jumps: 0.0,
            completed: 0.0,
            theta: 0.0,
            last_tau: 0.0,
            chi: 0,
        }
    }

    /// `qD*_t` between events.
    pub(crate) fn y_at(&self, t: f64) -> Result<f64> {
        let integral = self.delta0 * self.strat.big_phi(0.0, t)?
            + self.completed
            + if self.chi > 0 {
                self.theta * self.strat.big_phi(self.last_tau, t)?
            } else {
                0.0
            };
        Ok(self.y_start + self.jumps - self.strat.k.m1 * integral)
    }

    /// `X*_t` given the current intensity difference.
    pub(crate) fn x_at(&self, t: f64, delta: f64) -> Result<f64> {
        let ModelConstants { rho, epsilon, horizon, .. } = self.strat.k;
        let v = horizon - t;
        Ok((-(1.0 + rho * v) * self.y_at(t)? + self.strat.k_tilde(v) * delta) / (1.0 - epsilon))
    }

    /// Continuous trading rate of `X*` at `t` between events.
    pub(crate) fn rate_at(&self, t: f64, delta: f64) -> Result<f64> {
        let ModelConstants { rho, epsilon, m1, .. } = self.strat.k;
        Ok((rho * self.y_at(t)? - m1 * self.strat.phi_eta(t) * delta) / (1.0 - epsilon))
    }

    pub(crate) fn on_event(&mut self, e: &MarketEvent) -> Result<()> {
        let ModelConstants { rho, nu, beta, horizon, .. } = self.strat.k;
        if self.chi > 0 {
            self.completed += self.theta * self.strat.big_phi(self.last_tau, e.tau)?;
        }
        self.theta += (beta * e.tau).exp() * e.delta_i;
        self.last_tau = e.tau;
        self.chi += 1;
        let v = horizon - e.tau;
        self.jumps += ((1.0 - nu) * e.signed_volume() + self.strat.k_tilde(v) * e.delta_i) / (2.0 + rho * v);
        Ok(())
    }
}

impl OptimalStrategy {
    /// Position `X*_t` (after any reaction block at `t`) and its
    /// decomposition, evaluated from the explicit formulas.
    pub fn explicit_split(&self, path: &EventPath, t: f64) -> Result<ExplicitSplit> {
        let state = path.state_at(t)?;
        let mut walker = ExplicitWalker::new(self, path);
        for e in &path.events[..state.chi] {
            walker.on_event(e)?;
        }
        let total = if t == 0.0 {
            walker.x_at(0.0, path.delta0())?
        } else {
            walker.x_at(t, state.delta)?
        };
        let ModelConstants { q, rho, epsilon, horizon, beta, .. } = self.k;
        let v = horizon - t;
        let p = &self.problem;
        let delta0 = path.delta0();
        let ow = p.x0 * (1.0 + rho * v) / (2.0 + rho * horizon);
        let y_trend = (q * p.d0 + self.k_tilde(horizon) * delta0) / (2.0 + rho * horizon)
            - self.k.m1 * delta0 * self.big_phi(0.0, t)?;
        let trend = (-(1.0 + rho * v) * y_trend + self.k_tilde(v) * delta0 * (-beta * t).exp()) / (1.0 - epsilon);
        Ok(ExplicitSplit {
            t,
            ow,
            trend,
            dynamic: total - ow - trend,
        })
    }

    /// Continuous trading rate of `X*` at `t` (between events).
    pub fn explicit_rate(&self, path: &EventPath, t: f64) -> Result<f64> {
        let state = path.state_at(t)?;
        let mut walker = ExplicitWalker::new(self, path);
        for e in &path.events[..state.chi] {
            walker.on_event(e)?;
        }
        walker.rate_at(t, state.delta)
    }

    /// Final block `−X*_T` of the explicit strategy.
    pub fn explicit_terminal_block(&self, path: &EventPath) -> Result<f64> {
        let horizon = self.k.horizon;
        // an order exactly at T triggers no reaction: use the left limit
        let chi = path.events.partition_point(|e| e.tau < horizon);
        let mut walker = ExplicitWalker::new(self, path);
        let mut delta = path.delta0() * (-self.k.beta * horizon).exp();
        for e in &path.events[..chi] {
            walker.on_event(e)?;
            delta += e.delta_i * (-self.k.beta * (horizon - e.tau)).exp();
        }
        Ok(-walker.x_at(horizon, delta)?)
    }
}
