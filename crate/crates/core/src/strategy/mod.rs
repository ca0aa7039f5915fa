//! Closed-form optimal liquidation under the mixed-impact Hawkes model.
//!
//! [`OptimalStrategy`] is built once per [`ExecutionProblem`]: it holds the
//! model constants and the tabulated `e`, `g` coefficients, and evaluates
//! the value function, the reaction trade and the optimal trajectory on
//! any event path.

mod coefficients;
mod execute;
mod explicit;
mod ow;

use serde::{Deserialize, Serialize};

use crate::error::{domain, ensure_finite, Result};
use crate::hawkes::HawkesSpec;
use crate::market::ImpactParams;
use crate::special_functions::{omega, zeta, StabilityConfig};

pub use coefficients::{Coefficients, EgTable};
pub use execute::{write_trajectory_csv, Execution, Mode, TrajectoryRow};
pub use explicit::ExplicitSplit;
pub use ow::{ow_expected_cost, ow_schedule};

/// Default step of the `e`, `g` integration, as a fraction of `T`.
pub const DEFAULT_ODE_STEPS: usize = 4000;

/// Liquidation problem: initial position and market state, impact and
/// order-flow parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionProblem {
    pub x0: f64,
    pub horizon: f64,
    pub d0: f64,
    pub s0: f64,
    pub params: ImpactParams,
    pub spec: HawkesSpec,
    #[serde(default)]
    pub stability: StabilityConfig,
    /// Step of the `e`, `g` integration; `None` uses `T / 4000`.
    #[serde(default)]
    pub ode_step: Option<f64>,
}

impl ExecutionProblem {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("x0", self.x0)?;
        ensure_finite("T", self.horizon)?;
        ensure_finite("D0", self.d0)?;
        ensure_finite("S0", self.s0)?;
        if self.horizon <= 0.0 {
            return domain(format!("T must be > 0, got {}", self.horizon));
        }
        if let Some(h) = self.ode_step {
            ensure_finite("ode_step", h)?;
            if h <= 0.0 {
                return domain(format!("ode_step must be > 0, got {h}"));
            }
        }
        self.params.validate()?;
        self.spec.validate()?;
        self.stability.validate()
    }

    pub fn delta0(&self) -> f64 {
        self.spec.delta0()
    }

    pub fn sigma0(&self) -> f64 {
        self.spec.sigma0()
    }

    /// `P₀ = S₀ + D₀`.
    pub fn p0(&self) -> f64 {
        self.s0 + self.d0
    }
}

/// Scalars entering every formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    pub q: f64,
    pub rho: f64,
    pub nu: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub kappa_infty: f64,
    pub m1: f64,
    pub m2: f64,
    pub iota_s: f64,
    pub iota_c: f64,
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub alpha_2: f64,
    pub eta: f64,
    pub horizon: f64,
}

/// Optimal strategy and value function for one problem.
#[derive(Debug, Clone)]
pub struct OptimalStrategy {
    problem: ExecutionProblem,
    k: ModelConstants,
    eg: EgTable,
}

impl OptimalStrategy {
    pub fn new(problem: ExecutionProblem) -> Result<Self> {
        problem.validate()?;
        let m = problem.spec.moments()?;
        let k = ModelConstants {
            q: problem.params.q,
            rho: problem.params.rho,
            nu: problem.params.nu,
            epsilon: problem.params.epsilon,
            beta: problem.spec.beta,
            kappa_infty: problem.spec.kappa_infty,
            m1: problem.spec.marks.m1(),
            m2: problem.spec.marks.m2(),
            iota_s: m.iota_s,
            iota_c: m.iota_c,
            alpha: m.alpha,
            alpha_tilde: m.alpha_tilde,
            alpha_2: m.alpha_2,
            eta: problem.spec.beta - m.alpha,
            horizon: problem.horizon,
        };
        let step = problem
            .ode_step
            .unwrap_or(problem.horizon / DEFAULT_ODE_STEPS as f64);
        let eg = EgTable::integrate(&k, step)?;
        Ok(Self { problem, k, eg })
    }

    pub fn problem(&self) -> &ExecutionProblem {
        &self.problem
    }

    pub fn constants(&self) -> &ModelConstants {
        &self.k
    }

    pub fn eg_table(&self) -> &EgTable {
        &self.eg
    }

    fn check_time(&self, t: f64) -> Result<()> {
        ensure_finite("t", t)?;
        if !(0.0..=self.k.horizon).contains(&t) {
            return domain(format!("t={t} outside [0, {}]", self.k.horizon));
        }
        Ok(())
    }

    /// `𝓖_η(u) = ζ(ηu) + νρu ω(ηu)`.
    pub fn g_eta(&self, u: f64) -> f64 {
        let y = self.k.eta * u;
        zeta(y) + self.k.nu * self.k.rho * u * omega(y)
    }

    /// `K(u) = 2 + ρu {1 + 𝓖_η(u)}`, so that `k(u) = (m₁/2ρ) K(u)/(2+ρu)`.
    pub(crate) fn big_k(&self, u: f64) -> f64 {
        2.0 + self.k.rho * u * (1.0 + self.g_eta(u))
    }

    /// `(2+ρu) k(u) = (m₁/2ρ) K(u)`.
    pub(crate) fn k_tilde(&self, u: f64) -> f64 {
        self.k.m1 / (2.0 * self.k.rho) * self.big_k(u)
    }

    /// Residual of the optimality identity
    /// `(1−ε)X + (1+ρv) qD − (2+ρv) k(v) δ` at time `t`, with `v = T − t`.
    pub fn identity_residual(&self, t: f64, x: f64, d: f64, delta: f64) -> f64 {
        let v = self.k.horizon - t;
        (1.0 - self.k.epsilon) * x + (1.0 + self.k.rho * v) * self.k.q * d - self.k_tilde(v) * delta
    }

    /// Magnitude of the terms of [`identity_residual`](Self::identity_residual),
    /// used to make it relative.
    pub fn identity_scale(&self, t: f64, x: f64, d: f64, delta: f64) -> f64 {
        let v = self.k.horizon - t;
        ((1.0 - self.k.epsilon) * x).abs()
            + ((1.0 + self.k.rho * v) * self.k.q * d).abs()
            + (self.k_tilde(v) * delta).abs()
    }

    /// Block restoring the optimality identity at `t` from position `x`,
    /// deviation `d` and intensity difference `delta`.
    pub(crate) fn restoring_block(&self, t: f64, x: f64, d: f64, delta: f64) -> f64 {
        let v = self.k.horizon - t;
        -self.identity_residual(t, x, d, delta) / ((1.0 - self.k.epsilon) * (2.0 + self.k.rho * v))
    }

    /// Block posted right after a market order of signed volume `dn` at
    /// `tau` that moved `I` by `di`.
    pub fn reaction_block(&self, tau: f64, dn: f64, di: f64) -> Result<f64> {
        ensure_finite("tau", tau)?;
        if !(tau > 0.0 && tau < self.k.horizon) {
            return domain(format!("reaction time {tau} outside (0, {})", self.k.horizon));
        }
        let ModelConstants { rho, nu, epsilon, m1, eta, .. } = self.k;
        let v = self.k.horizon - tau;
        let lead = (1.0 + rho * v) / (2.0 + rho * v) * (m1 / rho * di - (1.0 - nu) * dn);
        let tail = m1 / (2.0 * rho) * (nu * rho - eta) * rho * v * v * omega(eta * v) / (2.0 + rho * v) * di;
        Ok((lead + tail) / (1.0 - epsilon))
    }

    /// Value function `𝓒(t, x, d, z, δ, Σ)`.
    pub fn value_function(&self, t: f64, x: f64, d: f64, z: f64, delta: f64, sigma: f64) -> Result<f64> {
        self.check_time(t)?;
        let ModelConstants { q, rho, epsilon, m1, .. } = self.k;
        let v = self.k.horizon - t;
        let w = rho * v / (2.0 + rho * v);
        let bracket = q * d - self.g_eta(v) * delta * m1 / rho;
        let c = self.coefficients(v)?;
        let scaled = -q * (z + d) * x
            + ((1.0 - epsilon) / (2.0 + rho * v) + epsilon / 2.0) * x * x
            + w * bracket * x
            - 0.5 * w / (1.0 - epsilon) * bracket * bracket
            + c.c_hat * (delta * m1 / rho).powi(2)
            + self.eg.e(v) * sigma
            + self.eg.g(v);
        Ok(scaled / q)
    }

    /// Value at time 0 for the problem's own initial state.
    pub fn initial_value(&self) -> Result<f64> {
        let p = &self.problem;
        self.value_function(0.0, p.x0, p.d0, p.s0, p.delta0(), p.sigma0())
    }

    /// Initial position minimizing `𝓒(0, x₀, …) + P₀x₀`.
    ///
    /// The value function is quadratic in `x₀` with leading coefficient
    /// `[(1−ε)/(2+ρT) + ε/2]/q` and linear coefficient (after adding
    /// `P₀x₀`) `(ρT/(2+ρT))[qD₀ − 𝓖_η(T)δ₀m₁/ρ]/q`.
    pub fn optimal_initial_position(&self, d0: f64, delta0: f64) -> f64 {
        let ModelConstants { q, rho, epsilon, m1, horizon, .. } = self.k;
        let rt = rho * horizon;
        -rt * (q * d0 - self.g_eta(horizon) * delta0 * m1 / rho) / (2.0 * (1.0 + 0.5 * epsilon * rt))
    }
}
