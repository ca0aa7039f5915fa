//! JSON run configuration.

use std::fmt;
use std::path::Path;

use mihexec::hawkes::{ExcitationPair, HawkesSpec, MarkLaw, PowerSeries, PowerTerm};
use mihexec::market::ImpactParams;
use mihexec::special_functions::StabilityConfig;
use mihexec::strategy::ExecutionProblem;
use serde::{Deserialize, Serialize};

/// A configuration error located at a JSON path such as `hawkes.phi_s[1].power`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(path: impl Into<String>, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        path: path.into(),
        message: message.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketConfig,
    pub hawkes: HawkesConfig,
    pub execution: ExecutionConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub q: f64,
    pub rho: f64,
    pub nu: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HawkesConfig {
    pub beta: f64,
    pub kappa_infty: f64,
    pub kappa0_plus: f64,
    pub kappa0_minus: f64,
    pub mark_law: MarkLawConfig,
    #[serde(default)]
    pub phi_s: Vec<PowerTerm>,
    #[serde(default)]
    pub phi_c: Vec<PowerTerm>,
}

/// `{"type": "exponential", "params": {"mean": 50}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarkLawConfig {
    Dirac { m1: f64 },
    Exponential { mean: f64 },
    Empirical { atoms: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionConfig {
    pub x0: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "D0", default)]
    pub d0: f64,
    #[serde(rename = "S0", default)]
    pub s0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    #[serde(default)]
    pub ode_step: Option<f64>,
    #[serde(default)]
    pub grid_step: Option<f64>,
    #[serde(default)]
    pub eta_threshold: Option<f64>,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_paths() -> usize {
    10_000
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            ode_step: None,
            grid_step: None,
            eta_threshold: None,
            n_paths: default_paths(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_json(&text),
            Err(e) => err(".", format!("cannot read {}: {e}", path.display())),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.market;
        finite("market.q", m.q)?;
        positive("market.q", m.q)?;
        finite("market.rho", m.rho)?;
        positive("market.rho", m.rho)?;
        finite("market.nu", m.nu)?;
        if !(0.0..=1.0).contains(&m.nu) {
            return err("market.nu", format!("must lie in [0, 1], got {}", m.nu));
        }
        finite("market.epsilon", m.epsilon)?;
        if !(0.0..1.0).contains(&m.epsilon) {
            return err("market.epsilon", format!("must lie in [0, 1), got {}", m.epsilon));
        }

        let h = &self.hawkes;
        for (name, v) in [
            ("beta", h.beta),
            ("kappa_infty", h.kappa_infty),
            ("kappa0_plus", h.kappa0_plus),
            ("kappa0_minus", h.kappa0_minus),
        ] {
            let path = format!("hawkes.{name}");
            finite(&path, v)?;
            if v < 0.0 {
                return err(path, format!("must be >= 0, got {v}"));
            }
        }
        match &h.mark_law {
            MarkLawConfig::Dirac { m1 } => {
                finite("hawkes.mark_law.params.m1", *m1)?;
                if *m1 < 0.0 {
                    return err("hawkes.mark_law.params.m1", format!("must be >= 0, got {m1}"));
                }
            }
            MarkLawConfig::Exponential { mean } => {
                finite("hawkes.mark_law.params.mean", *mean)?;
                positive("hawkes.mark_law.params.mean", *mean)?;
            }
            MarkLawConfig::Empirical { atoms } => {
                if atoms.is_empty() {
                    return err("hawkes.mark_law.params.atoms", "needs at least one atom");
                }
                for (i, &(v, w)) in atoms.iter().enumerate() {
                    let path = format!("hawkes.mark_law.params.atoms[{i}]");
                    if !(v.is_finite() && w.is_finite() && v >= 0.0 && w >= 0.0) {
                        return err(path, format!("({v}, {w}) must be finite and nonnegative"));
                    }
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return err("hawkes.mark_law.params.atoms", format!("weights sum to {total}, expected 1"));
                }
            }
        }
        for (name, series) in [("phi_s", &h.phi_s), ("phi_c", &h.phi_c)] {
            for (i, t) in series.iter().enumerate() {
                for (field, v) in [("coef", t.coef), ("power", t.power)] {
                    let path = format!("hawkes.{name}[{i}].{field}");
                    finite(&path, v)?;
                    if v < 0.0 {
                        return err(path, format!("must be >= 0, got {v}"));
                    }
                }
            }
        }
        if let Err(e) = self.spec().moments() {
            return err("hawkes", e.to_string());
        }

        let x = &self.execution;
        finite("execution.x0", x.x0)?;
        finite("execution.T", x.horizon)?;
        positive("execution.T", x.horizon)?;
        finite("execution.D0", x.d0)?;
        finite("execution.S0", x.s0)?;

        let n = &self.numerics;
        for (name, v) in [("ode_step", n.ode_step), ("grid_step", n.grid_step)] {
            if let Some(v) = v {
                let path = format!("numerics.{name}");
                finite(&path, v)?;
                positive(&path, v)?;
            }
        }
        if let Some(v) = n.eta_threshold {
            finite("numerics.eta_threshold", v)?;
            if v < 0.0 {
                return err("numerics.eta_threshold", format!("must be >= 0, got {v}"));
            }
        }
        if n.n_paths < 2 {
            return err("numerics.n_paths", format!("must be >= 2, got {}", n.n_paths));
        }

        // backstop for invariants owned by the library
        if let Err(e) = self.problem().validate() {
            return err(".", e.to_string());
        }
        Ok(())
    }

    pub fn params(&self) -> ImpactParams {
        ImpactParams {
            q: self.market.q,
            rho: self.market.rho,
            nu: self.market.nu,
            epsilon: self.market.epsilon,
        }
    }

    pub fn spec(&self) -> HawkesSpec {
        let h = &self.hawkes;
        HawkesSpec {
            beta: h.beta,
            kappa_infty: h.kappa_infty,
            kappa0_plus: h.kappa0_plus,
            kappa0_minus: h.kappa0_minus,
            marks: match &h.mark_law {
                MarkLawConfig::Dirac { m1 } => MarkLaw::Dirac { m1: *m1 },
                MarkLawConfig::Exponential { mean } => MarkLaw::Exponential { mean: *mean },
                MarkLawConfig::Empirical { atoms } => MarkLaw::Empirical { atoms: atoms.clone() },
            },
            excitation: ExcitationPair {
                phi_s: PowerSeries(h.phi_s.clone()),
                phi_c: PowerSeries(h.phi_c.clone()),
            },
        }
    }

    pub fn problem(&self) -> ExecutionProblem {
        let mut stability = StabilityConfig::default();
        if let Some(t) = self.numerics.eta_threshold {
            stability.eta_threshold = t;
        }
        ExecutionProblem {
            x0: self.execution.x0,
            horizon: self.execution.horizon,
            d0: self.execution.d0,
            s0: self.execution.s0,
            params: self.params(),
            spec: self.spec(),
            stability,
            ode_step: self.numerics.ode_step,
        }
    }

    /// Grid step of the feedback mode; `T / 2000` unless configured.
    pub fn grid_step(&self) -> f64 {
        self.numerics
            .grid_step
            .unwrap_or(self.execution.horizon / mihexec::montecarlo::DEFAULT_GRID_STEPS as f64)
    }
}

fn finite(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        err(path, format!("must be finite, got {v}"))
    }
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 {
        Ok(())
    } else {
        err(path, format!("must be > 0, got {v}"))
    }
}
