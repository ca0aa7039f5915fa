//! Scalar kernels behind the strategy formulas.
//!
//! * `ζ(y) = (1 − e^{−y})/y` and `ω(y) = (e^{−y} − 1 + y)/y²` with their
//!   derivatives, continuous through `y = 0`.
//! * The exponential integral `Ei`.
//! * `L(r, λ, t) = r ∫₀ᵗ e^{λs}/(2 + rs) ds`, expressed through `Ei`.
//!
//! Near `y = 0` the closed forms of the `ζ` family cancel catastrophically,
//! so a power series is summed to machine precision whenever
//! `|y| < series_threshold`.

use crate::error::{ensure_finite, Error, Result};
use crate::quadrature;

/// Euler–Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Above this argument the asymptotic expansion of `Ei` is accurate to
/// double precision.
const EI_ASYMPTOTIC_FROM: f64 = 40.0;

/// Numerical switches shared by the special functions and the strategy
/// formulas.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StabilityConfig {
    /// `|y|` below which the `ζ` family is summed as a power series.
    pub series_threshold: f64,
    /// Relative tolerance of the quadrature oracle.
    pub quad_rel_tol: f64,
    /// Subdivision budget of the quadrature oracle.
    pub max_quad_subdivisions: usize,
    /// `|η|·T` below which the `η = 0` closed form (plus a quadrature
    /// correction) replaces the `1/η` formulas of the strategy integrals.
    pub eta_threshold: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            series_threshold: 0.5,
            quad_rel_tol: 1e-12,
            max_quad_subdivisions: 2000,
            eta_threshold: 1e-2,
        }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.series_threshold > 0.0 && self.series_threshold.is_finite()) {
            return Err(Error::Domain(format!(
                "series_threshold must be positive, got {}",
                self.series_threshold
            )));
        }
        if !(self.quad_rel_tol > 0.0) {
            return Err(Error::Domain(format!(
                "quad_rel_tol must be positive, got {}",
                self.quad_rel_tol
            )));
        }
        if !(self.eta_threshold >= 0.0) {
            return Err(Error::Domain(format!(
                "eta_threshold must be nonnegative, got {}",
                self.eta_threshold
            )));
        }
        Ok(())
    }
}

/// `(ζ, ζ′, ω, ω′)` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaFamily {
    pub zeta: f64,
    pub zeta_prime: f64,
    pub omega: f64,
    pub omega_prime: f64,
}

/// Evaluates `ζ, ζ′, ω, ω′` at `y` with the default switch-over.
pub fn zeta_family(y: f64) -> Result<ZetaFamily> {
    zeta_family_with(y, &StabilityConfig::default())
}

pub fn zeta_family_with(y: f64, cfg: &StabilityConfig) -> Result<ZetaFamily> {
    ensure_finite("y", y)?;
    Ok(if y.abs() < cfg.series_threshold {
        series_family(y)
    } else {
        closed_family(y)
    })
}

/// Power series of the `ζ` family, summed until the terms stop contributing:
/// `ζ = Σ (−y)^k/(k+1)!`, `ω = Σ (−y)^k/(k+2)!`,
/// `ζ′ = −Σ (k+1)(−y)^k/(k+2)!`, `ω′ = −Σ (k+1)(−y)^k/(k+3)!`.
fn series_family(y: f64) -> ZetaFamily {
    let mut zeta = 0.0;
    let mut zeta_prime = 0.0;
    let mut omega = 0.0;
    let mut omega_prime = 0.0;
    // (−y)^k / (k+1)!, (−y)^k / (k+2)!, (−y)^k / (k+3)!
    let mut t1 = 1.0;
    let mut t2 = 0.5;
    let mut t3 = 1.0 / 6.0;
    for k in 0..80u32 {
        let kf = f64::from(k);
        zeta += t1;
        omega += t2;
        zeta_prime -= (kf + 1.0) * t2;
        omega_prime -= (kf + 1.0) * t3;
        if k > 2 && (kf + 1.0) * t2.abs() < 1e-18 * omega.abs() {
            break;
        }
        t1 *= -y / (kf + 2.0);
        t2 *= -y / (kf + 3.0);
        t3 *= -y / (kf + 4.0);
    }
    ZetaFamily {
        zeta,
        zeta_prime,
        omega,
        omega_prime,
    }
}

fn closed_family(y: f64) -> ZetaFamily {
    let e = (-y).exp();
    // 1 − e^{−y} without cancellation
    let one_minus_e = -(-y).exp_m1();
    let zeta = one_minus_e / y;
    let zeta_prime = (e - zeta) / y;
    let omega = (1.0 - zeta) / y;
    let omega_prime = (2.0 * one_minus_e - y * (1.0 + e)) / (y * y * y);
    ZetaFamily {
        zeta,
        zeta_prime,
        omega,
        omega_prime,
    }
}

/// `ζ(y)`. Inputs are assumed finite.
#[inline]
pub fn zeta(y: f64) -> f64 {
    if y.abs() < StabilityConfig::default().series_threshold {
        series_family(y).zeta
    } else {
        -(-y).exp_m1() / y
    }
}

/// `ω(y)`. Inputs are assumed finite.
#[inline]
pub fn omega(y: f64) -> f64 {
    if y.abs() < StabilityConfig::default().series_threshold {
        series_family(y).omega
    } else {
        (1.0 + (-y).exp_m1() / y) / y
    }
}

/// `ω′(y)`. Inputs are assumed finite.
#[inline]
pub fn omega_prime(y: f64) -> f64 {
    if y.abs() < StabilityConfig::default().series_threshold {
        series_family(y).omega_prime
    } else {
        closed_family(y).omega_prime
    }
}

/// Exponential integral `Ei(y) = −∫_{−y}^{∞} e^{−u}/u du` (principal value
/// for `y > 0`).
pub fn expint(y: f64) -> Result<f64> {
    ensure_finite("y", y)?;
    if y == 0.0 {
        return Err(Error::SingularPoint);
    }
    Ok(ei_unchecked(y))
}

/// `e^{−y} Ei(y)`, which stays representable where `Ei` itself overflows.
pub fn expint_scaled(y: f64) -> Result<f64> {
    ensure_finite("y", y)?;
    if y == 0.0 {
        return Err(Error::SingularPoint);
    }
    Ok(ei_scaled_unchecked(y))
}

fn ei_unchecked(y: f64) -> f64 {
    if y > 0.0 {
        if y < EI_ASYMPTOTIC_FROM {
            ei_series(y)
        } else {
            y.exp() * ei_asymptotic_scaled(y)
        }
    } else {
        let x = -y;
        if x <= 1.0 {
            -e1_series(x)
        } else {
            -(-x).exp() * e1_continued_fraction_scaled(x)
        }
    }
}

fn ei_scaled_unchecked(y: f64) -> f64 {
    if y >= EI_ASYMPTOTIC_FROM {
        ei_asymptotic_scaled(y)
    } else if y < -1.0 {
        -e1_continued_fraction_scaled(-y)
    } else {
        (-y).exp() * ei_unchecked(y)
    }
}

/// `γ + ln y + Σ y^k/(k·k!)`, all terms positive for `y > 0`.
fn ei_series(y: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..500 {
        let kf = k as f64;
        term *= y / kf;
        let add = term / kf;
        sum += add;
        if add < 1e-17 * sum {
            break;
        }
    }
    EULER_GAMMA + y.ln() + sum
}

/// `e^{−y} Ei(y) ≈ (1/y) Σ k!/y^k`, truncated at the smallest term.
fn ei_asymptotic_scaled(y: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let next = term * k as f64 / y;
        if next >= term {
            break;
        }
        term = next;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum / y
}

/// `E₁(x) = −γ − ln x − Σ (−x)^k/(k·k!)` for `0 < x ≤ 1`.
fn e1_series(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= -x / kf;
        let add = term / kf;
        sum += add;
        if add.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

/// `e^{x} E₁(x)` by the modified Lentz continued fraction, `x > 1`.
fn e1_continued_fraction_scaled(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// `L(r, λ, t) = r ∫₀ᵗ e^{λs}/(2 + rs) ds`.
pub fn l_integral(r: f64, lambda: f64, t: f64) -> Result<f64> {
    ensure_finite("r", r)?;
    ensure_finite("lambda", lambda)?;
    ensure_finite("t", t)?;
    if r <= 0.0 {
        return Err(Error::Domain(format!("L requires r > 0, got {r}")));
    }
    if t < 0.0 {
        return Err(Error::Domain(format!("L requires t >= 0, got {t}")));
    }
    Ok(scaled_l(r, lambda, t, 0.0))
}

/// `e^{log_weight} · L(r, λ, t)` without forming `e^{2λ/r}` or `Ei` of large
/// arguments explicitly. Arguments are assumed valid.
pub(crate) fn scaled_l(r: f64, lambda: f64, t: f64, log_weight: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    if lambda == 0.0 {
        return log_weight.exp() * (0.5 * r * t).ln_1p();
    }
    let hi = lambda * (2.0 + r * t) / r;
    let lo = 2.0 * lambda / r;
    debug_assert!(hi.signum() == lo.signum(), "Ei difference across 0: {lo}, {hi}");
    if hi.abs().max(lo.abs()) <= 1.0 {
        // Ei(hi) − Ei(lo) = ln(hi/lo) + Σ (hi^k − lo^k)/(k·k!), with the
        // differences of powers factored through hi − lo = λt
        let diff = lambda * t;
        let mut sum = 0.0;
        let mut hi_pow = 1.0; // hi^{k−1}
        let mut mixed = 1.0; // Σ_{j<k} hi^j lo^{k−1−j}
        let mut fact = 1.0;
        for k in 1..60 {
            let kf = k as f64;
            fact *= kf;
            if k > 1 {
                hi_pow *= hi;
                mixed = mixed * lo + hi_pow;
            }
            let add = diff * mixed / (kf * fact);
            sum += add;
            if add.abs() < 1e-18 * sum.abs().max(1e-300) && k > 2 {
                break;
            }
        }
        return (log_weight - lo).exp() * ((0.5 * r * t).ln_1p() + sum);
    }
    // e^{−lo} Ei(hi) = e^{λt} · e^{−hi} Ei(hi)
    (log_weight + lambda * t).exp() * ei_scaled_unchecked(hi)
        - log_weight.exp() * ei_scaled_unchecked(lo)
}

/// `L` by adaptive quadrature of its defining integral. Test oracle only.
pub fn l_integral_quadrature(r: f64, lambda: f64, t: f64, cfg: &StabilityConfig) -> Result<f64> {
    if r <= 0.0 || t < 0.0 {
        return Err(Error::Domain(format!("invalid L arguments r={r}, t={t}")));
    }
    let v = quadrature::integrate(
        |s| (lambda * s).exp() / (2.0 + r * s),
        0.0,
        t,
        cfg.quad_rel_tol,
        cfg.max_quad_subdivisions,
    )?;
    Ok(r * v)
}
