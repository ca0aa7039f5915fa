//! Coefficients of the quadratic value function.

use serde::{Deserialize, Serialize};

use super::{ModelConstants, OptimalStrategy};
use crate::error::{domain, ensure_finite, Result};
use crate::special_functions::{omega, omega_prime, scaled_l, zeta};

/// Closed-form coefficients at time-to-go `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub j: f64,
    pub k: f64,
    pub g_eta: f64,
    pub c_hat: f64,
}

impl OptimalStrategy {
    /// `(a, b, c, j, k, 𝓖_η, ĉ_η)` at time-to-go `u ∈ [0, T]`.
    pub fn coefficients(&self, u: f64) -> Result<Coefficients> {
        ensure_finite("u", u)?;
        if !(0.0..=self.k.horizon).contains(&u) {
            return domain(format!("u={u} outside [0, {}]", self.k.horizon));
        }
        Ok(coefficients_at(&self.k, u))
    }
}

pub(crate) fn g_eta(k: &ModelConstants, u: f64) -> f64 {
    let y = k.eta * u;
    zeta(y) + k.nu * k.rho * u * omega(y)
}

pub(crate) fn coefficients_at(k: &ModelConstants, u: f64) -> Coefficients {
    let ModelConstants { rho, nu, epsilon, m1, eta, .. } = *k;
    let ru = rho * u;
    let inv = 1.0 / (1.0 - epsilon);
    let g = g_eta(k, u);
    let b = inv * ru / (2.0 + ru) * (m1 / rho) * g;
    let y = eta * u;
    let c_hat = inv * (eta - nu * rho).powi(2) * rho * u * u * u / 8.0 * omega_prime(y) * zeta(y);
    // one expression for every η: the 1/η terms of the generic formula are
    // carried by ĉ_η, which is regular at η = 0
    let c = (m1 / rho).powi(2) * (-inv * 0.5 * ru / (2.0 + ru) * g * g + c_hat);
    Coefficients {
        a: inv * (1.0 / (2.0 + ru) - 0.5 * epsilon),
        b,
        c,
        j: 1.0 / (2.0 + ru),
        k: 0.5 * (1.0 - epsilon) * b + m1 / (2.0 * rho),
        g_eta: g,
        c_hat,
    }
}

/// Right-hand side of the `e` equation.
pub(crate) fn e_rhs(k: &ModelConstants, u: f64, e: f64) -> f64 {
    let co = coefficients_at(k, u);
    -(k.eta - 2.0 * k.iota_c) * e
        + k.alpha_tilde * (1.0 - k.nu) * co.b
        + k.alpha_2 * co.c
        + (1.0 - k.nu).powi(2) * k.m2 / (1.0 - k.epsilon) * (1.0 / (2.0 + k.rho * u) - 0.5)
}

/// `e`, `g` tabulated by classical RK4 on a uniform grid of `[0, T]`, read
/// back by cubic Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct EgTable {
    step: f64,
    e: Vec<f64>,
    g: Vec<f64>,
    de: Vec<f64>,
    dg: Vec<f64>,
}

impl EgTable {
    pub(crate) fn integrate(k: &ModelConstants, step: f64) -> Result<Self> {
        let n = ((k.horizon / step).ceil() as usize).max(1);
        let h = k.horizon / n as f64;
        let gain = 2.0 * k.beta * k.kappa_infty;
        let mut e = Vec::with_capacity(n + 1);
        let mut g = Vec::with_capacity(n + 1);
        let (mut ec, mut gc) = (0.0, 0.0);
        e.push(ec);
        g.push(gc);
        for i in 0..n {
            let u = i as f64 * h;
            // ġ depends on e only, so g follows from the e stages
            let k1 = e_rhs(k, u, ec);
            let k2 = e_rhs(k, u + 0.5 * h, ec + 0.5 * h * k1);
            let k3 = e_rhs(k, u + 0.5 * h, ec + 0.5 * h * k2);
            let k4 = e_rhs(k, u + h, ec + h * k3);
            let e2 = ec + 0.5 * h * k1;
            let e3 = ec + 0.5 * h * k2;
            let e4 = ec + h * k3;
            gc += h / 6.0 * gain * (ec + 2.0 * e2 + 2.0 * e3 + e4);
            ec += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            ensure_finite("e", ec)?;
            e.push(ec);
            g.push(gc);
        }
        let de = (0..=n).map(|i| e_rhs(k, i as f64 * h, e[i])).collect();
        let dg = e.iter().map(|&x| gain * x).collect();
        Ok(Self { step: h, e, g, de, dg })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    fn hermite(&self, values: &[f64], slopes: &[f64], u: f64) -> f64 {
        let n = values.len() - 1;
        let pos = (u / self.step).clamp(0.0, n as f64);
        let i = (pos.floor() as usize).min(n.saturating_sub(1));
        let s = pos - i as f64;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        h00 * values[i] + h10 * self.step * slopes[i] + h01 * values[i + 1] + h11 * self.step * slopes[i + 1]
    }

    /// `e(u)`.
    pub fn e(&self, u: f64) -> f64 {
        self.hermite(&self.e, &self.de, u)
    }

    /// `g(u)`.
    pub fn g(&self, u: f64) -> f64 {
        self.hermite(&self.g, &self.dg, u)
    }

    #[cfg(test)]
    pub(crate) fn shift(&mut self, de: f64, dg: f64) {
        self.e.iter_mut().for_each(|x| *x += de);
        self.g.iter_mut().for_each(|x| *x += dg);
    }
}

/// `𝓘_p(u) = e^{au} ∫₀ᵘ sᵖ e^{−as} ds = p! u^{p+1} Σ_k (au)^k/(p+k+1)!`
/// for `a ≥ 0` (all terms positive).
fn i_p(p: u32, a: f64, u: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    let x = a * u;
    // term_k = (au)^k · p!/(p+k+1)!
    let mut term = 1.0 / f64::from(p + 1);
    let mut sum = term;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= x / f64::from(p + k + 1);
        sum += term;
        if term < 1e-17 * sum && f64::from(k) > x {
            break;
        }
        if k > 100_000 {
            break;
        }
    }
    u.powi(p as i32 + 1) * sum
}

impl OptimalStrategy {
    /// Closed forms of `e(u)`, `g(u)` valid when `η = 0`.
    ///
    /// Requires `ιc > 0` whenever `βκ∞ ≠ 0` (the `g` formula divides by
    /// `ιc`).
    pub fn critical_eg(&self, u: f64) -> Result<(f64, f64)> {
        let k = &self.k;
        if k.eta.abs() > 1e-12 * k.beta.abs().max(1.0) {
            return domain(format!("closed forms need eta = 0, got {}", k.eta));
        }
        ensure_finite("u", u)?;
        if !(0.0..=k.horizon).contains(&u) {
            return domain(format!("u={u} outside [0, {}]", k.horizon));
        }
        let ModelConstants {
            rho,
            nu,
            epsilon,
            m1,
            m2,
            iota_c,
            alpha_tilde,
            alpha_2,
            beta,
            kappa_infty,
            ..
        } = *k;
        let a = 2.0 * iota_c;
        let ip = |p| i_p(p, a, u);
        let inv = 1.0 / (1.0 - epsilon);
        let big_a = (1.0 - nu).powi(2) * inv * (m2 - m1 * (2.0 * alpha_tilde * rho - alpha_2 * m1) / (rho * rho));
        // e^{2ιc u} L(ρ, −2ιc, u)
        let l = scaled_l(rho, -a, u, a * u);
        let lin = nu * (1.0 - nu) * m1 * inv / (2.0 * rho * rho) * (alpha_tilde - alpha_2 * m1 / rho);
        let quad = alpha_2 * nu * nu * m1 * m1 * inv / (4.0 * rho.powi(3));
        let e = -big_a * (0.5 * ip(0) - l / rho) + lin * rho * rho * ip(1)
            - quad * (rho * rho * ip(1) + 0.5 * rho.powi(3) * ip(2) + rho.powi(4) * ip(3) / 12.0);
        let bk = beta * kappa_infty;
        let g = if bk == 0.0 {
            0.0
        } else {
            if iota_c <= 0.0 {
                return domain("closed form of g is singular at iota_c = 0");
            }
            let log_part = (l - (0.5 * rho * u).ln_1p()) / (a * rho);
            -2.0 * bk * big_a * (0.5 * ip(1) - log_part) + bk * lin * rho * rho * ip(2)
                - bk * quad / rho * (rho.powi(3) * ip(2) + rho.powi(4) * ip(3) / 3.0 + rho.powi(5) * ip(4) / 24.0)
        };
        Ok((e, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i_p_matches_quadrature() {
        for &(p, a, u) in &[(0u32, 0.0, 1.3), (1, 4.0, 1.0), (3, 4.0, 2.0), (2, 0.3, 0.1), (4, 30.0, 1.5)] {
            let want = crate::quadrature::integrate(
                |s: f64| s.powi(p as i32) * (a * (u - s)).exp(),
                0.0,
                u,
                1e-14,
                200,
            )
            .unwrap();
            let got = i_p(p, a, u);
            assert!((got - want).abs() <= 1e-13 * want.abs(), "p={p} a={a} u={u}: {got} vs {want}");
        }
    }
}
