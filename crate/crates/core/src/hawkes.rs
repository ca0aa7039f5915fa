//! Two-sided marked Hawkes order flow with exponential kernel.
//!
//! Buy and sell market orders arrive with intensities `κ⁺`, `κ⁻`. An order
//! of volume `v` on the buy side adds `φs(v/m₁)` to `κ⁺` and `φc(v/m₁)` to
//! `κ⁻` (mirrored for sells); between orders both intensities relax to
//! `κ∞` at rate `β`.
//!
//! The strategy layer works with the difference and sum
//! `δ = κ⁺ − κ⁻`, `Σ = κ⁺ + κ⁻`, and with the jump processes
//! `I` (`ΔI = side·(φs − φc)(v/m₁)`) and `Ī` (`ΔĪ = (φs + φc)(v/m₁)`).

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{domain, ensure_finite, Error, Result};
use crate::special_functions::zeta;

/// Number of quantiles used to sample the normalized support of an
/// exponential mark law.
pub const EXPONENTIAL_SUPPORT_POINTS: usize = 64;

/// Law `μ` of the order volumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MarkLaw {
    /// Every order has volume `m1`.
    Dirac { m1: f64 },
    /// Exponential volumes with the given mean.
    Exponential { mean: f64 },
    /// Finite law given as `(volume, weight)` atoms.
    Empirical { atoms: Vec<(f64, f64)> },
}

impl MarkLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            MarkLaw::Dirac { m1 } => {
                ensure_finite("m1", *m1)?;
                if *m1 < 0.0 {
                    return domain(format!("Dirac volume must be >= 0, got {m1}"));
                }
            }
            MarkLaw::Exponential { mean } => {
                ensure_finite("mean", *mean)?;
                if *mean <= 0.0 {
                    return domain(format!("exponential mean must be > 0, got {mean}"));
                }
            }
            MarkLaw::Empirical { atoms } => {
                if atoms.is_empty() {
                    return domain("empirical law needs at least one atom");
                }
                let mut total = 0.0;
                for &(v, w) in atoms {
                    ensure_finite("volume", v)?;
                    ensure_finite("weight", w)?;
                    if v < 0.0 || w < 0.0 {
                        return domain(format!("empirical atom ({v}, {w}) must be nonnegative"));
                    }
                    total += w;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return domain(format!("empirical weights sum to {total}, expected 1"));
                }
            }
        }
        Ok(())
    }

    /// `m₁ = E[V]`.
    pub fn m1(&self) -> f64 {
        match self {
            MarkLaw::Dirac { m1 } => *m1,
            MarkLaw::Exponential { mean } => *mean,
            MarkLaw::Empirical { atoms } => atoms.iter().map(|(v, w)| v * w).sum(),
        }
    }

    /// `m₂ = E[V²]`.
    pub fn m2(&self) -> f64 {
        match self {
            MarkLaw::Dirac { m1 } => m1 * m1,
            MarkLaw::Exponential { mean } => 2.0 * mean * mean,
            MarkLaw::Empirical { atoms } => atoms.iter().map(|(v, w)| v * v * w).sum(),
        }
    }

    /// Whether the law is the point mass at zero (no order ever moves the
    /// price).
    pub fn is_dirac_zero(&self) -> bool {
        self.m1() == 0.0
    }

    /// `E[(V/m₁)^p]`. For `m₁ = 0` the normalized mark is taken to be `0`.
    pub fn normalized_moment(&self, p: f64) -> f64 {
        let m1 = self.m1();
        if m1 == 0.0 {
            return 0f64.powf(p);
        }
        match self {
            MarkLaw::Dirac { .. } => 1.0,
            MarkLaw::Exponential { .. } => gamma(1.0 + p),
            MarkLaw::Empirical { atoms } => atoms.iter().map(|(v, w)| w * (v / m1).powf(p)).sum(),
        }
    }

    /// Deterministic sample of the normalized support `𝒮(μ)`: the single
    /// point for a Dirac law, a quantile grid for the exponential law, and
    /// every atom of an empirical law.
    pub fn support_sample(&self) -> Vec<f64> {
        let m1 = self.m1();
        if m1 == 0.0 {
            return vec![0.0];
        }
        match self {
            MarkLaw::Dirac { .. } => vec![1.0],
            MarkLaw::Exponential { .. } => (0..EXPONENTIAL_SUPPORT_POINTS)
                .map(|i| -(-(i as f64 + 0.5) / EXPONENTIAL_SUPPORT_POINTS as f64).ln_1p())
                .collect(),
            MarkLaw::Empirical { atoms } => atoms
                .iter()
                .filter(|(_, w)| *w > 0.0)
                .map(|(v, _)| v / m1)
                .collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            MarkLaw::Dirac { m1 } => *m1,
            MarkLaw::Exponential { mean } => {
                let e: f64 = Exp1.sample(rng);
                mean * e
            }
            MarkLaw::Empirical { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(v, w) in atoms {
                    acc += w;
                    if u < acc {
                        return v;
                    }
                }
                atoms.last().map(|a| a.0).unwrap_or(0.0)
            }
        }
    }
}

/// One term `coef · y^power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub coef: f64,
    pub power: f64,
}

/// Excitation function `y ↦ Σ coef·y^power` with nonnegative coefficients
/// and powers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerSeries(pub Vec<PowerTerm>);

impl PowerSeries {
    pub fn zero() -> Self {
        Self(Vec::new())
    }

    pub fn linear(coef: f64) -> Self {
        Self(vec![PowerTerm { coef, power: 1.0 }])
    }

    pub fn constant(coef: f64) -> Self {
        Self(vec![PowerTerm { coef, power: 0.0 }])
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.0.iter().map(|t| t.coef * y.powf(t.power)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|t| t.coef == 0.0)
    }

    fn validate(&self, name: &str) -> Result<()> {
        for (i, t) in self.0.iter().enumerate() {
            if !(t.coef.is_finite() && t.power.is_finite()) || t.coef < 0.0 || t.power < 0.0 {
                return domain(format!(
                    "{name}[{i}] = {}·y^{} must have finite nonnegative coefficient and power",
                    t.coef, t.power
                ));
            }
        }
        Ok(())
    }
}

/// Self- and cross-excitation functions `(φs, φc)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExcitationPair {
    pub phi_s: PowerSeries,
    pub phi_c: PowerSeries,
}

impl ExcitationPair {
    pub fn none() -> Self {
        Self::default()
    }

    /// `(φs − φc)(y)`.
    pub fn diff(&self, y: f64) -> f64 {
        self.phi_s.eval(y) - self.phi_c.eval(y)
    }

    /// `(φs + φc)(y)`.
    pub fn sum(&self, y: f64) -> f64 {
        self.phi_s.eval(y) + self.phi_c.eval(y)
    }

    pub fn validate(&self) -> Result<()> {
        self.phi_s.validate("phi_s")?;
        self.phi_c.validate("phi_c")
    }

    /// `φs − φc` as signed power terms.
    fn signed_diff_terms(&self) -> Vec<PowerTerm> {
        self.phi_s
            .0
            .iter()
            .copied()
            .chain(self.phi_c.0.iter().map(|t| PowerTerm {
                coef: -t.coef,
                power: t.power,
            }))
            .collect()
    }
}

/// Mark-averaged excitation moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationMoments {
    /// `ιs = E[φs(V/m₁)]`
    pub iota_s: f64,
    /// `ιc = E[φc(V/m₁)]`
    pub iota_c: f64,
    /// `α = ιs − ιc`
    pub alpha: f64,
    /// `α̃ = E[V (φs − φc)(V/m₁)]`
    pub alpha_tilde: f64,
    /// `α₂ = E[(φs − φc)²(V/m₁)]`
    pub alpha_2: f64,
}

fn checked_moment(marks: &MarkLaw, p: f64, what: &str) -> Result<f64> {
    let m = marks.normalized_moment(p);
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::DivergentMoment(format!(
            "E[(V/m1)^{p}] is not finite (from {what})"
        )))
    }
}

/// Computes `(ιs, ιc, α, α̃, α₂)` and checks that `E[φs²]`, `E[φc²]` are
/// finite.
pub fn excitation_moments(excitation: &ExcitationPair, marks: &MarkLaw) -> Result<ExcitationMoments> {
    excitation.validate()?;
    marks.validate()?;
    let m1 = marks.m1();
    let first = |series: &PowerSeries, name: &str| -> Result<f64> {
        series.0.iter().try_fold(0.0, |acc, t| {
            let what = format!("{name} term {}·y^{}", t.coef, t.power);
            Ok(acc + t.coef * checked_moment(marks, t.power, &what)?)
        })
    };
    let square = |terms: &[PowerTerm], name: &str| -> Result<f64> {
        let mut acc = 0.0;
        for a in terms {
            for b in terms {
                let what = format!("{name} product of y^{} and y^{}", a.power, b.power);
                acc += a.coef * b.coef * checked_moment(marks, a.power + b.power, &what)?;
            }
        }
        Ok(acc)
    };
    let iota_s = first(&excitation.phi_s, "phi_s")?;
    let iota_c = first(&excitation.phi_c, "phi_c")?;
    square(&excitation.phi_s.0, "phi_s^2")?;
    square(&excitation.phi_c.0, "phi_c^2")?;
    let diff = excitation.signed_diff_terms();
    let alpha_2 = square(&diff, "(phi_s-phi_c)^2")?.max(0.0);
    let alpha_tilde = diff.iter().try_fold(0.0, |acc, t| {
        let what = format!("V·y^{}", t.power);
        Ok::<_, Error>(acc + m1 * t.coef * checked_moment(marks, t.power + 1.0, &what)?)
    })?;
    Ok(ExcitationMoments {
        iota_s,
        iota_c,
        alpha: iota_s - iota_c,
        alpha_tilde,
        alpha_2,
    })
}

/// Parameters of the order flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesSpec {
    pub beta: f64,
    pub kappa_infty: f64,
    pub kappa0_plus: f64,
    pub kappa0_minus: f64,
    pub marks: MarkLaw,
    pub excitation: ExcitationPair,
}

impl HawkesSpec {
    /// Two independent compound Poisson flows of rate `kappa0` each.
    pub fn poisson(kappa0: f64, marks: MarkLaw) -> Self {
        Self {
            beta: 0.0,
            kappa_infty: 0.0,
            kappa0_plus: kappa0,
            kappa0_minus: kappa0,
            marks,
            excitation: ExcitationPair::none(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta", self.beta),
            ("kappa_infty", self.kappa_infty),
            ("kappa0_plus", self.kappa0_plus),
            ("kappa0_minus", self.kappa0_minus),
        ] {
            ensure_finite(name, v)?;
            if v < 0.0 {
                return domain(format!("{name} must be >= 0, got {v}"));
            }
        }
        self.marks.validate()?;
        self.excitation.validate()
    }

    pub fn moments(&self) -> Result<ExcitationMoments> {
        excitation_moments(&self.excitation, &self.marks)
    }

    /// `η = β − α`.
    pub fn eta(&self) -> Result<f64> {
        Ok(self.beta - self.moments()?.alpha)
    }

    pub fn delta0(&self) -> f64 {
        self.kappa0_plus - self.kappa0_minus
    }

    pub fn sigma0(&self) -> f64 {
        self.kappa0_plus + self.kappa0_minus
    }

    /// Normalized mark `v/m₁` (zero when `m₁ = 0`).
    pub fn normalize(&self, volume: f64) -> f64 {
        let m1 = self.marks.m1();
        if m1 == 0.0 {
            0.0
        } else {
            volume / m1
        }
    }

    /// `(ΔI, ΔĪ)` caused by an order of the given side and volume.
    pub fn intensity_jumps(&self, side: i8, volume: f64) -> (f64, f64) {
        let y = self.normalize(volume);
        (
            f64::from(side) * self.excitation.diff(y),
            self.excitation.sum(y),
        )
    }
}

/// Outcome of the stationarity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stationarity {
    pub stable: bool,
    /// Fixed point `2βκ∞/(β − ιs − ιc)` of the mean of `Σ`, when stable.
    pub stationary_mean_sigma: Option<f64>,
}

/// `(κ⁺, κ⁻)` converges to a stationary law iff `ιs + ιc < β`.
pub fn stationarity(spec: &HawkesSpec) -> Result<Stationarity> {
    let m = spec.moments()?;
    let total = m.iota_s + m.iota_c;
    let stable = total < spec.beta;
    Ok(Stationarity {
        stable,
        stationary_mean_sigma: stable.then(|| 2.0 * spec.beta * spec.kappa_infty / (spec.beta - total)),
    })
}

/// One market order of the flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketEvent {
    pub tau: f64,
    /// `+1` for a buy, `−1` for a sell.
    pub side: i8,
    pub volume: f64,
    #[serde(rename = "delta_I")]
    pub delta_i: f64,
    #[serde(rename = "delta_Ibar")]
    pub delta_ibar: f64,
}

impl MarketEvent {
    /// Signed volume `ΔN = side·v`.
    pub fn signed_volume(&self) -> f64 {
        f64::from(self.side) * self.volume
    }

    fn kappa_jumps(&self) -> (f64, f64) {
        (
            0.5 * (self.delta_ibar + self.delta_i),
            0.5 * (self.delta_ibar - self.delta_i),
        )
    }
}

/// Markov state of the flow reconstructed at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState {
    pub kappa_plus: f64,
    pub kappa_minus: f64,
    pub delta: f64,
    pub sigma: f64,
    /// Number of events in `(0, t]`.
    pub chi: usize,
    /// `Θ_χ = Σ_{l ≤ χ} e^{βτ_l} ΔI_{τ_l}`.
    pub theta: f64,
}

/// A simulated (or recorded) sample path of the order flow on `(0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPath {
    pub horizon: f64,
    pub beta: f64,
    pub kappa_infty: f64,
    pub kappa0_plus: f64,
    pub kappa0_minus: f64,
    pub events: Vec<MarketEvent>,
}

impl EventPath {
    /// A path without any market order.
    pub fn empty(spec: &HawkesSpec, horizon: f64) -> Self {
        Self {
            horizon,
            beta: spec.beta,
            kappa_infty: spec.kappa_infty,
            kappa0_plus: spec.kappa0_plus,
            kappa0_minus: spec.kappa0_minus,
            events: Vec::new(),
        }
    }

    /// Builds a path from explicit `(τ, side, volume)` orders, deriving the
    /// intensity jumps from `spec`.
    pub fn from_orders(spec: &HawkesSpec, horizon: f64, orders: &[(f64, i8, f64)]) -> Result<Self> {
        let mut path = Self::empty(spec, horizon);
        let mut last = 0.0;
        for &(tau, side, volume) in orders {
            if !(tau > last && tau <= horizon) {
                return domain(format!("event times must increase strictly inside (0, {horizon}], got {tau}"));
            }
            if side != 1 && side != -1 {
                return domain(format!("side must be +1 or -1, got {side}"));
            }
            let (delta_i, delta_ibar) = spec.intensity_jumps(side, volume);
            path.events.push(MarketEvent {
                tau,
                side,
                volume,
                delta_i,
                delta_ibar,
            });
            last = tau;
        }
        Ok(path)
    }

    pub fn delta0(&self) -> f64 {
        self.kappa0_plus - self.kappa0_minus
    }

    pub fn sigma0(&self) -> f64 {
        self.kappa0_plus + self.kappa0_minus
    }

    /// `χ_t`: number of events in `(0, t]`.
    pub fn count_until(&self, t: f64) -> usize {
        self.events.partition_point(|e| e.tau <= t)
    }

    /// `N_t`, the cumulated signed volume on `(0, t]`.
    pub fn signed_volume_until(&self, t: f64) -> f64 {
        self.events[..self.count_until(t)]
            .iter()
            .map(MarketEvent::signed_volume)
            .sum()
    }

    /// Reconstructs `(κ⁺, κ⁻, δ, Σ, χ, Θ_χ)` at `t` (càdlàg: an event at
    /// exactly `t` is included).
    pub fn state_at(&self, t: f64) -> Result<FlowState> {
        ensure_finite("t", t)?;
        if !(0.0..=self.horizon).contains(&t) {
            return domain(format!("t={t} outside [0, {}]", self.horizon));
        }
        let chi = self.count_until(t);
        let base = (-self.beta * t).exp();
        let mut kp = self.kappa_infty + (self.kappa0_plus - self.kappa_infty) * base;
        let mut km = self.kappa_infty + (self.kappa0_minus - self.kappa_infty) * base;
        let mut theta = 0.0;
        for e in &self.events[..chi] {
            let w = (-self.beta * (t - e.tau)).exp();
            let (jp, jm) = e.kappa_jumps();
            kp += w * jp;
            km += w * jm;
            theta += (self.beta * e.tau).exp() * e.delta_i;
        }
        Ok(FlowState {
            kappa_plus: kp,
            kappa_minus: km,
            delta: kp - km,
            sigma: kp + km,
            chi,
            theta,
        })
    }

    /// `∫₀ᵀ Σ_t dt`, exact for the piecewise exponential path.
    pub fn sigma_integral(&self) -> f64 {
        let two_kinf = 2.0 * self.kappa_infty;
        let mut excess = self.sigma0() - two_kinf;
        let mut t = 0.0;
        let mut total = 0.0;
        let piece = |excess: f64, from: f64, to: f64| {
            let h = to - from;
            two_kinf * h + excess * h * zeta(self.beta * h)
        };
        for e in &self.events {
            total += piece(excess, t, e.tau);
            excess = excess * (-self.beta * (e.tau - t)).exp() + e.delta_ibar;
            t = e.tau;
        }
        total + piece(excess, t, self.horizon)
    }

    /// Writes `tau,side,volume,delta_I,delta_Ibar`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.events {
            w.serialize(e)?;
        }
        if self.events.is_empty() {
            w.write_record(["tau", "side", "volume", "delta_I", "delta_Ibar"])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the event rows written by [`EventPath::write_csv`]; the
    /// remaining fields come from `spec` and `horizon`.
    pub fn read_csv<R: Read>(spec: &HawkesSpec, horizon: f64, reader: R) -> Result<Self> {
        let mut path = Self::empty(spec, horizon);
        let mut r = csv::Reader::from_reader(reader);
        for row in r.deserialize() {
            path.events.push(row?);
        }
        Ok(path)
    }
}

/// Simulates the flow on `(0, T]` by Ogata thinning, seeded deterministically.
pub fn simulate(spec: &HawkesSpec, horizon: f64, seed: u64) -> Result<EventPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with(spec, horizon, &mut rng)
}

/// Ogata thinning with an envelope refreshed after every candidate.
///
/// Between events each intensity relaxes monotonically toward `κ∞`, so
/// `max(κ⁺, κ∞) + max(κ⁻, κ∞)` taken at the last candidate bounds the total
/// intensity until the next one.
pub fn simulate_with<R: Rng + ?Sized>(spec: &HawkesSpec, horizon: f64, rng: &mut R) -> Result<EventPath> {
    ensure_finite("T", horizon)?;
    if horizon <= 0.0 {
        return domain(format!("horizon must be > 0, got {horizon}"));
    }
    spec.validate()?;
    let mut path = EventPath::empty(spec, horizon);
    let kinf = spec.kappa_infty;
    let (mut kp, mut km) = (spec.kappa0_plus, spec.kappa0_minus);
    let mut t = 0.0;
    loop {
        let bound = kp.max(kinf) + km.max(kinf);
        if bound <= 0.0 {
            break;
        }
        let wait: f64 = Exp1.sample(rng);
        let wait = wait / bound;
        let candidate = t + wait;
        if candidate > horizon {
            break;
        }
        let decay = (-spec.beta * wait).exp();
        kp = kinf + (kp - kinf) * decay;
        km = kinf + (km - kinf) * decay;
        t = candidate;
        let total = kp + km;
        let u: f64 = rng.random();
        if u * bound >= total {
            continue;
        }
        if path.events.last().is_some_and(|e| e.tau >= t) {
            continue;
        }
        let side: i8 = if rng.random::<f64>() * total < kp { 1 } else { -1 };
        let volume = spec.marks.sample(rng);
        let y = spec.normalize(volume);
        let (s, c) = (spec.excitation.phi_s.eval(y), spec.excitation.phi_c.eval(y));
        if side == 1 {
            kp += s;
            km += c;
        } else {
            kp += c;
            km += s;
        }
        if !(kp.is_finite() && km.is_finite()) {
            return Err(Error::NonFiniteIntensity { t });
        }
        path.events.push(MarketEvent {
            tau: t,
            side,
            volume,
            delta_i: f64::from(side) * (s - c),
            delta_ibar: s + c,
        });
    }
    Ok(path)
}
