use mihexec::figure1;
use mihexec::hawkes::{simulate, HawkesSpec, MarkLaw};
use mihexec::montecarlo::Estimate;
use proptest::prelude::*;

#[test]
fn poisson_event_count_has_poisson_mean() {
    let kappa0 = 3.5;
    let horizon = 2.0;
    let spec = HawkesSpec::poisson(kappa0, MarkLaw::Exponential { mean: 10.0 });
    let counts: Vec<f64> = (0..10_000)
        .map(|seed| simulate(&spec, horizon, seed).unwrap().events.len() as f64)
        .collect();
    let e = Estimate::from_samples(&counts).unwrap();
    assert!(e.covers(2.0 * kappa0 * horizon, 3.0), "{e:?}");
}

#[test]
fn poisson_inter_arrivals_pass_ks() {
    let rate = 2.0 * 4.0;
    let spec = HawkesSpec::poisson(4.0, MarkLaw::Dirac { m1: 1.0 });
    let path = simulate(&spec, 1400.0, 5).unwrap();
    let mut gaps: Vec<f64> = std::iter::once(path.events[0].tau)
        .chain(path.events.windows(2).map(|w| w[1].tau - w[0].tau))
        .take(10_000)
        .collect();
    assert_eq!(gaps.len(), 10_000);
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len() as f64;
    let d = gaps
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = -(-rate * x).exp_m1();
            (f - i as f64 / n).abs().max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max);
    // asymptotic critical value at the 1% level
    let critical = (-(0.01f64 / 2.0).ln() / 2.0).sqrt() / n.sqrt();
    assert!(d < critical, "D = {d}, critical {critical}");
}

#[test]
fn hawkes_means_follow_their_linear_odes() {
    let mut spec = figure1::spec();
    spec.kappa0_plus = 90.0;
    spec.kappa0_minus = 30.0;
    let horizon = 1.0;
    let m = spec.moments().unwrap();
    let lam = spec.beta - m.iota_s - m.iota_c;
    let fixed = 2.0 * spec.beta * spec.kappa_infty / lam;
    let sigma0 = spec.sigma0();
    // E[count] = ∫ E[Σ_t] dt, E[δ_T] = δ₀e^{−ηT}
    let want_count = fixed * horizon + (sigma0 - fixed) * (1.0 - (-lam * horizon).exp()) / lam;
    let want_delta = spec.delta0() * (-spec.eta().unwrap() * horizon).exp();
    let mut counts = Vec::new();
    let mut deltas = Vec::new();
    for seed in 0..10_000 {
        let path = simulate(&spec, horizon, 90_000 + seed).unwrap();
        counts.push(path.events.len() as f64);
        deltas.push(path.state_at(horizon).unwrap().delta);
    }
    let c = Estimate::from_samples(&counts).unwrap();
    let d = Estimate::from_samples(&deltas).unwrap();
    assert!(c.covers(want_count, 3.0), "{c:?} vs {want_count}");
    assert!(d.covers(want_delta, 3.0), "{d:?} vs {want_delta}");
}

#[test]
fn sides_split_by_intensity() {
    // unexcited flows with unequal baselines: buys make up κ₀⁺/(κ₀⁺+κ₀⁻) of orders
    let mut spec = HawkesSpec::poisson(0.0, MarkLaw::Dirac { m1: 1.0 });
    spec.kappa0_plus = 6.0;
    spec.kappa0_minus = 2.0;
    let path = simulate(&spec, 2000.0, 9).unwrap();
    let n = path.events.len() as f64;
    let buys = path.events.iter().filter(|e| e.side == 1).count() as f64;
    let se = (0.75 * 0.25 / n).sqrt();
    assert!((buys / n - 0.75).abs() < 3.0 * se);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn intensities_stay_above_their_floor(seed in 0u64..1_000_000, k0p in 0.0f64..80.0, k0m in 0.0f64..80.0) {
        let mut spec = figure1::spec();
        spec.kappa0_plus = k0p;
        spec.kappa0_minus = k0m;
        let path = simulate(&spec, 0.5, seed).unwrap();
        let floor = spec.kappa_infty.min(k0p).min(k0m);
        let mut last = 0.0;
        for e in &path.events {
            prop_assert!(e.tau > last && e.tau <= 0.5);
            let between = 0.5 * (e.tau + last);
            last = e.tau;
            for t in [e.tau, between] {
                let s = path.state_at(t).unwrap();
                prop_assert!(s.kappa_plus >= floor - 1e-12 && s.kappa_minus >= floor - 1e-12);
                if k0p >= spec.kappa_infty && k0m >= spec.kappa_infty {
                    prop_assert!(s.kappa_plus >= spec.kappa_infty - 1e-12);
                    prop_assert!(s.kappa_minus >= spec.kappa_infty - 1e-12);
                }
            }
        }
    }

    #[test]
    fn delta_scaled_by_decay_is_theta(seed in 0u64..1_000_000) {
        let path = simulate(&figure1::spec(), 1.0, seed).unwrap();
        // Θ sums signed terms e^{βτ}ΔI; round-off is relative to their magnitudes
        let mut magnitude = path.delta0().abs();
        for e in &path.events {
            magnitude += ((figure1::BETA * e.tau).exp() * e.delta_i).abs();
            let s = path.state_at(e.tau).unwrap();
            let lhs = s.delta * (figure1::BETA * e.tau).exp();
            let rhs = path.delta0() + s.theta;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * magnitude, "{} vs {} (scale {})", lhs, rhs, magnitude);
        }
    }
}
