use mihexec::figure1;
use mihexec::hawkes::{simulate, EventPath};
use mihexec::market::{realized_cost, replay, ImpactParams, MarketState, RateSegment, TradeSchedule};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A liquidating schedule with random blocks and rates.
fn random_schedule(x0: f64, horizon: f64, seed: u64) -> TradeSchedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * horizon).collect();
    times.sort_by(f64::total_cmp);
    let event_blocks = times[..3].iter().map(|&t| (t, rng.random_range(-50.0..50.0))).collect();
    let rate_segments = times[3..]
        .windows(2)
        .map(|w| RateSegment {
            start: w[0],
            end: w[1],
            rate: rng.random_range(-400.0..400.0),
        })
        .collect();
    let mut s = TradeSchedule {
        initial_block: rng.random_range(-100.0..100.0),
        event_blocks,
        rate_segments,
        terminal_block: 0.0,
    };
    s.terminal_block = -x0 - s.total_traded();
    s
}

fn negated(path: &EventPath) -> EventPath {
    let mut p = path.clone();
    for e in &mut p.events {
        e.side = -e.side;
    }
    p
}

fn negated_schedule(s: &TradeSchedule) -> TradeSchedule {
    s.scaled(-1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cost_is_invariant_under_full_sign_flip(
        seed in 0u64..1_000_000,
        x0 in -800.0f64..800.0,
        s0 in -5.0f64..5.0,
        d0 in -1.0f64..1.0,
        rho in 0.5f64..40.0,
        nu in 0.0f64..1.0,
        eps in 0.0f64..0.95,
    ) {
        let params = ImpactParams { q: 100.0, rho, nu, epsilon: eps };
        let path = simulate(&figure1::spec(), 1.0, seed).unwrap();
        let sched = random_schedule(x0, 1.0, seed ^ 0x5a5a);
        let a = realized_cost(&path, &sched, MarketState::new(s0, d0, x0), &params).unwrap();
        let b = realized_cost(&negated(&path), &negated_schedule(&sched), MarketState::new(-s0, -d0, -x0), &params).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn depth_scales_out(
        seed in 0u64..1_000_000,
        x0 in -800.0f64..800.0,
        s0 in -5.0f64..5.0,
        d0 in -1.0f64..1.0,
        q in 1.0f64..500.0,
        rho in 0.5f64..40.0,
    ) {
        let deep = ImpactParams { q, rho, nu: 0.3, epsilon: 0.2 };
        let unit = ImpactParams { q: 1.0, ..deep };
        let path = simulate(&figure1::spec(), 1.0, seed).unwrap();
        let sched = random_schedule(x0, 1.0, seed.wrapping_mul(31));
        let a = q * realized_cost(&path, &sched, MarketState::new(s0, d0, x0), &deep).unwrap();
        let b = realized_cost(&path, &sched, MarketState::new(q * s0, q * d0, x0), &unit).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn replay_is_deterministic_and_trace_sums_to_cost(seed in 0u64..1_000_000, x0 in -800.0f64..800.0) {
        let params = ImpactParams { q: 100.0, rho: 16.0, nu: 0.3, epsilon: 0.3 };
        let path = simulate(&figure1::spec(), 1.0, seed).unwrap();
        let sched = random_schedule(x0, 1.0, seed + 1);
        let one = replay(&path, &sched, MarketState::new(1.0, 0.1, x0), &params, true).unwrap();
        let two = replay(&path, &sched, MarketState::new(1.0, 0.1, x0), &params, true).unwrap();
        prop_assert_eq!(&one, &two);
        let summed: f64 = one.trace.iter().map(|r| r.cost_increment).sum();
        prop_assert!((summed - one.cost).abs() <= 1e-9 * one.cost.abs().max(1.0));
        prop_assert!(one.final_state.x.abs() <= 1e-9 * x0.abs().max(1.0));
        for r in &one.trace {
            prop_assert!((r.p - r.s - r.d).abs() <= 1e-12 * r.p.abs().max(1.0));
        }
    }
}

#[test]
fn block_waits_for_order_at_same_time() {
    let params = ImpactParams { q: 100.0, rho: 2.0, nu: 0.5, epsilon: 0.0 };
    let spec = figure1::spec();
    let path = EventPath::from_orders(&spec, 1.0, &[(0.5, 1, 100.0)]).unwrap();
    let sched = TradeSchedule {
        event_blocks: vec![(0.5, 10.0)],
        terminal_block: -10.0,
        ..Default::default()
    };
    let r = replay(&path, &sched, MarketState::new(0.0, 0.0, 0.0), &params, true).unwrap();
    // the block pays the post-order price 0.5 + 0.5
    let block = r.trace.iter().find(|row| row.dx == 10.0).unwrap();
    assert!((block.cost_increment - (1.0 * 10.0 + 100.0 / 200.0)).abs() < 1e-12);
}
