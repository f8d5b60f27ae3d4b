mod common;

use bbsm_core::pricer::{enumerate_tree, price_european, price_many, OptionContract, PricingConfig};
use common::{random_draw, rel_close, rng, Draw};
use proptest::prelude::*;

fn admissible(seed: u64, t: usize) -> Draw {
    let mut r = rng(seed);
    loop {
        let d = random_draw(&mut r, t);
        if price_european(&OptionContract::call(d.cfg.a0, t), &d.params, &d.riskless, &d.cfg).is_ok() {
            return d;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn discounted_asset_is_martingale(seed in any::<u64>(), t in 1usize..=14) {
        let d = admissible(seed, t);
        let res = price_many(
            &[OptionContract::custom(t, |a| a), OptionContract::custom(t, |_| 1.0)],
            &d.params, &d.riskless, &d.cfg,
        ).unwrap();
        prop_assert!(rel_close(res[0].price, d.cfg.a0, 1e-10));
        prop_assert!(rel_close(res[1].price, d.cfg.beta_path[0] / d.cfg.beta_path[t], 1e-12));
    }

    #[test]
    fn put_call_consistency(seed in any::<u64>(), t in 1usize..=12, m in 0.8f64..1.2) {
        let d = admissible(seed, t);
        let k = m * d.cfg.a0;
        let res = price_many(
            &[OptionContract::call(k, t), OptionContract::put(k, t), OptionContract::custom(t, move |a| a - k)],
            &d.params, &d.riskless, &d.cfg,
        ).unwrap();
        let forward = d.cfg.a0 - k * d.cfg.beta_path[0] / d.cfg.beta_path[t];
        prop_assert!((res[0].price - res[1].price - res[2].price).abs() <= 1e-10 * d.cfg.a0);
        prop_assert!((res[2].price - forward).abs() <= 1e-10 * d.cfg.a0);
    }

    #[test]
    fn root_hedge_replicates(seed in any::<u64>(), t in 1usize..=12) {
        let d = admissible(seed, t);
        let res = price_european(&OptionContract::call(d.cfg.a0, t), &d.params, &d.riskless, &d.cfg).unwrap();
        let h = res.root_hedge.unwrap();
        let value = h.asset_units * d.cfg.a0 + h.riskless_units * d.cfg.beta_path[0];
        prop_assert!((value - res.price).abs() <= 1e-10 * res.price.abs().max(1e-12 * d.cfg.a0));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&h.asset_units));
    }

    #[test]
    fn split_depth_does_not_change_bits(seed in any::<u64>(), split in 1usize..=6) {
        let t = 11;
        let d = admissible(seed, t);
        let option = [OptionContract::call(d.cfg.a0, t), OptionContract::put(0.9 * d.cfg.a0, t)];
        let serial = price_many(&option, &d.params, &d.riskless, &d.cfg).unwrap();
        let cfg = PricingConfig { split_depth: split, ..d.cfg.clone() };
        let par = price_many(&option, &d.params, &d.riskless, &cfg).unwrap();
        for (a, b) in serial.iter().zip(&par) {
            prop_assert_eq!(a.price.to_bits(), b.price.to_bits());
        }
    }

    #[test]
    fn frames_bounded_by_depth(seed in any::<u64>(), t in 0usize..=14) {
        let d = admissible(seed, t.max(1));
        let res = price_european(&OptionContract::call(d.cfg.a0, t), &d.params, &d.riskless, &d.cfg).unwrap();
        prop_assert!(res.stats.peak_live_frames <= t + 1);
        prop_assert_eq!(res.stats.nodes_visited, (1u64 << (t + 1)) - 1);
    }

    #[test]
    fn enumeration_matches_streaming(seed in any::<u64>(), t in 1usize..=10) {
        let d = admissible(seed, t);
        let option = OptionContract::call(d.cfg.a0, t);
        let full = enumerate_tree(&option, &d.params, &d.riskless, &d.cfg).unwrap();
        let dfs = price_european(&option, &d.params, &d.riskless, &d.cfg).unwrap();
        prop_assert!(rel_close(full.price, dfs.price, 1e-13));
        prop_assert_eq!(full.levels[t].len(), 1 << t);
    }
}
