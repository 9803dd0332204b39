mod common;

use mgarch::likelihood::neg_loglik;
use mgarch::params::{GeneralParams, ModelOrder};
use mgarch::riskcast::{mv_weights, quantile};
use mgarch::simulate::{simulate, SimulateOptions};
use mgarch::volfilter::run_filter;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{brute_log_h, rand_corr, rand_params};

fn order_strategy() -> impl Strategy<Value = ModelOrder> {
    (1usize..=4, 0usize..=3, 0usize..=1).prop_filter_map("admissible order", |(m, r, s)| {
        if r + 2 * s == 0 {
            return None;
        }
        ModelOrder::with_default_window(m, r, s).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pack_unpack_round_trip(order in order_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = rand_params(&mut rng, order, 0.9);
        let back = GeneralParams::unpack(p.pack().as_slice(), order).unwrap();
        prop_assert_eq!(&back, &p);
        let json = serde_json::to_string(&p).unwrap();
        let again: GeneralParams<f64> = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(again, p);
    }

    #[test]
    fn canonical_form_leaves_likelihood_unchanged(m in 2usize..=3, seed in any::<u64>()) {
        let order = ModelOrder::with_default_window(m, 2, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = rand_params(&mut rng, order, 0.8);
        let y = simulate(&p, 150, &SimulateOptions::default(), seed).unwrap().panel;
        let c = p.canonicalize().unwrap();
        prop_assert!(c.lambda.windows(2).all(|w| w[0] > w[1]));
        let (a, b) = (neg_loglik(&p, &y).unwrap(), neg_loglik(&c, &y).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        prop_assert_eq!(c.canonicalize().unwrap(), c);
    }

    #[test]
    fn filter_matches_explicit_sum(order in order_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = rand_params(&mut rng, order, 0.9);
        let y = DMatrix::from_fn(60, order.m, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin() + 0.05);
        let ly = y.map(|v| (v * v).ln());
        let fast = run_filter(&p, &ly, &y).unwrap().log_h;
        prop_assert!((fast - brute_log_h(&p, &y)).amax() < 1e-9);
    }

    #[test]
    fn mv_weights_sum_to_one_and_beat_equal_weights(m in 1usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = rand_corr(&mut rng, m, 1.0) * 2.5;
        let w = mv_weights(&h).unwrap();
        prop_assert!((w.sum() - 1.0).abs() < 1e-12);
        let eq = DVector::from_element(m, 1.0 / m as f64);
        prop_assert!(w.dot(&(&h * &w)) <= eq.dot(&(&h * &eq)) * (1.0 + 1e-12));
    }

    #[test]
    fn quantile_is_monotone_and_bounded(x in prop::collection::vec(-1e3f64..1e3, 1..50), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (qa, qb) = (quantile(&x, lo), quantile(&x, hi));
        prop_assert!(qa <= qb);
        let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(qa >= min && qb <= max);
    }
}
