mod common;

use jumpvol::actuarial::{ActuarialModel, InsuranceMarket};
use jumpvol::market::TimeCurve;
use proptest::prelude::*;

fn arb_lambda() -> impl Strategy<Value = TimeCurve> {
    prop_oneof![
        (0.0..0.2f64).prop_map(TimeCurve::constant),
        (0.0..0.1f64, 0.0..0.02f64).prop_map(|(a, b)| TimeCurve::linear(a, b)),
    ]
}

#[test]
fn density_integrates_to_death_probability() {
    let am = ActuarialModel::new(TimeCurve::linear(0.01, 0.003), TimeCurve::constant(0.03), 20.0).unwrap();
    let integral = common::simpson(|t| am.death_density(t).unwrap(), 0.0, 20.0, 4000);
    let expected = 1.0 - am.survival_probability(20.0).unwrap();
    assert!((integral - expected).abs() < 1e-9, "{integral} vs {expected}");
}

#[test]
fn tie_counter_tracks_equal_ratios() {
    let im = InsuranceMarket::new(vec![TimeCurve::constant(0.04), TimeCurve::constant(0.04)], 1.0, 0).unwrap();
    let before = im.tie_count();
    assert_eq!(im.select_insurer(0.5), 0);
    assert!(im.tie_count() > before);
}

#[test]
fn crossing_curves_switch_insurer() {
    let im = InsuranceMarket::new(vec![TimeCurve::linear(0.02, 0.02), TimeCurve::constant(0.03)], 1.0, 100).unwrap();
    assert_eq!(im.select_insurer(0.1), 0);
    assert_eq!(im.select_insurer(0.9), 1);
}

proptest! {
    #[test]
    fn survival_is_a_nonincreasing_probability(lambda in arb_lambda(), a in 0.0..10.0f64, b in 0.0..10.0f64) {
        let am = ActuarialModel::new(lambda, TimeCurve::constant(0.03), 10.0).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (s_lo, s_hi) = (am.survival_probability(lo).unwrap(), am.survival_probability(hi).unwrap());
        prop_assert!(s_hi <= s_lo);
        prop_assert!(s_hi > 0.0 && s_lo <= 1.0);
    }

    #[test]
    fn hazard_is_density_over_survival(lambda in arb_lambda(), t in 0.0..10.0f64) {
        let am = ActuarialModel::new(lambda.clone(), TimeCurve::constant(0.03), 10.0).unwrap();
        let recovered = am.death_density(t).unwrap() / am.survival_probability(t).unwrap();
        prop_assert!((recovered - lambda.eval(t)).abs() < 1e-8);
    }

    #[test]
    fn density_is_minus_derivative_of_survival(lambda in arb_lambda(), t in 0.01..9.99f64) {
        let am = ActuarialModel::new(lambda, TimeCurve::constant(0.03), 10.0).unwrap();
        let h = 1e-4;
        let fd = -(am.survival_probability(t + h).unwrap() - am.survival_probability(t - h).unwrap()) / (2.0 * h);
        prop_assert!((fd - am.death_density(t).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn argmin_is_scale_invariant(etas in prop::collection::vec(0.001..0.2f64, 1..6), scale in 0.01..100.0f64, t in 0.0..1.0f64) {
        let curves: Vec<_> = etas.iter().map(|e| TimeCurve::constant(*e)).collect();
        let scaled: Vec<_> = etas.iter().map(|e| TimeCurve::constant(e * scale)).collect();
        let a = InsuranceMarket::new(curves, 1.0, 0).unwrap();
        let b = InsuranceMarket::new(scaled, 1.0, 0).unwrap();
        prop_assert_eq!(a.select_insurer(t), b.select_insurer(t));
    }

    #[test]
    fn legacy_adds_premium_payouts(x in 0.0..100.0f64, p in prop::collection::vec(0.0..10.0f64, 3)) {
        let etas = [0.05, 0.03, 0.07];
        let im = InsuranceMarket::new(etas.iter().map(|e| TimeCurve::constant(*e)).collect(), 1.0, 0).unwrap();
        let expected = x + p.iter().zip(etas).map(|(p, e)| p / e).sum::<f64>();
        prop_assert!((im.legacy(x, &p, 0.5).unwrap() - expected).abs() < 1e-12 * expected.max(1.0));
    }

    #[test]
    fn negative_premium_is_rejected(x in 0.0..100.0f64, p in -10.0..-1e-9f64) {
        let im = InsuranceMarket::new(vec![TimeCurve::constant(0.03)], 1.0, 0).unwrap();
        prop_assert!(im.legacy(x, &[p], 0.5).is_err());
    }
}
