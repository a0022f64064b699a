mod common;

use jumpvol::mc::{simulate_factor, FactorScheme, TimeGrid};
use jumpvol::oracle_ou::{ou_adjoint_a1, ou_exact_factor, ou_foc_portfolio, ou_paper_portfolio, NestedConfig, OUParams};
use jumpvol::strategy::{portfolio_foc_residual, FixedRule};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn variance_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    (var, ((m4 - var * var) / n).sqrt())
}

#[test]
fn exact_factor_mean_at_one() {
    let p = OUParams { b: 1.0, y0: 2.0, ..OUParams::default() };
    let grid = TimeGrid::uniform(1.0, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let ends: Vec<f64> = (0..20_000).map(|_| *ou_exact_factor(&p, &grid, &mut rng).last().unwrap()).collect();
    let (m, se) = common::mean_and_stderr(&ends);
    assert!((m - 0.735_758_882_342_884_6).abs() < 3.0 * se, "mean {m} stderr {se}");
}

#[test]
fn exact_factor_reaches_the_stationary_variance() {
    let p = OUParams { b: 1.5, y0: 3.0, ..OUParams::default() };
    let grid = TimeGrid::uniform(20.0, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let ends: Vec<f64> = (0..20_000).map(|_| *ou_exact_factor(&p, &grid, &mut rng).last().unwrap()).collect();
    let (var, se) = variance_and_stderr(&ends);
    assert!((var - 1.0 / 3.0).abs() < 3.0 * se, "variance {var} stderr {se}");
}

#[test]
fn exact_and_euler_factor_agree_in_law() {
    let p = OUParams::default();
    let model = p.model(1.0, (-3.0, 3.0)).unwrap();
    let coarse = TimeGrid::uniform(1.0, 5).unwrap();
    let fine = TimeGrid::uniform(1.0, 500).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let exact: Vec<f64> = (0..10_000).map(|_| *ou_exact_factor(&p, &coarse, &mut rng).last().unwrap()).collect();
    let euler: Vec<f64> = (0..10_000)
        .map(|_| *simulate_factor(&model.factor, p.y0, &fine, FactorScheme::Euler, &mut rng).last().unwrap())
        .collect();
    let ((m1, s1), (m2, s2)) = (common::mean_and_stderr(&exact), common::mean_and_stderr(&euler));
    assert!((m1 - m2).abs() < 3.0 * s1.hypot(s2), "means {m1} {m2}");
    let ((v1, e1), (v2, e2)) = (variance_and_stderr(&exact), variance_and_stderr(&euler));
    assert!((v1 - v2).abs() < 3.0 * e1.hypot(e2), "variances {v1} {v2}");
}

#[test]
fn reference_formula_differs_away_from_the_coincidence_point() {
    let p = OUParams::default();
    let at_one = (ou_paper_portfolio(&p, 1.0).unwrap() - ou_foc_portfolio(&p, 1.0).unwrap()).abs();
    assert!(at_one < 1e-12, "gap at y = 1: {at_one}");
    let gap = (ou_paper_portfolio(&p, 2.0).unwrap() - ou_foc_portfolio(&p, 2.0).unwrap()).abs();
    assert!(gap > 0.1, "gap {gap}");
}

#[test]
fn inner_stderr_follows_clt_scaling() {
    let p = OUParams::default();
    let model = p.model(1.0, (-3.0, 3.0)).unwrap();
    let rule = FixedRule { pi: 0.5, consumption: 0.0, premiums: vec![0.0] };
    let run = |n_inner| {
        let cfg = NestedConfig { n_outer: 20, n_inner, steps: 50, seed: 5 };
        let est = ou_adjoint_a1(&p, &model, &rule, 1.0, 0.5, 1.0, &cfg).unwrap();
        est.states.iter().map(|s| s.stderr).sum::<f64>() / est.states.len() as f64
    };
    let ratio = run(4000) / run(2000);
    assert!((ratio * 2f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
}

proptest! {
    #[test]
    fn foc_root_solves_the_generic_condition(y in 0.3..3.0f64, alpha1 in 0.0..0.3f64, delta in prop_oneof![-2.0..-0.1f64, 0.1..0.9f64]) {
        let p = OUParams { alpha1, delta, ..OUParams::default() };
        let model = p.model(1.0, (0.0, 3.0)).unwrap();
        let pi = ou_foc_portfolio(&p, y).unwrap();
        let r = portfolio_foc_residual(&model.prefs, &model.market, 0.0, y, pi, 0.0).unwrap();
        prop_assert!(r.abs() < 1e-10, "residual {}", r);
    }

    #[test]
    fn forms_coincide_where_gamma_y_equals_delta(delta in 0.1..0.9f64, gamma in 0.2..1.0f64) {
        let y = delta / gamma;
        let p = OUParams { delta, gamma, alpha0: 0.05, alpha1: 0.05, ..OUParams::default() };
        prop_assume!(p.gamma * p.nu * y > p.mu(y));
        let (a, b) = (ou_paper_portfolio(&p, y).unwrap(), ou_foc_portfolio(&p, y).unwrap());
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }
}
