mod common;

use jumpvol::hsolver::HGrid;
use jumpvol::market::{FactorDrift, FactorDynamics, JumpSpec};
use jumpvol::mc::{
    adjoint_candidate, adjoint_residual_test, estimate_performance, necessary_condition_test, simulate_factor,
    simulate_wealth, sufficient_condition_report, variation_processes, wealth_closed_form, FactorScheme, PathBundle,
    PathNoise, SimulationConfig, SufficientOptions, TimeGrid,
};
use jumpvol::strategy::{FixedRule, OptimalRule, Perturbation, PerturbedRule, Preferences, ProportionalRule, StrategyRule};
use jumpvol::{Error, Model};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sim(paths: usize, steps: usize, seed: u64) -> SimulationConfig {
    SimulationConfig { paths, steps, seed, ..SimulationConfig::default() }
}

fn flat_grid(model: &Model, h: f64, h_y: f64, pi: f64) -> HGrid {
    let (t_nodes, y_nodes) = (vec![0.0, model.horizon()], vec![-3.0, 3.0]);
    HGrid {
        t_nodes,
        y_nodes,
        h: vec![h; 4],
        h_y: vec![h_y; 4],
        pi_star: vec![pi; 4],
        iterations: 1,
        sup_norm_history: vec![0.0],
        max_stderr: 0.0,
        warnings: Vec::new(),
    }
}

fn riskless(r: f64, lambda: f64, rho: f64) -> Model {
    common::model(
        common::market(r, r + 0.03, 0.2, 0.2, 0.0, JumpSpec::none()),
        Preferences::new(0.5, 1.0, 1.0, 1.0).unwrap(),
        lambda,
        rho,
        1.0,
    )
}

fn idle() -> FixedRule {
    FixedRule { pi: 0.0, consumption: 0.0, premiums: vec![0.0] }
}

#[test]
fn zero_noise_factor_without_drift_is_constant() {
    let fd = FactorDynamics::new(FactorDrift::Constant { value: 0.0 }, 1.0, 0.0, (-1.0, 1.0)).unwrap();
    let grid = TimeGrid::uniform(1.0, 100).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ys = simulate_factor(&fd, 0.7, &grid, FactorScheme::ZeroNoise, &mut rng);
    assert!(ys.iter().all(|y| *y == 0.7));
}

#[test]
fn exact_ou_mean() {
    let fd = common::ou_factor(0.5);
    let grid = TimeGrid::uniform(1.0, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let terminal: Vec<f64> =
        (0..20_000).map(|_| *simulate_factor(&fd, 1.5, &grid, FactorScheme::ExactOu, &mut rng).last().unwrap()).collect();
    let (m, se) = common::mean_and_stderr(&terminal);
    assert!((m - 1.5 * (-0.5f64).exp()).abs() < 3.0 * se, "mean {m} stderr {se}");
}

#[test]
fn euler_and_exact_ou_share_the_terminal_mean() {
    let model = riskless(0.02, 0.02, 0.03);
    let fd = common::ou_factor(0.5);
    let grid = TimeGrid::uniform(1.0, 2000).unwrap();
    let gaps: Vec<f64> = (0..500)
        .map(|p| {
            let noise = PathNoise::draw(&grid, &model.market.jumps, 5, p);
            let e = PathBundle::from_noise(&fd, 1.0, grid.clone(), noise.clone(), FactorScheme::Euler);
            let x = PathBundle::from_noise(&fd, 1.0, grid.clone(), noise, FactorScheme::ExactOu);
            e.y.last().unwrap() - x.y.last().unwrap()
        })
        .collect();
    let (m, _) = common::mean_and_stderr(&gaps);
    assert!(m.abs() < 2e-3, "terminal mean gap {m}");
}

#[test]
fn riskless_wealth_grows_at_the_bond_rate() {
    let model = riskless(0.05, 0.02, 0.03);
    let grid = TimeGrid::uniform(1.0, 10_000).unwrap();
    let mut bundle = PathBundle::draw(&model, 0.0, grid, FactorScheme::Euler, 1, 0);
    simulate_wealth(&model, &idle(), 1.0, &mut bundle).unwrap();
    assert!((bundle.x.last().unwrap() - 0.05f64.exp()).abs() < 1e-4);

    let prop = ProportionalRule { pi: 0.0, consumption_ratio: 0.0, premium_ratios: vec![0.0] };
    let closed = wealth_closed_form(&model, &prop, 1.0, &bundle).unwrap();
    assert!((closed.last().unwrap() - 0.05f64.exp()).abs() < 1e-12);
}

#[test]
fn log_wealth_has_the_geometric_brownian_mean() {
    let model = riskless(0.02, 0.02, 0.03);
    let (pi, mu, v) = (0.6, 0.03, 0.08);
    let rule = FixedRule { pi, consumption: 0.0, premiums: vec![0.0] };
    let grid = TimeGrid::uniform(1.0, 200).unwrap();
    let logs: Vec<f64> = (0..5000)
        .map(|p| {
            let mut b = PathBundle::draw(&model, 0.0, grid.clone(), FactorScheme::Euler, 9, p);
            simulate_wealth(&model, &rule, 1.0, &mut b).unwrap();
            b.x.last().unwrap().ln()
        })
        .collect();
    let (m, se) = common::mean_and_stderr(&logs);
    let expected = 0.02 + pi * mu - 0.5 * pi * pi * v;
    assert!((m - expected).abs() < 3.0 * se, "mean {m} expected {expected} stderr {se}");
}

#[test]
fn huge_consumption_ruins_every_path() {
    let model = riskless(0.02, 0.02, 0.03);
    let rule = FixedRule { pi: 0.0, consumption: 1e3, premiums: vec![0.0] };
    let grid = TimeGrid::uniform(1.0, 100).unwrap();
    let mut b = PathBundle::draw(&model, 0.0, grid, FactorScheme::Euler, 1, 0);
    simulate_wealth(&model, &rule, 1.0, &mut b).unwrap();
    assert!(b.is_flagged());
    let err = estimate_performance(&model, &rule, 1.0, 0.0, &sim(10, 100, 1)).unwrap_err();
    assert!(matches!(err, Error::AllPathsFlagged { .. }));
}

#[test]
fn deterministic_payoff_has_zero_variance() {
    let model = riskless(0.05, 0.0, 0.0);
    let est = estimate_performance(&model, &idle(), 2.0, 0.0, &sim(50, 500, 3)).unwrap();
    let exact = (2.0 * 0.05f64.exp()).sqrt() / 0.5;
    let scheme = (2.0 * (1.0 + 0.05 / 500.0f64).powi(500)).sqrt() / 0.5;
    assert!((est.mean - scheme).abs() < 1e-12 * scheme, "{} vs {scheme}", est.mean);
    assert!((est.mean - exact).abs() < 0.05 * 0.05 / 500.0 * exact, "{} vs {exact}", est.mean);
    assert!(est.stderr < 1e-12);
    assert_eq!(est.components.legacy, 0.0);
    assert_eq!(est.components.consumption, 0.0);
}

#[test]
fn performance_components_and_clt_scaling() {
    let model = common::merton();
    let grid = common::solve_small(&model);
    let rule = OptimalRule::new(&model, &grid);
    let a = estimate_performance(&model, &rule, 1.0, 0.0, &sim(2000, 100, 4)).unwrap();
    let b = estimate_performance(&model, &rule, 1.0, 0.0, &sim(4000, 100, 4)).unwrap();
    assert!((a.components.total() - a.mean).abs() < 1e-12);
    assert!(a.stderr >= 0.0 && a.components.legacy > 0.0);
    let ratio = b.stderr / a.stderr;
    assert!((ratio * 2f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn common_random_numbers_reproduce_bit_for_bit() {
    let model = common::jump_model();
    let grid = common::solve_small(&model);
    let rule = OptimalRule::new(&model, &grid);
    let cfg = sim(500, 100, 77);
    assert_eq!(estimate_performance(&model, &rule, 1.0, 0.0, &cfg).unwrap(), estimate_performance(&model, &rule, 1.0, 0.0, &cfg).unwrap());
    let tg = TimeGrid::uniform(1.0, 100).unwrap();
    let draw = || {
        let mut b = PathBundle::draw(&model, 0.0, tg.clone(), FactorScheme::Euler, 77, 12);
        simulate_wealth(&model, &rule, 1.0, &mut b).unwrap();
        b
    };
    assert_eq!(draw(), draw());
}

#[test]
fn compensated_jumps_leave_the_mean_unchanged() {
    let mut model = riskless(0.02, 0.02, 0.03);
    model.market.gamma = jumpvol::market::JumpField::Mark { scale: 1.0 };
    model.market.jumps = JumpSpec::single(2.0, -0.2).unwrap();
    let rule = FixedRule { pi: 0.5, consumption: 0.0, premiums: vec![0.0] };
    let grid = TimeGrid::uniform(1.0, 200).unwrap();
    let xs: Vec<f64> = (0..20_000)
        .map(|p| {
            let mut b = PathBundle::draw(&model, 0.0, grid.clone(), FactorScheme::Euler, 21, p);
            simulate_wealth(&model, &rule, 1.0, &mut b).unwrap();
            *b.x.last().unwrap()
        })
        .collect();
    let (m, se) = common::mean_and_stderr(&xs);
    // Euler mean of the same drift without jumps
    let expected = (1.0 + (0.02 + 0.5 * 0.03) / 200.0f64).powi(200);
    assert!((m - expected).abs() < 3.0 * se, "mean {m} expected {expected} stderr {se}");
}

#[test]
fn adjoint_candidate_values() {
    let model = riskless(0.02, 0.02, 0.03);
    let zero = flat_grid(&model, 0.0, 0.0, 0.0);
    let adj = adjoint_candidate(&model, &zero, 0.5, 1.0, 0.0).unwrap();
    assert_eq!(adj.a1, 1.0);
    assert_eq!((adj.b1, adj.b2), (0.0, 0.0));
    assert!(adj.d1.iter().all(|d| *d == 0.0));
    assert_eq!((adj.a2, adj.b3, adj.b4), (0.0, 0.0, 0.0));

    let g = flat_grid(&model, 0.2, 0.0, 0.0);
    let adj = adjoint_candidate(&model, &g, 0.5, 4.0, 0.0).unwrap();
    assert!((adj.a1 - 0.5 * (-0.2f64).exp()).abs() < 1e-15);
    assert!(adjoint_candidate(&model, &g, 0.5, 0.0, 0.0).is_err());
}

#[test]
fn merton_adjoint_is_a_martingale_and_shift_is_detected() {
    let model = common::merton();
    let grid = common::solve_small(&model);
    let cfg = sim(4000, 200, 8);
    let rep = adjoint_residual_test(&model, &grid, 1.0, 0.0, &cfg, &[0.5, 1.0]).unwrap();
    assert!(rep.passed(3.0), "{}", rep.to_report("adjoint"));
    assert_eq!(rep.n_paths + rep.flagged, 4000);
    let shifted = adjoint_residual_test(&model, &grid.shifted(0.1), 1.0, 0.0, &cfg, &[0.5, 1.0]).unwrap();
    assert!(!shifted.passed(3.0));
}

#[test]
fn variation_processes_match_resimulation() {
    let model = common::jump_model();
    let grid = common::solve_small(&model);
    let rule = OptimalRule::new(&model, &grid);
    let tg = TimeGrid::uniform(1.0, 200).unwrap();
    let mut bundle = PathBundle::draw(&model, 0.0, tg, FactorScheme::Euler, 13, 3);
    simulate_wealth(&model, &rule, 1.0, &mut bundle).unwrap();

    let (x1, y1) = variation_processes(&model, &rule, Perturbation::Constant(0.0), &bundle).unwrap();
    assert!(x1.iter().chain(&y1).all(|v| *v == 0.0));

    let zeta = Perturbation::TanhFactor;
    let (x1, y1) = variation_processes(&model, &rule, zeta, &bundle).unwrap();
    assert!(y1.iter().all(|v| *v == 0.0));
    let eps = 1e-5;
    let mut bumped = bundle.clone();
    simulate_wealth(&model, &PerturbedRule::new(&rule).along(zeta, eps), 1.0, &mut bumped).unwrap();
    let scale = x1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(scale > 0.0);
    for (k, (a, b)) in bundle.x.iter().zip(&bumped.x).enumerate() {
        let fd = (b - a) / eps;
        assert!((fd - x1[k]).abs() < 1e-3 * scale, "step {k}: fd {fd} variation {}", x1[k]);
    }
}

#[test]
fn merton_necessary_condition() {
    let model = common::merton();
    let grid = common::solve_small(&model);
    let rule = OptimalRule::new(&model, &grid);
    let cfg = sim(10_000, 100, 10);
    let zetas = [Perturbation::Constant(1.0), Perturbation::Constant(0.0)];
    let rep = necessary_condition_test(&model, &rule, Some(&grid), &zetas, Some(0.2), 1.0, 0.0, &cfg).unwrap();
    assert!(rep.passed(), "{}", rep.to_report());
    let zero = &rep.zetas[1];
    assert_eq!((zero.fd_mean, zero.fd_stderr, zero.var_mean, zero.var_stderr), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn sufficient_report_flags_a_convex_terminal_reward() {
    let model = common::merton();
    let grid = common::solve_small(&model);
    let cfg = sim(500, 100, 11);
    let rep = sufficient_condition_report(&model, &grid, 1.0, 0.0, &cfg, &SufficientOptions::default()).unwrap();
    assert!(!rep.has_failures(), "{rep}");
    assert!(rep.lines.iter().filter(|l| l.name.contains("integrability")).count() == 3);

    let convex = SufficientOptions { terminal: Some(|x| x * x), skip_integrability: true, ..SufficientOptions::default() };
    let rep = sufficient_condition_report(&model, &grid, 1.0, 0.0, &cfg, &convex).unwrap();
    assert!(rep.has_failures());
}

#[test]
fn closed_form_needs_a_proportional_rule() {
    let model = riskless(0.02, 0.02, 0.03);
    let tg = TimeGrid::uniform(1.0, 10).unwrap();
    let b = PathBundle::draw(&model, 0.0, tg, FactorScheme::Euler, 1, 0);
    assert!(wealth_closed_form(&model, &idle(), 1.0, &b).is_err());
    assert!(idle().wealth_ratios(0.0, 0.0).is_none());
}
