#![allow(dead_code)]

use jumpvol::actuarial::{ActuarialModel, InsuranceMarket};
use jumpvol::hsolver::{solve_h_fixed_point, HGrid, HSolverConfig, PhiConfig};
use jumpvol::market::{CoefficientSet, FactorDrift, FactorDynamics, FactorField, JumpField, JumpSpec, TimeCurve};
use jumpvol::strategy::Preferences;
use jumpvol::Model;

pub fn market(r: f64, alpha: f64, beta: f64, sigma: f64, gamma_scale: f64, jumps: JumpSpec) -> CoefficientSet {
    CoefficientSet {
        r: TimeCurve::constant(r),
        alpha: FactorField::constant(alpha),
        beta: FactorField::constant(beta),
        sigma: FactorField::constant(sigma),
        gamma: JumpField::Mark { scale: gamma_scale },
        jumps,
    }
}

/// Factor `dY = -bY dt + dW1` on `[-3, 3]`.
pub fn ou_factor(b: f64) -> FactorDynamics {
    FactorDynamics::new(FactorDrift::MeanReverting { b }, b.max(1e-9), b, (-3.0, 3.0)).unwrap()
}

pub fn model(market: CoefficientSet, prefs: Preferences, lambda: f64, rho: f64, horizon: f64) -> Model {
    Model {
        market,
        factor: ou_factor(1.0),
        actuarial: ActuarialModel::new(TimeCurve::constant(lambda), TimeCurve::constant(rho), horizon).unwrap(),
        insurers: InsuranceMarket::new(vec![TimeCurve::constant(0.03)], horizon, 0).unwrap(),
        prefs,
    }
}

/// Factor-free market without jumps, Merton fraction 1/3.
pub fn merton() -> Model {
    model(
        market(0.02, 0.05, 0.3, 0.3, 0.0, JumpSpec::none()),
        Preferences::new(0.5, 0.04, 4.0, 1.0).unwrap(),
        0.02,
        0.03,
        1.0,
    )
}

/// One-year market with a factor-dependent drift and two jump atoms.
pub fn jump_model() -> Model {
    let jumps = JumpSpec::new(
        1.0,
        vec![
            jumpvol::market::JumpAtom { mark: -0.1, prob: 0.6 },
            jumpvol::market::JumpAtom { mark: 0.05, prob: 0.4 },
        ],
    )
    .unwrap();
    let mut cs = market(0.02, 0.06, 0.2, 0.15, 1.0, jumps);
    cs.alpha = FactorField::affine(0.06, 0.005);
    model(cs, Preferences::new(-1.0, 0.04, 4.0, 1.0).unwrap(), 0.02, 0.03, 1.0)
}

pub fn small_solver() -> (HSolverConfig, PhiConfig) {
    (HSolverConfig { t_nodes: 11, y_nodes: 13, ..HSolverConfig::default() }, PhiConfig { pairs: 32, seed: 3, ..PhiConfig::default() })
}

pub fn solve_small(model: &Model) -> HGrid {
    let (h, p) = small_solver();
    solve_h_fixed_point(model, &h, &p).unwrap()
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

pub fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
