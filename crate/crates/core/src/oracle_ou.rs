//! Closed forms for the pure-jump model with an Ornstein–Uhlenbeck factor:
//! `r = 0`, `β = σ = 0`, `μ = α0 + α1 y`, jump size `γy` at Poisson rate `ν`,
//! factor `dY = -bY dt + dW`, constant mortality and `κ1 = κ2 = κ3 = 1`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use crate::actuarial::{ActuarialModel, InsuranceMarket};
use crate::error::{domain, invalid, Error, Result};
use crate::market::{linspace, CoefficientSet, FactorDrift, FactorDynamics, FactorField, JumpField, JumpSpec, TimeCurve};
use crate::mc::{factor_path, walk, FactorScheme, PathNoise, TimeGrid};
use crate::strategy::{Preferences, StrategyRule};
use crate::Model;

/// Parameters of the pure-jump OU model.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OUParams {
    pub alpha0: f64,
    pub alpha1: f64,
    pub gamma: f64,
    pub nu: f64,
    pub b: f64,
    pub y0: f64,
    pub lambda: f64,
    pub rho: f64,
    pub eta: f64,
    pub delta: f64,
}

impl Default for OUParams {
    fn default() -> Self {
        Self {
            alpha0: 0.1,
            alpha1: 0.3,
            gamma: 0.5,
            nu: 2.0,
            b: 1.0,
            y0: 1.0,
            lambda: 0.02,
            rho: 0.03,
            eta: 0.03,
            delta: 0.5,
        }
    }
}

impl OUParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0) || !(self.nu > 0.0) {
            return Err(invalid(format!("need b > 0 and nu > 0, got b={} nu={}", self.b, self.nu)));
        }
        if !(self.lambda > 0.0) || !(self.rho >= 0.0) || !(self.eta > 0.0) {
            return Err(invalid("need lambda > 0, rho >= 0 and eta > 0"));
        }
        if !(self.delta < 1.0) || self.delta == 0.0 {
            return Err(invalid(format!("delta must be nonzero and below 1, got {}", self.delta)));
        }
        Ok(())
    }

    #[inline]
    pub fn mu(&self, y: f64) -> f64 {
        self.alpha0 + self.alpha1 * y
    }

    /// The same model in the generic representation: one jump atom at mark 1
    /// with `γ(t, y, z) = γ y z`.
    pub fn model(&self, horizon: f64, domain: (f64, f64)) -> Result<Model> {
        self.validate()?;
        let market = CoefficientSet {
            r: TimeCurve::constant(0.0),
            alpha: FactorField::affine(self.alpha0, self.alpha1),
            beta: FactorField::constant(0.0),
            sigma: FactorField::constant(0.0),
            gamma: JumpField::FactorScaled { scale: self.gamma },
            jumps: JumpSpec::single(self.nu, 1.0)?,
        };
        let factor = FactorDynamics::new(FactorDrift::MeanReverting { b: self.b }, self.b, self.b, domain)?;
        let actuarial =
            ActuarialModel::new(TimeCurve::constant(self.lambda), TimeCurve::constant(self.rho), horizon)?;
        let insurers = InsuranceMarket::new(vec![TimeCurve::constant(self.eta)], horizon, 0)?;
        let prefs = Preferences::new(self.delta, 1.0, 1.0, 1.0)?;
        Ok(Model { market, factor, actuarial, insurers, prefs })
    }
}

/// Exact OU path `Y(t+Δ) = e^(-bΔ)Y(t) + N(0, (1-e^(-2bΔ))/(2b))`.
pub fn ou_exact_factor<R: Rng + ?Sized>(params: &OUParams, grid: &TimeGrid, rng: &mut R) -> Vec<f64> {
    let b = params.b;
    let mut y = params.y0;
    let mut out = Vec::with_capacity(grid.steps() + 1);
    out.push(y);
    for k in 0..grid.steps() {
        let decay = (-b * grid.dt(k)).exp();
        let z: f64 = StandardNormal.sample(rng);
        y = decay * y + ((1.0 - decay * decay) / (2.0 * b)).sqrt() * z;
        out.push(y);
    }
    out
}

/// The noiseless OU path `e^(-bt) y0`.
pub fn ou_mean_path(params: &OUParams, grid: &TimeGrid) -> Vec<f64> {
    grid.times().iter().map(|t| (-params.b * t).exp() * params.y0).collect()
}

/// `(1/δ)[((γνy - μ)/(γνy))^(1/(δ-1)) - 1]`, the portfolio formula with the
/// `1/δ` prefactor.
pub fn ou_paper_portfolio(params: &OUParams, y: f64) -> Result<f64> {
    let jump = params.gamma * params.nu * y;
    if jump == 0.0 {
        return Err(domain("gamma * nu * y must be nonzero"));
    }
    let ratio = (jump - params.mu(y)) / jump;
    if !(ratio > 0.0) {
        return Err(domain(format!("ratio (gamma nu y - mu)/(gamma nu y) = {ratio} is not positive")));
    }
    Ok((ratio.powf(1.0 / (params.delta - 1.0)) - 1.0) / params.delta)
}

/// `(1/(γy))[((γνy - μ)/(γνy))^(1/(δ-1)) - 1]`, the explicit root of the
/// first-order condition.
pub fn ou_foc_closed_form(params: &OUParams, y: f64) -> Result<f64> {
    let gy = params.gamma * y;
    if gy == 0.0 {
        return Err(domain("gamma * y must be nonzero"));
    }
    let jump = gy * params.nu;
    let ratio = (jump - params.mu(y)) / jump;
    if !(ratio > 0.0) {
        return Err(domain(format!("ratio (gamma nu y - mu)/(gamma nu y) = {ratio} is not positive")));
    }
    Ok((ratio.powf(1.0 / (params.delta - 1.0)) - 1.0) / gy)
}

/// `μ + γyν[(1+πγy)^(δ-1) - 1]`
#[inline]
pub fn ou_foc_residual(params: &OUParams, y: f64, pi: f64) -> f64 {
    let gy = params.gamma * y;
    params.mu(y) + gy * params.nu * ((1.0 + pi * gy).powf(params.delta - 1.0) - 1.0)
}

/// Bisection root of [`ou_foc_residual`] over the portfolios with `1 + πγy > 0`.
pub fn ou_foc_portfolio(params: &OUParams, y: f64) -> Result<f64> {
    let gy = params.gamma * y;
    let f = |pi: f64| ou_foc_residual(params, y, pi);
    if gy == 0.0 {
        let mu = params.mu(y);
        if mu == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::NoInteriorSolution { lo: f64::NEG_INFINITY, hi: f64::INFINITY, f_lo: mu, f_hi: mu });
    }
    // The residual decreases from +∞ at the edge `π = -1/(γy)` when γy > 0 and
    // increases towards -∞ at that edge when γy < 0.
    let edge = -1.0 / gy * (1.0 - 1e-12);
    let (mut lo, mut hi) = if gy > 0.0 { (edge, edge.abs().max(1.0)) } else { (-edge.abs().max(1.0), edge) };
    let mut grow = 0;
    while f(lo) * f(hi) > 0.0 && grow < 60 {
        if gy > 0.0 {
            hi = 2.0 * hi + 1.0;
        } else {
            lo = 2.0 * lo - 1.0;
        }
        grow += 1;
    }
    let (mut f_lo, f_hi) = (f(lo), f(hi));
    if f_lo * f_hi > 0.0 || !f_lo.is_finite() && !f_hi.is_finite() {
        return Err(Error::NoInteriorSolution { lo, hi, f_lo, f_hi });
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Budget of the nested simulation in [`ou_adjoint_a1`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NestedConfig {
    pub n_outer: usize,
    pub n_inner: usize,
    /// Euler steps on each of `[0, t]` and `[t, T]`.
    pub steps: usize,
    pub seed: u64,
}

/// Inner estimate of `A1*(t)` at one outer state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterEstimate {
    pub x: f64,
    pub y: f64,
    pub a1: f64,
    pub stderr: f64,
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestedEstimate {
    pub states: Vec<OuterEstimate>,
    /// Outer paths ruined before `t`.
    pub outer_flagged: usize,
    pub warnings: Vec<String>,
}

/// Nested Monte Carlo estimate of `A1*(t) = e^(-ρT) E[e^(η(T-t)) X(T)^(δ-1) | F_t]`
/// for wealth driven by `rule`.
pub fn ou_adjoint_a1<R: StrategyRule + ?Sized>(
    params: &OUParams,
    model: &Model,
    rule: &R,
    x0: f64,
    t: f64,
    horizon: f64,
    cfg: &NestedConfig,
) -> Result<NestedEstimate> {
    params.validate()?;
    if !(t >= 0.0 && t <= horizon) {
        return Err(invalid(format!("need 0 <= t <= T, got t={t}, T={horizon}")));
    }
    if cfg.n_outer == 0 || cfg.n_inner == 0 || cfg.steps == 0 {
        return Err(invalid("nested simulation needs positive budgets"));
    }
    if !(x0 > 0.0) {
        return Err(domain(format!("initial wealth must be positive, got {x0}")));
    }
    let dm1 = params.delta - 1.0;
    let discount = (-params.rho * horizon).exp();
    let weight = (params.eta * (horizon - t)).exp();
    // Inner paths draw from a seed distinct from the outer one.
    let inner_seed = cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15);

    let mut outer = Vec::with_capacity(cfg.n_outer);
    let mut outer_flagged = 0;
    if t > 0.0 {
        let grid = TimeGrid::from_times(linspace(0.0, t, cfg.steps + 1))?;
        for i in 0..cfg.n_outer {
            let noise = PathNoise::draw(&grid, &model.market.jumps, cfg.seed, i as u64);
            let ys = factor_path(&model.factor, params.y0, &grid, FactorScheme::ExactOu, &noise.dw1);
            let end = walk(model, rule, x0, &grid, &ys, &noise, |_| {});
            match end.ruined {
                Some(_) => outer_flagged += 1,
                None => outer.push((end.x, ys[grid.steps()])),
            }
        }
    } else {
        outer = vec![(x0, params.y0); cfg.n_outer];
    }

    let mut states = Vec::with_capacity(outer.len());
    let mut warnings = Vec::new();
    for (i, &(x, y)) in outer.iter().enumerate() {
        if t >= horizon {
            states.push(OuterEstimate { x, y, a1: discount * x.powf(dm1), stderr: 0.0, flagged: 0 });
            continue;
        }
        let grid = TimeGrid::from_times(linspace(t, horizon, cfg.steps + 1))?;
        let mut values = Vec::with_capacity(cfg.n_inner);
        let base = cfg.n_outer as u64 + (i as u64) * cfg.n_inner as u64;
        for j in 0..cfg.n_inner {
            let stream = base + j as u64;
            let noise = PathNoise::draw(&grid, &model.market.jumps, inner_seed, stream);
            let ys = factor_path(&model.factor, y, &grid, FactorScheme::ExactOu, &noise.dw1);
            let end = walk(model, rule, x, &grid, &ys, &noise, |_| {});
            if end.ruined.is_none() {
                values.push(discount * weight * end.x.powf(dm1));
            }
        }
        if values.is_empty() {
            return Err(Error::AllPathsFlagged { n_paths: cfg.n_inner });
        }
        let n = values.len() as f64;
        let a1 = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 { values.iter().map(|v| (v - a1).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let stderr = (var / n).sqrt();
        if stderr > 0.05 * a1.abs() {
            warnings.push(format!("outer state {i}: inner stderr {stderr:.3e} exceeds 5% of the estimate {a1:.3e}"));
        }
        states.push(OuterEstimate { x, y, a1, stderr, flagged: cfg.n_inner - values.len() });
    }
    Ok(NestedEstimate { states, outer_flagged, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::FixedRule;
    use approx::assert_relative_eq;

    fn params(delta: f64, gamma: f64, alpha1: f64) -> OUParams {
        OUParams { delta, gamma, nu: 2.0, alpha0: 0.1, alpha1, ..OUParams::default() }
    }

    #[test]
    fn reference_formula_values() {
        assert_relative_eq!(ou_paper_portfolio(&params(0.5, 0.2, 0.1), 1.0).unwrap(), 6.0, max_relative = 1e-12);
        assert_relative_eq!(ou_paper_portfolio(&params(0.5, 0.5, 0.3), 1.0).unwrap(), 2.0 * (0.6f64.powi(-2) - 1.0), max_relative = 1e-12);
        let zero = OUParams { alpha0: 0.0, alpha1: 0.0, ..OUParams::default() };
        assert_eq!(ou_paper_portfolio(&zero, 1.0).unwrap(), 0.0);
        let bad = OUParams { alpha0: 5.0, ..OUParams::default() };
        assert!(matches!(ou_paper_portfolio(&bad, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn first_order_condition_values() {
        assert_relative_eq!(ou_foc_portfolio(&params(0.5, 0.2, 0.1), 1.0).unwrap(), 15.0, max_relative = 1e-12);
        let p = params(0.5, 0.5, 0.3);
        let v = ou_foc_portfolio(&p, 1.0).unwrap();
        assert_relative_eq!(v, 3.555_555_555_555_555, max_relative = 1e-12);
        assert_eq!(ou_foc_closed_form(&p, 1.0).unwrap(), ou_paper_portfolio(&p, 1.0).unwrap());
        let zero = OUParams { alpha0: 0.0, alpha1: 0.0, ..OUParams::default() };
        assert!(ou_foc_portfolio(&zero, 1.0).unwrap().abs() < 1e-14);
    }

    #[test]
    fn bisection_matches_closed_form_for_negative_jumps() {
        let p = OUParams::default();
        for y in [-2.0, -0.7, 0.4, 1.3, 2.5] {
            if let Ok(closed) = ou_foc_closed_form(&p, y) {
                let root = ou_foc_portfolio(&p, y).unwrap();
                assert_relative_eq!(root, closed, max_relative = 1e-10, epsilon = 1e-12);
                assert!(ou_foc_residual(&p, y, root).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn quiet_path_is_exact() {
        let p = OUParams { b: 0.7, y0: 2.0, ..OUParams::default() };
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let path = ou_mean_path(&p, &grid);
        assert_eq!(path[10], (-0.7f64).exp() * 2.0);
    }

    #[test]
    fn nested_estimate_degenerate_cases() {
        let p = OUParams { alpha0: 0.1, alpha1: 0.0, ..OUParams::default() };
        let model = p.model(1.0, (-4.0, 4.0)).unwrap();
        let rule = FixedRule { pi: 0.0, consumption: 0.0, premiums: vec![0.0] };
        let cfg = NestedConfig { n_outer: 3, n_inner: 5, steps: 20, seed: 1 };
        let est = ou_adjoint_a1(&p, &model, &rule, 2.0, 1.0, 1.0, &cfg).unwrap();
        for s in &est.states {
            assert_eq!(s.stderr, 0.0);
            assert_relative_eq!(s.a1, (-p.rho).exp() * 2f64.powf(p.delta - 1.0), max_relative = 1e-14);
        }
        let est = ou_adjoint_a1(&p, &model, &rule, 2.0, 0.25, 1.0, &cfg).unwrap();
        let expected = (-p.rho).exp() * (p.eta * 0.75).exp() * 2f64.powf(p.delta - 1.0);
        for s in &est.states {
            assert_relative_eq!(s.a1, expected, max_relative = 1e-12);
            assert!(s.stderr < 1e-12);
        }
    }
}
