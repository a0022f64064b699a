//! CRRA preferences, the Hamiltonian, and the optimal controls: closed-form
//! consumption, the Kuhn–Tucker premium, and the root-solved portfolio.

mod rule;

pub use rule::{
    Controls, FixedRule, OptimalRule, Perturbation, PerturbedRule, ProportionalRule, StrategyRule, WealthRatios,
};

use serde::Deserialize;

use crate::actuarial::{ActuarialModel, InsuranceMarket};
use crate::error::{domain, invalid, Error, Result};
use crate::market::CoefficientSet;
use crate::Model;

/// Half-width of the default portfolio search bracket.
pub const PORTFOLIO_BOUND: f64 = 5.0;
/// Relative shrink applied to bracket ends imposed by `1 + πγ > 0`.
const EDGE_SHRINK: f64 = 1e-9;
/// Default bracket-width tolerance of the root solve.
pub const PORTFOLIO_XTOL: f64 = 1e-14;
/// Largest accepted `|residual|` at the returned root.
pub const PORTFOLIO_FTOL: f64 = 1e-10;

/// Which of the three utilities: consumption, legacy or terminal wealth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtilityKind {
    Consumption,
    Legacy,
    Terminal,
}

impl UtilityKind {
    /// Maps the conventional 1-based index to a kind.
    pub fn from_index(which: u8) -> Result<Self> {
        match which {
            1 => Ok(Self::Consumption),
            2 => Ok(Self::Legacy),
            3 => Ok(Self::Terminal),
            other => Err(invalid(format!("utility index must be 1, 2 or 3, got {other}"))),
        }
    }
}

/// Power utility `U_i(x) = κ_i x^δ / δ` for the three utility terms.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(try_from = "RawPreferences")]
pub struct Preferences {
    delta: f64,
    kappa: [f64; 3],
}

#[derive(Deserialize)]
struct RawPreferences {
    delta: f64,
    kappa1: f64,
    kappa2: f64,
    kappa3: f64,
}

impl TryFrom<RawPreferences> for Preferences {
    type Error = Error;

    fn try_from(raw: RawPreferences) -> Result<Self> {
        Preferences::new(raw.delta, raw.kappa1, raw.kappa2, raw.kappa3)
    }
}

impl Preferences {
    pub fn new(delta: f64, kappa1: f64, kappa2: f64, kappa3: f64) -> Result<Self> {
        if !(delta < 1.0) || delta == 0.0 || !delta.is_finite() {
            return Err(invalid(format!("delta must be finite, below 1 and nonzero, got {delta}")));
        }
        for (i, k) in [kappa1, kappa2, kappa3].iter().enumerate() {
            if !(*k > 0.0) || !k.is_finite() {
                return Err(invalid(format!("kappa{} must be positive, got {k}", i + 1)));
            }
        }
        Ok(Self { delta, kappa: [kappa1, kappa2, kappa3] })
    }

    #[inline]
    pub fn delta(&self) -> f64 {
        self.delta
    }

    #[inline]
    pub fn kappa(&self, which: UtilityKind) -> f64 {
        self.kappa[which as usize]
    }

    /// Returns a copy with one weight replaced.
    pub fn with_kappa(mut self, which: UtilityKind, value: f64) -> Result<Self> {
        if !(value > 0.0) {
            return Err(invalid(format!("kappa must be positive, got {value}")));
        }
        self.kappa[which as usize] = value;
        Ok(self)
    }

    /// `κ x^δ / δ`
    pub fn utility(&self, which: UtilityKind, x: f64) -> Result<f64> {
        if x > 0.0 {
            return Ok(self.kappa(which) * x.powf(self.delta) / self.delta);
        }
        if x == 0.0 && self.delta > 0.0 {
            return Ok(0.0);
        }
        Err(domain(format!("utility undefined at x = {x} with delta = {}", self.delta)))
    }

    /// `κ x^(δ-1)`
    pub fn marginal_utility(&self, which: UtilityKind, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(domain(format!("marginal utility needs x > 0, got {x}")));
        }
        Ok(self.kappa(which) * x.powf(self.delta - 1.0))
    }

    /// `κ (δ-1) x^(δ-2)`, always negative.
    pub fn utility_curvature(&self, which: UtilityKind, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(domain(format!("utility curvature needs x > 0, got {x}")));
        }
        Ok(self.kappa(which) * (self.delta - 1.0) * x.powf(self.delta - 2.0))
    }

    /// Inverse marginal utility `I(y) = (y/κ)^(1/(δ-1))`.
    pub fn inverse_marginal(&self, which: UtilityKind, y: f64) -> Result<f64> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(domain(format!("inverse marginal utility needs y > 0, got {y}")));
        }
        Ok((y / self.kappa(which)).powf(1.0 / (self.delta - 1.0)))
    }
}

/// `c/x` implied by the adjoint ansatz `A1 = x^(δ-1) e^(-h)`.
///
/// `discount_exponent` is `∫₀ᵗ(ρ+λ)`.
#[inline]
pub fn consumption_ratio(prefs: &Preferences, discount_exponent: f64, h: f64) -> f64 {
    ((discount_exponent - h - prefs.kappa(UtilityKind::Consumption).ln()) / (prefs.delta - 1.0)).exp()
}

/// Target legacy over wealth, `L*/x`, implied by the adjoint ansatz.
///
/// The optimal premium is `η x (θ_L - 1)⁺`. Returns `None` when `λ = 0`.
#[inline]
pub fn legacy_ratio(prefs: &Preferences, discount_exponent: f64, h: f64, eta: f64, lambda: f64) -> Option<f64> {
    if lambda <= 0.0 {
        return None;
    }
    let log = eta.ln() + discount_exponent - h - prefs.kappa(UtilityKind::Legacy).ln() - lambda.ln();
    Some((log / (prefs.delta - 1.0)).exp())
}

/// Optimal consumption `(A1/κ1)^(1/(δ-1)) e^(∫₀ᵗ(ρ+λ)/(δ-1))`.
pub fn optimal_consumption(prefs: &Preferences, am: &ActuarialModel, t: f64, a1: f64) -> Result<f64> {
    if !(a1 > 0.0) || !a1.is_finite() {
        return Err(domain(format!("consumption needs A1 > 0, got {a1}")));
    }
    let d = am.discount_exponent(t);
    let k = prefs.kappa(UtilityKind::Consumption);
    Ok((((a1 / k).ln() + d) / (prefs.delta - 1.0)).exp())
}

/// Premium vector and Kuhn–Tucker multipliers at one `(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PremiumDecision {
    pub premiums: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// Zero-based index of the cheapest insurer.
    pub insurer: usize,
    pub tie: bool,
    /// `-A1 + (λ/η_n) e^(-∫(ρ+λ)) U2'(legacy) + ξ_n` for every insurer.
    pub stationarity: Vec<f64>,
}

impl PremiumDecision {
    pub fn total(&self) -> f64 {
        self.premiums.iter().sum()
    }

    /// `Σ p_n ξ_n`
    pub fn slackness(&self) -> f64 {
        self.premiums.iter().zip(&self.multipliers).map(|(p, m)| p * m).sum()
    }

    pub fn max_stationarity(&self) -> f64 {
        self.stationarity.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }
}

/// Kuhn–Tucker premium: only the cheapest insurer `n*` can receive a premium,
/// `p_{n*} = max{0, η_{n*}[(η_{n*}A1/(κ2λ))^(1/(δ-1)) e^(∫(ρ+λ)/(δ-1)) - x]}`.
pub fn optimal_premium(
    prefs: &Preferences,
    am: &ActuarialModel,
    im: &InsuranceMarket,
    t: f64,
    x: f64,
    a1: f64,
) -> Result<PremiumDecision> {
    if !(x >= 0.0) {
        return Err(invalid(format!("wealth must be nonnegative, got {x}")));
    }
    if !(a1 > 0.0) || !a1.is_finite() {
        return Err(domain(format!("premium needs A1 > 0, got {a1}")));
    }
    let lambda = am.lambda(t);
    if lambda <= 0.0 {
        return Err(Error::InsuranceUndefined { t });
    }
    let (insurer, tie) = im.argmin(t);
    let star = im.select_insurer(t);
    debug_assert_eq!(star, insurer);
    let d = am.discount_exponent(t);
    let eta = im.eta(insurer, t);
    let k2 = prefs.kappa(UtilityKind::Legacy);
    let target = (((eta * a1 / (k2 * lambda)).ln() + d) / (prefs.delta - 1.0)).exp();

    let m = im.len();
    let mut premiums = vec![0.0; m];
    if target > x {
        premiums[insurer] = eta * (target - x);
    }
    let legacy = im.legacy(x, &premiums, t)?;
    let weight = lambda * (-d).exp();
    let mut multipliers = Vec::with_capacity(m);
    let mut stationarity = Vec::with_capacity(m);
    for n in 0..m {
        let marginal = weight / im.eta(n, t) * prefs.marginal_utility(UtilityKind::Legacy, legacy)?;
        let xi = if premiums[n] > 0.0 { 0.0 } else { (a1 - marginal).max(0.0) };
        multipliers.push(xi);
        stationarity.push(-a1 + marginal + xi);
    }
    Ok(PremiumDecision { premiums, multipliers, insurer, tie, stationarity })
}

/// Portfolio coefficients frozen at one `(t, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioInputs {
    pub mu: f64,
    pub beta: f64,
    /// `β² + σ²`
    pub variance: f64,
    /// `(ν-weight, γ)` per jump atom.
    pub jumps: Vec<(f64, f64)>,
}

impl PortfolioInputs {
    pub fn at(cs: &CoefficientSet, t: f64, y: f64) -> Self {
        let rate = cs.jumps.rate();
        Self {
            mu: cs.mu(t, y),
            beta: cs.beta(t, y),
            variance: cs.diffusion_variance(t, y),
            jumps: cs.jumps.atoms().iter().map(|a| (rate * a.prob, cs.gamma(t, y, a.mark))).collect(),
        }
    }

    /// First atom index with `1 + πγ ≤ 0`.
    fn violation(&self, pi: f64) -> Option<usize> {
        self.jumps.iter().position(|&(_, g)| !(1.0 + pi * g > 0.0))
    }

    /// `βh_y - {μ - (1-δ)(β²+σ²)π - Σ w[1 - (1+πγ)^(δ-1)]γ}`, unchecked.
    #[inline]
    fn residual_unchecked(&self, delta: f64, pi: f64, h_y: f64) -> f64 {
        let jump: f64 = self
            .jumps
            .iter()
            .map(|&(w, g)| w * (1.0 - (1.0 + pi * g).powf(delta - 1.0)) * g)
            .sum();
        self.beta * h_y - (self.mu - (1.0 - delta) * self.variance * pi - jump)
    }

    /// Admissible search bracket: `[-5, 5]` intersected with `{1 + πγ > 0}`.
    pub fn bracket(&self) -> (f64, f64) {
        let (mut lo, mut hi) = (-PORTFOLIO_BOUND, PORTFOLIO_BOUND);
        for &(_, g) in &self.jumps {
            if g > 0.0 {
                lo = lo.max(-1.0 / g * (1.0 - EDGE_SHRINK));
            } else if g < 0.0 {
                hi = hi.min(-1.0 / g * (1.0 - EDGE_SHRINK));
            }
        }
        (lo, hi)
    }

    /// `-(1-δ)[β²+σ² + Σ w (1+πγ)^(δ-2) γ²]`
    pub fn second_derivative(&self, delta: f64, pi: f64) -> f64 {
        let jump: f64 = self.jumps.iter().map(|&(w, g)| w * (1.0 + pi * g).powf(delta - 2.0) * g * g).sum();
        -(1.0 - delta) * (self.variance + jump)
    }
}

/// Residual of the portfolio first-order condition,
/// `βh_y - {μ - (1-δ)(β²+σ²)π - ∫[1 - (1+πγ)^(δ-1)]γ ν(dz)}`.
///
/// The residual is strictly increasing in `π` whenever `β²+σ² > 0` or jumps
/// are present.
pub fn portfolio_foc_residual(
    prefs: &Preferences,
    cs: &CoefficientSet,
    t: f64,
    y: f64,
    pi: f64,
    h_y: f64,
) -> Result<f64> {
    let inputs = PortfolioInputs::at(cs, t, y);
    if let Some(i) = inputs.violation(pi) {
        let z = cs.jumps.atoms()[i].mark;
        return Err(domain(format!("1 + pi*gamma <= 0 at atom {} (z = {z}) for pi = {pi}", i + 1)));
    }
    Ok(inputs.residual_unchecked(prefs.delta, pi, h_y))
}

/// The same condition as arranged after substituting the adjoint candidates:
/// `βh_y - {μ + (δ-1)π(β²+σ²) + ∫γ[(1+πγ)^(δ-1) - 1]ν(dz)}`.
pub fn portfolio_foc_residual_substituted(
    prefs: &Preferences,
    cs: &CoefficientSet,
    t: f64,
    y: f64,
    pi: f64,
    h_y: f64,
) -> Result<f64> {
    let inputs = PortfolioInputs::at(cs, t, y);
    if let Some(i) = inputs.violation(pi) {
        return Err(domain(format!("1 + pi*gamma <= 0 at atom {}", i + 1)));
    }
    let d = prefs.delta;
    let jump: f64 = inputs.jumps.iter().map(|&(w, g)| w * g * ((1.0 + pi * g).powf(d - 1.0) - 1.0)).sum();
    Ok(inputs.beta * h_y - (inputs.mu + (d - 1.0) * pi * inputs.variance + jump))
}

/// Root of the portfolio condition with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioSolution {
    pub pi: f64,
    pub residual: f64,
    pub second_derivative: f64,
    /// Whether the root lies in `(0, 1)`.
    pub in_unit_interval: bool,
    pub bracket: (f64, f64),
    pub iterations: usize,
}

/// Solves the portfolio condition on the admissible bracket.
pub fn solve_portfolio(prefs: &Preferences, cs: &CoefficientSet, t: f64, y: f64, h_y: f64) -> Result<PortfolioSolution> {
    solve_portfolio_inputs(prefs.delta, &PortfolioInputs::at(cs, t, y), h_y, PORTFOLIO_XTOL)
}

/// [`solve_portfolio`] on frozen coefficients with an explicit bracket-width tolerance.
pub fn solve_portfolio_inputs(delta: f64, inputs: &PortfolioInputs, h_y: f64, xtol: f64) -> Result<PortfolioSolution> {
    let (lo, hi) = inputs.bracket();
    let f = |pi: f64| inputs.residual_unchecked(delta, pi, h_y);
    let (f_lo, f_hi) = (f(lo), f(hi));
    let finish = |pi: f64, iterations: usize| -> Result<PortfolioSolution> {
        let residual = f(pi);
        if !(residual.abs() < PORTFOLIO_FTOL) {
            return Err(Error::NoInteriorSolution { lo, hi, f_lo, f_hi });
        }
        Ok(PortfolioSolution {
            pi,
            residual,
            second_derivative: inputs.second_derivative(delta, pi),
            in_unit_interval: pi > 0.0 && pi < 1.0,
            bracket: (lo, hi),
            iterations,
        })
    };
    if f_lo == 0.0 && f_hi == 0.0 {
        // Flat residual: every position is stationary, take the riskless one.
        return finish(0.0, 0);
    }
    if f_lo == 0.0 {
        return finish(lo, 0);
    }
    if f_hi == 0.0 {
        return finish(hi, 0);
    }
    if !(f_lo.signum() != f_hi.signum()) {
        return Err(Error::NoInteriorSolution { lo, hi, f_lo, f_hi });
    }

    // Illinois regula falsi, with a bisection step every fourth iteration.
    let (mut a, mut fa, mut b, mut fb) = (lo, f_lo, hi, f_hi);
    for it in 1..=400 {
        let mut c = b - fb * (b - a) / (fb - fa);
        if !(c > a.min(b) && c < a.max(b)) || it % 4 == 0 {
            c = 0.5 * (a + b);
        }
        let fc = f(c);
        if fc == 0.0 {
            return finish(c, it);
        }
        if fc.signum() == fb.signum() {
            fa *= 0.5;
        } else {
            a = b;
            fa = fb;
        }
        b = c;
        fb = fc;
        if (b - a).abs() < xtol * b.abs().max(1.0) {
            let pi = if fa.abs() < fb.abs() { a } else { b };
            return finish(pi, it);
        }
    }
    let pi = if fa.abs() < fb.abs() { a } else { b };
    finish(pi, 400)
}

/// Adjoint processes at one instant. Jump components hold one value per atom.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdjointState {
    pub a1: f64,
    pub b1: f64,
    pub b2: f64,
    pub d1: Vec<f64>,
    pub a2: f64,
    pub b3: f64,
    pub b4: f64,
    pub d2: Vec<f64>,
}

impl AdjointState {
    pub fn is_finite(&self) -> bool {
        [self.a1, self.b1, self.b2, self.a2, self.b3, self.b4].iter().all(|v| v.is_finite())
            && self.d1.iter().chain(&self.d2).all(|v| v.is_finite())
    }
}

/// `∫ γ D1 ν(dz)` as an atom sum.
#[inline]
fn jump_pairing(cs: &CoefficientSet, t: f64, y: f64, d: &[f64]) -> f64 {
    let rate = cs.jumps.rate();
    cs.jumps
        .atoms()
        .iter()
        .zip(d)
        .map(|(a, &v)| rate * a.prob * cs.gamma(t, y, a.mark) * v)
        .sum()
}

/// The Hamiltonian
///
/// `e^(-∫(ρ+λ))[U1(c) + λU2(legacy)] + [x(r+πμ) - c - Σp]A1 + g(y)A2
///  + πx(βB1 + σB2) + B3 + πx∫γD1 ν(dz)`.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian(
    model: &Model,
    t: f64,
    x: f64,
    y: f64,
    c: f64,
    pi: f64,
    premiums: &[f64],
    adj: &AdjointState,
) -> Result<f64> {
    if !(x > 0.0) {
        return Err(domain(format!("Hamiltonian needs x > 0, got {x}")));
    }
    if !(c >= 0.0) {
        return Err(invalid(format!("consumption must be nonnegative, got {c}")));
    }
    let (am, cs, prefs) = (&model.actuarial, &model.market, &model.prefs);
    if adj.d1.len() != cs.jumps.atoms().len() {
        return Err(invalid("jump adjoint needs one value per atom"));
    }
    let lambda = am.lambda(t);
    let legacy = model.insurers.legacy(x, premiums, t)?;
    let mut reward = prefs.utility(UtilityKind::Consumption, c)?;
    if lambda > 0.0 {
        reward += lambda * prefs.utility(UtilityKind::Legacy, legacy)?;
    }
    let discount = (-am.discount_exponent(t)).exp();
    let drift = x * (cs.r(t) + pi * cs.mu(t, y)) - c - premiums.iter().sum::<f64>();
    Ok(discount * reward
        + drift * adj.a1
        + model.factor.g(y) * adj.a2
        + pi * x * (cs.beta(t, y) * adj.b1 + cs.sigma(t, y) * adj.b2)
        + adj.b3
        + pi * x * jump_pairing(cs, t, y, &adj.d1))
}

/// `∂μ/∂y A1 + ∂β/∂y B1 + ∂σ/∂y B2 + ∫∂γ/∂y D1 ν(dz)`, the factor derivative
/// of the portfolio stationarity relation. Zero whenever no coefficient
/// depends on the factor.
pub fn factor_stationarity(cs: &CoefficientSet, t: f64, y: f64, adj: &AdjointState) -> f64 {
    let step = 1e-5 * y.abs().max(1.0);
    let d = |f: &dyn Fn(f64) -> f64| (f(y + step) - f(y - step)) / (2.0 * step);
    let rate = cs.jumps.rate();
    let jump: f64 = cs
        .jumps
        .atoms()
        .iter()
        .zip(&adj.d1)
        .map(|(a, &v)| rate * a.prob * d(&|yy| cs.gamma(t, yy, a.mark)) * v)
        .sum();
    d(&|yy| cs.mu(t, yy)) * adj.a1 + d(&|yy| cs.beta(t, yy)) * adj.b1 + d(&|yy| cs.sigma(t, yy)) * adj.b2 + jump
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuarial::ActuarialModel;
    use crate::market::{FactorField, JumpField, JumpSpec, TimeCurve};

    fn merton(delta: f64) -> (Preferences, CoefficientSet) {
        let cs = CoefficientSet {
            r: TimeCurve::constant(0.02),
            alpha: FactorField::constant(0.05),
            beta: FactorField::constant(0.3),
            sigma: FactorField::constant(0.3),
            gamma: JumpField::Mark { scale: 1.0 },
            jumps: JumpSpec::none(),
        };
        (Preferences::new(delta, 1.0, 1.0, 1.0).unwrap(), cs)
    }

    fn flat_model(rho: f64, lambda: f64) -> ActuarialModel {
        ActuarialModel::new(TimeCurve::constant(lambda), TimeCurve::constant(rho), 20.0).unwrap()
    }

    #[test]
    fn utility_examples() {
        let p = Preferences::new(0.5, 1.0, 1.0, 1.0).unwrap();
        assert!((p.utility(UtilityKind::Consumption, 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(p.utility(UtilityKind::Consumption, 0.0).unwrap(), 0.0);
        let q = Preferences::new(-1.0, 2.0, 1.0, 1.0).unwrap();
        assert!((q.utility(UtilityKind::Consumption, 4.0).unwrap() + 0.5).abs() < 1e-15);
        assert!(q.utility(UtilityKind::Consumption, 0.0).is_err());
    }

    #[test]
    fn preference_validation() {
        assert!(Preferences::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(Preferences::new(1.0, 1.0, 1.0, 1.0).is_err());
        assert!(Preferences::new(0.5, 0.0, 1.0, 1.0).is_err());
        assert!(UtilityKind::from_index(4).is_err());
    }

    #[test]
    fn inverse_marginal_examples() {
        let p = Preferences::new(0.5, 1.0, 1.0, 1.0).unwrap();
        assert!((p.inverse_marginal(UtilityKind::Legacy, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((p.inverse_marginal(UtilityKind::Legacy, 4.0).unwrap() - 0.0625).abs() < 1e-15);
        let q = Preferences::new(-1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((q.inverse_marginal(UtilityKind::Terminal, 8.0).unwrap() - 8f64.powf(-0.5)).abs() < 1e-15);
        assert!(q.inverse_marginal(UtilityKind::Terminal, 0.0).is_err());
    }

    #[test]
    fn consumption_examples() {
        let p = Preferences::new(0.5, 1.3, 1.0, 1.0).unwrap();
        let am = flat_model(0.0, 0.0);
        assert!((optimal_consumption(&p, &am, 3.0, 1.3).unwrap() - 1.0).abs() < 1e-14);
        let p = Preferences::new(0.5, 1.0, 1.0, 1.0).unwrap();
        assert!((optimal_consumption(&p, &am, 0.0, 4.0).unwrap() - 0.0625).abs() < 1e-15);
        let am = flat_model(0.01, 0.02);
        let c = optimal_consumption(&p, &am, 10.0, 1.0).unwrap();
        assert!((c - (-0.6f64).exp()).abs() < 1e-12);
        assert!(optimal_consumption(&p, &am, 1.0, 0.0).is_err());
    }

    #[test]
    fn consumption_ratio_matches_closed_form() {
        let p = Preferences::new(-1.0, 0.04, 4.0, 1.0).unwrap();
        let am = flat_model(0.03, 0.02);
        let (t, x, h) = (0.7, 2.5f64, 0.3f64);
        let a1 = x.powf(p.delta() - 1.0) * (-h).exp();
        let c = optimal_consumption(&p, &am, t, a1).unwrap();
        let ratio = consumption_ratio(&p, am.discount_exponent(t), h);
        assert!((c - ratio * x).abs() < 1e-12 * c);
    }

    #[test]
    fn premium_example() {
        let p = Preferences::new(0.5, 1.0, 1.0, 1.0).unwrap();
        let am = flat_model(0.0, 0.02);
        let im = InsuranceMarket::new(vec![TimeCurve::constant(0.03)], 20.0, 3).unwrap();
        let d = optimal_premium(&p, &am, &im, 0.0, 0.2, 1.0).unwrap();
        assert!((d.premiums[0] - 0.03 * (1.5f64.powi(-2) - 0.2)).abs() < 1e-15);
        assert_eq!(d.slackness(), 0.0);
        assert!(d.max_stationarity() < 1e-12);
    }

    #[test]
    fn premium_vanishes_for_large_wealth() {
        let p = Preferences::new(0.5, 1.0, 1.0, 1.0).unwrap();
        let am = flat_model(0.0, 0.02);
        let im = InsuranceMarket::new(
            vec![TimeCurve::constant(0.05), TimeCurve::constant(0.03), TimeCurve::constant(0.07)],
            20.0,
            3,
        )
        .unwrap();
        let d = optimal_premium(&p, &am, &im, 1.0, 1e6, 1.0).unwrap();
        assert!(d.premiums.iter().all(|&v| v == 0.0));
        assert!(d.multipliers.iter().all(|&v| v >= 0.0));
        let d = optimal_premium(&p, &am, &im, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(d.insurer, 1);
        assert!(d.premiums[1] > 0.0 && d.premiums[0] == 0.0 && d.premiums[2] == 0.0);
    }

    #[test]
    fn premium_without_mortality_is_undefined() {
        let p = Preferences::new(0.5, 1.0, 1.0, 1.0).unwrap();
        let am = flat_model(0.01, 0.0);
        let im = InsuranceMarket::new(vec![TimeCurve::constant(0.03)], 20.0, 3).unwrap();
        assert!(matches!(optimal_premium(&p, &am, &im, 0.0, 1.0, 1.0), Err(Error::InsuranceUndefined { .. })));
    }

    #[test]
    fn merton_root() {
        let (p, mut cs) = merton(0.5);
        cs.alpha = FactorField::constant(0.05);
        let s = solve_portfolio(&p, &cs, 0.0, 0.0, 0.0).unwrap();
        assert!((s.pi - 1.0 / 3.0).abs() < 1e-12);
        assert!(s.in_unit_interval);
        assert!(s.second_derivative < 0.0);
        let r0 = portfolio_foc_residual(&p, &cs, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert!((r0 + 0.03).abs() < 1e-15);
    }

    #[test]
    fn zero_excess_return_gives_zero_position() {
        let (p, mut cs) = merton(0.5);
        cs.alpha = FactorField::constant(0.02);
        assert_eq!(portfolio_foc_residual(&p, &cs, 0.0, 0.0, 0.0, 0.0).unwrap(), 0.0);
        assert!(solve_portfolio(&p, &cs, 0.0, 0.0, 0.0).unwrap().pi.abs() < 1e-14);
    }

    #[test]
    fn flat_residual_cases() {
        let (p, mut cs) = merton(0.5);
        cs.beta = FactorField::constant(0.0);
        cs.sigma = FactorField::constant(0.0);
        assert!(matches!(solve_portfolio(&p, &cs, 0.0, 0.0, 0.0), Err(Error::NoInteriorSolution { .. })));
        cs.alpha = FactorField::constant(0.02);
        assert_eq!(solve_portfolio(&p, &cs, 0.0, 0.0, 0.0).unwrap().pi, 0.0);
    }

    #[test]
    fn jump_atom_bounds_the_bracket() {
        let (p, mut cs) = merton(-1.0);
        cs.jumps = JumpSpec::single(1.0, -0.5).unwrap();
        let inputs = PortfolioInputs::at(&cs, 0.0, 0.0);
        let (lo, hi) = inputs.bracket();
        assert_eq!(lo, -5.0);
        assert!(hi < 2.0 && hi > 2.0 - 1e-8);
        assert!(portfolio_foc_residual(&p, &cs, 0.0, 0.0, 2.5, 0.0).is_err());
        let s = solve_portfolio(&p, &cs, 0.0, 0.0, 0.0).unwrap();
        assert!(s.residual.abs() < 1e-10);
    }

    #[test]
    fn both_arrangements_share_roots() {
        let (p, mut cs) = merton(-1.0);
        cs.jumps = JumpSpec::new(
            1.0,
            vec![
                crate::market::JumpAtom { mark: -0.1, prob: 0.5 },
                crate::market::JumpAtom { mark: 0.05, prob: 0.5 },
            ],
        )
        .unwrap();
        for h_y in [-0.2, 0.0, 0.15] {
            let s = solve_portfolio(&p, &cs, 0.0, 0.0, h_y).unwrap();
            let other = portfolio_foc_residual_substituted(&p, &cs, 0.0, 0.0, s.pi, h_y).unwrap();
            assert!(other.abs() < 1e-10);
            for pi in [-1.0, 0.3, 2.0] {
                let a = portfolio_foc_residual(&p, &cs, 0.0, 0.0, pi, h_y).unwrap();
                let b = portfolio_foc_residual_substituted(&p, &cs, 0.0, 0.0, pi, h_y).unwrap();
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn hamiltonian_trivial_cases() {
        let model = crate::test_support::model_with(
            merton(0.5).1,
            Preferences::new(0.5, 1.0, 1.0, 1.0).unwrap(),
            0.0,
            0.0,
        );
        let zero = AdjointState::default();
        assert_eq!(hamiltonian(&model, 0.3, 2.0, 0.1, 0.0, 0.0, &[0.0], &zero).unwrap(), 0.0);
        let adj = AdjointState { a1: 1.7, ..AdjointState::default() };
        let h = hamiltonian(&model, 0.3, 2.0, 0.0, 0.0, 0.0, &[0.0], &adj).unwrap();
        assert!((h - 2.0 * 0.02 * 1.7).abs() < 1e-15);
    }
}
