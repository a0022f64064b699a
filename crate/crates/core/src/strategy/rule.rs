use crate::hsolver::HGrid;
use crate::Model;

use super::{consumption_ratio, legacy_ratio};

/// Controls applied at one instant: portfolio fraction, consumption rate and
/// one premium rate per insurer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Controls {
    pub pi: f64,
    pub c: f64,
    pub premiums: Vec<f64>,
}

impl Controls {
    pub fn new(insurers: usize) -> Self {
        Self { pi: 0.0, c: 0.0, premiums: vec![0.0; insurers] }
    }

    pub fn total_premium(&self) -> f64 {
        self.premiums.iter().sum()
    }
}

/// Controls of a wealth-homogeneous rule expressed per unit of wealth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WealthRatios {
    pub pi: f64,
    /// `c / x`
    pub consumption: f64,
    /// `Σ p_n / x`
    pub premium: f64,
}

/// Feedback map `(t, x, y) -> (π, c, p)`.
pub trait StrategyRule: Sync {
    fn insurers(&self) -> usize;

    fn controls_into(&self, t: f64, x: f64, y: f64, out: &mut Controls);

    fn controls(&self, t: f64, x: f64, y: f64) -> Controls {
        let mut out = Controls::new(self.insurers());
        self.controls_into(t, x, y, &mut out);
        out
    }

    /// Per-unit-wealth controls, for rules where `c` and `p` scale with `x`.
    fn wealth_ratios(&self, _t: f64, _y: f64) -> Option<WealthRatios> {
        None
    }
}

impl<R: StrategyRule + ?Sized> StrategyRule for &R {
    fn insurers(&self) -> usize {
        (**self).insurers()
    }

    fn controls_into(&self, t: f64, x: f64, y: f64, out: &mut Controls) {
        (**self).controls_into(t, x, y, out)
    }

    fn wealth_ratios(&self, t: f64, y: f64) -> Option<WealthRatios> {
        (**self).wealth_ratios(t, y)
    }
}

/// The optimal feedback rule read off a solved [`HGrid`].
///
/// `π*` is interpolated from the grid, consumption and the premium follow
/// from the adjoint ansatz `A1 = x^(δ-1) e^(-h)`.
#[derive(Debug, Clone, Copy)]
pub struct OptimalRule<'a> {
    model: &'a Model,
    grid: &'a HGrid,
}

impl<'a> OptimalRule<'a> {
    pub fn new(model: &'a Model, grid: &'a HGrid) -> Self {
        Self { model, grid }
    }

    pub fn grid(&self) -> &'a HGrid {
        self.grid
    }

    pub fn model(&self) -> &'a Model {
        self.model
    }
}

impl StrategyRule for OptimalRule<'_> {
    fn insurers(&self) -> usize {
        self.model.insurers.len()
    }

    fn controls_into(&self, t: f64, x: f64, y: f64, out: &mut Controls) {
        let ratios = self.wealth_ratios(t, y).expect("optimal rule is wealth homogeneous");
        out.pi = ratios.pi;
        out.c = ratios.consumption * x;
        out.premiums.iter_mut().for_each(|p| *p = 0.0);
        if ratios.premium > 0.0 {
            let n = self.model.insurers.select_insurer(t);
            out.premiums[n] = ratios.premium * x;
        }
    }

    fn wealth_ratios(&self, t: f64, y: f64) -> Option<WealthRatios> {
        let (am, prefs) = (&self.model.actuarial, &self.model.prefs);
        let (h, pi) = self.grid.h_and_pi_at(t, y);
        let d = am.discount_exponent(t);
        let consumption = consumption_ratio(prefs, d, h);
        let lambda = am.lambda(t);
        let eta = self.model.insurers.min_eta(t);
        let premium = match legacy_ratio(prefs, d, h, eta, lambda) {
            Some(theta) if theta > 1.0 => eta * (theta - 1.0),
            _ => 0.0,
        };
        Some(WealthRatios { pi, consumption, premium })
    }
}

/// Constant portfolio fraction with fixed consumption and premium rates.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedRule {
    pub pi: f64,
    pub consumption: f64,
    pub premiums: Vec<f64>,
}

impl StrategyRule for FixedRule {
    fn insurers(&self) -> usize {
        self.premiums.len()
    }

    fn controls_into(&self, _t: f64, _x: f64, _y: f64, out: &mut Controls) {
        out.pi = self.pi;
        out.c = self.consumption;
        out.premiums.copy_from_slice(&self.premiums);
    }
}

/// Constant portfolio fraction with consumption and premiums proportional to wealth.
#[derive(Debug, Clone, PartialEq)]
pub struct ProportionalRule {
    pub pi: f64,
    pub consumption_ratio: f64,
    pub premium_ratios: Vec<f64>,
}

impl StrategyRule for ProportionalRule {
    fn insurers(&self) -> usize {
        self.premium_ratios.len()
    }

    fn controls_into(&self, _t: f64, x: f64, _y: f64, out: &mut Controls) {
        out.pi = self.pi;
        out.c = self.consumption_ratio * x;
        for (p, r) in out.premiums.iter_mut().zip(&self.premium_ratios) {
            *p = r * x;
        }
    }

    fn wealth_ratios(&self, _t: f64, _y: f64) -> Option<WealthRatios> {
        Some(WealthRatios {
            pi: self.pi,
            consumption: self.consumption_ratio,
            premium: self.premium_ratios.iter().sum(),
        })
    }
}

/// Bounded portfolio perturbation `ζ(t, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    Constant(f64),
    /// `value` on `[from, to]`, zero elsewhere.
    Window { from: f64, to: f64, value: f64 },
    /// `tanh(y)`
    TanhFactor,
}

impl Perturbation {
    #[inline]
    pub fn eval(&self, t: f64, y: f64) -> f64 {
        match *self {
            Perturbation::Constant(v) => v,
            Perturbation::Window { from, to, value } => {
                if t >= from && t <= to {
                    value
                } else {
                    0.0
                }
            }
            Perturbation::TanhFactor => y.tanh(),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Perturbation::Constant(v) => format!("zeta={v}"),
            Perturbation::Window { from, to, value } => format!("zeta={value} on [{from},{to}]"),
            Perturbation::TanhFactor => "zeta=tanh(y)".to_string(),
        }
    }
}

/// A base rule with a shifted portfolio, scaled consumption or no insurance.
#[derive(Debug, Clone)]
pub struct PerturbedRule<R> {
    pub base: R,
    pub pi_shift: f64,
    /// Adds `ℓ ζ(t, y)` to the portfolio.
    pub direction: Option<(Perturbation, f64)>,
    pub consumption_scale: f64,
    pub premium_off: bool,
}

impl<R: StrategyRule> PerturbedRule<R> {
    pub fn new(base: R) -> Self {
        Self { base, pi_shift: 0.0, direction: None, consumption_scale: 1.0, premium_off: false }
    }

    pub fn shift_pi(mut self, shift: f64) -> Self {
        self.pi_shift = shift;
        self
    }

    pub fn along(mut self, zeta: Perturbation, ell: f64) -> Self {
        self.direction = Some((zeta, ell));
        self
    }

    pub fn scale_consumption(mut self, scale: f64) -> Self {
        self.consumption_scale = scale;
        self
    }

    pub fn without_premium(mut self) -> Self {
        self.premium_off = true;
        self
    }

    #[inline]
    fn pi_offset(&self, t: f64, y: f64) -> f64 {
        self.pi_shift + self.direction.map_or(0.0, |(z, ell)| ell * z.eval(t, y))
    }
}

impl<R: StrategyRule> StrategyRule for PerturbedRule<R> {
    fn insurers(&self) -> usize {
        self.base.insurers()
    }

    fn controls_into(&self, t: f64, x: f64, y: f64, out: &mut Controls) {
        self.base.controls_into(t, x, y, out);
        out.pi += self.pi_offset(t, y);
        out.c *= self.consumption_scale;
        if self.premium_off {
            out.premiums.iter_mut().for_each(|p| *p = 0.0);
        }
    }

    fn wealth_ratios(&self, t: f64, y: f64) -> Option<WealthRatios> {
        self.base.wealth_ratios(t, y).map(|r| WealthRatios {
            pi: r.pi + self.pi_offset(t, y),
            consumption: r.consumption * self.consumption_scale,
            premium: if self.premium_off { 0.0 } else { r.premium },
        })
    }
}
