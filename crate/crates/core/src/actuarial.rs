//! Mortality, discounting and the multi-insurer life-insurance market.
//!
//! The death time is never simulated. It enters the problem only through the
//! hazard-weighted integrands, so this module exposes the cumulative hazard
//! and discount integrals rather than a lifetime sampler.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{invalid, Error, Result};
use crate::market::{linspace, TimeCurve};

/// Number of intervals in the cached cumulative tables.
pub const DEFAULT_TABLE_INTERVALS: usize = 10_000;

/// Hazard and discount curves on `[0, T]` with cached cumulative integrals.
#[derive(Debug, Clone)]
pub struct ActuarialModel {
    lambda: TimeCurve,
    rho: TimeCurve,
    horizon: f64,
    nodes: Vec<f64>,
    cum_lambda: Vec<f64>,
    cum_rho: Vec<f64>,
}

fn cumulative_simpson(curve: &TimeCurve, nodes: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(nodes.len());
    out.push(0.0);
    let mut acc = 0.0;
    for w in nodes.windows(2) {
        acc += simpson(curve, w[0], w[1]);
        out.push(acc);
    }
    out
}

#[inline]
fn simpson(curve: &TimeCurve, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (curve.eval(a) + 4.0 * curve.eval(0.5 * (a + b)) + curve.eval(b))
}

impl ActuarialModel {
    /// Builds the model and its cumulative tables on the default 10⁴-interval grid.
    pub fn new(lambda: TimeCurve, rho: TimeCurve, horizon: f64) -> Result<Self> {
        Self::with_resolution(lambda, rho, horizon, DEFAULT_TABLE_INTERVALS)
    }

    pub fn with_resolution(lambda: TimeCurve, rho: TimeCurve, horizon: f64, intervals: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(invalid(format!("horizon must be positive and finite, got {horizon}")));
        }
        if intervals == 0 {
            return Err(invalid("cumulative table needs at least one interval"));
        }
        let nodes = linspace(0.0, horizon, intervals + 1);
        for &t in &nodes {
            let (l, r) = (lambda.eval(t), rho.eval(t));
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::Model { map: "lambda", reason: format!("must be finite and nonnegative, got {l} at t={t}") });
            }
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::Model { map: "rho", reason: format!("must be finite and nonnegative, got {r} at t={t}") });
            }
        }
        let cum_lambda = cumulative_simpson(&lambda, &nodes);
        let cum_rho = cumulative_simpson(&rho, &nodes);
        Ok(Self { lambda, rho, horizon, nodes, cum_lambda, cum_rho })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub fn lambda(&self, t: f64) -> f64 {
        self.lambda.eval(t)
    }

    #[inline]
    pub fn rho(&self, t: f64) -> f64 {
        self.rho.eval(t)
    }

    pub fn lambda_curve(&self) -> &TimeCurve {
        &self.lambda
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(invalid(format!("time {t} outside [0, {}]", self.horizon)));
        }
        Ok(())
    }

    #[inline]
    fn cumulative(&self, table: &[f64], curve: &TimeCurve, t: f64) -> f64 {
        let t = t.clamp(0.0, self.horizon);
        let n = self.nodes.len() - 1;
        let step = self.horizon / n as f64;
        let i = ((t / step) as usize).min(n - 1);
        let a = self.nodes[i];
        if t == a {
            return table[i];
        }
        table[i] + simpson(curve, a, t)
    }

    /// `Λ(t) = ∫₀ᵗ λ(s) ds`
    #[inline]
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        self.cumulative(&self.cum_lambda, &self.lambda, t)
    }

    /// `∫₀ᵗ ρ(s) ds`
    #[inline]
    pub fn cumulative_discount(&self, t: f64) -> f64 {
        self.cumulative(&self.cum_rho, &self.rho, t)
    }

    /// `∫₀ᵗ (ρ(s) + λ(s)) ds`, the exponent of the mortality-adjusted discount factor.
    #[inline]
    pub fn discount_exponent(&self, t: f64) -> f64 {
        self.cumulative_hazard(t) + self.cumulative_discount(t)
    }

    /// `exp(-Λ(t))`. Simpson is exact for piecewise-quadratic hazards and
    /// accurate well below 1e-10 for smooth ones on the default table.
    pub fn survival_probability(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok((-self.cumulative_hazard(t)).exp())
    }

    /// `λ(t) exp(-Λ(t))`
    pub fn death_density(&self, t: f64) -> Result<f64> {
        Ok(self.lambda(t) * self.survival_probability(t)?)
    }
}

/// The insurers' premium-payout ratio curves `η_1..η_M`.
#[derive(Debug)]
pub struct InsuranceMarket {
    etas: Vec<TimeCurve>,
    ties: AtomicU64,
}

impl Clone for InsuranceMarket {
    fn clone(&self) -> Self {
        Self { etas: self.etas.clone(), ties: AtomicU64::new(self.tie_count()) }
    }
}

impl InsuranceMarket {
    /// Validates that there is at least one insurer and every curve is
    /// positive on `samples` points of `[0, horizon]`.
    pub fn new(etas: Vec<TimeCurve>, horizon: f64, samples: usize) -> Result<Self> {
        if etas.is_empty() {
            return Err(invalid("insurance market needs at least one insurer"));
        }
        for t in linspace(0.0, horizon, samples.max(2)) {
            for (n, eta) in etas.iter().enumerate() {
                let v = eta.eval(t);
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Model {
                        map: "eta",
                        reason: format!("insurer {} has eta = {v} at t = {t}", n + 1),
                    });
                }
            }
        }
        Ok(Self { etas, ties: AtomicU64::new(0) })
    }

    pub fn len(&self) -> usize {
        self.etas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.etas.is_empty()
    }

    #[inline]
    pub fn eta(&self, n: usize, t: f64) -> f64 {
        self.etas[n].eval(t)
    }

    pub fn curves(&self) -> &[TimeCurve] {
        &self.etas
    }

    /// Zero-based index of the cheapest insurer at `t` and whether it tied.
    ///
    /// The smallest index wins a tie. Does not touch the tie counter.
    #[inline]
    pub fn argmin(&self, t: f64) -> (usize, bool) {
        let mut best = 0;
        let mut best_eta = self.etas[0].eval(t);
        let mut tie = false;
        for n in 1..self.etas.len() {
            let e = self.etas[n].eval(t);
            if e < best_eta {
                best = n;
                best_eta = e;
                tie = false;
            } else if e == best_eta {
                tie = true;
            }
        }
        (best, tie)
    }

    /// Zero-based index `n*` minimising `η_n(t)`; ties go to the smallest
    /// index and increment [`tie_count`](Self::tie_count).
    pub fn select_insurer(&self, t: f64) -> usize {
        let (n, tie) = self.argmin(t);
        if tie {
            self.ties.fetch_add(1, Ordering::Relaxed);
        }
        n
    }

    #[inline]
    pub fn min_eta(&self, t: f64) -> f64 {
        self.eta(self.argmin(t).0, t)
    }

    pub fn tie_count(&self) -> u64 {
        self.ties.load(Ordering::Relaxed)
    }

    /// Pairs of insurers whose curves coincide on some of the `samples`
    /// points of `[0, horizon]`, with the number of coinciding points.
    pub fn coincidences(&self, horizon: f64, samples: usize) -> Vec<(usize, usize, usize)> {
        let grid = linspace(0.0, horizon, samples.max(2));
        let mut out = Vec::new();
        for a in 0..self.etas.len() {
            for b in a + 1..self.etas.len() {
                let hits = grid.iter().filter(|&&t| self.eta(a, t) == self.eta(b, t)).count();
                if hits > 0 {
                    out.push((a, b, hits));
                }
            }
        }
        out
    }

    /// `x + Σ p_n / η_n(t)`
    pub fn legacy(&self, x: f64, premiums: &[f64], t: f64) -> Result<f64> {
        if premiums.len() != self.etas.len() {
            return Err(invalid(format!(
                "premium vector has length {}, expected {}",
                premiums.len(),
                self.etas.len()
            )));
        }
        let mut total = x;
        for (n, &p) in premiums.iter().enumerate() {
            if !(p >= 0.0) {
                return Err(invalid(format!("premium {} is negative ({p})", n + 1)));
            }
            if p > 0.0 {
                total += p / self.eta(n, t);
            }
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(lambda: TimeCurve, horizon: f64) -> ActuarialModel {
        ActuarialModel::new(lambda, TimeCurve::constant(0.0), horizon).unwrap()
    }

    fn three() -> InsuranceMarket {
        InsuranceMarket::new(
            vec![TimeCurve::constant(0.05), TimeCurve::constant(0.03), TimeCurve::constant(0.07)],
            1.0,
            11,
        )
        .unwrap()
    }

    #[test]
    fn survival_examples() {
        assert_eq!(model(TimeCurve::constant(0.0), 10.0).survival_probability(5.0).unwrap(), 1.0);
        let s = model(TimeCurve::constant(0.02), 10.0).survival_probability(10.0).unwrap();
        assert!((s - (-0.2f64).exp()).abs() < 1e-13);
        let s = model(TimeCurve::linear(0.0, 0.01), 2.0).survival_probability(2.0).unwrap();
        assert!((s - (-0.02f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn survival_off_grid_times() {
        let m = model(TimeCurve::linear(0.01, 0.03), 3.0);
        for t in [0.123_456f64, 1.000_01, 2.999_9] {
            let exact = (-(0.01 * t + 0.015 * t * t)).exp();
            assert!((m.survival_probability(t).unwrap() - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn density_examples() {
        let m = model(TimeCurve::constant(0.02), 10.0);
        assert!((m.death_density(0.0).unwrap() - 0.02).abs() < 1e-15);
        assert!((m.death_density(10.0).unwrap() - 0.02 * (-0.2f64).exp()).abs() < 1e-13);
        assert_eq!(model(TimeCurve::constant(0.0), 10.0).death_density(3.0).unwrap(), 0.0);
    }

    #[test]
    fn time_outside_horizon_is_rejected() {
        let m = model(TimeCurve::constant(0.02), 1.0);
        assert!(m.survival_probability(1.5).is_err());
        assert!(m.death_density(-0.1).is_err());
    }

    #[test]
    fn negative_hazard_is_a_model_error() {
        assert!(ActuarialModel::new(TimeCurve::constant(-0.01), TimeCurve::constant(0.0), 1.0).is_err());
    }

    #[test]
    fn discount_exponent_adds_both_curves() {
        let m = ActuarialModel::new(TimeCurve::constant(0.01), TimeCurve::constant(0.02), 10.0).unwrap();
        assert!((m.discount_exponent(10.0) - 0.3).abs() < 1e-13);
    }

    #[test]
    fn select_insurer_examples() {
        let im = three();
        assert_eq!(im.select_insurer(0.5), 1);
        let single = InsuranceMarket::new(vec![TimeCurve::constant(0.04)], 1.0, 3).unwrap();
        assert_eq!(single.select_insurer(0.2), 0);
        let tied = InsuranceMarket::new(vec![TimeCurve::constant(0.04); 2], 1.0, 3).unwrap();
        assert_eq!(tied.select_insurer(0.2), 0);
        assert_eq!(tied.tie_count(), 1);
        assert_eq!(tied.coincidences(1.0, 5), vec![(0, 1, 5)]);
    }

    #[test]
    fn legacy_examples() {
        let im = three();
        assert_eq!(im.legacy(100.0, &[0.0; 3], 0.0).unwrap(), 100.0);
        assert!((im.legacy(100.0, &[6.0, 0.0, 0.0], 0.0).unwrap() - 220.0).abs() < 1e-12);
        assert!((im.legacy(0.0, &[0.0, 3.0, 0.0], 0.0).unwrap() - 100.0).abs() < 1e-12);
        assert!(im.legacy(1.0, &[0.0, -1.0, 0.0], 0.0).is_err());
        assert!(im.legacy(1.0, &[0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn nonpositive_eta_is_rejected() {
        assert!(InsuranceMarket::new(vec![TimeCurve::linear(0.01, -0.02)], 1.0, 11).is_err());
        assert!(InsuranceMarket::new(vec![], 1.0, 11).is_err());
    }
}
