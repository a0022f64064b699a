use super::{factor_path, for_each_path, mean_stderr, walk, PathNoise, SimulationConfig, TimeGrid};
use crate::error::{domain, Error, Result};
use crate::strategy::{PerturbedRule, StrategyRule, UtilityKind};
use crate::Model;

/// Means of the three utility terms of the performance functional.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Components {
    pub consumption: f64,
    pub legacy: f64,
    pub terminal: f64,
}

impl Components {
    pub fn total(&self) -> f64 {
        self.consumption + self.legacy + self.terminal
    }
}

/// Monte Carlo estimate of the performance functional.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Paths retained in the estimate.
    pub n_paths: usize,
    /// Paths excluded because wealth became nonpositive.
    pub flagged: usize,
    pub components: Components,
}

/// `κ x^δ / δ` without the domain checks of [`crate::Preferences::utility`],
/// so that zero consumption maps to its limit.
#[inline]
fn power_utility(kappa: f64, delta: f64, x: f64) -> f64 {
    kappa * x.powf(delta) / delta
}

/// Discounted utility along one path, or `None` if the path is ruined.
///
/// The running terms use the left endpoint of every step.
pub(crate) fn path_value<R: StrategyRule + ?Sized>(
    model: &Model,
    rule: &R,
    x0: f64,
    grid: &TimeGrid,
    ys: &[f64],
    noise: &PathNoise,
) -> Option<Components> {
    let (am, im, prefs) = (&model.actuarial, &model.insurers, &model.prefs);
    let delta = prefs.delta();
    let k1 = prefs.kappa(UtilityKind::Consumption);
    let k2 = prefs.kappa(UtilityKind::Legacy);
    let mut out = Components::default();
    let end = walk(model, rule, x0, grid, ys, noise, |s| {
        let discount = (-am.discount_exponent(s.t)).exp();
        out.consumption += discount * power_utility(k1, delta, s.controls.c) * s.dt;
        let lambda = am.lambda(s.t);
        if lambda > 0.0 {
            let payout: f64 = s.controls.premiums.iter().enumerate().map(|(n, p)| p / im.eta(n, s.t)).sum();
            out.legacy += discount * lambda * power_utility(k2, delta, s.x + payout) * s.dt;
        }
    });
    if end.ruined.is_some() {
        return None;
    }
    let horizon = grid.horizon();
    out.terminal =
        (-am.discount_exponent(horizon)).exp() * power_utility(prefs.kappa(UtilityKind::Terminal), delta, end.x);
    Some(out)
}

fn check_start(x0: f64, sim: &SimulationConfig) -> Result<()> {
    if !(x0 > 0.0) {
        return Err(domain(format!("initial wealth must be positive, got {x0}")));
    }
    sim.validate()
}

/// Estimates `E[∫e^(-∫(ρ+λ))(U1(c) + λU2(legacy))dt + e^(-∫₀ᵀ(ρ+λ))U3(X_T)]`.
pub fn estimate_performance<R: StrategyRule + ?Sized>(
    model: &Model,
    rule: &R,
    x0: f64,
    y0: f64,
    sim: &SimulationConfig,
) -> Result<PerformanceEstimate> {
    check_start(x0, sim)?;
    let grid = sim.grid(model.horizon())?;
    let values = for_each_path(sim.paths, |p| {
        let noise = PathNoise::draw(&grid, &model.market.jumps, sim.seed, p);
        let ys = factor_path(&model.factor, y0, &grid, sim.scheme, &noise.dw1);
        path_value(model, rule, x0, &grid, &ys, &noise)
    });
    let kept: Vec<Components> = values.into_iter().flatten().collect();
    let flagged = sim.paths - kept.len();
    if kept.is_empty() {
        return Err(Error::AllPathsFlagged { n_paths: sim.paths });
    }
    let n = kept.len() as f64;
    let components = Components {
        consumption: kept.iter().map(|c| c.consumption).sum::<f64>() / n,
        legacy: kept.iter().map(|c| c.legacy).sum::<f64>() / n,
        terminal: kept.iter().map(|c| c.terminal).sum::<f64>() / n,
    };
    let totals: Vec<f64> = kept.iter().map(Components::total).collect();
    let (_, stderr) = mean_stderr(&totals);
    Ok(PerformanceEstimate { mean: components.total(), stderr, n_paths: kept.len(), flagged, components })
}

/// Paired comparison of a strategy against a base strategy on common noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub name: String,
    pub base_mean: f64,
    pub other_mean: f64,
    /// Mean of `J(other) - J(base)` over paths retained by both.
    pub diff_mean: f64,
    pub diff_stderr: f64,
    pub n_paths: usize,
    pub flagged: usize,
}

impl Comparison {
    /// `J(base) ≥ J(other)` up to `k` standard errors.
    pub fn base_not_worse(&self, k: f64) -> bool {
        self.diff_mean <= k * self.diff_stderr
    }
}

/// Evaluates every rule in `others` against `base` on the same paths.
pub fn compare_strategies(
    model: &Model,
    base: &dyn StrategyRule,
    others: &[(String, &dyn StrategyRule)],
    x0: f64,
    y0: f64,
    sim: &SimulationConfig,
) -> Result<Vec<Comparison>> {
    check_start(x0, sim)?;
    let grid = sim.grid(model.horizon())?;
    let values = for_each_path(sim.paths, |p| {
        let noise = PathNoise::draw(&grid, &model.market.jumps, sim.seed, p);
        let ys = factor_path(&model.factor, y0, &grid, sim.scheme, &noise.dw1);
        let b = path_value(model, base, x0, &grid, &ys, &noise).map(|c| c.total());
        let o: Vec<Option<f64>> =
            others.iter().map(|(_, r)| path_value(model, *r, x0, &grid, &ys, &noise).map(|c| c.total())).collect();
        (b, o)
    });
    let mut out = Vec::with_capacity(others.len());
    for (i, (name, _)) in others.iter().enumerate() {
        let pairs: Vec<(f64, f64)> = values.iter().filter_map(|(b, o)| Some(((*b)?, o[i]?))).collect();
        if pairs.is_empty() {
            return Err(Error::AllPathsFlagged { n_paths: sim.paths });
        }
        let n = pairs.len() as f64;
        let diffs: Vec<f64> = pairs.iter().map(|(b, o)| o - b).collect();
        let (diff_mean, diff_stderr) = mean_stderr(&diffs);
        out.push(Comparison {
            name: name.clone(),
            base_mean: pairs.iter().map(|p| p.0).sum::<f64>() / n,
            other_mean: pairs.iter().map(|p| p.1).sum::<f64>() / n,
            diff_mean,
            diff_stderr,
            n_paths: pairs.len(),
            flagged: sim.paths - pairs.len(),
        });
    }
    Ok(out)
}

/// One member of the perturbation family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerturbationSpec {
    ShiftPi(f64),
    ScaleConsumption(f64),
    PremiumOff,
}

impl PerturbationSpec {
    pub fn label(&self) -> String {
        match *self {
            PerturbationSpec::ShiftPi(s) => format!("pi*{s:+}"),
            PerturbationSpec::ScaleConsumption(s) => format!("c*x{s}"),
            PerturbationSpec::PremiumOff => "premium off".to_string(),
        }
    }

    pub fn apply<R: StrategyRule>(&self, base: R) -> PerturbedRule<R> {
        let rule = PerturbedRule::new(base);
        match *self {
            PerturbationSpec::ShiftPi(s) => rule.shift_pi(s),
            PerturbationSpec::ScaleConsumption(s) => rule.scale_consumption(s),
            PerturbationSpec::PremiumOff => rule.without_premium(),
        }
    }
}

/// `π* ± 0.05`, `π* ± 0.1`, `c*·(1 ± 0.1)` and the rule without insurance.
pub fn perturbation_family() -> Vec<PerturbationSpec> {
    vec![
        PerturbationSpec::ShiftPi(0.05),
        PerturbationSpec::ShiftPi(-0.05),
        PerturbationSpec::ShiftPi(0.1),
        PerturbationSpec::ShiftPi(-0.1),
        PerturbationSpec::ScaleConsumption(1.1),
        PerturbationSpec::ScaleConsumption(0.9),
        PerturbationSpec::PremiumOff,
    ]
}

/// Compares `base` against each perturbation of itself.
pub fn perturbation_suite<R: StrategyRule>(
    model: &Model,
    base: &R,
    family: &[PerturbationSpec],
    x0: f64,
    y0: f64,
    sim: &SimulationConfig,
) -> Result<Vec<Comparison>> {
    let rules: Vec<PerturbedRule<&R>> = family.iter().map(|p| p.apply(base)).collect();
    let others: Vec<(String, &dyn StrategyRule)> =
        family.iter().zip(&rules).map(|(p, r)| (p.label(), r as &dyn StrategyRule)).collect();
    compare_strategies(model, base, &others, x0, y0, sim)
}
