use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{FactorScheme, PathNoise, TimeGrid};
use crate::error::{domain, invalid, Result};
use crate::market::{CoefficientSet, FactorDynamics};
use crate::strategy::{Controls, StrategyRule};
use crate::Model;

/// Factor path on `grid` driven by the increments `dw1`.
pub(crate) fn factor_path(fd: &FactorDynamics, y0: f64, grid: &TimeGrid, scheme: FactorScheme, dw1: &[f64]) -> Vec<f64> {
    let n = grid.steps();
    let mut ys = Vec::with_capacity(n + 1);
    ys.push(y0);
    let mut y = y0;
    let exact = match scheme {
        FactorScheme::ExactOu => fd.drift.mean_reversion().filter(|b| *b > 0.0),
        _ => None,
    };
    for (k, &dw) in dw1.iter().enumerate().take(n) {
        let dt = grid.dt(k);
        y = match (scheme, exact) {
            (FactorScheme::ExactOu, Some(b)) => {
                let decay = (-b * dt).exp();
                let sd = ((1.0 - decay * decay) / (2.0 * b)).sqrt();
                decay * y + sd * dw / dt.sqrt()
            }
            (FactorScheme::ZeroNoise, _) => y + fd.g(y) * dt,
            _ => y + fd.g(y) * dt + dw,
        };
        ys.push(y);
    }
    ys
}

/// Simulates `dY = g(Y)dt + dW1` with normals drawn from `rng`.
///
/// [`FactorScheme::ExactOu`] samples the Gaussian transition exactly when the
/// drift is `-by` and falls back to Euler otherwise.
pub fn simulate_factor<R: Rng + ?Sized>(
    fd: &FactorDynamics,
    y0: f64,
    grid: &TimeGrid,
    scheme: FactorScheme,
    rng: &mut R,
) -> Vec<f64> {
    let dw1: Vec<f64> = (0..grid.steps())
        .map(|k| {
            let z: f64 = StandardNormal.sample(rng);
            grid.dt(k).sqrt() * z
        })
        .collect();
    factor_path(fd, y0, grid, scheme, &dw1)
}

/// `∫ γ ν(dz)` at `(t, y)`.
#[inline]
pub(crate) fn jump_mean(cs: &CoefficientSet, t: f64, y: f64) -> f64 {
    let rate = cs.jumps.rate();
    cs.jumps.atoms().iter().map(|a| rate * a.prob * cs.gamma(t, y, a.mark)).sum()
}

/// One Euler step of the wealth equation followed by the multiplicative jump
/// updates. A nonpositive return value means the path is ruined.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn wealth_step(
    cs: &CoefficientSet,
    t: f64,
    y: f64,
    dt: f64,
    x: f64,
    ctl: &Controls,
    dw1: f64,
    dw2: f64,
    jumps: &[u16],
) -> f64 {
    let pi = ctl.pi;
    let drift = x * (cs.r(t) + pi * (cs.mu(t, y) - jump_mean(cs, t, y))) - ctl.c - ctl.total_premium();
    let mut next = x + drift * dt + pi * x * (cs.beta(t, y) * dw1 + cs.sigma(t, y) * dw2);
    if next <= 0.0 {
        return next;
    }
    let atoms = cs.jumps.atoms();
    for &a in jumps {
        let factor = 1.0 + pi * cs.gamma(t, y, atoms[a as usize].mark);
        if factor <= 0.0 {
            return 0.0;
        }
        next *= factor;
    }
    next
}

/// State seen by a [`walk`] observer for step `k`, from `t` to `t + dt`.
pub(crate) struct StepInfo<'a> {
    pub k: usize,
    pub t: f64,
    pub dt: f64,
    pub x: f64,
    pub y: f64,
    pub controls: &'a Controls,
    pub x_next: f64,
}

pub(crate) struct WalkEnd {
    pub x: f64,
    pub ruined: Option<usize>,
}

/// Runs the wealth recursion under `rule`, calling `visit` after every step.
/// Stops at the first step that leaves nonpositive wealth.
pub(crate) fn walk<R: StrategyRule + ?Sized>(
    model: &Model,
    rule: &R,
    x0: f64,
    grid: &TimeGrid,
    ys: &[f64],
    noise: &PathNoise,
    mut visit: impl FnMut(&StepInfo<'_>),
) -> WalkEnd {
    let cs = &model.market;
    let times = grid.times();
    let mut ctl = Controls::new(rule.insurers());
    let mut x = x0;
    for k in 0..grid.steps() {
        let (t, dt, y) = (times[k], grid.dt(k), ys[k]);
        rule.controls_into(t, x, y, &mut ctl);
        let x_next = wealth_step(cs, t, y, dt, x, &ctl, noise.dw1[k], noise.dw2[k], noise.jumps_at(k));
        visit(&StepInfo { k, t, dt, x, y, controls: &ctl, x_next });
        if !(x_next > 0.0) {
            return WalkEnd { x: x_next, ruined: Some(k) };
        }
        x = x_next;
    }
    WalkEnd { x, ruined: None }
}

/// One simulated path: noise, factor, wealth and the controls applied.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub noise: PathNoise,
    pub y: Vec<f64>,
    /// Wealth up to the end or up to the first nonpositive value.
    pub x: Vec<f64>,
    pub controls: Vec<Controls>,
    /// Step at which wealth became nonpositive.
    pub flagged: Option<usize>,
}

impl PathBundle {
    /// Draws path `path` of the master `seed` and simulates its factor.
    pub fn draw(model: &Model, y0: f64, grid: TimeGrid, scheme: FactorScheme, seed: u64, path: u64) -> Self {
        let noise = PathNoise::draw(&grid, &model.market.jumps, seed, path);
        Self::from_noise(&model.factor, y0, grid, noise, scheme)
    }

    pub fn from_noise(fd: &FactorDynamics, y0: f64, grid: TimeGrid, noise: PathNoise, scheme: FactorScheme) -> Self {
        let y = factor_path(fd, y0, &grid, scheme, &noise.dw1);
        Self { grid, noise, y, x: Vec::new(), controls: Vec::new(), flagged: None }
    }

    /// Marks of the jumps during step `k`.
    pub fn jump_marks(&self, cs: &CoefficientSet, k: usize) -> Vec<f64> {
        self.noise.jumps_at(k).iter().map(|&a| cs.jumps.atoms()[a as usize].mark).collect()
    }

    pub fn is_flagged(&self) -> bool {
        self.flagged.is_some()
    }
}

/// Fills `bundle.x` and `bundle.controls` by the Euler scheme under `rule`.
///
/// Ruin is not an error: the path is flagged and wealth stops at the first
/// nonpositive value.
pub fn simulate_wealth<R: StrategyRule + ?Sized>(model: &Model, rule: &R, x0: f64, bundle: &mut PathBundle) -> Result<()> {
    if !(x0 > 0.0) {
        return Err(domain(format!("initial wealth must be positive, got {x0}")));
    }
    let n = bundle.grid.steps();
    let mut xs = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    xs.push(x0);
    let end = walk(model, rule, x0, &bundle.grid, &bundle.y, &bundle.noise, |s| {
        controls.push(s.controls.clone());
        xs.push(s.x_next);
    });
    bundle.x = xs;
    bundle.controls = controls;
    bundle.flagged = end.ruined;
    Ok(())
}

/// Exponential solution of the wealth equation along the noise of `bundle`.
///
/// With `G = r + πμ - c/x - Σp/x` the log-wealth increment is
/// `[G - ½π²(β²+σ²) - π∫γν(dz)]dt + π(β dW1 + σ dW2) + Σ_jumps ln(1 + πγ)`,
/// the `∫ln(1+πγ)ν(dz)` terms of the compensated form cancelling.
/// Requires a rule whose consumption and premium are proportional to wealth.
pub fn wealth_closed_form<R: StrategyRule + ?Sized>(model: &Model, rule: &R, x0: f64, bundle: &PathBundle) -> Result<Vec<f64>> {
    if !(x0 > 0.0) {
        return Err(domain(format!("initial wealth must be positive, got {x0}")));
    }
    let cs = &model.market;
    let grid = &bundle.grid;
    let times = grid.times();
    let atoms = cs.jumps.atoms();
    let mut log_x = x0.ln();
    let mut out = Vec::with_capacity(grid.steps() + 1);
    out.push(x0);
    for k in 0..grid.steps() {
        let (t, dt, y) = (times[k], grid.dt(k), bundle.y[k]);
        let ratios = rule
            .wealth_ratios(t, y)
            .ok_or_else(|| invalid("closed-form wealth needs a rule proportional to wealth"))?;
        let pi = ratios.pi;
        let g = cs.r(t) + pi * cs.mu(t, y) - ratios.consumption - ratios.premium;
        let drift = g - 0.5 * pi * pi * cs.diffusion_variance(t, y) - pi * jump_mean(cs, t, y);
        let mut inc = drift * dt + pi * (cs.beta(t, y) * bundle.noise.dw1[k] + cs.sigma(t, y) * bundle.noise.dw2[k]);
        for &a in bundle.noise.jumps_at(k) {
            let factor = 1.0 + pi * cs.gamma(t, y, atoms[a as usize].mark);
            if factor <= 0.0 {
                return Err(domain(format!("jump factor {factor} is nonpositive at t={t}")));
            }
            inc += factor.ln();
        }
        log_x += inc;
        out.push(log_x.exp());
    }
    Ok(out)
}
