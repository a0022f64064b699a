use super::paths::StepInfo;
use super::performance::path_value;
use super::{factor_path, for_each_path, mean_stderr, walk, PathBundle, PathNoise, PerformanceEstimate, Report, SimulationConfig};
use crate::error::{domain, invalid, Error, Result};
use crate::hsolver::HGrid;
use crate::strategy::{
    factor_stationarity, hamiltonian, optimal_consumption, optimal_premium, AdjointState, Controls, OptimalRule,
    Perturbation, PerturbedRule, PortfolioInputs, StrategyRule, UtilityKind,
};
use crate::Model;

/// Relative step of the central differences of the coefficient maps.
const FD_STEP: f64 = 1e-5;

/// Mean of a per-path quantity with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathMean {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub flagged: usize,
}

impl PathMean {
    fn from_values(values: &[f64], flagged: usize) -> Self {
        let (mean, stderr) = mean_stderr(values);
        Self { mean, stderr, n_paths: values.len(), flagged }
    }

    /// `|mean| ≤ k·stderr`
    pub fn zero_within(&self, k: f64) -> bool {
        self.mean.abs() <= k * self.stderr
    }
}

fn candidate_from(model: &Model, t: f64, x: f64, y: f64, h: f64, h_y: f64, pi: f64) -> AdjointState {
    let cs = &model.market;
    let dm1 = model.prefs.delta() - 1.0;
    let a1 = (dm1 * x.ln() - h).exp();
    let d1: Vec<f64> =
        cs.jumps.atoms().iter().map(|a| a1 * ((1.0 + pi * cs.gamma(t, y, a.mark)).powf(dm1) - 1.0)).collect();
    AdjointState {
        a1,
        b1: (dm1 * pi * cs.beta(t, y) - h_y) * a1,
        b2: dm1 * pi * cs.sigma(t, y) * a1,
        a2: 0.0,
        b3: 0.0,
        b4: 0.0,
        d2: vec![0.0; d1.len()],
        d1,
    }
}

/// Adjoint processes implied by the ansatz `A1 = x^(δ-1) e^(-h(t, y))`:
/// `B1 = ((δ-1)π*β - h_y)A1`, `B2 = (δ-1)π*σA1`, `D1 = A1[(1+π*γ)^(δ-1) - 1]`,
/// and zero second adjoints.
pub fn adjoint_candidate(model: &Model, grid: &HGrid, t: f64, x: f64, y: f64) -> Result<AdjointState> {
    if !(x > 0.0) {
        return Err(domain(format!("adjoint candidate needs x > 0, got {x}")));
    }
    Ok(candidate_from(model, t, x, y, grid.h_at(t, y), grid.h_y_at(t, y), grid.pi_at(t, y)))
}

fn check_start(x0: f64, sim: &SimulationConfig) -> Result<()> {
    if !(x0 > 0.0) {
        return Err(domain(format!("initial wealth must be positive, got {x0}")));
    }
    sim.validate()
}

/// Increment `M(t) - M(s)` of the discounted adjoint over one pair of times.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingalePair {
    pub s: f64,
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    /// Same increment with the discount `e^(∫η_{n*})`.
    pub eta_mean: f64,
    pub eta_stderr: f64,
}

impl MartingalePair {
    pub fn passes(&self, k: f64) -> bool {
        self.mean.abs() <= k * self.stderr
    }
}

/// Martingale test of `M(t) = e^(∫₀ᵗκ) A1*(t)` along optimal paths, where
/// `κ = r + λ e^(-∫(ρ+λ)) U2'(legacy) / A1` is the drift rate of the adjoint
/// equation at the optimum. While insurance is bought, `κ = r + η_{n*}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTestReport {
    pub m0: f64,
    pub pairs: Vec<MartingalePair>,
    pub n_paths: usize,
    pub flagged: usize,
}

impl AdjointTestReport {
    pub fn passed(&self, k: f64) -> bool {
        self.pairs.iter().all(|p| p.passes(k))
    }

    /// Passes when `|mean| ≤ k·stderr + slack·|M(0)|` for every pair.
    pub fn passed_with_slack(&self, k: f64, slack: f64) -> bool {
        self.pairs.iter().all(|p| p.mean.abs() <= k * p.stderr + slack * self.m0.abs())
    }

    pub fn to_report(&self, name: &str) -> Report {
        let mut r = Report::new();
        for p in &self.pairs {
            r.check(
                format!("{name} [{:.4},{:.4}]", p.s, p.t),
                p.passes(3.0),
                format!("mean {:.6e} stderr {:.6e} paths {} flagged {}", p.mean, p.stderr, self.n_paths, self.flagged),
            );
        }
        for p in &self.pairs {
            r.info(
                format!("{name} eta-discounted [{:.4},{:.4}]", p.s, p.t),
                format!("mean {:.6e} stderr {:.6e}", p.eta_mean, p.eta_stderr),
            );
        }
        r
    }
}

/// Simulates the optimal rule of `grid` and tests `M(t) - M(0)` for each
/// `t = f·T` with `f` in `fractions`.
pub fn adjoint_residual_test(
    model: &Model,
    grid: &HGrid,
    x0: f64,
    y0: f64,
    sim: &SimulationConfig,
    fractions: &[f64],
) -> Result<AdjointTestReport> {
    check_start(x0, sim)?;
    if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(invalid("checkpoint fractions must lie in (0, 1]"));
    }
    let horizon = model.horizon();
    let tg = sim.grid(horizon)?;
    let ks: Vec<usize> = fractions.iter().map(|f| tg.nearest(f * horizon)).collect();
    let rule = OptimalRule::new(model, grid);
    let (cs, am, im, prefs) = (&model.market, &model.actuarial, &model.insurers, &model.prefs);
    let dm1 = prefs.delta() - 1.0;
    let k2 = prefs.kappa(UtilityKind::Legacy);
    let a1_of = |t: f64, x: f64, y: f64| (dm1 * x.ln() - grid.h_at(t, y)).exp();
    let m0 = a1_of(0.0, x0, y0);

    let values = for_each_path(sim.paths, |p| {
        let noise = PathNoise::draw(&tg, &cs.jumps, sim.seed, p);
        let ys = factor_path(&model.factor, y0, &tg, sim.scheme, &noise.dw1);
        let mut kappa_int = 0.0f64;
        let mut eta_int = 0.0f64;
        let mut marks = vec![(f64::NAN, f64::NAN); ks.len()];
        let end = walk(model, &rule, x0, &tg, &ys, &noise, |s| {
            let a1 = a1_of(s.t, s.x, s.y);
            for (j, &k) in ks.iter().enumerate() {
                if k == s.k {
                    marks[j] = (kappa_int.exp() * a1, eta_int.exp() * a1);
                }
            }
            let lambda = am.lambda(s.t);
            let mut kappa = cs.r(s.t);
            if lambda > 0.0 {
                let payout: f64 = s.controls.premiums.iter().enumerate().map(|(n, p)| p / im.eta(n, s.t)).sum();
                let legacy = s.x + payout;
                kappa += lambda * (-am.discount_exponent(s.t)).exp() * k2 * legacy.powf(dm1) / a1;
            }
            kappa_int += kappa * s.dt;
            eta_int += im.min_eta(s.t) * s.dt;
        });
        if end.ruined.is_some() {
            return None;
        }
        let n = tg.steps();
        let a1 = a1_of(tg.horizon(), end.x, ys[n]);
        for (j, &k) in ks.iter().enumerate() {
            if k == n {
                marks[j] = (kappa_int.exp() * a1, eta_int.exp() * a1);
            }
        }
        Some(marks)
    });
    let kept: Vec<Vec<(f64, f64)>> = values.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::AllPathsFlagged { n_paths: sim.paths });
    }
    let times = tg.times();
    let pairs = ks
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let d: Vec<f64> = kept.iter().map(|m| m[j].0 - m0).collect();
            let e: Vec<f64> = kept.iter().map(|m| m[j].1 - m0).collect();
            let (mean, stderr) = mean_stderr(&d);
            let (eta_mean, eta_stderr) = mean_stderr(&e);
            MartingalePair { s: 0.0, t: times[k], mean, stderr, eta_mean, eta_stderr }
        })
        .collect();
    Ok(AdjointTestReport { m0, pairs, n_paths: kept.len(), flagged: sim.paths - kept.len() })
}

/// Drift and the two volatilities of wealth, the drift including the jump
/// compensator: `[x(r + π(μ - ∫γν)) - c - Σp, πxβ, πxσ]`.
#[inline]
fn wealth_coefficients(model: &Model, t: f64, y: f64, x: f64, pi: f64, spend: f64) -> [f64; 3] {
    let cs = &model.market;
    let comp = super::paths::jump_mean(cs, t, y);
    [x * (cs.r(t) + pi * (cs.mu(t, y) - comp)) - spend, pi * x * cs.beta(t, y), pi * x * cs.sigma(t, y)]
}

/// Jump coefficient `πxγ(t, y, z)`.
#[inline]
fn jump_coefficient(model: &Model, t: f64, y: f64, x: f64, pi: f64, mark: f64) -> f64 {
    pi * x * model.market.gamma(t, y, mark)
}

/// Running reward `e^(-∫(ρ+λ))[U1(c) + λU2(x + Σp/η)]`.
fn running_reward(model: &Model, t: f64, x: f64, ctl: &Controls) -> f64 {
    let (am, im, prefs) = (&model.actuarial, &model.insurers, &model.prefs);
    let delta = prefs.delta();
    let mut reward = prefs.kappa(UtilityKind::Consumption) * ctl.c.powf(delta) / delta;
    let lambda = am.lambda(t);
    if lambda > 0.0 {
        let payout: f64 = ctl.premiums.iter().enumerate().map(|(n, p)| p / im.eta(n, t)).sum();
        reward += lambda * prefs.kappa(UtilityKind::Legacy) * (x + payout).powf(delta) / delta;
    }
    (-am.discount_exponent(t)).exp() * reward
}

fn terminal_reward(model: &Model, x: f64) -> f64 {
    let delta = model.prefs.delta();
    (-model.actuarial.discount_exponent(model.horizon())).exp() * model.prefs.kappa(UtilityKind::Terminal)
        * x.powf(delta)
        / delta
}

/// Central-difference partials of the closed-loop scheme at one step.
struct StepPartials {
    /// `d/dx` of the wealth coefficients with the rule re-evaluated at `x ± h`.
    coeff_x: [f64; 3],
    /// `d/dπ` of the wealth coefficients at fixed `x`.
    coeff_pi: [f64; 3],
    /// `d/dx` of the rule's portfolio.
    pi_x: f64,
    reward_x: f64,
    reward_pi: f64,
    /// Wealth after the diffusion part of the step, before the jumps.
    x_euler: f64,
}

fn step_partials<R: StrategyRule + ?Sized>(
    model: &Model,
    rule: &R,
    s: &StepInfo<'_>,
    dw1: f64,
    dw2: f64,
    scratch: &mut Controls,
) -> StepPartials {
    let (t, x, y) = (s.t, s.x, s.y);
    let hx = FD_STEP * x.abs().max(1e-8);
    let eval_x = |xx: f64, scratch: &mut Controls| {
        rule.controls_into(t, xx, y, scratch);
        let c = wealth_coefficients(model, t, y, xx, scratch.pi, scratch.c + scratch.total_premium());
        (c, scratch.pi, running_reward(model, t, xx, scratch))
    };
    let (cp, pip, fp) = eval_x(x + hx, scratch);
    let (cm, pim, fm) = eval_x(x - hx, scratch);
    let pi = s.controls.pi;
    let spend = s.controls.c + s.controls.total_premium();
    let hp = FD_STEP * pi.abs().max(1.0);
    let up = wealth_coefficients(model, t, y, x, pi + hp, spend);
    let dn = wealth_coefficients(model, t, y, x, pi - hp, spend);
    let mut shifted = s.controls.clone();
    shifted.pi = pi + hp;
    let f_up = running_reward(model, t, x, &shifted);
    shifted.pi = pi - hp;
    let f_dn = running_reward(model, t, x, &shifted);
    let base = wealth_coefficients(model, t, y, x, pi, spend);
    StepPartials {
        coeff_x: std::array::from_fn(|i| (cp[i] - cm[i]) / (2.0 * hx)),
        coeff_pi: std::array::from_fn(|i| (up[i] - dn[i]) / (2.0 * hp)),
        pi_x: (pip - pim) / (2.0 * hx),
        reward_x: (fp - fm) / (2.0 * hx),
        reward_pi: (f_up - f_dn) / (2.0 * hp),
        x_euler: x + base[0] * s.dt + base[1] * dw1 + base[2] * dw2,
    }
}

/// Derivative of the discrete wealth and factor recursions in the direction
/// `ζ`, with the running estimate of `dJ/dℓ`.
#[derive(Debug, Clone)]
struct Variation {
    zeta: Perturbation,
    x1: f64,
    y1: f64,
    acc: f64,
}

impl Variation {
    fn new(zeta: Perturbation) -> Self {
        Self { zeta, x1: 0.0, y1: 0.0, acc: 0.0 }
    }

    #[allow(clippy::too_many_arguments)]
    fn step(&mut self, model: &Model, s: &StepInfo<'_>, part: &StepPartials, dw1: f64, dw2: f64, jumps: &[u16]) {
        let zeta = self.zeta.eval(s.t, s.y);
        let (x1, y1) = (self.x1, self.y1);
        self.acc += (part.reward_x * x1 + part.reward_pi * zeta) * s.dt;
        let lin = |i: usize| part.coeff_x[i] * x1 + part.coeff_pi[i] * zeta;
        let mut next = x1 + lin(0) * s.dt + lin(1) * dw1 + lin(2) * dw2;
        if y1 != 0.0 {
            next += y1 * self.factor_terms(model, s, dw1, dw2);
        }
        let dpi = part.pi_x * x1 + zeta;
        let mut x_cur = part.x_euler;
        let pi = s.controls.pi;
        let atoms = model.market.jumps.atoms();
        for &a in jumps {
            let mark = atoms[a as usize].mark;
            let hx = FD_STEP * x_cur.abs().max(1e-8);
            let hp = FD_STEP * pi.abs().max(1.0);
            let jx = (jump_coefficient(model, s.t, s.y, x_cur + hx, pi, mark)
                - jump_coefficient(model, s.t, s.y, x_cur - hx, pi, mark))
                / (2.0 * hx);
            let jp = (jump_coefficient(model, s.t, s.y, x_cur, pi + hp, mark)
                - jump_coefficient(model, s.t, s.y, x_cur, pi - hp, mark))
                / (2.0 * hp);
            next += jx * next + jp * dpi;
            x_cur += jump_coefficient(model, s.t, s.y, x_cur, pi, mark);
        }
        let hy = FD_STEP * s.y.abs().max(1.0);
        let g_y = (model.factor.g(s.y + hy) - model.factor.g(s.y - hy)) / (2.0 * hy);
        self.y1 = y1 + g_y * y1 * s.dt;
        self.x1 = next;
    }

    /// `y`-partials of the step at fixed controls, only needed once `y1 ≠ 0`.
    fn factor_terms(&self, model: &Model, s: &StepInfo<'_>, dw1: f64, dw2: f64) -> f64 {
        let hy = FD_STEP * s.y.abs().max(1.0);
        let spend = s.controls.c + s.controls.total_premium();
        let up = wealth_coefficients(model, s.t, s.y + hy, s.x, s.controls.pi, spend);
        let dn = wealth_coefficients(model, s.t, s.y - hy, s.x, s.controls.pi, spend);
        let d = |i: usize| (up[i] - dn[i]) / (2.0 * hy);
        d(0) * s.dt + d(1) * dw1 + d(2) * dw2
    }

    fn finish(&mut self, model: &Model, x_end: f64) {
        let h = FD_STEP * x_end.abs().max(1e-8);
        let g_x = (terminal_reward(model, x_end + h) - terminal_reward(model, x_end - h)) / (2.0 * h);
        self.acc += g_x * self.x1;
    }
}

/// Walks `rule` along the noise and returns the variations, or `None` on ruin.
fn run_variations<R: StrategyRule + ?Sized>(
    model: &Model,
    rule: &R,
    x0: f64,
    grid: &super::TimeGrid,
    ys: &[f64],
    noise: &PathNoise,
    zetas: &[Perturbation],
    mut extra: impl FnMut(&StepInfo<'_>),
    mut trace: Option<&mut Vec<(f64, f64)>>,
) -> Option<Vec<Variation>> {
    let mut vars: Vec<Variation> = zetas.iter().map(|z| Variation::new(*z)).collect();
    let mut scratch = Controls::new(rule.insurers());
    if let Some(tr) = trace.as_deref_mut() {
        tr.push((0.0, 0.0));
    }
    let end = walk(model, rule, x0, grid, ys, noise, |s| {
        let (dw1, dw2) = (noise.dw1[s.k], noise.dw2[s.k]);
        let part = step_partials(model, rule, s, dw1, dw2, &mut scratch);
        for v in vars.iter_mut() {
            v.step(model, s, &part, dw1, dw2, noise.jumps_at(s.k));
        }
        if let (Some(tr), Some(v)) = (trace.as_deref_mut(), vars.first()) {
            tr.push((v.x1, v.y1));
        }
        extra(s);
    });
    if end.ruined.is_some() {
        return None;
    }
    for v in vars.iter_mut() {
        v.finish(model, end.x);
    }
    Some(vars)
}

/// Paths of the variation processes `x1`, `y1` for the perturbation `π + ℓζ`
/// along a bundle already simulated under `rule`.
///
/// The recursions are the derivative in `ℓ` of the discrete wealth scheme,
/// with coefficient partials taken by central differences.
pub fn variation_processes<R: StrategyRule + ?Sized>(
    model: &Model,
    rule: &R,
    zeta: Perturbation,
    bundle: &PathBundle,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let x0 = *bundle.x.first().ok_or_else(|| invalid("bundle has no simulated wealth"))?;
    if bundle.is_flagged() {
        return Err(domain("variation processes need a path without ruin"));
    }
    let mut trace = Vec::with_capacity(bundle.grid.steps() + 1);
    run_variations(model, rule, x0, &bundle.grid, &bundle.y, &bundle.noise, &[zeta], |_| {}, Some(&mut trace))
        .ok_or_else(|| domain("variation processes need a path without ruin"))?;
    Ok(trace.into_iter().unzip())
}

/// Both `dJ/dℓ` estimators for one direction `ζ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaResult {
    pub label: String,
    /// `(J(ℓ=ε) - J(ℓ=-ε)) / 2ε` on common noise.
    pub fd_mean: f64,
    pub fd_stderr: f64,
    /// `E[∫(f_x x1 + f_y y1 + f_π ζ)dt + g_x x1(T) + g_y y1(T)]`
    pub var_mean: f64,
    pub var_stderr: f64,
    /// Standard error of the pathwise difference of the two estimators.
    pub paired_stderr: f64,
    /// `E[∫ ∂H/∂π ζ dt]` with the candidate adjoints, when a grid is given.
    pub hamiltonian: Option<(f64, f64)>,
}

impl ZetaResult {
    pub fn combined_stderr(&self) -> f64 {
        self.fd_stderr.hypot(self.var_stderr)
    }

    pub fn fd_zero(&self, k: f64) -> bool {
        self.fd_mean.abs() <= k * self.fd_stderr
    }

    pub fn var_zero(&self, k: f64) -> bool {
        self.var_mean.abs() <= k * self.var_stderr
    }

    pub fn agree(&self, k: f64) -> bool {
        (self.fd_mean - self.var_mean).abs() <= k * self.combined_stderr()
    }

    /// Finite-difference confidence interval lies strictly below zero.
    pub fn fd_negative(&self, k: f64) -> bool {
        self.fd_mean + k * self.fd_stderr < 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NecessaryReport {
    pub zetas: Vec<ZetaResult>,
    /// Constant direction evaluated at `π + shift`, with the shift.
    pub suboptimal: Option<(f64, ZetaResult)>,
    pub n_paths: usize,
    pub flagged: usize,
}

impl NecessaryReport {
    pub fn passed(&self) -> bool {
        self.zetas.iter().all(|z| z.fd_zero(3.0) && z.var_zero(3.0) && z.agree(3.0))
            && self.suboptimal.as_ref().is_none_or(|(_, z)| z.fd_negative(3.0))
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new();
        for z in &self.zetas {
            let tag = format!("necessary {}", z.label);
            r.check(
                format!("{tag} finite difference zero"),
                z.fd_zero(3.0),
                format!("{:.6e} stderr {:.6e}", z.fd_mean, z.fd_stderr),
            );
            r.check(
                format!("{tag} variation zero"),
                z.var_zero(3.0),
                format!("{:.6e} stderr {:.6e}", z.var_mean, z.var_stderr),
            );
            r.check(
                format!("{tag} estimators agree"),
                z.agree(3.0),
                format!(
                    "gap {:.6e} combined stderr {:.6e} paired stderr {:.6e}",
                    z.fd_mean - z.var_mean,
                    z.combined_stderr(),
                    z.paired_stderr
                ),
            );
            if let Some((m, s)) = z.hamiltonian {
                r.info(format!("{tag} Hamiltonian form"), format!("{m:.6e} stderr {s:.6e}"));
            }
        }
        if let Some((shift, z)) = &self.suboptimal {
            r.check(
                format!("necessary suboptimal pi{shift:+} detected"),
                z.fd_negative(3.0),
                format!(
                    "finite difference {:.6e} stderr {:.6e}, variation {:.6e} stderr {:.6e}",
                    z.fd_mean, z.fd_stderr, z.var_mean, z.var_stderr
                ),
            );
        }
        r.info("necessary paths", format!("{} retained, {} flagged", self.n_paths, self.flagged));
        r
    }
}

struct NecessaryPath {
    fd: Vec<f64>,
    var: Vec<f64>,
    ham: Vec<f64>,
    sub: Option<(f64, f64)>,
}

/// `∂H/∂π` with the candidate adjoints of `grid`.
fn hamiltonian_pi(model: &Model, grid: &HGrid, t: f64, x: f64, y: f64) -> f64 {
    let cs = &model.market;
    let adj = candidate_from(model, t, x, y, grid.h_at(t, y), grid.h_y_at(t, y), grid.pi_at(t, y));
    let rate = cs.jumps.rate();
    let jump: f64 =
        cs.jumps.atoms().iter().zip(&adj.d1).map(|(a, d)| rate * a.prob * cs.gamma(t, y, a.mark) * d).sum();
    x * (cs.mu(t, y) * adj.a1 + cs.beta(t, y) * adj.b1 + cs.sigma(t, y) * adj.b2 + jump)
}

/// Checks `dJ/dℓ = 0` at `rule` for every direction, by finite differences of
/// the performance on common noise and by the variation processes.
///
/// With `suboptimal_shift`, the constant direction is also tested at
/// `π + shift`, where the finite difference must be significantly negative.
#[allow(clippy::too_many_arguments)]
pub fn necessary_condition_test<R: StrategyRule>(
    model: &Model,
    rule: &R,
    grid: Option<&HGrid>,
    perturbations: &[Perturbation],
    suboptimal_shift: Option<f64>,
    x0: f64,
    y0: f64,
    sim: &SimulationConfig,
) -> Result<NecessaryReport> {
    check_start(x0, sim)?;
    let tg = sim.grid(model.horizon())?;
    let eps = sim.epsilon;
    let plus: Vec<_> = perturbations.iter().map(|z| PerturbedRule::new(rule).along(*z, eps)).collect();
    let minus: Vec<_> = perturbations.iter().map(|z| PerturbedRule::new(rule).along(*z, -eps)).collect();
    let sub = suboptimal_shift.map(|s| PerturbedRule::new(rule).shift_pi(s));
    let one = Perturbation::Constant(1.0);

    let values = for_each_path(sim.paths, |p| {
        let noise = PathNoise::draw(&tg, &model.market.jumps, sim.seed, p);
        let ys = factor_path(&model.factor, y0, &tg, sim.scheme, &noise.dw1);
        let mut ham = vec![0.0; perturbations.len()];
        let vars = run_variations(
            model,
            rule,
            x0,
            &tg,
            &ys,
            &noise,
            perturbations,
            |s| {
                if let Some(g) = grid {
                    let hp = hamiltonian_pi(model, g, s.t, s.x, s.y);
                    for (acc, z) in ham.iter_mut().zip(perturbations) {
                        *acc += hp * z.eval(s.t, s.y) * s.dt;
                    }
                }
            },
            None,
        )?;
        let mut fd = Vec::with_capacity(perturbations.len());
        for (rp, rm) in plus.iter().zip(&minus) {
            let jp = path_value(model, rp, x0, &tg, &ys, &noise)?.total();
            let jm = path_value(model, rm, x0, &tg, &ys, &noise)?.total();
            fd.push((jp - jm) / (2.0 * eps));
        }
        let sub = match &sub {
            Some(base) => {
                let v = run_variations(model, base, x0, &tg, &ys, &noise, &[one], |_| {}, None)?;
                let jp = path_value(model, &PerturbedRule::new(base).along(one, eps), x0, &tg, &ys, &noise)?.total();
                let jm = path_value(model, &PerturbedRule::new(base).along(one, -eps), x0, &tg, &ys, &noise)?.total();
                Some(((jp - jm) / (2.0 * eps), v[0].acc))
            }
            None => None,
        };
        Some(NecessaryPath { fd, var: vars.iter().map(|v| v.acc).collect(), ham, sub })
    });
    let kept: Vec<NecessaryPath> = values.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::AllPathsFlagged { n_paths: sim.paths });
    }
    let summarize = |label: String, fd: Vec<f64>, var: Vec<f64>, ham: Option<Vec<f64>>| {
        let (fd_mean, fd_stderr) = mean_stderr(&fd);
        let (var_mean, var_stderr) = mean_stderr(&var);
        let diff: Vec<f64> = fd.iter().zip(&var).map(|(a, b)| a - b).collect();
        let (_, paired_stderr) = mean_stderr(&diff);
        ZetaResult {
            label,
            fd_mean,
            fd_stderr,
            var_mean,
            var_stderr,
            paired_stderr,
            hamiltonian: ham.map(|h| mean_stderr(&h)),
        }
    };
    let zetas = perturbations
        .iter()
        .enumerate()
        .map(|(i, z)| {
            summarize(
                z.label(),
                kept.iter().map(|k| k.fd[i]).collect(),
                kept.iter().map(|k| k.var[i]).collect(),
                grid.map(|_| kept.iter().map(|k| k.ham[i]).collect()),
            )
        })
        .collect();
    let suboptimal = suboptimal_shift.map(|shift| {
        let fd = kept.iter().filter_map(|k| k.sub.map(|s| s.0)).collect();
        let var = kept.iter().filter_map(|k| k.sub.map(|s| s.1)).collect();
        (shift, summarize(one.label(), fd, var, None))
    });
    Ok(NecessaryReport { zetas, suboptimal, n_paths: kept.len(), flagged: sim.paths - kept.len() })
}

/// Options of [`sufficient_condition_report`].
#[derive(Debug, Clone)]
pub struct SufficientOptions {
    /// Replaces the terminal reward `x ↦ e^(-∫₀ᵀ(ρ+λ))U3(x)` in the concavity check.
    pub terminal: Option<fn(f64) -> f64>,
    /// Number of log-spaced wealth samples in `[x0/20, 20 x0]`.
    pub x_samples: usize,
    /// Skip the Monte Carlo integrability expectations.
    pub skip_integrability: bool,
}

impl Default for SufficientOptions {
    fn default() -> Self {
        Self { terminal: None, x_samples: 41, skip_integrability: false }
    }
}

/// Hamiltonian maximised over the controls with the adjoints frozen.
///
/// `H` is affine in `π`, so the supremum over the admissible bracket sits at
/// an endpoint; consumption and premium have closed forms.
fn maximized_hamiltonian(model: &Model, t: f64, x: f64, y: f64, adj: &AdjointState) -> Result<f64> {
    let (cs, am, im, prefs) = (&model.market, &model.actuarial, &model.insurers, &model.prefs);
    let c = optimal_consumption(prefs, am, t, adj.a1)?;
    let premiums =
        if am.lambda(t) > 0.0 { optimal_premium(prefs, am, im, t, x, adj.a1)?.premiums } else { vec![0.0; im.len()] };
    let rate = cs.jumps.rate();
    let jump: f64 =
        cs.jumps.atoms().iter().zip(&adj.d1).map(|(a, d)| rate * a.prob * cs.gamma(t, y, a.mark) * d).sum();
    let slope = cs.mu(t, y) * adj.a1 + cs.beta(t, y) * adj.b1 + cs.sigma(t, y) * adj.b2 + jump;
    let (lo, hi) = PortfolioInputs::at(cs, t, y).bracket();
    let pi = if slope > 0.0 {
        hi
    } else if slope < 0.0 {
        lo
    } else {
        0.0
    };
    hamiltonian(model, t, x, y, c, pi, &premiums, adj)
}

/// Numerical checks of the sufficient maximum principle: concavity of the
/// terminal reward in `x`, concavity of the maximised Hamiltonian in `(x, y)`
/// along three directions, and the square-integrability expectations along
/// optimal paths.
pub fn sufficient_condition_report(
    model: &Model,
    grid: &HGrid,
    x0: f64,
    y0: f64,
    sim: &SimulationConfig,
    opts: &SufficientOptions,
) -> Result<Report> {
    check_start(x0, sim)?;
    let mut report = Report::new();

    let terminal = |x: f64| match opts.terminal {
        Some(f) => f(x),
        None => terminal_reward(model, x),
    };
    let n = opts.x_samples.max(3);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        let x = x0 * (20f64.ln() * (2.0 * i as f64 / (n - 1) as f64 - 1.0)).exp();
        let s = 1e-3 * x;
        let (a, b, c) = (terminal(x - s), terminal(x), terminal(x + s));
        let scale = a.abs().max(b.abs()).max(c.abs()).max(1e-300);
        worst = worst.max((a - 2.0 * b + c) / scale);
    }
    report.check(
        "sufficient terminal concavity in x",
        worst <= 1e-12,
        format!("largest normalised second difference {worst:.3e} over {n} points"),
    );

    let horizon = model.horizon();
    let (ylo, yhi) = model.factor.domain;
    let ys: Vec<f64> = [y0 - 1.0, y0, y0 + 1.0].into_iter().map(|y| y.clamp(ylo, yhi)).collect();
    let directions = [("(1,0)", 1.0, 0.0), ("(0,1)", 0.0, 1.0), ("(1,1)", std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2)];
    for (label, dx, dy) in directions {
        let mut worst = f64::NEG_INFINITY;
        let mut at = (0.0, 0.0, 0.0);
        for t in [0.0, 0.5 * horizon, 0.9 * horizon] {
            for &y in &ys {
                for x in [0.5 * x0, x0, 2.0 * x0] {
                    let adj = adjoint_candidate(model, grid, t, x, y)?;
                    let s = 0.05;
                    let point = |k: f64| maximized_hamiltonian(model, t, x * (1.0 + k * s * dx), y + k * s * dy, &adj);
                    let (a, b, c) = (point(-1.0)?, point(0.0)?, point(1.0)?);
                    let scale = a.abs().max(b.abs()).max(c.abs()).max(1e-300);
                    let v = (a - 2.0 * b + c) / scale;
                    if v > worst {
                        worst = v;
                        at = (t, x, y);
                    }
                }
            }
        }
        report.check(
            format!("sufficient maximised Hamiltonian concave along {label}"),
            worst <= 1e-9,
            format!(
                "largest normalised second difference {worst:.3e} at t={:.3} x={:.3} y={:.3}",
                at.0, at.1, at.2
            ),
        );
    }

    if !opts.skip_integrability {
        let [i1, i2, i3] = integrability(model, grid, x0, y0, sim)?;
        for (name, m) in [
            ("sufficient integrability E[int X^2(B1^2+B2^2+int D1^2 nu)]", i1),
            ("sufficient integrability E[int A1^2 (pi X)^2 (beta^2+sigma^2+int gamma^2 nu)]", i2),
            ("sufficient integrability E[int Y^2(B3^2+B4^2+int D2^2 nu) + A2^2]", i3),
        ] {
            report.check(
                name,
                m.mean.is_finite() && m.stderr.is_finite(),
                format!("mean {:.6e} stderr {:.6e} paths {}", m.mean, m.stderr, m.n_paths),
            );
        }
    }
    Ok(report)
}

fn integrability(model: &Model, grid: &HGrid, x0: f64, y0: f64, sim: &SimulationConfig) -> Result<[PathMean; 3]> {
    let tg = sim.grid(model.horizon())?;
    let rule = OptimalRule::new(model, grid);
    let cs = &model.market;
    let rate = cs.jumps.rate();
    let values = for_each_path(sim.paths, |p| {
        let noise = PathNoise::draw(&tg, &cs.jumps, sim.seed, p);
        let ys = factor_path(&model.factor, y0, &tg, sim.scheme, &noise.dw1);
        let mut acc = [0.0; 3];
        let end = walk(model, &rule, x0, &tg, &ys, &noise, |s| {
            let (t, x, y) = (s.t, s.x, s.y);
            let adj = candidate_from(model, t, x, y, grid.h_at(t, y), grid.h_y_at(t, y), s.controls.pi);
            let atoms = cs.jumps.atoms();
            let d1: f64 = atoms.iter().zip(&adj.d1).map(|(a, d)| rate * a.prob * d * d).sum();
            let d2: f64 = atoms.iter().zip(&adj.d2).map(|(a, d)| rate * a.prob * d * d).sum();
            let g2: f64 = atoms.iter().map(|a| rate * a.prob * cs.gamma(t, y, a.mark).powi(2)).sum();
            let px = s.controls.pi * x;
            acc[0] += x * x * (adj.b1 * adj.b1 + adj.b2 * adj.b2 + d1) * s.dt;
            acc[1] += adj.a1 * adj.a1 * px * px * (cs.diffusion_variance(t, y) + g2) * s.dt;
            acc[2] += (y * y * (adj.b3 * adj.b3 + adj.b4 * adj.b4 + d2) + adj.a2 * adj.a2) * s.dt;
        });
        end.ruined.is_none().then_some(acc)
    });
    let kept: Vec<[f64; 3]> = values.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::AllPathsFlagged { n_paths: sim.paths });
    }
    let flagged = sim.paths - kept.len();
    Ok(std::array::from_fn(|i| PathMean::from_values(&kept.iter().map(|a| a[i]).collect::<Vec<_>>(), flagged)))
}

/// `E[∫₀ᵀ ∂H/∂y dt]` along optimal paths with the candidate adjoints.
///
/// With `A2 = B3 = B4 = D2 = 0` the second adjoint equation reduces to
/// `∂H/∂y = 0`, so the mean must vanish.
pub fn factor_adjoint_check(model: &Model, grid: &HGrid, x0: f64, y0: f64, sim: &SimulationConfig) -> Result<PathMean> {
    check_start(x0, sim)?;
    let tg = sim.grid(model.horizon())?;
    let rule = OptimalRule::new(model, grid);
    let cs = &model.market;
    let values = for_each_path(sim.paths, |p| {
        let noise = PathNoise::draw(&tg, &cs.jumps, sim.seed, p);
        let ys = factor_path(&model.factor, y0, &tg, sim.scheme, &noise.dw1);
        let mut acc = 0.0;
        let end = walk(model, &rule, x0, &tg, &ys, &noise, |s| {
            let adj = candidate_from(model, s.t, s.x, s.y, grid.h_at(s.t, s.y), grid.h_y_at(s.t, s.y), s.controls.pi);
            let h_y = s.controls.pi * s.x * factor_stationarity(cs, s.t, s.y, &adj)
                + model.factor.drift.derivative(s.y) * adj.a2;
            acc += h_y * s.dt;
        });
        end.ruined.is_none().then_some(acc)
    });
    let kept: Vec<f64> = values.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::AllPathsFlagged { n_paths: sim.paths });
    }
    Ok(PathMean::from_values(&kept, sim.paths - kept.len()))
}

/// Performance of the optimal rule next to `x0^δ e^(-h(0, y0)) / δ`.
pub fn value_consistency(
    model: &Model,
    grid: &HGrid,
    x0: f64,
    y0: f64,
    sim: &SimulationConfig,
) -> Result<(PerformanceEstimate, f64)> {
    let rule = OptimalRule::new(model, grid);
    let est = super::estimate_performance(model, &rule, x0, y0, sim)?;
    let delta = model.prefs.delta();
    Ok((est, x0.powf(delta) * (-grid.h_at(0.0, y0)).exp() / delta))
}
