//! Backward equation for the exponent `h(t, y)` of the adjoint ansatz
//! `A1 = X^(δ-1) e^(-h(t, Y))`, solved by a damped Feynman–Kac fixed point.
//!
//! Each iteration solves the portfolio condition at every node from the
//! current `h_y`, applies the Monte Carlo operator Φ, and relaxes
//! `h ← (1-ω)h + ωΦh`. Φ reuses one table of normal draws for every node and
//! every iteration, so it is a deterministic map and the iteration can be
//! driven below tolerances much smaller than its Monte Carlo error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{invalid, Error, Result};
use crate::market::linspace;
use crate::strategy::{consumption_ratio, legacy_ratio, solve_portfolio_inputs, PortfolioInputs, UtilityKind, PORTFOLIO_XTOL};
use crate::Model;

/// Terminal condition imposed on `h(T, ·)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalMode {
    /// `∫₀ᵀ(ρ+λ) - ln κ3`, which makes `A1(T)` equal the terminal marginal utility.
    #[default]
    Ansatz,
    /// `∫₀ᵀ(ρ+λ)`
    Integral,
    /// `exp(-∫₀ᵀ(ρ+λ))`
    Exponential,
}

impl TerminalMode {
    pub fn value(&self, model: &Model) -> f64 {
        let d = model.actuarial.discount_exponent(model.horizon());
        match self {
            TerminalMode::Ansatz => d - model.prefs.kappa(UtilityKind::Terminal).ln(),
            TerminalMode::Integral => d,
            TerminalMode::Exponential => (-d).exp(),
        }
    }
}

/// Which backward equation drives the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Equation obtained by substituting the optimal controls into the
    /// dynamic programming equation for `V = x^δ e^(-h)/δ`.
    #[default]
    Consistent,
    /// Factor drift `g + ½(δ-1)π*β`, source `-½h_y² + K + (1-δ)e^(h/(1-δ))e^(∫(ρ+λ))[1 + η(η/(κ2λ))^(1/(δ-1))]`.
    Reference,
}

/// How Φ represents the first-order term of the equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    /// The first-order coefficient shifts the drift of the simulated factor.
    #[default]
    Drift,
    /// The factor follows `g` only and the coefficient enters as a weight
    /// `e^Q`, with `e^(Q(t,y))` in place of the terminal value.
    Literal,
}

fn default_t_nodes() -> usize {
    26
}
fn default_y_nodes() -> usize {
    41
}
fn default_damping() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-4
}
fn default_max_iters() -> usize {
    60
}

/// Grid and iteration settings.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HSolverConfig {
    #[serde(default = "default_t_nodes")]
    pub t_nodes: usize,
    #[serde(default = "default_y_nodes")]
    pub y_nodes: usize,
    /// Defaults to the factor domain.
    #[serde(default)]
    pub y_range: Option<(f64, f64)>,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub terminal: TerminalMode,
    #[serde(default)]
    pub generator: Generator,
    #[serde(default)]
    pub phi: PhiMode,
}

impl Default for HSolverConfig {
    fn default() -> Self {
        Self {
            t_nodes: default_t_nodes(),
            y_nodes: default_y_nodes(),
            y_range: None,
            damping: default_damping(),
            tol: default_tol(),
            max_iters: default_max_iters(),
            terminal: TerminalMode::default(),
            generator: Generator::default(),
            phi: PhiMode::default(),
        }
    }
}

impl HSolverConfig {
    fn validate(&self) -> Result<()> {
        if self.t_nodes == 0 || self.y_nodes == 0 {
            return Err(invalid("h-grid needs at least one node in each direction"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(invalid("tolerance and iteration cap must be positive"));
        }
        if let Some((lo, hi)) = self.y_range {
            if !(lo < hi) {
                return Err(invalid(format!("empty y range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

fn default_pairs() -> usize {
    256
}
fn default_substeps() -> usize {
    2
}
fn default_target_stderr() -> f64 {
    5e-3
}

/// Monte Carlo settings of Φ.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiConfig {
    /// Antithetic pairs per node.
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    /// Euler steps per h-grid time interval.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Largest acceptable node standard error before a warning is recorded.
    #[serde(default = "default_target_stderr")]
    pub target_stderr: f64,
}

impl Default for PhiConfig {
    fn default() -> Self {
        Self { pairs: default_pairs(), substeps: default_substeps(), seed: 0, target_stderr: default_target_stderr() }
    }
}

/// Tabulated `h`, `h_y` and the coupled portfolio on a uniform `(t, y)` grid.
///
/// Matrices are row-major with one row per time node.
#[derive(Debug, Clone, PartialEq)]
pub struct HGrid {
    pub t_nodes: Vec<f64>,
    pub y_nodes: Vec<f64>,
    pub h: Vec<f64>,
    pub h_y: Vec<f64>,
    pub pi_star: Vec<f64>,
    pub iterations: usize,
    /// `‖Φh - h‖∞` after each iteration.
    pub sup_norm_history: Vec<f64>,
    /// Largest node standard error of the last Φ application.
    pub max_stderr: f64,
    pub warnings: Vec<String>,
}

#[inline]
fn locate(lo: f64, step: f64, n: usize, x: f64) -> (usize, f64) {
    if n < 2 {
        return (0, 0.0);
    }
    let s = ((x - lo) / step).clamp(0.0, (n - 1) as f64);
    let i = (s as usize).min(n - 2);
    (i, s - i as f64)
}

impl HGrid {
    pub fn nt(&self) -> usize {
        self.t_nodes.len()
    }

    pub fn ny(&self) -> usize {
        self.y_nodes.len()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.y_nodes.len() + j
    }

    #[inline]
    fn step(nodes: &[f64]) -> f64 {
        if nodes.len() < 2 {
            1.0
        } else {
            (nodes[nodes.len() - 1] - nodes[0]) / (nodes.len() - 1) as f64
        }
    }

    #[inline]
    fn interp(&self, m: &[f64], t: f64, y: f64) -> f64 {
        let (i, wt) = locate(self.t_nodes[0], Self::step(&self.t_nodes), self.nt(), t);
        let (j, wy) = locate(self.y_nodes[0], Self::step(&self.y_nodes), self.ny(), y);
        let ny = self.ny();
        let row = |i: usize| {
            let a = m[i * ny + j];
            if ny < 2 {
                a
            } else {
                a + wy * (m[i * ny + j + 1] - a)
            }
        };
        let lo = row(i);
        if self.nt() < 2 {
            lo
        } else {
            lo + wt * (row(i + 1) - lo)
        }
    }

    /// Bilinear interpolation of `h`, clamped to the grid.
    #[inline]
    pub fn h_at(&self, t: f64, y: f64) -> f64 {
        self.interp(&self.h, t, y)
    }

    #[inline]
    pub fn h_y_at(&self, t: f64, y: f64) -> f64 {
        self.interp(&self.h_y, t, y)
    }

    #[inline]
    pub fn pi_at(&self, t: f64, y: f64) -> f64 {
        self.interp(&self.pi_star, t, y)
    }

    #[inline]
    pub fn h_and_pi_at(&self, t: f64, y: f64) -> (f64, f64) {
        (self.h_at(t, y), self.pi_at(t, y))
    }

    /// Copy with `h` shifted by a constant; `h_y` and `π*` are unchanged.
    pub fn shifted(&self, shift: f64) -> HGrid {
        let mut out = self.clone();
        out.h.iter_mut().for_each(|v| *v += shift);
        out
    }

    /// Last row of `h`.
    pub fn terminal_row(&self) -> &[f64] {
        let ny = self.ny();
        &self.h[(self.nt() - 1) * ny..]
    }

    /// Whether the last three entries of the history decrease.
    pub fn contracting_tail(&self) -> bool {
        let h = &self.sup_norm_history;
        h.len() < 3 || h[h.len() - 3..].windows(2).all(|w| w[1] < w[0])
    }

    /// Ratio of the last two history entries.
    pub fn tail_ratio(&self) -> Option<f64> {
        let h = &self.sup_norm_history;
        (h.len() >= 2).then(|| h[h.len() - 1] / h[h.len() - 2])
    }
}

/// The backward equation as seen by Φ: `h_t + b h_y + ½h_yy + S = 0`.
pub trait HDynamics: Sync {
    fn terminal(&self, y: f64) -> f64;

    /// Portfolio coupled to `h_y` at a node.
    fn portfolio(&self, t: f64, y: f64, h_y: f64) -> Result<f64>;

    /// Full first-order coefficient `b(t, y)`.
    fn drift(&self, t: f64, y: f64, pi: f64) -> f64;

    /// Drift of the factor alone, used by the literal operator.
    fn base_drift(&self, y: f64) -> f64;

    fn source(&self, t: f64, y: f64, h: f64, h_y: f64, pi: f64) -> f64;
}

/// The model's equation under a chosen generator and terminal condition.
pub struct ModelDynamics<'a> {
    model: &'a Model,
    generator: Generator,
    terminal: f64,
}

impl<'a> ModelDynamics<'a> {
    pub fn new(model: &'a Model, generator: Generator, terminal: TerminalMode) -> Self {
        Self { model, generator, terminal: terminal.value(model) }
    }
}

/// `Σ w[(1+πγ)^δ - 1 - δπγ]`
#[inline]
fn jump_utility_term(delta: f64, pi: f64, jumps: &[(f64, f64)]) -> f64 {
    jumps.iter().map(|&(w, g)| w * ((1.0 + pi * g).powf(delta) - 1.0 - delta * pi * g)).sum()
}

impl HDynamics for ModelDynamics<'_> {
    fn terminal(&self, _y: f64) -> f64 {
        self.terminal
    }

    fn portfolio(&self, t: f64, y: f64, h_y: f64) -> Result<f64> {
        let inputs = PortfolioInputs::at(&self.model.market, t, y);
        Ok(solve_portfolio_inputs(self.model.prefs.delta(), &inputs, h_y, PORTFOLIO_XTOL)?.pi)
    }

    fn drift(&self, t: f64, y: f64, pi: f64) -> f64 {
        let d = self.model.prefs.delta();
        let beta = self.model.market.beta(t, y);
        let adj = match self.generator {
            Generator::Consistent => d * pi * beta,
            Generator::Reference => 0.5 * (d - 1.0) * pi * beta,
        };
        self.model.factor.g(y) + adj
    }

    fn base_drift(&self, y: f64) -> f64 {
        self.model.factor.g(y)
    }

    fn source(&self, t: f64, y: f64, h: f64, h_y: f64, pi: f64) -> f64 {
        let m = self.model;
        let d = m.prefs.delta();
        let (am, cs) = (&m.actuarial, &m.market);
        let de = am.discount_exponent(t);
        let lambda = am.lambda(t);
        let eta = m.insurers.min_eta(t);
        match self.generator {
            Generator::Consistent => {
                let inputs = PortfolioInputs::at(cs, t, y);
                let theta_c = consumption_ratio(&m.prefs, de, h);
                let legacy = match legacy_ratio(&m.prefs, de, h, eta, lambda) {
                    None => 0.0,
                    Some(theta) if theta >= 1.0 => (1.0 - d) * eta * theta + d * eta,
                    Some(theta) => eta * theta.powf(1.0 - d),
                };
                -0.5 * h_y * h_y
                    - d * cs.r(t)
                    - d * pi * inputs.mu
                    - 0.5 * d * (d - 1.0) * pi * pi * inputs.variance
                    - jump_utility_term(d, pi, &inputs.jumps)
                    - (1.0 - d) * theta_c
                    - legacy
            }
            Generator::Reference => {
                let k = k_term_inputs(d, cs.r(t), eta, pi, &PortfolioInputs::at(cs, t, y));
                let bracket = if lambda > 0.0 {
                    let k2 = m.prefs.kappa(UtilityKind::Legacy);
                    1.0 + eta * (eta / (k2 * lambda)).powf(1.0 / (d - 1.0))
                } else {
                    1.0
                };
                -0.5 * h_y * h_y + k + (1.0 - d) * (h / (1.0 - d)).exp() * de.exp() * bracket
            }
        }
    }
}

#[inline]
fn k_term_inputs(delta: f64, r: f64, eta: f64, pi: f64, inputs: &PortfolioInputs) -> f64 {
    let d = delta;
    let jumps: f64 = inputs
        .jumps
        .iter()
        .map(|&(w, g)| w * ((1.0 + pi * g).powf(d - 1.0) - 1.0 - (d - 1.0) * pi * g))
        .sum();
    -(d - 1.0)
        * (r + inputs.mu * pi + d * eta + 0.5 * (d - 1.0) * (d - 2.0) * pi * pi * inputs.variance + jumps)
}

/// `K(t) = -(δ-1){r + μπ + δη_{n*} + ½(δ-1)(δ-2)π²(β²+σ²) + ∫[(1+πγ)^(δ-1) - 1 - (δ-1)πγ]ν(dz)}`,
/// with `-(δ-1)` multiplying the whole sum.
pub fn k_term(model: &Model, t: f64, y: f64, pi: f64) -> Result<f64> {
    let inputs = PortfolioInputs::at(&model.market, t, y);
    if let Some(i) = inputs.jumps.iter().position(|&(_, g)| !(1.0 + pi * g > 0.0)) {
        return Err(crate::error::domain(format!("1 + pi*gamma <= 0 at atom {}", i + 1)));
    }
    Ok(k_term_inputs(model.prefs.delta(), model.market.r(t), model.insurers.min_eta(t), pi, &inputs))
}

/// Result of one application of Φ on the non-terminal rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiOutput {
    /// Full grid, with the terminal row set to the terminal condition.
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Shared normal draws `[pair][step]` for every node and iteration.
pub struct NoiseTable {
    steps: usize,
    z: Vec<f64>,
}

impl NoiseTable {
    pub fn new(pairs: usize, steps: usize, seed: u64) -> Self {
        let mut z = Vec::with_capacity(pairs * steps);
        for p in 0..pairs {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            z.extend((0..steps).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
        }
        Self { steps, z }
    }

    #[inline]
    fn pair(&self, p: usize) -> &[f64] {
        &self.z[p * self.steps..(p + 1) * self.steps]
    }

    fn pairs(&self) -> usize {
        if self.steps == 0 {
            0
        } else {
            self.z.len() / self.steps
        }
    }
}

/// Per-iteration tables on the fine time grid `[substep row][y node]`.
struct FineTables {
    dt: f64,
    y0: f64,
    dy: f64,
    ny: usize,
    drift: Vec<f64>,
    /// Source, multiplied by `e^Q` in literal mode.
    source: Vec<f64>,
}

impl FineTables {
    #[inline]
    fn lerp(&self, m: &[f64], k: usize, y: f64) -> f64 {
        let (j, w) = locate(self.y0, self.dy, self.ny, y);
        let row = &m[k * self.ny..(k + 1) * self.ny];
        if self.ny < 2 {
            row[0]
        } else {
            row[j] + w * (row[j + 1] - row[j])
        }
    }
}

fn central_derivative(values: &[f64], nt: usize, ny: usize, dy: f64) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    if ny < 2 {
        return out;
    }
    for i in 0..nt {
        let row = &values[i * ny..(i + 1) * ny];
        let dst = &mut out[i * ny..(i + 1) * ny];
        if ny == 2 {
            let d = (row[1] - row[0]) / dy;
            dst[0] = d;
            dst[1] = d;
            continue;
        }
        dst[0] = (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * dy);
        dst[ny - 1] = (3.0 * row[ny - 1] - 4.0 * row[ny - 2] + row[ny - 3]) / (2.0 * dy);
        for j in 1..ny - 1 {
            dst[j] = (row[j + 1] - row[j - 1]) / (2.0 * dy);
        }
    }
    out
}

/// Grid geometry plus the shared noise for one solve.
pub struct PhiWorkspace {
    t_nodes: Vec<f64>,
    y_nodes: Vec<f64>,
    substeps: usize,
    noise: NoiseTable,
    mode: PhiMode,
    target_stderr: f64,
}

impl PhiWorkspace {
    pub fn new(t_nodes: Vec<f64>, y_nodes: Vec<f64>, mode: PhiMode, cfg: &PhiConfig) -> Result<Self> {
        if cfg.pairs == 0 || cfg.substeps == 0 {
            return Err(invalid("Φ needs at least one antithetic pair and one substep"));
        }
        let steps = t_nodes.len().saturating_sub(1) * cfg.substeps;
        Ok(Self {
            noise: NoiseTable::new(cfg.pairs, steps, cfg.seed),
            t_nodes,
            y_nodes,
            substeps: cfg.substeps,
            mode,
            target_stderr: cfg.target_stderr,
        })
    }

    fn fine_tables<D: HDynamics + ?Sized>(&self, grid: &HGrid, dynamics: &D) -> FineTables {
        let nt = self.t_nodes.len();
        let ny = self.y_nodes.len();
        let fine = (nt - 1) * self.substeps + 1;
        let t0 = self.t_nodes[0];
        let dt = (self.t_nodes[nt - 1] - t0) / (fine - 1) as f64;
        let mut drift = vec![0.0; fine * ny];
        let mut source = vec![0.0; fine * ny];
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..fine)
            .into_par_iter()
            .map(|k| {
                let s = t0 + k as f64 * dt;
                let mut dr = Vec::with_capacity(ny);
                let mut so = Vec::with_capacity(ny);
                for &y in &self.y_nodes {
                    let h = grid.h_at(s, y);
                    let h_y = grid.h_y_at(s, y);
                    let pi = grid.pi_at(s, y);
                    let b = dynamics.drift(s, y, pi);
                    let src = dynamics.source(s, y, h, h_y, pi);
                    match self.mode {
                        PhiMode::Drift => {
                            dr.push(b);
                            so.push(src);
                        }
                        PhiMode::Literal => {
                            dr.push(dynamics.base_drift(y));
                            so.push(b.exp() * src);
                        }
                    }
                }
                (dr, so)
            })
            .collect();
        for (k, (dr, so)) in rows.into_iter().enumerate() {
            drift[k * ny..(k + 1) * ny].copy_from_slice(&dr);
            source[k * ny..(k + 1) * ny].copy_from_slice(&so);
        }
        let dy = HGrid::step(&self.y_nodes);
        FineTables { dt, y0: self.y_nodes[0], dy, ny, drift, source }
    }

    /// One path from fine row `k0` to the end; returns the integral and the terminal factor value.
    #[inline]
    fn path(&self, tables: &FineTables, k0: usize, y0: f64, z: &[f64], sign: f64) -> (f64, f64) {
        let fine_last = tables.drift.len() / tables.ny - 1;
        let sq = tables.dt.sqrt();
        let mut y = y0;
        let mut integral = 0.0;
        let mut prev = tables.lerp(&tables.source, k0, y);
        for (step, k) in (k0..fine_last).enumerate() {
            let b = tables.lerp(&tables.drift, k, y);
            y += b * tables.dt + sign * sq * z[step];
            let next = tables.lerp(&tables.source, k + 1, y);
            integral += 0.5 * tables.dt * (prev + next);
            prev = next;
        }
        (integral, y)
    }

    /// Applies Φ to `grid` using the coupled portfolio stored in it.
    pub fn apply<D: HDynamics + ?Sized>(&self, grid: &HGrid, dynamics: &D) -> PhiOutput {
        let nt = self.t_nodes.len();
        let ny = self.y_nodes.len();
        let mut values = vec![0.0; nt * ny];
        let mut stderr = vec![0.0; nt * ny];
        for j in 0..ny {
            values[(nt - 1) * ny + j] = dynamics.terminal(self.y_nodes[j]);
        }
        if nt < 2 {
            return PhiOutput { values, stderr };
        }
        let tables = self.fine_tables(grid, dynamics);
        let pairs = self.noise.pairs();
        let nodes: Vec<(f64, f64)> = (0..(nt - 1) * ny)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / ny, idx % ny);
                let (t, y) = (self.t_nodes[i], self.y_nodes[j]);
                let k0 = i * self.substeps;
                let start = match self.mode {
                    PhiMode::Drift => 0.0,
                    PhiMode::Literal => dynamics.drift(t, y, grid.pi_star[grid.index(i, j)]).exp(),
                };
                let (mut sum, mut sum_sq) = (0.0, 0.0);
                for p in 0..pairs {
                    let z = self.noise.pair(p);
                    let mut pair_value = 0.0;
                    for sign in [1.0, -1.0] {
                        let (integral, y_end) = self.path(&tables, k0, y, z, sign);
                        let terminal = match self.mode {
                            PhiMode::Drift => dynamics.terminal(y_end),
                            PhiMode::Literal => 0.0,
                        };
                        pair_value += 0.5 * (start + integral + terminal);
                    }
                    sum += pair_value;
                    sum_sq += pair_value * pair_value;
                }
                let n = pairs as f64;
                let mean = sum / n;
                let var = if pairs > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
                (mean, (var / n).sqrt())
            })
            .collect();
        for (idx, (v, s)) in nodes.into_iter().enumerate() {
            values[idx] = v;
            stderr[idx] = s;
        }
        PhiOutput { values, stderr }
    }
}

fn refresh_couplings<D: HDynamics + ?Sized>(grid: &mut HGrid, dynamics: &D) -> Result<()> {
    let ny = grid.ny();
    let nt = grid.nt();
    let dy = HGrid::step(&grid.y_nodes);
    grid.h_y = central_derivative(&grid.h, nt, ny, dy);
    let pis: Result<Vec<f64>> = (0..nt * ny)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / ny, idx % ny);
            dynamics.portfolio(grid.t_nodes[i], grid.y_nodes[j], grid.h_y[idx])
        })
        .collect();
    grid.pi_star = pis?;
    Ok(())
}

/// Runs the damped fixed point on explicit node vectors.
pub fn solve_with<D: HDynamics + ?Sized>(
    dynamics: &D,
    t_nodes: Vec<f64>,
    y_nodes: Vec<f64>,
    cfg: &HSolverConfig,
    phi: &PhiConfig,
) -> Result<HGrid> {
    cfg.validate()?;
    let (nt, ny) = (t_nodes.len(), y_nodes.len());
    let initial: Vec<f64> = (0..nt * ny).map(|idx| dynamics.terminal(y_nodes[idx % ny])).collect();
    let mut grid = HGrid {
        t_nodes,
        y_nodes,
        h: initial,
        h_y: vec![0.0; nt * ny],
        pi_star: vec![0.0; nt * ny],
        iterations: 0,
        sup_norm_history: Vec::new(),
        max_stderr: 0.0,
        warnings: Vec::new(),
    };
    refresh_couplings(&mut grid, dynamics)?;
    if nt < 2 {
        grid.iterations = 1;
        grid.sup_norm_history.push(0.0);
        return Ok(grid);
    }
    let workspace = PhiWorkspace::new(grid.t_nodes.clone(), grid.y_nodes.clone(), cfg.phi, phi)?;
    let omega = cfg.damping;
    let mut converged = false;
    while grid.iterations < cfg.max_iters {
        let out = workspace.apply(&grid, dynamics);
        if out.values.iter().any(|v| !v.is_finite()) {
            grid.sup_norm_history.push(f64::INFINITY);
            return Err(Error::NoConvergence {
                iterations: grid.iterations + 1,
                last: f64::INFINITY,
                history: grid.sup_norm_history,
            });
        }
        let residual = out.values.iter().zip(&grid.h).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        for (h, v) in grid.h.iter_mut().zip(&out.values) {
            *h = (1.0 - omega) * *h + omega * v;
        }
        grid.iterations += 1;
        grid.sup_norm_history.push(residual);
        grid.max_stderr = out.stderr.iter().fold(0.0f64, |m, s| m.max(*s));
        refresh_couplings(&mut grid, dynamics)?;
        if residual < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: grid.iterations,
            last: grid.sup_norm_history.last().copied().unwrap_or(f64::NAN),
            history: grid.sup_norm_history,
        });
    }
    if grid.max_stderr > workspace.target_stderr {
        grid.warnings.push(format!(
            "largest node standard error {:.3e} exceeds the target {:.3e}; raise the pair count",
            grid.max_stderr, workspace.target_stderr
        ));
    }
    Ok(grid)
}

/// Node vectors for a model: uniform times on `[0, T]` and factor values on
/// the configured range.
pub fn grid_nodes(model: &Model, cfg: &HSolverConfig) -> (Vec<f64>, Vec<f64>) {
    let horizon = model.horizon();
    let t_nodes = if cfg.t_nodes == 1 { vec![horizon] } else { linspace(0.0, horizon, cfg.t_nodes) };
    let (lo, hi) = cfg.y_range.unwrap_or(model.factor.domain);
    (t_nodes, linspace(lo, hi, cfg.y_nodes))
}

/// Solves for `h` on the model's grid.
pub fn solve_h_fixed_point(model: &Model, cfg: &HSolverConfig, phi: &PhiConfig) -> Result<HGrid> {
    let (t_nodes, y_nodes) = grid_nodes(model, cfg);
    let dynamics = ModelDynamics::new(model, cfg.generator, cfg.terminal);
    solve_with(&dynamics, t_nodes, y_nodes, cfg, phi)
}

/// One application of Φ to an existing grid with the model's equation.
pub fn apply_phi(model: &Model, state: &HGrid, cfg: &HSolverConfig, phi: &PhiConfig) -> Result<PhiOutput> {
    let dynamics = ModelDynamics::new(model, cfg.generator, cfg.terminal);
    let workspace = PhiWorkspace::new(state.t_nodes.clone(), state.y_nodes.clone(), cfg.phi, phi)?;
    Ok(workspace.apply(state, &dynamics))
}
