//! Financial market primitives: the bond rate, the jump-diffusion risky
//! asset coefficients, the external factor, and sampled checks of the
//! standing assumptions on them.
//!
//! The Lévy measure is restricted to a finite-atom compound Poisson law, so
//! every `∫ f(z) ν(dz)` is an exact finite sum (see [`JumpSpec::integrate`]).

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Deserialize;

use crate::error::{invalid, Error, Result};

/// Tolerance on the atom probabilities summing to one.
const PROB_SUM_TOL: f64 = 1e-12;

/// Piecewise-linear table with flat extrapolation outside its knots.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawTable")]
pub struct PiecewiseLinear {
    knots: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTable {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawTable> for PiecewiseLinear {
    type Error = Error;

    fn try_from(raw: RawTable) -> Result<Self> {
        PiecewiseLinear::new(raw.knots, raw.values)
    }
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(invalid(format!(
                "table needs matching nonempty knots and values (got {} and {})",
                knots.len(),
                values.len()
            )));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("table knots must be strictly increasing"));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(invalid("table entries must be finite"));
        }
        Ok(Self { knots, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        let n = k.len();
        if x <= k[0] {
            return self.values[0];
        }
        if x >= k[n - 1] {
            return self.values[n - 1];
        }
        let i = k.partition_point(|&knot| knot <= x) - 1;
        let w = (x - k[i]) / (k[i + 1] - k[i]);
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }
}

/// Rectangular (t, y) table evaluated by bilinear interpolation, clamped at the edges.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct BilinearTable {
    t_knots: Vec<f64>,
    y_knots: Vec<f64>,
    /// Row-major: `values[i * y_knots.len() + j]` is the value at `(t_i, y_j)`.
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawGrid {
    t_knots: Vec<f64>,
    y_knots: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl TryFrom<RawGrid> for BilinearTable {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        if raw.values.len() != raw.t_knots.len() {
            return Err(invalid("grid table needs one row of values per t knot"));
        }
        let values = raw.values.concat();
        BilinearTable::new(raw.t_knots, raw.y_knots, values)
    }
}

fn bracket(knots: &[f64], x: f64) -> (usize, f64) {
    let n = knots.len();
    if n == 1 || x <= knots[0] {
        return (0, 0.0);
    }
    if x >= knots[n - 1] {
        return (n - 2, 1.0);
    }
    let i = knots.partition_point(|&k| k <= x) - 1;
    (i, (x - knots[i]) / (knots[i + 1] - knots[i]))
}

impl BilinearTable {
    pub fn new(t_knots: Vec<f64>, y_knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        for knots in [&t_knots, &y_knots] {
            if knots.is_empty() || knots.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid("grid knots must be nonempty and strictly increasing"));
            }
        }
        if values.len() != t_knots.len() * y_knots.len() {
            return Err(invalid("grid table size does not match its knots"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("grid table values must be finite"));
        }
        Ok(Self { t_knots, y_knots, values })
    }

    pub fn eval(&self, t: f64, y: f64) -> f64 {
        let ny = self.y_knots.len();
        let (i, wt) = bracket(&self.t_knots, t);
        let (j, wy) = bracket(&self.y_knots, y);
        let at = |i: usize, j: usize| {
            let i = i.min(self.t_knots.len() - 1);
            let j = j.min(ny - 1);
            self.values[i * ny + j]
        };
        let lo = at(i, j) + wy * (at(i, j + 1) - at(i, j));
        let hi = at(i + 1, j) + wy * (at(i + 1, j + 1) - at(i + 1, j));
        lo + wt * (hi - lo)
    }
}

/// Deterministic map `t -> value`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeCurve {
    Constant { value: f64 },
    Linear { intercept: f64, slope: f64 },
    Table(PiecewiseLinear),
}

impl TimeCurve {
    pub fn constant(value: f64) -> Self {
        TimeCurve::Constant { value }
    }

    pub fn linear(intercept: f64, slope: f64) -> Self {
        TimeCurve::Linear { intercept, slope }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeCurve::Constant { value } => *value,
            TimeCurve::Linear { intercept, slope } => intercept + slope * t,
            TimeCurve::Table(table) => table.eval(t),
        }
    }
}

/// Deterministic map `(t, y) -> value` for the drift and volatility coefficients.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorField {
    Constant { value: f64 },
    /// `intercept + slope * y`
    Affine { intercept: f64, slope: f64 },
    Grid(BilinearTable),
}

impl FactorField {
    pub fn constant(value: f64) -> Self {
        FactorField::Constant { value }
    }

    pub fn affine(intercept: f64, slope: f64) -> Self {
        FactorField::Affine { intercept, slope }
    }

    #[inline]
    pub fn eval(&self, t: f64, y: f64) -> f64 {
        match self {
            FactorField::Constant { value } => *value,
            FactorField::Affine { intercept, slope } => intercept + slope * y,
            FactorField::Grid(table) => table.eval(t, y),
        }
    }

    /// True when the map does not depend on the factor value.
    pub fn is_factor_free(&self) -> bool {
        match self {
            FactorField::Constant { .. } => true,
            FactorField::Affine { slope, .. } => *slope == 0.0,
            FactorField::Grid(table) => table
                .values
                .chunks(table.y_knots.len())
                .all(|row| row.iter().all(|v| *v == row[0])),
        }
    }
}

/// Jump dispersion `γ(t, y, z)` evaluated at a jump mark `z`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpField {
    /// `scale * z`
    Mark { scale: f64 },
    /// `scale * y * z`, the pure-jump OU specification.
    FactorScaled { scale: f64 },
}

impl JumpField {
    #[inline]
    pub fn eval(&self, _t: f64, y: f64, z: f64) -> f64 {
        match self {
            JumpField::Mark { scale } => scale * z,
            JumpField::FactorScaled { scale } => scale * y * z,
        }
    }

    pub fn is_factor_free(&self) -> bool {
        matches!(self, JumpField::Mark { .. })
    }
}

/// One point mass of the Lévy measure.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct JumpAtom {
    pub mark: f64,
    pub prob: f64,
}

/// Compound Poisson jump law: intensity `rate` and a finite mark distribution.
///
/// The induced Lévy measure is `ν(dz) = rate * Σ p_i δ_{z_i}(dz)`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawJumps")]
pub struct JumpSpec {
    rate: f64,
    atoms: Vec<JumpAtom>,
    cumulative: Vec<f64>,
}

#[derive(Deserialize)]
struct RawJumps {
    #[serde(default)]
    rate: f64,
    #[serde(default)]
    atoms: Vec<(f64, f64)>,
}

impl TryFrom<RawJumps> for JumpSpec {
    type Error = Error;

    fn try_from(raw: RawJumps) -> Result<Self> {
        let atoms = raw
            .atoms
            .into_iter()
            .map(|(mark, prob)| JumpAtom { mark, prob })
            .collect();
        JumpSpec::new(raw.rate, atoms)
    }
}

impl Default for JumpSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl JumpSpec {
    pub fn new(rate: f64, atoms: Vec<JumpAtom>) -> Result<Self> {
        if !rate.is_finite() || rate < 0.0 {
            return Err(invalid(format!("jump rate must be finite and nonnegative, got {rate}")));
        }
        if rate == 0.0 && !atoms.is_empty() {
            return Err(invalid("jump rate must be positive when atoms are given"));
        }
        if rate > 0.0 && atoms.is_empty() {
            return Err(invalid("a positive jump rate needs at least one atom"));
        }
        for (i, a) in atoms.iter().enumerate() {
            if !a.mark.is_finite() || !(0.0..=1.0).contains(&a.prob) {
                return Err(invalid(format!(
                    "jump atom {i} needs a finite mark and a probability in [0,1]"
                )));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if !atoms.is_empty() && (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(invalid(format!("jump atom probabilities sum to {total}, not 1")));
        }
        let cumulative = atoms
            .iter()
            .scan(0.0, |acc, a| {
                *acc += a.prob;
                Some(*acc)
            })
            .collect();
        Ok(Self { rate, atoms, cumulative })
    }

    /// The no-jump law.
    pub fn none() -> Self {
        Self { rate: 0.0, atoms: Vec::new(), cumulative: Vec::new() }
    }

    /// A single mark `z` arriving with intensity `rate`.
    pub fn single(rate: f64, mark: f64) -> Result<Self> {
        Self::new(rate, vec![JumpAtom { mark, prob: 1.0 }])
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn atoms(&self) -> &[JumpAtom] {
        &self.atoms
    }

    pub fn is_active(&self) -> bool {
        self.rate > 0.0
    }

    /// `∫ f(z) ν(dz)` as the exact atom sum.
    #[inline]
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.atoms.iter().map(|a| self.rate * a.prob * f(a.mark)).sum()
    }

    /// Compensator of the mark sum over an interval: `rate * dt * Σ p_i z_i`.
    pub fn compensator(&self, dt: f64) -> f64 {
        self.integrate(|z| z) * dt
    }

    /// Appends the atom indices of the jumps falling in an interval of length `dt`.
    pub fn sample_atoms<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R, out: &mut Vec<usize>) {
        if self.rate <= 0.0 || dt <= 0.0 {
            return;
        }
        let count = sample_poisson(self.rate * dt, rng);
        for _ in 0..count {
            let u: f64 = rng.random();
            let idx = self.cumulative.partition_point(|&c| c <= u);
            out.push(idx.min(self.atoms.len() - 1));
        }
    }

    /// Jump marks over an interval of length `dt`, with the compensator needed
    /// to form the compensated increment.
    pub fn sample_marks<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> Result<JumpSample> {
        if !(dt > 0.0) {
            return Err(invalid(format!("interval length must be positive, got {dt}")));
        }
        let mut idx = Vec::new();
        self.sample_atoms(dt, rng, &mut idx);
        Ok(JumpSample {
            marks: idx.into_iter().map(|i| self.atoms[i].mark).collect(),
            compensator: self.compensator(dt),
        })
    }
}

fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    // Inversion is exact and fast for the small per-step means used here.
    if mean < 30.0 {
        let u: f64 = rng.random();
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf && k < 1000 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        k
    } else {
        Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
    }
}

/// Jump marks drawn over one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpSample {
    pub marks: Vec<f64>,
    /// `rate * dt * Σ p_i z_i`
    pub compensator: f64,
}

impl JumpSample {
    /// `Σ marks - compensator`, the compensated increment of the mark sum.
    pub fn compensated_increment(&self) -> f64 {
        self.marks.iter().sum::<f64>() - self.compensator
    }
}

/// Bond rate and risky-asset coefficients.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CoefficientSet {
    pub r: TimeCurve,
    pub alpha: FactorField,
    pub beta: FactorField,
    pub sigma: FactorField,
    pub gamma: JumpField,
    #[serde(default)]
    pub jumps: JumpSpec,
}

/// Coefficient values at one `(t, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientValues {
    pub r: f64,
    pub alpha: f64,
    pub mu: f64,
    pub beta: f64,
    pub sigma: f64,
}

impl CoefficientSet {
    #[inline]
    pub fn r(&self, t: f64) -> f64 {
        self.r.eval(t)
    }

    /// Appreciation rate `alpha - r`.
    #[inline]
    pub fn mu(&self, t: f64, y: f64) -> f64 {
        self.alpha.eval(t, y) - self.r.eval(t)
    }

    #[inline]
    pub fn beta(&self, t: f64, y: f64) -> f64 {
        self.beta.eval(t, y)
    }

    #[inline]
    pub fn sigma(&self, t: f64, y: f64) -> f64 {
        self.sigma.eval(t, y)
    }

    #[inline]
    pub fn gamma(&self, t: f64, y: f64, z: f64) -> f64 {
        self.gamma.eval(t, y, z)
    }

    /// Total squared diffusion volatility `β² + σ²`.
    #[inline]
    pub fn diffusion_variance(&self, t: f64, y: f64) -> f64 {
        let b = self.beta(t, y);
        let s = self.sigma(t, y);
        b * b + s * s
    }

    /// Evaluates every coefficient at `(t, y)`, rejecting non-finite values and
    /// a nonpositive appreciation rate.
    pub fn evaluate(&self, t: f64, y: f64) -> Result<CoefficientValues> {
        let r = self.r(t);
        let alpha = self.alpha.eval(t, y);
        let beta = self.beta(t, y);
        let sigma = self.sigma(t, y);
        for (map, v) in [("r", r), ("alpha", alpha), ("beta", beta), ("sigma", sigma)] {
            if !v.is_finite() {
                return Err(Error::Model { map, reason: format!("non-finite value at t={t}, y={y}") });
            }
        }
        let mu = alpha - r;
        if mu <= 0.0 {
            return Err(Error::Model {
                map: "mu",
                reason: format!("mu must be positive (got {mu} at t={t}, y={y})"),
            });
        }
        Ok(CoefficientValues { r, alpha, mu, beta, sigma })
    }

    /// True when no coefficient depends on the factor.
    pub fn is_factor_free(&self) -> bool {
        self.alpha.is_factor_free()
            && self.beta.is_factor_free()
            && self.sigma.is_factor_free()
            && (self.gamma.is_factor_free() || !self.jumps.is_active())
    }
}

/// Drift `g(y)` of the external factor `dY = g(Y) dt + dW_1`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorDrift {
    Constant { value: f64 },
    /// `-b * y`
    MeanReverting { b: f64 },
    /// `intercept + slope * y`
    Affine { intercept: f64, slope: f64 },
}

impl FactorDrift {
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            FactorDrift::Constant { value } => *value,
            FactorDrift::MeanReverting { b } => -b * y,
            FactorDrift::Affine { intercept, slope } => intercept + slope * y,
        }
    }

    /// `g'(y)`
    #[inline]
    pub fn derivative(&self, _y: f64) -> f64 {
        match self {
            FactorDrift::Constant { .. } => 0.0,
            FactorDrift::MeanReverting { b } => -b,
            FactorDrift::Affine { slope, .. } => *slope,
        }
    }

    /// Mean-reversion speed when the drift is `-b y`.
    pub fn mean_reversion(&self) -> Option<f64> {
        match self {
            FactorDrift::MeanReverting { b } => Some(*b),
            _ => None,
        }
    }
}

/// External factor dynamics with the constants used to check its regularity.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct FactorDynamics {
    pub drift: FactorDrift,
    /// Lipschitz constant `C` of `g`.
    pub lipschitz_bound: f64,
    /// Declared bound `K` on `|g'|`.
    pub derivative_bound: f64,
    /// Closed interval of factor values used for grid work.
    pub domain: (f64, f64),
}

impl FactorDynamics {
    pub fn new(drift: FactorDrift, lipschitz_bound: f64, derivative_bound: f64, domain: (f64, f64)) -> Result<Self> {
        if !(lipschitz_bound > 0.0) || !(derivative_bound >= 0.0) {
            return Err(invalid("factor Lipschitz and derivative bounds must be positive"));
        }
        if !(domain.0 < domain.1) {
            return Err(invalid(format!("factor domain {domain:?} is empty")));
        }
        Ok(Self { drift, lipschitz_bound, derivative_bound, domain })
    }

    #[inline]
    pub fn g(&self, y: f64) -> f64 {
        self.drift.eval(y)
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.domain.0 && y <= self.domain.1
    }
}

/// Where an assumption check found its worst value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness {
    pub t: f64,
    pub y: f64,
    pub z: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionEntry {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub witness: Option<Witness>,
}

/// Outcome of [`check_assumptions`]; failures are entries, never errors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssumptionReport {
    pub entries: Vec<AssumptionEntry>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn entry(&self, name: &str) -> Option<&AssumptionEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssumptionEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }
}

/// Rectangular `(t, y)` sample grid for the assumption checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    pub times: Vec<f64>,
    pub factors: Vec<f64>,
}

impl SampleGrid {
    pub fn uniform(horizon: f64, domain: (f64, f64), nt: usize, ny: usize) -> Self {
        Self { times: linspace(0.0, horizon, nt), factors: linspace(domain.0, domain.1, ny) }
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn worst_by<F>(grid: &SampleGrid, mut f: F, maximize: bool) -> Witness
where
    F: FnMut(f64, f64) -> f64,
{
    let mut best = Witness { t: f64::NAN, y: f64::NAN, z: None, value: f64::NAN };
    for &t in &grid.times {
        for &y in &grid.factors {
            let v = f(t, y);
            let better = if maximize { v > best.value } else { v < best.value };
            if best.value.is_nan() || better || !v.is_finite() {
                best = Witness { t, y, z: None, value: v };
                if !v.is_finite() {
                    return best;
                }
            }
        }
    }
    best
}

/// Checks the market and factor assumptions on a sample grid.
///
/// Every assumption produces one entry with its worst sampled witness.
pub fn check_assumptions(cs: &CoefficientSet, fd: &FactorDynamics, grid: &SampleGrid) -> Result<AssumptionReport> {
    if grid.times.is_empty() || grid.factors.is_empty() {
        return Err(invalid("assumption sample grid is empty"));
    }
    let mut entries = Vec::new();

    let w = worst_by(grid, |t, _| cs.r(t), false);
    entries.push(AssumptionEntry {
        name: "r positive",
        passed: w.value > 0.0,
        detail: format!("min r = {}", w.value),
        witness: Some(w),
    });

    for (name, field) in [
        ("alpha bounded", &cs.alpha),
        ("beta bounded", &cs.beta),
        ("sigma bounded", &cs.sigma),
    ] {
        let w = worst_by(grid, |t, y| field.eval(t, y).abs(), true);
        entries.push(AssumptionEntry {
            name,
            passed: w.value.is_finite(),
            detail: format!("max |value| = {}", w.value),
            witness: Some(w),
        });
    }

    let mut gamma_min = Witness { t: f64::NAN, y: f64::NAN, z: None, value: f64::INFINITY };
    let mut gamma_max_abs = 0.0f64;
    for &t in &grid.times {
        for &y in &grid.factors {
            for atom in cs.jumps.atoms() {
                let g = cs.gamma(t, y, atom.mark);
                gamma_max_abs = gamma_max_abs.max(g.abs());
                if g < gamma_min.value || !g.is_finite() {
                    gamma_min = Witness { t, y, z: Some(atom.mark), value: g };
                }
            }
        }
    }
    let has_atoms = cs.jumps.is_active();
    entries.push(AssumptionEntry {
        name: "gamma bounded",
        passed: gamma_max_abs.is_finite(),
        detail: format!("max |gamma| = {gamma_max_abs}"),
        witness: has_atoms.then_some(gamma_min),
    });
    let gamma_ok = !has_atoms || gamma_min.value > -1.0;
    entries.push(AssumptionEntry {
        name: "gamma > -1",
        passed: gamma_ok,
        detail: if gamma_ok {
            if has_atoms { format!("min gamma = {}", gamma_min.value) } else { "no jump atoms".to_string() }
        } else {
            format!("gamma > -1 violated: gamma = {}", gamma_min.value)
        },
        witness: has_atoms.then_some(gamma_min),
    });

    let w = worst_by(grid, |t, y| cs.mu(t, y), false);
    entries.push(AssumptionEntry {
        name: "mu positive",
        passed: w.value > 0.0,
        detail: format!("min mu = {}", w.value),
        witness: Some(w),
    });

    // ∫_0^T (β² + σ² + ∫γ² ν(dz)) dt by the trapezoid rule in t, worst over y.
    let mut worst_integral = Witness { t: f64::NAN, y: f64::NAN, z: None, value: f64::NEG_INFINITY };
    for &y in &grid.factors {
        let density = |t: f64| cs.diffusion_variance(t, y) + cs.jumps.integrate(|z| cs.gamma(t, y, z).powi(2));
        let total: f64 = grid
            .times
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (density(w[0]) + density(w[1])))
            .sum();
        if total > worst_integral.value || !total.is_finite() {
            worst_integral = Witness { t: *grid.times.last().unwrap(), y, z: None, value: total };
        }
    }
    entries.push(AssumptionEntry {
        name: "integrability",
        passed: worst_integral.value.is_finite(),
        detail: format!("max over y of the time integral = {}", worst_integral.value),
        witness: Some(worst_integral),
    });

    let mut slope = Witness { t: f64::NAN, y: f64::NAN, z: None, value: 0.0 };
    for pair in grid.factors.windows(2) {
        let s = ((fd.g(pair[1]) - fd.g(pair[0])) / (pair[1] - pair[0])).abs();
        if s > slope.value || !s.is_finite() {
            slope = Witness { t: f64::NAN, y: pair[0], z: None, value: s };
        }
    }
    entries.push(AssumptionEntry {
        name: "g Lipschitz",
        passed: slope.value <= fd.lipschitz_bound * (1.0 + 1e-6),
        detail: format!("empirical Lipschitz ratio {} against C = {}", slope.value, fd.lipschitz_bound),
        witness: Some(slope),
    });

    let w = grid
        .factors
        .iter()
        .map(|&y| Witness { t: f64::NAN, y, z: None, value: fd.drift.derivative(y).abs() })
        .fold(Witness { t: f64::NAN, y: f64::NAN, z: None, value: 0.0 }, |a, b| {
            if b.value > a.value {
                b
            } else {
                a
            }
        });
    entries.push(AssumptionEntry {
        name: "g' bounded",
        passed: w.value <= fd.derivative_bound * (1.0 + 1e-6),
        detail: format!("max |g'| = {} against K = {}", w.value, fd.derivative_bound),
        witness: Some(w),
    });

    Ok(AssumptionReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat(r: f64, alpha: f64, beta: f64, sigma: f64) -> CoefficientSet {
        CoefficientSet {
            r: TimeCurve::constant(r),
            alpha: FactorField::constant(alpha),
            beta: FactorField::constant(beta),
            sigma: FactorField::constant(sigma),
            gamma: JumpField::Mark { scale: 1.0 },
            jumps: JumpSpec::none(),
        }
    }

    fn ou(b: f64) -> FactorDynamics {
        FactorDynamics::new(FactorDrift::MeanReverting { b }, b, b, (-3.0, 3.0)).unwrap()
    }

    #[test]
    fn mu_is_alpha_minus_r() {
        let v = flat(0.03, 0.08, 0.2, 0.1).evaluate(0.5, 0.0).unwrap();
        assert!((v.mu - 0.05).abs() < 1e-15);
    }

    #[test]
    fn zero_excess_return_is_a_model_error() {
        let err = flat(0.05, 0.05, 0.2, 0.1).evaluate(0.0, 0.0).unwrap_err();
        assert!(err.to_string().contains("mu must be positive"), "{err}");
    }

    #[test]
    fn affine_alpha_evaluates_by_hand() {
        let mut cs = flat(0.02, 0.0, 0.2, 0.1);
        cs.alpha = FactorField::affine(0.04, 0.01);
        let v = cs.evaluate(0.0, 2.0).unwrap();
        assert!((v.mu - 0.04).abs() < 1e-15);
    }

    #[test]
    fn non_finite_coefficient_names_its_map() {
        let cs = flat(0.02, 0.05, f64::NAN, 0.1);
        match cs.evaluate(0.0, 0.0) {
            Err(Error::Model { map, .. }) => assert_eq!(map, "beta"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn evaluation_is_pure() {
        let mut cs = flat(0.02, 0.0, 0.2, 0.1);
        cs.alpha = FactorField::affine(0.04, 0.01);
        assert_eq!(cs.evaluate(0.3, 1.1).unwrap(), cs.evaluate(0.3, 1.1).unwrap());
    }

    #[test]
    fn linear_drift_has_exact_lipschitz_ratio() {
        let grid = SampleGrid::uniform(1.0, (-3.0, 3.0), 101, 101);
        let report = check_assumptions(&flat(0.03, 0.08, 0.2, 0.1), &ou(0.5), &grid).unwrap();
        let e = report.entry("g Lipschitz").unwrap();
        assert!(e.passed);
        assert!((e.witness.unwrap().value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gamma_below_minus_one_fails() {
        let mut cs = flat(0.03, 0.08, 0.2, 0.1);
        cs.jumps = JumpSpec::single(1.0, -1.2).unwrap();
        let grid = SampleGrid::uniform(1.0, (-3.0, 3.0), 11, 11);
        let report = check_assumptions(&cs, &ou(0.5), &grid).unwrap();
        let e = report.entry("gamma > -1").unwrap();
        assert!(!e.passed);
        assert!(e.detail.contains("gamma > -1 violated"));
        assert!(!report.all_passed());
    }

    #[test]
    fn integrability_of_constant_volatilities() {
        let grid = SampleGrid::uniform(1.0, (-3.0, 3.0), 101, 101);
        let report = check_assumptions(&flat(0.03, 0.08, 0.3, 0.3), &ou(0.5), &grid).unwrap();
        let v = report.entry("integrability").unwrap().witness.unwrap().value;
        assert!((v - 0.18).abs() < 1e-12, "{v}");
    }

    #[test]
    fn lipschitz_violation_is_reported() {
        let fd = FactorDynamics::new(FactorDrift::MeanReverting { b: 2.0 }, 1.0, 3.0, (-1.0, 1.0)).unwrap();
        let grid = SampleGrid::uniform(1.0, fd.domain, 5, 21);
        let report = check_assumptions(&flat(0.03, 0.08, 0.3, 0.3), &fd, &grid).unwrap();
        assert!(!report.entry("g Lipschitz").unwrap().passed);
        assert!(report.entry("g' bounded").unwrap().passed);
    }

    #[test]
    fn empty_grid_is_rejected() {
        let grid = SampleGrid { times: vec![], factors: vec![0.0] };
        assert!(check_assumptions(&flat(0.03, 0.08, 0.3, 0.3), &ou(0.5), &grid).is_err());
    }

    #[test]
    fn jump_spec_validation() {
        assert!(JumpSpec::new(1.0, vec![JumpAtom { mark: 0.1, prob: 0.7 }]).is_err());
        assert!(JumpSpec::new(0.0, vec![JumpAtom { mark: 0.1, prob: 1.0 }]).is_err());
        assert!(JumpSpec::new(-1.0, vec![]).is_err());
        let js = JumpSpec::new(
            2.0,
            vec![JumpAtom { mark: 0.1, prob: 0.5 }, JumpAtom { mark: -0.05, prob: 0.5 }],
        )
        .unwrap();
        assert!((js.integrate(|z| z) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn zero_rate_never_jumps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let js = JumpSpec::none();
        for _ in 0..100 {
            assert!(js.sample_marks(10.0, &mut rng).unwrap().marks.is_empty());
        }
        assert!(js.sample_marks(0.0, &mut rng).is_err());
    }

    #[test]
    fn poisson_count_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let js = JumpSpec::single(2.0, 0.1).unwrap();
        let n = 100_000;
        let counts: Vec<f64> = (0..n).map(|_| js.sample_marks(1.0, &mut rng).unwrap().marks.len() as f64).collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn mark_frequencies_match_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let js = JumpSpec::new(
            5.0,
            vec![JumpAtom { mark: 0.1, prob: 0.5 }, JumpAtom { mark: -0.05, prob: 0.5 }],
        )
        .unwrap();
        let (mut up, mut total) = (0usize, 0usize);
        for _ in 0..20_000 {
            for m in js.sample_marks(1.0, &mut rng).unwrap().marks {
                total += 1;
                if m > 0.0 {
                    up += 1;
                }
            }
        }
        let p = up as f64 / total as f64;
        let se = (0.25 / total as f64).sqrt();
        assert!((p - 0.5).abs() < 3.0 * se, "freq {p} se {se}");
    }

    #[test]
    fn compensated_increment_has_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let js = JumpSpec::new(
            3.0,
            vec![JumpAtom { mark: 0.2, prob: 0.3 }, JumpAtom { mark: -0.1, prob: 0.7 }],
        )
        .unwrap();
        let n = 50_000;
        let xs: Vec<f64> = (0..n).map(|_| js.sample_marks(0.5, &mut rng).unwrap().compensated_increment()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn tables_interpolate_and_clamp() {
        let t = PiecewiseLinear::new(vec![0.0, 1.0, 2.0], vec![1.0, 3.0, 2.0]).unwrap();
        assert_eq!(t.eval(-1.0), 1.0);
        assert_eq!(t.eval(0.5), 2.0);
        assert_eq!(t.eval(1.5), 2.5);
        assert_eq!(t.eval(9.0), 2.0);
        assert!(PiecewiseLinear::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());

        let g = BilinearTable::new(vec![0.0, 1.0], vec![0.0, 2.0], vec![0.0, 2.0, 1.0, 3.0]).unwrap();
        assert!((g.eval(0.5, 1.0) - 1.5).abs() < 1e-15);
        assert!((g.eval(5.0, -5.0) - 1.0).abs() < 1e-15);
    }
}
