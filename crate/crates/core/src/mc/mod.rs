//! Path simulation of the factor and wealth, performance estimation, and
//! numerical checks of the maximum principles.
//!
//! Every path draws its noise from its own ChaCha stream, keyed by the master
//! seed and the path index. Strategies evaluated with the same seed therefore
//! see identical Brownian increments and jump times, which is what makes the
//! strategy comparisons decisive at moderate path counts.

mod noise;
mod paths;
mod performance;
mod report;
mod verify;

pub use noise::PathNoise;
pub use paths::{simulate_factor, simulate_wealth, wealth_closed_form, PathBundle};
pub use performance::{
    compare_strategies, estimate_performance, perturbation_family, perturbation_suite, Comparison, Components,
    PerformanceEstimate, PerturbationSpec,
};
pub use report::{CheckLine, Report, Status};
pub use verify::{
    adjoint_candidate, adjoint_residual_test, factor_adjoint_check, necessary_condition_test,
    sufficient_condition_report, value_consistency, variation_processes, AdjointTestReport, MartingalePair,
    NecessaryReport, PathMean, SufficientOptions, ZetaResult,
};

pub(crate) use paths::{factor_path, walk};

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{invalid, Result};
use crate::market::linspace;

/// Strictly increasing time partition of `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(horizon > 0.0) {
            return Err(invalid(format!("time grid needs steps > 0 and T > 0, got {steps} and {horizon}")));
        }
        Ok(Self { times: linspace(0.0, horizon, steps + 1) })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("time grid must have at least two strictly increasing points"));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    #[inline]
    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    /// Index of the grid point closest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&s| s < t);
        if i == 0 {
            0
        } else if i >= self.times.len() {
            self.times.len() - 1
        } else if (self.times[i] - t).abs() < (t - self.times[i - 1]).abs() {
            i
        } else {
            i - 1
        }
    }
}

/// Factor discretisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorScheme {
    /// Euler–Maruyama on `dY = g(Y)dt + dW1`.
    #[default]
    Euler,
    /// Exact Gaussian transition when `g(y) = -by`, driven by the same
    /// standardised increments as the Euler scheme.
    ExactOu,
    /// Euler with the Brownian increments removed.
    ZeroNoise,
}

fn default_steps() -> usize {
    2000
}
fn default_paths() -> usize {
    10_000
}
fn default_epsilon() -> f64 {
    0.01
}

/// Path-simulation settings.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    /// Step of the finite-difference derivative in the perturbation size.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub scheme: FactorScheme,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { steps: default_steps(), paths: default_paths(), seed: 0, epsilon: default_epsilon(), scheme: FactorScheme::Euler }
    }
}

impl SimulationConfig {
    pub fn grid(&self, horizon: f64) -> Result<TimeGrid> {
        TimeGrid::uniform(horizon, self.steps)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.paths < 2 {
            return Err(invalid(format!("need at least two paths, got {}", self.paths)));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("finite-difference step must be positive"));
        }
        Ok(())
    }
}

/// Runs `f` on every path index in parallel, keeping path order.
pub(crate) fn for_each_path<T, F>(paths: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..paths as u64).into_par_iter().map(f).collect()
}

/// Sample mean and standard error.
pub(crate) fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
