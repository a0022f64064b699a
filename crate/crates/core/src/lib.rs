//! Optimal investment, consumption and life-insurance strategies for a wage
//! earner facing a jump-diffusion market driven by a stochastic factor.
//!
//! The crate solves for the optimal feedback rule and then checks it
//! numerically:
//!
//! * [`market`] and [`actuarial`] hold the model primitives;
//! * [`strategy`] has the utilities, the Hamiltonian and the optimal controls;
//! * [`hsolver`] computes the exponent `h(t, y)` of the adjoint ansatz by a
//!   Feynman–Kac fixed point;
//! * [`mc`] simulates wealth and runs the maximum-principle checks;
//! * [`oracle_ou`] has closed forms for the pure-jump Ornstein–Uhlenbeck model;
//! * [`cli`] runs TOML scenarios and writes CSV artifacts.

pub mod actuarial;
pub mod cli;
pub mod error;
pub mod hsolver;
pub mod market;
pub mod mc;
pub mod oracle_ou;
pub mod strategy;

pub use actuarial::{ActuarialModel, InsuranceMarket};
pub use error::{Error, Result};
pub use hsolver::{HGrid, HSolverConfig, PhiConfig};
pub use market::{CoefficientSet, FactorDynamics, JumpSpec};
pub use strategy::{Preferences, StrategyRule};

/// A complete problem instance.
#[derive(Debug, Clone)]
pub struct Model {
    pub market: CoefficientSet,
    pub factor: FactorDynamics,
    pub actuarial: ActuarialModel,
    pub insurers: InsuranceMarket,
    pub prefs: Preferences,
}

impl Model {
    pub fn horizon(&self) -> f64 {
        self.actuarial.horizon()
    }
}
