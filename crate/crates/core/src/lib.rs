//! Simulation, detection and error-exponent analysis for QoI-based data
//! collection over type-based multiple access (TBMA) in a two-cell network
//! with finite-capacity fronthaul.

pub mod airlink;
pub mod detect;
pub mod error;
pub mod experiments;
pub mod exponents;
pub mod format;
pub mod fronthaul;
pub mod learn;
pub mod model;
pub mod montecarlo;
pub mod rng;

pub use error::{Error, Result};
pub use model::{Cell, Hypothesis, JointHypothesis, Model, QoiPair, ReuseMode, SystemConfig};
