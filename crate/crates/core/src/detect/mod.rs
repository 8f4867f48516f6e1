//! Model-based detectors and the likelihoods they are built on.

pub mod likelihood;
pub mod optimal;
pub mod oracle;

pub use likelihood::{loglik_interval, CellLikelihood, PoissonMixtureComponent, TruncationMode, TruncationPolicy};
pub use optimal::{cloud_detect, edge_detect, CloudDetector, DetectionOutcome, DetectorKind, EdgeDetector};
pub use oracle::{brute_force_loglik_oracle, oracle_n_max};
