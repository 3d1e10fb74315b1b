//! Community detection in multilayer networks under a latent Gaussian block
//! model with inter-layer and intra-layer dependence, estimated by a
//! constrained pairwise likelihood with alternating projected-gradient and
//! greedy-sweep updates.
//!
//! Modules:
//! - [`probkit`]: scalar normal/bivariate-normal kernels
//! - [`model`]: core types, the feasible parameter space, projections
//! - [`netgen`]: synthetic generation and the simulation presets
//! - [`likelihood`]: pairwise likelihood, sufficient statistics, gradients
//! - [`fit`]: the alternating estimator
//! - [`support`]: unknown-support estimation (pair fits + thresholding)
//! - [`metrics`]: evaluation metrics
//! - [`io`]: file formats
//! - [`harness`]: replicate/grid benchmark machinery

pub mod assignment;
pub mod error;
pub mod fit;
pub mod harness;
pub mod io;
pub mod likelihood;
mod linalg;
pub mod metrics;
pub mod model;
pub mod netgen;
pub mod probkit;
pub mod support;

pub use error::{Error, Result, Violation};
pub use fit::{fit, FitConfig, FitResult};
pub use likelihood::{BlockCells, BlockCounts, CellProbs};
pub use metrics::EvalReport;
pub use model::{
    empirical_density, validate_network, BlockParams, Membership, MultilayerNetwork,
    ParameterSpace, Scenario, SupportSet,
};
pub use netgen::{build_edge_correlation, preset, sample_network, EdgeCorrelation, GenConfig, GroundTruth};
pub use probkit::{Corr, Prob};
pub use support::{fit_unknown_support, SupportConfig};
