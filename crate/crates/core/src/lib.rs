//! Covariance estimation and PCA evaluation for the `n < p` regime.
//!
//! The crate provides the pairwise-differences covariance estimator (PDC)
//! and four regularized variants, alongside the maximum-likelihood and
//! Ledoit-Wolf estimators, plus the tooling needed to compare them:
//!
//! - [`model`]: data/covariance/eigensystem types and matrix diagnostics.
//! - [`pairdiff`]: pairwise-difference enumeration, scalers and the streaming
//!   accumulation of the symmetrized product matrix.
//! - [`estimators`]: the seven covariance estimators.
//! - [`metrics`]: explained variance, cosine similarity error, overdispersion.
//! - [`stats`]: Levene's test and the F distribution.
//! - [`simlab`]: population models, multivariate normal sampling and the
//!   seeded Monte Carlo sweep.
//! - [`ingest`]: expression-table loading and row subsampling.
//! - [`report`]: configuration files, table output and the CLI commands.

pub mod error;
pub mod estimators;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod pairdiff;
pub mod report;
pub mod simlab;
pub mod stats;

pub use error::{Error, Result};
pub use estimators::{estimate, EstimatorSpec, PdcNormalization};
pub use model::{
    condition_number, frobenius_distance, numerical_rank, sym_eigen, CovarianceEstimate,
    DataMatrix, EigenSystem, Estimator, SymmetricMatrix,
};
