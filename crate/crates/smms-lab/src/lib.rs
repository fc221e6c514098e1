//! Numerical toolkit for weighted Riemannian manifolds and smooth metric
//! measure spaces: curvature of chart metrics via second-order jets, ADM-type
//! mass quadrature on coordinate spheres, Clifford algebra representations and
//! warped-product spinor spaces, pointwise spin connections and Dirac
//! operators, and spectral Dirac/Laplace computations on flat and conformally
//! flat tori.

pub mod catalog;
pub mod clifford;
pub mod curvature;
pub mod fields;
pub mod jet;
pub mod mass;
pub mod report;
pub mod spinconn;
pub mod torus;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmmsError {
    #[error("metric is not positive definite at the queried point")]
    DegenerateMetric,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("iterative solver failed: {0}")]
    SolverFailure(String),
    #[error("unknown catalog entry: {0}")]
    UnknownCatalogEntry(String),
}

pub type Result<T> = std::result::Result<T, SmmsError>;
