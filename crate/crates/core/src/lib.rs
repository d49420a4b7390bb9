//! Estimating the global parameters of an inner-product latent space model
//! from one individual's ego-centered partial view of a network.
//!
//! The pipeline is: build a [`view::PartialView`] for a center node,
//! produce starting values with [`init::initialize`], run projected gradient
//! descent with [`solver::fit`], then score the estimate with
//! [`metrics`] or feed the latent positions to [`analysis`].

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod init;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod simgen;
pub mod solver;
pub mod stats;
pub mod view;

pub use error::{Error, Result};
pub use model::{AdjacencyMatrix, Bounds, LatentModel, Likelihood, Params};
pub use rng::RngSpec;
pub use simgen::{GroundTruth, Scenario};
pub use solver::{FitResult, ProjectionMode, SolverConfig, StepSizes};
pub use view::PartialView;
