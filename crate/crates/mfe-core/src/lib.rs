//! Impaired-aircraft maneuvering-flight-envelope (MFE) analysis toolkit.
//!
//! The crate generates databases of 2D maneuvering-flight-envelope
//! characteristics from a trim-point search over a pluggable six-degree-of-
//! freedom dynamics model, fits linear-polynomial and nonlinear tanh/MLP
//! regression models that predict envelope contraction (`n_trim`) and
//! displacement (centroid), and quantifies input influence with
//! variance-based global sensitivity analysis.
//!
//! Module map:
//! - [`linalg`] — dense matrix primitives: Householder QR, least squares,
//!   eigenvalues, numerical rank, finite-difference Jacobians.
//! - [`data`] — the `[h, gamma, LL, UL]` input vector, envelope records,
//!   scaling, and the database CSV schema.
//! - [`poly`] — constrained-degree multivariate polynomial regression.
//! - [`nlsq`] — Levenberg-Marquardt and 2D-subspace trust-region solvers
//!   plus the tanh basis-expansion model family.
//! - [`mlp`] — two-layer tanh/linear network trained by LM with
//!   backpropagated Jacobians.
//! - [`envelope`] — trim-point search, stability/controllability
//!   classification, grid sweeps, and database construction.
//! - [`gsa`] — Latin-hypercube sampling, Sobol index estimators, and
//!   bootstrap confidence intervals.
//! - [`pipeline`] — experiment orchestration shared by the CLI.

pub mod data;
pub mod envelope;
pub mod error;
pub mod gsa;
pub mod linalg;
pub mod mlp;
pub mod nlsq;
pub mod pipeline;
pub mod poly;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::Matrix;
