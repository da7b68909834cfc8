//! Functional metamodeling of simulators with 2D spatial-map outputs, and
//! per-pixel variance-based sensitivity analysis on top of the metamodel.
//!
//! The pipeline implemented by this crate:
//!
//! 1. [`designs`] — space-filling experimental designs (Latin hypercube,
//!    maximin-improved) over the input hypercube, with per-input marginal
//!    distributions.
//! 2. [`field`] — spatial maps ([`field::GridField`]) and ensembles of maps
//!    produced by running a simulator over a design.
//! 3. [`wavelet`] — orthonormal 2D discrete wavelet transform (Haar and
//!    Daubechies families, periodic boundary) and variance-based ranking of
//!    the coefficients over an ensemble.
//! 4. [`gp`] — scalar Gaussian-process regression with a linear trend and
//!    anisotropic generalized-exponential correlation, fitted by maximum
//!    likelihood, plus the two cheaper per-coefficient models (empirical
//!    mean, AIC-selected linear regression).
//! 5. [`funcmeta`] — the functional metamodel assembled from the mean field,
//!    the coefficient ranking and per-coefficient models; map prediction and
//!    validation (MSE, Q2, k-fold cross-validation, convergence studies).
//! 6. [`sobol`] — pick-freeze (Saltelli) and double-loop Monte Carlo
//!    estimation of first-order and total Sobol' index maps, with bootstrap
//!    uncertainty and map-comparison metrics.
//! 7. [`campbell2d`] — the Campbell2D analytical test function and its exact
//!    first-order sensitivity maps, used as the ground-truth fixture.

pub mod campbell2d;
pub mod designs;
pub mod error;
pub mod field;
pub mod funcmeta;
pub mod gp;
pub mod seeds;
pub mod sobol;
pub mod wavelet;

pub use error::{Error, Result};
