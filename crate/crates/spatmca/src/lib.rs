//! Regularized maximum covariance analysis for pairs of spatial fields.
//!
//! Given joint observations of two fields at fixed site sets, `spatmca`
//! estimates coupled spatial patterns that are smooth, localized (exactly
//! sparse), and mutually orthogonal, together with the squared-covariance
//! strength of each coupled pair and the resulting cross-covariance
//! function. Estimation solves a penalized matrix problem with an
//! alternating-direction method of multipliers; smoothness and sparsity
//! levels are picked by M-fold cross-validation, and the number of coupled
//! pairs by a related rank rule.
//!
//! Start with [`model::fit`] for the high-level path, or assemble the
//! pieces directly: [`spline`] for the roughness penalty and off-site
//! interpolation, [`cov`] for cross-covariance matrices, [`admm`] for the
//! core solver, [`cv`] for tuning, and [`sim`] for synthetic benchmarks.

pub mod admm;
pub mod cli;
pub mod cov;
pub mod cv;
pub mod error;
pub mod io;
pub mod model;
pub mod plot;
pub mod sim;
pub mod spline;

pub use error::{Error, Result};
