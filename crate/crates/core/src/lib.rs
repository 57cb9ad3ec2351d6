//! Adjoint-based optimal control of time-dependent advection-diffusion-reaction
//! problems on uniform structured finite-volume grids.
//!
//! The crate covers a manufactured advection-diffusion benchmark, two
//! light-triggered drug release models (distributed and boundary-concentrated
//! light), and passive drug transport from a catheter in a prescribed flow.
//! Each problem provides a state solver, an adjoint solver built on time
//! reflection, a gradient from the optimality condition, and plugs into a
//! common steepest-descent driver.

pub mod adjoint;
pub mod cases;
pub mod discretize;
pub mod error;
pub mod forward;
pub mod io;
pub mod mesh;
pub mod optimize;

pub use error::{OcpError, Result};
