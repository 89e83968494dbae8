//! Threshold analysis for a heterogeneous diffusive SIR model.
//!
//! Cell-centred finite volumes on intervals and rectangles, a principal
//! eigenvalue solver for `−∇·(A_I∇) − (α S₀ − μ)`, the critical diffusivity,
//! a positivity-preserving time stepper for the PDE and the averaged ODE.

pub mod analysis;
pub mod cli;
pub mod coefficient;
pub mod elliptic;
pub mod error;
pub mod field;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod ode;
pub mod pde;
pub mod scenario;
pub mod spectral;

pub use error::{Error, Result};
