//! Degenerate hypoelliptic operators `Tr(Q D^2) + <Bx, D> + <F, D>`.
//!
//! Kalman-type hypoellipticity analysis, adapted bases, the derivative-block
//! calculus with its anisotropic exponents, and numerical checks of semigroup
//! estimates against an exact Gaussian kernel and a finite-difference solver.

pub mod basis;
pub mod cli;
pub mod config;
pub mod decay;
pub mod error;
pub mod exponents;
pub mod grid;
pub mod kalman;
pub mod linalg;
pub mod multiindex;
pub mod norms;
pub mod ode;
pub mod operator;
pub mod ou;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod suites;

pub use error::{Error, Result};
