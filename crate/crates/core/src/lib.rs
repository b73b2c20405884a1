//! Numerical core for complex geometrical optics experiments on Schrödinger
//! operators with singular potentials.

pub mod error;
pub mod cgo;
pub mod faddeev;
pub mod fft;
pub mod forward;
pub mod calderon;
pub mod grid;
pub mod krylov;
pub mod potentials;
pub mod wall;
pub mod quadrature;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
