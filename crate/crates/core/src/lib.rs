//! Fixed-boundary ideal-MHD equilibria for stellarators and tokamaks, with
//! the radial profile of every Fourier mode of `R`, `Z` and the stream
//! function `lambda` represented by a small neural network.
//!
//! The force residual `J x B - grad p` is evaluated pointwise on a
//! collocation grid with exact radial and angular derivatives, and the
//! network parameters are fitted by minimizing its mean norm.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod io;
pub mod mhdkernel;
pub mod netfield;
pub mod polygon;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
