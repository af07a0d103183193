//! Littlewood–Paley and Besov machinery on Fourier patches, plus the
//! experiment driver that measures norm inflation of the second Picard
//! iterate for the barotropic and heat-conductive compressible
//! Navier–Stokes systems.
//!
//! Fields are finite sums of compactly supported Fourier-space blocks
//! ([`patch_field::FourierPatch`]) placed at arbitrary frequencies, which
//! keeps data living at frequency `2^N` cheap to represent and lets the
//! witness integrals be evaluated exactly up to quadrature.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod besov;
pub mod cli;
pub mod error;
pub mod inflation_barotropic;
pub mod inflation_heat;
pub mod lp_frame;
pub mod patch_field;
pub mod quadrature;
pub mod semigroup;
pub mod vec3;

pub use error::{Error, Result};
pub use rustfft::num_complex::Complex64;
