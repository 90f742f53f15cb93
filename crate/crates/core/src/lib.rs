//! Direct and inverse spectral maps for matrix Dirac-type systems
//! `u' = i(zJ + JV)u` through the 𝒜-function.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aeq;
pub mod afunction;
pub mod bm;
pub mod cli;
pub mod dirac;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod krein;
pub mod numerics;
pub mod par;
pub mod verify;
pub mod weyl;

pub use error::{Error, Result};
pub use numerics::{BlockMatrix, Grid};
