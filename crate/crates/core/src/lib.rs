// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

// Link the system BLAS/LAPACK used by the semidefinite backend.
extern crate openblas_src;

pub mod augment;
pub mod brl;
pub mod cli;
pub mod demo;
pub mod discovery;
pub mod error;
pub mod fir;
pub mod fit;
pub mod io;
pub mod lti;
pub mod sdp;
pub mod synthesis;

pub use error::{Error, Result};
