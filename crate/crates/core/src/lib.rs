//! Pinning approximations of Brownian motion on closed embedded manifolds.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod numerics;
pub mod pinning;
pub mod semigroup;
pub mod wick;

pub use error::{Error, Result};
