//! Causal structure identification in linear networked dynamical systems
//! from partial observations under colored noise.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod classify;
pub mod error;
pub mod estimators;
pub mod features;
pub mod graphgen;
pub mod linalg;
pub mod moments;
pub mod noise;
pub mod rng;
pub mod separability;
pub mod simulate;
pub mod theory;

pub use error::{Error, Result};
