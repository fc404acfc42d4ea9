//! Symmetric non-local Dirichlet forms on finite metric measure spaces.
//!
//! The crate builds spaces, scale functions and jump kernels, computes heat
//! kernels and exit-time objects, and evaluates the conditions that enter the
//! stability theory of parabolic Harnack inequalities for jump processes.
//! It is `no_std` and only needs `alloc`.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod form;
pub mod harnack;
pub mod heat;
pub mod kernel;
pub mod linalg;
pub mod montecarlo;
pub mod report;
pub mod sample;
pub mod scale;
pub mod space;

pub use error::{Error, Result};
pub use kernel::{JumpKernel, KernelSpec};
pub use report::{ConditionReport, Verdict};
pub use scale::{ScaleFunction, ScaleSpec};
pub use space::{MetricMeasureSpace, SpaceSpec};
