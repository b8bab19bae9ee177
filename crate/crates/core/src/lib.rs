//! Intrinsic-state representations of dynamical behavior learned from trajectory data,
//! and stabilizing controller synthesis on top of them.
//!
//! * [`behavior_data`]: windows, Hankel matrices, normalization, dataset files.
//! * [`lti_behavior`]: exact SVD-based state map / parameterization for LTI data.
//! * [`synthesis`]: semidefinite feasibility synthesis of a decaying controlled behavior.
//! * [`autodiff`]: dense networks with reverse-mode gradients and Adam.
//! * [`calib`]: joint learning of state map, parameterization, controlled transition and
//!   Lyapunov function for nonlinear systems.
//! * [`plant`]: the drone benchmark, data generation, closed-loop harness, DeePC baseline.

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod behavior_data;
pub mod calib;
pub mod error;
pub mod linalg;
pub mod lti_behavior;
pub mod plant;
pub mod synthesis;

pub use error::{Error, Result};
