//! Softmax cross-entropy with a gradient decay factor `beta`.
//!
//! * [`loss`]: the loss, its logit gradient and the closed-form analysis of
//!   the gradient magnitude, curvature and local Lipschitz bound.
//! * [`oracle`]: finite-difference and grid-scan verifiers for all of it.
//! * [`schedule`]: linear warm-up of `beta`.
//! * [`trainer`]: a small MLP trained with momentum SGD and manual
//!   backpropagation, recording per-sample confidence.
//! * [`datasets`]: Gaussian blobs and an MNIST IDX loader.
//! * [`calibration`]: reliability bins, ECE/MCE, confidence tables and
//!   temperature scaling.
//! * [`cli`]: the `gdsoftmax` command-line front end.

// `!(x < y)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cli;
pub mod datasets;
pub mod loss;
pub mod oracle;
pub mod schedule;
pub mod trainer;

pub use loss::{beta_ce_eval, beta_ce_loss, LabeledLogits, LossEval, LossParams, Stability};
pub use schedule::{Granularity, WarmupSchedule};
