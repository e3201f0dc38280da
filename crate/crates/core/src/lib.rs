//! Calibration toolkit for a sentiment-driven stochastic volatility model.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data_io;
pub mod error;
pub mod inference;
pub mod kde;
pub mod model;
pub mod moments;
pub mod npsmle;
pub mod optim;
pub mod sentiment;
pub mod shocks;
pub mod simulate;

pub use error::{Result, SsvError};
pub use model::{OuParams, ProcessState, SsvParams, TimeGrid};
