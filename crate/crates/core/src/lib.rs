//! Simulation and reconstruction pipeline for a multicore multimode fiber
//! snapshot spectral imager.
//!
//! The crate covers the whole chain: a modal-interference speckle simulator
//! ([`optics`]), DBSCAN core detection ([`clustering`]), spectral
//! transmission matrix calibration ([`stm`]), nonnegative ℓ₁-residual
//! reconstruction ([`solver`]) and the sampling, sparsity, noise and
//! letter-scene studies built on top of them ([`experiments`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod error;
pub mod experiments;
pub mod frame;
pub mod optics;
pub mod rng;
pub mod solver;
pub mod stm;

pub use error::{Error, Result};
pub use frame::SpeckleFrame;
