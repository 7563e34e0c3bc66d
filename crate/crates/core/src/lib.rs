//! Preference modeling with ties.
//!
//! This crate holds the algorithmic half of `tiepref`: the Bradley-Terry (BT)
//! and Bradley-Terry-with-ties (BTT, Rao-Kupper) probabilities, the closed-form
//! preference-strength bias that appears when a BT model is fitted to data
//! whose ties were broken at random, reward parameterizations with analytic
//! gradients, the three training objectives, an RMSprop loop, and the
//! simulation harness that measures the bias gap between BT and BTT fits.
//!
//! Everything here is `no_std` (with `alloc`) and deterministic given a seed.
//! File formats and the command-line driver live in the `tiepref` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub mod rng;

pub mod dataset;
pub mod experiments;
pub mod prob;
pub mod reward;
pub mod train;

pub use error::{Error, Result};
pub use prob::TieModelParams;
