//! Reinforcement-learning architecture search for lightweight single-image
//! super-resolution networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`arch_space`]: the searched genome and its decimal digest.
//! * [`param_count`]: closed-form parameter counts and the complexity penalty.
//! * [`numeric`]: a small reverse-mode autodiff engine with Adam.
//! * [`child_net`]: the weight-shared super-resolution child network.
//! * [`controller`]: the LSTM policy that emits genomes.
//! * [`trainer`]: alternating child/controller optimisation and selection.
//! * [`sr_data`]: synthetic and file-backed image pairs, bicubic resampling, PSNR.
//! * [`cli`]: the batch command-line surface.

pub mod arch_space;
pub mod child_net;
pub mod cli;
pub mod controller;
pub mod error;
pub mod numeric;
pub mod param_count;
pub mod rng;
pub mod sr_data;
pub mod trainer;

pub use error::{Error, Result};
