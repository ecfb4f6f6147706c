//! Reward-directed diffusion for tabular design data.
//!
//! A DDPM is pretrained on design rows, then steered toward high black-box
//! reward either by reward-weighted fine-tuning ([`finetune`]) or at sampling
//! time by soft-value importance sampling ([`svdd`]).

// `!(x > 0.0)` checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod data;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod finetune;
pub mod hull;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod pretrain;
pub mod rewards;
pub mod rng;
pub mod surrogate;
pub mod svdd;

pub use error::{Error, Result};
