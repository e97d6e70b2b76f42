//! Masked-distraction soft actor-critic (MaDi) and its augmentation baselines
//! on a deterministic synthetic pixel-control benchmark.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`], [`par`]: dense tensors, GEMM dispatch and the rayon/sequential
//!   execution switch used by every batched kernel.
//! * [`rng`], [`types`], [`config`], [`buffer`]: deterministic randomness,
//!   observation types, hyperparameters and the replay buffer.
//! * [`envs`]: the camera-reacher task with its distraction tiers.
//! * [`augment`]: overlay, random convolution, splice, shift and crop.
//! * [`nets`]: Masker, encoder, actor and twin critic with hand-written
//!   backward passes, Adam, target EMA and checkpoints.
//! * [`agents`]: the per-algorithm update rules.
//! * [`harness`]: training loop, evaluation, statistics and reports.

pub mod agents;
pub mod augment;
pub mod buffer;
pub mod config;
pub mod envs;
pub mod error;
pub mod harness;
pub mod nets;
pub mod par;
pub mod rng;
pub mod tensor;
pub mod types;

pub use error::{Error, Result};
