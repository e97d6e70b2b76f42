//! Training hyperparameters.

use crate::error::{Error, Result};

/// Optimiser, schedule and protocol settings shared by all algorithms.
///
/// `Default` reproduces the full-scale simulation settings; [`HyperParams::desk`]
/// scales the protocol down to a single-machine budget.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub masker_lr: f64,
    pub alpha_lr: f64,
    pub adam_betas: (f64, f64),
    pub alpha_betas: (f64, f64),
    pub adam_eps: f64,
    pub gamma: f64,
    pub frame_stack: usize,
    pub action_repeat: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub total_steps: usize,
    pub init_steps: usize,
    /// Actor and temperature update period `k_a`.
    pub actor_update_period: usize,
    /// Target EMA period `k_tar`.
    pub target_update_period: usize,
    pub masker_update_period: usize,
    pub tau: f64,
    pub tau_enc: f64,
    pub init_temperature: f64,
    pub svea_alpha: f64,
    pub svea_beta: f64,
    pub eval_interval: usize,
    pub eval_episodes: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            masker_lr: 1e-3,
            alpha_lr: 1e-4,
            adam_betas: (0.9, 0.999),
            alpha_betas: (0.5, 0.999),
            adam_eps: 1e-8,
            gamma: 0.99,
            frame_stack: 3,
            action_repeat: 4,
            batch_size: 128,
            buffer_capacity: 500_000,
            total_steps: 500_000,
            init_steps: 1000,
            actor_update_period: 2,
            target_update_period: 2,
            masker_update_period: 1,
            tau: 0.01,
            tau_enc: 0.05,
            init_temperature: 0.1,
            svea_alpha: 0.5,
            svea_beta: 0.5,
            eval_interval: 10_000,
            eval_episodes: 20,
        }
    }
}

impl HyperParams {
    /// Desk-scale protocol: 20K steps, evaluation every 1K steps over 10
    /// episodes.
    pub fn desk() -> Self {
        HyperParams {
            total_steps: 20_000,
            eval_interval: 1000,
            eval_episodes: 10,
            ..HyperParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("masker_lr", self.masker_lr),
            ("alpha_lr", self.alpha_lr),
            ("init_temperature", self.init_temperature),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, (b1, b2)) in [("adam_betas", self.adam_betas), ("alpha_betas", self.alpha_betas)] {
            if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
                return Err(Error::config(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        for (name, v) in [("tau", self.tau), ("tau_enc", self.tau_enc)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if (self.svea_alpha + self.svea_beta - 1.0).abs() > 1e-12
            || self.svea_alpha < 0.0
            || self.svea_beta < 0.0
        {
            return Err(Error::config("svea_alpha + svea_beta must equal 1"));
        }
        let counts = [
            ("frame_stack", self.frame_stack),
            ("action_repeat", self.action_repeat),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("total_steps", self.total_steps),
            ("actor_update_period", self.actor_update_period),
            ("target_update_period", self.target_update_period),
            ("masker_update_period", self.masker_update_period),
            ("eval_interval", self.eval_interval),
            ("eval_episodes", self.eval_episodes),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}
