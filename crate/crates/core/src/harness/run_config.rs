//! Run configuration and its flat `key = value` file format.
//!
//! Lines are `key = value`; `#` starts a comment; keys are dotted
//! (`env.frame_size`). Every key has a default, unknown or repeated keys are
//! rejected, and [`RunConfig::to_text`] writes every key so that the output
//! parses back to the same configuration.

use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

use crate::agents::{Algorithm, AlgorithmSpec};
use crate::augment::AugmentKind;
use crate::config::HyperParams;
use crate::envs::{DistractionSpec, EnvSpec, Task, Tier};
use crate::error::{Error, Result};
use crate::nets::NetConfig;
use crate::par::Exec;

/// Which augmentation the algorithm uses; `Default` keeps its standard one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentChoice {
    Default,
    Overlay,
    Conv,
    Splice,
}

impl AugmentChoice {
    fn name(self) -> &'static str {
        match self {
            AugmentChoice::Default => "default",
            AugmentChoice::Overlay => "overlay",
            AugmentChoice::Conv => "conv",
            AugmentChoice::Splice => "splice",
        }
    }
}

impl FromStr for AugmentChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            AugmentChoice::Default,
            AugmentChoice::Overlay,
            AugmentChoice::Conv,
            AugmentChoice::Splice,
        ]
        .into_iter()
        .find(|c| c.name() == s)
        .ok_or_else(|| Error::config(format!("unknown augmentation '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub task: Task,
    pub frame_size: usize,
    pub episode_len: usize,
    pub reward_coef: f64,
    pub reward_clip: (f64, f64),
    pub sparse_threshold: f64,
    /// `λ` of the `distracting` tier.
    pub intensity: f64,
    pub tiers: Vec<Tier>,
    pub hp: HyperParams,
    pub augment: AugmentChoice,
    pub overlay_alpha: f64,
    pub shift_radius: usize,
    pub encoder_layers: usize,
    pub encoder_channels: usize,
    pub projection_dim: usize,
    pub hidden_dim: usize,
    pub masker_channels: usize,
    /// Steps between rows of `train.csv`.
    pub log_interval: usize,
    /// Steps between mask dumps; 0 disables them.
    pub mask_interval: usize,
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let env = EnvSpec::default();
        RunConfig {
            algorithm: Algorithm::Madi,
            seed: 0,
            task: env.task,
            frame_size: env.height,
            episode_len: env.episode_len,
            reward_coef: env.reward_coef,
            reward_clip: env.reward_clip,
            sparse_threshold: env.sparse_threshold,
            intensity: DistractionSpec::DEFAULT_INTENSITY,
            tiers: Tier::ALL.to_vec(),
            hp: HyperParams::desk(),
            augment: AugmentChoice::Default,
            overlay_alpha: crate::augment::DEFAULT_OVERLAY_ALPHA,
            shift_radius: crate::augment::DEFAULT_SHIFT_RADIUS,
            encoder_layers: 5,
            encoder_channels: 32,
            projection_dim: 100,
            hidden_dim: 512,
            masker_channels: 32,
            log_interval: 100,
            mask_interval: 5000,
            parallel: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("invalid value '{value}' for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config(format!("{key} must be true or false, got '{value}'"))),
    }
}

impl RunConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected 'key = value'", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::config(format!("line {}: duplicate key '{key}'", n + 1)));
            }
            cfg.set(key, value)
                .map_err(|e| Error::config(format!("line {}: {}", n + 1, strip_prefix(&e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    /// Sets one key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let hp = &mut self.hp;
        match key {
            "algorithm" => self.algorithm = v.parse()?,
            "seed" => self.seed = parse(key, v)?,
            "env.task" => self.task = v.parse()?,
            "env.frame_size" => self.frame_size = parse(key, v)?,
            "env.episode_length" => self.episode_len = parse(key, v)?,
            "env.reward_coef" => self.reward_coef = parse(key, v)?,
            "env.reward_clip_lo" => self.reward_clip.0 = parse(key, v)?,
            "env.reward_clip_hi" => self.reward_clip.1 = parse(key, v)?,
            "env.sparse_threshold" => self.sparse_threshold = parse(key, v)?,
            "env.intensity" => self.intensity = parse(key, v)?,
            "eval.tiers" => {
                self.tiers = v
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<Vec<Tier>>>()?
            }
            "eval.interval" => hp.eval_interval = parse(key, v)?,
            "eval.episodes" => hp.eval_episodes = parse(key, v)?,
            "train.total_steps" => hp.total_steps = parse(key, v)?,
            "train.init_steps" => hp.init_steps = parse(key, v)?,
            "train.batch_size" => hp.batch_size = parse(key, v)?,
            "train.buffer_capacity" => hp.buffer_capacity = parse(key, v)?,
            "train.frame_stack" => hp.frame_stack = parse(key, v)?,
            "train.action_repeat" => hp.action_repeat = parse(key, v)?,
            "train.gamma" => hp.gamma = parse(key, v)?,
            "train.actor_lr" => hp.actor_lr = parse(key, v)?,
            "train.critic_lr" => hp.critic_lr = parse(key, v)?,
            "train.masker_lr" => hp.masker_lr = parse(key, v)?,
            "train.alpha_lr" => hp.alpha_lr = parse(key, v)?,
            "train.adam_beta1" => hp.adam_betas.0 = parse(key, v)?,
            "train.adam_beta2" => hp.adam_betas.1 = parse(key, v)?,
            "train.alpha_beta1" => hp.alpha_betas.0 = parse(key, v)?,
            "train.alpha_beta2" => hp.alpha_betas.1 = parse(key, v)?,
            "train.adam_eps" => hp.adam_eps = parse(key, v)?,
            "train.actor_update_period" => hp.actor_update_period = parse(key, v)?,
            "train.target_update_period" => hp.target_update_period = parse(key, v)?,
            "train.masker_update_period" => hp.masker_update_period = parse(key, v)?,
            "train.tau" => hp.tau = parse(key, v)?,
            "train.tau_enc" => hp.tau_enc = parse(key, v)?,
            "train.init_temperature" => hp.init_temperature = parse(key, v)?,
            "train.svea_alpha" => hp.svea_alpha = parse(key, v)?,
            "train.svea_beta" => hp.svea_beta = parse(key, v)?,
            "augment.kind" => self.augment = v.parse()?,
            "augment.overlay_alpha" => self.overlay_alpha = parse(key, v)?,
            "augment.shift_radius" => self.shift_radius = parse(key, v)?,
            "nets.encoder_layers" => self.encoder_layers = parse(key, v)?,
            "nets.encoder_channels" => self.encoder_channels = parse(key, v)?,
            "nets.projection_dim" => self.projection_dim = parse(key, v)?,
            "nets.hidden_dim" => self.hidden_dim = parse(key, v)?,
            "nets.masker_channels" => self.masker_channels = parse(key, v)?,
            "log.train_interval" => self.log_interval = parse(key, v)?,
            "log.mask_interval" => self.mask_interval = parse(key, v)?,
            "runtime.parallel" => self.parallel = parse_bool(key, v)?,
            _ => return Err(Error::config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let hp = &self.hp;
        let tiers: Vec<&str> = self.tiers.iter().map(|t| t.name()).collect();
        vec![
            ("algorithm", self.algorithm.to_string()),
            ("seed", self.seed.to_string()),
            ("env.task", self.task.to_string()),
            ("env.frame_size", self.frame_size.to_string()),
            ("env.episode_length", self.episode_len.to_string()),
            ("env.reward_coef", self.reward_coef.to_string()),
            ("env.reward_clip_lo", self.reward_clip.0.to_string()),
            ("env.reward_clip_hi", self.reward_clip.1.to_string()),
            ("env.sparse_threshold", self.sparse_threshold.to_string()),
            ("env.intensity", self.intensity.to_string()),
            ("eval.tiers", tiers.join(",")),
            ("eval.interval", hp.eval_interval.to_string()),
            ("eval.episodes", hp.eval_episodes.to_string()),
            ("train.total_steps", hp.total_steps.to_string()),
            ("train.init_steps", hp.init_steps.to_string()),
            ("train.batch_size", hp.batch_size.to_string()),
            ("train.buffer_capacity", hp.buffer_capacity.to_string()),
            ("train.frame_stack", hp.frame_stack.to_string()),
            ("train.action_repeat", hp.action_repeat.to_string()),
            ("train.gamma", hp.gamma.to_string()),
            ("train.actor_lr", hp.actor_lr.to_string()),
            ("train.critic_lr", hp.critic_lr.to_string()),
            ("train.masker_lr", hp.masker_lr.to_string()),
            ("train.alpha_lr", hp.alpha_lr.to_string()),
            ("train.adam_beta1", hp.adam_betas.0.to_string()),
            ("train.adam_beta2", hp.adam_betas.1.to_string()),
            ("train.alpha_beta1", hp.alpha_betas.0.to_string()),
            ("train.alpha_beta2", hp.alpha_betas.1.to_string()),
            ("train.adam_eps", hp.adam_eps.to_string()),
            ("train.actor_update_period", hp.actor_update_period.to_string()),
            ("train.target_update_period", hp.target_update_period.to_string()),
            ("train.masker_update_period", hp.masker_update_period.to_string()),
            ("train.tau", hp.tau.to_string()),
            ("train.tau_enc", hp.tau_enc.to_string()),
            ("train.init_temperature", hp.init_temperature.to_string()),
            ("train.svea_alpha", hp.svea_alpha.to_string()),
            ("train.svea_beta", hp.svea_beta.to_string()),
            ("augment.kind", self.augment.name().to_string()),
            ("augment.overlay_alpha", self.overlay_alpha.to_string()),
            ("augment.shift_radius", self.shift_radius.to_string()),
            ("nets.encoder_layers", self.encoder_layers.to_string()),
            ("nets.encoder_channels", self.encoder_channels.to_string()),
            ("nets.projection_dim", self.projection_dim.to_string()),
            ("nets.hidden_dim", self.hidden_dim.to_string()),
            ("nets.masker_channels", self.masker_channels.to_string()),
            ("log.train_interval", self.log_interval.to_string()),
            ("log.mask_interval", self.mask_interval.to_string()),
            ("runtime.parallel", self.parallel.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        self.env_spec().validate()?;
        self.algorithm_spec().validate()?;
        self.net_config().validate()?;
        DistractionSpec::distracting(self.intensity).validate()?;
        if self.tiers.is_empty() {
            return Err(Error::config("eval.tiers must name at least one tier"));
        }
        if self.hp.init_steps < self.hp.batch_size && self.hp.init_steps < self.hp.total_steps {
            return Err(Error::config(format!(
                "train.init_steps ({}) must be >= train.batch_size ({}) so the first update has a full batch",
                self.hp.init_steps, self.hp.batch_size
            )));
        }
        if self.log_interval == 0 {
            return Err(Error::config("log.train_interval must be >= 1"));
        }
        Ok(())
    }

    pub fn algorithm_spec(&self) -> AlgorithmSpec {
        let mut spec = AlgorithmSpec::new(self.algorithm, self.frame_size, self.frame_size);
        spec.augment = match self.augment {
            AugmentChoice::Default => spec.augment,
            AugmentChoice::Overlay => AugmentKind::Overlay { alpha: self.overlay_alpha },
            AugmentChoice::Conv => AugmentKind::Conv,
            AugmentChoice::Splice => AugmentKind::default_splice(),
        };
        spec.augment = match spec.augment {
            AugmentKind::Overlay { .. } => AugmentKind::Overlay { alpha: self.overlay_alpha },
            AugmentKind::Shift { .. } => AugmentKind::Shift { radius: self.shift_radius },
            other => other,
        };
        spec
    }

    /// Environment as rendered for this algorithm (RAD renders a border).
    pub fn env_spec(&self) -> EnvSpec {
        EnvSpec {
            task: self.task,
            height: self.frame_size,
            width: self.frame_size,
            episode_len: self.episode_len,
            action_dim: 2,
            action_repeat: self.hp.action_repeat,
            frame_stack: self.hp.frame_stack,
            render_pad: self.algorithm_spec().render_pad(),
            reward_coef: self.reward_coef,
            reward_clip: self.reward_clip,
            sparse_threshold: self.sparse_threshold,
        }
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            in_channels: 3 * self.hp.frame_stack,
            height: self.frame_size,
            width: self.frame_size,
            action_dim: 2,
            encoder_layers: self.encoder_layers,
            encoder_channels: self.encoder_channels,
            projection_dim: self.projection_dim,
            hidden_dim: self.hidden_dim,
            masker_channels: self.masker_channels,
            use_masker: self.algorithm_spec().use_masker,
        }
    }

    pub fn distraction(&self, tier: Tier) -> DistractionSpec {
        DistractionSpec::for_tier(tier, self.intensity)
    }

    pub fn exec(&self) -> Exec {
        if self.parallel {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_desk_defaults() {
        let c = RunConfig::parse_str("# nothing\n\n").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.hp.total_steps, 20_000);
        assert_eq!(c.hp.eval_interval, 1000);
        assert_eq!(c.hp.eval_episodes, 10);
        assert_eq!(c.frame_size, 48);
    }

    #[test]
    fn resolved_text_round_trips() {
        let text = "algorithm = rad\nseed = 7\nenv.frame_size = 32 # small\neval.tiers = clean, video_hard\ntrain.actor_lr = 0.0003\nruntime.parallel = false\n";
        let c = RunConfig::parse_str(text).unwrap();
        assert_eq!(c.algorithm, Algorithm::Rad);
        assert_eq!(c.tiers, vec![Tier::Clean, Tier::VideoHard]);
        assert_eq!(c.env_spec().render_pad, 16);
        assert_eq!(RunConfig::parse_str(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_duplicate_and_invalid() {
        assert!(RunConfig::parse_str("env.colour = red").is_err());
        assert!(RunConfig::parse_str("seed = 1\nseed = 2").is_err());
        assert!(RunConfig::parse_str("seed = minus one").is_err());
        assert!(RunConfig::parse_str("just words").is_err());
        assert!(RunConfig::parse_str("train.tau = 2").is_err());
        assert!(RunConfig::parse_str("eval.tiers = clean, foggy").is_err());
        assert!(RunConfig::parse_str("algorithm = sac\naugment.kind = conv").is_err());
        assert!(RunConfig::parse_str("train.init_steps = 10").is_err());
    }

    #[test]
    fn augmentation_override() {
        let c = RunConfig::parse_str("algorithm = madi\naugment.kind = conv").unwrap();
        assert_eq!(c.algorithm_spec().augment, AugmentKind::Conv);
        let c = RunConfig::parse_str("algorithm = drq\naugment.shift_radius = 2").unwrap();
        assert_eq!(c.algorithm_spec().augment, AugmentKind::Shift { radius: 2 });
    }
}
