//! Networks: Masker, encoder, actor, twin critic and their parameters.

pub mod actor;
pub mod checkpoint;
pub mod critic;
pub mod encoder;
pub mod layers;
pub mod masker;
pub mod params;

pub use actor::{ActorDef, PolicyOutput};
pub use checkpoint::Checkpoint;
pub use critic::{CriticDef, CriticOutput};
pub use encoder::EncoderDef;
pub use masker::{apply_mask, apply_mask_backward, MaskHook, MaskerDef};
pub use params::{ema_update, Adam, AdamConfig, ParamSet, ScalarAdam};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::rng::RngStream;
use crate::tensor::Scalar;

/// Architecture sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    /// `3k` stacked channels.
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub action_dim: usize,
    pub encoder_layers: usize,
    pub encoder_channels: usize,
    pub projection_dim: usize,
    pub hidden_dim: usize,
    pub masker_channels: usize,
    pub use_masker: bool,
}

impl NetConfig {
    pub fn desk(frame_stack: usize, size: usize, action_dim: usize, use_masker: bool) -> Self {
        NetConfig {
            in_channels: 3 * frame_stack,
            height: size,
            width: size,
            action_dim,
            encoder_layers: 5,
            encoder_channels: 32,
            projection_dim: 100,
            hidden_dim: 512,
            masker_channels: 32,
            use_masker,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || !self.in_channels.is_multiple_of(3) {
            return Err(Error::config(format!(
                "input channels must be a positive multiple of 3, got {}",
                self.in_channels
            )));
        }
        let sizes = [
            ("action_dim", self.action_dim),
            ("encoder_layers", self.encoder_layers),
            ("encoder_channels", self.encoder_channels),
            ("projection_dim", self.projection_dim),
            ("hidden_dim", self.hidden_dim),
            ("masker_channels", self.masker_channels),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("nets.{name} must be positive")));
        }
        if self.encoder().output_hw().is_none() {
            return Err(Error::config(format!(
                "{} encoder layers do not fit a {}x{} frame",
                self.encoder_layers, self.height, self.width
            )));
        }
        Ok(())
    }

    pub fn encoder(&self) -> EncoderDef {
        EncoderDef::new(
            self.in_channels,
            self.encoder_channels,
            self.encoder_layers,
            self.height,
            self.width,
        )
    }
}

/// Layer definitions for one agent.
#[derive(Debug, Clone)]
pub struct NetDefs {
    pub config: NetConfig,
    pub masker: MaskerDef,
    pub encoder: EncoderDef,
    pub actor: ActorDef,
    pub critic: CriticDef,
}

impl NetDefs {
    pub fn new(config: &NetConfig) -> Result<Self> {
        config.validate()?;
        let encoder = config.encoder();
        let feat = encoder.feature_dim();
        Ok(NetDefs {
            masker: MaskerDef::new(config.masker_channels),
            actor: ActorDef::new(feat, config.projection_dim, config.hidden_dim, config.action_dim),
            critic: CriticDef::new(feat, config.projection_dim, config.hidden_dim, config.action_dim),
            encoder,
            config: config.clone(),
        })
    }

    pub fn set_exec(&mut self, exec: Exec) {
        self.masker.exec = exec;
        self.encoder.exec = exec;
    }
}

/// Online and target parameters. The Masker has no target copy.
#[derive(Debug, Clone, PartialEq)]
pub struct Networks<T> {
    pub masker: Option<ParamSet<T>>,
    pub encoder: ParamSet<T>,
    pub encoder_target: ParamSet<T>,
    pub actor: ParamSet<T>,
    pub critic: ParamSet<T>,
    pub critic_target: ParamSet<T>,
}

const GROUPS: [&str; 6] = ["masker", "encoder", "encoder_target", "actor", "critic", "critic_target"];

impl<T: Scalar> Networks<T> {
    /// Random init with targets copied from the online networks.
    pub fn init(defs: &NetDefs, rng: &mut RngStream) -> Self {
        let masker = defs.config.use_masker.then(|| defs.masker.init(&mut rng.substream("masker")));
        let encoder = defs.encoder.init(&mut rng.substream("encoder"));
        let actor = defs.actor.init(&mut rng.substream("actor"));
        let critic = defs.critic.init(&mut rng.substream("critic"));
        Networks {
            masker,
            encoder_target: encoder.clone(),
            encoder,
            actor,
            critic_target: critic.clone(),
            critic,
        }
    }

    pub fn cast<U: Scalar>(&self) -> Networks<U> {
        Networks {
            masker: self.masker.as_ref().map(ParamSet::cast),
            encoder: self.encoder.cast(),
            encoder_target: self.encoder_target.cast(),
            actor: self.actor.cast(),
            critic: self.critic.cast(),
            critic_target: self.critic_target.cast(),
        }
    }

    fn groups(&self) -> Vec<(&'static str, &ParamSet<T>)> {
        let sets = [
            self.masker.as_ref(),
            Some(&self.encoder),
            Some(&self.encoder_target),
            Some(&self.actor),
            Some(&self.critic),
            Some(&self.critic_target),
        ];
        GROUPS.iter().zip(sets).filter_map(|(g, s)| s.map(|s| (*g, s))).collect()
    }

    pub fn num_params(&self) -> usize {
        self.groups().iter().map(|(_, s)| s.numel()).sum()
    }

    pub fn to_checkpoint(&self, ck: &mut Checkpoint) {
        for (g, set) in self.groups() {
            ck.tensors.extend(set.cast::<f32>().prefixed(g));
        }
    }

    /// Loads parameters into a freshly initialised layout, checking every
    /// name and shape.
    pub fn from_checkpoint(defs: &NetDefs, ck: &Checkpoint) -> Result<Self> {
        let mut nets = Networks::<T>::init(defs, &mut RngStream::new(0));
        let fill = |group: &str, set: &mut ParamSet<T>| -> Result<()> {
            let stored = ck.group(group);
            if stored.len() != set.len() {
                return Err(Error::Checkpoint(format!(
                    "{group}: expected {} tensors, found {}",
                    set.len(),
                    stored.len()
                )));
            }
            for (name, t) in stored {
                let slot = set
                    .try_get(name)
                    .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {group}/{name}")))?;
                if slot.shape() != t.shape() {
                    return Err(Error::Checkpoint(format!(
                        "{group}/{name}: shape {:?} in file, model expects {:?}",
                        t.shape(),
                        slot.shape()
                    )));
                }
                *set.get_mut(name) = t.cast();
            }
            Ok(())
        };
        if let Some(m) = nets.masker.as_mut() {
            fill("masker", m)?;
        } else if ck.has_group("masker") {
            return Err(Error::Checkpoint("checkpoint has a masker the model does not".into()));
        }
        fill("encoder", &mut nets.encoder)?;
        fill("encoder_target", &mut nets.encoder_target)?;
        fill("actor", &mut nets.actor)?;
        fill("critic", &mut nets.critic)?;
        fill("critic_target", &mut nets.critic_target)?;
        Ok(nets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_sizes() {
        let defs = NetDefs::new(&NetConfig::desk(3, 48, 2, true)).unwrap();
        let nets = Networks::<f32>::init(&defs, &mut RngStream::new(0));
        let masker = nets.masker.as_ref().unwrap().numel();
        assert_eq!(masker, defs.masker.num_params());
        assert!((9_000..=11_000).contains(&masker));
        assert_eq!(nets.encoder, nets.encoder_target);
        assert_eq!(nets.critic, nets.critic_target);
        // A few MB of f32 parameters.
        let bytes = 4 * nets.num_params();
        assert!((1_000_000..20_000_000).contains(&bytes), "{bytes}");
    }

    #[test]
    fn checkpoint_round_trip_and_mismatch() {
        let cfg = NetConfig {
            encoder_layers: 2,
            hidden_dim: 16,
            projection_dim: 8,
            ..NetConfig::desk(3, 16, 2, true)
        };
        let defs = NetDefs::new(&cfg).unwrap();
        let nets = Networks::<f32>::init(&defs, &mut RngStream::new(3));
        let mut ck = Checkpoint::new();
        nets.to_checkpoint(&mut ck);
        let ck = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(Networks::<f32>::from_checkpoint(&defs, &ck).unwrap(), nets);

        let other = NetDefs::new(&NetConfig { hidden_dim: 32, ..cfg.clone() }).unwrap();
        assert!(Networks::<f32>::from_checkpoint(&other, &ck).is_err());
        let sac = NetDefs::new(&NetConfig { use_masker: false, ..cfg }).unwrap();
        assert!(Networks::<f32>::from_checkpoint(&sac, &ck).is_err());
    }

    #[test]
    fn invalid_configs() {
        assert!(NetConfig { in_channels: 8, ..NetConfig::desk(3, 48, 2, false) }.validate().is_err());
        assert!(NetConfig { encoder_layers: 30, ..NetConfig::desk(3, 48, 2, false) }.validate().is_err());
    }
}
