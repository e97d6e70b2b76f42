//! Update rules for SAC, DrQ, RAD, SVEA, MaDi and MaDi-SAC.
//!
//! All six algorithms share one actor-critic core ([`Agent`]); they differ
//! in where augmentation is applied, whether the critic batch is doubled
//! with an augmented copy, and whether a Masker sits in front of the
//! encoder.

mod agent;
mod batch;

pub use agent::{ActorGrads, Agent, CriticGrads, Temperature, UpdateCounters, UpdateStats};
pub use batch::{obs_tensor, Batch};

use std::fmt;
use std::str::FromStr;

use crate::augment::{AugmentKind, DEFAULT_OVERLAY_ALPHA, DEFAULT_SHIFT_RADIUS};
use crate::error::{Error, Result};

/// Extra pixels rendered for RAD's random crop.
pub const RAD_RENDER_PAD: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Sac,
    Drq,
    Rad,
    Svea,
    Madi,
    MadiSac,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Sac,
        Algorithm::Drq,
        Algorithm::Rad,
        Algorithm::Svea,
        Algorithm::Madi,
        Algorithm::MadiSac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sac => "sac",
            Algorithm::Drq => "drq",
            Algorithm::Rad => "rad",
            Algorithm::Svea => "svea",
            Algorithm::Madi => "madi",
            Algorithm::MadiSac => "madi_sac",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config(format!("unknown algorithm '{s}'")))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which step of the update a batch is prepared for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Acting in the environment, also used for evaluation.
    Act,
    /// Successor observations inside the critic target.
    Target,
    Critic,
    ActorUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmSpec {
    pub algorithm: Algorithm,
    pub augment: AugmentKind,
    pub use_masker: bool,
    /// Critic trained on `concat(clean, augmented)`.
    pub svea_doubling: bool,
}

impl AlgorithmSpec {
    /// Defaults for a network input of `height x width`.
    pub fn new(algorithm: Algorithm, height: usize, width: usize) -> Self {
        let overlay = AugmentKind::Overlay {
            alpha: DEFAULT_OVERLAY_ALPHA,
        };
        let (augment, use_masker, svea_doubling) = match algorithm {
            Algorithm::Sac => (AugmentKind::None, false, false),
            Algorithm::Drq => (
                AugmentKind::Shift {
                    radius: DEFAULT_SHIFT_RADIUS,
                },
                false,
                false,
            ),
            Algorithm::Rad => (AugmentKind::Crop { height, width }, false, false),
            Algorithm::Svea => (overlay, false, true),
            Algorithm::Madi => (overlay, true, true),
            Algorithm::MadiSac => (AugmentKind::None, true, false),
        };
        AlgorithmSpec {
            algorithm,
            augment,
            use_masker,
            svea_doubling,
        }
    }

    /// Extra border the environment must render for this algorithm.
    pub fn render_pad(&self) -> usize {
        match self.augment {
            AugmentKind::Crop { .. } => RAD_RENDER_PAD,
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.augment.validate()?;
        let doubling_kind = matches!(
            self.augment,
            AugmentKind::Overlay { .. } | AugmentKind::Conv | AugmentKind::Splice { .. }
        );
        if self.svea_doubling && !doubling_kind {
            return Err(Error::config(format!(
                "critic doubling needs overlay, conv or splice, got {}",
                self.augment.name()
            )));
        }
        if !self.svea_doubling && doubling_kind {
            return Err(Error::config(format!(
                "{} augmentation is only used for critic doubling",
                self.augment.name()
            )));
        }
        match self.algorithm {
            Algorithm::Madi if !(self.use_masker && self.svea_doubling) => {
                Err(Error::config("madi uses the masker and critic doubling"))
            }
            Algorithm::MadiSac if !self.use_masker || self.svea_doubling => {
                Err(Error::config("madi_sac uses the masker without critic doubling"))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_named() {
        for a in Algorithm::ALL {
            let s = AlgorithmSpec::new(a, 48, 48);
            s.validate().unwrap();
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("soda".parse::<Algorithm>().is_err());
        assert_eq!(AlgorithmSpec::new(Algorithm::Rad, 48, 48).render_pad(), 16);
        assert_eq!(AlgorithmSpec::new(Algorithm::Svea, 48, 48).render_pad(), 0);
    }

    #[test]
    fn madi_invariants() {
        let madi = AlgorithmSpec::new(Algorithm::Madi, 48, 48);
        assert!(madi.use_masker && madi.svea_doubling);
        let ms = AlgorithmSpec::new(Algorithm::MadiSac, 48, 48);
        assert!(ms.use_masker && !ms.svea_doubling);
        assert!(AlgorithmSpec { use_masker: false, ..madi }.validate().is_err());
        assert!(AlgorithmSpec { svea_doubling: true, ..ms }.validate().is_err());
        let conv = AlgorithmSpec {
            augment: AugmentKind::Conv,
            ..madi
        };
        conv.validate().unwrap();
    }
}
