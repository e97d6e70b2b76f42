//! Synthetic camera-reacher task with distraction tiers.
//!
//! The agent steers a camera over a plane; a red disc marks the target. The
//! training tier shows a flat gray background. The test tiers replace the
//! background with procedural drifting-plane videos (`video_easy`,
//! `video_hard`) and, for `distracting`, add a view rotation and a hue drift
//! of the target colour whose strength scales with an intensity `λ`.

mod ppm;
mod reacher;
mod reward;
mod video;

pub use ppm::{read_pgm, read_ppm, write_pgm, write_ppm, EpisodeRecorder};
pub use reacher::{render, scripted_action, ReacherEnv, ReacherState, StepOutcome};
pub use reward::{is_red, radial_weights, reward_sparse, reward_visual, reward_visual_weighted};
pub use video::{ProceduralVideo, AUGMENT_NAMESPACE, VIDEO_NAMESPACE};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Maximum view rotation of the `distracting` tier at `λ = 1`, in degrees.
pub const MAX_ROTATION_DEG: f64 = 15.0;
/// Maximum hue drift of the target colour at `λ = 1`, in degrees.
pub const MAX_HUE_DRIFT_DEG: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    ReacherDense,
    ReacherSparse,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::ReacherDense => "reacher_dense",
            Task::ReacherSparse => "reacher_sparse",
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reacher_dense" => Ok(Task::ReacherDense),
            "reacher_sparse" => Ok(Task::ReacherSparse),
            _ => Err(Error::config(format!("unknown task '{s}'"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub task: Task,
    pub height: usize,
    pub width: usize,
    pub episode_len: usize,
    pub action_dim: usize,
    pub action_repeat: usize,
    pub frame_stack: usize,
    /// Extra pixels rendered around the frame (split evenly on both sides)
    /// for crop-based augmentation.
    pub render_pad: usize,
    pub reward_coef: f64,
    pub reward_clip: (f64, f64),
    pub sparse_threshold: f64,
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec {
            task: Task::ReacherDense,
            height: 48,
            width: 48,
            episode_len: 150,
            action_dim: 2,
            action_repeat: 4,
            frame_stack: 3,
            render_pad: 0,
            reward_coef: 800.0,
            reward_clip: (0.0, 4.0),
            sparse_threshold: 0.1,
        }
    }
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("height", self.height), ("width", self.width)] {
            if !(16..=128).contains(&v) {
                return Err(Error::config(format!("env {name} {v} outside [16, 128]")));
            }
        }
        if self.episode_len == 0 || self.action_repeat == 0 || self.frame_stack == 0 {
            return Err(Error::config("episode_len, action_repeat and frame_stack must be >= 1"));
        }
        if self.action_dim != 2 {
            return Err(Error::config("the reacher has a 2-D action"));
        }
        if !self.render_pad.is_multiple_of(2) {
            return Err(Error::config("render_pad must be even"));
        }
        if !(self.reward_coef > 0.0) || self.reward_clip.0 > self.reward_clip.1 {
            return Err(Error::config("reward coefficient must be > 0 and clip range ordered"));
        }
        if !(self.sparse_threshold > 0.0) {
            return Err(Error::config("sparse threshold must be > 0"));
        }
        Ok(())
    }

    /// Size of the rendered frame, including the crop padding.
    pub fn render_size(&self) -> (usize, usize) {
        (self.height + self.render_pad, self.width + self.render_pad)
    }

    /// Largest undiscounted return a policy can collect.
    pub fn max_return(&self) -> f64 {
        let per_tick = match self.task {
            Task::ReacherDense => self.reward_clip.1,
            Task::ReacherSparse => 1.0,
        };
        per_tick * (self.action_repeat * self.episode_len) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tier {
    Clean,
    VideoEasy,
    VideoHard,
    Distracting,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::Clean, Tier::VideoEasy, Tier::VideoHard, Tier::Distracting];

    pub fn name(self) -> &'static str {
        match self {
            Tier::Clean => "clean",
            Tier::VideoEasy => "video_easy",
            Tier::VideoHard => "video_hard",
            Tier::Distracting => "distracting",
        }
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Tier::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::config(format!("unknown tier '{s}'")))
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistractionSpec {
    pub tier: Tier,
    pub pool_size: usize,
    /// Intensity `λ`; only read by the `distracting` tier.
    pub intensity: f64,
    /// Keep a static border band of the clean background.
    pub keep_surface: bool,
    pub namespace: String,
}

impl DistractionSpec {
    pub const DEFAULT_INTENSITY: f64 = 0.1;

    pub fn clean() -> Self {
        DistractionSpec {
            tier: Tier::Clean,
            pool_size: 1,
            intensity: 0.0,
            keep_surface: false,
            namespace: VIDEO_NAMESPACE.to_string(),
        }
    }

    pub fn video_easy() -> Self {
        DistractionSpec {
            tier: Tier::VideoEasy,
            pool_size: 10,
            keep_surface: true,
            ..Self::clean()
        }
    }

    pub fn video_hard() -> Self {
        DistractionSpec {
            tier: Tier::VideoHard,
            pool_size: 100,
            ..Self::clean()
        }
    }

    pub fn distracting(intensity: f64) -> Self {
        DistractionSpec {
            tier: Tier::Distracting,
            pool_size: 100,
            intensity,
            keep_surface: true,
            ..Self::clean()
        }
    }

    pub fn for_tier(tier: Tier, intensity: f64) -> Self {
        match tier {
            Tier::Clean => Self::clean(),
            Tier::VideoEasy => Self::video_easy(),
            Tier::VideoHard => Self::video_hard(),
            Tier::Distracting => Self::distracting(intensity),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0 {
            return Err(Error::config("video pool size must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.intensity) {
            return Err(Error::config(format!("intensity {} outside [0, 1]", self.intensity)));
        }
        if self.namespace == AUGMENT_NAMESPACE {
            return Err(Error::config(
                "video namespace must differ from the augmentation image namespace",
            ));
        }
        Ok(())
    }

    pub fn has_video(&self) -> bool {
        self.tier != Tier::Clean
    }

    /// Number of videos episodes draw from; grows with intensity for the
    /// `distracting` tier.
    pub fn effective_pool(&self) -> usize {
        match self.tier {
            Tier::Distracting => {
                (self.pool_size as f64 * (1.0 + 9.0 * self.intensity)).round() as usize
            }
            _ => self.pool_size,
        }
    }

    fn strength(&self) -> f64 {
        if self.tier == Tier::Distracting {
            self.intensity
        } else {
            0.0
        }
    }

    /// View rotation at control step `t` of an episode of length `len`, radians.
    pub fn rotation(&self, t: usize, len: usize) -> f64 {
        let phase = 2.0 * std::f64::consts::PI * t as f64 / len.max(1) as f64;
        (self.strength() * MAX_ROTATION_DEG * phase.sin()).to_radians()
    }

    /// Hue drift of the target colour at control step `t`, degrees.
    pub fn hue_drift(&self, t: usize, len: usize) -> f64 {
        let phase = 2.0 * std::f64::consts::PI * t as f64 / len.max(1) as f64;
        self.strength() * MAX_HUE_DRIFT_DEG * (phase + 1.0).sin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tier_names_round_trip() {
        for t in Tier::ALL {
            assert_eq!(t.name().parse::<Tier>().unwrap(), t);
        }
        assert!("video_medium".parse::<Tier>().is_err());
    }

    #[test]
    fn spec_validation() {
        EnvSpec::default().validate().unwrap();
        assert!(EnvSpec { height: 8, ..Default::default() }.validate().is_err());
        assert!(EnvSpec { width: 200, ..Default::default() }.validate().is_err());
        assert!(EnvSpec { episode_len: 0, ..Default::default() }.validate().is_err());
        for t in Tier::ALL {
            DistractionSpec::for_tier(t, 0.1).validate().unwrap();
        }
        let mut d = DistractionSpec::video_hard();
        d.namespace = AUGMENT_NAMESPACE.into();
        assert!(d.validate().is_err());
        assert!(DistractionSpec::distracting(1.5).validate().is_err());
    }

    #[test]
    fn rotation_bounded_by_intensity() {
        let d = DistractionSpec::distracting(0.1);
        let bound = (0.1 * MAX_ROTATION_DEG).to_radians() + 1e-12;
        for t in 0..150 {
            assert!(d.rotation(t, 150).abs() <= bound);
        }
        assert!((0..150).any(|t| d.rotation(t, 150).abs() > 0.9 * bound));
        assert_eq!(DistractionSpec::video_hard().rotation(37, 150), 0.0);
    }
}
