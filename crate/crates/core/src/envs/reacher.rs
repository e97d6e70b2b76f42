use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{Action, Frame, Observation};

use super::reward::{radial_weights, reward_sparse, reward_visual_weighted};
use super::video::ProceduralVideo;
use super::{DistractionSpec, EnvSpec, Task};

const GRAY: u8 = 128;
const TARGET_RGB: [u8; 3] = [230, 20, 20];
/// Camera displacement per physics tick at full action.
pub const STEP_SCALE: f64 = 0.05;
/// Disc radius as a fraction of the frame width.
pub const DISC_RADIUS_FRAC: f64 = 0.08;
/// Border band kept from the clean background, as a fraction of the width.
pub const SURFACE_BAND_FRAC: f64 = 0.15;

#[derive(Debug, Clone, PartialEq)]
pub struct ReacherState {
    /// Camera centre in the unit square.
    pub camera: [f64; 2],
    /// Target centre in the unit square.
    pub target: [f64; 2],
    /// Control step within the episode.
    pub t: usize,
    pub video: Option<ProceduralVideo>,
}

impl ReacherState {
    pub fn centered(target: [f64; 2]) -> Self {
        ReacherState {
            camera: [0.5, 0.5],
            target,
            t: 0,
            video: None,
        }
    }
}

struct Geometry {
    out_h: usize,
    out_w: usize,
    cy: f64,
    cx: f64,
    cos: f64,
    sin: f64,
    base_h: f64,
    base_w: f64,
    disc: [f64; 2],
    radius: f64,
}

impl Geometry {
    fn new(spec: &EnvSpec, state: &ReacherState, dspec: &DistractionSpec) -> Self {
        let (out_h, out_w) = spec.render_size();
        let off = (spec.render_pad / 2) as f64;
        let theta = dspec.rotation(state.t, spec.episode_len);
        let scale = spec.width as f64;
        Geometry {
            out_h,
            out_w,
            cy: (spec.height / 2) as f64 + off,
            cx: (spec.width / 2) as f64 + off,
            cos: theta.cos(),
            sin: theta.sin(),
            base_h: spec.height as f64,
            base_w: spec.width as f64,
            disc: [
                (state.target[0] - state.camera[0]) * scale,
                (state.target[1] - state.camera[1]) * scale,
            ],
            radius: DISC_RADIUS_FRAC * scale,
        }
    }

    /// Scene coordinates (relative to the frame centre) seen at output pixel.
    #[inline]
    fn scene(&self, y: usize, x: usize) -> (f64, f64) {
        let dx = x as f64 - self.cx;
        let dy = y as f64 - self.cy;
        (self.cos * dx + self.sin * dy, -self.sin * dx + self.cos * dy)
    }

    #[inline]
    fn in_disc(&self, sx: f64, sy: f64) -> bool {
        (sx - self.disc[0]).powi(2) + (sy - self.disc[1]).powi(2) <= self.radius * self.radius
    }
}

fn hue_shift(rgb: [u8; 3], degrees: f64) -> [u8; 3] {
    if degrees == 0.0 {
        return rgb;
    }
    let [r, g, b] = rgb.map(|c| f64::from(c) / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let mut h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    h = (h + degrees).rem_euclid(360.0);
    let c = max * s;
    let x = c * (1.0 - ((h / 60.0).rem_euclid(2.0) - 1.0).abs());
    let m = max - c;
    let (r1, g1, b1) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r1, g1, b1].map(|v| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8)
}

/// Renders the current view.
///
/// Composition order: background (gray or video), static border band,
/// view rotation, then the target disc.
pub fn render(spec: &EnvSpec, state: &ReacherState, dspec: &DistractionSpec) -> Frame {
    let geo = Geometry::new(spec, state, dspec);
    let band = (SURFACE_BAND_FRAC * spec.width as f64).round();
    let video = if dspec.has_video() { state.video.as_ref() } else { None };
    let disc_rgb = hue_shift(TARGET_RGB, dspec.hue_drift(state.t, spec.episode_len));
    let t = state.t as f64;
    let mut px = Vec::with_capacity(geo.out_h * geo.out_w * 3);
    for y in 0..geo.out_h {
        for x in 0..geo.out_w {
            let (sx, sy) = geo.scene(y, x);
            if geo.in_disc(sx, sy) {
                px.extend_from_slice(&disc_rgb);
                continue;
            }
            // Base-frame coordinates of the scene point.
            let bx = sx + geo.base_w / 2.0;
            let by = sy + geo.base_h / 2.0;
            let in_band = dspec.keep_surface
                && (bx < band || by < band || bx >= geo.base_w - band || by >= geo.base_h - band);
            match video {
                Some(v) if !in_band => {
                    let r = v.value(bx, by, geo.base_w, geo.base_h, t, 0);
                    let g = v.value(bx, by, geo.base_w, geo.base_h, t, 1);
                    let b = v.value(bx, by, geo.base_w, geo.base_h, t, 2);
                    // Green never drops below the red-detection limit, so
                    // backgrounds cannot register as target pixels.
                    px.push(unit_byte(r));
                    px.push(unit_byte(0.35 + 0.65 * g));
                    px.push(unit_byte(b));
                }
                _ => px.extend_from_slice(&[GRAY; 3]),
            }
        }
    }
    Frame::new(geo.out_h, geo.out_w, px).expect("render size validated by EnvSpec")
}

#[inline]
fn unit_byte(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Row-major `H x W` flags of the pixels covered by the target disc.
pub fn task_pixels(spec: &EnvSpec, state: &ReacherState, dspec: &DistractionSpec) -> Vec<bool> {
    let geo = Geometry::new(spec, state, dspec);
    let mut out = Vec::with_capacity(geo.out_h * geo.out_w);
    for y in 0..geo.out_h {
        for x in 0..geo.out_w {
            let (sx, sy) = geo.scene(y, x);
            out.push(geo.in_disc(sx, sy));
        }
    }
    out
}

/// Proportional controller that drives the camera onto the target.
pub fn scripted_action(spec: &EnvSpec, state: &ReacherState) -> Action {
    let per_step = STEP_SCALE * spec.action_repeat as f64;
    Action::clamped(
        (0..2)
            .map(|i| ((state.target[i] - state.camera[i]) / per_step) as f32)
            .collect(),
    )
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
}

/// One episode-based reacher instance with its own random stream.
#[derive(Debug, Clone)]
pub struct ReacherEnv {
    spec: EnvSpec,
    dspec: DistractionSpec,
    reward_spec: EnvSpec,
    weights: Vec<f64>,
    rng: RngStream,
    state: ReacherState,
    obs: Observation,
    done: bool,
    ticks: u64,
}

impl ReacherEnv {
    pub fn new(spec: EnvSpec, dspec: DistractionSpec, rng: RngStream) -> Result<Self> {
        spec.validate()?;
        dspec.validate()?;
        let reward_spec = EnvSpec {
            render_pad: 0,
            ..spec.clone()
        };
        let weights = radial_weights(spec.height, spec.width);
        let state = ReacherState::centered([0.5, 0.5]);
        let obs = Observation::repeated(render(&spec, &state, &dspec), spec.frame_stack);
        let mut env = ReacherEnv {
            spec,
            dspec,
            reward_spec,
            weights,
            rng,
            state,
            obs,
            done: true,
            ticks: 0,
        };
        env.reset();
        Ok(env)
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn distraction(&self) -> &DistractionSpec {
        &self.dspec
    }

    pub fn state(&self) -> &ReacherState {
        &self.state
    }

    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Physics ticks simulated since creation.
    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn obs_shape(&self) -> [usize; 3] {
        let (h, w) = self.spec.render_size();
        [3 * self.spec.frame_stack, h, w]
    }

    /// Starts an episode: uniform target, centred camera, one video from the
    /// tier's pool, and `k` copies of the first render.
    pub fn reset(&mut self) -> Observation {
        let target = [self.rng.uniform(), self.rng.uniform()];
        let index = self.rng.below(self.dspec.effective_pool()) as u64;
        let video = self
            .dspec
            .has_video()
            .then(|| ProceduralVideo::new(&self.dspec.namespace, index));
        self.state = ReacherState {
            video,
            ..ReacherState::centered(target)
        };
        self.done = false;
        let frame = render(&self.spec, &self.state, &self.dspec);
        self.obs = Observation::repeated(frame, self.spec.frame_stack);
        self.obs.clone()
    }

    /// Reward of the current state, measured on the distraction-free view.
    pub fn tick_reward(&self) -> f64 {
        match self.spec.task {
            Task::ReacherDense => {
                let frame = render(&self.reward_spec, &self.state, &DistractionSpec::clean());
                let (lo, hi) = self.spec.reward_clip;
                reward_visual_weighted(&frame, &self.weights, self.spec.reward_coef, lo, hi)
            }
            Task::ReacherSparse => reward_sparse(&self.state, self.spec.sparse_threshold),
        }
    }

    pub fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Protocol("step called on a finished episode".into()));
        }
        if action.dim() != self.spec.action_dim {
            return Err(Error::Shape {
                expected: vec![self.spec.action_dim],
                actual: vec![action.dim()],
            });
        }
        let a = Action::new(action.values().to_vec())?;
        let mut reward = 0.0;
        for _ in 0..self.spec.action_repeat {
            for i in 0..2 {
                let next = self.state.camera[i] + STEP_SCALE * f64::from(a.values()[i]);
                self.state.camera[i] = next.clamp(0.0, 1.0);
            }
            self.ticks += 1;
            reward += self.tick_reward();
        }
        self.state.t += 1;
        self.done = self.state.t >= self.spec.episode_len;
        let frame = render(&self.spec, &self.state, &self.dspec);
        self.obs = self.obs.push_frame(frame);
        Ok(StepOutcome {
            obs: self.obs.clone(),
            reward,
            done: self.done,
        })
    }

    /// Disc coverage of the newest frame.
    pub fn task_pixels(&self) -> Vec<bool> {
        task_pixels(&self.spec, &self.state, &self.dspec)
    }
}
