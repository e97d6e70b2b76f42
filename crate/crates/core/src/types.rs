//! Frames, stacked observations, actions and transitions.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::Scalar;

pub const MIN_FRAME_SIZE: usize = 16;

/// One RGB image, `height x width x 3` bytes in HWC order.
///
/// Pixel storage is reference counted: consecutive observations share their
/// overlapping frames, which keeps a frame-stacked replay buffer at one frame
/// per transition.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    height: usize,
    width: usize,
    pixels: Arc<[u8]>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Frame({}x{})", self.height, self.width)
    }
}

impl Frame {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height < MIN_FRAME_SIZE || width < MIN_FRAME_SIZE {
            return Err(Error::config(format!(
                "frame {height}x{width} is smaller than {MIN_FRAME_SIZE}x{MIN_FRAME_SIZE}"
            )));
        }
        if pixels.len() != height * width * 3 {
            return Err(Error::Shape {
                expected: vec![height, width, 3],
                actual: vec![pixels.len()],
            });
        }
        Ok(Frame {
            height,
            width,
            pixels: pixels.into(),
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Result<Self> {
        let pixels = (0..height * width).flat_map(|_| rgb).collect();
        Frame::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Planar `3 x H x W` unit-interval copy.
    pub fn to_chw<T: Scalar>(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.pixels.len()];
        self.write_chw(&mut out);
        out
    }

    pub fn write_chw<T: Scalar>(&self, out: &mut [T]) {
        let hw = self.height * self.width;
        let denom = T::from_f64(255.0);
        for (p, px) in self.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * hw + p] = T::from_f64(f64::from(px[c])) / denom;
            }
        }
    }

    /// Inverse of [`Frame::to_chw`], rounding to the nearest byte.
    pub fn from_chw<T: Scalar>(height: usize, width: usize, chw: &[T]) -> Result<Self> {
        let hw = height * width;
        let mut pixels = vec![0u8; hw * 3];
        for p in 0..hw {
            for c in 0..3 {
                pixels[p * 3 + c] = unit_to_byte(chw[c * hw + p].to_f64());
            }
        }
        Frame::new(height, width, pixels)
    }
}

#[inline]
pub fn byte_to_unit(b: u8) -> f32 {
    f32::from(b) / 255.0
}

#[inline]
pub fn unit_to_byte(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// `k` consecutive frames, newest last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    frames: Vec<Frame>,
}

impl Observation {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::config("observation needs at least one frame"))?;
        let (h, w) = (first.height, first.width);
        if let Some(f) = frames.iter().find(|f| f.height != h || f.width != w) {
            return Err(Error::Shape {
                expected: vec![h, w, 3],
                actual: vec![f.height, f.width, 3],
            });
        }
        Ok(Observation { frames })
    }

    /// `k` copies of one frame, as produced at episode start.
    pub fn repeated(frame: Frame, k: usize) -> Self {
        Observation {
            frames: vec![frame; k.max(1)],
        }
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn newest(&self) -> &Frame {
        self.frames.last().expect("non-empty")
    }

    pub fn stack(&self) -> usize {
        self.frames.len()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    /// Stacked tensor shape `(3k, H, W)`.
    pub fn shape(&self) -> [usize; 3] {
        [3 * self.frames.len(), self.height(), self.width()]
    }

    /// Drops the oldest frame and appends `frame`.
    pub fn push_frame(&self, frame: Frame) -> Self {
        let mut frames: Vec<Frame> = self.frames[1..].to_vec();
        frames.push(frame);
        Observation { frames }
    }

    /// Writes the frame-major `(3k, H, W)` unit-interval tensor into `out`.
    pub fn write_chw<T: Scalar>(&self, out: &mut [T]) {
        let plane = 3 * self.height() * self.width();
        for (f, frame) in self.frames.iter().enumerate() {
            frame.write_chw(&mut out[f * plane..(f + 1) * plane]);
        }
    }
}

/// Continuous action with every component in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Action(Vec<f32>);

impl Action {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::Protocol(format!("action {values:?} outside [-1, 1]")));
        }
        Ok(Action(values))
    }

    /// Clamps each component into bounds.
    pub fn clamped(values: Vec<f32>) -> Self {
        Action(values.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect())
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Observation,
    pub action: Action,
    pub reward: f32,
    pub next_obs: Observation,
    /// True when the successor value must be bootstrapped.
    pub bootstrap: bool,
}
