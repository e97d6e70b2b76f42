//! Distraction sensitivity of the critic and mask statistics.

use crate::agents::{obs_tensor, Agent, Phase};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{Scalar, Tensor};
use crate::types::{Action, Observation};

/// Finite-difference step in unit pixel intensity.
pub const SENSITIVITY_STEP: f64 = 2.0 / 255.0;

/// Perturbations evaluated per call of the value function.
const PROBE_CHUNK: usize = 48;

/// Sensitivity of `value` to each probed pixel of one frame.
///
/// `obs` is a single `(1, C, H, W)` input in `[0, 1]`; `frame` picks which
/// stacked frame is perturbed. For every pixel `(y, x)` each of the frame's
/// three channels is moved by `±h` (clamped to `[0, 1]`) and the central
/// difference quotient is taken over the clamped span; the pixel's value is
/// the largest magnitude over its channels. `value` maps a batch of inputs to
/// one scalar per row.
pub fn pixel_sensitivity<T, F>(value: F, obs: &Tensor<T>, frame: usize, pixels: &[(usize, usize)], h: f64) -> Result<Vec<f64>>
where
    T: Scalar,
    F: Fn(&Tensor<T>) -> Result<Vec<f64>>,
{
    let shape = obs.shape().to_vec();
    if shape.len() != 4 || shape[0] != 1 || shape[1] < 3 * (frame + 1) {
        return Err(Error::Shape {
            expected: vec![1, 3 * (frame + 1), 0, 0],
            actual: shape,
        });
    }
    let (c, ht, wd) = (shape[1], shape[2], shape[3]);
    if let Some(&(y, x)) = pixels.iter().find(|&&(y, x)| y >= ht || x >= wd) {
        return Err(Error::Shape {
            expected: vec![ht, wd],
            actual: vec![y, x],
        });
    }
    let base = obs.row(0);
    let plane = ht * wd;
    let mut out = Vec::with_capacity(pixels.len());
    for chunk in pixels.chunks(PROBE_CHUNK) {
        // Rows: pixel-major, then channel, then (+, −).
        let rows = chunk.len() * 6;
        let mut data = Vec::with_capacity(rows * base.len());
        let mut spans = Vec::with_capacity(chunk.len() * 3);
        for &(y, x) in chunk {
            for ch in 0..3 {
                let idx = (3 * frame + ch) * plane + y * wd + x;
                let v = base[idx].to_f64();
                let (hi, lo) = ((v + h).min(1.0), (v - h).max(0.0));
                spans.push(hi - lo);
                for p in [hi, lo] {
                    let start = data.len();
                    data.extend_from_slice(base);
                    data[start + idx] = T::from_f64(p);
                }
            }
        }
        let batch = Tensor::from_vec(&[rows, c, ht, wd], data)?;
        let q = value(&batch)?;
        if q.len() != rows {
            return Err(Error::Shape {
                expected: vec![rows],
                actual: vec![q.len()],
            });
        }
        for (k, _) in chunk.iter().enumerate() {
            let s = (0..3)
                .map(|ch| {
                    let j = 3 * k + ch;
                    if spans[j] > 0.0 {
                        ((q[2 * j] - q[2 * j + 1]) / spans[j]).abs()
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max);
            out.push(s);
        }
    }
    Ok(out)
}

/// Sensitivity of the agent's `min(Q1, Q2)` at a fixed action to pixels of
/// the newest frame, through the full acting pipeline (crop and mask).
pub fn agent_sensitivity<T: Scalar>(
    agent: &Agent<T>,
    obs: &Observation,
    action: &Action,
    pixels: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let x = obs_tensor::<T>(&[obs])?;
    let value = |batch: &Tensor<T>| -> Result<Vec<f64>> {
        let n = batch.dim(0);
        let input = agent.preprocess(batch, Phase::Act, &mut RngStream::new(0))?;
        let a: Vec<T> = (0..n)
            .flat_map(|_| action.values().iter().map(|&v| T::from_f64(f64::from(v))))
            .collect();
        let a = Tensor::from_vec(&[n, action.dim()], a)?;
        Ok(agent.min_q(&input, &a).into_iter().map(|v| v.to_f64()).collect())
    };
    pixel_sensitivity(value, &x, obs.stack() - 1, pixels, SENSITIVITY_STEP)
}

/// Mean mask value over task pixels and over the background.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskStats {
    /// `None` when no task pixel is visible.
    pub task: Option<f64>,
    pub background: Option<f64>,
}

impl MaskStats {
    /// Means of `mask` split by the row-major `task` flags.
    pub fn from_mask<T: Scalar>(mask: &[T], task: &[bool]) -> Result<Self> {
        if mask.len() != task.len() {
            return Err(Error::Shape {
                expected: vec![task.len()],
                actual: vec![mask.len()],
            });
        }
        let (mut st, mut nt, mut sb, mut nb) = (0.0, 0usize, 0.0, 0usize);
        for (&m, &is_task) in mask.iter().zip(task) {
            if is_task {
                st += m.to_f64();
                nt += 1;
            } else {
                sb += m.to_f64();
                nb += 1;
            }
        }
        let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
        Ok(MaskStats {
            task: mean(st, nt),
            background: mean(sb, nb),
        })
    }

    /// `mean_background / mean_task`, when both exist and the task mean is
    /// positive.
    pub fn ratio(&self) -> Option<f64> {
        match (self.task, self.background) {
            (Some(t), Some(b)) if t > 0.0 => Some(b / t),
            _ => None,
        }
    }
}

/// Mask statistics of the newest frame of `obs`; `None` without a masker.
///
/// `task` flags the pixels of the rendered frame covered by the target disc.
pub fn mask_stats<T: Scalar>(agent: &Agent<T>, obs: &Observation, task: &[bool]) -> Result<Option<MaskStats>> {
    let x = obs_tensor::<T>(&[obs])?;
    let x = agent.augment(&x, Phase::Act, &mut RngStream::new(0))?;
    let Some(masks) = agent.masks(&x)? else {
        return Ok(None);
    };
    let newest = masks.row(masks.dim(0) - 1);
    let (h, w) = agent.input_hw();
    let (rh, rw) = (obs.height(), obs.width());
    if (rh, rw) == (h, w) {
        return MaskStats::from_mask(newest, task).map(Some);
    }
    // A center-cropped input sees the middle of the rendered frame.
    let (oy, ox) = ((rh - h) / 2, (rw - w) / 2);
    let cropped: Vec<bool> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .map(|(y, x)| task[(y + oy) * rw + x + ox])
        .collect();
    MaskStats::from_mask(newest, &cropped).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{Algorithm, AlgorithmSpec};
    use crate::config::HyperParams;
    use crate::nets::{MaskHook, NetConfig};

    fn tiny(algorithm: Algorithm, seed: u64) -> Agent<f64> {
        let spec = AlgorithmSpec::new(algorithm, 16, 16);
        let net = NetConfig {
            in_channels: 6,
            height: 16,
            width: 16,
            action_dim: 2,
            encoder_layers: 2,
            encoder_channels: 4,
            projection_dim: 8,
            hidden_dim: 16,
            masker_channels: 4,
            use_masker: spec.use_masker,
        };
        let hp = HyperParams {
            frame_stack: 2,
            ..HyperParams::default()
        };
        Agent::new(spec, hp, net, &mut RngStream::new(seed)).unwrap()
    }

    fn random_obs(rng: &mut RngStream) -> Tensor<f64> {
        let data = (0..6 * 16 * 16).map(|_| rng.uniform()).collect();
        Tensor::from_vec(&[1, 6, 16, 16], data).unwrap()
    }

    #[test]
    fn input_independent_value_has_zero_sensitivity() {
        let obs = random_obs(&mut RngStream::new(0));
        let s = pixel_sensitivity(|b| Ok(vec![3.5; b.dim(0)]), &obs, 1, &[(0, 0), (7, 9)], SENSITIVITY_STEP).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);
    }

    #[test]
    fn linear_probe_recovers_weights() {
        // Q = Σ w·x over the newest frame; the derivative at every channel
        // of pixel (y, x) is its weight, so the max-abs is the largest |w|.
        let mut rng = RngStream::new(1);
        let obs = random_obs(&mut rng);
        let w: Vec<f64> = (0..3 * 256).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
        let probe = |b: &Tensor<f64>| -> Result<Vec<f64>> {
            Ok((0..b.dim(0))
                .map(|r| b.row(r)[3 * 256..].iter().zip(&w).map(|(x, w)| x * w).sum())
                .collect())
        };
        let pixels: Vec<(usize, usize)> = (0..16).flat_map(|y| (0..16).map(move |x| (y, x))).collect();
        let s = pixel_sensitivity(probe, &obs, 1, &pixels, SENSITIVITY_STEP).unwrap();
        for (i, &(y, x)) in pixels.iter().enumerate() {
            let p = y * 16 + x;
            let expect = (0..3).map(|c| w[c * 256 + p].abs()).fold(0.0, f64::max);
            assert!((s[i] - expect).abs() < 1e-4, "{} vs {expect}", s[i]);
        }
    }

    #[test]
    fn clamped_inputs_use_the_clamped_span() {
        let obs = Tensor::from_vec(&[1, 3, 1, 1], vec![1.0, 0.0, 0.5]).unwrap();
        let probe = |b: &Tensor<f64>| -> Result<Vec<f64>> { Ok((0..b.dim(0)).map(|r| 4.0 * b.row(r)[0]).collect()) };
        assert_eq!(pixel_sensitivity(probe, &obs, 0, &[(0, 0)], 0.1).unwrap(), vec![4.0]);
        assert!(pixel_sensitivity(probe, &obs, 1, &[(0, 0)], 0.1).is_err());
        assert!(pixel_sensitivity(probe, &obs, 0, &[(1, 0)], 0.1).is_err());
    }

    #[test]
    fn zero_mask_blocks_every_pixel() {
        let mut a = tiny(Algorithm::Madi, 2);
        a.mask_hook = MaskHook::ZEROS;
        let mut rng = RngStream::new(3);
        let obs = crate::types::Observation::new(vec![random_frame(&mut rng), random_frame(&mut rng)]).unwrap();
        let action = Action::new(vec![0.3, -0.4]).unwrap();
        let pixels = [(0, 0), (5, 5), (15, 8)];
        assert_eq!(agent_sensitivity(&a, &obs, &action, &pixels).unwrap(), vec![0.0; 3]);
        a.mask_hook = MaskHook::Learned;
        assert!(agent_sensitivity(&a, &obs, &action, &pixels).unwrap().iter().any(|&s| s > 0.0));
    }

    fn random_frame(rng: &mut RngStream) -> crate::types::Frame {
        let px = (0..16 * 16 * 3).map(|_| rng.below(256) as u8).collect();
        crate::types::Frame::new(16, 16, px).unwrap()
    }

    #[test]
    fn mask_stats_of_fresh_and_constant_maskers() {
        let mut a = tiny(Algorithm::Madi, 4);
        let mut rng = RngStream::new(5);
        let obs = crate::types::Observation::new(vec![random_frame(&mut rng), random_frame(&mut rng)]).unwrap();
        let task: Vec<bool> = (0..256).map(|i| i % 7 == 0).collect();
        let s = mask_stats(&a, &obs, &task).unwrap().unwrap();
        for m in [s.task.unwrap(), s.background.unwrap()] {
            assert!((0.45..=0.55).contains(&m), "{m}");
        }
        a.mask_hook = MaskHook::ONES;
        let s = mask_stats(&a, &obs, &task).unwrap().unwrap();
        assert_eq!((s.task, s.background), (Some(1.0), Some(1.0)));
        assert_eq!(mask_stats(&tiny(Algorithm::Sac, 0), &obs, &task).unwrap(), None);
    }

    #[test]
    fn mask_stats_split() {
        let s = MaskStats::from_mask(&[1.0f64, 0.0, 0.5, 0.25], &[true, false, true, false]).unwrap();
        assert_eq!((s.task, s.background), (Some(0.75), Some(0.125)));
        assert_eq!(s.ratio(), Some(0.125 / 0.75));
        let s = MaskStats::from_mask(&[0.5f64], &[false]).unwrap();
        assert_eq!((s.task, s.ratio()), (None, None));
    }
}
