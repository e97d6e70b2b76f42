//! Image augmentations over batches of stacked frames.
//!
//! Every function takes a `(B, 3k, H, W)` tensor with values in `[0, 1]`.
//! Random parameters are drawn per sample, in sample order, before any
//! pixel work, so results do not depend on the execution mode.

use crate::envs::{ProceduralVideo, AUGMENT_NAMESPACE};
use crate::error::{Error, Result};
use crate::nets::layers::dims4;
use crate::par::Exec;
use crate::rng::RngStream;
use crate::tensor::{Scalar, Tensor};
use crate::types::{unit_to_byte, Frame};

pub const DEFAULT_OVERLAY_ALPHA: f64 = 0.5;
pub const DEFAULT_SHIFT_RADIUS: usize = 4;
/// Time range of the augmentation stills.
const IMAGE_TIME_RANGE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentKind {
    None,
    Overlay { alpha: f64 },
    Conv,
    Splice { hsv_lo: [f64; 3], hsv_hi: [f64; 3] },
    Shift { radius: usize },
    Crop { height: usize, width: usize },
}

impl AugmentKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AugmentKind::Overlay { alpha } if !(0.0..=1.0).contains(&alpha) => {
                Err(Error::config(format!("overlay alpha {alpha} outside [0, 1]")))
            }
            AugmentKind::Splice { hsv_lo, hsv_hi } if hsv_lo.iter().zip(&hsv_hi).any(|(l, h)| l > h) => {
                Err(Error::config("splice HSV box has lo > hi"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AugmentKind::None => "none",
            AugmentKind::Overlay { .. } => "overlay",
            AugmentKind::Conv => "conv",
            AugmentKind::Splice { .. } => "splice",
            AugmentKind::Shift { .. } => "shift",
            AugmentKind::Crop { .. } => "crop",
        }
    }

    /// Box around the flat gray training background, ±10% in value.
    pub fn default_splice() -> Self {
        let v = 128.0 / 255.0;
        AugmentKind::Splice {
            hsv_lo: [0.0, 0.0, v - 0.1],
            hsv_hi: [360.0, 0.1, v + 0.1],
        }
    }
}

/// One still from the augmentation namespace: a random image index and a
/// random time, both drawn from `rng`.
pub fn augmentation_image(rng: &mut RngStream, height: usize, width: usize) -> Frame {
    let index = rng.next_u64();
    let t = rng.below(IMAGE_TIME_RANGE) as f64;
    let video = ProceduralVideo::new(AUGMENT_NAMESPACE, index);
    let (hf, wf) = (height as f64, width as f64);
    let mut px = Vec::with_capacity(height * width * 3);
    for y in 0..height {
        for x in 0..width {
            for c in 0..3 {
                px.push(unit_to_byte(video.value(x as f64, y as f64, wf, hf, t, c)));
            }
        }
    }
    Frame::new(height, width, px).expect("augmentation image size")
}

/// `(B, 3, H, W)` batch of fresh augmentation images.
pub fn augmentation_batch<T: Scalar>(rng: &mut RngStream, batch: usize, height: usize, width: usize) -> Tensor<T> {
    let plane = 3 * height * width;
    let mut out = Tensor::zeros(&[batch, 3, height, width]);
    for b in 0..batch {
        augmentation_image(rng, height, width).write_chw(&mut out.data_mut()[b * plane..(b + 1) * plane]);
    }
    out
}

fn frames_of<T: Scalar>(obs: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    let (b, c, h, w) = dims4(obs);
    if c % 3 != 0 {
        return Err(Error::Shape {
            expected: vec![3 * c.div_ceil(3)],
            actual: vec![c],
        });
    }
    Ok((b, c / 3, h, w))
}

/// `α·f + (1 − α)·x` for every frame `f`, clamped to `[0, 1]`. `images` is
/// `(B, 3, H, W)` or `(1, 3, H, W)` (broadcast over the batch).
pub fn overlay<T: Scalar>(obs: &Tensor<T>, images: &Tensor<T>, alpha: f64) -> Result<Tensor<T>> {
    let (b, k, h, w) = frames_of(obs)?;
    let (ib, ic, ih, iw) = dims4(images);
    if ic != 3 || ih != h || iw != w || (ib != b && ib != 1) {
        return Err(Error::Shape {
            expected: vec![b, 3, h, w],
            actual: images.shape().to_vec(),
        });
    }
    let a = T::from_f64(alpha);
    let na = T::from_f64(1.0 - alpha);
    let plane = 3 * h * w;
    let mut out = obs.clone();
    for s in 0..b {
        let img = images.row(if ib == 1 { 0 } else { s });
        let row = out.row_mut(s);
        for f in 0..k {
            for (v, &x) in row[f * plane..(f + 1) * plane].iter_mut().zip(img) {
                *v = (a * *v + na * x).max(T::zero()).min(T::one());
            }
        }
    }
    Ok(out)
}

/// 3→3 channel `3 x 3` kernel, indexed `[out][in][ky][kx]`.
pub type ConvKernel = [[[[f64; 3]; 3]; 3]; 3];

pub fn identity_kernel() -> ConvKernel {
    let mut k = [[[[0.0; 3]; 3]; 3]; 3];
    for (c, kc) in k.iter_mut().enumerate() {
        kc[c][1][1] = 1.0;
    }
    k
}

/// Weights i.i.d. `N(0, 1/9)`.
pub fn random_kernel(rng: &mut RngStream) -> ConvKernel {
    let mut k = [[[[0.0; 3]; 3]; 3]; 3];
    for v in k.iter_mut().flatten().flatten().flatten() {
        *v = rng.normal() / 3.0;
    }
    k
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let i = if i < 0 { -i } else { i };
    (if i >= n { 2 * (n - 1) - i } else { i }) as usize
}

/// Applies `kernel` to one `3 x H x W` frame with reflection padding and
/// rescales the result to `[0, 1]` by its min and max.
pub fn conv_frame<T: Scalar>(frame: &[T], h: usize, w: usize, kernel: &ConvKernel, out: &mut [T]) {
    let hw = h * w;
    for (o, ko) in kernel.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (i, ki) in ko.iter().enumerate() {
                    for (ky, row) in ki.iter().enumerate() {
                        let sy = reflect(y as isize + ky as isize - 1, h);
                        for (kx, &kv) in row.iter().enumerate() {
                            let sx = reflect(x as isize + kx as isize - 1, w);
                            acc += kv * frame[i * hw + sy * w + sx].to_f64();
                        }
                    }
                }
                out[o * hw + y * w + x] = T::from_f64(acc);
            }
        }
    }
    let plane = &mut out[..3 * hw];
    let lo = plane.iter().fold(T::infinity(), |m, &v| m.min(v));
    let hi = plane.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let span = hi - lo;
    if span > T::from_f64(1e-12) {
        plane.iter_mut().for_each(|v| *v = (*v - lo) / span);
    } else {
        plane.iter_mut().for_each(|v| *v = v.max(T::zero()).min(T::one()));
    }
}

/// Random convolution with one kernel per observation, shared by its frames.
pub fn random_conv<T: Scalar>(exec: Exec, obs: &Tensor<T>, rng: &mut RngStream) -> Result<Tensor<T>> {
    let (b, _, _, _) = frames_of(obs)?;
    let kernels: Vec<ConvKernel> = (0..b).map(|_| random_kernel(rng)).collect();
    conv_with_kernels(exec, obs, &kernels)
}

pub fn conv_with_kernels<T: Scalar>(exec: Exec, obs: &Tensor<T>, kernels: &[ConvKernel]) -> Result<Tensor<T>> {
    let (b, k, h, w) = frames_of(obs)?;
    assert_eq!(kernels.len(), b, "one kernel per observation");
    let plane = 3 * h * w;
    let mut out = Tensor::zeros(obs.shape());
    exec.for_each_chunk_mut(out.data_mut(), k * plane, |s, row| {
        let src = obs.row(s);
        for f in 0..k {
            conv_frame(&src[f * plane..(f + 1) * plane], h, w, &kernels[s], &mut row[f * plane..(f + 1) * plane]);
        }
    });
    Ok(out)
}

/// HSV of an RGB triple in `[0, 1]`: hue in degrees, saturation and value in `[0, 1]`.
pub fn rgb_to_hsv(r: f64, g: f64, b: f64) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    [h, s, max]
}

/// Replaces pixels whose HSV lies inside `[lo, hi]` by the image pixel.
pub fn splice<T: Scalar>(obs: &Tensor<T>, images: &Tensor<T>, hsv_lo: [f64; 3], hsv_hi: [f64; 3]) -> Result<Tensor<T>> {
    let (b, k, h, w) = frames_of(obs)?;
    let (ib, ic, ih, iw) = dims4(images);
    if ic != 3 || ih != h || iw != w || (ib != b && ib != 1) {
        return Err(Error::Shape {
            expected: vec![b, 3, h, w],
            actual: images.shape().to_vec(),
        });
    }
    let hw = h * w;
    let mut out = obs.clone();
    for s in 0..b {
        let img = images.row(if ib == 1 { 0 } else { s });
        let row = out.row_mut(s);
        for f in 0..k {
            let fr = &mut row[3 * f * hw..3 * (f + 1) * hw];
            for p in 0..hw {
                let hsv = rgb_to_hsv(fr[p].to_f64(), fr[hw + p].to_f64(), fr[2 * hw + p].to_f64());
                let inside = (0..3).all(|i| hsv[i] >= hsv_lo[i] && hsv[i] <= hsv_hi[i]);
                if inside {
                    for c in 0..3 {
                        fr[c * hw + p] = img[c * hw + p];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Translates every frame of one observation by `(dx, dy)` with edge
/// replication: `out(y, x) = in(y − dy, x − dx)`.
pub fn shift_observation<T: Scalar>(src: &[T], channels: usize, h: usize, w: usize, dx: isize, dy: isize, out: &mut [T]) {
    let hw = h * w;
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    for c in 0..channels {
        let (sp, op) = (&src[c * hw..(c + 1) * hw], &mut out[c * hw..(c + 1) * hw]);
        for y in 0..h {
            let sy = clampi(y as isize - dy, h);
            for x in 0..w {
                op[y * w + x] = sp[sy * w + clampi(x as isize - dx, w)];
            }
        }
    }
}

/// Per-observation offsets uniform over `[-radius, radius]^2`.
pub fn draw_shifts(rng: &mut RngStream, batch: usize, radius: usize) -> Vec<(isize, isize)> {
    let r = radius as i64;
    (0..batch)
        .map(|_| {
            let dx = rng.int_inclusive(-r, r) as isize;
            let dy = rng.int_inclusive(-r, r) as isize;
            (dx, dy)
        })
        .collect()
}

pub fn random_shift<T: Scalar>(exec: Exec, obs: &Tensor<T>, radius: usize, rng: &mut RngStream) -> Result<Tensor<T>> {
    let (b, _, h, w) = frames_of(obs)?;
    if 2 * radius >= h.min(w) {
        return Err(Error::config(format!("shift radius {radius} too large for {h}x{w}")));
    }
    let offsets = draw_shifts(rng, b, radius);
    Ok(shift_with(exec, obs, &offsets))
}

pub fn shift_with<T: Scalar>(exec: Exec, obs: &Tensor<T>, offsets: &[(isize, isize)]) -> Tensor<T> {
    let (_, c, h, w) = dims4(obs);
    let mut out = Tensor::zeros(obs.shape());
    exec.for_each_chunk_mut(out.data_mut(), c * h * w, |s, row| {
        let (dx, dy) = offsets[s];
        shift_observation(obs.row(s), c, h, w, dx, dy, row);
    });
    out
}

/// Crops every observation at its own origin `(y0, x0)`.
pub fn crop_with<T: Scalar>(obs: &Tensor<T>, height: usize, width: usize, origins: &[(usize, usize)]) -> Result<Tensor<T>> {
    let (b, c, h, w) = dims4(obs);
    if height > h || width > w {
        return Err(Error::Shape {
            expected: vec![h, w],
            actual: vec![height, width],
        });
    }
    let mut out = Tensor::zeros(&[b, c, height, width]);
    for (s, &(y0, x0)) in origins.iter().enumerate().take(b) {
        let src = obs.row(s);
        let dst = out.row_mut(s);
        for ch in 0..c {
            for y in 0..height {
                let si = ch * h * w + (y0 + y) * w + x0;
                let di = ch * height * width + y * width;
                dst[di..di + width].copy_from_slice(&src[si..si + width]);
            }
        }
    }
    Ok(out)
}

pub fn random_crop<T: Scalar>(obs: &Tensor<T>, height: usize, width: usize, rng: &mut RngStream) -> Result<Tensor<T>> {
    let (b, _, h, w) = dims4(obs);
    if height > h || width > w {
        return Err(Error::Shape {
            expected: vec![h, w],
            actual: vec![height, width],
        });
    }
    let origins: Vec<_> = (0..b)
        .map(|_| (rng.below(h - height + 1), rng.below(w - width + 1)))
        .collect();
    crop_with(obs, height, width, &origins)
}

pub fn center_crop<T: Scalar>(obs: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
    let (b, _, h, w) = dims4(obs);
    if height > h || width > w {
        return Err(Error::Shape {
            expected: vec![h, w],
            actual: vec![height, width],
        });
    }
    crop_with(obs, height, width, &vec![((h - height) / 2, (w - width) / 2); b])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_obs(rng: &mut RngStream, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.uniform()).collect()).unwrap()
    }

    #[test]
    fn image_source_is_deterministic_and_centred() {
        let rng = RngStream::new(0).substream("augment");
        assert_eq!(
            augmentation_image(&mut rng.clone(), 16, 16),
            augmentation_image(&mut rng.clone(), 16, 16)
        );
        let mut r = rng.clone();
        let mut sum = 0.0;
        let mut n = 0.0;
        for _ in 0..1000 {
            let f = augmentation_image(&mut r, 16, 16);
            sum += f.pixels().iter().map(|&p| f64::from(p) / 255.0).sum::<f64>();
            n += f.pixels().len() as f64;
        }
        let mean = sum / n;
        assert!((0.45..=0.55).contains(&mean), "{mean}");
    }

    #[test]
    fn overlay_identities() {
        let mut rng = RngStream::new(1);
        let obs = rand_obs(&mut rng, &[2, 6, 16, 16]);
        let img = rand_obs(&mut rng, &[2, 3, 16, 16]);
        assert_eq!(overlay(&obs, &img, 1.0).unwrap(), obs);
        let all_img = overlay(&obs, &img, 0.0).unwrap();
        for s in 0..2 {
            for f in 0..2 {
                assert_eq!(&all_img.row(s)[f * 768..(f + 1) * 768], img.row(s));
            }
        }
        let a = Tensor::<f64>::full(&[1, 3, 16, 16], 0.2);
        let x = Tensor::full(&[1, 3, 16, 16], 0.6);
        let mid = overlay(&a, &x, 0.5).unwrap();
        assert!(mid.data().iter().all(|&v| (v - 0.4).abs() < 1e-15));
        assert!(overlay(&obs, &Tensor::zeros(&[2, 3, 8, 8]), 0.5).is_err());
    }

    #[test]
    fn conv_identity_and_constant() {
        let mut rng = RngStream::new(2);
        let mut obs = rand_obs(&mut rng, &[1, 3, 16, 16]);
        obs.data_mut()[0] = 0.0;
        obs.data_mut()[1] = 1.0;
        let out = conv_with_kernels(Exec::Sequential, &obs, &[identity_kernel()]).unwrap();
        assert!(out.max_abs_diff(&obs) < 1e-12);

        let flat = Tensor::full(&[1, 6, 16, 16], 0.3);
        let k = random_kernel(&mut rng);
        let out = conv_with_kernels(Exec::Sequential, &flat, &[k]).unwrap();
        for plane in out.data().chunks_exact(256) {
            assert!(plane.iter().all(|&v| v == plane[0]));
        }
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn conv_is_deterministic_and_bounded() {
        let mut rng = RngStream::new(3);
        let obs = rand_obs(&mut rng, &[3, 6, 16, 16]);
        let a = random_conv(Exec::Sequential, &obs, &mut RngStream::new(5)).unwrap();
        let b = random_conv(Exec::Parallel, &obs, &mut RngStream::new(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn splice_identities() {
        let mut rng = RngStream::new(4);
        let obs = rand_obs(&mut rng, &[2, 3, 16, 16]);
        let img = rand_obs(&mut rng, &[2, 3, 16, 16]);
        assert_eq!(splice(&obs, &obs, [0.0; 3], [360.0, 1.0, 1.0]).unwrap(), obs);
        assert_eq!(splice(&obs, &img, [0.0, 2.0, 0.0], [360.0, 3.0, 1.0]).unwrap(), obs);
    }

    #[test]
    fn shift_moves_a_pixel() {
        let mut obs = Tensor::<f64>::zeros(&[1, 3, 16, 16]);
        obs.data_mut()[5 * 16 + 5] = 1.0;
        let out = shift_with(Exec::Sequential, &obs, &[(1, 0)]);
        assert_eq!(out.data()[5 * 16 + 6], 1.0);
        assert_eq!(out.data().iter().sum::<f64>(), 1.0);
        let same = random_shift(Exec::Sequential, &obs, 0, &mut RngStream::new(0)).unwrap();
        assert_eq!(same, obs);
        assert!(random_shift(Exec::Sequential, &obs, 8, &mut RngStream::new(0)).is_err());
    }

    #[test]
    fn shift_replicates_edges() {
        let mut rng = RngStream::new(6);
        let obs = rand_obs(&mut rng, &[1, 3, 16, 16]);
        let out = shift_with(Exec::Sequential, &obs, &[(3, -2)]);
        // Left columns copy column 0; bottom rows copy row 15.
        assert_eq!(out.data()[2 * 16], obs.data()[4 * 16]);
        assert_eq!(out.data()[15 * 16 + 10], obs.data()[15 * 16 + 7]);
    }

    #[test]
    fn crop_identity_and_origin_count() {
        let mut rng = RngStream::new(7);
        let obs = rand_obs(&mut rng, &[2, 6, 20, 20]);
        assert_eq!(random_crop(&obs, 20, 20, &mut rng).unwrap(), obs);
        assert!(random_crop(&obs, 21, 20, &mut rng).is_err());
        // Pixel values encode their position, so the output's first value
        // recovers the origin.
        let big = Tensor::from_vec(&[1, 1, 100, 100], (0..10_000).map(f64::from).collect()).unwrap();
        let mut seen = std::collections::HashSet::new();
        let mut r = RngStream::new(8);
        for _ in 0..5_000 {
            seen.insert(random_crop(&big, 84, 84, &mut r).unwrap().data()[0] as usize);
        }
        assert_eq!(seen.len(), 17 * 17);
        assert!(seen.iter().all(|&o| o / 100 <= 16 && o % 100 <= 16));
        let c = center_crop(&obs, 16, 16).unwrap();
        assert_eq!(c.data()[0], obs.data()[2 * 20 + 2]);
    }

    #[test]
    fn validate_kinds() {
        assert!(AugmentKind::Overlay { alpha: 1.5 }.validate().is_err());
        assert!(AugmentKind::default_splice().validate().is_ok());
    }
}
