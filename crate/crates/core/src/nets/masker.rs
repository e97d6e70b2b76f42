//! The Masker: a three-layer per-frame ConvNet producing a soft mask in
//! `(0, 1)`, and the batched mask application over stacked frames.

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::rng::RngStream;
use crate::tensor::{Scalar, Tensor};

use super::layers::{dims4, relu_backward_inplace, relu_inplace, sigmoid, Conv2d, Init};
use super::params::ParamSet;

/// Scale applied to the output layer at initialisation so the first masks
/// sit at `sigmoid(≈0) ≈ 0.5`.
pub const OUTPUT_INIT_SCALE: f64 = 1e-4;

/// Replaces the learned mask; used to check baseline degeneracy and routing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskHook {
    Learned,
    Constant(f64),
}

impl MaskHook {
    pub const ONES: MaskHook = MaskHook::Constant(1.0);
    pub const ZEROS: MaskHook = MaskHook::Constant(0.0);
}

#[derive(Debug, Clone)]
pub struct MaskerDef {
    pub convs: [Conv2d; 3],
    pub exec: Exec,
}

#[derive(Debug, Clone)]
pub struct MaskerCache<T> {
    input: Tensor<T>,
    h1: Tensor<T>,
    h2: Tensor<T>,
}

impl MaskerDef {
    pub fn new(hidden: usize) -> Self {
        MaskerDef {
            convs: [
                Conv2d::new("conv1", 3, hidden, 3, 1, 1),
                Conv2d::new("conv2", hidden, hidden, 3, 1, 1),
                Conv2d::new("conv3", hidden, 1, 3, 1, 1),
            ],
            exec: Exec::default(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.convs.iter().map(Conv2d::num_params).sum()
    }

    pub fn init<T: Scalar>(&self, rng: &mut RngStream) -> ParamSet<T> {
        let mut p = ParamSet::new();
        self.convs[0].init(&mut p, Init::He, rng);
        self.convs[1].init(&mut p, Init::He, rng);
        self.convs[2].init(&mut p, Init::Scaled(OUTPUT_INIT_SCALE), rng);
        p
    }

    /// `(M, 3, H, W) -> (M, 1, H, W)` masks.
    pub fn forward<T: Scalar>(&self, params: &ParamSet<T>, frames: &Tensor<T>) -> (Tensor<T>, MaskerCache<T>) {
        let mut h1 = self.convs[0].forward(self.exec, params, frames);
        relu_inplace(&mut h1);
        let mut h2 = self.convs[1].forward(self.exec, params, &h1);
        relu_inplace(&mut h2);
        let mut m = self.convs[2].forward(self.exec, params, &h2);
        m.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        (
            m,
            MaskerCache {
                input: frames.clone(),
                h1,
                h2,
            },
        )
    }

    pub fn backward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        cache: &MaskerCache<T>,
        mask: &Tensor<T>,
        dmask: &Tensor<T>,
        grads: &mut ParamSet<T>,
    ) {
        let mut dz = dmask.clone();
        for (d, &m) in dz.data_mut().iter_mut().zip(mask.data()) {
            *d *= m * (T::one() - m);
        }
        let mut dh2 = self.convs[2]
            .backward(self.exec, params, &cache.h2, &dz, grads, true)
            .expect("dx requested");
        relu_backward_inplace(&cache.h2, &mut dh2);
        let mut dh1 = self.convs[1]
            .backward(self.exec, params, &cache.h1, &dh2, grads, true)
            .expect("dx requested");
        relu_backward_inplace(&cache.h1, &mut dh1);
        self.convs[0].backward(self.exec, params, &cache.input, &dh1, grads, false);
    }
}

/// Everything the backward pass of [`apply_mask`] needs.
#[derive(Debug, Clone)]
pub struct AppliedMask<T> {
    pub input: Tensor<T>,
    /// `(kB, 1, H, W)`, frame-major: row `f * B + b` is frame `f` of sample `b`.
    pub masks: Tensor<T>,
    cache: Option<MaskerCache<T>>,
}

impl<T: Scalar> AppliedMask<T> {
    /// Mask of frame `f` of sample `b`, `H x W`.
    pub fn mask_of(&self, b: usize, f: usize) -> &[T] {
        let batch = self.input.dim(0);
        self.masks.row(f * batch + b)
    }
}

fn check_channels<T: Scalar>(obs: &Tensor<T>) -> Result<usize> {
    let (_, c, _, _) = dims4(obs);
    if c % 3 != 0 {
        return Err(Error::Shape {
            expected: vec![3 * (c / 3 + 1)],
            actual: vec![c],
        });
    }
    Ok(c / 3)
}

/// Splits `(B, 3k, H, W)` into `(kB, 3, H, W)`, frame-major.
pub fn frames_to_batch<T: Scalar>(obs: &Tensor<T>) -> Result<Tensor<T>> {
    let k = check_channels(obs)?;
    let (b, _, h, w) = dims4(obs);
    let plane = 3 * h * w;
    let mut out = Tensor::zeros(&[k * b, 3, h, w]);
    for f in 0..k {
        for s in 0..b {
            let src = &obs.row(s)[f * plane..(f + 1) * plane];
            out.row_mut(f * b + s).copy_from_slice(src);
        }
    }
    Ok(out)
}

/// Multiplies each stacked frame by its mask using one Masker forward pass
/// over all `k·B` frames.
pub fn apply_mask<T: Scalar>(
    def: &MaskerDef,
    params: &ParamSet<T>,
    obs: &Tensor<T>,
    hook: MaskHook,
) -> Result<(Tensor<T>, AppliedMask<T>)> {
    let k = check_channels(obs)?;
    let (b, _, h, w) = dims4(obs);
    let (masks, cache) = match hook {
        MaskHook::Learned => {
            let frames = frames_to_batch(obs)?;
            let (m, c) = def.forward(params, &frames);
            (m, Some(c))
        }
        MaskHook::Constant(v) => (Tensor::full(&[k * b, 1, h, w], T::from_f64(v)), None),
    };
    let hw = h * w;
    let mut out = obs.clone();
    for s in 0..b {
        let row = out.row_mut(s);
        for f in 0..k {
            let m = &masks.data()[(f * b + s) * hw..(f * b + s + 1) * hw];
            for c in 0..3 {
                let plane = &mut row[(3 * f + c) * hw..(3 * f + c + 1) * hw];
                for (v, &mv) in plane.iter_mut().zip(m) {
                    *v *= mv;
                }
            }
        }
    }
    Ok((
        out,
        AppliedMask {
            input: obs.clone(),
            masks,
            cache,
        },
    ))
}

/// Backpropagates a gradient on the masked observation into the Masker.
/// A constant hook has no parameters and contributes nothing.
pub fn apply_mask_backward<T: Scalar>(
    def: &MaskerDef,
    params: &ParamSet<T>,
    applied: &AppliedMask<T>,
    dout: &Tensor<T>,
    grads: &mut ParamSet<T>,
) {
    let Some(cache) = &applied.cache else {
        return;
    };
    let (b, c, h, w) = dims4(&applied.input);
    let k = c / 3;
    let hw = h * w;
    let mut dmask = Tensor::zeros(applied.masks.shape());
    for s in 0..b {
        let x = applied.input.row(s);
        let d = dout.row(s);
        for f in 0..k {
            let dm = &mut dmask.data_mut()[(f * b + s) * hw..(f * b + s + 1) * hw];
            for ch in 0..3 {
                let off = (3 * f + ch) * hw;
                for p in 0..hw {
                    dm[p] += d[off + p] * x[off + p];
                }
            }
        }
    }
    def.backward(params, cache, &applied.masks, &dmask, grads);
}

/// Mask values scaled to bytes for PGM export.
pub fn mask_to_bytes<T: Scalar>(mask: &[T]) -> Vec<u8> {
    mask.iter()
        .map(|&m| (m.to_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}
