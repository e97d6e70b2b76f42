//! Shared convolutional encoder: stride 2 on the first layer, stride 1
//! afterwards, no padding, ReLU between layers.

use crate::par::Exec;
use crate::rng::RngStream;
use crate::tensor::{Scalar, Tensor};

use super::layers::{dims4, relu_backward_inplace, relu_inplace, Conv2d, Init};
use super::params::ParamSet;

#[derive(Debug, Clone)]
pub struct EncoderDef {
    pub convs: Vec<Conv2d>,
    pub height: usize,
    pub width: usize,
    pub exec: Exec,
}

#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    /// Input of every conv layer; entry `i > 0` is the ReLU output of layer `i - 1`.
    inputs: Vec<Tensor<T>>,
    out_shape: Vec<usize>,
}

impl EncoderDef {
    pub fn new(in_channels: usize, channels: usize, layers: usize, height: usize, width: usize) -> Self {
        assert!(layers >= 1, "encoder needs at least one layer");
        let convs = (0..layers)
            .map(|i| {
                let cin = if i == 0 { in_channels } else { channels };
                let stride = if i == 0 { 2 } else { 1 };
                Conv2d::new(&format!("conv{}", i + 1), cin, channels, 3, stride, 0)
            })
            .collect();
        EncoderDef {
            convs,
            height,
            width,
            exec: Exec::default(),
        }
    }

    /// Spatial size after the whole stack, or `None` when it collapses.
    pub fn output_hw(&self) -> Option<(usize, usize)> {
        let (mut h, mut w) = (self.height, self.width);
        for c in &self.convs {
            if h < c.kernel || w < c.kernel {
                return None;
            }
            (h, w) = c.out_hw(h, w);
        }
        Some((h, w))
    }

    pub fn feature_dim(&self) -> usize {
        let (h, w) = self.output_hw().expect("encoder stack larger than the frame");
        self.convs.last().map_or(0, |c| c.out_ch) * h * w
    }

    pub fn num_params(&self) -> usize {
        self.convs.iter().map(Conv2d::num_params).sum()
    }

    pub fn init<T: Scalar>(&self, rng: &mut RngStream) -> ParamSet<T> {
        let mut p = ParamSet::new();
        let last = self.convs.len() - 1;
        for (i, c) in self.convs.iter().enumerate() {
            c.init(&mut p, if i == last { Init::FanIn } else { Init::He }, rng);
        }
        p
    }

    /// `(B, C, H, W) -> (B, feature_dim)`.
    pub fn forward<T: Scalar>(&self, params: &ParamSet<T>, obs: &Tensor<T>) -> (Tensor<T>, EncoderCache<T>) {
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut x = obs.clone();
        let last = self.convs.len() - 1;
        for (i, c) in self.convs.iter().enumerate() {
            let mut y = c.forward(self.exec, params, &x);
            if i < last {
                relu_inplace(&mut y);
            }
            inputs.push(x);
            x = y;
        }
        let out_shape = x.shape().to_vec();
        let n = x.dim(0);
        let flat = x.reshape(&[n, self.feature_dim()]).expect("feature size");
        (flat, EncoderCache { inputs, out_shape })
    }

    /// Returns the gradient on the encoder input when `need_dx`.
    pub fn backward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        cache: &EncoderCache<T>,
        dfeat: &Tensor<T>,
        grads: &mut ParamSet<T>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let mut dy = dfeat.clone().reshape(&cache.out_shape).expect("feature size");
        for i in (0..self.convs.len()).rev() {
            let want = i > 0 || need_dx;
            let dx = self.convs[i].backward(self.exec, params, &cache.inputs[i], &dy, grads, want);
            match dx {
                Some(mut dx) if i > 0 => {
                    relu_backward_inplace(&cache.inputs[i], &mut dx);
                    dy = dx;
                }
                other => return other,
            }
        }
        None
    }

    pub fn check_input<T: Scalar>(&self, obs: &Tensor<T>) -> bool {
        let (_, c, h, w) = dims4(obs);
        c == self.convs[0].in_ch && h == self.height && w == self.width
    }
}
