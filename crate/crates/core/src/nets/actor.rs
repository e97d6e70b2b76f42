//! Projection head and the tanh-squashed Gaussian actor.

use crate::rng::RngStream;
use crate::tensor::{Scalar, Tensor};

use super::layers::{relu_backward_inplace, relu_inplace, tanh_backward_inplace, tanh_inplace, Init, LayerNorm, LayerNormCache, Linear};
use super::params::ParamSet;

pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Guard inside `log(1 - a^2 + eps)`.
pub const TANH_EPS: f64 = 1e-6;

/// Linear -> LayerNorm -> Tanh.
#[derive(Debug, Clone)]
pub struct Projection {
    pub linear: Linear,
    pub norm: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct ProjectionCache<T> {
    input: Tensor<T>,
    ln: LayerNormCache<T>,
    out: Tensor<T>,
}

impl Projection {
    pub fn new(input: usize, output: usize) -> Self {
        Projection {
            linear: Linear::new("proj", input, output),
            norm: LayerNorm::new("proj_ln", output),
        }
    }

    pub fn num_params(&self) -> usize {
        self.linear.num_params() + self.norm.num_params()
    }

    pub fn init<T: Scalar>(&self, params: &mut ParamSet<T>, rng: &mut RngStream) {
        self.linear.init(params, Init::FanIn, rng);
        self.norm.init(params);
    }

    pub fn forward<T: Scalar>(&self, params: &ParamSet<T>, x: &Tensor<T>) -> (Tensor<T>, ProjectionCache<T>) {
        let z = self.linear.forward(params, x);
        let (mut y, ln) = self.norm.forward(params, &z);
        tanh_inplace(&mut y);
        (
            y.clone(),
            ProjectionCache {
                input: x.clone(),
                ln,
                out: y,
            },
        )
    }

    pub fn backward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        cache: &ProjectionCache<T>,
        dy: &Tensor<T>,
        mut grads: Option<&mut ParamSet<T>>,
    ) -> Tensor<T> {
        let mut d = dy.clone();
        tanh_backward_inplace(&cache.out, &mut d);
        let dz = self.norm.backward(params, &cache.ln, &d, grads.as_deref_mut());
        self.linear.backward(params, &cache.input, &dz, grads)
    }
}

/// A stack of linear layers with ReLU between them.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    /// Input of each layer.
    inputs: Vec<Tensor<T>>,
}

impl Mlp {
    pub fn new(prefix: &str, input: usize, hidden: usize, output: usize) -> Self {
        Mlp {
            layers: vec![
                Linear::new(&format!("{prefix}.fc1"), input, hidden),
                Linear::new(&format!("{prefix}.fc2"), hidden, hidden),
                Linear::new(&format!("{prefix}.fc3"), hidden, output),
            ],
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Linear::num_params).sum()
    }

    pub fn init<T: Scalar>(&self, params: &mut ParamSet<T>, rng: &mut RngStream) {
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            l.init(params, if i == last { Init::FanIn } else { Init::He }, rng);
        }
    }

    pub fn forward<T: Scalar>(&self, params: &ParamSet<T>, x: &Tensor<T>) -> (Tensor<T>, MlpCache<T>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut y = l.forward(params, &h);
            if i < last {
                relu_inplace(&mut y);
            }
            inputs.push(h);
            h = y;
        }
        (h, MlpCache { inputs })
    }

    pub fn backward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        cache: &MlpCache<T>,
        dy: &Tensor<T>,
        mut grads: Option<&mut ParamSet<T>>,
    ) -> Tensor<T> {
        let mut d = dy.clone();
        for i in (0..self.layers.len()).rev() {
            d = self.layers[i].backward(params, &cache.inputs[i], &d, grads.as_deref_mut());
            if i > 0 {
                relu_backward_inplace(&cache.inputs[i], &mut d);
            }
        }
        d
    }
}

#[derive(Debug, Clone)]
pub struct ActorDef {
    pub projection: Projection,
    pub trunk: Mlp,
    pub action_dim: usize,
}

/// Output of one policy evaluation with fixed noise `eps`.
#[derive(Debug, Clone)]
pub struct PolicyOutput<T> {
    pub mean: Tensor<T>,
    pub log_std: Tensor<T>,
    pub action: Tensor<T>,
    /// `(N,)` log-density of `action`.
    pub log_prob: Vec<T>,
    pub eps: Tensor<T>,
    raw_log_std: Tensor<T>,
    proj: ProjectionCache<T>,
    trunk: MlpCache<T>,
}

fn squash_log_std<T: Scalar>(raw: T) -> T {
    let lo = T::from_f64(LOG_STD_MIN);
    let span = T::from_f64(LOG_STD_MAX - LOG_STD_MIN);
    lo + T::from_f64(0.5) * span * (raw.tanh() + T::one())
}

impl ActorDef {
    pub fn new(feature_dim: usize, projection: usize, hidden: usize, action_dim: usize) -> Self {
        ActorDef {
            projection: Projection::new(feature_dim, projection),
            trunk: Mlp::new("trunk", projection, hidden, 2 * action_dim),
            action_dim,
        }
    }

    pub fn num_params(&self) -> usize {
        self.projection.num_params() + self.trunk.num_params()
    }

    pub fn init<T: Scalar>(&self, rng: &mut RngStream) -> ParamSet<T> {
        let mut p = ParamSet::new();
        self.projection.init(&mut p, rng);
        self.trunk.init(&mut p, rng);
        p
    }

    /// Standard normal noise for a batch of `n`.
    pub fn sample_noise<T: Scalar>(&self, n: usize, rng: &mut RngStream) -> Tensor<T> {
        let d = self.action_dim;
        Tensor::from_vec(&[n, d], (0..n * d).map(|_| T::from_f64(rng.normal())).collect()).expect("shape")
    }

    /// Reparameterised sample `a = tanh(mu + sigma * eps)`; `eps = 0` gives
    /// the deterministic action `tanh(mu)`.
    pub fn forward<T: Scalar>(&self, params: &ParamSet<T>, features: &Tensor<T>, eps: Tensor<T>) -> PolicyOutput<T> {
        let n = features.dim(0);
        let d = self.action_dim;
        let (h, proj) = self.projection.forward(params, features);
        let (out, trunk) = self.trunk.forward(params, &h);
        let mut mean = Tensor::zeros(&[n, d]);
        let mut raw = Tensor::zeros(&[n, d]);
        for i in 0..n {
            let row = out.row(i);
            mean.row_mut(i).copy_from_slice(&row[..d]);
            raw.row_mut(i).copy_from_slice(&row[d..]);
        }
        let log_std = raw.map(squash_log_std);
        let mut action = Tensor::zeros(&[n, d]);
        let mut log_prob = vec![T::zero(); n];
        let half_log_2pi = T::from_f64(0.5 * (2.0 * std::f64::consts::PI).ln());
        let guard = T::from_f64(TANH_EPS);
        let half = T::from_f64(0.5);
        for i in 0..n {
            let mut lp = T::zero();
            for j in 0..d {
                let k = i * d + j;
                let (mu, ls, e) = (mean.data()[k], log_std.data()[k], eps.data()[k]);
                let a = (mu + ls.exp() * e).tanh();
                action.data_mut()[k] = a;
                lp += -half * e * e - ls - half_log_2pi - (T::one() - a * a + guard).ln();
            }
            log_prob[i] = lp;
        }
        PolicyOutput {
            mean,
            log_std,
            action,
            log_prob,
            eps,
            raw_log_std: raw,
            proj,
            trunk,
        }
    }

    /// Backpropagates `dL/da` and `dL/dlog_prob` (noise held fixed) into the
    /// actor's parameters and returns `dL/dfeatures`.
    pub fn backward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        out: &PolicyOutput<T>,
        d_action: &Tensor<T>,
        d_log_prob: &[T],
        grads: &mut ParamSet<T>,
    ) -> Tensor<T> {
        let n = out.action.dim(0);
        let d = self.action_dim;
        let guard = T::from_f64(TANH_EPS);
        let two = T::from_f64(2.0);
        let half_span = T::from_f64(0.5 * (LOG_STD_MAX - LOG_STD_MIN));
        let mut dout = Tensor::zeros(&[n, 2 * d]);
        for i in 0..n {
            let gl = d_log_prob[i];
            for j in 0..d {
                let k = i * d + j;
                let a = out.action.data()[k];
                let one_m = T::one() - a * a;
                let du = d_action.data()[k] * one_m + gl * two * a * one_m / (one_m + guard);
                let sigma = out.log_std.data()[k].exp();
                let dls = du * sigma * out.eps.data()[k] - gl;
                let t = out.raw_log_std.data()[k].tanh();
                let row = dout.row_mut(i);
                row[j] = du;
                row[d + j] = dls * half_span * (T::one() - t * t);
            }
        }
        let dh = self.trunk.backward(params, &out.trunk, &dout, Some(grads));
        self.projection.backward(params, &out.proj, &dh, Some(grads))
    }
}
