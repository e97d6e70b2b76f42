//! Twin Q critic with a projection shared by both heads.

use crate::rng::RngStream;
use crate::tensor::{Scalar, Tensor};

use super::actor::{Mlp, MlpCache, Projection, ProjectionCache};
use super::params::ParamSet;

#[derive(Debug, Clone)]
pub struct CriticDef {
    pub projection: Projection,
    pub q1: Mlp,
    pub q2: Mlp,
    pub projection_dim: usize,
    pub action_dim: usize,
}

#[derive(Debug, Clone)]
pub struct CriticOutput<T> {
    pub q1: Vec<T>,
    pub q2: Vec<T>,
    proj: ProjectionCache<T>,
    c1: MlpCache<T>,
    c2: MlpCache<T>,
}

impl<T: Scalar> CriticOutput<T> {
    pub fn min_q(&self) -> Vec<T> {
        self.q1.iter().zip(&self.q2).map(|(a, b)| a.min(*b)).collect()
    }
}

/// Gradients of a critic input.
#[derive(Debug, Clone)]
pub struct CriticInputGrads<T> {
    pub features: Tensor<T>,
    pub action: Tensor<T>,
}

impl CriticDef {
    pub fn new(feature_dim: usize, projection: usize, hidden: usize, action_dim: usize) -> Self {
        CriticDef {
            projection: Projection::new(feature_dim, projection),
            q1: Mlp::new("q1", projection + action_dim, hidden, 1),
            q2: Mlp::new("q2", projection + action_dim, hidden, 1),
            projection_dim: projection,
            action_dim,
        }
    }

    pub fn num_params(&self) -> usize {
        self.projection.num_params() + self.q1.num_params() + self.q2.num_params()
    }

    pub fn init<T: Scalar>(&self, rng: &mut RngStream) -> ParamSet<T> {
        let mut p = ParamSet::new();
        self.projection.init(&mut p, rng);
        self.q1.init(&mut p, rng);
        self.q2.init(&mut p, rng);
        p
    }

    pub fn forward<T: Scalar>(&self, params: &ParamSet<T>, features: &Tensor<T>, action: &Tensor<T>) -> CriticOutput<T> {
        let n = features.dim(0);
        assert_eq!(action.dim(0), n, "critic batch mismatch");
        let (h, proj) = self.projection.forward(params, features);
        let width = self.projection_dim + self.action_dim;
        let mut ha = Tensor::zeros(&[n, width]);
        for i in 0..n {
            let row = ha.row_mut(i);
            row[..self.projection_dim].copy_from_slice(h.row(i));
            row[self.projection_dim..].copy_from_slice(action.row(i));
        }
        let (o1, c1) = self.q1.forward(params, &ha);
        let (o2, c2) = self.q2.forward(params, &ha);
        CriticOutput {
            q1: o1.into_vec(),
            q2: o2.into_vec(),
            proj,
            c1,
            c2,
        }
    }

    /// Backpropagates `dL/dQ1`, `dL/dQ2`. Parameter gradients accumulate into
    /// `grads` when given; the critic stays untouched otherwise.
    pub fn backward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        out: &CriticOutput<T>,
        dq1: &[T],
        dq2: &[T],
        mut grads: Option<&mut ParamSet<T>>,
    ) -> CriticInputGrads<T> {
        let n = dq1.len();
        let d1 = Tensor::from_vec(&[n, 1], dq1.to_vec()).expect("shape");
        let d2 = Tensor::from_vec(&[n, 1], dq2.to_vec()).expect("shape");
        let mut dha = self.q1.backward(params, &out.c1, &d1, grads.as_deref_mut());
        dha.axpy(T::one(), &self.q2.backward(params, &out.c2, &d2, grads.as_deref_mut()));
        let mut dh = Tensor::zeros(&[n, self.projection_dim]);
        let mut da = Tensor::zeros(&[n, self.action_dim]);
        for i in 0..n {
            let row = dha.row(i);
            dh.row_mut(i).copy_from_slice(&row[..self.projection_dim]);
            da.row_mut(i).copy_from_slice(&row[self.projection_dim..]);
        }
        let features = self.projection.backward(params, &out.proj, &dh, grads);
        CriticInputGrads { features, action: da }
    }
}
