//! Named parameter collections, Adam and target-network EMA.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Ordered map from parameter name to tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T> Default for ParamSet<T> {
    fn default() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces a tensor, keeping first-insertion order.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        let name = name.into();
        match self.index.get(&name) {
            Some(&i) => self.tensors[i] = tensor,
            None => {
                self.index.insert(name.clone(), self.names.len());
                self.names.push(name);
                self.tensors.push(tensor);
            }
        }
    }

    /// Panics on an unknown name; network code only asks for names it created.
    pub fn get(&self, name: &str) -> &Tensor<T> {
        match self.index.get(name) {
            Some(&i) => &self.tensors[i],
            None => panic!("unknown parameter '{name}'"),
        }
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor<T> {
        match self.index.get(name) {
            Some(&i) => &mut self.tensors[i],
            None => panic!("unknown parameter '{name}'"),
        }
    }

    pub fn try_get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.tensors.iter_mut()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            index: self.index.clone(),
        }
    }

    pub fn zero(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.fill(T::zero()));
    }

    pub fn sq_norm(&self) -> T {
        self.tensors.iter().map(Tensor::sq_norm).sum()
    }

    pub fn is_all_zero(&self) -> bool {
        self.tensors.iter().all(|t| t.data().iter().all(|x| x.is_zero()))
    }

    /// Checks identical names, order and shapes.
    pub fn check_compatible(&self, other: &ParamSet<T>) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Params(format!(
                "names differ: {:?} vs {:?}",
                self.names, other.names
            )));
        }
        for ((n, a), b) in self.names.iter().zip(&self.tensors).zip(&other.tensors) {
            if a.shape() != b.shape() {
                return Err(Error::Params(format!(
                    "{n}: shape {:?} vs {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }

    /// All scalars in parameter order.
    pub fn flatten(&self) -> Vec<T> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, i: usize, value: T) {
        let mut i = i;
        for t in &mut self.tensors {
            if i < t.len() {
                t.data_mut()[i] = value;
                return;
            }
            i -= t.len();
        }
        panic!("flat index out of range");
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Copy with every name prefixed by `prefix/`.
    pub fn prefixed(&self, prefix: &str) -> Vec<(String, Tensor<T>)> {
        self.iter()
            .map(|(n, t)| (format!("{prefix}/{n}"), t.clone()))
            .collect()
    }
}

/// `target ← (1 − τ)·target + τ·online`, tensor by tensor.
pub fn ema_update<T: Scalar>(online: &ParamSet<T>, target: &mut ParamSet<T>, tau: f64) -> Result<()> {
    online.check_compatible(target)?;
    let tau_t = T::from_f64(tau);
    let keep = T::from_f64(1.0 - tau);
    for (tgt, src) in target.tensors.iter_mut().zip(&online.tensors) {
        for (t, &s) in tgt.data_mut().iter_mut().zip(src.data()) {
            *t = keep * *t + tau_t * s;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
}

/// Bias-corrected Adam over one parameter set.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    cfg: AdamConfig,
    step: u64,
    m: ParamSet<T>,
    v: ParamSet<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig, params: &ParamSet<T>) -> Self {
        Adam {
            cfg,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>) {
        self.step += 1;
        let (b1, b2) = self.cfg.betas;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let lr = T::from_f64(self.cfg.lr / bc1);
        let rbc2 = T::from_f64(1.0 / bc2.sqrt());
        let eps = T::from_f64(self.cfg.eps);
        let (b1, b2) = (T::from_f64(b1), T::from_f64(b2));
        let one = T::one();
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                *p -= lr * *m / (v.sqrt() * rbc2 + eps);
            }
        }
    }
}

/// Adam on a single scalar, used for the log-temperature.
#[derive(Debug, Clone)]
pub struct ScalarAdam {
    cfg: AdamConfig,
    step: u64,
    m: f64,
    v: f64,
}

impl ScalarAdam {
    pub fn new(cfg: AdamConfig) -> Self {
        ScalarAdam { cfg, step: 0, m: 0.0, v: 0.0 }
    }

    pub fn step(&mut self, value: &mut f64, grad: f64) {
        self.step += 1;
        let (b1, b2) = self.cfg.betas;
        self.m = b1 * self.m + (1.0 - b1) * grad;
        self.v = b2 * self.v + (1.0 - b2) * grad * grad;
        let mhat = self.m / (1.0 - b1.powi(self.step as i32));
        let vhat = self.v / (1.0 - b2.powi(self.step as i32));
        *value -= self.cfg.lr * mhat / (vhat.sqrt() + self.cfg.eps);
    }
}
