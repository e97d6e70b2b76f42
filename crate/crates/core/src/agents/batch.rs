use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use crate::types::{Observation, Transition};

/// Replay samples as float tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    /// `(B, 3k, H, W)` in `[0, 1]`.
    pub obs: Tensor<T>,
    /// `(B, d)`.
    pub action: Tensor<T>,
    pub reward: Vec<T>,
    pub next_obs: Tensor<T>,
    pub bootstrap: Vec<bool>,
}

pub fn obs_tensor<T: Scalar>(observations: &[&Observation]) -> Result<Tensor<T>> {
    let first = observations.first().ok_or(Error::InsufficientData {
        requested: 1,
        available: 0,
    })?;
    let [c, h, w] = first.shape();
    let plane = c * h * w;
    let mut t = Tensor::zeros(&[observations.len(), c, h, w]);
    for (i, o) in observations.iter().enumerate() {
        if o.shape() != [c, h, w] {
            return Err(Error::Shape {
                expected: vec![c, h, w],
                actual: o.shape().to_vec(),
            });
        }
        o.write_chw(&mut t.data_mut()[i * plane..(i + 1) * plane]);
    }
    Ok(t)
}

impl<T: Scalar> Batch<T> {
    pub fn from_transitions(items: &[&Transition]) -> Result<Self> {
        let obs = obs_tensor(&items.iter().map(|t| &t.obs).collect::<Vec<_>>())?;
        let next_obs = obs_tensor(&items.iter().map(|t| &t.next_obs).collect::<Vec<_>>())?;
        let d = items[0].action.dim();
        let mut action = Tensor::zeros(&[items.len(), d]);
        for (i, t) in items.iter().enumerate() {
            if t.action.dim() != d {
                return Err(Error::Shape {
                    expected: vec![d],
                    actual: vec![t.action.dim()],
                });
            }
            for (a, &v) in action.row_mut(i).iter_mut().zip(t.action.values()) {
                *a = T::from_f64(f64::from(v));
            }
        }
        Ok(Batch {
            obs,
            action,
            reward: items.iter().map(|t| T::from_f64(f64::from(t.reward))).collect(),
            next_obs,
            bootstrap: items.iter().map(|t| t.bootstrap).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> Batch<U> {
        Batch {
            obs: self.obs.cast(),
            action: self.action.cast(),
            reward: self.reward.iter().map(|&r| U::from_f64(r.to_f64())).collect(),
            next_obs: self.next_obs.cast(),
            bootstrap: self.bootstrap.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Action, Frame};

    #[test]
    fn converts_bytes_to_unit_floats() {
        let f = Frame::filled(16, 16, [255, 0, 51]).unwrap();
        let o = Observation::repeated(f, 2);
        let t = Transition {
            obs: o.clone(),
            action: Action::new(vec![0.5, -1.0]).unwrap(),
            reward: 2.5,
            next_obs: o,
            bootstrap: true,
        };
        let b = Batch::<f32>::from_transitions(&[&t, &t]).unwrap();
        assert_eq!(b.obs.shape(), &[2, 6, 16, 16]);
        assert_eq!(b.obs.data()[0], 1.0);
        assert_eq!(b.obs.data()[256], 0.0);
        assert_eq!(b.obs.data()[512], 0.2);
        assert_eq!(b.action.data(), &[0.5, -1.0, 0.5, -1.0]);
        assert_eq!(b.reward, vec![2.5, 2.5]);
    }
}
