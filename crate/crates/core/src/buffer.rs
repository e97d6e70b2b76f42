//! Uniform replay buffer with ring overwrite.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::Transition;

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_shape: [usize; 3],
    action_dim: usize,
    items: Vec<Transition>,
    next: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_shape: [usize; 3], action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be > 0"));
        }
        Ok(ReplayBuffer {
            capacity,
            obs_shape,
            action_dim,
            items: Vec::new(),
            next: 0,
            pushed: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total number of pushes since creation.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn obs_shape(&self) -> [usize; 3] {
        self.obs_shape
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        for shape in [t.obs.shape(), t.next_obs.shape()] {
            if shape != self.obs_shape {
                return Err(Error::Shape {
                    expected: self.obs_shape.to_vec(),
                    actual: shape.to_vec(),
                });
            }
        }
        if t.action.dim() != self.action_dim {
            return Err(Error::Shape {
                expected: vec![self.action_dim],
                actual: vec![t.action.dim()],
            });
        }
        if !t.reward.is_finite() {
            return Err(Error::Protocol(format!("non-finite reward {}", t.reward)));
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        self.pushed += 1;
        Ok(())
    }

    /// Stored transitions, oldest first.
    pub fn iter_ordered(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices(&self, n: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
        if n == 0 || n > self.items.len() {
            return Err(Error::InsufficientData {
                requested: n,
                available: self.items.len(),
            });
        }
        Ok((0..n).map(|_| rng.below(self.items.len())).collect())
    }

    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Action, Frame, Observation};

    fn transition(tag: f32, size: usize) -> Transition {
        let f = Frame::filled(size, size, [0, 0, 0]).unwrap();
        let obs = Observation::repeated(f, 3);
        Transition {
            obs: obs.clone(),
            action: Action::new(vec![0.0, 0.0]).unwrap(),
            reward: tag,
            next_obs: obs,
            bootstrap: true,
        }
    }

    fn rewards(b: &ReplayBuffer) -> Vec<f32> {
        b.iter_ordered().map(|t| t.reward).collect()
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(2, [9, 16, 16], 2).unwrap();
        b.push(transition(1.0, 16)).unwrap();
        assert_eq!(b.len(), 1);
        b.push(transition(2.0, 16)).unwrap();
        b.push(transition(3.0, 16)).unwrap();
        assert_eq!(rewards(&b), vec![2.0, 3.0]);
    }

    #[test]
    fn rejects_shape_mismatch_and_zero_capacity() {
        let mut b = ReplayBuffer::new(4, [9, 16, 16], 2).unwrap();
        assert!(matches!(b.push(transition(0.0, 20)), Err(Error::Shape { .. })));
        assert!(ReplayBuffer::new(0, [9, 16, 16], 2).is_err());
    }

    #[test]
    fn sampling_errors_and_determinism() {
        let mut b = ReplayBuffer::new(8, [9, 16, 16], 2).unwrap();
        let mut rng = RngStream::new(3);
        assert!(matches!(
            b.sample(1, &mut rng),
            Err(Error::InsufficientData { .. })
        ));
        b.push(transition(5.0, 16)).unwrap();
        assert_eq!(b.sample(1, &mut rng).unwrap()[0].reward, 5.0);
        assert!(b.sample(2, &mut rng).is_err());
        for i in 0..7 {
            b.push(transition(i as f32, 16)).unwrap();
        }
        let r = RngStream::new(11);
        let a = b.sample_indices(8, &mut r.clone()).unwrap();
        let c = b.sample_indices(8, &mut r.clone()).unwrap();
        assert_eq!(a, c);
    }
}
