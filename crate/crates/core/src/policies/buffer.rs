use rand::Rng;

use crate::error::{check_finite, check_len, Error, Result};

/// Finite replay set of states, sampled uniformly with replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBuffer {
    states: Vec<Vec<f64>>,
    state_dim: usize,
}

impl StateBuffer {
    pub fn new(states: Vec<Vec<f64>>) -> Result<Self> {
        let state_dim = states
            .first()
            .ok_or_else(|| Error::Invalid("state buffer must not be empty".into()))?
            .len();
        for s in &states {
            check_len("buffer state", state_dim, s.len())?;
            check_finite("buffer state", s)?;
        }
        Ok(Self { states, state_dim })
    }

    /// A single all-zero state.
    pub fn unit(state_dim: usize) -> Self {
        Self {
            states: vec![vec![0.0; state_dim]],
            state_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.states[i]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &[f64] {
        if self.states.len() == 1 {
            return &self.states[0];
        }
        &self.states[rng.random_range(0..self.states.len())]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn validation() {
        assert!(StateBuffer::new(vec![]).is_err());
        assert!(StateBuffer::new(vec![vec![0.0], vec![0.0, 1.0]]).is_err());
        assert!(StateBuffer::new(vec![vec![f64::INFINITY]]).is_err());
        assert_eq!(StateBuffer::unit(3).get(0), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn uniform_sampling_hits_every_state() {
        let b = StateBuffer::new(vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let mut rng = rng_from_seed(1);
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[b.sample(&mut rng)[0] as usize] += 1;
        }
        assert!(
            counts.iter().all(|c| (*c as f64 - 10_000.0).abs() < 400.0),
            "{counts:?}"
        );
    }
}
