//! Diagonal Gaussian actor and scalar critic.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::{ForwardCache, Mlp, Parameters};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Gaussian policy: state-dependent mean, state-independent learned
/// `log_std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub net: Mlp,
    pub log_std: Array1<f64>,
}

impl Actor {
    pub fn new<R: Rng>(state_dim: usize, hidden: &[usize], action_dim: usize, rng: &mut R) -> Self {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        Self {
            net: Mlp::new(&sizes, 0.01, rng),
            log_std: Array1::zeros(action_dim),
        }
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    /// `(mean, log_std)` for one state.
    pub fn forward(&self, state: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.net.forward_one(state), self.log_std.to_vec())
    }

    pub fn means(&self, states: ArrayView2<f64>) -> Array2<f64> {
        self.net.forward(states)
    }

    pub fn clamp_log_std(&mut self) {
        self.log_std.mapv_inplace(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
    }

    /// `mean + exp(log_std) ⊙ z` with its log-density.
    pub fn sample<R: Rng>(&self, mean: ArrayView1<f64>, rng: &mut R) -> (Vec<f64>, f64) {
        let action: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = rng.sample(StandardNormal);
                m + ls.exp() * z
            })
            .collect();
        let lp = gaussian_log_prob(&action, mean.as_slice().expect("contiguous"), self.log_std.as_slice().expect("contiguous"));
        (action, lp)
    }

    /// Entropy of the action distribution (state-independent).
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (1.0 + (2.0 * PI).ln())).sum()
    }
}

impl Parameters for Actor {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.net.tensors();
        t.push(self.log_std.as_slice().expect("standard layout"));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.net.tensors_mut();
        t.push(self.log_std.as_slice_mut().expect("standard layout"));
        t
    }
}

/// Log-density of a diagonal Gaussian.
pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), ls)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

/// State-value network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub net: Mlp,
}

impl Critic {
    pub fn new<R: Rng>(state_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self {
            net: Mlp::new(&sizes, 1.0, rng),
        }
    }

    pub fn values(&self, states: ArrayView2<f64>) -> Array1<f64> {
        self.net.forward(states).index_axis_move(Axis(1), 0)
    }

    pub(crate) fn values_cached(&self, states: ArrayView2<f64>) -> (Array1<f64>, ForwardCache) {
        let (out, cache) = self.net.forward_cached(states);
        (out.index_axis_move(Axis(1), 0), cache)
    }
}

impl Parameters for Critic {
    fn tensors(&self) -> Vec<&[f64]> {
        self.net.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.tensors_mut()
    }
}
