//! Fully connected ReLU networks with hand-written backpropagation and Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Flat access to every parameter tensor, in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&values[offset..offset + t.len()]);
            offset += t.len();
        }
        assert_eq!(offset, values.len(), "parameter count mismatch");
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// `y = x W + b`, with `W` stored `n_in × n_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// Uniform `±1/√fan_in` weights scaled by `gain`, zero bias.
    pub fn init<R: Rng>(n_in: usize, n_out: usize, gain: f64, rng: &mut R) -> Self {
        let bound = gain / (n_in as f64).sqrt();
        let weight = Array2::from_shape_fn((n_in, n_out), |_| rng.random_range(-bound..=bound));
        Self {
            weight,
            bias: Array1::zeros(n_out),
        }
    }

    pub fn n_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn n_out(&self) -> usize {
        self.weight.ncols()
    }
}

/// ReLU on every hidden layer, linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Layer inputs kept for the backward pass.
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// `sizes = [input, hidden..., output]`; the last layer's init is scaled
    /// by `output_gain`.
    pub fn new<R: Rng>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least an input and an output size");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::init(w[0], w[1], if i == last { output_gain } else { 1.0 }, rng))
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").n_out()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Dense::n_out));
        s
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, ForwardCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(h);
            h = z;
        }
        (h, ForwardCache { inputs })
    }

    /// Single-sample forward pass.
    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        // a 1×n matrix, so the product runs through the blocked matrix kernel
        // instead of a strided vector-matrix loop
        let mut h = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        h.into_raw_vec_and_offset().0
    }

    /// Gradients of a loss with respect to every tensor, given `dL/d(output)`.
    /// Order matches [`Parameters::tensors`].
    pub fn backward(&self, cache: &ForwardCache, grad_out: Array2<f64>) -> Vec<Vec<f64>> {
        let n = self.layers.len();
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); 2 * n];
        let mut g = grad_out;
        for i in (0..n).rev() {
            let input = &cache.inputs[i];
            let gw = input.t().dot(&g);
            let gb = g.sum_axis(Axis(0));
            if i > 0 {
                let mut prev = g.dot(&self.layers[i].weight.t());
                // ReLU mask: the stored input is the post-activation value
                ndarray::Zip::from(&mut prev)
                    .and(input)
                    .for_each(|p, &a| {
                        if a <= 0.0 {
                            *p = 0.0;
                        }
                    });
                g = prev;
            }
            grads[2 * i] = gw.iter().copied().collect();
            grads[2 * i + 1] = gb.to_vec();
        }
        grads
    }
}

impl Parameters for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<P: Parameters>(params: &P, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Descent step: `params -= lr · m̂ / (√v̂ + ε)`.
    pub fn update<P: Parameters>(&mut self, params: &mut P, grads: &[Vec<f64>]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_and_flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::new(&[3, 4, 4, 2], 0.01, &mut rng);
        assert_eq!(net.sizes(), vec![3, 4, 4, 2]);
        assert_eq!(net.param_count(), 3 * 4 + 4 + 4 * 4 + 4 + 4 * 2 + 2);
        let flat = net.flat();
        let mut other = net.clone();
        other.set_flat(&vec![0.0; flat.len()]);
        assert!(other.flat().iter().all(|x| *x == 0.0));
        net.set_flat(&flat);
        assert_eq!(net.flat(), flat);
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::new(&[2, 3, 2], 1.0, &mut rng);
        let n = net.param_count();
        net.set_flat(&vec![0.0; n]);
        net.layers[1].bias = array![0.5, -1.0];
        let y = net.forward(array![[1.0, 2.0]].view());
        assert_eq!(y, array![[0.5, -1.0]]);
        assert_eq!(net.forward_one(&[3.0, 4.0]), vec![0.5, -1.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::new(&[1, 1], 1.0, &mut rng);
        let before = net.flat();
        let mut adam = Adam::new(&net, 0.1);
        adam.update(&mut net, &[vec![2.0], vec![-3.0]]);
        let after = net.flat();
        assert!((before[0] - after[0] - 0.1).abs() < 1e-6);
        assert!((after[1] - before[1] - 0.1).abs() < 1e-6);
    }
}
