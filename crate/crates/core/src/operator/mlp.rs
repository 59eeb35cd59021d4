//! Fully connected networks with hand-written backpropagation.
//!
//! Layer `l` maps `a_l -> sigma(a_l W_l + b_l)` with `W_l` stored `in x out`,
//! so a batch is a row-major `batch x in` matrix. The last layer is affine.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    /// Identity; used by gradient checks on purely affine networks.
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
            Activation::Linear => v,
        }
    }

    /// Derivative expressed through the activated value.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Array2::zeros((input, output)),
            b: Array1::zeros(output),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let w = Array2::from_shape_fn((input, output), |_| rng.gen_range(-limit..limit));
        Self {
            w,
            b: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

/// Activations kept by a training forward pass; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct MlpCache {
    acts: Vec<Array2<f64>>,
}

impl Mlp {
    /// `widths = [in, hidden.., out]`.
    pub fn new<R: Rng>(widths: &[usize], activation: Activation, rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let layers = widths
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], rng))
            .collect();
        Self { layers, activation }
    }

    pub fn zeros(widths: &[usize], activation: Activation) -> Self {
        let layers = widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self { layers, activation }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::output_dim))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn layer_forward(&self, idx: usize, a: ArrayView2<f64>) -> Array2<f64> {
        let layer = &self.layers[idx];
        let mut z = a.dot(&layer.w);
        z += &layer.b;
        if idx + 1 < self.layers.len() {
            let act = self.activation;
            z.mapv_inplace(|v| act.apply(v));
        }
        z
    }

    /// Inference on a batch.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = self.layer_forward(0, x);
        for idx in 1..self.layers.len() {
            a = self.layer_forward(idx, a.view());
        }
        a
    }

    /// Forward pass that keeps every activation for [`Mlp::backward`].
    pub fn forward_train(&self, x: ArrayView2<f64>) -> (Array2<f64>, MlpCache) {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for idx in 0..self.layers.len() {
            let next = self.layer_forward(idx, acts[idx].view());
            acts.push(next);
        }
        let out = acts.pop().expect("at least one layer");
        (out, MlpCache { acts })
    }

    /// Accumulate parameter gradients given `d loss / d output`.
    pub fn backward(&self, cache: &MlpCache, d_out: Array2<f64>, grads: &mut [Dense]) {
        let n = self.layers.len();
        let mut delta = d_out;
        for idx in (0..n).rev() {
            let input = &cache.acts[idx];
            grads[idx].w += &input.t().dot(&delta);
            grads[idx].b += &delta.sum_axis(Axis(0));
            if idx == 0 {
                break;
            }
            let mut d_prev = delta.dot(&self.layers[idx].w.t());
            let act = self.activation;
            // acts[idx] is the activated output of layer idx - 1
            ndarray::Zip::from(&mut d_prev)
                .and(&cache.acts[idx])
                .for_each(|d, &a| *d *= act.derivative_from_output(a));
            delta = d_prev;
        }
    }

    pub fn zero_grads(&self) -> Vec<Dense> {
        self.layers
            .iter()
            .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn affine_forward() {
        let mut m = Mlp::zeros(&[2, 1], Activation::Tanh);
        m.layers[0].w = array![[2.0], [-1.0]];
        m.layers[0].b = array![0.5];
        let out = m.forward(array![[1.0, 3.0], [0.0, 0.0]].view());
        assert_eq!(out, array![[-0.5], [0.5]]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for act in [Activation::Tanh, Activation::Linear] {
            let mut m = Mlp::new(&[3, 5, 4, 2], act, &mut rng);
            let x = Array2::from_shape_fn((6, 3), |_| rng.gen_range(-1.0..1.0));
            let target = Array2::from_shape_fn((6, 2), |_| rng.gen_range(-1.0..1.0));
            let loss = |m: &Mlp| {
                let out = m.forward(x.view());
                (&out - &target).mapv(|v| v * v).sum() * 0.5
            };
            let (out, cache) = m.forward_train(x.view());
            let mut grads = m.zero_grads();
            m.backward(&cache, &out - &target, &mut grads);
            let eps = 1e-6;
            for l in 0..m.layers.len() {
                for idx in 0..m.layers[l].w.len() {
                    let (r, c) = (idx / m.layers[l].w.ncols(), idx % m.layers[l].w.ncols());
                    let orig = m.layers[l].w[[r, c]];
                    m.layers[l].w[[r, c]] = orig + eps;
                    let up = loss(&m);
                    m.layers[l].w[[r, c]] = orig - eps;
                    let down = loss(&m);
                    m.layers[l].w[[r, c]] = orig;
                    let fd = (up - down) / (2.0 * eps);
                    let an = grads[l].w[[r, c]];
                    assert!((fd - an).abs() <= 1e-7 * (1.0 + an.abs()), "{act:?} {fd} {an}");
                }
            }
        }
    }
}
