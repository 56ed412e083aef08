//! Small fully connected action-value network with manual backpropagation.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

/// Affine layer `y = W x + b`, `W` row-major `n_out x n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = self.bias[o];
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            out.push(acc);
        }
    }
}

/// Rectifier between layers, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub layers: Vec<Dense>,
}

/// Gradient buffers shaped like a [`QNetwork`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &QNetwork) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Dense::zeros(l.n_in, l.n_out)).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|g| *g *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|g| g.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `acts[0]` is the input; `acts[i + 1]` the output of layer `i`.
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has an input")
    }
}

impl QNetwork {
    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    /// He-normal weights, zero biases.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        for l in &mut net.layers {
            let normal = Normal::new(0.0, (2.0 / l.n_in as f64).sqrt()).expect("positive std");
            for w in &mut l.weights {
                *w = normal.sample(rng);
            }
        }
        net
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.layers.iter().map(|l| l.n_in).collect();
        if let Some(last) = self.layers.last() {
            s.push(last.n_out);
        }
        s
    }

    pub fn n_inputs(&self) -> usize {
        self.layers.first().map_or(0, |l| l.n_in)
    }

    pub fn n_actions(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flat parameter access in layer order, weights before biases.
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            if index < l.weights.len() {
                return &mut l.weights[index];
            }
            index -= l.weights.len();
            if index < l.bias.len() {
                return &mut l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).acts.pop().expect("trace has an input")
    }

    pub fn trace(&self, x: &[f64]) -> Trace {
        assert_eq!(x.len(), self.n_inputs(), "input width");
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len().saturating_sub(1);
        for (i, l) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(l.n_out);
            l.apply(acts.last().expect("nonempty"), &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        Trace { acts }
    }

    /// Accumulates into `grads` the gradient of `sum_j grad_out[j] * q_j`.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grads: &mut Gradients) {
        let mut delta = grad_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            let input = &trace.acts[i];
            let g = &mut grads.layers[i];
            for o in 0..l.n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * l.n_in..(o + 1) * l.n_in];
                for (gw, xi) in row.iter_mut().zip(input) {
                    *gw += d * xi;
                }
            }
            if i == 0 {
                break;
            }
            let mut prev = vec![0.0; l.n_in];
            for o in 0..l.n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &l.weights[o * l.n_in..(o + 1) * l.n_in];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            // rectifier: gradient passes only where the activation was positive
            for (p, a) in prev.iter_mut().zip(&trace.acts[i]) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}

/// Adam optimiser state for one network.
#[derive(Debug, Clone)]
pub struct Adam {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &QNetwork, step_size: f64) -> Self {
        Self {
            step_size,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn apply(&mut self, net: &mut QNetwork, grads: &Gradients) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Training(format!(
                "non-finite gradient at optimiser step {} (largest finite magnitude {:e})",
                self.t,
                grads.max_abs()
            )));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (li, layer) in net.layers.iter_mut().enumerate() {
            let g = &grads.layers[li];
            let m = &mut self.m.layers[li];
            let v = &mut self.v.layers[li];
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let gs = g.weights.iter().chain(&g.bias);
            let ms = m.weights.iter_mut().chain(m.bias.iter_mut());
            let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
            for (((p, &gi), mi), vi) in params.zip(gs).zip(ms).zip(vs) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                *p -= self.step_size * (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn zero_network_outputs_zero() {
        let net = QNetwork::zeros(&[5, 7, 3]);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5, 9.0]), vec![0.0; 3]);
    }

    #[test]
    fn clone_is_bitwise_identical() {
        let net = QNetwork::random(&[4, 16, 8, 2], &mut stream(2));
        let copy = net.clone();
        let x = [0.3, -1.2, 2.2, 0.0];
        let (a, b) = (net.forward(&x), copy.forward(&x));
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn forward_matches_straight_line_reference() {
        let mut rng = stream(11);
        let net = QNetwork::random(&[3, 4, 2], &mut rng);
        let x = [0.7, -0.4, 1.9];
        let (l0, l1) = (&net.layers[0], &net.layers[1]);
        let mut h = [0.0; 4];
        for o in 0..4 {
            let z = l0.weights[o * 3] * x[0] + l0.weights[o * 3 + 1] * x[1] + l0.weights[o * 3 + 2] * x[2] + l0.bias[o];
            h[o] = if z > 0.0 { z } else { 0.0 };
        }
        let q0 = l1.weights[0] * h[0] + l1.weights[1] * h[1] + l1.weights[2] * h[2] + l1.weights[3] * h[3] + l1.bias[0];
        let q1 = l1.weights[4] * h[0] + l1.weights[5] * h[1] + l1.weights[6] * h[2] + l1.weights[7] * h[3] + l1.bias[1];
        let out = net.forward(&x);
        assert!((out[0] - q0).abs() < 1e-9 && (out[1] - q1).abs() < 1e-9);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut net = QNetwork::zeros(&[1, 1]);
        let mut adam = Adam::new(&net, 1e-3);
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].bias[0] = f64::NAN;
        assert!(matches!(adam.apply(&mut net, &g), Err(Error::Training(_))));
    }
}
