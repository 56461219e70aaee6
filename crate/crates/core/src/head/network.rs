//! Dense layers with closed-form softmax cross-entropy gradients.

use rand::Rng;

/// `out = W x + b` with `W` stored row-major as `[out][inp]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub out: usize,
    pub inp: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self {
            out,
            inp,
            weight: vec![0.0; out * inp],
            bias: vec![0.0; out],
        }
    }

    /// `U(-1/sqrt(inp), 1/sqrt(inp))` for weights and biases.
    pub fn uniform(out: usize, inp: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inp as f64).sqrt();
        let mut draw = || rng.random_range(-bound..bound);
        let weight = (0..out * inp).map(|_| draw()).collect();
        let bias = (0..out).map(|_| draw()).collect();
        Self {
            out,
            inp,
            weight,
            bias,
        }
    }

    fn forward(&self, x: &[f64], y: &mut [f64]) {
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.weight[o * self.inp..(o + 1) * self.inp];
            *yo = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    // grad += dy x^T; returns nothing, dx is computed separately.
    fn accumulate(&self, grad: &mut Dense, x: &[f64], dy: &[f64]) {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let row = &mut grad.weight[o * self.inp..(o + 1) * self.inp];
            for (w, v) in row.iter_mut().zip(x) {
                *w += g * v;
            }
        }
    }

    fn backward_input(&self, dy: &[f64], dx: &mut [f64]) {
        dx.fill(0.0);
        for (o, &g) in dy.iter().enumerate() {
            let row = &self.weight[o * self.inp..(o + 1) * self.inp];
            for (d, w) in dx.iter_mut().zip(row) {
                *d += g * w;
            }
        }
    }

    pub fn parameters(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(&self.bias)
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(&mut self.bias)
    }
}

/// Linear (one layer) or one-hidden-layer ReLU network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Dense>,
}

fn log_softmax_into(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    for (o, v) in out.iter_mut().zip(z) {
        *o = v - lse;
    }
}

impl Network {
    pub fn classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out)
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inp)
    }

    pub fn zeros_like(&self) -> Network {
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.out, l.inp))
                .collect(),
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; l.out];
            l.forward(&cur, &mut next);
            if i + 1 < self.layers.len() {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cur = next;
        }
        cur
    }

    /// Mean soft-target cross-entropy over the batch.
    /// `inputs` is `batch x input_dim`, `targets` is `batch x classes` with
    /// rows summing to one.
    pub fn loss(&self, inputs: &[f64], targets: &[f64]) -> f64 {
        let (d, k) = (self.input_dim(), self.classes());
        let batch = inputs.len() / d;
        let mut logp = vec![0.0; k];
        let mut total = 0.0;
        for i in 0..batch {
            let z = self.logits(&inputs[i * d..(i + 1) * d]);
            log_softmax_into(&z, &mut logp);
            total -= targets[i * k..(i + 1) * k]
                .iter()
                .zip(&logp)
                .map(|(t, l)| t * l)
                .sum::<f64>();
        }
        total / batch as f64
    }

    /// Loss and its gradient, accumulated in sample order.
    pub fn loss_and_grad(&self, inputs: &[f64], targets: &[f64]) -> (f64, Network) {
        let (d, k) = (self.input_dim(), self.classes());
        let batch = inputs.len() / d;
        let scale = 1.0 / batch as f64;
        let mut grad = self.zeros_like();
        let mut total = 0.0;
        let mut logp = vec![0.0; k];
        let mut dz = vec![0.0; k];

        for i in 0..batch {
            let x = &inputs[i * d..(i + 1) * d];
            let t = &targets[i * k..(i + 1) * k];
            // Keep pre-activations for the backward pass.
            let mut acts = vec![x.to_vec()];
            let mut pre = Vec::with_capacity(self.layers.len());
            for (li, l) in self.layers.iter().enumerate() {
                let mut y = vec![0.0; l.out];
                l.forward(acts.last().unwrap(), &mut y);
                pre.push(y.clone());
                if li + 1 < self.layers.len() {
                    y.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                acts.push(y);
            }
            let z = acts.last().unwrap();
            log_softmax_into(z, &mut logp);
            total -= t.iter().zip(&logp).map(|(t, l)| t * l).sum::<f64>();
            for ((g, lp), tv) in dz.iter_mut().zip(&logp).zip(t) {
                *g = (lp.exp() - tv) * scale;
            }

            let mut dy = dz.clone();
            for li in (0..self.layers.len()).rev() {
                let l = &self.layers[li];
                l.accumulate(&mut grad.layers[li], &acts[li], &dy);
                if li > 0 {
                    let mut dx = vec![0.0; l.inp];
                    l.backward_input(&dy, &mut dx);
                    for (g, p) in dx.iter_mut().zip(&pre[li - 1]) {
                        if *p <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    dy = dx;
                }
            }
        }
        (total * scale, grad)
    }

    pub fn parameters(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::parameters)
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Dense::parameters_mut)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// `self -= lr * grad`.
    pub fn sgd_step(&mut self, grad: &Network, lr: f64) {
        for (p, g) in self.parameters_mut().zip(grad.parameters()) {
            *p -= lr * g;
        }
    }

    /// Hidden pre-activations for `x`, empty for linear networks.
    pub fn hidden_preactivations(&self, x: &[f64]) -> Vec<f64> {
        if self.layers.len() < 2 {
            return Vec::new();
        }
        let mut y = vec![0.0; self.layers[0].out];
        self.layers[0].forward(x, &mut y);
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn net(dims: &[usize], seed: u64) -> Network {
        let mut rng = substream(seed, "net");
        Network {
            layers: dims
                .windows(2)
                .map(|w| Dense::uniform(w[1], w[0], &mut rng))
                .collect(),
        }
    }

    fn onehot(labels: &[usize], k: usize) -> Vec<f64> {
        let mut t = vec![0.0; labels.len() * k];
        for (i, &l) in labels.iter().enumerate() {
            t[i * k + l] = 1.0;
        }
        t
    }

    #[test]
    fn uniform_logits_give_log_k_loss() {
        let n = Network {
            layers: vec![Dense::zeros(4, 3)],
        };
        let loss = n.loss(&[1.0, 2.0, 3.0], &onehot(&[2], 4));
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn linear_gradient_closed_form() {
        // dW = (softmax - onehot) x^T with zero weights: softmax is uniform.
        let n = Network {
            layers: vec![Dense::zeros(2, 2)],
        };
        let (_, g) = n.loss_and_grad(&[1.0, -2.0], &onehot(&[0], 2));
        assert_eq!(g.layers[0].weight, vec![-0.5, 1.0, 0.5, -1.0]);
        assert_eq!(g.layers[0].bias, vec![-0.5, 0.5]);
    }

    #[test]
    fn loss_and_grad_agrees_with_loss() {
        let n = net(&[5, 7, 3], 2);
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let t = onehot(&[0, 2, 1, 2], 3);
        let (l, _) = n.loss_and_grad(&x, &t);
        assert!((l - n.loss(&x, &t)).abs() < 1e-12);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let n = net(&[4, 6, 3], 5);
        let x: Vec<f64> = (0..12)
            .map(|i| ((i * 7) as f64 * 0.41).cos() * 1.5)
            .collect();
        let t = onehot(&[1, 0, 2], 3);
        let (_, g) = n.loss_and_grad(&x, &t);
        let analytic: Vec<f64> = g.parameters().copied().collect();
        let eps = 1e-5;
        for (k, &a) in analytic.iter().enumerate() {
            let mut plus = n.clone();
            *plus.parameters_mut().nth(k).unwrap() += eps;
            let mut minus = n.clone();
            *minus.parameters_mut().nth(k).unwrap() -= eps;
            let fd = (plus.loss(&x, &t) - minus.loss(&x, &t)) / (2.0 * eps);
            assert!((fd - a).abs() < 1e-7, "param {k}: fd {fd} analytic {a}");
        }
    }
}
