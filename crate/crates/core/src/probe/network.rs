//! Dense layers, the two probe architectures, and their analytic gradients.
//!
//! Parameters are stored as `T` (`f32` for training, `f64` for gradient
//! checking); every reduction accumulates in `f64`.

use num_traits::Float;
use rand::Rng;

use super::ProbeKind;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    out_dim: usize,
    in_dim: usize,
    /// Row-major `out_dim x in_dim`.
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Float> Dense<T> {
    pub fn new(out_dim: usize, in_dim: usize, weights: Vec<T>, bias: Vec<T>) -> Self {
        assert_eq!(weights.len(), out_dim * in_dim, "weight shape");
        assert_eq!(bias.len(), out_dim, "bias shape");
        Dense { out_dim, in_dim, weights, bias }
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Dense::new(out_dim, in_dim, vec![T::zero(); out_dim * in_dim], vec![T::zero(); out_dim])
    }

    /// Kaiming-uniform: `U(-b, b)` with `b = sqrt(6 / fan_in)`, zero bias.
    pub fn kaiming_uniform<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / in_dim as f64).sqrt();
        let weights = (0..out_dim * in_dim)
            .map(|_| T::from(rng.random_range(-bound..bound)).expect("finite"))
            .collect();
        Dense::new(out_dim, in_dim, weights, vec![T::zero(); out_dim])
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.weights.chunks_exact(self.in_dim).zip(&self.bias)) {
            let mut acc = b.to_f64().unwrap_or(0.0);
            for (w, xi) in row.iter().zip(x) {
                acc += w.to_f64().unwrap_or(0.0) * xi;
            }
            *o = acc;
        }
    }

    /// `W^T * delta`.
    fn backprop_input(&self, delta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (row, d) in self.weights.chunks_exact(self.in_dim).zip(delta) {
            if *d == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += w.to_f64().unwrap_or(0.0) * d;
            }
        }
    }

    fn cast<U: Float>(&self) -> Dense<U> {
        let c = |v: &[T]| v.iter().map(|x| U::from(*x).expect("finite")).collect();
        Dense::new(self.out_dim, self.in_dim, c(&self.weights), c(&self.bias))
    }

    fn all_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|x| x.is_finite())
    }
}

/// Gradient buffers mirroring a [`Network`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub hidden_weights: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: Vec<f64>,
}

impl Gradients {
    fn zeros_like<T: Float>(net: &Network<T>) -> Self {
        let (hw, hb) = net.hidden.as_ref().map_or((0, 0), |h| (h.weights.len(), h.bias.len()));
        Gradients {
            hidden_weights: vec![0.0; hw],
            hidden_bias: vec![0.0; hb],
            output_weights: vec![0.0; net.output.weights.len()],
            output_bias: vec![0.0; net.output.bias.len()],
        }
    }

    pub(crate) fn divide(&mut self, n: f64) {
        for g in self.iter_mut() {
            g.iter_mut().for_each(|x| *x /= n);
        }
    }

    fn iter_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.hidden_weights, &mut self.hidden_bias, &mut self.output_weights, &mut self.output_bias]
    }

    /// All gradient values in parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        [&self.hidden_weights, &self.hidden_bias, &self.output_weights, &self.output_bias]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }
}

/// Logistic regression (`dim -> 2`) or a one-hidden-layer ReLU MLP
/// (`dim -> hidden -> 2`), both with a 2-way softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    hidden: Option<Dense<T>>,
    output: Dense<T>,
}

/// Per-example activations kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Activations {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    pub(crate) probs: [f64; 2],
}

impl<T: Float> Network<T> {
    pub fn from_layers(hidden: Option<Dense<T>>, output: Dense<T>) -> Self {
        assert_eq!(output.out_dim, 2, "probes have two output classes");
        if let Some(h) = &hidden {
            assert_eq!(h.out_dim, output.in_dim, "hidden/output shape mismatch");
        }
        Network { hidden, output }
    }

    pub fn init<R: Rng>(kind: ProbeKind, input_dim: usize, hidden_units: usize, rng: &mut R) -> Self {
        match kind {
            ProbeKind::Lr => Network::from_layers(None, Dense::kaiming_uniform(2, input_dim, rng)),
            ProbeKind::Mlp => {
                let hidden = Dense::kaiming_uniform(hidden_units, input_dim, rng);
                let output = Dense::kaiming_uniform(2, hidden_units, rng);
                Network::from_layers(Some(hidden), output)
            }
        }
    }

    pub fn zeros(kind: ProbeKind, input_dim: usize, hidden_units: usize) -> Self {
        match kind {
            ProbeKind::Lr => Network::from_layers(None, Dense::zeros(2, input_dim)),
            ProbeKind::Mlp => Network::from_layers(
                Some(Dense::zeros(hidden_units, input_dim)),
                Dense::zeros(2, hidden_units),
            ),
        }
    }

    pub fn kind(&self) -> ProbeKind {
        if self.hidden.is_some() {
            ProbeKind::Mlp
        } else {
            ProbeKind::Lr
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.as_ref().map_or(self.output.in_dim, |h| h.in_dim)
    }

    pub fn hidden(&self) -> Option<&Dense<T>> {
        self.hidden.as_ref()
    }

    pub fn output(&self) -> &Dense<T> {
        &self.output
    }

    pub fn n_parameters(&self) -> usize {
        let h = self.hidden.as_ref().map_or(0, |h| h.weights.len() + h.bias.len());
        h + self.output.weights.len() + self.output.bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.output.all_finite() && self.hidden.as_ref().is_none_or(Dense::all_finite)
    }

    pub fn cast<U: Float>(&self) -> Network<U> {
        Network { hidden: self.hidden.as_ref().map(Dense::cast), output: self.output.cast() }
    }

    /// Forward pass. `mask`, when given, multiplies the hidden activations
    /// (inverted dropout: entries are 0 or `1 / (1 - p)`).
    pub(crate) fn forward(&self, x: &[f32], mask: Option<&[f64]>) -> Activations {
        let x64: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        let (pre, hidden) = match &self.hidden {
            Some(h) => {
                let mut pre = vec![0.0; h.out_dim];
                h.forward_into(&x64, &mut pre);
                let mut act: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
                if let Some(m) = mask {
                    act.iter_mut().zip(m).for_each(|(a, m)| *a *= m);
                }
                (pre, act)
            }
            None => (Vec::new(), x64),
        };
        let mut logits = [0.0; 2];
        self.output.forward_into(&hidden, &mut logits);
        Activations { pre, hidden, probs: softmax2(logits) }
    }

    /// Class probabilities with dropout disabled.
    pub fn predict_proba(&self, x: &[f32]) -> [f64; 2] {
        self.forward(x, None).probs
    }

    /// Argmax class; ties go to class 0.
    pub fn predict(&self, x: &[f32]) -> usize {
        let p = self.predict_proba(x);
        usize::from(p[1] > p[0])
    }

    /// Adds the gradient of `-log p(label)` for one example into `grads`.
    pub(crate) fn accumulate(&self, x: &[f32], label: usize, act: &Activations, mask: Option<&[f64]>, grads: &mut Gradients) {
        let mut delta_out = act.probs;
        delta_out[label] -= 1.0;
        for (k, d) in delta_out.iter().enumerate() {
            grads.output_bias[k] += d;
            let row = &mut grads.output_weights[k * self.output.in_dim..(k + 1) * self.output.in_dim];
            row.iter_mut().zip(&act.hidden).for_each(|(g, h)| *g += d * h);
        }
        let Some(h) = &self.hidden else { return };
        let mut delta_hidden = vec![0.0; h.out_dim];
        self.output.backprop_input(&delta_out, &mut delta_hidden);
        for (j, d) in delta_hidden.iter_mut().enumerate() {
            let m = mask.map_or(1.0, |m| m[j]);
            *d = if act.pre[j] > 0.0 { *d * m } else { 0.0 };
        }
        for (j, d) in delta_hidden.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            grads.hidden_bias[j] += d;
            let row = &mut grads.hidden_weights[j * h.in_dim..(j + 1) * h.in_dim];
            row.iter_mut().zip(x).for_each(|(g, xi)| *g += d * f64::from(*xi));
        }
    }

    /// Mean cross-entropy over `(x, label)` pairs, dropout disabled.
    pub fn loss(&self, xs: &[&[f32]], labels: &[usize]) -> f64 {
        let total: f64 = xs
            .iter()
            .zip(labels)
            .map(|(x, &y)| -self.forward(x, None).probs[y].max(f64::MIN_POSITIVE).ln())
            .sum();
        total / xs.len() as f64
    }

    /// Analytic gradient of [`Network::loss`].
    pub fn gradients(&self, xs: &[&[f32]], labels: &[usize]) -> Gradients {
        let mut g = Gradients::zeros_like(self);
        for (x, &y) in xs.iter().zip(labels) {
            let act = self.forward(x, None);
            self.accumulate(x, y, &act, None, &mut g);
        }
        g.divide(xs.len() as f64);
        g
    }

    pub(crate) fn zero_gradients(&self) -> Gradients {
        Gradients::zeros_like(self)
    }

    fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = Vec::with_capacity(4);
        if let Some(h) = &mut self.hidden {
            out.push(&mut h.weights);
            out.push(&mut h.bias);
        }
        out.push(&mut self.output.weights);
        out.push(&mut self.output.bias);
        out
    }

    /// Mutable access to the `i`-th parameter in flattened order.
    fn param_mut(&mut self, mut i: usize) -> &mut T {
        for p in self.params_mut() {
            if i < p.len() {
                return &mut p[i];
            }
            i -= p.len();
        }
        panic!("parameter index out of range")
    }
}

fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Adam with bias correction; moments kept in `f64`.
#[derive(Debug, Clone)]
pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub(crate) fn new<T: Float>(net: &Network<T>, lr: f64) -> Self {
        let shapes: Vec<usize> = net.zero_gradients().flatten_lengths();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub(crate) fn step<T: Float>(&mut self, net: &mut Network<T>, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let grad_bufs: Vec<&Vec<f64>> = grads.nonempty();
        for (((p, g), m), v) in net.params_mut().into_iter().zip(grad_bufs).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let update = self.lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + self.eps);
                let cur = p[i].to_f64().unwrap_or(0.0);
                p[i] = T::from(cur - update).expect("finite");
            }
        }
    }
}

impl Gradients {
    fn nonempty(&self) -> Vec<&Vec<f64>> {
        [&self.hidden_weights, &self.hidden_bias, &self.output_weights, &self.output_bias]
            .into_iter()
            .filter(|v| !v.is_empty())
            .collect()
    }

    fn flatten_lengths(&self) -> Vec<usize> {
        self.nonempty().iter().map(|v| v.len()).collect()
    }
}

/// Largest relative error between analytic and central-difference gradients
/// (step `h = 1e-5`) over every parameter of `net`. The relative error uses
/// `max(|a|, |n|, 1e-5)` as denominator so that exact zeros compare cleanly.
pub fn max_gradient_error(net: &Network<f64>, xs: &[&[f32]], labels: &[usize]) -> f64 {
    const H: f64 = 1e-5;
    let analytic = net.gradients(xs, labels).flatten();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + H;
        let up = probe.loss(xs, labels);
        *probe.param_mut(i) = orig - H;
        let down = probe.loss(xs, labels);
        *probe.param_mut(i) = orig;
        let numeric = (up - down) / (2.0 * H);
        let denom = a.abs().max(numeric.abs()).max(1e-5);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}
