//! Dense networks with hand-written backpropagation, Adam, and the
//! diagonal-Gaussian policy head.
//!
//! Parameters and gradients are handled as ordered lists of flat tensors
//! (`[w0, b0, w1, b1, ...]`, weights row-major `outputs x inputs`) so the
//! optimiser, gradient clipping and checkpointing treat every model alike.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
        }
    }

    /// Orthogonal weights scaled by `gain`, zero bias.
    pub fn orthogonal<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, gain: f64, rng: &mut R) -> Self {
        let (rows, cols) = (inputs.max(outputs), inputs.min(outputs));
        let gaussian = DMatrix::<f64>::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
        let qr = gaussian.qr();
        let mut q = qr.q();
        // Sign fix so the distribution is uniform over orthogonal matrices.
        let r = qr.r();
        for j in 0..cols {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        let mut weights = Vec::with_capacity(inputs * outputs);
        for o in 0..outputs {
            for i in 0..inputs {
                let v = if outputs >= inputs { q[(o, i)] } else { q[(i, o)] };
                weights.push(gain * v);
            }
        }
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
            activation,
        }
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(|(row, b)| {
            let z: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b;
            self.activation.apply(z)
        }));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub layers: Vec<Dense>,
}

/// Per-layer activations from a forward pass; `activations[0]` is the input.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Ordered gradient tensors mirroring a model's parameter tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    pub fn zeros(shapes: &[usize]) -> Self {
        Self(shapes.iter().map(|&n| vec![0.0; n]).collect())
    }

    pub fn shapes(&self) -> Vec<usize> {
        self.0.iter().map(Vec::len).collect()
    }

    pub fn fill_zero(&mut self) {
        self.0.iter_mut().for_each(|t| t.fill(0.0));
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().flatten().for_each(|x| *x *= k);
    }

    pub fn sq_norm(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }
}

/// Rescales all gradient sets jointly so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut Grads], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.sq_norm()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale(k));
    }
    norm
}

impl DenseNet {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("network layers"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].outputs,
                    actual: pair[1].inputs,
                });
            }
        }
        for l in &layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::DimensionMismatch {
                    expected: l.inputs * l.outputs,
                    actual: l.weights.len(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Tanh MLP with orthogonal init: hidden gain sqrt(2), identity output
    /// layer with `output_gain`.
    pub fn mlp<R: Rng + ?Sized>(input: usize, hidden: &[usize], output: usize, output_gain: f64, rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &h in hidden {
            layers.push(Dense::orthogonal(prev, h, Activation::Tanh, std::f64::consts::SQRT_2, rng));
            prev = h;
        }
        layers.push(Dense::orthogonal(prev, output, Activation::Identity, output_gain, rng));
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn param_shapes(&self) -> Vec<usize> {
        self.layers.iter().flat_map(|l| [l.weights.len(), l.bias.len()]).collect()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads::zeros(&self.param_shapes())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Output only, without keeping a cache.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward_into(activations.last().expect("input pushed"), &mut out);
            activations.push(out);
        }
        let cache = ForwardCache { activations };
        Ok((cache.output().to_vec(), cache))
    }

    /// Adds the gradients of `output . upstream` into `grads` and returns
    /// the gradient with respect to the input.
    pub fn accumulate_backward(&self, cache: &ForwardCache, upstream: &[f64], grads: &mut Grads) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }
        if cache.activations.len() != self.layers.len() + 1 || grads.0.len() != 2 * self.layers.len() {
            return Err(Error::DimensionMismatch {
                expected: self.layers.len() + 1,
                actual: cache.activations.len(),
            });
        }

        let mut delta = upstream.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.activations[l];
            let output = &cache.activations[l + 1];
            for (d, &a) in delta.iter_mut().zip(output) {
                *d *= layer.activation.derivative_from_output(a);
            }

            let (dw, rest) = grads.0[2 * l..].split_at_mut(1);
            let (dw, db) = (&mut dw[0], &mut rest[0]);
            for (o, &dz) in delta.iter().enumerate() {
                db[o] += dz;
                if dz != 0.0 {
                    let row = &mut dw[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(g, x)| *g += dz * x);
                }
            }

            let mut below = vec![0.0; layer.inputs];
            for (row, &dz) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                if dz != 0.0 {
                    below.iter_mut().zip(row).for_each(|(b, w)| *b += dz * w);
                }
            }
            delta = below;
        }
        Ok(delta)
    }

    /// Gradients of `output . upstream` with respect to every parameter
    /// tensor, plus the input gradient.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<(Grads, Vec<f64>)> {
        let mut grads = self.zero_grads();
        let input_grad = self.accumulate_backward(cache, upstream, &mut grads)?;
        Ok((grads, input_grad))
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().into_iter().flatten().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub timestep: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            timestep: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One bias-corrected Adam update over matching tensor lists.
pub fn adam_step(params: &mut [&mut [f64]], grads: &Grads, state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.0.len() || params.len() != state.first.len() {
        return Err(Error::DimensionMismatch {
            expected: state.first.len(),
            actual: params.len(),
        });
    }
    for ((p, g), m) in params.iter().zip(&grads.0).zip(&state.first) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::DimensionMismatch {
                expected: m.len(),
                actual: g.len(),
            });
        }
    }

    state.timestep += 1;
    let t = state.timestep as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(&grads.0)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Diagonal Gaussian log density with standard deviations `exp(log_std)`.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

/// Gradients of the log density with respect to the mean and `log_std`.
pub fn gaussian_log_prob_grads(mean: &[f64], log_std: &[f64], action: &[f64]) -> (Vec<f64>, Vec<f64>) {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let var = (2.0 * ls).exp();
            let diff = a - m;
            (diff / var, diff * diff / var - 1.0)
        })
        .unzip()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| 0.5 + HALF_LN_2PI + ls).sum()
}

/// Gaussian policy: a network producing the mean plus a state-independent
/// learnable `log_std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub net: DenseNet,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(net: DenseNet, init_log_std: f64) -> Self {
        let dim = net.output_dim();
        Self {
            net,
            log_std: vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); dim],
        }
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn clamp_log_std(&mut self) {
        self.log_std.iter_mut().for_each(|v| *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX));
    }

    pub fn sample<R: Rng + ?Sized>(&self, mean: &[f64], rng: &mut R) -> Vec<f64> {
        mean.iter()
            .zip(&self.log_std)
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub fn log_prob(&self, mean: &[f64], action: &[f64]) -> f64 {
        gaussian_log_prob(mean, &self.log_std, action)
    }

    pub fn entropy(&self) -> f64 {
        gaussian_entropy(&self.log_std)
    }

    /// Parameter shapes: the network tensors followed by `log_std`.
    pub fn param_shapes(&self) -> Vec<usize> {
        let mut shapes = self.net.param_shapes();
        shapes.push(self.log_std.len());
        shapes
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.net.tensors_mut();
        t.push(self.log_std.as_mut_slice());
        t
    }

    pub fn zero_grads(&self) -> Grads {
        Grads::zeros(&self.param_shapes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = DenseNet::new(vec![
            Dense::zeros(3, 4, Activation::Tanh),
            Dense::zeros(4, 2, Activation::Identity),
        ])
        .unwrap();
        assert_eq!(net.predict(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert!(net.predict(&[1.0]).is_err());
    }

    #[test]
    fn hand_matrix_product() {
        let layer = Dense {
            inputs: 2,
            outputs: 2,
            weights: vec![2.0, 0.0, 0.0, 3.0],
            bias: vec![0.0, 0.0],
            activation: Activation::Identity,
        };
        let net = DenseNet::new(vec![layer]).unwrap();
        let (y, _) = net.forward(&[1.0, 1.0]).unwrap();
        assert_eq!(y, vec![2.0, 3.0]);
    }

    #[test]
    fn chained_dims_are_checked() {
        let bad = DenseNet::new(vec![
            Dense::zeros(3, 4, Activation::Tanh),
            Dense::zeros(5, 2, Activation::Identity),
        ]);
        assert!(bad.is_err());
    }

    #[test]
    fn tanh_hidden_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = DenseNet::mlp(5, &[16], 3, 1.0, &mut rng);
        let (_, cache) = net.forward(&[100.0, -50.0, 3.0, 0.0, 9.0]).unwrap();
        assert!(cache.activations[1].iter().all(|a| a.abs() <= 1.0));
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = Dense::orthogonal(8, 5, Activation::Tanh, 1.0, &mut rng);
        for a in 0..5 {
            for b in 0..5 {
                let dot: f64 = (0..8).map(|i| l.weights[a * 8 + i] * l.weights[b * 8 + i]).sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn backward_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DenseNet::mlp(4, &[6, 5], 3, 1.0, &mut rng);
        let (_, cache) = net.forward(&[0.3, -0.2, 0.9, 0.1]).unwrap();
        let (zero, dx0) = net.backward(&cache, &[0.0; 3]).unwrap();
        assert_eq!(zero.sq_norm(), 0.0);
        assert!(dx0.iter().all(|&v| v == 0.0));

        let up = [0.5, -1.0, 0.25];
        let (g1, dx1) = net.backward(&cache, &up).unwrap();
        let (g2, dx2) = net.backward(&cache, &up.map(|v| 2.0 * v)).unwrap();
        for (a, b) in g1.0.iter().flatten().zip(g2.0.iter().flatten()) {
            assert!((2.0 * a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
        for (a, b) in dx1.iter().zip(&dx2) {
            assert!((2.0 * a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = vec![1.0, -2.0];
        let mut state = AdamState::new(&[2]);
        adam_step(&mut [p.as_mut_slice()], &Grads(vec![vec![0.0, 0.0]]), &mut state, 3e-4).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert!(adam_step(&mut [p.as_mut_slice()], &Grads(vec![vec![0.0]]), &mut state, 3e-4).is_err());
    }

    #[test]
    fn adam_first_step_is_sign_scaled() {
        for g in [1e-3, -0.7, 42.0] {
            let mut p = [0.0];
            let mut state = AdamState::new(&[1]);
            let lr = 3e-4;
            adam_step(&mut [p.as_mut_slice()], &Grads(vec![vec![g]]), &mut state, lr).unwrap();
            let expected = -lr * g.signum();
            assert!((p[0] - expected).abs() <= 0.01 * lr, "g = {g}: {}", p[0]);
        }
    }

    #[test]
    fn gaussian_closed_forms() {
        let d = 3;
        let lp = gaussian_log_prob(&[0.5; 3], &[0.0; 3], &[0.5; 3]);
        assert!((lp + d as f64 / 2.0 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);

        let mean = [0.2, -0.4];
        let ls = [0.1, -0.3];
        let v = [0.3, 0.7];
        let plus = gaussian_log_prob(&mean, &ls, &[mean[0] + v[0], mean[1] + v[1]]);
        let minus = gaussian_log_prob(&mean, &ls, &[mean[0] - v[0], mean[1] - v[1]]);
        assert!((plus - minus).abs() < 1e-12);
        let farther = gaussian_log_prob(&mean, &ls, &[mean[0] + 2.0 * v[0], mean[1] + 2.0 * v[1]]);
        assert!(farther < plus);

        let h = gaussian_entropy(&[0.0, 0.0]);
        assert!((h - 2.837_877_066_409_345_5).abs() < 1e-12);
        assert!(gaussian_entropy(&[0.1, 0.0]) > h);
    }

    #[test]
    fn serde_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = DenseNet::mlp(7, &[9], 2, 0.01, &mut rng);
        let text = serde_json::to_string(&net).unwrap();
        let back: DenseNet = serde_json::from_str(&text).unwrap();
        assert_eq!(net, back);
    }
}
