//! Minimal dense feed-forward network with exact analytic gradients and an
//! Adam optimizer.
//!
//! This is the numerical substrate for every policy and value function in
//! the crate: a plain MLP with tanh hidden layers and an identity output
//! layer. Forward and backward passes are hand-rolled, allocation happens at
//! the batch level, and all loops run in a fixed order so results are
//! bit-reproducible.
//!
//! The math is generic over [`Scalar`] (`f32` or `f64`); the rest of the
//! crate uses the `f64` aliases exported from the crate root.

use rand::distr::{Distribution, Uniform};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Hidden-layer activation. The output layer is always identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
}

impl Activation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Dense feed-forward network.
///
/// `weights[l]` is row-major with shape `(layer_sizes[l+1], layer_sizes[l])`;
/// each row holds the incoming weights of one output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F: Scalar> {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<F>>,
    biases: Vec<Vec<F>>,
    hidden_activation: Activation,
}

/// Parameter-shaped gradient buffers, averaged over a batch.
#[derive(Debug, Clone)]
pub struct Gradients<F: Scalar> {
    pub weights: Vec<Vec<F>>,
    pub biases: Vec<Vec<F>>,
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::invalid_argument(format!(
            "need at least input and output sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(Error::invalid_argument(format!(
            "all layer sizes must be >= 1, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

/// Dot product with four independent accumulators. The fixed summation order
/// keeps results reproducible while avoiding a single loop-carried chain.
#[inline]
fn dot<F: Scalar>(w: &[F], x: &[F]) -> F {
    debug_assert_eq!(w.len(), x.len());
    let mut acc = [F::zero(); 4];
    let chunks = w.len() / 4;
    for k in 0..chunks {
        let i = k * 4;
        acc[0] += w[i] * x[i];
        acc[1] += w[i + 1] * x[i + 1];
        acc[2] += w[i + 2] * x[i + 2];
        acc[3] += w[i + 3] * x[i + 3];
    }
    let mut tail = F::zero();
    for i in chunks * 4..w.len() {
        tail += w[i] * x[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl<F: Scalar> Mlp<F> {
    /// Fan-in uniform initialization: weights in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`,
    /// biases zero. Deterministic for a given seed.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for l in 0..layer_sizes.len() - 1 {
            let fan_in = layer_sizes[l];
            let fan_out = layer_sizes[l + 1];
            let bound = F::one() / F::from_usize(fan_in).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound)
                .map_err(|e| Error::invalid_argument(format!("init distribution: {e}")))?;
            let w: Vec<F> = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
            weights.push(w);
            biases.push(vec![F::zero(); fan_out]);
        }
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            hidden_activation: Activation::Tanh,
        })
    }

    /// All-zero parameters (useful as a neutral value function).
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let weights = (0..layer_sizes.len() - 1)
            .map(|l| vec![F::zero(); layer_sizes[l] * layer_sizes[l + 1]])
            .collect();
        let biases = (0..layer_sizes.len() - 1)
            .map(|l| vec![F::zero(); layer_sizes[l + 1]])
            .collect();
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            hidden_activation: Activation::Tanh,
        })
    }

    /// Build from explicit parameters (deserialization path).
    pub fn from_parameters(
        layer_sizes: Vec<usize>,
        weights: Vec<Vec<F>>,
        biases: Vec<Vec<F>>,
    ) -> Result<Self> {
        check_sizes(&layer_sizes)?;
        let n_layers = layer_sizes.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::invalid_argument(format!(
                "expected {n_layers} weight/bias layers, got {}/{}",
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..n_layers {
            if weights[l].len() != layer_sizes[l] * layer_sizes[l + 1] {
                return Err(Error::invalid_argument(format!(
                    "layer {l}: expected {} weights, got {}",
                    layer_sizes[l] * layer_sizes[l + 1],
                    weights[l].len()
                )));
            }
            if biases[l].len() != layer_sizes[l + 1] {
                return Err(Error::invalid_argument(format!(
                    "layer {l}: expected {} biases, got {}",
                    layer_sizes[l + 1],
                    biases[l].len()
                )));
            }
        }
        Ok(Mlp {
            layer_sizes,
            weights,
            biases,
            hidden_activation: Activation::Tanh,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn weights(&self) -> &[Vec<F>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<F>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<F>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<F>] {
        &mut self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().flatten().all(|v| v.is_finite())
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    /// Forward pass for one input. Pure: identical inputs give identical
    /// outputs.
    pub fn forward(&self, x: &[F]) -> Result<Vec<F>> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid_argument(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in 0..self.n_layers() {
            self.layer_forward(l, &cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    #[inline]
    fn layer_forward(&self, l: usize, input: &[F], out: &mut Vec<F>) {
        let in_dim = self.layer_sizes[l];
        let out_dim = self.layer_sizes[l + 1];
        let is_output = l + 1 == self.layer_sizes.len() - 1;
        out.clear();
        out.reserve(out_dim);
        for o in 0..out_dim {
            let row = &self.weights[l][o * in_dim..(o + 1) * in_dim];
            let z = self.biases[l][o] + dot(row, input);
            out.push(if is_output { z } else { z.tanh() });
        }
    }

    /// Forward pass over a flat row-major batch (`n` rows of `input_dim`).
    pub fn forward_batch(&self, xs: &[F], n: usize) -> Result<Vec<F>> {
        if xs.len() != n * self.input_dim() {
            return Err(Error::invalid_argument(format!(
                "batch has {} entries, expected {} x {}",
                xs.len(),
                n,
                self.input_dim()
            )));
        }
        let out_dim = self.output_dim();
        let mut ys = Vec::with_capacity(n * out_dim);
        let mut next = Vec::new();
        let in_dim = self.input_dim();
        for r in 0..n {
            let mut cur = xs[r * in_dim..(r + 1) * in_dim].to_vec();
            for l in 0..self.n_layers() {
                self.layer_forward(l, &cur, &mut next);
                std::mem::swap(&mut cur, &mut next);
            }
            ys.extend_from_slice(&cur);
        }
        Ok(ys)
    }

    /// Exact reverse-mode gradients for a batch, averaged over the batch.
    ///
    /// `xs` is a flat row-major batch of inputs, `dys` the matching batch of
    /// output cotangents `dL/dy`.
    pub fn backward_batch(&self, xs: &[F], dys: &[F], n: usize) -> Result<Gradients<F>> {
        if n == 0 {
            return Err(Error::invalid_argument("backward over an empty batch"));
        }
        let in_dim = self.input_dim();
        let out_dim = self.output_dim();
        if xs.len() != n * in_dim {
            return Err(Error::invalid_argument(format!(
                "input batch has {} entries, expected {} x {in_dim}",
                xs.len(),
                n
            )));
        }
        if dys.len() != n * out_dim {
            return Err(Error::invalid_argument(format!(
                "cotangent batch has {} entries, expected {} x {out_dim}",
                dys.len(),
                n
            )));
        }

        let n_layers = self.n_layers();
        let mut grads = Gradients::zeros_like(self);
        // Post-activation values per layer, refilled per sample.
        let mut acts: Vec<Vec<F>> = self
            .layer_sizes
            .iter()
            .map(|&s| vec![F::zero(); s])
            .collect();

        for r in 0..n {
            acts[0].copy_from_slice(&xs[r * in_dim..(r + 1) * in_dim]);
            for l in 0..n_layers {
                let (lo, hi) = acts.split_at_mut(l + 1);
                let input = &lo[l];
                let out = &mut hi[0];
                let is_output = l == n_layers - 1;
                let li = self.layer_sizes[l];
                for o in 0..self.layer_sizes[l + 1] {
                    let row = &self.weights[l][o * li..(o + 1) * li];
                    let z = self.biases[l][o] + dot(row, input);
                    out[o] = if is_output { z } else { z.tanh() };
                }
            }

            // delta = dL/dz at the current layer's output.
            let mut delta = dys[r * out_dim..(r + 1) * out_dim].to_vec();
            for l in (0..n_layers).rev() {
                let li = self.layer_sizes[l];
                let lo = self.layer_sizes[l + 1];
                let input = &acts[l];
                let gw = &mut grads.weights[l];
                for o in 0..lo {
                    let d = delta[o];
                    grads.biases[l][o] += d;
                    let row = &mut gw[o * li..(o + 1) * li];
                    for i in 0..li {
                        row[i] += d * input[i];
                    }
                }
                if l > 0 {
                    let mut prev = vec![F::zero(); li];
                    for o in 0..lo {
                        let d = delta[o];
                        let row = &self.weights[l][o * li..(o + 1) * li];
                        for i in 0..li {
                            prev[i] += row[i] * d;
                        }
                    }
                    // tanh'(z) expressed through the stored activation.
                    for i in 0..li {
                        let a = acts[l][i];
                        prev[i] *= F::one() - a * a;
                    }
                    delta = prev;
                }
            }
        }

        let inv_n = F::one() / F::from_usize(n);
        grads.scale(inv_n);
        Ok(grads)
    }
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros_like(mlp: &Mlp<F>) -> Self {
        Gradients {
            weights: mlp.weights.iter().map(|w| vec![F::zero(); w.len()]).collect(),
            biases: mlp.biases.iter().map(|b| vec![F::zero(); b.len()]).collect(),
        }
    }

    pub fn scale(&mut self, factor: F) {
        for w in &mut self.weights {
            for v in w.iter_mut() {
                *v *= factor;
            }
        }
        for b in &mut self.biases {
            for v in b.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// `self += factor * other`. Shapes must match.
    pub fn add_scaled(&mut self, other: &Gradients<F>, factor: F) -> Result<()> {
        if self.weights.len() != other.weights.len() {
            return Err(Error::invalid_argument("gradient layer count mismatch"));
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            if a.len() != b.len() {
                return Err(Error::invalid_argument("gradient shape mismatch"));
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += factor * *y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            if a.len() != b.len() {
                return Err(Error::invalid_argument("gradient shape mismatch"));
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += factor * *y;
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().flatten().all(|v| v.is_finite())
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    fn shape_matches(&self, mlp: &Mlp<F>) -> bool {
        self.weights.len() == mlp.weights.len()
            && self.biases.len() == mlp.biases.len()
            && self
                .weights
                .iter()
                .zip(&mlp.weights)
                .all(|(a, b)| a.len() == b.len())
            && self
                .biases
                .iter()
                .zip(&mlp.biases)
                .all(|(a, b)| a.len() == b.len())
    }
}

/// Adam optimizer state: moment accumulators plus hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamState<F: Scalar> {
    pub learning_rate: F,
    pub beta1: F,
    pub beta2: F,
    pub epsilon: F,
    /// Step counter; increments by exactly 1 per `adam_step`.
    pub t: u64,
    m_weights: Vec<Vec<F>>,
    v_weights: Vec<Vec<F>>,
    m_biases: Vec<Vec<F>>,
    v_biases: Vec<Vec<F>>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(mlp: &Mlp<F>, learning_rate: F) -> Self {
        AdamState {
            learning_rate,
            beta1: F::from_f64(0.9),
            beta2: F::from_f64(0.999),
            epsilon: F::from_f64(1e-8),
            t: 0,
            m_weights: mlp.weights.iter().map(|w| vec![F::zero(); w.len()]).collect(),
            v_weights: mlp.weights.iter().map(|w| vec![F::zero(); w.len()]).collect(),
            m_biases: mlp.biases.iter().map(|b| vec![F::zero(); b.len()]).collect(),
            v_biases: mlp.biases.iter().map(|b| vec![F::zero(); b.len()]).collect(),
        }
    }
}

/// One Adam update with bias correction; increments `state.t`.
pub fn adam_step<F: Scalar>(
    mlp: &mut Mlp<F>,
    grads: &Gradients<F>,
    state: &mut AdamState<F>,
) -> Result<()> {
    if !grads.shape_matches(mlp) {
        return Err(Error::invalid_argument(
            "gradient shapes do not match network parameters",
        ));
    }
    state.t += 1;
    let t = state.t;
    let b1 = state.beta1;
    let b2 = state.beta2;
    let one = F::one();
    let bias1 = one - b1.powi(t as i32);
    let bias2 = one - b2.powi(t as i32);
    let lr = state.learning_rate;
    let eps = state.epsilon;

    let update = |param: &mut [F], g: &[F], m: &mut [F], v: &mut [F]| {
        for i in 0..param.len() {
            m[i] = b1 * m[i] + (one - b1) * g[i];
            v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    };

    for l in 0..mlp.weights.len() {
        update(
            &mut mlp.weights[l],
            &grads.weights[l],
            &mut state.m_weights[l],
            &mut state.v_weights[l],
        );
        update(
            &mut mlp.biases[l],
            &grads.biases[l],
            &mut state.m_biases[l],
            &mut state.v_biases[l],
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn init_is_deterministic() {
        let a = Mlp::<f64>::init(&[2, 1], 7).unwrap();
        let b = Mlp::<f64>::init(&[2, 1], 7).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.biases, b.biases);
        let c = Mlp::<f64>::init(&[2, 1], 8).unwrap();
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn init_shapes_chain() {
        let m = Mlp::<f64>::init(&[8, 16, 16, 2], 0).unwrap();
        assert_eq!(m.weights[0].len(), 16 * 8);
        assert_eq!(m.weights[1].len(), 16 * 16);
        assert_eq!(m.weights[2].len(), 2 * 16);
        assert_eq!(m.biases[0].len(), 16);
        assert_eq!(m.biases[1].len(), 16);
        assert_eq!(m.biases[2].len(), 2);
        assert!(m.all_finite());
    }

    #[test]
    fn init_bounds_respect_fan_in() {
        let m = Mlp::<f64>::init(&[16, 4], 3).unwrap();
        let bound = 1.0 / 4.0;
        assert!(m.weights[0].iter().all(|w| w.abs() <= bound));
        assert!(m.biases[0].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_rejects_degenerate_sizes() {
        assert!(matches!(
            Mlp::<f64>::init(&[4, 0, 2], 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            Mlp::<f64>::init(&[4], 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            Mlp::<f64>::init(&[], 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn zero_network_maps_to_zero() {
        let m = Mlp::<f64>::zeros(&[3, 5, 2]).unwrap();
        let y = m.forward(&[0.3, -1.2, 0.7]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn single_layer_is_affine() {
        let mut m = Mlp::<f64>::zeros(&[2, 2]).unwrap();
        m.weights_mut()[0].copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        m.biases_mut()[0].copy_from_slice(&[0.5, -0.5]);
        let y = m.forward(&[1.0, -1.0]).unwrap();
        // No output nonlinearity: y = Wx + b exactly.
        assert_eq!(y, vec![1.0 - 2.0 + 0.5, 3.0 - 4.0 - 0.5]);
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let m = Mlp::<f64>::init(&[3, 2], 0).unwrap();
        assert!(matches!(
            m.forward(&[1.0, 2.0]),
            Err(Error::InvalidArgument(_))
        ));
    }

    /// Straightforward reimplementation used as an oracle: nested loops over
    /// per-layer matrices, no shared code with `Mlp::forward`.
    fn oracle_forward(m: &Mlp<f64>, x: &[f64]) -> Vec<f64> {
        let sizes = m.layer_sizes();
        let mut a = x.to_vec();
        for l in 0..sizes.len() - 1 {
            let mut z = vec![0.0; sizes[l + 1]];
            for (o, zo) in z.iter_mut().enumerate() {
                let mut sum = m.biases()[l][o];
                for (i, &ai) in a.iter().enumerate() {
                    sum += m.weights()[l][o * sizes[l] + i] * ai;
                }
                *zo = sum;
            }
            if l + 1 < sizes.len() - 1 {
                for zo in z.iter_mut() {
                    *zo = zo.tanh();
                }
            }
            a = z;
        }
        a
    }

    #[test]
    fn forward_matches_independent_reimplementation() {
        let m = Mlp::<f64>::init(&[4, 7, 5, 3], 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = rand_vec(&mut rng, 4);
            let y = m.forward(&x).unwrap();
            let y_ref = oracle_forward(&m, &x);
            for (a, b) in y.iter().zip(&y_ref) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn forward_is_pure() {
        let m = Mlp::<f64>::init(&[4, 8, 2], 9).unwrap();
        let x = [0.1, -0.2, 0.3, 0.9];
        let y1 = m.forward(&x).unwrap();
        let y2 = m.forward(&x).unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn backward_zero_cotangent_gives_zero_gradients() {
        let m = Mlp::<f64>::init(&[3, 4, 2], 0).unwrap();
        let xs = [0.1, 0.2, 0.3, -0.1, -0.2, -0.3];
        let dys = [0.0; 4];
        let g = m.backward_batch(&xs, &dys, 2).unwrap();
        assert!(g.weights.iter().flatten().all(|&v| v == 0.0));
        assert!(g.biases.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_linear_layer_analytic() {
        // Single linear layer, L = y . c  =>  dL/dW = c x^T, dL/db = c.
        let mut m = Mlp::<f64>::zeros(&[3, 2]).unwrap();
        m.weights_mut()[0].copy_from_slice(&[0.3, -0.1, 0.2, 0.0, 0.5, -0.4]);
        let x = [1.0, 2.0, -3.0];
        let c = [0.7, -1.3];
        let g = m.backward_batch(&x, &c, 1).unwrap();
        let expect_w = [
            0.7 * 1.0,
            0.7 * 2.0,
            0.7 * -3.0,
            -1.3 * 1.0,
            -1.3 * 2.0,
            -1.3 * -3.0,
        ];
        for (a, b) in g.weights[0].iter().zip(&expect_w) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in g.biases[0].iter().zip(&c) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    /// Central finite differences of L = y . c with respect to every
    /// parameter of the network.
    fn fd_check(m: &Mlp<f64>, x: &[f64], c: &[f64]) -> f64 {
        let loss = |m: &Mlp<f64>| -> f64 {
            let y = m.forward(x).unwrap();
            y.iter().zip(c).map(|(a, b)| a * b).sum()
        };
        let g = m.backward_batch(x, c, 1).unwrap();
        let h = 1e-5;
        let mut max_rel: f64 = 0.0;
        let mut probe = m.clone();
        for l in 0..m.n_layers() {
            for i in 0..m.weights()[l].len() {
                let orig = probe.weights()[l][i];
                probe.weights_mut()[l][i] = orig + h;
                let up = loss(&probe);
                probe.weights_mut()[l][i] = orig - h;
                let down = loss(&probe);
                probe.weights_mut()[l][i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = g.weights[l][i];
                let denom = analytic.abs().max(numeric.abs()).max(1e-3);
                max_rel = max_rel.max((analytic - numeric).abs() / denom);
            }
            for i in 0..m.biases()[l].len() {
                let orig = probe.biases()[l][i];
                probe.biases_mut()[l][i] = orig + h;
                let up = loss(&probe);
                probe.biases_mut()[l][i] = orig - h;
                let down = loss(&probe);
                probe.biases_mut()[l][i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = g.biases[l][i];
                let denom = analytic.abs().max(numeric.abs()).max(1e-3);
                max_rel = max_rel.max((analytic - numeric).abs() / denom);
            }
        }
        max_rel
    }

    #[test]
    fn backward_matches_finite_differences() {
        let m = Mlp::<f64>::init(&[3, 6, 5, 2], 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_vec(&mut rng, 3);
        let c = rand_vec(&mut rng, 2);
        let max_rel = fd_check(&m, &x, &c);
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    /// Invariant suite from the module contract: 100 random
    /// (net, input, cotangent) triples.
    #[test]
    fn finite_difference_suite() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst: f64 = 0.0;
        for k in 0..100 {
            let hidden = 2 + (k % 5);
            let m = Mlp::<f64>::init(&[3, hidden, 2], k as u64).unwrap();
            let x = rand_vec(&mut rng, 3);
            let c = rand_vec(&mut rng, 2);
            worst = worst.max(fd_check(&m, &x, &c));
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn batch_gradient_is_mean_of_per_sample_gradients() {
        let m = Mlp::<f64>::init(&[4, 6, 3], 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in 1..=8usize {
            let xs = rand_vec(&mut rng, n * 4);
            let dys = rand_vec(&mut rng, n * 3);
            let batch = m.backward_batch(&xs, &dys, n).unwrap();
            let mut mean = Gradients::zeros_like(&m);
            for r in 0..n {
                let g = m
                    .backward_batch(&xs[r * 4..(r + 1) * 4], &dys[r * 3..(r + 1) * 3], 1)
                    .unwrap();
                mean.add_scaled(&g, 1.0 / n as f64).unwrap();
            }
            for (a, b) in batch.weights.iter().flatten().zip(mean.weights.iter().flatten()) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in batch.biases.iter().flatten().zip(mean.biases.iter().flatten()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_rejects_bad_shapes() {
        let m = Mlp::<f64>::init(&[3, 2], 0).unwrap();
        assert!(m.backward_batch(&[0.0; 5], &[0.0; 2], 1).is_err());
        assert!(m.backward_batch(&[0.0; 3], &[0.0; 3], 1).is_err());
        assert!(m.backward_batch(&[], &[], 0).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // Scalar parameter w=0, g=1, lr=0.1: bias-corrected first step is
        // lr * g / (|g| + eps) ~= -0.1.
        let mut m = Mlp::<f64>::zeros(&[1, 1]).unwrap();
        let mut grads = Gradients::zeros_like(&m);
        grads.weights[0][0] = 1.0;
        let mut state = AdamState::new(&m, 0.1);
        adam_step(&mut m, &grads, &mut state).unwrap();
        assert_eq!(state.t, 1);
        let w = m.weights()[0][0];
        assert!((w + 0.1).abs() < 1e-8, "w = {w}");
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters_unchanged() {
        let mut m = Mlp::<f64>::init(&[3, 4, 2], 1).unwrap();
        let before = m.clone();
        let grads = Gradients::zeros_like(&m);
        let mut state = AdamState::new(&m, 0.01);
        for _ in 0..5 {
            adam_step(&mut m, &grads, &mut state).unwrap();
        }
        assert_eq!(m.weights(), before.weights());
        assert_eq!(m.biases(), before.biases());
        assert_eq!(state.t, 5);
    }

    #[test]
    fn adam_matches_hand_recurrence() {
        // Five steps on one scalar parameter against the recurrence computed
        // directly in the test.
        let grads_seq = [1.0, -0.5, 0.25, 2.0, -1.0];
        let lr = 0.1;
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);

        let mut w = 0.3;
        let (mut mm, mut vv) = (0.0f64, 0.0f64);
        for (k, g) in grads_seq.iter().enumerate() {
            let t = (k + 1) as i32;
            mm = b1 * mm + (1.0 - b1) * g;
            vv = b2 * vv + (1.0 - b2) * g * g;
            let mh = mm / (1.0 - b1.powi(t));
            let vh = vv / (1.0 - b2.powi(t));
            w -= lr * mh / (vh.sqrt() + eps);
        }

        let mut m = Mlp::<f64>::zeros(&[1, 1]).unwrap();
        m.weights_mut()[0][0] = 0.3;
        let mut state = AdamState::new(&m, lr);
        for g in grads_seq {
            let mut grads = Gradients::zeros_like(&m);
            grads.weights[0][0] = g;
            adam_step(&mut m, &grads, &mut state).unwrap();
        }
        assert!((m.weights()[0][0] - w).abs() < 1e-12);
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut m = Mlp::<f64>::init(&[3, 2], 0).unwrap();
        let other = Mlp::<f64>::init(&[3, 4, 2], 0).unwrap();
        let grads = Gradients::zeros_like(&other);
        let mut state = AdamState::new(&m, 0.1);
        assert!(adam_step(&mut m, &grads, &mut state).is_err());
    }

    #[test]
    fn generic_core_works_in_f32() {
        let m32 = Mlp::<f32>::init(&[3, 4, 2], 0).unwrap();
        let y = m32.forward(&[0.1f32, 0.2, 0.3]).unwrap();
        assert_eq!(y.len(), 2);
        assert!(y.iter().all(|v| v.is_finite()));
    }
}
