//! Small dense networks with hand-written backprop and Adam.
//!
//! Parameters live in one flat `Vec<f64>`: for each layer in order, the
//! weight matrix row-major as `[out][in]`, then the bias vector. Gradients
//! and Adam moments share that layout, which is also the order written to
//! checkpoints.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("layer sizes {0:?}: need at least two layers, all of size >= 1")]
    InvalidSizes(Vec<usize>),
    #[error("expected {expected} values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("forward cache does not belong to the current parameters")]
    StaleCache,
}

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// Fully connected network: ReLU on hidden layers, identity on the output.
#[derive(Debug)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    /// Changes whenever the parameters do; ties forward caches to a version.
    generation: u64,
}

impl Clone for Mlp {
    fn clone(&self) -> Self {
        Self {
            sizes: self.sizes.clone(),
            params: self.params.clone(),
            generation: next_generation(),
        }
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes && self.params == other.params
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn check_sizes(sizes: &[usize]) -> Result<(), NnError> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(NnError::InvalidSizes(sizes.to_vec()));
    }
    Ok(())
}

/// Intermediate activations of one forward pass, reused by `backward`.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// Input followed by each layer's post-activation output.
    acts: Vec<Vec<f64>>,
    generation: u64,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], |v| v.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    data: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            data: vec![0.0; net.params.len()],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn zero(&mut self) {
        self.data.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<(), NnError> {
        if other.data.len() != self.data.len() {
            return Err(NnError::DimensionMismatch {
                expected: self.data.len(),
                found: other.data.len(),
            });
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Mlp {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self, NnError> {
        check_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            params.extend((0..n_in * n_out).map(|_| rng.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
            generation: next_generation(),
        })
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self, NnError> {
        check_sizes(sizes)?;
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(NnError::DimensionMismatch {
                expected,
                found: params.len(),
            });
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
            generation: next_generation(),
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.generation = next_generation();
        &mut self.params
    }

    /// Copies parameters from a network of identical shape.
    pub fn copy_from(&mut self, other: &Mlp) -> Result<(), NnError> {
        if other.sizes != self.sizes {
            return Err(NnError::DimensionMismatch {
                expected: self.params.len(),
                found: other.params.len(),
            });
        }
        self.params.copy_from_slice(&other.params);
        self.generation = next_generation();
        Ok(())
    }

    /// `(weights, biases)` of layer `l`, weights row-major `[out][in]`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let offset: usize = self.sizes[..l + 1].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        (w, b)
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NnError> {
        if x.len() != self.input_size() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_size(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Plain inference.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, &mut cache)?;
        Ok(cache.acts.pop().expect("output layer"))
    }

    /// Forward pass that keeps the activations needed by [`Mlp::backward`].
    /// `cache` buffers are reused across calls.
    pub fn forward_cached<'c>(&self, x: &[f64], cache: &'c mut ForwardCache) -> Result<&'c [f64], NnError> {
        self.check_input(x)?;
        let layers = self.sizes.len();
        cache.acts.resize_with(layers, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        let mut offset = 0;
        for l in 0..layers - 1 {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let (prev, next) = cache.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            out.clear();
            let hidden = l + 2 < layers;
            out.extend(w.chunks_exact(n_in).zip(b).map(|(row, &bias)| {
                let z = bias + dot(row, input);
                if hidden {
                    z.max(0.0)
                } else {
                    z
                }
            }));
        }
        cache.generation = self.generation;
        Ok(cache.output())
    }

    /// Accumulates into `grads` the gradient of a scalar whose derivative
    /// with respect to the network output is `grad_out`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], grads: &mut Gradients) -> Result<(), NnError> {
        if cache.generation != self.generation || cache.acts.len() != self.sizes.len() {
            return Err(NnError::StaleCache);
        }
        if grad_out.len() != self.output_size() {
            return Err(NnError::DimensionMismatch {
                expected: self.output_size(),
                found: grad_out.len(),
            });
        }
        if grads.data.len() != self.params.len() {
            return Err(NnError::DimensionMismatch {
                expected: self.params.len(),
                found: grads.data.len(),
            });
        }
        let layers = self.sizes.len();
        let mut g: Vec<f64> = grad_out.to_vec();
        let mut g_in: Vec<f64> = Vec::new();
        let mut end = self.params.len();
        for l in (0..layers - 1).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let start = end - (n_in * n_out + n_out);
            let out_act = &cache.acts[l + 1];
            if l + 2 < layers {
                for (gi, &a) in g.iter_mut().zip(out_act) {
                    if a <= 0.0 {
                        *gi = 0.0;
                    }
                }
            }
            let input = &cache.acts[l];
            let w = &self.params[start..start + n_in * n_out];
            let (gw, gb) = grads.data[start..end].split_at_mut(n_in * n_out);
            for ((o, &go), gw_row) in g.iter().enumerate().zip(gw.chunks_exact_mut(n_in)) {
                if go != 0.0 {
                    axpy(go, input, gw_row);
                    gb[o] += go;
                }
            }
            if l > 0 {
                g_in.clear();
                g_in.resize(n_in, 0.0);
                for (&go, row) in g.iter().zip(w.chunks_exact(n_in)) {
                    if go != 0.0 {
                        axpy(go, row, &mut g_in);
                    }
                }
                std::mem::swap(&mut g, &mut g_in);
            }
            end = start;
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        Self::with_len(net.params.len(), learning_rate)
    }

    pub fn with_len(len: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// Rebuilds an optimizer from saved moments.
    pub fn from_parts(
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        step_count: u64,
        m: Vec<f64>,
        v: Vec<f64>,
    ) -> Result<Self, NnError> {
        if m.len() != v.len() {
            return Err(NnError::DimensionMismatch {
                expected: m.len(),
                found: v.len(),
            });
        }
        Ok(Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step_count,
            m,
            v,
        })
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<(), NnError> {
        let n = net.params.len();
        if grads.data.len() != n || self.m.len() != n {
            return Err(NnError::DimensionMismatch {
                expected: n,
                found: if self.m.len() != n { self.m.len() } else { grads.data.len() },
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((p, &g), m), v) in net.params.iter_mut().zip(&grads.data).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        net.generation = next_generation();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Straight-line reimplementation: explicit index loops, no helpers.
    fn reference_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut offset = 0;
        let s = net.sizes();
        for l in 0..s.len() - 1 {
            let mut z = vec![0.0; s[l + 1]];
            for o in 0..s[l + 1] {
                let mut acc = net.params()[offset + s[l] * s[l + 1] + o];
                for i in 0..s[l] {
                    acc += net.params()[offset + o * s[l] + i] * a[i];
                }
                z[o] = if l + 2 < s.len() && acc < 0.0 { 0.0 } else { acc };
            }
            offset += s[l] * s[l + 1] + s[l + 1];
            a = z;
        }
        a
    }

    #[test]
    fn init_is_seeded_with_zero_biases() {
        let a = Mlp::init(&[13, 64, 64, 6], 9).unwrap();
        let b = Mlp::init(&[13, 64, 64, 6], 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.params().len(), 13 * 64 + 64 + 64 * 64 + 64 + 64 * 6 + 6);
        for l in 0..3 {
            assert!(a.layer(l).1.iter().all(|&v| v == 0.0));
        }
        let bound = 1.0 / 13f64.sqrt();
        assert!(a.layer(0).0.iter().all(|w| w.abs() <= bound));
        assert_ne!(a, Mlp::init(&[13, 64, 64, 6], 10).unwrap());
    }

    #[test]
    fn invalid_sizes() {
        assert_eq!(Mlp::init(&[13], 0), Err(NnError::InvalidSizes(vec![13])));
        assert!(Mlp::init(&[3, 0, 2], 0).is_err());
        assert!(Mlp::from_params(&[2, 2], vec![0.0; 5]).is_err());
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::from_params(&[3, 4, 2], vec![0.0; param_count(&[3, 4, 2])]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut p = vec![0.0; 12];
        for i in 0..3 {
            p[i * 3 + i] = 1.0;
        }
        let net = Mlp::from_params(&[3, 3], p).unwrap();
        assert_eq!(net.forward(&[0.5, -1.5, 2.0]).unwrap(), vec![0.5, -1.5, 2.0]);
    }

    #[test]
    fn forward_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..20 {
            let net = Mlp::init(&[7, 9, 5, 3], seed).unwrap();
            let x = rand_vec(&mut rng, 7);
            let got = net.forward(&x).unwrap();
            let want = reference_forward(&net, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12 * (1.0 + w.abs()));
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let net = Mlp::init(&[3, 2], 0).unwrap();
        assert_eq!(
            net.forward(&[1.0]),
            Err(NnError::DimensionMismatch { expected: 3, found: 1 })
        );
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let net = Mlp::init(&[4, 5, 3], 2).unwrap();
        let mut cache = ForwardCache::default();
        net.forward_cached(&[0.1, 0.2, 0.3, 0.4], &mut cache).unwrap();
        let mut g = Gradients::zeros_like(&net);
        net.backward(&cache, &[0.0; 3], &mut g).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient_is_input() {
        let net = Mlp::init(&[3, 2], 5).unwrap();
        let x = [0.3, -0.7, 1.1];
        let mut cache = ForwardCache::default();
        net.forward_cached(&x, &mut cache).unwrap();
        let mut g = Gradients::zeros_like(&net);
        net.backward(&cache, &[1.0, 0.0], &mut g).unwrap();
        assert_eq!(&g.as_slice()[0..3], &x);
        assert_eq!(&g.as_slice()[3..6], &[0.0; 3]);
        assert_eq!(&g.as_slice()[6..8], &[1.0, 0.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let h = 1e-6;
        for seed in 0..25 {
            let sizes = [5, 6, 4, 3];
            let net = Mlp::init(&sizes, seed).unwrap();
            let x = rand_vec(&mut rng, 5);
            let dir = rand_vec(&mut rng, 3);
            let loss = |n: &Mlp| dot(&n.forward(&x).unwrap(), &dir);
            let mut cache = ForwardCache::default();
            net.forward_cached(&x, &mut cache).unwrap();
            let mut g = Gradients::zeros_like(&net);
            net.backward(&cache, &dir, &mut g).unwrap();
            for i in 0..net.params().len() {
                let mut plus = net.clone();
                plus.params_mut()[i] += h;
                let mut minus = net.clone();
                minus.params_mut()[i] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = g.as_slice()[i];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                assert!(err <= 1e-4, "seed {seed} param {i}: fd {fd} analytic {an}");
            }
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = Mlp::init(&[2, 2], 0).unwrap();
        let mut cache = ForwardCache::default();
        net.forward_cached(&[1.0, 1.0], &mut cache).unwrap();
        net.params_mut()[0] += 1.0;
        let mut g = Gradients::zeros_like(&net);
        assert_eq!(net.backward(&cache, &[1.0, 1.0], &mut g), Err(NnError::StaleCache));
        let other = Mlp::init(&[2, 2], 0).unwrap();
        assert_eq!(other.backward(&cache, &[1.0, 1.0], &mut g), Err(NnError::StaleCache));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut net = Mlp::from_params(&[1, 1], vec![1.0, 0.0]).unwrap();
        let mut adam = Adam::new(&net, 0.1);
        let mut g = Gradients::zeros_like(&net);
        g.as_mut_slice()[0] = 1.0;
        adam.step(&mut net, &g).unwrap();
        // m_hat = 1, v_hat = 1, so w = 1 - 0.1 / (1 + 1e-8).
        assert!((net.params()[0] - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(net.params()[1], 0.0);
    }

    #[test]
    fn adam_zero_gradients_leave_parameters() {
        let mut net = Mlp::init(&[3, 4, 2], 1).unwrap();
        let before = net.params().to_vec();
        let mut adam = Adam::new(&net, 0.01);
        let g = Gradients::zeros_like(&net);
        for _ in 0..5 {
            adam.step(&mut net, &g).unwrap();
        }
        assert_eq!(net.params(), &before[..]);
    }

    #[test]
    fn adam_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::init(&[3, 4, 2], 1).unwrap();
        let mut g = Gradients::zeros_like(&net);
        g.as_mut_slice().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let (mut a, mut b) = (net.clone(), net.clone());
        let (mut oa, mut ob) = (Adam::new(&net, 0.01), Adam::new(&net, 0.01));
        oa.step(&mut a, &g).unwrap();
        ob.step(&mut b, &g).unwrap();
        assert_eq!(a, b);
        assert_eq!(oa, ob);
        let mut wrong = Gradients::zeros_like(&Mlp::init(&[2, 2], 0).unwrap());
        wrong.scale(1.0);
        assert!(oa.step(&mut a, &wrong).is_err());
    }
}
