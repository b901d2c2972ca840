//! Feed-forward network with five classification heads, from scratch in
//! f64. Hidden layers apply one activation; each head applies a normalized
//! exponential so its outputs form a probability vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::workload::{FeatureVector, FEATURE_LEN};
use crate::{Error, Result};

/// Output head sizes: FAT query (3), FAT update (4), FDT query (2),
/// FDT update (4), data write (3).
pub const HEAD_SIZES: [usize; 5] = [3, 4, 2, 4, 3];

/// Current model file schema.
pub const MODEL_VERSION: u32 = 1;
/// Feature encoding the model was trained against.
pub const FEATURE_ENCODING_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    /// Pass-through, for isolating the linear algebra in tests.
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    pub fn grad_from_output(&self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer, weights row-major `(out_dim, in_dim)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Dense {
        Dense { in_dim, out_dim, w: vec![0.0; in_dim * out_dim], b: vec![0.0; out_dim] }
    }

    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, scale: f64, rng: &mut R) -> Dense {
        let bound = scale / (in_dim as f64).sqrt();
        let mut d = Dense::zeros(in_dim, out_dim);
        for w in d.w.iter_mut() {
            *w = rng.gen_range(-bound..bound);
        }
        d
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            *out_v = acc;
        }
    }
}

/// The strategy-selection network plus its input normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub version: u32,
    pub feature_encoding: u32,
    /// Input and hidden widths, e.g. `[18, 32, 32]`.
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    pub hidden: Vec<Dense>,
    pub heads: Vec<Dense>,
}

/// Activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Normalized input actually fed to the first layer.
    pub input: Vec<f64>,
    /// Output of each hidden layer.
    pub hidden_out: Vec<Vec<f64>>,
    /// Per-head probability vectors.
    pub head_probs: Vec<Vec<f64>>,
}

pub(crate) fn softmax(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

impl Mlp {
    /// Fresh model with seeded uniform init and identity normalization.
    pub fn new(hidden_dims: &[usize], activation: Activation, scale: f64, seed: u64) -> Mlp {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut layer_dims = vec![FEATURE_LEN];
        layer_dims.extend_from_slice(hidden_dims);
        let mut hidden = Vec::new();
        for i in 1..layer_dims.len() {
            hidden.push(Dense::init(layer_dims[i - 1], layer_dims[i], scale, &mut rng));
        }
        let last = *layer_dims.last().unwrap();
        let heads = HEAD_SIZES
            .iter()
            .map(|&h| Dense::init(last, h, scale, &mut rng))
            .collect();
        Mlp {
            version: MODEL_VERSION,
            feature_encoding: FEATURE_ENCODING_VERSION,
            layer_dims,
            activation,
            norm_mean: vec![0.0; FEATURE_LEN],
            norm_std: vec![1.0; FEATURE_LEN],
            hidden,
            heads,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn normalize(&self, x: &FeatureVector) -> Vec<f64> {
        x.0.iter()
            .zip(self.norm_mean.iter().zip(&self.norm_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Full forward pass: hidden layers feed the five softmax heads.
    pub fn forward(&self, x: &FeatureVector) -> Forward {
        assert_eq!(x.0.len(), self.input_dim(), "feature length mismatch");
        let input = self.normalize(x);
        let mut hidden_out: Vec<Vec<f64>> = Vec::with_capacity(self.hidden.len());
        let mut cur = input.clone();
        for layer in &self.hidden {
            let mut z = vec![0.0; layer.out_dim];
            layer.matvec(&cur, &mut z);
            for v in z.iter_mut() {
                *v = self.activation.apply(*v);
            }
            hidden_out.push(z.clone());
            cur = z;
        }
        let head_probs = self
            .heads
            .iter()
            .map(|h| {
                let mut z = vec![0.0; h.out_dim];
                h.matvec(&cur, &mut z);
                softmax(&mut z);
                z
            })
            .collect();
        Forward { input, hidden_out, head_probs }
    }

    /// Serializes to the versioned JSON model format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// Loads and validates a model from its JSON form.
    pub fn from_json(text: &str) -> Result<Mlp> {
        let m: Mlp =
            serde_json::from_str(text).map_err(|e| Error::Model(format!("bad model file: {e}")))?;
        if m.version != MODEL_VERSION {
            return Err(Error::Model(format!("unsupported model version {}", m.version)));
        }
        if m.feature_encoding != FEATURE_ENCODING_VERSION {
            return Err(Error::Model(format!(
                "feature encoding {} does not match this build",
                m.feature_encoding
            )));
        }
        m.check_shape()?;
        Ok(m)
    }

    pub fn check_shape(&self) -> Result<()> {
        if self.layer_dims.first() != Some(&FEATURE_LEN) {
            return Err(Error::Model("input width must match the feature length".into()));
        }
        if self.hidden.len() + 1 != self.layer_dims.len() {
            return Err(Error::Model("hidden layer count disagrees with layer_dims".into()));
        }
        for (i, l) in self.hidden.iter().enumerate() {
            if l.in_dim != self.layer_dims[i]
                || l.out_dim != self.layer_dims[i + 1]
                || l.w.len() != l.in_dim * l.out_dim
                || l.b.len() != l.out_dim
            {
                return Err(Error::Model(format!("hidden layer {i} has inconsistent shape")));
            }
        }
        let last = *self.layer_dims.last().unwrap();
        if self.heads.len() != HEAD_SIZES.len() {
            return Err(Error::Model("expected five output heads".into()));
        }
        for (i, h) in self.heads.iter().enumerate() {
            if h.in_dim != last || h.out_dim != HEAD_SIZES[i] || h.w.len() != h.in_dim * h.out_dim {
                return Err(Error::Model(format!("head {i} has inconsistent shape")));
            }
        }
        if self.norm_mean.len() != FEATURE_LEN || self.norm_std.len() != FEATURE_LEN {
            return Err(Error::Model("normalization vectors must match feature length".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::FeatureVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_x(seed: u64) -> FeatureVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = [0.0; FEATURE_LEN];
        for v in x.iter_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        FeatureVector(x)
    }

    #[test]
    fn zero_weights_give_uniform_heads() {
        let mut m = Mlp::new(&[8], Activation::Sigmoid, 1.0, 0);
        for l in m.hidden.iter_mut().chain(m.heads.iter_mut()) {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        let f = m.forward(&random_x(1));
        for (h, p) in f.head_probs.iter().enumerate() {
            let expect = 1.0 / HEAD_SIZES[h] as f64;
            for v in p {
                assert!((v - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn heads_are_probability_vectors() {
        let m = Mlp::new(&[32, 32], Activation::Sigmoid, 1.0, 42);
        for s in 0..20 {
            let f = m.forward(&random_x(s));
            for p in &f.head_probs {
                let sum: f64 = p.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
                assert!(p.iter().all(|v| *v > 0.0 && *v < 1.0));
            }
        }
    }

    #[test]
    fn forward_matches_manual_two_layer_composition() {
        // X2 = f2(W2 (f1(W1 X + b1)) + b2), checked to 1e-12 against an
        // independent hand-rolled evaluation.
        let m = Mlp::new(&[16, 12], Activation::Sigmoid, 1.0, 7);
        for s in 0..10 {
            let x = random_x(s);
            let f = m.forward(&x);

            let xin = m.normalize(&x);
            let mut h1 = vec![0.0; 16];
            for o in 0..16 {
                let mut z = m.hidden[0].b[o];
                for i in 0..18 {
                    z += m.hidden[0].w[o * 18 + i] * xin[i];
                }
                h1[o] = 1.0 / (1.0 + (-z).exp());
            }
            let mut h2 = vec![0.0; 12];
            for o in 0..12 {
                let mut z = m.hidden[1].b[o];
                for i in 0..16 {
                    z += m.hidden[1].w[o * 16 + i] * h1[i];
                }
                h2[o] = 1.0 / (1.0 + (-z).exp());
            }
            for (a, b) in f.hidden_out[1].iter().zip(&h2) {
                assert!((a - b).abs() < 1e-12);
            }
            // And the heads on top of the composed output.
            for (hi, head) in m.heads.iter().enumerate() {
                let mut z = vec![0.0; head.out_dim];
                head.matvec(&h2, &mut z);
                softmax(&mut z);
                for (a, b) in f.head_probs[hi].iter().zip(&z) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn identity_single_layer_passes_input_through() {
        let mut m = Mlp::new(&[FEATURE_LEN], Activation::Identity, 1.0, 0);
        let l = &mut m.hidden[0];
        l.w.fill(0.0);
        for i in 0..FEATURE_LEN {
            l.w[i * FEATURE_LEN + i] = 1.0;
        }
        l.b.fill(0.0);
        let x = random_x(3);
        let f = m.forward(&x);
        for (a, b) in f.hidden_out[0].iter().zip(&f.input) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn model_json_roundtrip_and_validation() {
        let m = Mlp::new(&[8, 8], Activation::Sigmoid, 1.0, 5);
        let text = m.to_json();
        let back = Mlp::from_json(&text).unwrap();
        let x = random_x(0);
        let a = m.forward(&x).head_probs;
        let b = back.forward(&x).head_probs;
        assert_eq!(a, b);

        let mut broken = m.clone();
        broken.heads.pop();
        assert!(Mlp::from_json(&broken.to_json()).is_err());
        let mut badver = m.clone();
        badver.version = 99;
        assert!(Mlp::from_json(&badver.to_json()).is_err());
    }

    #[test]
    fn head_scale_stability_of_argmax() {
        // Scaling one head's logits by a positive constant (through its
        // weights and bias) must not change the argmax.
        let m = Mlp::new(&[8], Activation::Sigmoid, 1.0, 11);
        let x = random_x(2);
        let before = m.forward(&x).head_probs;
        let mut scaled = m.clone();
        for v in scaled.heads[1].w.iter_mut() {
            *v *= 3.0;
        }
        for v in scaled.heads[1].b.iter_mut() {
            *v *= 3.0;
        }
        let after = scaled.forward(&x).head_probs;
        let argmax = |p: &[f64]| {
            p.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0
        };
        assert_eq!(argmax(&before[1]), argmax(&after[1]));
    }
}
