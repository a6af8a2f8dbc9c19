//! Reference classifier: hashed bag-of-tokens features with one utterance of
//! context, a one-hidden-layer tanh network and a softmax output, trained with
//! soft-target cross-entropy.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Utterance;
use crate::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 32;
pub const INIT_RANGE: f64 = 0.1;

/// 64-bit FNV-1a over the UTF-8 bytes of `token`.
///
/// Offset basis `0xcbf29ce484222325`, prime `0x100000001b3`. Fixed so feature
/// vectors are identical across runs and platforms.
pub fn token_hash(token: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Feature dimension produced by [`featurize`] for a given block size.
pub fn feature_dim(block_dim: usize) -> usize {
    2 * block_dim + 1
}

fn hashed_block(text: &str, dim: usize, out: &mut [f64]) {
    for tok in text.split_whitespace() {
        out[(token_hash(tok) % dim as u64) as usize] += 1.0;
    }
    let norm = libm::sqrt(out.iter().map(|x| x * x).sum::<f64>());
    if norm > 0.0 {
        out.iter_mut().for_each(|x| *x /= norm);
    }
}

fn fill_block(u: &Utterance, dim: usize, out: &mut [f64]) -> Result<()> {
    match &u.features {
        Some(f) if f.len() != dim => Err(Error::DimensionMismatch {
            expected: dim,
            found: f.len(),
        }),
        Some(f) => {
            out.copy_from_slice(f);
            Ok(())
        }
        None => {
            hashed_block(&u.text, dim, out);
            Ok(())
        }
    }
}

/// `[utterance block | previous utterance block | speaker changed]`.
///
/// Each block is the L2-normalized hashed token count of the text, or the
/// utterance's precomputed features when present (which must then have
/// exactly `block_dim` entries). The previous block is zero for the first
/// utterance of a conversation.
pub fn featurize(utterance: &Utterance, prev: Option<&Utterance>, block_dim: usize) -> Result<FeatureVector> {
    if block_dim == 0 {
        return Err(Error::InvalidConfig("hash dimension must be at least 1".into()));
    }
    let mut v = vec![0.0; feature_dim(block_dim)];
    fill_block(utterance, block_dim, &mut v[..block_dim])?;
    if let Some(p) = prev {
        fill_block(p, block_dim, &mut v[block_dim..2 * block_dim])?;
        if p.speaker != utterance.speaker {
            v[2 * block_dim] = 1.0;
        }
    }
    Ok(FeatureVector(v))
}

/// Weights of a d → h → r network. Matrices are row-major: `w1[j * d + i]`
/// connects input `i` to hidden unit `j`, `w2[k * h + j]` hidden `j` to output `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub d: usize,
    pub h: usize,
    pub r: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(d: usize, h: usize, r: usize) -> Self {
        Self {
            d,
            h,
            r,
            w1: vec![0.0; h * d],
            b1: vec![0.0; h],
            w2: vec![0.0; r * h],
            b2: vec![0.0; r],
        }
    }

    /// Weights uniform in [-0.1, 0.1], biases zero.
    pub fn init<R: Rng + ?Sized>(d: usize, h: usize, r: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(d, h, r);
        for w in p.w1.iter_mut().chain(p.w2.iter_mut()) {
            *w = rng.random_range(-INIT_RANGE..=INIT_RANGE);
        }
        p
    }

    pub fn check_shapes(&self) -> Result<()> {
        let expect = [self.h * self.d, self.h, self.r * self.h, self.r];
        let found = [self.w1.len(), self.b1.len(), self.w2.len(), self.b2.len()];
        for (e, f) in expect.into_iter().zip(found) {
            if e != f {
                return Err(Error::DimensionMismatch { expected: e, found: f });
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|x| x.is_finite())
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self -= scale * grads`.
    pub fn axpy(&mut self, scale: f64, grads: &ModelParams) {
        for (p, g) in self.values_mut().zip(grads.values()) {
            *p -= scale * g;
        }
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        let (d, h) = (self.d, self.h);
        let mut a = self.b1.clone();
        // Hashed features are sparse; skip the zero columns.
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, aj) in a.iter_mut().enumerate() {
                *aj += self.w1[j * d + i] * xi;
            }
        }
        debug_assert_eq!(a.len(), h);
        a.iter_mut().for_each(|z| *z = libm::tanh(*z));
        a
    }

    fn logits(&self, hidden: &[f64]) -> Vec<f64> {
        let h = self.h;
        (0..self.r)
            .map(|k| {
                let row = &self.w2[k * h..(k + 1) * h];
                self.b2[k] + row.iter().zip(hidden).map(|(w, a)| w * a).sum::<f64>()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub distribution: Vec<f64>,
}

impl Prediction {
    /// Index of the most probable label; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.distribution.iter().enumerate() {
            if p > self.distribution[best] {
                best = k;
            }
        }
        best
    }
}

/// Natural log of the softmax of `z`, computed with the max shift.
pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + libm::log(z.iter().map(|&v| libm::exp(v - m)).sum::<f64>());
    z.iter().map(|&v| v - lse).collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|&v| libm::exp(v - m)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn check_input(params: &ModelParams, x: &FeatureVector) -> Result<()> {
    params.check_shapes()?;
    if x.dim() != params.d {
        return Err(Error::DimensionMismatch {
            expected: params.d,
            found: x.dim(),
        });
    }
    Ok(())
}

pub fn forward(params: &ModelParams, x: &FeatureVector) -> Result<Prediction> {
    check_input(params, x)?;
    let a = params.hidden(x.as_slice());
    Ok(Prediction {
        distribution: softmax(&params.logits(&a)),
    })
}

fn check_target(target: &[f64], r: usize) -> Result<()> {
    if target.len() != r {
        return Err(Error::DimensionMismatch {
            expected: r,
            found: target.len(),
        });
    }
    if target.iter().any(|&t| !t.is_finite() || t < 0.0) {
        return Err(Error::InvalidTarget);
    }
    if (target.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidTarget);
    }
    Ok(())
}

/// Soft-target cross-entropy summed over the batch, −Σ_n Σ_k t_nk · ln P_nk,
/// with its exact gradient.
pub fn loss_and_grad(params: &ModelParams, batch: &[(&FeatureVector, &[f64])]) -> Result<(f64, ModelParams)> {
    params.check_shapes()?;
    let (d, h, r) = (params.d, params.h, params.r);
    let mut grads = ModelParams::zeros(d, h, r);
    let mut loss = 0.0;
    for &(x, target) in batch {
        check_input(params, x)?;
        check_target(target, r)?;
        let x = x.as_slice();
        let a = params.hidden(x);
        let logp = log_softmax(&params.logits(&a));
        for (&t, &lp) in target.iter().zip(&logp) {
            if t > 0.0 {
                loss -= t * lp;
            }
        }
        // d loss / d logits = P − t because the target sums to one.
        let dz2: Vec<f64> = logp.iter().zip(target).map(|(lp, t)| libm::exp(*lp) - t).collect();
        let mut da = vec![0.0; h];
        for (k, &g) in dz2.iter().enumerate() {
            grads.b2[k] += g;
            let row = k * h;
            for j in 0..h {
                grads.w2[row + j] += g * a[j];
                da[j] += params.w2[row + j] * g;
            }
        }
        for j in 0..h {
            let dz1 = da[j] * (1.0 - a[j] * a[j]);
            grads.b1[j] += dz1;
            let row = j * d;
            for (i, &xi) in x.iter().enumerate() {
                if xi != 0.0 {
                    grads.w1[row + i] += dz1 * xi;
                }
            }
        }
    }
    Ok((loss, grads))
}

/// `params − lr · grads`, elementwise.
pub fn sgd_step(params: &ModelParams, grads: &ModelParams, lr: f64) -> ModelParams {
    let mut next = params.clone();
    next.axpy(lr, grads);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::utt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(token_hash(""), 0xcbf29ce484222325);
        assert_eq!(token_hash("a"), 0xaf63dc4c8601ec8c);
        assert_eq!(token_hash("foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_text_without_context() {
        let v = featurize(&utt("0", "a", "x", ""), None, 8).unwrap();
        assert_eq!(v.dim(), 17);
        assert!(v.0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn identical_utterances_identical_features() {
        let u = utt("0", "a", "x", "hello there");
        let v = utt("1", "a", "x", "hello there");
        assert_eq!(featurize(&u, None, 16).unwrap(), featurize(&v, None, 16).unwrap());
    }

    #[test]
    fn repeated_token_same_direction() {
        let once = featurize(&utt("0", "a", "x", "abc"), None, 16).unwrap();
        let twice = featurize(&utt("0", "a", "x", "abc abc"), None, 16).unwrap();
        assert_eq!(once, twice);
        let norm: f64 = once.0[..16].iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-15);
    }

    #[test]
    fn context_block_and_speaker_flag() {
        let prev = utt("0", "a", "x", "hi");
        let cur = utt("1", "b", "x", "yo");
        let v = featurize(&cur, Some(&prev), 4).unwrap();
        let p = featurize(&prev, None, 4).unwrap();
        assert_eq!(&v.0[4..8], &p.0[..4]);
        assert_eq!(v.0[8], 1.0);
        let same = featurize(&utt("1", "a", "x", "yo"), Some(&prev), 4).unwrap();
        assert_eq!(same.0[8], 0.0);
    }

    #[test]
    fn precomputed_features_replace_text() {
        let mut u = utt("0", "a", "x", "ignored");
        u.features = Some(vec![1.0, 2.0, 3.0]);
        let v = featurize(&u, None, 3).unwrap();
        assert_eq!(&v.0[..3], &[1.0, 2.0, 3.0]);
        assert!(matches!(featurize(&u, None, 4), Err(Error::DimensionMismatch { .. })));
        assert!(featurize(&u, None, 0).is_err());
    }

    #[test]
    fn zero_weights_give_uniform() {
        let p = ModelParams::zeros(5, 4, 3);
        let pred = forward(&p, &FeatureVector(vec![1.0; 5])).unwrap();
        for &q in &pred.distribution {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_sums_to_one_and_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ModelParams::init(5, 4, 3, &mut rng);
        let x = FeatureVector(vec![0.3, -1.0, 0.0, 2.0, 0.5]);
        let a = forward(&p, &x).unwrap();
        assert!((a.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(a.distribution.iter().all(|&q| q > 0.0));
        p.b2.iter_mut().for_each(|b| *b += 7.5);
        let b = forward(&p, &x).unwrap();
        for (u, v) in a.distribution.iter().zip(&b.distribution) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch() {
        let p = ModelParams::zeros(5, 4, 3);
        assert!(forward(&p, &FeatureVector(vec![0.0; 4])).is_err());
        let mut bad = p.clone();
        bad.b1.pop();
        assert!(forward(&bad, &FeatureVector(vec![0.0; 5])).is_err());
    }

    #[test]
    fn one_hot_loss_reduces_to_nll() {
        // Four outputs, zero weights: P[gold] = 1/4.
        let p = ModelParams::zeros(2, 3, 4);
        let x = FeatureVector(vec![0.5, 0.5]);
        let t = [0.0, 1.0, 0.0, 0.0];
        let (loss, _) = loss_and_grad(&p, &[(&x, &t)]).unwrap();
        assert!((loss - 1.386_294_361_119_890_6).abs() < 1e-12);
    }

    #[test]
    fn target_equal_to_prediction_gives_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = ModelParams::init(3, 4, 3, &mut rng);
        let x = FeatureVector(vec![1.0, -0.5, 0.25]);
        let pred = forward(&p, &x).unwrap().distribution;
        let (loss, _) = loss_and_grad(&p, &[(&x, &pred)]).unwrap();
        let h: f64 = pred.iter().map(|q| -q * libm::log(*q)).sum();
        assert!((loss - h).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_stochastic_target() {
        let p = ModelParams::zeros(2, 2, 2);
        let x = FeatureVector(vec![0.0, 0.0]);
        assert_eq!(loss_and_grad(&p, &[(&x, &[0.5, 0.6])]).unwrap_err(), Error::InvalidTarget);
        assert_eq!(loss_and_grad(&p, &[(&x, &[1.5, -0.5])]).unwrap_err(), Error::InvalidTarget);
    }

    #[test]
    fn sgd_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ModelParams::init(3, 2, 2, &mut rng);
        let g = ModelParams::zeros(3, 2, 2);
        assert_eq!(sgd_step(&p, &g, 0.5), p);
        let mut g2 = p.clone();
        g2.values_mut().for_each(|v| *v = 1.0);
        assert_eq!(sgd_step(&p, &g2, 0.0), p);
    }

    #[test]
    fn small_step_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ModelParams::init(4, 3, 3, &mut rng);
        let x = FeatureVector(vec![1.0, 0.0, -1.0, 0.5]);
        let t = [0.0, 0.0, 1.0];
        let (l0, g) = loss_and_grad(&p, &[(&x, &t)]).unwrap();
        let (l1, _) = loss_and_grad(&sgd_step(&p, &g, 0.01), &[(&x, &t)]).unwrap();
        assert!(l1 < l0);
    }
}
