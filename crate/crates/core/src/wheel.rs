//! Emotion labels on the valence-arousal unit circle.
//!
//! Every non-neutral label sits at an angle θ (degrees, valence axis at 0°),
//! so its valence is cos θ and its arousal sin θ. Pairwise similarity is the
//! clipped cosine of the included angle when both labels share a valence
//! sign, zero when the signs are opposite, and `1/N` against the neutral
//! label. Neutral is similar to itself with weight 1 so the true label still
//! dominates the neutral target row.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Angles (degrees) of the default wheel. Aliases used by different corpora
/// share an angle.
pub const DEFAULT_ANGLES: &[(&str, f64)] = &[
    ("happy", 20.0),
    ("happiness", 20.0),
    ("joy", 20.0),
    ("joyful", 20.0),
    ("excited", 50.0),
    ("powerful", 65.0),
    // 85 rather than 90 keeps surprise off the zero-valence axis.
    ("surprise", 85.0),
    ("scared", 115.0),
    ("fear", 115.0),
    ("mad", 135.0),
    ("angry", 135.0),
    ("anger", 135.0),
    ("frustrated", 150.0),
    ("disgust", 165.0),
    ("sad", 200.0),
    ("sadness", 200.0),
    ("peaceful", 340.0),
];

pub const DEFAULT_NEUTRAL: &str = "neutral";

/// Label → angle mapping as read from a wheel config document. `None` marks a
/// label without an angle (the neutral label).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WheelConfig {
    pub entries: BTreeMap<String, Option<f64>>,
}

impl WheelConfig {
    pub fn default_wheel() -> Self {
        let mut entries: BTreeMap<String, Option<f64>> = DEFAULT_ANGLES
            .iter()
            .map(|&(l, a)| (l.to_string(), Some(a)))
            .collect();
        entries.insert(DEFAULT_NEUTRAL.into(), None);
        Self { entries }
    }

    pub fn from_angles<'a>(angles: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        Self {
            entries: angles.into_iter().map(|(l, a)| (l.into(), Some(a))).collect(),
        }
    }

    pub fn with_neutral(mut self, label: &str) -> Self {
        self.entries.insert(label.into(), None);
        self
    }

    /// Labels the config lists without an angle.
    pub fn angleless(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|(_, a)| a.is_none())
            .map(|(l, _)| l.as_str())
    }
}

/// Wraps an angle into [0, 360).
pub fn wrap_degrees(angle: f64) -> f64 {
    let r = angle % 360.0;
    let r = if r < 0.0 { r + 360.0 } else { r };
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Sign of cos θ for θ in degrees, decided on the angle itself so that 90° and
/// 270° give exactly zero.
pub fn valence_sign(angle: f64) -> i8 {
    let a = wrap_degrees(angle);
    if a == 90.0 || a == 270.0 {
        0
    } else if !(90.0..=270.0).contains(&a) {
        1
    } else {
        -1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionWheel {
    labels: Vec<String>,
    /// Degrees in [0, 360); `None` only for the neutral label.
    angles: Vec<Option<f64>>,
    neutral: Option<usize>,
}

/// Which case of the similarity definition applies to a label pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityBranch {
    /// Same valence sign: clipped cosine of the included angle.
    SameValence,
    /// Opposite valence signs: zero.
    OppositeValence,
    /// Exactly one side is neutral (valence product zero): `1/N`.
    Neutral,
    /// Neutral against itself.
    NeutralSelf,
}

impl EmotionWheel {
    /// Places every label of `label_set` on the wheel.
    pub fn load(config: &WheelConfig, label_set: &[String], neutral_label: Option<&str>) -> Result<Self> {
        if let Some(n) = neutral_label {
            if !label_set.iter().any(|l| l == n) {
                return Err(Error::UnknownLabel(n.into()));
            }
        }
        let mut angles = Vec::with_capacity(label_set.len());
        let mut neutral = None;
        for (i, label) in label_set.iter().enumerate() {
            let entry = config.entries.get(label).copied().flatten();
            if Some(label.as_str()) == neutral_label {
                if entry.is_some() {
                    return Err(Error::NeutralWithAngle(label.clone()));
                }
                neutral = Some(i);
                angles.push(None);
                continue;
            }
            let angle = entry.ok_or_else(|| Error::MissingAngle(label.clone()))?;
            if !angle.is_finite() {
                return Err(Error::NonFiniteAngle(label.clone()));
            }
            if valence_sign(angle) == 0 {
                return Err(Error::ZeroValence {
                    label: label.clone(),
                    angle,
                });
            }
            angles.push(Some(wrap_degrees(angle)));
        }
        Ok(Self {
            labels: label_set.to_vec(),
            angles,
            neutral,
        })
    }

    /// Total number of labels, neutral included.
    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn neutral(&self) -> Option<usize> {
        self.neutral
    }

    pub fn angle(&self, i: usize) -> Option<f64> {
        self.angles[i]
    }

    pub fn index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.into()))
    }

    pub fn branch(&self, i: usize, j: usize) -> SimilarityBranch {
        match (self.angles[i], self.angles[j]) {
            (None, None) => SimilarityBranch::NeutralSelf,
            (None, _) | (_, None) => SimilarityBranch::Neutral,
            (Some(a), Some(b)) => {
                if valence_sign(a) * valence_sign(b) > 0 {
                    SimilarityBranch::SameValence
                } else {
                    SimilarityBranch::OppositeValence
                }
            }
        }
    }

    /// Similarity of labels `i` and `j` by index.
    pub fn similarity_at(&self, i: usize, j: usize) -> f64 {
        match self.branch(i, j) {
            SimilarityBranch::NeutralSelf => 1.0,
            SimilarityBranch::Neutral => 1.0 / self.n_labels() as f64,
            SimilarityBranch::OppositeValence => 0.0,
            SimilarityBranch::SameValence => {
                // Cosine of the difference, never of reconstructed coordinates.
                let diff = (self.angles[i].unwrap() - self.angles[j].unwrap()).to_radians();
                libm::cos(diff).max(0.0)
            }
        }
    }

    pub fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.similarity_at(self.index(a)?, self.index(b)?))
    }

    pub fn similarity_matrix(&self) -> SimilarityMatrix {
        let n = self.n_labels();
        let values = (0..n)
            .map(|i| (0..n).map(|j| self.similarity_at(i, j)).collect())
            .collect();
        SimilarityMatrix {
            labels: self.labels.clone(),
            values,
        }
    }

    /// Non-neutral labels with positive similarity to at least one other
    /// non-neutral label.
    pub fn confusing_labels(&self) -> Vec<String> {
        let n = self.n_labels();
        (0..n)
            .filter(|&i| Some(i) != self.neutral)
            .filter(|&i| {
                (0..n).any(|j| j != i && Some(j) != self.neutral && self.similarity_at(i, j) > 0.0)
            })
            .map(|i| self.labels[i].clone())
            .collect()
    }

    /// Disjoint label pairs chosen greedily by decreasing similarity, neutral
    /// excluded, at most `max_pairs` of them. Ties resolve towards lower indices.
    pub fn confusable_pairs(&self, max_pairs: Option<usize>) -> Vec<(usize, usize)> {
        let n = self.n_labels();
        let mut cands = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if Some(i) == self.neutral || Some(j) == self.neutral {
                    continue;
                }
                let s = self.similarity_at(i, j);
                if s > 0.0 {
                    cands.push((s, i, j));
                }
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        let mut used = vec![false; n];
        let mut out = Vec::new();
        for (_, i, j) in cands {
            if max_pairs.is_some_and(|m| out.len() >= m) {
                break;
            }
            if !used[i] && !used[j] {
                used[i] = true;
                used[j] = true;
                out.push((i, j));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

/// Row-stochastic label × label matrix of training targets. Row `i` is the
/// target distribution for an utterance whose gold label is `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetMatrix {
    pub(crate) labels: Vec<String>,
    pub(crate) rows: Vec<Vec<f64>>,
    /// Number of decay updates applied since initialization.
    pub(crate) updates: u64,
}

impl TargetMatrix {
    /// Divides every row by its sum. Rows must be nonnegative with a positive sum.
    pub fn from_weights(labels: Vec<String>, mut rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = labels.len();
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rows.len(),
            });
        }
        for (i, row) in rows.iter_mut().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            if row.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                return Err(Error::InvalidTarget);
            }
            let sum: f64 = row.iter().sum();
            if sum <= 0.0 {
                return Err(Error::ZeroRow(i));
            }
            row.iter_mut().for_each(|x| *x /= sum);
        }
        Ok(Self {
            labels,
            rows,
            updates: 0,
        })
    }

    pub fn identity(labels: Vec<String>) -> Self {
        let n = labels.len();
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            labels,
            rows,
            updates: 0,
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Σ_{j≠i} m_ij.
    pub fn offdiag_mass(&self, i: usize) -> f64 {
        self.rows[i]
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &x)| x)
            .sum()
    }

    pub fn max_offdiag_mass(&self) -> f64 {
        (0..self.len()).map(|i| self.offdiag_mass(i)).fold(0.0, f64::max)
    }
}

/// Row-normalizes a similarity matrix into the initial target matrix.
pub fn normalize_rows(matrix: &SimilarityMatrix) -> Result<TargetMatrix> {
    TargetMatrix::from_weights(matrix.labels.clone(), matrix.values.clone())
}
