//! Conversation-level difficulty scheduling and the decaying soft-target
//! matrix of the utterance-level curriculum.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Conversation, Dataset};
use crate::wheel::TargetMatrix;
use crate::{Error, Result};

/// Which label changes count as an emotion shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    /// Any two consecutive utterances, regardless of speaker.
    #[default]
    Any,
    /// Only consecutive utterances from different speakers.
    InterSpeakerOnly,
}

/// Per-utterance emotion-shift flags. The first utterance is never a shift.
pub fn shift_flags(conversation: &Conversation, mode: ShiftMode) -> Vec<bool> {
    let utts = &conversation.utterances;
    let mut flags = vec![false; utts.len()];
    for i in 1..utts.len() {
        let changed = utts[i].label != utts[i - 1].label;
        flags[i] = match mode {
            ShiftMode::Any => changed,
            ShiftMode::InterSpeakerOnly => changed && utts[i].speaker != utts[i - 1].speaker,
        };
    }
    flags
}

pub fn emotion_shift_count(conversation: &Conversation, mode: ShiftMode) -> usize {
    shift_flags(conversation, mode).into_iter().filter(|&f| f).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifficultyScore {
    pub conversation: String,
    pub score: f64,
    pub n_es: usize,
    pub n_u: usize,
    pub n_sp: usize,
}

impl DifficultyScore {
    /// (shifts + speakers) / (utterances + speakers); the speaker count keeps
    /// every score strictly positive.
    pub fn from_counts(conversation: impl Into<String>, n_es: usize, n_u: usize, n_sp: usize) -> Self {
        let score = (n_es + n_sp) as f64 / (n_u + n_sp) as f64;
        Self {
            conversation: conversation.into(),
            score,
            n_es,
            n_u,
            n_sp,
        }
    }
}

pub fn difficulty(conversation: &Conversation, mode: ShiftMode) -> Result<DifficultyScore> {
    if conversation.is_empty() {
        return Err(Error::EmptyConversation(conversation.id.clone()));
    }
    Ok(DifficultyScore::from_counts(
        conversation.id.clone(),
        emotion_shift_count(conversation, mode),
        conversation.len(),
        conversation.speaker_count(),
    ))
}

/// Stable ascending sort of `scores`, then an equal-count split into `k`
/// buckets (sizes differ by at most one, earlier buckets larger). Returns
/// indices into `scores`.
pub fn partition_by_score(scores: &[f64], k: usize) -> Result<Vec<Vec<usize>>> {
    let n = scores.len();
    if k == 0 || k > n {
        return Err(Error::BucketCount { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let base = n / k;
    let extra = n % k;
    let mut buckets = Vec::with_capacity(k);
    let mut rest = order.as_slice();
    for b in 0..k {
        let size = base + usize::from(b < extra);
        let (head, tail) = rest.split_at(size);
        buckets.push(head.to_vec());
        rest = tail;
    }
    Ok(buckets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumPlan {
    /// Indices into the training split, easiest bucket first.
    pub buckets: Vec<Vec<usize>>,
    /// One score per training conversation, in dataset order.
    pub scores: Vec<DifficultyScore>,
}

impl CurriculumPlan {
    pub fn k(&self) -> usize {
        self.buckets.len()
    }

    pub fn bucket_ids(&self) -> Vec<Vec<&str>> {
        self.buckets
            .iter()
            .map(|b| b.iter().map(|&i| self.scores[i].conversation.as_str()).collect())
            .collect()
    }

    /// Training indices visible after merging buckets `0..=stage`.
    pub fn cumulative(&self, stage: usize) -> Vec<usize> {
        self.buckets[..=stage].iter().flatten().copied().collect()
    }
}

/// Scores every training conversation and splits them into `k` baby-step buckets.
pub fn build_plan(dataset: &Dataset, k: usize, mode: ShiftMode) -> Result<CurriculumPlan> {
    let scores = dataset
        .train
        .iter()
        .map(|c| difficulty(c, mode))
        .collect::<Result<Vec<_>>>()?;
    let raw: Vec<f64> = scores.iter().map(|s| s.score).collect();
    let buckets = partition_by_score(&raw, k)?;
    Ok(CurriculumPlan { buckets, scores })
}

/// Shannon entropy (nats) of a count histogram, with 0·ln 0 = 0.
pub fn entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * libm::log(p)
        })
        .sum()
}

/// Label histogram of a set of training conversations.
pub fn label_histogram(dataset: &Dataset, conversations: &[usize]) -> Vec<usize> {
    let mut counts = vec![0; dataset.n_labels()];
    for &c in conversations {
        for u in &dataset.train[c].utterances {
            if let Some(i) = dataset.label_index(&u.label) {
                counts[i] += 1;
            }
        }
    }
    counts
}

/// Label entropy of the cumulative training subset after each bucket merge.
pub fn entropy_curve(plan: &CurriculumPlan, dataset: &Dataset) -> Vec<f64> {
    let mut counts = vec![0usize; dataset.n_labels()];
    let mut curve = Vec::with_capacity(plan.k());
    for bucket in &plan.buckets {
        for (c, n) in counts.iter_mut().zip(label_histogram(dataset, bucket)) {
            *c += n;
        }
        curve.push(entropy(&counts));
    }
    curve
}

/// State of the emotion-similarity curriculum: the current target matrix and
/// the schedule on which it decays towards one-hot targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscState {
    pub target: TargetMatrix,
    pub epsilon: f64,
    /// Optimizer steps between decay updates.
    pub delta_t: u64,
    /// Optimizer steps observed since the last (re)initialization.
    pub step: u64,
}

impl EscState {
    pub fn new(target: TargetMatrix, epsilon: f64, delta_t: u64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidConfig(alloc::format!("epsilon {epsilon} outside (0, 1)")));
        }
        if delta_t == 0 {
            return Err(Error::InvalidConfig("delta_t must be at least 1".into()));
        }
        Ok(Self {
            target,
            epsilon,
            delta_t,
            step: 0,
        })
    }

    /// One decay update. For row i with off-diagonal mass S, the diagonal
    /// becomes 1/(1+εS) and each off-diagonal entry ε·m/(1+εS); the row is then
    /// renormalized to absorb rounding.
    pub fn update(&mut self) {
        let eps = self.epsilon;
        for (i, row) in self.target.rows.iter_mut().enumerate() {
            let s: f64 = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &x)| x)
                .sum();
            let denom = 1.0 + eps * s;
            for (j, x) in row.iter_mut().enumerate() {
                *x = if i == j { 1.0 / denom } else { eps * *x / denom };
            }
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= sum);
        }
        self.target.updates += 1;
    }

    /// Advances the step counter by one and applies an update when it lands
    /// on a multiple of `delta_t`. Returns whether an update happened.
    pub fn tick(&mut self) -> bool {
        self.step += 1;
        if self.step % self.delta_t == 0 {
            self.update();
            true
        } else {
            false
        }
    }

    pub fn offdiag_mass(&self, label: &str) -> Result<f64> {
        let i = self
            .target
            .labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.into()))?;
        Ok(self.target.offdiag_mass(i))
    }
}

/// Functional form of [`EscState::update`].
pub fn esc_update(state: &EscState) -> EscState {
    let mut next = state.clone();
    next.update();
    next
}
