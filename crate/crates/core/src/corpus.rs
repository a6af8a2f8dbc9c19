//! Conversation data model, validation and summary statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub text: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub utterances: Vec<Utterance>,
    pub participants: BTreeSet<String>,
}

impl Conversation {
    /// Builds a conversation whose participant set is the set of speakers.
    pub fn new(id: impl Into<String>, utterances: Vec<Utterance>) -> Self {
        let participants = utterances.iter().map(|u| u.speaker.clone()).collect();
        Self {
            id: id.into(),
            utterances,
            participants,
        }
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Number of distinct speakers that actually utter something.
    pub fn speaker_count(&self) -> usize {
        self.utterances
            .iter()
            .map(|u| u.speaker.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub label_set: Vec<String>,
    pub neutral_label: Option<String>,
    pub train: Vec<Conversation>,
    pub val: Vec<Conversation>,
    pub test: Vec<Conversation>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, label_set: Vec<String>, neutral_label: Option<String>) -> Self {
        Self {
            name: name.into(),
            label_set,
            neutral_label,
            ..Self::default()
        }
    }

    pub fn split(&self, split: Split) -> &[Conversation] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<Conversation> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.label_set.iter().position(|l| l == label)
    }

    pub fn n_labels(&self) -> usize {
        self.label_set.len()
    }

    pub fn conversation_count(&self) -> usize {
        Split::ALL.iter().map(|&s| self.split(s).len()).sum()
    }

    /// Dimensionality of the precomputed feature vectors, if any utterance carries one.
    pub fn feature_dim(&self) -> Option<usize> {
        Split::ALL
            .iter()
            .flat_map(|&s| self.split(s))
            .flat_map(|c| &c.utterances)
            .find_map(|u| u.features.as_ref().map(Vec::len))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IssueKind {
    UnknownLabel { label: String },
    SpeakerNotParticipant { speaker: String },
    SilentParticipant { speaker: String },
    SingleSpeaker,
    DuplicateConversation,
    EmptyConversation,
    EmptyText { utterance: String },
    DuplicateUtterance { utterance: String },
    FeatureDimension { expected: usize, found: usize },
    NonFiniteFeature { utterance: String },
    NeutralNotInLabelSet { label: String },
    DuplicateLabel { label: String },
}

/// One finding from [`validate`]. Issues carry no positional index, so the
/// multiset of issues does not depend on conversation order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub split: Option<Split>,
    pub conversation: Option<String>,
    #[serde(flatten)]
    pub kind: IssueKind,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}")?;
        if let Some(split) = self.split {
            write!(f, " [{split}")?;
            if let Some(c) = &self.conversation {
                write!(f, "/{c}")?;
            }
            write!(f, "]")?;
        }
        let msg = match &self.kind {
            IssueKind::UnknownLabel { label } => format!("label `{label}` not in label set"),
            IssueKind::SpeakerNotParticipant { speaker } => {
                format!("speaker `{speaker}` not among participants")
            }
            IssueKind::SilentParticipant { speaker } => {
                format!("participant `{speaker}` never speaks")
            }
            IssueKind::SingleSpeaker => "conversation has a single speaker".into(),
            IssueKind::DuplicateConversation => "duplicate conversation id".into(),
            IssueKind::EmptyConversation => "conversation has no utterances".into(),
            IssueKind::EmptyText { utterance } => {
                format!("utterance `{utterance}` has empty text and no features")
            }
            IssueKind::DuplicateUtterance { utterance } => {
                format!("duplicate utterance id `{utterance}`")
            }
            IssueKind::FeatureDimension { expected, found } => {
                format!("feature dimension {found}, expected {expected}")
            }
            IssueKind::NonFiniteFeature { utterance } => {
                format!("utterance `{utterance}` has a non-finite feature")
            }
            IssueKind::NeutralNotInLabelSet { label } => {
                format!("neutral label `{label}` not in label set")
            }
            IssueKind::DuplicateLabel { label } => format!("label `{label}` declared twice"),
        };
        write!(f, ": {msg}")
    }
}

impl Issue {
    fn new(severity: Severity, split: Split, conv: &str, kind: IssueKind) -> Self {
        Self {
            severity,
            split: Some(split),
            conversation: Some(conv.into()),
            kind,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

/// Checks every data-model invariant. Returns an empty list iff the dataset is
/// well formed; single-speaker conversations are reported as warnings.
pub fn validate(dataset: &Dataset) -> Vec<Issue> {
    let mut issues = Vec::new();
    let labels: BTreeSet<&str> = dataset.label_set.iter().map(String::as_str).collect();

    if labels.len() != dataset.label_set.len() {
        let mut seen = BTreeSet::new();
        for l in &dataset.label_set {
            if !seen.insert(l.as_str()) {
                issues.push(Issue {
                    severity: Severity::Error,
                    split: None,
                    conversation: None,
                    kind: IssueKind::DuplicateLabel { label: l.clone() },
                });
            }
        }
    }
    if let Some(n) = &dataset.neutral_label {
        if !labels.contains(n.as_str()) {
            issues.push(Issue {
                severity: Severity::Error,
                split: None,
                conversation: None,
                kind: IssueKind::NeutralNotInLabelSet { label: n.clone() },
            });
        }
    }

    let feature_dim = dataset.feature_dim();

    for split in Split::ALL {
        let mut ids = BTreeSet::new();
        for conv in dataset.split(split) {
            let cid = conv.id.as_str();
            if !ids.insert(cid) {
                issues.push(Issue::new(Severity::Error, split, cid, IssueKind::DuplicateConversation));
            }
            if conv.utterances.is_empty() {
                issues.push(Issue::new(Severity::Error, split, cid, IssueKind::EmptyConversation));
                continue;
            }
            let mut utt_ids = BTreeSet::new();
            let mut speakers = BTreeSet::new();
            for u in &conv.utterances {
                if !utt_ids.insert(u.id.as_str()) {
                    issues.push(Issue::new(
                        Severity::Error,
                        split,
                        cid,
                        IssueKind::DuplicateUtterance { utterance: u.id.clone() },
                    ));
                }
                if !labels.contains(u.label.as_str()) {
                    issues.push(Issue::new(
                        Severity::Error,
                        split,
                        cid,
                        IssueKind::UnknownLabel { label: u.label.clone() },
                    ));
                }
                if !conv.participants.contains(&u.speaker) {
                    issues.push(Issue::new(
                        Severity::Error,
                        split,
                        cid,
                        IssueKind::SpeakerNotParticipant { speaker: u.speaker.clone() },
                    ));
                }
                speakers.insert(u.speaker.as_str());
                match (&u.features, feature_dim) {
                    (Some(f), Some(dim)) => {
                        if f.len() != dim {
                            issues.push(Issue::new(
                                Severity::Error,
                                split,
                                cid,
                                IssueKind::FeatureDimension { expected: dim, found: f.len() },
                            ));
                        }
                        if f.iter().any(|x| !x.is_finite()) {
                            issues.push(Issue::new(
                                Severity::Error,
                                split,
                                cid,
                                IssueKind::NonFiniteFeature { utterance: u.id.clone() },
                            ));
                        }
                    }
                    _ => {
                        if u.text.trim().is_empty() {
                            issues.push(Issue::new(
                                Severity::Error,
                                split,
                                cid,
                                IssueKind::EmptyText { utterance: u.id.clone() },
                            ));
                        }
                    }
                }
            }
            for p in &conv.participants {
                if !speakers.contains(p.as_str()) {
                    issues.push(Issue::new(
                        Severity::Error,
                        split,
                        cid,
                        IssueKind::SilentParticipant { speaker: p.clone() },
                    ));
                }
            }
            if speakers.len() == 1 {
                issues.push(Issue::new(Severity::Warning, split, cid, IssueKind::SingleSpeaker));
            }
        }
    }
    issues
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitStats {
    pub split: Split,
    pub conversations: usize,
    pub utterances: usize,
    /// Utterance count per label, in label-set order.
    pub histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetStats {
    pub name: String,
    pub labels: Vec<String>,
    pub splits: Vec<SplitStats>,
    pub classes: usize,
    pub avg_utt: f64,
}

impl DatasetStats {
    pub fn split(&self, split: Split) -> &SplitStats {
        // Always populated for all three splits by `stats`.
        self.splits.iter().find(|s| s.split == split).unwrap()
    }

    pub fn total_conversations(&self) -> usize {
        self.splits.iter().map(|s| s.conversations).sum()
    }

    pub fn total_utterances(&self) -> usize {
        self.splits.iter().map(|s| s.utterances).sum()
    }

    /// Histogram as a label → count map, over all splits.
    pub fn class_counts(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for s in &self.splits {
            for (label, &n) in self.labels.iter().zip(&s.histogram) {
                *out.entry(label.as_str()).or_insert(0) += n;
            }
        }
        out
    }
}

/// Counts conversations, utterances and labels per split. `avg_utt` is the mean
/// number of utterances per conversation over all splits.
pub fn stats(dataset: &Dataset) -> Result<DatasetStats> {
    let total = dataset.conversation_count();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut splits = Vec::with_capacity(3);
    for split in Split::ALL {
        let convs = dataset.split(split);
        let mut histogram = alloc::vec![0usize; dataset.n_labels()];
        let mut utterances = 0;
        for c in convs {
            utterances += c.utterances.len();
            for u in &c.utterances {
                let idx = dataset
                    .label_index(&u.label)
                    .ok_or_else(|| Error::UnknownLabel(u.label.clone()))?;
                histogram[idx] += 1;
            }
        }
        splits.push(SplitStats {
            split,
            conversations: convs.len(),
            utterances,
            histogram,
        });
    }
    let total_utt: usize = splits.iter().map(|s| s.utterances).sum();
    Ok(DatasetStats {
        name: dataset.name.clone(),
        labels: dataset.label_set.clone(),
        splits,
        classes: dataset.n_labels(),
        avg_utt: total_utt as f64 / total as f64,
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    pub fn utt(id: &str, speaker: &str, label: &str, text: &str) -> Utterance {
        Utterance {
            id: id.into(),
            speaker: speaker.into(),
            text: text.into(),
            label: label.into(),
            features: None,
        }
    }

    /// Conversation with alternating speakers a/b and the given labels.
    pub fn conv(id: &str, labels: &[&str]) -> Conversation {
        let utts = labels
            .iter()
            .enumerate()
            .map(|(i, l)| utt(&i.to_string(), if i % 2 == 0 { "a" } else { "b" }, l, "w"))
            .collect();
        Conversation::new(id, utts)
    }

    pub fn dataset(labels: &[&str], train: Vec<Conversation>) -> Dataset {
        let mut d = Dataset::new("fixture", labels.iter().map(|s| s.to_string()).collect(), None);
        d.train = train;
        d
    }

    pub fn two_utt() -> Dataset {
        dataset(&["a", "b"], vec![conv("c1", &["a", "b"])])
    }
}
