//! ERC metrics: weighted-F1, micro-F1 without the majority class, the
//! emotion-shift partition and per-label / label-group reports.
//!
//! Division by zero in precision or recall yields 0, and so does the F1 of a
//! label that is neither predicted nor present.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::Conversation;
use crate::curriculum::{shift_flags, ShiftMode};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        // 2TP / (2TP + FP + FN) equals the harmonic mean of P and R.
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn check_lengths<L>(gold: &[L], pred: &[L]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// One-vs-rest counts for every label that occurs in `gold` or `pred`.
pub fn label_counts<L: Ord + Clone>(gold: &[L], pred: &[L]) -> BTreeMap<L, Counts> {
    let mut out: BTreeMap<L, Counts> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        if g == p {
            out.entry(g.clone()).or_default().tp += 1;
        } else {
            out.entry(g.clone()).or_default().fn_ += 1;
            out.entry(p.clone()).or_default().fp += 1;
        }
    }
    out
}

/// Σ_label support_share(label) · F1(label).
pub fn weighted_f1<L: Ord + Clone>(gold: &[L], pred: &[L]) -> Result<f64> {
    check_lengths(gold, pred)?;
    let n = gold.len() as f64;
    Ok(label_counts(gold, pred)
        .values()
        .map(|c| c.support() as f64 / n * c.f1())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroF1 {
    pub value: f64,
    /// Set when no gold utterance falls outside the excluded label, so recall
    /// is undefined; `value` is then 0.
    pub degenerate: bool,
}

/// Micro-averaged F1 with TP/FP/FN pooled over every label except `excluded`.
pub fn micro_f1_excluding<L: Ord>(gold: &[L], pred: &[L], excluded: &L) -> Result<MicroF1> {
    check_lengths(gold, pred)?;
    let mut c = Counts::default();
    for (g, p) in gold.iter().zip(pred) {
        let g_in = g != excluded;
        let p_in = p != excluded;
        if g == p {
            if g_in {
                c.tp += 1;
            }
        } else {
            if p_in {
                c.fp += 1;
            }
            if g_in {
                c.fn_ += 1;
            }
        }
    }
    if c.support() == 0 {
        return Ok(MicroF1 {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(MicroF1 {
        value: c.f1(),
        degenerate: false,
    })
}

/// Utterance positions `(conversation, utterance)` split by whether the
/// utterance's label differs from the previous one in its conversation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EsPartition {
    pub shift: Vec<(usize, usize)>,
    pub no_shift: Vec<(usize, usize)>,
}

impl EsPartition {
    pub fn total(&self) -> usize {
        self.shift.len() + self.no_shift.len()
    }

    pub fn shift_share(&self) -> f64 {
        ratio(self.shift.len(), self.total())
    }

    pub fn no_shift_share(&self) -> f64 {
        ratio(self.no_shift.len(), self.total())
    }

    /// Shift flags in flattened utterance order.
    pub fn mask(&self) -> Vec<bool> {
        let mut all: Vec<((usize, usize), bool)> = self
            .shift
            .iter()
            .map(|&p| (p, true))
            .chain(self.no_shift.iter().map(|&p| (p, false)))
            .collect();
        all.sort_unstable();
        all.into_iter().map(|(_, f)| f).collect()
    }
}

pub fn es_partition(conversations: &[Conversation], mode: ShiftMode) -> EsPartition {
    let mut out = EsPartition::default();
    for (ci, c) in conversations.iter().enumerate() {
        for (ui, flag) in shift_flags(c, mode).into_iter().enumerate() {
            if flag {
                out.shift.push((ci, ui));
            } else {
                out.no_shift.push((ci, ui));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Metric {
    WeightedF1,
    /// Micro-F1 with the given label index left out of the pooled counts.
    MicroF1Excluding { excluded: usize },
}

impl Metric {
    pub fn score(&self, gold: &[usize], pred: &[usize]) -> Result<(f64, bool)> {
        match self {
            Metric::WeightedF1 => Ok((weighted_f1(gold, pred)?, false)),
            Metric::MicroF1Excluding { excluded } => {
                let m = micro_f1_excluding(gold, pred, excluded)?;
                Ok((m.value, m.degenerate))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::WeightedF1 => "weighted_f1",
            Metric::MicroF1Excluding { .. } => "micro_f1_excluding",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelGroup {
    pub name: String,
    pub members: Vec<String>,
}

impl LabelGroup {
    pub fn new(name: &str, members: &[&str]) -> Self {
        Self {
            name: name.into(),
            members: members.iter().map(|&m| m.into()).collect(),
        }
    }
}

/// HESF = {happy, excited, sad, frustrated} and NA = {neutral, angry}.
pub fn hesf_groups() -> Vec<LabelGroup> {
    alloc::vec![
        LabelGroup::new("HESF", &["happy", "excited", "sad", "frustrated"]),
        LabelGroup::new("NA", &["neutral", "angry"]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Score {
    pub f1: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelScore {
    pub label: String,
    pub f1: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupScore {
    pub name: String,
    pub members: Vec<String>,
    pub f1: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub metric: String,
    pub overall: f64,
    pub degenerate: bool,
    pub per_label: Vec<LabelScore>,
    pub shift: Score,
    pub no_shift: Score,
    pub groups: Vec<GroupScore>,
}

/// Support-weighted mean of per-label F1 over a group, with the group's
/// share being the sum of member shares.
pub fn group_score(members: &[(f64, f64)]) -> Score {
    let share: f64 = members.iter().map(|&(_, s)| s).sum();
    let f1 = if share > 0.0 {
        members.iter().map(|&(f, s)| f * s).sum::<f64>() / share
    } else {
        0.0
    };
    Score { f1, share }
}

/// Full evaluation report. Labels are indices into `labels`; `shift_mask`
/// flags the emotion-shift utterances in the same order as `gold`.
pub fn report(
    gold: &[usize],
    pred: &[usize],
    shift_mask: &[bool],
    labels: &[String],
    metric: &Metric,
    groups: &[LabelGroup],
) -> Result<EvalReport> {
    check_lengths(gold, pred)?;
    if shift_mask.len() != gold.len() {
        return Err(Error::LengthMismatch {
            gold: gold.len(),
            pred: shift_mask.len(),
        });
    }
    if let Some(&bad) = gold.iter().chain(pred).find(|&&l| l >= labels.len()) {
        return Err(Error::UnknownLabel(alloc::format!("#{bad}")));
    }
    let (overall, degenerate) = metric.score(gold, pred)?;
    let n = gold.len() as f64;
    let counts = label_counts(gold, pred);
    let per_label: Vec<LabelScore> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let c = counts.get(&i).copied().unwrap_or_default();
            LabelScore {
                label: l.clone(),
                f1: c.f1(),
                share: c.support() as f64 / n,
            }
        })
        .collect();

    let part = |want: bool| -> Result<Score> {
        let (g, p): (Vec<usize>, Vec<usize>) = gold
            .iter()
            .zip(pred)
            .zip(shift_mask)
            .filter(|&(_, &m)| m == want)
            .map(|((&g, &p), _)| (g, p))
            .unzip();
        let share = g.len() as f64 / n;
        if g.is_empty() {
            return Ok(Score { f1: 0.0, share });
        }
        Ok(Score {
            f1: metric.score(&g, &p)?.0,
            share,
        })
    };

    let mut group_scores = Vec::with_capacity(groups.len());
    for group in groups {
        let mut members = Vec::with_capacity(group.members.len());
        for m in &group.members {
            let i = labels
                .iter()
                .position(|l| l == m)
                .ok_or_else(|| Error::UnknownLabel(m.clone()))?;
            members.push((per_label[i].f1, per_label[i].share));
        }
        let s = group_score(&members);
        group_scores.push(GroupScore {
            name: group.name.clone(),
            members: group.members.clone(),
            f1: s.f1,
            share: s.share,
        });
    }

    Ok(EvalReport {
        metric: metric.name().into(),
        overall,
        degenerate,
        per_label,
        shift: part(true)?,
        no_shift: part(false)?,
        groups: group_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::conv;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn perfect_is_one() {
        assert_eq!(weighted_f1(&["a", "b", "c"], &["a", "b", "c"]).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_two_thirds() {
        // P_a = 1, R_a = 1/2, F1_a = 2/3; P_b = 1/2, R_b = 1, F1_b = 2/3.
        let w = weighted_f1(&["a", "a", "b"], &["a", "b", "b"]).unwrap();
        assert!((w - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn one_class_predictions() {
        // gold uniform over a,b,c, all predicted a: F1_a = 2·1/(2·1+2+0) = 1/2, others 0.
        let w = weighted_f1(&["a", "b", "c"], &["a", "a", "a"]).unwrap();
        assert!((w - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(weighted_f1(&["a"], &["a", "b"]), Err(Error::LengthMismatch { .. })));
        assert!(micro_f1_excluding(&["a"], &[], &"a").is_err());
        assert_eq!(weighted_f1::<&str>(&[], &[]), Err(Error::EmptyInput));
    }

    #[test]
    fn micro_without_excluded_label() {
        let m = micro_f1_excluding(&["a", "b"], &["a", "b"], &"n").unwrap();
        assert_eq!(m.value, 1.0);
        assert!(!m.degenerate);
    }

    #[test]
    fn micro_all_gold_excluded() {
        let m = micro_f1_excluding(&["n", "n"], &["n", "a"], &"n").unwrap();
        assert_eq!(m.value, 0.0);
        assert!(m.degenerate);
    }

    #[test]
    fn micro_six_example_fixture() {
        // gold n a b a n b / pred n a a n b b
        // TP: (a,a), (b,b) = 2; FP: (b→a), (n→b) = 2; FN: (b→a), (a→n) = 2.
        let gold = ["n", "a", "b", "a", "n", "b"];
        let pred = ["n", "a", "a", "n", "b", "b"];
        let m = micro_f1_excluding(&gold, &pred, &"n").unwrap();
        assert!((m.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn es_partition_examples() {
        let p = es_partition(&[conv("c", &["a", "b", "b"])], ShiftMode::Any);
        assert_eq!(p.shift, vec![(0, 1)]);
        assert_eq!(p.no_shift, vec![(0, 0), (0, 2)]);
        assert_eq!(p.mask(), vec![false, true, false]);
        let p = es_partition(&[conv("c", &["a"; 4])], ShiftMode::Any);
        assert!(p.shift.is_empty());
        assert_eq!(p.no_shift_share(), 1.0);
    }

    fn names(ls: &[&str]) -> Vec<String> {
        ls.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn report_single_label() {
        let labels = names(&["a"]);
        let r = report(&[0, 0], &[0, 0], &[false, false], &labels, &Metric::WeightedF1, &[]).unwrap();
        assert_eq!(r.per_label[0].f1, r.overall);
        assert_eq!(r.shift.share, 0.0);
    }

    #[test]
    fn group_of_everything_equals_overall() {
        let labels = names(&["a", "b", "c"]);
        let gold = [0, 1, 2, 0, 1, 1];
        let pred = [0, 2, 2, 1, 1, 0];
        let all = LabelGroup::new("all", &["a", "b", "c"]);
        let r = report(&gold, &pred, &[false; 6], &labels, &Metric::WeightedF1, &[all]).unwrap();
        assert!((r.groups[0].f1 - r.overall).abs() < 1e-15);
        assert!((r.groups[0].share - 1.0).abs() < 1e-15);
    }

    #[test]
    fn group_restricted_to_two_labels() {
        // Confusion (gold → pred): a→a, a→b, b→b, b→c, c→c, c→a.
        // F1_a = 2·1/(2+1+1) = 1/2, F1_b = 1/2, each with share 1/3.
        let labels = names(&["a", "b", "c"]);
        let gold = [0, 0, 1, 1, 2, 2];
        let pred = [0, 1, 1, 2, 2, 0];
        let g = LabelGroup::new("g1", &["a", "b"]);
        let r = report(&gold, &pred, &[false; 6], &labels, &Metric::WeightedF1, &[g]).unwrap();
        assert!((r.groups[0].f1 - 0.5).abs() < 1e-15);
        assert!((r.groups[0].share - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn group_aggregation_reproduces_published_table() {
        // Per-label weighted-F1 and test shares of a published IEMOCAP table:
        // happy, excited, sad, frustrated → HESF 67.88; neutral, angry → NA 68.53.
        let hesf = group_score(&[(47.59, 8.8), (66.79, 18.4), (79.83, 15.1), (68.66, 23.5)]);
        assert!((hesf.f1 - 67.88).abs() < 0.01);
        assert!((hesf.share - 65.8).abs() < 1e-9);
        let na = group_score(&[(69.36, 23.7), (66.67, 10.5)]);
        assert!((na.f1 - 68.53).abs() < 0.01);
        assert!((na.share - 34.2).abs() < 1e-9);
    }

    #[test]
    fn unknown_group_label() {
        let labels = names(&["a"]);
        let g = LabelGroup::new("g", &["zzz"]);
        assert_eq!(
            report(&[0], &[0], &[false], &labels, &Metric::WeightedF1, &[g]),
            Err(Error::UnknownLabel("zzz".into()))
        );
    }

    #[test]
    fn partition_scores_use_metric() {
        let labels = names(&["a", "b"]);
        let gold = [0, 1, 1, 0];
        let pred = [0, 0, 1, 0];
        let mask = [false, true, false, true];
        let r = report(&gold, &pred, &mask, &labels, &Metric::WeightedF1, &[]).unwrap();
        assert_eq!(r.shift.f1, weighted_f1(&[1, 0], &[0, 0]).unwrap());
        assert_eq!(r.no_shift.f1, weighted_f1(&[0, 1], &[0, 1]).unwrap());
        assert_eq!(r.shift.share + r.no_shift.share, 1.0);
    }
}
