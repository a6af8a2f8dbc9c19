//! Strategy ablation: every strategy trained under the same step budget for
//! several seeds, scored on one split.

use hcl_core::corpus::{Dataset, Split};
use hcl_core::eval::weighted_f1;
use hcl_core::training::{predict, summarize, train, Strategy, TrainConfig};
use hcl_core::wheel::EmotionWheel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::table::{f4, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunResult {
    pub strategy: Strategy,
    pub seed: u64,
    /// Weighted-F1 on the evaluation split.
    pub score: f64,
    pub offdiag_mass: f64,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryRow {
    pub strategy: Strategy,
    pub runs: usize,
    pub mean: f64,
    pub sd: f64,
    /// Mean final off-diagonal target mass.
    pub offdiag_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareReport {
    pub split: Split,
    pub metric: String,
    pub runs: Vec<RunResult>,
    pub summary: Vec<SummaryRow>,
    /// Whether mean(hcl) ≥ mean(ucf) ≥ mean(ccf); absent unless all three ran.
    pub ordering_holds: Option<bool>,
}

fn one_run(
    dataset: &Dataset,
    wheel: &EmotionWheel,
    base: &TrainConfig,
    strategy: Strategy,
    seed: u64,
    split: Split,
) -> hcl_core::Result<RunResult> {
    let config = TrainConfig {
        strategy,
        seed,
        ..base.clone()
    };
    let (params, log) = train(dataset, wheel, &config)?;
    let (gold, pred) = predict(&params, dataset, dataset.split(split))?;
    Ok(RunResult {
        strategy,
        seed,
        score: weighted_f1(&gold, &pred)?,
        offdiag_mass: log.final_metrics.offdiag_mass,
        steps: log.final_metrics.steps,
    })
}

/// Trains every (strategy, seed) pair, in parallel, and aggregates.
pub fn run_compare(
    dataset: &Dataset,
    wheel: &EmotionWheel,
    base: &TrainConfig,
    strategies: &[Strategy],
    seeds: &[u64],
    split: Split,
) -> hcl_core::Result<CompareReport> {
    if dataset.split(split).is_empty() {
        return Err(hcl_core::Error::EmptyDataset);
    }
    let jobs: Vec<(Strategy, u64)> = strategies
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(s, seed)| one_run(dataset, wheel, base, s, seed, split))
        .collect::<hcl_core::Result<Vec<_>>>()?;
    Ok(aggregate(split, runs))
}

/// Builds the report from finished runs. The result does not depend on the
/// order of `runs`.
pub fn aggregate(split: Split, mut runs: Vec<RunResult>) -> CompareReport {
    let rank = |s: Strategy| Strategy::ALL.iter().position(|&x| x == s);
    runs.sort_by(|a, b| {
        rank(a.strategy)
            .cmp(&rank(b.strategy))
            .then(a.seed.cmp(&b.seed))
            .then(a.score.total_cmp(&b.score))
    });
    let scores: Vec<(Strategy, u64, f64)> = runs.iter().map(|r| (r.strategy, r.seed, r.score)).collect();
    let summary: Vec<SummaryRow> = summarize(&scores)
        .into_iter()
        .map(|s| {
            let masses: Vec<f64> = runs
                .iter()
                .filter(|r| r.strategy == s.strategy)
                .map(|r| r.offdiag_mass)
                .collect();
            SummaryRow {
                strategy: s.strategy,
                runs: s.runs,
                mean: s.mean,
                sd: s.sd,
                offdiag_mass: masses.iter().sum::<f64>() / masses.len() as f64,
            }
        })
        .collect();
    let mean = |s: Strategy| summary.iter().find(|r| r.strategy == s).map(|r| r.mean);
    let ordering_holds = match (mean(Strategy::Hcl), mean(Strategy::Ucf), mean(Strategy::Ccf)) {
        (Some(h), Some(u), Some(c)) => Some(h >= u && u >= c),
        _ => None,
    };
    CompareReport {
        split,
        metric: "weighted_f1".into(),
        runs,
        summary,
        ordering_holds,
    }
}

impl CompareReport {
    pub fn mean(&self, strategy: Strategy) -> Option<f64> {
        self.summary.iter().find(|r| r.strategy == strategy).map(|r| r.mean)
    }

    pub fn table(&self) -> String {
        let mut t = Table::new(&["strategy", "runs", "weighted_f1", "offdiag_mass"]);
        for r in &self.summary {
            t.row(vec![
                r.strategy.short().into(),
                r.runs.to_string(),
                format!("{}±{}", f4(r.mean), f4(r.sd)),
                f4(r.offdiag_mass),
            ]);
        }
        t.render()
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("strategy,runs,mean,sd,offdiag_mass\n");
        for r in &self.summary {
            s += &format!(
                "{},{},{},{},{}\n",
                r.strategy.short(),
                r.runs,
                f4(r.mean),
                f4(r.sd),
                f4(r.offdiag_mass)
            );
        }
        s
    }

    pub fn runs_csv(&self) -> String {
        let mut s = String::from("strategy,seed,score,offdiag_mass,steps\n");
        for r in &self.runs {
            s += &format!(
                "{},{},{},{},{}\n",
                r.strategy.short(),
                r.seed,
                f4(r.score),
                f4(r.offdiag_mass),
                r.steps
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(strategy: Strategy, seed: u64, score: f64) -> RunResult {
        RunResult {
            strategy,
            seed,
            score,
            offdiag_mass: 0.0,
            steps: 10,
        }
    }

    #[test]
    fn aggregation_ignores_order() {
        let runs = vec![
            run(Strategy::Hcl, 1, 0.7),
            run(Strategy::Ccf, 0, 0.5),
            run(Strategy::Hcl, 0, 0.9),
            run(Strategy::Ucf, 0, 0.6),
            run(Strategy::RandomBaseline, 3, 0.1),
        ];
        let a = aggregate(Split::Test, runs.clone());
        let mut rev = runs;
        rev.reverse();
        assert_eq!(a, aggregate(Split::Test, rev));
        assert_eq!(a.ordering_holds, Some(true));
        let order: Vec<&str> = a.summary.iter().map(|r| r.strategy.short()).collect();
        assert_eq!(order, ["random", "ccf", "ucf", "hcl"]);
        assert!((a.mean(Strategy::Hcl).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn ordering_needs_all_three() {
        let a = aggregate(Split::Test, vec![run(Strategy::Hcl, 0, 0.5)]);
        assert_eq!(a.ordering_holds, None);
    }
}
