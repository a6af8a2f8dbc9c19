//! Synthetic ERC corpora with a controllable emotion-shift rate and label
//! confusability.
//!
//! Labels follow a Markov chain per conversation: the first label is uniform,
//! then each turn keeps the label with probability `1 − p_shift` or jumps to
//! one of the other labels uniformly. Every label owns a disjoint token
//! vocabulary (`t<k>`); labels paired as wheel-confusable additionally share a
//! pool, from which a `confusability` fraction of their tokens is drawn.
//! Speakers take turns round-robin.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Conversation, Dataset, Split, Utterance};
use crate::wheel::{EmotionWheel, WheelConfig};
use crate::{Error, Result};

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub min: usize,
    pub max: usize,
}

impl Span {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        rng.random_range(self.min..=self.max)
    }

    fn check(&self, what: &str) -> Result<()> {
        if self.min == 0 || self.min > self.max {
            return Err(Error::InvalidConfig(format!(
                "{what} range {}..={} must be nonempty and start at 1 or more",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub name: String,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub utterances: Span,
    pub speakers: Span,
    pub labels: Vec<String>,
    #[serde(default)]
    pub neutral: Option<String>,
    #[serde(default = "WheelConfig::default_wheel")]
    pub wheel: WheelConfig,
    pub p_shift: f64,
    pub confusability: f64,
    /// Cap on the number of wheel-confusable pairs sharing a token pool.
    #[serde(default)]
    pub max_confusable_pairs: Option<usize>,
    pub vocab_per_label: usize,
    pub tokens: Span,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (what, p) in [("p_shift", self.p_shift), ("confusability", self.confusability)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{what} {p} outside [0, 1]")));
            }
        }
        self.utterances.check("utterances")?;
        self.speakers.check("speakers")?;
        self.tokens.check("tokens")?;
        if self.labels.len() < 2 {
            return Err(Error::InvalidConfig("at least two labels are needed".into()));
        }
        if self.labels.iter().collect::<BTreeSet<_>>().len() != self.labels.len() {
            return Err(Error::InvalidConfig("duplicate label".into()));
        }
        if self.vocab_per_label == 0 {
            return Err(Error::InvalidConfig("vocab_per_label must be positive".into()));
        }
        Ok(())
    }

    pub fn split_size(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    pub fn wheel(&self) -> Result<EmotionWheel> {
        EmotionWheel::load(&self.wheel, &self.labels, self.neutral.as_deref())
    }
}

struct Vocab {
    per_label: usize,
    n_labels: usize,
    /// Shared pool index for labels that belong to a confusable pair.
    pool: Vec<Option<usize>>,
}

impl Vocab {
    fn token<R: Rng>(&self, label: usize, confusability: f64, rng: &mut R) -> usize {
        let j = rng.random_range(0..self.per_label);
        match self.pool[label] {
            Some(p) if rng.random::<f64>() < confusability => (self.n_labels + p) * self.per_label + j,
            _ => label * self.per_label + j,
        }
    }
}

/// Generates a corpus from `config`. Deterministic under `config.seed`.
pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let wheel = config.wheel()?;
    let r = config.labels.len();
    let mut pool = vec![None; r];
    for (p, &(a, b)) in wheel.confusable_pairs(config.max_confusable_pairs).iter().enumerate() {
        pool[a] = Some(p);
        pool[b] = Some(p);
    }
    let vocab = Vocab {
        per_label: config.vocab_per_label,
        n_labels: r,
        pool,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dataset = Dataset::new(config.name.clone(), config.labels.clone(), config.neutral.clone());
    for split in Split::ALL {
        for c in 0..config.split_size(split) {
            let id = format!("p{:.2}-{}-{:05}", config.p_shift, split, c);
            let conv = conversation(id, config, &vocab, &mut rng);
            dataset.split_mut(split).push(conv);
        }
    }
    Ok(dataset)
}

fn conversation<R: Rng>(id: String, config: &SynthConfig, vocab: &Vocab, rng: &mut R) -> Conversation {
    let r = config.labels.len();
    let n = config.utterances.sample(rng);
    let m = config.speakers.sample(rng);
    let mut label = rng.random_range(0..r);
    let mut utterances = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 && rng.random::<f64>() < config.p_shift {
            let k = rng.random_range(0..r - 1);
            label = if k >= label { k + 1 } else { k };
        }
        let n_tok = config.tokens.sample(rng);
        let words: Vec<String> = (0..n_tok)
            .map(|_| format!("t{}", vocab.token(label, config.confusability, rng)))
            .collect();
        utterances.push(Utterance {
            id: format!("{i}"),
            speaker: format!("s{}", i % m),
            text: words.join(" "),
            label: config.labels[label].clone(),
            features: None,
        });
    }
    Conversation::new(id, utterances)
}

/// Generates one batch per config and concatenates them split by split.
/// Conversation ids carry the batch's `p_shift`.
pub fn sweep_pshift(configs: &[SynthConfig]) -> Result<Dataset> {
    let (first, rest) = configs
        .split_first()
        .ok_or_else(|| Error::InvalidConfig("empty p_shift sweep".into()))?;
    let mut out = generate(first)?;
    for cfg in rest {
        if cfg.labels != first.labels || cfg.neutral != first.neutral {
            return Err(Error::InvalidConfig("sweep configs disagree on the label set".into()));
        }
        let batch = generate(cfg)?;
        for split in Split::ALL {
            out.split_mut(split).extend(batch.split(split).iter().cloned());
        }
    }
    for split in Split::ALL {
        let ids: BTreeSet<&str> = out.split(split).iter().map(|c| c.id.as_str()).collect();
        if ids.len() != out.split(split).len() {
            return Err(Error::InvalidConfig("two sweep batches share a p_shift".into()));
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::validate;
    use crate::curriculum::{difficulty, emotion_shift_count, ShiftMode};
    use alloc::string::ToString;

    pub fn base_config(p_shift: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            name: "synth".into(),
            train: 40,
            val: 5,
            test: 5,
            utterances: Span::new(4, 12),
            speakers: Span::new(2, 3),
            labels: ["neutral", "happy", "sad", "angry", "excited", "frustrated"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            neutral: Some("neutral".into()),
            wheel: WheelConfig::default_wheel(),
            p_shift,
            confusability: 0.5,
            max_confusable_pairs: Some(2),
            vocab_per_label: 20,
            tokens: Span::new(3, 6),
            seed,
        }
    }

    #[test]
    fn no_shift_means_constant_labels() {
        let d = generate(&base_config(0.0, 1)).unwrap();
        for c in &d.train {
            assert_eq!(emotion_shift_count(c, ShiftMode::Any), 0);
            let s = difficulty(c, ShiftMode::Any).unwrap();
            assert_eq!(s.score, s.n_sp as f64 / (s.n_u + s.n_sp) as f64);
        }
    }

    #[test]
    fn always_shift() {
        let d = generate(&base_config(1.0, 2)).unwrap();
        for c in &d.train {
            assert_eq!(emotion_shift_count(c, ShiftMode::Any), c.len() - 1);
        }
    }

    #[test]
    fn generated_corpus_is_valid_and_deterministic() {
        let cfg = base_config(0.4, 7);
        let a = generate(&cfg).unwrap();
        assert!(validate(&a).iter().all(|i| !i.is_error()));
        assert_eq!(a, generate(&cfg).unwrap());
        assert_ne!(a, generate(&base_config(0.4, 8)).unwrap());
    }

    #[test]
    fn shared_pool_only_for_pairs() {
        let mut cfg = base_config(0.3, 3);
        cfg.confusability = 1.0;
        let d = generate(&cfg).unwrap();
        // With c = 1 paired labels draw only from their pool; unpaired labels
        // (neutral, sad) keep their own vocabulary.
        let pool_start = 6 * 20;
        for u in d.train.iter().flat_map(|c| &c.utterances) {
            let ids: Vec<usize> = u.text.split(' ').map(|t| t[1..].parse().unwrap()).collect();
            let paired = !matches!(u.label.as_str(), "neutral" | "sad");
            assert!(ids.iter().all(|&t| (t >= pool_start) == paired), "{u:?}");
        }
    }

    #[test]
    fn invalid_configs() {
        let mut c = base_config(1.5, 0);
        assert!(generate(&c).is_err());
        c.p_shift = 0.5;
        c.tokens = Span::new(3, 2);
        assert!(generate(&c).is_err());
        c.tokens = Span::new(1, 2);
        c.labels.truncate(1);
        assert!(generate(&c).is_err());
    }

    #[test]
    fn sweep_single_equals_generate() {
        let c = base_config(0.3, 5);
        assert_eq!(sweep_pshift(core::slice::from_ref(&c)).unwrap(), generate(&c).unwrap());
        assert!(sweep_pshift(&[]).is_err());
    }

    #[test]
    fn sweep_difficulty_increases_with_pshift() {
        let cfgs: Vec<SynthConfig> = [0.1, 0.5, 0.9]
            .iter()
            .enumerate()
            .map(|(i, &p)| base_config(p, 100 + i as u64))
            .collect();
        let d = sweep_pshift(&cfgs).unwrap();
        assert_eq!(d.train.len(), 120);
        let mut means = Vec::new();
        for p in ["p0.10", "p0.50", "p0.90"] {
            let scores: Vec<f64> = d
                .train
                .iter()
                .filter(|c| c.id.starts_with(p))
                .map(|c| difficulty(c, ShiftMode::Any).unwrap().score)
                .collect();
            assert_eq!(scores.len(), 40);
            means.push(scores.iter().sum::<f64>() / scores.len() as f64);
        }
        assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
        assert!(sweep_pshift(&[base_config(0.1, 1), base_config(0.1, 2)]).is_err());
    }
}
