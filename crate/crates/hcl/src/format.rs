//! Line-delimited JSON corpus files.
//!
//! The first non-blank line is a header record; every following line is one
//! utterance:
//!
//! ```text
//! {"type":"header","name":"demo","labels":["neutral","happy"],"neutral":"neutral"}
//! {"type":"utt","split":"train","conv":"c1","id":"0","speaker":"a","text":"hi","label":"happy"}
//! ```
//!
//! `id` defaults to the utterance's position in its conversation, `neutral` and
//! `features` may be omitted. Utterances of one conversation are contiguous;
//! their order in the file is their order in the conversation.

use std::collections::{BTreeSet, HashSet};
use std::io::{self, BufRead, Write};
use std::path::Path;

use hcl_core::corpus::{Conversation, Dataset, Split, Utterance};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {source}")]
    Io { line: usize, source: io::Error },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: expected a header record first")]
    MissingHeader { line: usize },
    #[error("empty corpus file: no header record")]
    Empty,
    #[error("line {line}: second header record")]
    DuplicateHeader { line: usize },
    #[error("line {line}: invalid header: {message}")]
    InvalidHeader { line: usize, message: String },
    #[error("line {line}: label `{label}` not in the declared label set")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: conversation `{conv}` already appeared in split {split}")]
    DuplicateConversation { line: usize, split: Split, conv: String },
    #[error("cannot write utterance `{utterance}` of `{conv}`: non-finite feature")]
    NonFiniteFeature { conv: String, utterance: String },
}

impl FormatError {
    /// 1-based line number the error refers to, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            FormatError::Io { line, .. }
            | FormatError::Malformed { line, .. }
            | FormatError::MissingHeader { line }
            | FormatError::DuplicateHeader { line }
            | FormatError::InvalidHeader { line, .. }
            | FormatError::UnknownLabel { line, .. }
            | FormatError::DuplicateConversation { line, .. } => Some(*line),
            FormatError::Empty | FormatError::NonFiniteFeature { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub name: String,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neutral: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UttRecord {
    pub split: Split,
    pub conv: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub speaker: String,
    pub text: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Record {
    Header(Header),
    Utt(UttRecord),
}

fn parse_record(line: usize, text: &str) -> Result<Record, FormatError> {
    serde_json::from_str(text).map_err(|e| FormatError::Malformed {
        line,
        message: e.to_string(),
    })
}

/// Streams conversations out of a corpus file one at a time, so only the
/// current conversation (and the set of ids seen) is held in memory.
pub struct ConversationStream<R> {
    lines: io::Lines<R>,
    line: usize,
    header: Header,
    labels: HashSet<String>,
    seen: BTreeSet<(Split, String)>,
    pending: Option<(usize, UttRecord)>,
    done: bool,
}

impl<R: BufRead> ConversationStream<R> {
    /// Reads up to and including the header record.
    pub fn new(reader: R) -> Result<Self, FormatError> {
        let mut lines = reader.lines();
        let mut line = 0;
        let header = loop {
            line += 1;
            let text = match lines.next() {
                None => return Err(FormatError::Empty),
                Some(t) => t.map_err(|source| FormatError::Io { line, source })?,
            };
            if text.trim().is_empty() {
                continue;
            }
            match parse_record(line, &text)? {
                Record::Header(h) => break h,
                Record::Utt(_) => return Err(FormatError::MissingHeader { line }),
            }
        };
        let labels: HashSet<String> = header.labels.iter().cloned().collect();
        if labels.len() != header.labels.len() {
            return Err(FormatError::InvalidHeader {
                line,
                message: "duplicate label".into(),
            });
        }
        if let Some(n) = &header.neutral {
            if !labels.contains(n) {
                return Err(FormatError::InvalidHeader {
                    line,
                    message: format!("neutral label `{n}` not in labels"),
                });
            }
        }
        Ok(Self {
            lines,
            line,
            header,
            labels,
            seen: BTreeSet::new(),
            pending: None,
            done: false,
        })
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    fn next_utt(&mut self) -> Result<Option<(usize, UttRecord)>, FormatError> {
        if let Some(p) = self.pending.take() {
            return Ok(Some(p));
        }
        loop {
            let Some(text) = self.lines.next() else {
                return Ok(None);
            };
            self.line += 1;
            let line = self.line;
            let text = text.map_err(|source| FormatError::Io { line, source })?;
            if text.trim().is_empty() {
                continue;
            }
            match parse_record(line, &text)? {
                Record::Header(_) => return Err(FormatError::DuplicateHeader { line }),
                Record::Utt(u) => {
                    if !self.labels.contains(&u.label) {
                        return Err(FormatError::UnknownLabel { line, label: u.label });
                    }
                    return Ok(Some((line, u)));
                }
            }
        }
    }

    fn next_conversation(&mut self) -> Result<Option<(Split, Conversation)>, FormatError> {
        let Some((line, first)) = self.next_utt()? else {
            return Ok(None);
        };
        let key = (first.split, first.conv.clone());
        if !self.seen.insert(key.clone()) {
            return Err(FormatError::DuplicateConversation {
                line,
                split: key.0,
                conv: key.1,
            });
        }
        let mut utterances = vec![into_utterance(first, 0)];
        while let Some((line, u)) = self.next_utt()? {
            if (u.split, u.conv.as_str()) != (key.0, key.1.as_str()) {
                self.pending = Some((line, u));
                break;
            }
            let i = utterances.len();
            utterances.push(into_utterance(u, i));
        }
        Ok(Some((key.0, Conversation::new(key.1, utterances))))
    }
}

fn into_utterance(r: UttRecord, index: usize) -> Utterance {
    Utterance {
        id: r.id.unwrap_or_else(|| index.to_string()),
        speaker: r.speaker,
        text: r.text,
        label: r.label,
        features: r.features,
    }
}

impl<R: BufRead> Iterator for ConversationStream<R> {
    type Item = Result<(Split, Conversation), FormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let out = self.next_conversation().transpose();
        if !matches!(out, Some(Ok(_))) {
            self.done = true;
        }
        out
    }
}

/// Reads a whole corpus file into memory.
pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Dataset, FormatError> {
    let mut stream = ConversationStream::new(reader)?;
    let h = stream.header().clone();
    let mut dataset = Dataset::new(h.name, h.labels, h.neutral);
    for item in &mut stream {
        let (split, conv) = item?;
        dataset.split_mut(split).push(conv);
    }
    Ok(dataset)
}

pub fn read_dataset(path: &Path) -> anyhow::Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    parse_dataset(io::BufReader::new(file)).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

#[derive(Serialize)]
struct HeaderOut<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    name: &'a str,
    labels: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    neutral: Option<&'a str>,
}

#[derive(Serialize)]
struct UttOut<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    split: Split,
    conv: &'a str,
    id: &'a str,
    speaker: &'a str,
    text: &'a str,
    label: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<&'a [f64]>,
}

/// Serializes `dataset` split by split (train, val, test). The output parses
/// back to an equal dataset.
pub fn write_dataset<W: Write>(dataset: &Dataset, mut w: W) -> anyhow::Result<()> {
    let header = HeaderOut {
        kind: "header",
        name: &dataset.name,
        labels: &dataset.label_set,
        neutral: dataset.neutral_label.as_deref(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for split in Split::ALL {
        for conv in dataset.split(split) {
            for u in &conv.utterances {
                if u.features.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(FormatError::NonFiniteFeature {
                        conv: conv.id.clone(),
                        utterance: u.id.clone(),
                    }
                    .into());
                }
                let rec = UttOut {
                    kind: "utt",
                    split,
                    conv: &conv.id,
                    id: &u.id,
                    speaker: &u.speaker,
                    text: &u.text,
                    label: &u.label,
                    features: u.features.as_deref(),
                };
                serde_json::to_writer(&mut w, &rec)?;
                w.write_all(b"\n")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEMO: &str = r#"{"type":"header","name":"demo","labels":["a","b"]}
{"type":"utt","split":"train","conv":"c1","speaker":"x","text":"hello","label":"a"}
{"type":"utt","split":"train","conv":"c1","speaker":"y","text":"hi","label":"b"}
"#;

    #[test]
    fn one_conversation() {
        let d = parse_dataset(DEMO.as_bytes()).unwrap();
        assert_eq!(d.train.len(), 1);
        assert_eq!(d.train[0].len(), 2);
        assert_eq!(d.train[0].utterances[1].id, "1");
        assert_eq!(d.train[0].participants.len(), 2);
        assert!(d.val.is_empty() && d.test.is_empty());
    }

    #[test]
    fn unknown_label_names_line() {
        let bad = DEMO.replace(r#""label":"b""#, r#""label":"joy""#);
        let e = parse_dataset(bad.as_bytes()).unwrap_err();
        assert_eq!(e.line(), Some(3));
        assert!(e.to_string().contains("joy"));
    }

    #[test]
    fn malformed_line() {
        let bad = format!("{DEMO}{{\"type\":\"utt\",\"split\":\"train\"\n");
        let e = parse_dataset(bad.as_bytes()).unwrap_err();
        assert!(matches!(e, FormatError::Malformed { line: 4, .. }), "{e}");
        let extra = DEMO.replace(r#""text":"hi""#, r#""text":"hi","mood":1"#);
        assert!(matches!(
            parse_dataset(extra.as_bytes()).unwrap_err(),
            FormatError::Malformed { line: 3, .. }
        ));
    }

    #[test]
    fn duplicate_conversation() {
        let again = DEMO.lines().nth(1).unwrap();
        let bad = format!(
            "{DEMO}{{\"type\":\"utt\",\"split\":\"train\",\"conv\":\"c2\",\"speaker\":\"x\",\"text\":\"t\",\"label\":\"a\"}}\n{again}\n"
        );
        let e = parse_dataset(bad.as_bytes()).unwrap_err();
        assert!(matches!(e, FormatError::DuplicateConversation { line: 5, .. }), "{e}");
        // Same id in another split is a different conversation.
        let other = again.replace("train", "test");
        assert_eq!(parse_dataset(format!("{DEMO}{other}\n").as_bytes()).unwrap().test.len(), 1);
    }

    #[test]
    fn header_problems() {
        assert!(matches!(parse_dataset("".as_bytes()), Err(FormatError::Empty)));
        let body: String = DEMO.lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            parse_dataset(body.as_bytes()),
            Err(FormatError::MissingHeader { line: 1 })
        ));
        let twice = format!("{DEMO}{}\n", DEMO.lines().next().unwrap());
        assert!(matches!(
            parse_dataset(twice.as_bytes()),
            Err(FormatError::DuplicateHeader { line: 4 })
        ));
        let bad_neutral = DEMO.replace(r#""labels":["a","b"]"#, r#""labels":["a","b"],"neutral":"n""#);
        assert!(matches!(
            parse_dataset(bad_neutral.as_bytes()),
            Err(FormatError::InvalidHeader { line: 1, .. })
        ));
    }

    #[test]
    fn blank_lines_and_round_trip() {
        let spaced = DEMO.replace('\n', "\n\n");
        let d = parse_dataset(spaced.as_bytes()).unwrap();
        let mut out = Vec::new();
        write_dataset(&d, &mut out).unwrap();
        assert_eq!(parse_dataset(out.as_slice()).unwrap(), d);
    }

    #[test]
    fn stream_yields_conversations_in_file_order() {
        let more = format!(
            "{DEMO}{{\"type\":\"utt\",\"split\":\"val\",\"conv\":\"v\",\"speaker\":\"x\",\"text\":\"t\",\"label\":\"a\"}}\n"
        );
        let s = ConversationStream::new(more.as_bytes()).unwrap();
        let got: Vec<(Split, String)> = s.map(|r| r.map(|(s, c)| (s, c.id))).collect::<Result<_, _>>().unwrap();
        assert_eq!(got, vec![(Split::Train, "c1".into()), (Split::Val, "v".into())]);
    }

    #[test]
    fn non_finite_features_are_not_written() {
        let mut d = parse_dataset(DEMO.as_bytes()).unwrap();
        d.train[0].utterances[0].features = Some(vec![f64::NAN]);
        assert!(write_dataset(&d, Vec::new()).is_err());
    }
}
