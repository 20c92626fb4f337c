use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tokenize::tokenize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Aspect term: the aspect is a span of the sentence.
    Atsa,
    /// Aspect category: the aspect comes from a predefined set.
    Acsa,
}

/// Sentiment label. The discriminant is the class index used everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive = 0,
    Negative = 1,
    Neutral = 2,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }
}

/// One classification instance: a sentence, one of its aspects and the gold label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub tokens: Vec<String>,
    pub task: Task,
    /// Half-open token range of the aspect term (ATSA only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect_span: Option<(usize, usize)>,
    /// Aspect category (ACSA only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub polarity: Polarity,
    pub review_id: String,
    /// Aspect annotations in the source sentence, counted before conflict filtering.
    pub aspects_in_review: usize,
    /// Dependency head per token (−1 for the root), when parsed edges were attached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heads: Option<Vec<i64>>,
}

impl Sample {
    /// Checks the task/aspect invariants.
    pub fn validate(&self) -> Result<()> {
        match (self.task, self.aspect_span, &self.category) {
            (Task::Atsa, Some((s, e)), None) if s < e && e <= self.tokens.len() => Ok(()),
            (Task::Atsa, Some(span), None) => Err(Error::Alignment(format!(
                "review {}: span {span:?} outside {} tokens",
                self.review_id,
                self.tokens.len()
            ))),
            (Task::Acsa, None, Some(c)) if !c.is_empty() => Ok(()),
            _ => Err(Error::Config(format!(
                "review {}: {:?} sample needs exactly one of span/category",
                self.review_id, self.task
            ))),
        }
    }

    /// Aspect words: the span's tokens (ATSA) or the tokenized category (ACSA).
    pub fn aspect_tokens(&self) -> Vec<String> {
        match (self.aspect_span, &self.category) {
            (Some((s, e)), _) => self.tokens[s..e].to_vec(),
            (None, Some(c)) => tokenize(c),
            (None, None) => Vec::new(),
        }
    }
}

/// Writes samples as JSON lines.
pub fn write_jsonl<W: Write>(samples: &[Sample], mut out: W) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads JSON-lines samples; blank lines are skipped.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Sample = serde_json::from_str(&line).map_err(|e| Error::Parse { line: n + 1, msg: e.to_string() })?;
        s.validate().map_err(|e| Error::Parse { line: n + 1, msg: e.to_string() })?;
        out.push(s);
    }
    Ok(out)
}
