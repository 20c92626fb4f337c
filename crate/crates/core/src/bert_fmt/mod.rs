//! BERT-style input formats (BERT0, BERT1, AABERT1–3) and the CLS/POOL/SEP
//! head selectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{tokenize, Sample, Vocab};
use crate::error::{shape_err, Error, Result};
use crate::numcore::{Matrix, Vector};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const UNK: &str = "[UNK]";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FormatKind {
    #[serde(rename = "BERT0")]
    Bert0,
    #[serde(rename = "BERT1")]
    Bert1,
    #[serde(rename = "AABERT1")]
    Aabert1,
    #[serde(rename = "AABERT2")]
    Aabert2,
    #[serde(rename = "AABERT3")]
    Aabert3,
}

impl FormatKind {
    pub const ALL: [FormatKind; 5] = [Self::Bert0, Self::Bert1, Self::Aabert1, Self::Aabert2, Self::Aabert3];

    pub fn name(self) -> &'static str {
        match self {
            Self::Bert0 => "BERT0",
            Self::Bert1 => "BERT1",
            Self::Aabert1 => "AABERT1",
            Self::Aabert2 => "AABERT2",
            Self::Aabert3 => "AABERT3",
        }
    }

    pub fn uses_aspect(self) -> bool {
        self != Self::Bert0
    }
}

impl fmt::Display for FormatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FormatKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown format `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HeadKind {
    /// Hidden state of `[CLS]`.
    Cls,
    /// Mean hidden state over the context tokens.
    Pool,
    /// Hidden state of the final `[SEP]`.
    Sep,
}

impl HeadKind {
    pub const ALL: [HeadKind; 3] = [Self::Cls, Self::Pool, Self::Sep];
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CLS" => Ok(Self::Cls),
            "POOL" => Ok(Self::Pool),
            "SEP" => Ok(Self::Sep),
            _ => Err(Error::Config(format!("unknown head `{s}`"))),
        }
    }
}

/// The two special symbols of a token alphabet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Specials<T> {
    pub cls: T,
    pub sep: T,
}

impl Specials<String> {
    pub fn text() -> Self {
        Self { cls: CLS.into(), sep: SEP.into() }
    }
}

/// A built input sequence. Spans are half-open token ranges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedInput<T> {
    pub tokens: Vec<T>,
    pub segments: Vec<u8>,
    pub context_span: (usize, usize),
    /// Empty (`start == end`) for BERT0, placed where the aspect would start.
    pub aspect_span: (usize, usize),
    pub sep_positions: Vec<usize>,
}

impl<T> TokenizedInput<T> {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn positions(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    /// Every position is attended to; inputs are never padded.
    pub fn attention_mask(&self) -> Vec<bool> {
        vec![true; self.len()]
    }
}

impl<T: Serialize> TokenizedInput<T> {
    /// Compact JSON with fields in declaration order.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Assembles `[CLS]`, context, aspect and `[SEP]` tokens for `kind`.
pub fn build_input<T: Clone>(kind: FormatKind, context: &[T], aspect: &[T], specials: &Specials<T>) -> Result<TokenizedInput<T>> {
    if context.is_empty() {
        return Err(Error::Empty("context"));
    }
    if kind.uses_aspect() && aspect.is_empty() {
        return Err(Error::Empty("aspect"));
    }
    let n = context.len();
    let mut tokens = Vec::with_capacity(n + aspect.len() + 3);
    let mut segments = Vec::with_capacity(tokens.capacity());
    let mut sep_positions = Vec::new();
    let mut push = |tok: &T, seg: u8, tokens: &mut Vec<T>, is_sep: bool| {
        if is_sep {
            sep_positions.push(tokens.len());
        }
        tokens.push(tok.clone());
        segments.push(seg);
    };
    push(&specials.cls, 0, &mut tokens, false);
    for t in context {
        push(t, 0, &mut tokens, false);
    }
    let context_span = (1, 1 + n);
    let (mid_sep, aspect_seg) = match kind {
        FormatKind::Bert0 => {
            push(&specials.sep, 0, &mut tokens, true);
            let at = context_span.1;
            let out = TokenizedInput { tokens, segments, context_span, aspect_span: (at, at), sep_positions };
            return Ok(out);
        }
        FormatKind::Bert1 => (true, 1),
        FormatKind::Aabert1 => (false, 0),
        FormatKind::Aabert2 => (false, 1),
        FormatKind::Aabert3 => (true, 0),
    };
    if mid_sep {
        push(&specials.sep, 0, &mut tokens, true);
    }
    let start = tokens.len();
    for t in aspect {
        push(t, aspect_seg, &mut tokens, false);
    }
    let aspect_span = (start, tokens.len());
    push(&specials.sep, aspect_seg, &mut tokens, true);
    Ok(TokenizedInput { tokens, segments, context_span, aspect_span, sep_positions })
}

/// Builds the symbolic input for a raw sentence and aspect string.
pub fn build_text_input(kind: FormatKind, sentence: &str, aspect: &str) -> Result<TokenizedInput<String>> {
    build_input(kind, &tokenize(sentence), &tokenize(aspect), &Specials::text())
}

/// Word ids for the toy transformer: `[UNK]`, `[CLS]`, `[SEP]`, then words.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenVocab {
    words: Vocab,
}

impl TokenVocab {
    pub const UNK_ID: usize = 0;
    pub const CLS_ID: usize = 1;
    pub const SEP_ID: usize = 2;
    const RESERVED: usize = 3;

    pub fn from_samples(samples: &[Sample]) -> Self {
        Self { words: Vocab::from_samples([samples]) }
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { words: Vocab::from_words(words) }
    }

    pub fn len(&self) -> usize {
        self.words.len() + Self::RESERVED
    }

    /// Ordinary words, without the reserved symbols.
    pub fn words(&self) -> &[String] {
        self.words.words()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> usize {
        match word {
            CLS => Self::CLS_ID,
            SEP => Self::SEP_ID,
            _ => self.words.get(word).map_or(Self::UNK_ID, |i| i + Self::RESERVED),
        }
    }

    pub fn specials() -> Specials<usize> {
        Specials { cls: Self::CLS_ID, sep: Self::SEP_ID }
    }

    pub fn ids<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }
}

/// Id-level input for a sample; the aspect is its term span or tokenized category.
pub fn encode_sample(kind: FormatKind, sample: &Sample, vocab: &TokenVocab) -> Result<TokenizedInput<usize>> {
    let context = vocab.ids(&sample.tokens);
    let aspect = vocab.ids(&sample.aspect_tokens());
    build_input(kind, &context, &aspect, &TokenVocab::specials())
}

/// Picks the classification representation from encoder outputs `h`.
pub fn select_head<T>(h: &Matrix, input: &TokenizedInput<T>, head: HeadKind) -> Result<Vector> {
    if h.rows() != input.len() {
        return Err(shape_err("select_head", format!("{} rows for {} tokens", h.rows(), input.len())));
    }
    match head {
        HeadKind::Cls => Ok(h.row_vector(0)),
        HeadKind::Sep => {
            let &last = input.sep_positions.last().ok_or(Error::Empty("sep_positions"))?;
            Ok(h.row_vector(last))
        }
        HeadKind::Pool => {
            let (s, e) = input.context_span;
            if s >= e {
                return Err(Error::Empty("context_span"));
            }
            let rows: Vec<usize> = (s..e).collect();
            Ok(h.select_rows(&rows).mean_rows())
        }
    }
}

/// Row weights that [`select_head`] applies to `h`, for backpropagation.
pub fn head_weights<T>(input: &TokenizedInput<T>, head: HeadKind) -> Result<Vec<f64>> {
    let mut w = vec![0.0; input.len()];
    match head {
        HeadKind::Cls => w[0] = 1.0,
        HeadKind::Sep => w[*input.sep_positions.last().ok_or(Error::Empty("sep_positions"))?] = 1.0,
        HeadKind::Pool => {
            let (s, e) = input.context_span;
            if s >= e {
                return Err(Error::Empty("context_span"));
            }
            let inv = 1.0 / (e - s) as f64;
            w[s..e].fill(inv);
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(kind: FormatKind) -> TokenizedInput<String> {
        build_text_input(kind, "the salad is good .", "salad").unwrap()
    }

    fn words(t: &TokenizedInput<String>) -> String {
        t.tokens.join(" ")
    }

    #[test]
    fn bert1_example() {
        let t = ex(FormatKind::Bert1);
        assert_eq!(words(&t), "[CLS] the salad is good . [SEP] salad [SEP]");
        assert_eq!(t.segments, [0, 0, 0, 0, 0, 0, 0, 1, 1]);
        assert_eq!(t.sep_positions, [6, 8]);
        assert_eq!(t.context_span, (1, 6));
        assert_eq!(t.aspect_span, (7, 8));
    }

    #[test]
    fn aabert_examples() {
        let a1 = ex(FormatKind::Aabert1);
        assert_eq!(words(&a1), "[CLS] the salad is good . salad [SEP]");
        assert!(a1.segments.iter().all(|&s| s == 0));
        let a2 = ex(FormatKind::Aabert2);
        assert_eq!(a2.tokens, a1.tokens);
        assert_eq!(a2.segments, [0, 0, 0, 0, 0, 0, 1, 1]);
    }

    #[test]
    fn bert0_ignores_aspect() {
        let t = build_text_input(FormatKind::Bert0, "the salad is good .", "").unwrap();
        assert_eq!(words(&t), "[CLS] the salad is good . [SEP]");
        assert_eq!(t.aspect_span, (6, 6));
        assert_eq!(t, ex(FormatKind::Bert0));
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(matches!(build_text_input(FormatKind::Bert1, " ", "salad"), Err(Error::Empty("context"))));
        assert!(matches!(build_text_input(FormatKind::Aabert2, "good", ""), Err(Error::Empty("aspect"))));
    }

    #[test]
    fn heads_pick_rows() {
        let t = ex(FormatKind::Bert1);
        let h = Matrix::from_rows(&(0..9).map(|i| vec![i as f64, 1.0]).collect::<Vec<_>>()).unwrap();
        assert_eq!(select_head(&h, &t, HeadKind::Cls).unwrap().as_slice(), &[0.0, 1.0]);
        assert_eq!(select_head(&h, &t, HeadKind::Sep).unwrap().as_slice(), &[8.0, 1.0]);
        assert_eq!(select_head(&h, &t, HeadKind::Pool).unwrap().as_slice(), &[3.0, 1.0]);
        let short = Matrix::zeros(3, 2);
        assert!(select_head(&short, &t, HeadKind::Cls).is_err());
    }

    #[test]
    fn head_weights_match_selection() {
        let t = ex(FormatKind::Aabert3);
        let h = Matrix::from_rows(&(0..t.len()).map(|i| vec![(i * i) as f64]).collect::<Vec<_>>()).unwrap();
        for head in HeadKind::ALL {
            let w = head_weights(&t, head).unwrap();
            let manual: f64 = w.iter().enumerate().map(|(i, wi)| wi * h[(i, 0)]).sum();
            assert!((manual - select_head(&h, &t, head).unwrap()[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn names_round_trip() {
        for k in FormatKind::ALL {
            assert_eq!(k.name().parse::<FormatKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert_eq!("aabert2".parse::<FormatKind>().unwrap(), FormatKind::Aabert2);
        assert_eq!("pool".parse::<HeadKind>().unwrap(), HeadKind::Pool);
        assert!("BERT9".parse::<FormatKind>().is_err());
    }

    #[test]
    fn vocab_ids() {
        let v = TokenVocab::from_words(["salad", "good"]);
        assert_eq!(v.len(), 5);
        assert_eq!(v.ids(&["[CLS]", "good", "salad", "nope", "[SEP]"]), [1, 3, 4, 0, 2]);
    }
}
