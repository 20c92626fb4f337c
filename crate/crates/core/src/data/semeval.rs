use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::sample::{Polarity, Sample, Task};
use super::tokenize::{tokenize, tokenize_with_offsets, Token};

/// Counts gathered while parsing one SemEval file.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub positive: usize,
    pub negative: usize,
    pub neutral: usize,
    pub sentences: usize,
    pub sentences_without_aspects: usize,
    pub conflict_dropped: usize,
    /// Offsets that did not fall on token boundaries and were widened.
    pub widened_spans: usize,
    /// Aspects whose offsets matched no token and whose term was not found.
    pub unaligned_dropped: usize,
}

impl DatasetStats {
    pub fn total(&self) -> usize {
        self.positive + self.negative + self.neutral
    }

    fn count(&mut self, p: Polarity) {
        match p {
            Polarity::Positive => self.positive += 1,
            Polarity::Negative => self.negative += 1,
            Polarity::Neutral => self.neutral += 1,
        }
    }
}

fn polarity(s: &str) -> Result<Option<Polarity>> {
    Ok(match s {
        "positive" => Some(Polarity::Positive),
        "negative" => Some(Polarity::Negative),
        "neutral" => Some(Polarity::Neutral),
        "conflict" => None,
        other => return Err(Error::Xml(format!("unknown polarity `{other}`"))),
    })
}

/// Minimal token range overlapping `[from, to)`; `exact` is false when the
/// offsets cut through a token.
fn covering_span(tokens: &[Token], from: usize, to: usize) -> Option<((usize, usize), bool)> {
    let hits: Vec<usize> = (0..tokens.len()).filter(|&i| tokens[i].start < to && tokens[i].end > from).collect();
    let (&s, &e) = (hits.first()?, hits.last()?);
    let exact = tokens[s].start == from && tokens[e].end == to;
    Some(((s, e + 1), exact))
}

fn find_term(tokens: &[Token], term: &[String]) -> Option<(usize, usize)> {
    if term.is_empty() || term.len() > tokens.len() {
        return None;
    }
    (0..=tokens.len() - term.len())
        .find(|&i| tokens[i..i + term.len()].iter().zip(term).all(|(t, w)| &t.text == w))
        .map(|i| (i, i + term.len()))
}

fn attr<'a>(node: roxmltree::Node<'a, '_>, name: &str) -> Result<&'a str> {
    node.attribute(name)
        .ok_or_else(|| Error::Xml(format!("<{}> at byte {} lacks `{name}`", node.tag_name().name(), node.range().start)))
}

/// Parses a SemEval-2014 Task 4 file into one sample per retained aspect.
///
/// Conflict-labelled aspects and sentences left without aspects are dropped.
pub fn parse_semeval(xml_text: &str, task: Task) -> Result<(Vec<Sample>, DatasetStats)> {
    let doc = roxmltree::Document::parse(xml_text).map_err(|e| Error::Xml(e.to_string()))?;
    let mut samples = Vec::new();
    let mut stats = DatasetStats::default();
    let (group_tag, item_tag) = match task {
        Task::Atsa => ("aspectTerms", "aspectTerm"),
        Task::Acsa => ("aspectCategories", "aspectCategory"),
    };

    for sentence in doc.descendants().filter(|n| n.has_tag_name("sentence")) {
        stats.sentences += 1;
        let id = attr(sentence, "id")?.to_string();
        let text = sentence
            .children()
            .find(|n| n.has_tag_name("text"))
            .and_then(|n| n.text())
            .ok_or_else(|| Error::Xml(format!("sentence {id} has no <text>")))?;
        let items: Vec<_> = sentence
            .children()
            .filter(|n| n.has_tag_name(group_tag))
            .flat_map(|g| g.children().filter(|n| n.has_tag_name(item_tag)))
            .collect();
        let tokens = tokenize_with_offsets(text);
        let words: Vec<String> = tokens.iter().map(|t| t.text.clone()).collect();
        let before = samples.len();

        for item in &items {
            let Some(pol) = polarity(attr(*item, "polarity")?)? else {
                stats.conflict_dropped += 1;
                continue;
            };
            let mut sample = Sample {
                tokens: words.clone(),
                task,
                aspect_span: None,
                category: None,
                polarity: pol,
                review_id: id.clone(),
                aspects_in_review: items.len(),
                heads: None,
            };
            match task {
                Task::Atsa => {
                    let term = attr(*item, "term")?;
                    let parse_off = |k: &str| -> Result<usize> {
                        attr(*item, k)?.parse().map_err(|_| Error::Xml(format!("sentence {id}: bad `{k}` offset")))
                    };
                    let (from, to) = (parse_off("from")?, parse_off("to")?);
                    let span = match covering_span(&tokens, from, to) {
                        Some((span, true)) => span,
                        Some((span, false)) => {
                            log::warn!("sentence {id}: offsets {from}..{to} for `{term}` widened to tokens {span:?}");
                            stats.widened_spans += 1;
                            span
                        }
                        None => match find_term(&tokens, &tokenize(term)) {
                            Some(span) => {
                                log::warn!("sentence {id}: offsets {from}..{to} miss every token; matched `{term}` by text");
                                stats.widened_spans += 1;
                                span
                            }
                            None => {
                                log::warn!("sentence {id}: cannot place aspect `{term}`, dropped");
                                stats.unaligned_dropped += 1;
                                continue;
                            }
                        },
                    };
                    sample.aspect_span = Some(span);
                }
                Task::Acsa => sample.category = Some(attr(*item, "category")?.to_string()),
            }
            stats.count(pol);
            samples.push(sample);
        }
        if samples.len() == before {
            stats.sentences_without_aspects += 1;
        }
    }
    Ok((samples, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<sentences>
  <sentence id="1">
    <text>The salad is so delicious but the soup tastes bad .</text>
    <aspectTerms>
      <aspectTerm term="salad" polarity="positive" from="4" to="9"/>
      <aspectTerm term="soup" polarity="negative" from="34" to="38"/>
    </aspectTerms>
    <aspectCategories>
      <aspectCategory category="food" polarity="conflict"/>
    </aspectCategories>
  </sentence>
  <sentence id="2">
    <text>Service was slow, staff friendly, prices fair.</text>
    <aspectTerms>
      <aspectTerm term="Service" polarity="negative" from="0" to="7"/>
      <aspectTerm term="staff" polarity="conflict" from="18" to="23"/>
      <aspectTerm term="prices" polarity="neutral" from="34" to="40"/>
    </aspectTerms>
    <aspectCategories>
      <aspectCategory category="service" polarity="negative"/>
      <aspectCategory category="price" polarity="neutral"/>
    </aspectCategories>
  </sentence>
  <sentence id="3">
    <text>Nothing to see here.</text>
  </sentence>
</sentences>"#;

    #[test]
    fn atsa_fixture() {
        let (samples, stats) = parse_semeval(FIXTURE, Task::Atsa).unwrap();
        assert_eq!(samples.len(), 4);
        assert_eq!(samples[0].aspect_span, Some((1, 2)));
        assert_eq!(samples[1].aspect_span, Some((7, 8)));
        assert_eq!(samples[0].tokens.len(), 11);
        assert_eq!(samples[2].aspect_tokens(), vec!["service"]);
        assert_eq!(samples[3].polarity, Polarity::Neutral);
        assert_eq!(samples[3].aspects_in_review, 3);
        assert_eq!((stats.positive, stats.negative, stats.neutral), (1, 2, 1));
        assert_eq!(stats.conflict_dropped, 1);
        assert_eq!(stats.sentences_without_aspects, 1);
        for s in &samples {
            s.validate().unwrap();
        }
    }

    #[test]
    fn conflict_among_three_leaves_two() {
        let (samples, _) = parse_semeval(FIXTURE, Task::Atsa).unwrap();
        assert_eq!(samples.iter().filter(|s| s.review_id == "2").count(), 2);
    }

    #[test]
    fn acsa_fixture() {
        let (samples, stats) = parse_semeval(FIXTURE, Task::Acsa).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].category.as_deref(), Some("service"));
        // sentence 1 only had a conflict category
        assert_eq!(stats.sentences_without_aspects, 2);
    }

    #[test]
    fn misaligned_offsets_widen() {
        let xml = r#"<sentences><sentence id="9"><text>Great pizza!</text><aspectTerms>
            <aspectTerm term="izz" polarity="positive" from="7" to="10"/></aspectTerms></sentence></sentences>"#;
        let (samples, stats) = parse_semeval(xml, Task::Atsa).unwrap();
        assert_eq!(samples[0].aspect_span, Some((1, 2)));
        assert_eq!(stats.widened_spans, 1);
    }

    #[test]
    fn malformed_xml_errors() {
        assert!(matches!(parse_semeval("<sentences><sentence>", Task::Atsa), Err(Error::Xml(_))));
    }
}
