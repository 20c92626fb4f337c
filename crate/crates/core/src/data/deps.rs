use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, Graph};

use super::sample::Sample;

/// Parsed dependency heads for one sentence; −1 marks the root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyEdges {
    pub id: String,
    pub heads: Vec<i64>,
}

impl DependencyEdges {
    /// Undirected `(token, head)` pairs for every non-root token.
    pub fn edges(&self) -> Result<Vec<(usize, usize)>> {
        heads_to_edges(&self.heads)
    }

    pub fn to_graph(&self) -> Result<Graph> {
        build_graph(self.heads.len(), &self.edges()?)
    }
}

pub fn heads_to_edges(heads: &[i64]) -> Result<Vec<(usize, usize)>> {
    let n = heads.len();
    let mut out = Vec::with_capacity(n);
    for (i, &h) in heads.iter().enumerate() {
        match h {
            -1 => {}
            h if h >= 0 && (h as usize) < n => out.push(((h as usize).min(i), (h as usize).max(i))),
            h => return Err(Error::Alignment(format!("token {i} has head {h} outside 0..{n}"))),
        }
    }
    Ok(out)
}

/// Builds the sentence graph from a sample's attached heads.
pub fn sample_graph(sample: &Sample) -> Result<Graph> {
    let heads = sample
        .heads
        .as_ref()
        .ok_or_else(|| Error::Lookup(format!("review {} has no dependency heads", sample.review_id)))?;
    if heads.len() != sample.tokens.len() {
        return Err(Error::Alignment(format!(
            "review {}: {} heads for {} tokens",
            sample.review_id,
            heads.len(),
            sample.tokens.len()
        )));
    }
    build_graph(heads.len(), &heads_to_edges(heads)?)
}

/// Reads `{"id": ..., "heads": [...]}` lines, keyed by sentence id.
pub fn load_dependency_edges_reader<R: BufRead>(input: R) -> Result<BTreeMap<String, DependencyEdges>> {
    let mut out = BTreeMap::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: n + 1, msg };
        let e: DependencyEdges = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        e.edges().map_err(|err| parse_err(err.to_string()))?;
        if out.insert(e.id.clone(), e).is_some() {
            return Err(parse_err("duplicate sentence id".into()));
        }
    }
    Ok(out)
}

pub fn load_dependency_edges(jsonl_text: &str) -> Result<BTreeMap<String, DependencyEdges>> {
    load_dependency_edges_reader(jsonl_text.as_bytes())
}

/// Copies heads onto samples by review id. Samples whose sentence is missing
/// from `edges` are left without heads; length mismatches are errors.
pub fn attach_dependencies(samples: &mut [Sample], edges: &BTreeMap<String, DependencyEdges>) -> Result<usize> {
    let mut attached = 0;
    for s in samples.iter_mut() {
        let Some(e) = edges.get(&s.review_id) else { continue };
        if e.heads.len() != s.tokens.len() {
            return Err(Error::Alignment(format!(
                "sentence {}: {} heads for {} tokens",
                s.review_id,
                e.heads.len(),
                s.tokens.len()
            )));
        }
        s.heads = Some(e.heads.clone());
        attached += 1;
    }
    Ok(attached)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sample::{Polarity, Task};

    #[test]
    fn star_heads() {
        let e = DependencyEdges { id: "s".into(), heads: vec![-1, 0, 0] };
        assert_eq!(e.edges().unwrap(), vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn chain_degrees() {
        let g = DependencyEdges { id: "s".into(), heads: vec![-1, 0, 1] }.to_graph().unwrap();
        assert_eq!((0..3).map(|i| g.degree(i)).collect::<Vec<_>>(), vec![1, 2, 1]);
    }

    #[test]
    fn bad_heads_rejected() {
        assert!(matches!(heads_to_edges(&[-1, 3]), Err(Error::Alignment(_))));
        assert!(matches!(heads_to_edges(&[-2]), Err(Error::Alignment(_))));
        let text = "{\"id\":\"a\",\"heads\":[-1,0]}\n{\"id\":\"b\",\"heads\":[5]}\n";
        assert!(matches!(load_dependency_edges(text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn length_mismatch_is_alignment_error() {
        let mut samples = vec![Sample {
            tokens: vec!["a".into(), "b".into()],
            task: Task::Atsa,
            aspect_span: Some((0, 1)),
            category: None,
            polarity: Polarity::Positive,
            review_id: "r".into(),
            aspects_in_review: 1,
            heads: None,
        }];
        let edges = load_dependency_edges("{\"id\":\"r\",\"heads\":[-1,0,0]}").unwrap();
        assert!(matches!(attach_dependencies(&mut samples, &edges), Err(Error::Alignment(_))));
        let edges = load_dependency_edges("{\"id\":\"r\",\"heads\":[-1,0]}").unwrap();
        assert_eq!(attach_dependencies(&mut samples, &edges).unwrap(), 1);
        assert_eq!(sample_graph(&samples[0]).unwrap().degree(1), 1);
    }
}
