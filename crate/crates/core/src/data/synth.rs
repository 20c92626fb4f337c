use crate::numcore::Rng;

use super::sample::{Polarity, Sample, Task};

const ASPECTS: [&str; 8] = ["food", "service", "price", "staff", "pizza", "wine", "music", "decor"];
const POSITIVE: [&str; 4] = ["great", "tasty", "lovely", "superb"];
const NEGATIVE: [&str; 4] = ["awful", "rude", "bland", "terrible"];
const NEUTRAL: [&str; 4] = ["average", "okay", "ordinary", "plain"];

fn words_for(p: Polarity) -> &'static [&'static str] {
    match p {
        Polarity::Positive => &POSITIVE,
        Polarity::Negative => &NEGATIVE,
        Polarity::Neutral => &NEUTRAL,
    }
}

fn pick<'a>(rng: &mut Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.below(xs.len())]
}

fn to_tokens(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

/// Single-aspect sentences "the <aspect> was <opinion> ." whose label is
/// fixed by the opinion word, balanced over the three classes.
///
/// Heads form the tree the=>aspect, aspect=>was, opinion=>was, .=>was.
pub fn separable_corpus(n: usize, rng: &Rng) -> Vec<Sample> {
    let mut r = rng.substream("synth/separable");
    (0..n)
        .map(|i| {
            let pol = Polarity::ALL[i % 3];
            let aspect = pick(&mut r, &ASPECTS);
            let opinion = pick(&mut r, words_for(pol));
            Sample {
                tokens: to_tokens(&["the", aspect, "was", opinion, "."]),
                task: Task::Atsa,
                aspect_span: Some((1, 2)),
                category: None,
                polarity: pol,
                review_id: format!("sep-{i}"),
                aspects_in_review: 1,
                heads: Some(vec![1, 2, -1, 2, 2]),
            }
        })
        .collect()
}

/// Reviews "the <a1> was <o1> but the <a2> was <o2> ." carrying two distinct
/// aspects of opposite polarity; each review yields two samples sharing the
/// same tokens, so `n_reviews` reviews give `2 * n_reviews` samples.
pub fn opposite_pair_corpus(n_reviews: usize, rng: &Rng) -> Vec<Sample> {
    let mut r = rng.substream("synth/opposite-pairs");
    let mut out = Vec::with_capacity(2 * n_reviews);
    for i in 0..n_reviews {
        let a1 = pick(&mut r, &ASPECTS);
        let a2 = loop {
            let a = pick(&mut r, &ASPECTS);
            if a != a1 {
                break a;
            }
        };
        let (p1, p2) = if r.below(2) == 0 {
            (Polarity::Positive, Polarity::Negative)
        } else {
            (Polarity::Negative, Polarity::Positive)
        };
        let o1 = pick(&mut r, words_for(p1));
        let o2 = pick(&mut r, words_for(p2));
        let tokens = to_tokens(&["the", a1, "was", o1, "but", "the", a2, "was", o2, "."]);
        let heads = vec![1, 2, -1, 2, 2, 6, 7, 2, 7, 2];
        for (span, pol) in [((1, 2), p1), ((6, 7), p2)] {
            out.push(Sample {
                tokens: tokens.clone(),
                task: Task::Atsa,
                aspect_span: Some(span),
                category: None,
                polarity: pol,
                review_id: format!("pair-{i}"),
                aspects_in_review: 2,
                heads: Some(heads.clone()),
            });
        }
    }
    out
}

/// Category-task version of [`separable_corpus`]: the aspect becomes the
/// sample's category and the sentence keeps only the opinion.
pub fn separable_category_corpus(n: usize, rng: &Rng) -> Vec<Sample> {
    separable_corpus(n, rng)
        .into_iter()
        .map(|mut s| {
            s.task = Task::Acsa;
            s.category = Some(s.tokens[1].clone());
            s.aspect_span = None;
            s.heads = None;
            s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_is_balanced_and_valid() {
        let s = separable_corpus(64, &Rng::new(3));
        assert_eq!(s.len(), 64);
        for x in &s {
            x.validate().unwrap();
        }
        let pos = s.iter().filter(|x| x.polarity == Polarity::Positive).count();
        assert_eq!(pos, 22);
        assert_eq!(s, separable_corpus(64, &Rng::new(3)));
    }

    #[test]
    fn pairs_have_opposite_labels() {
        let s = opposite_pair_corpus(300, &Rng::new(1));
        assert_eq!(s.len(), 600);
        for pair in s.chunks(2) {
            assert_eq!(pair[0].tokens, pair[1].tokens);
            assert_ne!(pair[0].polarity, pair[1].polarity);
            assert_ne!(pair[0].aspect_tokens(), pair[1].aspect_tokens());
            pair[0].validate().unwrap();
        }
    }

    #[test]
    fn category_variant_has_no_span() {
        let s = separable_category_corpus(6, &Rng::new(0));
        for x in &s {
            x.validate().unwrap();
            assert_eq!(x.aspect_tokens().len(), 1);
        }
    }
}
