use std::path::Path;

use absa_core::bert_fmt::{build_input, build_text_input, head_weights, FormatKind, HeadKind, Specials, TokenVocab};
use proptest::prelude::*;

fn fixture(kind: FormatKind) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/formats").join(format!("{}.json", kind.name()));
    std::fs::read_to_string(path).unwrap().trim_end().to_string()
}

#[test]
fn all_rows_match_fixtures_byte_for_byte() {
    for kind in FormatKind::ALL {
        let built = build_text_input(kind, "The salad is good.", "salad").unwrap();
        assert_eq!(built.to_json().unwrap(), fixture(kind), "{kind}");
    }
}

#[test]
fn fixtures_parse_back() {
    for kind in FormatKind::ALL {
        let parsed: absa_core::bert_fmt::TokenizedInput<String> = serde_json::from_str(&fixture(kind)).unwrap();
        assert_eq!(parsed, build_text_input(kind, "the salad is good .", "salad").unwrap());
    }
}

fn kinds() -> impl Strategy<Value = FormatKind> {
    prop::sample::select(FormatKind::ALL.to_vec())
}

proptest! {
    #[test]
    fn structural_invariants(kind in kinds(), context in prop::collection::vec(3usize..50, 1..12), aspect in prop::collection::vec(3usize..50, 1..4)) {
        let specials = TokenVocab::specials();
        let x = build_input(kind, &context, &aspect, &specials).unwrap();
        let len = x.len();
        prop_assert_eq!(x.segments.len(), len);
        prop_assert_eq!(x.tokens[0], TokenVocab::CLS_ID);
        prop_assert_eq!(x.tokens[len - 1], TokenVocab::SEP_ID);
        prop_assert_eq!(*x.sep_positions.last().unwrap(), len - 1);
        prop_assert_eq!(&x.tokens[x.context_span.0..x.context_span.1], context.as_slice());
        prop_assert!(x.context_span.1 <= x.aspect_span.0);
        prop_assert!(x.aspect_span.1 < len);
        prop_assert!(x.segments.iter().all(|&s| s <= 1));
        let seps: Vec<usize> = (0..len).filter(|&i| x.tokens[i] == TokenVocab::SEP_ID).collect();
        prop_assert_eq!(&seps, &x.sep_positions);
        if kind == FormatKind::Bert0 {
            prop_assert_eq!(x.aspect_span.0, x.aspect_span.1);
            prop_assert_eq!(len, context.len() + 2);
        } else {
            prop_assert_eq!(&x.tokens[x.aspect_span.0..x.aspect_span.1], aspect.as_slice());
        }
    }

    #[test]
    fn aabert_pairs_share_tokens(context in prop::collection::vec(3usize..50, 1..12), aspect in prop::collection::vec(3usize..50, 1..4)) {
        let s = TokenVocab::specials();
        let b = |k| build_input(k, &context, &aspect, &s).unwrap();
        prop_assert_eq!(b(FormatKind::Aabert1).tokens, b(FormatKind::Aabert2).tokens);
        prop_assert_eq!(b(FormatKind::Bert1).tokens, b(FormatKind::Aabert3).tokens);
        prop_assert!(b(FormatKind::Aabert1).segments.iter().all(|&v| v == 0));
        prop_assert!(b(FormatKind::Aabert3).segments.iter().all(|&v| v == 0));
    }

    #[test]
    fn head_weights_sum_to_one(kind in kinds(), n in 1usize..10, head in prop::sample::select(HeadKind::ALL.to_vec())) {
        let context: Vec<usize> = (0..n).map(|i| 3 + i).collect();
        let x = build_input(kind, &context, &[3], &TokenVocab::specials()).unwrap();
        let w = head_weights(&x, head).unwrap();
        prop_assert_eq!(w.len(), x.len());
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn generic_over_token_type() {
    let s = Specials { cls: 'C', sep: 'S' };
    let x = build_input(FormatKind::Aabert3, &['a', 'b'], &['z'], &s).unwrap();
    assert_eq!(x.tokens.iter().collect::<String>(), "CabSzS");
}
