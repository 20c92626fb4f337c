/// A lowercased token with its half-open character range in the source text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '…' | '–' | '—')
}

/// Lowercases, splits on whitespace, and peels leading and trailing
/// punctuation characters off each chunk as their own tokens.
///
/// Offsets count `char`s, matching the SemEval `from`/`to` attributes.
pub fn tokenize_with_offsets(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_chunk(&chars, start, i, &mut out);
    }
    out
}

fn split_chunk(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    let mut lo = start;
    let mut hi = end;
    while lo < hi && is_punct(chars[lo]) {
        out.push(token(chars, lo, lo + 1));
        lo += 1;
    }
    let mut trailing = Vec::new();
    while hi > lo && is_punct(chars[hi - 1]) {
        trailing.push(token(chars, hi - 1, hi));
        hi -= 1;
    }
    if lo < hi {
        out.push(token(chars, lo, hi));
    }
    out.extend(trailing.into_iter().rev());
}

fn token(chars: &[char], start: usize, end: usize) -> Token {
    let text: String = chars[start..end].iter().collect::<String>().to_lowercase();
    Token { text, start, end }
}

pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_offsets(text).into_iter().map(|t| t.text).collect()
}
