//! Text normalisation, tokenisation, stemming and subword embeddings.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

mod embed;
mod porter;

pub use embed::{cosine, EmbedModel, SubwordMode, DEFAULT_BUCKET_BITS, DEFAULT_DIM};
pub use porter::stem;

/// A token sequence with byte spans into the text it was produced from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
    pub offsets: Vec<(usize, usize)>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    pub fn stems(&self) -> Vec<String> {
        self.tokens.iter().map(|t| stem(t)).collect()
    }
}

#[inline]
fn is_separator(c: char) -> bool {
    c.is_whitespace() || c == '-' || c == '/'
}

/// Lowercases, turns hyphens and slashes into spaces, strips punctuation and
/// collapses whitespace.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        if is_separator(c) {
            pending_space = !out.is_empty();
            continue;
        }
        if !c.is_alphanumeric() {
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.extend(c.to_lowercase());
    }
    out
}

/// Whitespace tokenisation. Offsets are byte spans into `text`.
pub fn tokenize(text: &str) -> TokenSeq {
    let mut seq = TokenSeq::default();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                seq.tokens.push(String::from(&text[s..i]));
                seq.offsets.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        seq.tokens.push(String::from(&text[s..]));
        seq.offsets.push((s, text.len()));
    }
    seq
}

/// Tokenises raw (unnormalised) text so that the token strings equal
/// `tokenize(&normalize(text))` while the offsets still point into `text`.
///
/// Each span is trimmed to its first and last alphanumeric character, so
/// slicing the source at an offset never includes surrounding punctuation.
pub fn tokenize_raw(text: &str) -> TokenSeq {
    let mut seq = TokenSeq::default();
    let mut current = String::new();
    let mut span: Option<(usize, usize)> = None;
    let flush = |current: &mut String, span: &mut Option<(usize, usize)>, seq: &mut TokenSeq| {
        if let Some(sp) = span.take() {
            seq.tokens.push(core::mem::take(current));
            seq.offsets.push(sp);
        }
    };
    for (i, c) in text.char_indices() {
        if is_separator(c) {
            flush(&mut current, &mut span, &mut seq);
        } else if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
            let end = i + c.len_utf8();
            span = Some(match span {
                Some((s, _)) => (s, end),
                None => (i, end),
            });
        }
    }
    flush(&mut current, &mut span, &mut seq);
    seq
}

/// Normalise, tokenise and stem.
pub fn stems_of(text: &str) -> Vec<String> {
    tokenize(&normalize(text)).stems()
}

/// Sentence spans (byte ranges) of `text`, split after `.`, `!`, `?` when
/// followed by whitespace, and at line breaks. Empty sentences are skipped.
pub fn sentences(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let boundary = match c {
            '\n' | '\r' => Some(i),
            '.' | '!' | '?' => match chars.peek() {
                None => Some(i + 1),
                Some(&(_, n)) if n.is_whitespace() => Some(i + 1),
                _ => None,
            },
            _ => None,
        };
        if let Some(end) = boundary {
            push_trimmed(text, start, end, &mut out);
            start = end;
        }
    }
    push_trimmed(text, start, text.len(), &mut out);
    out
}

fn push_trimmed(text: &str, start: usize, end: usize, out: &mut Vec<(usize, usize)>) {
    let piece = &text[start..end];
    let lead = piece.len() - piece.trim_start().len();
    let trimmed = piece.trim();
    if !trimmed.is_empty() {
        out.push((start + lead, start + lead + trimmed.len()));
    }
}

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be", "been", "being", "but",
    "by", "can", "could", "did", "do", "does", "doing", "for", "from", "had", "has", "have", "having", "he", "her",
    "here", "hers", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "just", "may", "me", "might",
    "most", "must", "my", "no", "nor", "not", "of", "on", "or", "our", "ours", "she", "should", "so", "some", "such",
    "than", "that", "the", "their", "theirs", "them", "then", "there", "these", "they", "this", "those", "to", "too",
    "up", "us", "very", "was", "we", "were", "what", "when", "where", "which", "while", "who", "whom", "whose", "why",
    "will", "with", "would", "you", "your", "yours",
];

/// Small English function-word list. Expects normalised tokens.
pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Distinct stems of the non-stopword tokens of `text`.
pub fn content_stems(text: &str) -> BTreeSet<String> {
    tokenize(&normalize(text))
        .iter()
        .filter(|t| !is_stopword(t))
        .map(stem)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("The Nucleus."), "the nucleus");
        assert_eq!(normalize("5-10 gallons"), "5 10 gallons");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("  Hello,   WORLD!\n and/or  "), "hello world and or");
        assert_eq!(normalize("--"), "");
    }

    #[test]
    fn tokenize_offsets() {
        let t = tokenize("the nucleus");
        assert_eq!(t.tokens, vec!["the", "nucleus"]);
        assert_eq!(t.offsets, vec![(0, 3), (4, 11)]);
        assert!(tokenize("").is_empty());
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn raw_tokens_point_into_source() {
        let src = "The nucleus, (at the centre) is 5-10 km/s.";
        let t = tokenize_raw(src);
        assert_eq!(t.tokens, tokenize(&normalize(src)).tokens);
        assert_eq!(&src[t.offsets[1].0..t.offsets[1].1], "nucleus");
        assert_eq!(&src[t.offsets[3].0..t.offsets[3].1], "the");
        assert_eq!(&src[t.offsets[9].0..t.offsets[9].1], "s");
    }

    #[test]
    fn sentence_split() {
        let text = "First one. Second 3.5 here!\nThird";
        let s: Vec<&str> = sentences(text).iter().map(|&(a, b)| &text[a..b]).collect();
        assert_eq!(s, vec!["First one.", "Second 3.5 here!", "Third"]);
    }

    #[test]
    fn stopword_list_is_sorted() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
        assert!(is_stopword("the"));
        assert!(!is_stopword("nucleus"));
    }
}
