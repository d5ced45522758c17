//! Tokenization shared by shingling, word counts and the linear classifier.
//!
//! A token is a maximal run of letters/digits, except that every CJK
//! character (Han, kana, Hangul) stands alone. Whitespace tokenization
//! would turn a whole Chinese paragraph into a single "word".

use std::ops::Range;

/// Returns true for characters that form single-character tokens.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // Hiragana, Katakana
        | 0x3400..=0x4DBF    // CJK Extension A
        | 0x4E00..=0x9FFF    // CJK Unified Ideographs
        | 0xAC00..=0xD7AF    // Hangul syllables
        | 0xF900..=0xFAFF    // CJK Compatibility Ideographs
        | 0x20000..=0x2FA1F  // Extensions B..F, compatibility supplement
    )
}

/// Iterator over token byte ranges of a text.
pub struct TokenSpans<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Iterator for TokenSpans<'a> {
    type Item = Range<usize>;

    fn next(&mut self) -> Option<Range<usize>> {
        let rest = &self.text[self.pos..];
        let mut start = None;
        for (off, c) in rest.char_indices() {
            let at = self.pos + off;
            match start {
                None => {
                    if is_cjk(c) {
                        self.pos = at + c.len_utf8();
                        return Some(at..self.pos);
                    }
                    if c.is_alphanumeric() {
                        start = Some(at);
                    }
                }
                Some(s) => {
                    if is_cjk(c) || !c.is_alphanumeric() {
                        self.pos = at;
                        return Some(s..at);
                    }
                }
            }
        }
        self.pos = self.text.len();
        start.map(|s| s..self.text.len())
    }
}

pub fn token_spans(text: &str) -> TokenSpans<'_> {
    TokenSpans { text, pos: 0 }
}

pub fn tokens(text: &str) -> impl Iterator<Item = &str> {
    token_spans(text).map(move |r| &text[r])
}

pub fn count_tokens(text: &str) -> usize {
    token_spans(text).count()
}

/// Largest char boundary `<= idx`.
pub fn floor_char_boundary(text: &str, mut idx: usize) -> usize {
    if idx >= text.len() {
        return text.len();
    }
    while !text.is_char_boundary(idx) {
        idx -= 1;
    }
    idx
}

/// Smallest char boundary `>= idx`.
pub fn ceil_char_boundary(text: &str, mut idx: usize) -> usize {
    if idx >= text.len() {
        return text.len();
    }
    while !text.is_char_boundary(idx) {
        idx += 1;
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latin_runs_split_on_punctuation() {
        let t: Vec<_> = tokens("Hello, world! x86_64 v2").collect();
        assert_eq!(t, ["Hello", "world", "x86", "64", "v2"]);
    }

    #[test]
    fn cjk_characters_are_single_tokens() {
        let t: Vec<_> = tokens("数据abc清洗").collect();
        assert_eq!(t, ["数", "据", "abc", "清", "洗"]);
    }

    #[test]
    fn empty_and_punctuation_only() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens(" ,.;\n"), 0);
    }

    #[test]
    fn boundaries_snap_inside_multibyte() {
        let s = "a数b";
        assert_eq!(floor_char_boundary(s, 2), 1);
        assert_eq!(ceil_char_boundary(s, 2), 4);
        assert_eq!(ceil_char_boundary(s, 99), s.len());
    }
}
