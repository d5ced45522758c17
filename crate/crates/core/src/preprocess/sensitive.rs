//! Multi-pattern sensitive-term matching.

use std::io::{self, BufRead};

use aho_corasick::{AhoCorasick, MatchKind};

/// A compiled lexicon. Matches are non-overlapping and leftmost; when
/// several terms start at the same offset the longest wins, so the result
/// does not depend on lexicon order.
#[derive(Debug, Clone)]
pub struct SensitiveMatcher {
    automaton: AhoCorasick,
    terms: Vec<String>,
}

impl SensitiveMatcher {
    pub fn new<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut terms: Vec<String> = terms
            .into_iter()
            .map(Into::into)
            .filter(|t| !t.is_empty())
            .collect();
        terms.sort();
        terms.dedup();
        let automaton = AhoCorasick::builder()
            .match_kind(MatchKind::LeftmostLongest)
            .build(&terms)
            .expect("lexicon automaton fits default limits");
        SensitiveMatcher { automaton, terms }
    }

    /// Loads a lexicon file: UTF-8, one term per line, blank lines ignored.
    pub fn from_reader<R: BufRead>(reader: R) -> io::Result<Self> {
        let mut terms = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let term = line.trim_end_matches('\r');
            if !term.trim().is_empty() {
                terms.push(term.to_string());
            }
        }
        Ok(SensitiveMatcher::new(terms))
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn find_all(&self, text: &str) -> Vec<(String, usize)> {
        self.automaton
            .find_iter(text)
            .map(|m| (self.terms[m.pattern().as_usize()].clone(), m.start()))
            .collect()
    }

    pub fn count(&self, text: &str) -> usize {
        self.automaton.find_iter(text).count()
    }

    pub fn is_match(&self, text: &str) -> bool {
        self.automaton.is_match(text)
    }
}

/// One-shot convenience over [`SensitiveMatcher::find_all`].
pub fn match_sensitive_terms<I, S>(text: &str, lexicon: I) -> Vec<(String, usize)>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    SensitiveMatcher::new(lexicon).find_all(text)
}

/// Removes every line that contains a lexicon term. Returns the new text
/// and the removed terms with their offsets in the original text.
pub fn drop_matching_lines(text: &str, matcher: &SensitiveMatcher) -> (String, Vec<(String, usize)>) {
    let matches = matcher.find_all(text);
    if matches.is_empty() {
        return (text.to_string(), matches);
    }
    let mut out = String::with_capacity(text.len());
    let mut offset = 0;
    let mut next = matches.iter().map(|(_, at)| *at).peekable();
    for line in text.split_inclusive('\n') {
        let end = offset + line.len();
        let mut hit = false;
        while let Some(&at) = next.peek() {
            if at < end {
                hit = true;
                next.next();
            } else {
                break;
            }
        }
        if !hit {
            out.push_str(line);
        }
        offset = end;
    }
    (out, matches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn no_match_yields_empty() {
        assert!(match_sensitive_terms("perfectly clean text", ["badword"]).is_empty());
    }

    #[test]
    fn reports_byte_offset() {
        assert_eq!(match_sensitive_terms("xxabyy", ["ab"]), vec![("ab".to_string(), 2)]);
    }

    #[test]
    fn cjk_offsets_are_bytes() {
        assert_eq!(match_sensitive_terms("你好坏词", ["坏词"]), vec![("坏词".to_string(), 6)]);
    }

    #[test]
    fn line_level_drop_keeps_clean_lines() {
        let m = SensitiveMatcher::new(["bad"]);
        let (out, hits) = drop_matching_lines("good line\nbad line\nfine\n", &m);
        assert_eq!(out, "good line\nfine\n");
        assert_eq!(hits.len(), 1);
    }

    /// Leftmost-longest non-overlapping matches, computed by scanning every
    /// term separately with `str::find` and resolving overlaps greedily.
    fn brute_force(text: &str, lexicon: &[String]) -> Vec<(String, usize)> {
        let mut all: Vec<(usize, usize, &str)> = Vec::new();
        for term in lexicon {
            let mut from = 0;
            while let Some(pos) = text[from..].find(term.as_str()) {
                let at = from + pos;
                all.push((at, term.len(), term));
                from = at + text[at..].chars().next().unwrap().len_utf8();
            }
        }
        all.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut out = Vec::new();
        let mut cursor = 0;
        for (at, len, term) in all {
            if at >= cursor {
                out.push((term.to_string(), at));
                cursor = at + len;
            }
        }
        out
    }

    #[test]
    fn large_lexicon_matches_per_term_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let alphabet: Vec<char> = "abcdefgh数据".chars().collect();
        let word = |rng: &mut ChaCha8Rng, len: usize| -> String {
            (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
        };
        let lexicon: Vec<String> = (0..10_000).map(|_| {
            let len = rng.gen_range(6..10);
            word(&mut rng, len)
        }).collect();
        let mut text = String::new();
        while text.len() < 1 << 20 {
            if rng.gen_bool(0.01) {
                text.push_str(&lexicon[rng.gen_range(0..lexicon.len())]);
            } else {
                text.push(alphabet[rng.gen_range(0..alphabet.len())]);
            }
        }
        let expected = brute_force(&text, &lexicon);
        assert!(expected.len() > 1000);
        assert_eq!(match_sensitive_terms(&text, lexicon.iter().cloned()), expected);
    }
}
