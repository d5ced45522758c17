//! Character-level Traditional-to-Simplified conversion.
//!
//! Only a 1:1 character table is supported. Production tables are data
//! files (TSV: source char, tab, target char); [`SimplifyMap::sample`] is a
//! small built-in table for tests and demos.

use std::collections::HashMap;
use std::io::{self, BufRead};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimplifyMap {
    table: HashMap<char, char>,
}

const SAMPLE_PAIRS: &[(char, char)] = &[
    ('體', '体'), ('漢', '汉'), ('語', '语'), ('國', '国'), ('學', '学'),
    ('書', '书'), ('車', '车'), ('門', '门'), ('時', '时'), ('開', '开'),
    ('發', '发'), ('說', '说'), ('們', '们'), ('這', '这'), ('個', '个'),
    ('來', '来'), ('為', '为'), ('會', '会'), ('對', '对'), ('後', '后'),
    ('過', '过'), ('還', '还'), ('長', '长'), ('電', '电'), ('網', '网'),
    ('數', '数'), ('據', '据'), ('質', '质'), ('類', '类'), ('點', '点'),
    ('問', '问'), ('題', '题'), ('簡', '简'), ('雜', '杂'), ('實', '实'),
    ('現', '现'), ('義', '义'), ('無', '无'), ('與', '与'), ('經', '经'),
];

impl SimplifyMap {
    pub fn new(table: HashMap<char, char>) -> Self {
        SimplifyMap { table }
    }

    pub fn sample() -> Self {
        SimplifyMap { table: SAMPLE_PAIRS.iter().copied().collect() }
    }

    /// Parses `source<TAB>target` lines. Blank lines and lines starting
    /// with `#` are skipped.
    pub fn from_tsv<R: BufRead>(reader: R) -> io::Result<Self> {
        let mut table = HashMap::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("simplify map line {}: expected `char<TAB>char`", n + 1),
                )
            };
            let (from, to) = line.split_once('\t').ok_or_else(bad)?;
            let single = |s: &str| {
                let mut chars = s.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Some(c),
                    _ => None,
                }
            };
            let (from, to) = (single(from).ok_or_else(bad)?, single(to).ok_or_else(bad)?);
            table.insert(from, to);
        }
        Ok(SimplifyMap { table })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, c: char) -> Option<char> {
        self.table.get(&c).copied()
    }

    /// True when no target character is itself a source key, which makes
    /// conversion idempotent.
    pub fn image_disjoint_from_domain(&self) -> bool {
        self.table.values().all(|v| !self.table.contains_key(v))
    }
}

pub fn to_simplified(text: &str, map: &SimplifyMap) -> String {
    if map.is_empty() {
        return text.to_string();
    }
    text.chars().map(|c| map.get(c).unwrap_or(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_map_is_identity() {
        assert_eq!(to_simplified("字體 abc", &SimplifyMap::default()), "字體 abc");
    }

    #[test]
    fn direct_lookup() {
        let map = SimplifyMap::new([('體', '体')].into_iter().collect());
        assert_eq!(to_simplified("字體", &map), "字体");
    }

    #[test]
    fn parses_tsv() {
        let map = SimplifyMap::from_tsv("# comment\n體\t体\n\n國\t国\n".as_bytes()).unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!(map.get('國'), Some('国'));
        assert!(SimplifyMap::from_tsv("體体\n".as_bytes()).is_err());
        assert!(SimplifyMap::from_tsv("體\t体体\n".as_bytes()).is_err());
    }

    #[test]
    fn sample_table_is_disjoint() {
        assert!(SimplifyMap::sample().image_disjoint_from_domain());
    }

    fn sample_text() -> impl Strategy<Value = String> {
        let mut pool: Vec<char> = SAMPLE_PAIRS.iter().flat_map(|&(a, b)| [a, b]).collect();
        pool.extend("abc 字文，。\n".chars());
        proptest::collection::vec(proptest::sample::select(pool), 0..200)
            .prop_map(|v| v.into_iter().collect())
    }

    proptest! {
        #[test]
        fn conversion_is_idempotent_and_length_preserving(text in sample_text()) {
            let map = SimplifyMap::sample();
            let once = to_simplified(&text, &map);
            prop_assert_eq!(once.chars().count(), text.chars().count());
            prop_assert_eq!(to_simplified(&once, &map), once);
        }
    }
}
