//! Resident-ID and mobile-number detection and masking.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiiKind {
    NationalId,
    Phone,
}

impl PiiKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PiiKind::NationalId => "national_id",
            PiiKind::Phone => "phone",
        }
    }

    pub fn mask(self) -> String {
        format!("[PII:{}]", self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiiSpan {
    pub end: usize,
    pub kind: PiiKind,
    pub start: usize,
    /// Checksum result; always true for phones.
    pub valid: bool,
}

const ID_WEIGHTS: [u32; 17] = [7, 9, 10, 5, 8, 4, 2, 1, 6, 3, 7, 9, 10, 5, 8, 4, 2];
const ID_CHECK: [u8; 11] = *b"10X98765432";

/// Check character for the first 17 digits of a resident ID.
pub fn national_id_check_char(digits17: &[u8]) -> Option<u8> {
    if digits17.len() != 17 || !digits17.iter().all(u8::is_ascii_digit) {
        return None;
    }
    let sum: u32 = digits17.iter().zip(ID_WEIGHTS).map(|(&d, w)| (d - b'0') as u32 * w).sum();
    Some(ID_CHECK[(sum % 11) as usize])
}

fn is_leap(y: u32) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

/// `YYYYMMDD` with a plausible birth year and a real calendar day.
fn valid_birth_date(b: &[u8]) -> bool {
    let num = |s: &[u8]| s.iter().fold(0u32, |acc, &c| acc * 10 + (c - b'0') as u32);
    let (y, m, d) = (num(&b[0..4]), num(&b[4..6]), num(&b[6..8]));
    if !(1800..=2099).contains(&y) || !(1..=12).contains(&m) || d == 0 {
        return false;
    }
    let days = match m {
        2 if is_leap(y) => 29,
        2 => 28,
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    };
    d <= days
}

/// All ID candidates and mobile numbers, sorted by start. Matches are whole
/// ASCII digit runs, so spans never overlap.
pub fn detect_pii(text: &str) -> Vec<PiiSpan> {
    let b = text.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if !b[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        let run = &b[start..i];
        match run.len() {
            18 => push_id(&mut spans, b, start, start + 18),
            17 if matches!(b.get(i), Some(b'X' | b'x')) && !b.get(i + 1).is_some_and(u8::is_ascii_alphanumeric) => {
                push_id(&mut spans, b, start, i + 1);
                i += 1;
            }
            11 if run[0] == b'1' && (b'3'..=b'9').contains(&run[1]) => {
                spans.push(PiiSpan { end: i, kind: PiiKind::Phone, start, valid: true });
            }
            _ => {}
        }
    }
    spans
}

fn push_id(spans: &mut Vec<PiiSpan>, b: &[u8], start: usize, end: usize) {
    let id = &b[start..end];
    if !valid_birth_date(&id[6..14]) {
        return;
    }
    let valid = national_id_check_char(&id[..17]) == Some(id[17].to_ascii_uppercase());
    spans.push(PiiSpan { end, kind: PiiKind::NationalId, start, valid });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RedactPolicy {
    #[default]
    Mask,
    DropDoc,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RedactError {
    #[error("PII spans {0}..{1} and {2}..{3} overlap or are out of order")]
    Overlap(usize, usize, usize, usize),
    #[error("PII span {0}..{1} is out of bounds or not on a char boundary")]
    OutOfBounds(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Redaction {
    pub text: String,
    /// Valid spans acted on.
    pub count: usize,
    /// Set under `DropDoc` when the document must be removed.
    pub drop_doc: bool,
}

/// Applies `policy` to the valid spans; invalid candidates are left alone.
pub fn redact(text: &str, spans: &[PiiSpan], policy: RedactPolicy) -> Result<Redaction, RedactError> {
    let mut prev: Option<&PiiSpan> = None;
    for s in spans {
        if s.start >= s.end || s.end > text.len() || !text.is_char_boundary(s.start) || !text.is_char_boundary(s.end) {
            return Err(RedactError::OutOfBounds(s.start, s.end));
        }
        if let Some(p) = prev {
            if s.start < p.end {
                return Err(RedactError::Overlap(p.start, p.end, s.start, s.end));
            }
        }
        prev = Some(s);
    }
    let valid: Vec<&PiiSpan> = spans.iter().filter(|s| s.valid).collect();
    let count = valid.len();
    if policy == RedactPolicy::DropDoc || count == 0 {
        return Ok(Redaction { text: text.to_string(), count, drop_doc: count > 0 && policy == RedactPolicy::DropDoc });
    }
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for s in valid {
        out.push_str(&text[last..s.start]);
        out.push_str(&s.kind.mask());
        last = s.end;
    }
    out.push_str(&text[last..]);
    Ok(Redaction { text: out, count, drop_doc: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// ISO 7064 MOD 11-2, computed the textbook way: an ID is valid iff
    /// sum(a_i * 2^(18-i)) over all 18 positions is 1 mod 11, with X = 10.
    fn iso7064_valid(id: &[u8]) -> bool {
        let mut sum = 0u64;
        for (i, &c) in id.iter().enumerate() {
            let v = if c == b'X' { 10 } else { (c - b'0') as u64 };
            sum += v * (1u64 << (17 - i)) % 11;
        }
        sum % 11 == 1
    }

    fn oracle_check_char(prefix: &[u8]) -> u8 {
        for c in b"0123456789X" {
            let mut id = prefix.to_vec();
            id.push(*c);
            if iso7064_valid(&id) {
                return *c;
            }
        }
        unreachable!()
    }

    const PREFIX: &[u8] = b"11010519491231002";

    #[test]
    fn check_char_matches_oracle() {
        assert_eq!(national_id_check_char(PREFIX), Some(oracle_check_char(PREFIX)));
        assert_eq!(oracle_check_char(PREFIX), b'X');
    }

    #[test]
    fn valid_id_detected_and_masked() {
        let text = "id: 11010519491231002X ok";
        let spans = detect_pii(text);
        assert_eq!(spans, vec![PiiSpan { end: 22, kind: PiiKind::NationalId, start: 4, valid: true }]);
        let r = redact(text, &spans, RedactPolicy::Mask).unwrap();
        assert_eq!(r.text, "id: [PII:national_id] ok");
        assert_eq!(r.count, 1);
    }

    #[test]
    fn perturbed_id_is_candidate_only() {
        let text = "id: 110105194912310021 ok";
        let spans = detect_pii(text);
        assert_eq!(spans.len(), 1);
        assert!(!spans[0].valid);
        let r = redact(text, &spans, RedactPolicy::Mask).unwrap();
        assert_eq!(r.text, text);
        assert_eq!(r.count, 0);
    }

    #[test]
    fn no_match_cases() {
        assert!(detect_pii("12345678901234567").is_empty());
        // Impossible date (month 13).
        assert!(detect_pii("110105194913310021").is_empty());
        // Phone embedded in a longer run.
        assert!(detect_pii("913800138000").is_empty());
        assert!(detect_pii("12800138000").is_empty());
    }

    #[test]
    fn phone_masked() {
        let text = "call 13800138000 now";
        let spans = detect_pii(text);
        assert_eq!(spans, vec![PiiSpan { end: 16, kind: PiiKind::Phone, start: 5, valid: true }]);
        let r = redact(text, &spans, RedactPolicy::Mask).unwrap();
        assert_eq!(r.text, "call [PII:phone] now");
        let d = redact(text, &spans, RedactPolicy::DropDoc).unwrap();
        assert!(d.drop_doc);
        assert_eq!(d.text, text);
    }

    #[test]
    fn overlap_rejected() {
        let a = PiiSpan { end: 5, kind: PiiKind::Phone, start: 0, valid: true };
        let b = PiiSpan { end: 8, kind: PiiKind::Phone, start: 4, valid: true };
        assert!(matches!(redact("0123456789", &[a, b], RedactPolicy::Mask), Err(RedactError::Overlap(..))));
    }

    #[test]
    fn leap_days() {
        assert!(valid_birth_date(b"20000229"));
        assert!(!valid_birth_date(b"19000229"));
        assert!(!valid_birth_date(b"20230431"));
    }

    fn id_with_date() -> impl Strategy<Value = Vec<u8>> {
        (0u32..1_000_000, 1900u32..2030, 1u32..=12, 1u32..=28, 0u32..1000).prop_map(|(area, y, m, d, seq)| {
            format!("{area:06}{y:04}{m:02}{d:02}{seq:03}").into_bytes()
        })
    }

    proptest! {
        #[test]
        fn exactly_one_accepted_check_char(prefix in id_with_date()) {
            let accepted: Vec<u8> = b"0123456789X".iter().copied().filter(|&c| {
                let mut id = prefix.clone();
                id.push(c);
                let text = String::from_utf8(id).unwrap();
                detect_pii(&text).first().is_some_and(|s| s.valid)
            }).collect();
            prop_assert_eq!(accepted.len(), 1);
            prop_assert_eq!(accepted[0], oracle_check_char(&prefix));
        }

        #[test]
        fn single_digit_perturbation_invalidates(prefix in id_with_date(), pos in 0usize..17, delta in 1u8..10) {
            let mut id = prefix.clone();
            id.push(national_id_check_char(&prefix).unwrap());
            id[pos] = b'0' + (id[pos] - b'0' + delta) % 10;
            let text = String::from_utf8(id).unwrap();
            let spans = detect_pii(&text);
            prop_assert!(spans.iter().all(|s| !s.valid));
        }

        #[test]
        fn prefix_shifts_spans(body in "[a-z0-9 ]{0,40}(13800138000|11010519491231002X)?[a-z0-9 ]{0,40}", pre in "[a-z ]{0,12}") {
            let base = detect_pii(&body);
            let shifted = detect_pii(&format!("{pre}{body}"));
            prop_assert_eq!(base.len(), shifted.len());
            for (a, b) in base.iter().zip(&shifted) {
                prop_assert_eq!(a.start + pre.len(), b.start);
                prop_assert_eq!(a.end + pre.len(), b.end);
            }
        }

        #[test]
        fn spans_sorted_and_disjoint(text in "[0-9Xx ]{0,200}") {
            let spans = detect_pii(&text);
            for w in spans.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
        }

        #[test]
        fn mask_idempotent(parts in proptest::collection::vec(prop_oneof![
            Just("13800138000".to_string()),
            Just("11010519491231002X".to_string()),
            "[a-z ]{1,10}",
            "[0-9]{1,20}",
        ], 0..12)) {
            let text = parts.join(" ");
            let once = redact(&text, &detect_pii(&text), RedactPolicy::Mask).unwrap().text;
            let twice = redact(&once, &detect_pii(&once), RedactPolicy::Mask).unwrap();
            prop_assert_eq!(&twice.text, &once);
            prop_assert_eq!(twice.count, 0);
        }
    }
}
