//! Linear-time suffix array construction (SA-IS).
//!
//! Offsets are `u32`, which caps a shard at `u32::MAX - 1` bytes.

const EMPTY: u32 = u32::MAX;
const NAIVE_THRESHOLD: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SuffixArrayError {
    #[error("corpus of {bytes} bytes exceeds the suffix-array budget of {budget} bytes")]
    OverBudget { bytes: usize, budget: usize },
}

/// Largest input [`build_suffix_array`] accepts.
pub const MAX_SUFFIX_ARRAY_BYTES: usize = (u32::MAX - 1) as usize;

trait Symbol: Copy + Ord {
    fn rank(self) -> usize;
}

impl Symbol for u8 {
    fn rank(self) -> usize {
        self as usize
    }
}

impl Symbol for u32 {
    fn rank(self) -> usize {
        self as usize
    }
}

/// Sorted suffix start offsets of `text`.
pub fn build_suffix_array(text: &[u8]) -> Result<Vec<u32>, SuffixArrayError> {
    build_suffix_array_with_budget(text, MAX_SUFFIX_ARRAY_BYTES)
}

pub fn build_suffix_array_with_budget(text: &[u8], budget: usize) -> Result<Vec<u32>, SuffixArrayError> {
    let budget = budget.min(MAX_SUFFIX_ARRAY_BYTES);
    if text.len() > budget {
        return Err(SuffixArrayError::OverBudget { bytes: text.len(), budget });
    }
    Ok(sa_is(text, 255))
}

fn sa_naive<T: Symbol>(s: &[T]) -> Vec<u32> {
    let mut sa: Vec<u32> = (0..s.len() as u32).collect();
    sa.sort_by(|&a, &b| s[a as usize..].cmp(&s[b as usize..]));
    sa
}

struct Buckets {
    /// Start of each symbol's S-region.
    sum_s: Vec<u32>,
    /// Start of each symbol's bucket.
    sum_l: Vec<u32>,
}

fn induce<T: Symbol>(s: &[T], ls: &[bool], b: &Buckets, lms: &[u32], sa: &mut [u32]) {
    let n = s.len();
    sa.fill(EMPTY);
    let mut buf = b.sum_s.clone();
    for &d in lms {
        if d as usize == n {
            continue;
        }
        let c = s[d as usize].rank();
        sa[buf[c] as usize] = d;
        buf[c] += 1;
    }
    buf.copy_from_slice(&b.sum_l);
    let c = s[n - 1].rank();
    sa[buf[c] as usize] = (n - 1) as u32;
    buf[c] += 1;
    for i in 0..n {
        let v = sa[i];
        if v != EMPTY && v >= 1 && !ls[v as usize - 1] {
            let c = s[v as usize - 1].rank();
            sa[buf[c] as usize] = v - 1;
            buf[c] += 1;
        }
    }
    buf.copy_from_slice(&b.sum_l);
    for i in (0..n).rev() {
        let v = sa[i];
        if v != EMPTY && v >= 1 && ls[v as usize - 1] {
            let c = s[v as usize - 1].rank() + 1;
            buf[c] -= 1;
            sa[buf[c] as usize] = v - 1;
        }
    }
}

/// `upper` is the largest symbol rank that may occur.
fn sa_is<T: Symbol>(s: &[T], upper: usize) -> Vec<u32> {
    let n = s.len();
    match n {
        0 => return Vec::new(),
        1 => return vec![0],
        2 => return if s[0] < s[1] { vec![0, 1] } else { vec![1, 0] },
        _ if n < NAIVE_THRESHOLD => return sa_naive(s),
        _ => {}
    }

    // ls[i]: suffix i is S-type (smaller than suffix i + 1).
    let mut ls = vec![false; n];
    for i in (0..n - 1).rev() {
        ls[i] = if s[i] == s[i + 1] { ls[i + 1] } else { s[i] < s[i + 1] };
    }
    let mut sum_l = vec![0u32; upper + 2];
    let mut sum_s = vec![0u32; upper + 2];
    for i in 0..n {
        if !ls[i] {
            sum_s[s[i].rank()] += 1;
        } else {
            sum_l[s[i].rank() + 1] += 1;
        }
    }
    for i in 0..=upper {
        sum_s[i] += sum_l[i];
        if i < upper {
            sum_l[i + 1] += sum_s[i];
        }
    }
    let buckets = Buckets { sum_s, sum_l };

    let is_lms = |i: usize| i >= 1 && !ls[i - 1] && ls[i];
    let mut lms_map = vec![EMPTY; n + 1];
    let mut lms = Vec::new();
    for i in 1..n {
        if is_lms(i) {
            lms_map[i] = lms.len() as u32;
            lms.push(i as u32);
        }
    }
    let m = lms.len();

    let mut sa = vec![EMPTY; n];
    induce(s, &ls, &buckets, &lms, &mut sa);

    if m > 0 {
        let mut sorted_lms: Vec<u32> = sa.iter().copied().filter(|&v| lms_map[v as usize] != EMPTY).collect();
        let mut rec_s = vec![0u32; m];
        let mut rec_upper = 0u32;
        rec_s[lms_map[sorted_lms[0] as usize] as usize] = 0;
        for i in 1..m {
            let (mut l, mut r) = (sorted_lms[i - 1] as usize, sorted_lms[i] as usize);
            let next = |x: usize| {
                let k = lms_map[x] as usize + 1;
                if k < m { lms[k] as usize } else { n }
            };
            let (end_l, end_r) = (next(l), next(r));
            let mut same = true;
            if end_l - l != end_r - r {
                same = false;
            } else {
                while l < end_l {
                    if s[l] != s[r] {
                        break;
                    }
                    l += 1;
                    r += 1;
                }
                if l == n || s[l] != s[r] {
                    same = false;
                }
            }
            if !same {
                rec_upper += 1;
            }
            rec_s[lms_map[sorted_lms[i] as usize] as usize] = rec_upper;
        }

        let rec_sa = sa_is(&rec_s, rec_upper as usize);
        for (slot, &r) in sorted_lms.iter_mut().zip(&rec_sa) {
            *slot = lms[r as usize];
        }
        induce(s, &ls, &buckets, &sorted_lms, &mut sa);
    }
    sa
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn banana() {
        // Suffixes sorted by hand: a, ana, anana, banana, na, nana.
        assert_eq!(build_suffix_array(b"banana").unwrap(), vec![5, 3, 1, 0, 4, 2]);
    }

    #[test]
    fn empty_input() {
        assert!(build_suffix_array(b"").unwrap().is_empty());
    }

    #[test]
    fn budget_enforced() {
        assert!(matches!(
            build_suffix_array_with_budget(b"abcdef", 3),
            Err(SuffixArrayError::OverBudget { bytes: 6, budget: 3 })
        ));
    }

    fn assert_sorted(text: &[u8], sa: &[u32]) {
        assert_eq!(sa.len(), text.len());
        let mut seen = vec![false; text.len()];
        for &i in sa {
            assert!(!seen[i as usize]);
            seen[i as usize] = true;
        }
        for w in sa.windows(2) {
            assert!(text[w[0] as usize..] < text[w[1] as usize..]);
        }
    }

    #[test]
    fn random_megabyte_sorted_pairwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut text: Vec<u8> = (0..1 << 20).map(|_| rng.gen_range(b'a'..=b'd')).collect();
        // Long repeats and separator bytes stress the LMS renaming.
        let chunk = text[1000..5000].to_vec();
        text[500_000..504_000].copy_from_slice(&chunk);
        text[700_000] = 0xff;
        text[700_001] = 0xff;
        let sa = build_suffix_array(&text).unwrap();
        assert_sorted(&text, &sa);
    }

    #[test]
    fn periodic_input() {
        let text = b"abababababababababababababababab".repeat(40);
        assert_sorted(&text, &build_suffix_array(&text).unwrap());
        let text = vec![b'z'; 5000];
        assert_sorted(&text, &build_suffix_array(&text).unwrap());
    }

    proptest! {
        #[test]
        fn matches_naive_sort(text in proptest::collection::vec(0u8..4, 0..300)) {
            prop_assert_eq!(build_suffix_array(&text).unwrap(), sa_naive(&text));
        }
    }
}
