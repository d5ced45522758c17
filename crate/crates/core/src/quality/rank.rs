use std::collections::BTreeMap;

use super::QualityError;

/// Tie-averaged rank of each score (1-based) divided by the number of
/// scores. Values land in (0, 1].
pub fn percentile_ranks(scores: &[f64]) -> Vec<f64> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && scores[order[j]].total_cmp(&scores[order[i]]).is_eq() {
            j += 1;
        }
        // Ranks i+1 ..= j share their mean.
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            out[k] = mean_rank / n as f64;
        }
        i = j;
    }
    out
}

/// Converts each classifier's raw scores into corpus percentiles.
/// `raw[d]` holds document `d`'s score per classifier name; every document
/// must carry every name in `classifiers`.
pub fn normalize_to_percentiles(
    raw: &[BTreeMap<String, f64>],
    classifiers: &[String],
) -> Result<Vec<BTreeMap<String, f64>>, QualityError> {
    let mut out = vec![BTreeMap::new(); raw.len()];
    for name in classifiers {
        let mut column = Vec::with_capacity(raw.len());
        for (doc, scores) in raw.iter().enumerate() {
            match scores.get(name) {
                Some(&s) if s.is_finite() => column.push(s),
                Some(_) => return Err(QualityError::NonFiniteScore { doc, classifier: name.clone() }),
                None => return Err(QualityError::MissingScore { doc, classifier: name.clone() }),
            }
        }
        for (slot, p) in out.iter_mut().zip(percentile_ranks(&column)) {
            slot.insert(name.clone(), p);
        }
    }
    Ok(out)
}

pub fn aggregate_final_score(percentiles: &BTreeMap<String, f64>) -> Result<f64, QualityError> {
    percentiles
        .values()
        .copied()
        .reduce(f64::max)
        .ok_or(QualityError::NoClassifiers)
}

/// Equal-frequency bucket per document: sort by `(score, id)` and give the
/// doc at sorted position `i` bucket `floor(i * k / n)`.
pub fn assign_buckets<S: AsRef<str>>(scores: &[(S, f64)], k: u32) -> Result<Vec<u32>, QualityError> {
    if k == 0 {
        return Err(QualityError::ZeroBins);
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[a].1.total_cmp(&scores[b].1).then_with(|| scores[a].0.as_ref().cmp(scores[b].0.as_ref()))
    });
    let mut out = vec![0u32; n];
    for (pos, &doc) in order.iter().enumerate() {
        out[doc] = (pos as u128 * k as u128 / n as u128) as u32;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn row(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(percentile_ranks(&[3.0]), vec![1.0]);
        assert_eq!(percentile_ranks(&[0.9, 0.1]), vec![1.0, 0.5]);
        assert_eq!(percentile_ranks(&[2.0; 4]), vec![0.625; 4]);
        assert_eq!(percentile_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![0.25, 0.625, 0.625, 1.0]);
    }

    #[test]
    fn missing_score_is_an_error() {
        let raw = vec![row(&[("a", 0.1)]), row(&[("b", 0.2)])];
        assert_eq!(
            normalize_to_percentiles(&raw, &names(&["a"])),
            Err(QualityError::MissingScore { doc: 1, classifier: "a".into() })
        );
    }

    #[test]
    fn max_aggregation() {
        assert_eq!(aggregate_final_score(&row(&[("a", 0.2), ("b", 0.9), ("c", 0.4)])).unwrap(), 0.9);
        assert_eq!(aggregate_final_score(&row(&[("a", 0.3)])).unwrap(), 0.3);
        assert!(aggregate_final_score(&BTreeMap::new()).is_err());
    }

    #[test]
    fn bucket_examples() {
        let scores: Vec<(String, f64)> = (0..2000).map(|i| (format!("d{i}"), (i * 7919 % 2000) as f64)).collect();
        let b = assign_buckets(&scores, 20).unwrap();
        let mut counts = [0; 20];
        for x in b {
            counts[x as usize] += 1;
        }
        assert_eq!(counts, [100; 20]);

        let ties: Vec<(String, f64)> = (0..20).rev().map(|i| (format!("id{i:02}"), 0.5)).collect();
        let b = assign_buckets(&ties, 20).unwrap();
        assert_eq!(b, (0..20).rev().collect::<Vec<u32>>());

        assert_eq!(assign_buckets(&[("x", 0.1)], 20).unwrap(), vec![0]);
        assert_eq!(assign_buckets::<&str>(&[], 20).unwrap(), Vec::<u32>::new());
    }

    proptest! {
        #[test]
        fn bucket_sizes_differ_by_at_most_one(scores in proptest::collection::vec(0.0f64..1.0, 1..300), k in 1u32..40) {
            let docs: Vec<(String, f64)> = scores.iter().enumerate().map(|(i, &s)| (format!("{i:04}"), s)).collect();
            let b = assign_buckets(&docs, k).unwrap();
            let mut counts = vec![0usize; k as usize];
            for x in b { counts[x as usize] += 1; }
            let used: Vec<usize> = if docs.len() >= k as usize { counts.clone() } else { counts.iter().copied().filter(|&c| c > 0).collect() };
            prop_assert!(used.iter().max().unwrap() - used.iter().min().unwrap() <= 1);
        }

        #[test]
        fn buckets_rank_invariant(scores in proptest::collection::vec(-5.0f64..5.0, 1..200)) {
            let docs: Vec<(String, f64)> = scores.iter().enumerate().map(|(i, &s)| (format!("{i:04}"), s)).collect();
            let moved: Vec<(String, f64)> = docs.iter().map(|(id, s)| (id.clone(), (s * 3.0).exp() + 1.0)).collect();
            prop_assert_eq!(assign_buckets(&docs, 20).unwrap(), assign_buckets(&moved, 20).unwrap());
        }

        #[test]
        fn final_score_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, bump in 0.0f64..1.0) {
            let before = aggregate_final_score(&row(&[("x", a), ("y", b)])).unwrap();
            let after = aggregate_final_score(&row(&[("x", (a + bump).min(1.0)), ("y", b)])).unwrap();
            prop_assert!(after >= before);
        }

        #[test]
        fn percentiles_in_unit_interval(scores in proptest::collection::vec(-1e6f64..1e6, 1..200)) {
            for p in percentile_ranks(&scores) {
                prop_assert!(p > 0.0 && p <= 1.0);
            }
        }
    }
}
