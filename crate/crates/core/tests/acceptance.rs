//! Acceptance checks. Each criterion prints one PASS/FAIL line; the binary
//! exits non-zero if any fails.

mod common;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use corpusforge_core::cot::{segment_text, validate_segments, ChatModel, CotRecord, CotReject, LlmError, LlmRequest, LlmResponse, Usage};
use corpusforge_core::dedup::{exact_dedup, lsh_candidates, shingle_hashes, ExactDedupParams, MinHashParams, MinHasher};
use corpusforge_core::fluency::{compute_domain_thresholds, filter_by_loss};
use corpusforge_core::quality::{annotate_corpus, assign_buckets, build_training_set, train_linear_classifier, accuracy, TrainHyper, TrainingSetSpec};
use corpusforge_core::runner::{validate_config, RunOptions, COT_RECORDS_FILE, COT_REJECTS_FILE, DATA_FILE, DEFAULT_CONFIG, DROPPED_FILE, MANIFEST_FILE};
use corpusforge_core::safety::{detect_pii, redact, RedactPolicy};
use corpusforge_core::{run_pipeline, DocumentRecord, RunManifest};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn words_until(rng: &mut ChaCha8Rng, vocab: &[String], bytes: usize) -> String {
    let mut s = String::with_capacity(bytes + 16);
    while s.len() < bytes {
        if !s.is_empty() {
            s.push(' ');
        }
        s.push_str(&vocab[rng.gen_range(0..vocab.len())]);
    }
    s
}

fn words_in(rng: &mut ChaCha8Rng, vocab: &[String], bytes: std::ops::Range<usize>) -> String {
    let target = rng.gen_range(bytes);
    words_until(rng, vocab, target)
}

fn longest_common_substring(a: &[u8], b: &[u8]) -> usize {
    let mut prev = vec![0u32; b.len() + 1];
    let mut cur = vec![0u32; b.len() + 1];
    let mut best = 0;
    for &x in a {
        for j in 1..=b.len() {
            cur[j] = if x == b[j - 1] { prev[j - 1] + 1 } else { 0 };
            best = best.max(cur[j]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best as usize
}

/// Doc pairs sharing any `window`-byte substring, found by comparing every
/// window of every doc.
fn shared_windows(docs: &[&[u8]], window: usize) -> Vec<(usize, usize)> {
    let mut first: HashMap<&[u8], usize> = HashMap::new();
    let mut pairs = HashSet::new();
    for (d, text) in docs.iter().enumerate() {
        if text.len() < window {
            continue;
        }
        for w in text.windows(window) {
            match first.get(w) {
                Some(&o) if o != d => {
                    pairs.insert((o, d));
                }
                Some(_) => {}
                None => {
                    first.insert(w, d);
                }
            }
        }
    }
    let mut v: Vec<_> = pairs.into_iter().collect();
    v.sort();
    v
}

fn criterion_1() -> Check {
    let mut rng = common::rng(101);
    let vocab = common::vocabulary(&mut rng, 3000);
    let n_docs = 200;
    let long: Vec<String> = (0..20).map(|_| words_in(&mut rng, &vocab, 900..1490)).collect();
    let short: Vec<String> = (0..20).map(|_| words_in(&mut rng, &vocab, 400..690)).collect();
    ensure(long.iter().all(|s| (900..=1500).contains(&s.len())), || "long span length out of range".into())?;
    ensure(short.iter().all(|s| (400..=700).contains(&s.len())), || "short span length out of range".into())?;

    let mut planted: Vec<Vec<(bool, usize)>> = vec![Vec::new(); n_docs];
    let mut short_hosts: Vec<Vec<usize>> = Vec::new();
    let mut long_hosts: Vec<Vec<usize>> = Vec::new();
    let ids: Vec<usize> = (0..n_docs).collect();
    for (is_long, count) in [(true, long.len()), (false, short.len())] {
        for s in 0..count {
            let k = rng.gen_range(2..=4);
            let hosts: Vec<usize> = ids.choose_multiple(&mut rng, k).copied().collect();
            for &h in &hosts {
                planted[h].push((is_long, s));
            }
            if is_long { long_hosts.push(hosts) } else { short_hosts.push(hosts) }
        }
    }
    let docs: Vec<DocumentRecord> = planted
        .iter_mut()
        .enumerate()
        .map(|(i, spans)| {
            spans.shuffle(&mut rng);
            let mut text = words_in(&mut rng, &vocab, 600..1200);
            for &(is_long, s) in spans.iter() {
                text.push('\n');
                text.push_str(if is_long { &long[s] } else { &short[s] });
                text.push('\n');
                text.push_str(&words_in(&mut rng, &vocab, 300..600));
            }
            DocumentRecord::new(format!("d{i:03}"), text)
        })
        .collect();
    ensure(docs.iter().all(|d| corpusforge_core::text::count_tokens(&d.text) >= 35), || "doc under 35 tokens".into())?;

    let params = ExactDedupParams { length_threshold_bytes: 800, min_doc_words: 35, ..Default::default() };
    let out = exact_dedup(docs.clone(), &params).map_err(|e| e.to_string())?;
    let texts: Vec<&[u8]> = out.docs.iter().map(|d| d.text.as_bytes()).collect();
    let leaks = shared_windows(&texts, 800);
    ensure(leaks.is_empty(), || format!("{} output pairs still share an 800-byte substring", leaks.len()))?;

    // Exhaustive LCS on every pair that originally shared a planted span.
    let by_id: HashMap<&str, &DocumentRecord> = out.docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut lcs_pairs = BTreeMap::new();
    for hosts in long_hosts.iter().chain(&short_hosts) {
        for (a, &x) in hosts.iter().enumerate() {
            for &y in &hosts[a + 1..] {
                lcs_pairs.insert((x.min(y), x.max(y)), ());
            }
        }
    }
    let mut max_lcs = 0;
    for &(x, y) in lcs_pairs.keys() {
        let (Some(a), Some(b)) = (by_id.get(format!("d{x:03}").as_str()), by_id.get(format!("d{y:03}").as_str())) else {
            continue;
        };
        max_lcs = max_lcs.max(longest_common_substring(a.text.as_bytes(), b.text.as_bytes()));
    }
    ensure(max_lcs < 800, || format!("LCS oracle found a {max_lcs}-byte repeat"))?;

    for (s, hosts) in short_hosts.iter().enumerate() {
        for &h in hosts {
            let doc = by_id.get(format!("d{h:03}").as_str()).ok_or_else(|| format!("doc d{h:03} was dropped"))?;
            ensure(doc.text.contains(&short[s]), || format!("short span {s} damaged in d{h:03}"))?;
        }
    }
    for (s, hosts) in long_hosts.iter().enumerate() {
        let survivors = out.docs.iter().filter(|d| d.text.contains(&long[s])).count();
        ensure(survivors == 1, || format!("long span {s} survives in {survivors} docs (planted in {})", hosts.len()))?;
    }

    // Throughput on a 50 MiB corpus.
    let mut big = Vec::new();
    let mut bytes = 0usize;
    let shared: Vec<String> = (0..500).map(|_| words_until(&mut rng, &vocab, 1200)).collect();
    let mut i = 0;
    while bytes < 50 << 20 {
        let mut text = words_until(&mut rng, &vocab, 3500);
        if i % 5 == 0 {
            text.push('\n');
            text.push_str(&shared[rng.gen_range(0..shared.len())]);
        }
        bytes += text.len();
        big.push(DocumentRecord::new(format!("b{i:06}"), text));
        i += 1;
    }
    let start = Instant::now();
    let big_out = exact_dedup(big, &params).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("50 MiB took {secs:.1} s"))?;
    ensure(big_out.report.bytes_removed > 0, || "50 MiB run removed nothing".into())?;
    Ok(format!(
        "{} ranges removed, max pair LCS {max_lcs} B over {} pairs, 20/20 short spans intact, 50 MiB in {secs:.1} s",
        out.removed.len(),
        lcs_pairs.len()
    ))
}

/// Two texts of unique tokens whose shingle sets have Jaccard exactly
/// `shared / (2 * total - shared)`.
fn jaccard_pair(next: &mut usize, shared: usize, total: usize, width: usize) -> (String, String) {
    let mut tok = || {
        *next += 1;
        format!("t{}", *next)
    };
    let common: Vec<String> = (0..shared + width - 1).map(|_| tok()).collect();
    let a_tail: Vec<String> = (0..total - shared).map(|_| tok()).collect();
    let b_tail: Vec<String> = (0..total - shared).map(|_| tok()).collect();
    let a = common.iter().chain(&a_tail).cloned().collect::<Vec<_>>().join(" ");
    let b = common.iter().chain(&b_tail).cloned().collect::<Vec<_>>().join(" ");
    (a, b)
}

fn brute_jaccard(a: &str, b: &str, width: usize) -> f64 {
    let (x, y) = (shingle_hashes(a, width), shingle_hashes(b, width));
    x.intersection(&y).count() as f64 / x.union(&y).count() as f64
}

fn criterion_2() -> Check {
    let params = MinHashParams::default();
    let hasher = MinHasher::new(params);
    let w = params.shingle_width;
    let mut next = 0usize;
    let mut worst = (0.0, 0.0, 0.0);
    let mut pairs = 0;
    for k in 1..=9usize {
        let target = k as f64 / 10.0;
        let mut err_sum = 0.0;
        let per_band = 112;
        for _ in 0..per_band {
            // shared = 20k, total = 10(10 + k) gives J = k / 10 exactly.
            let (a, b) = jaccard_pair(&mut next, 20 * k, 10 * (10 + k), w);
            let j = brute_jaccard(&a, &b, w);
            ensure((j - target).abs() < 1e-12, || format!("constructed J {j} != {target}"))?;
            let est = hasher.signature("a", &a).estimate_jaccard(&hasher.signature("b", &b));
            err_sum += (est - j).abs();
            pairs += 1;
        }
        let mae = err_sum / per_band as f64;
        let bound = 2.0 * (target * (1.0 - target) / 128.0).sqrt();
        ensure(mae <= bound, || format!("J={target}: mean abs error {mae:.4} > {bound:.4}"))?;
        if mae / bound > worst.2 {
            worst = (target, mae, mae / bound);
        }
    }

    let mut hits = 0;
    let mut total = 0;
    let (mut hits_at_08, mut total_at_08) = (0, 0);
    for step in 0..=15usize {
        let target = 0.80 + step as f64 / 100.0;
        let shared = 200usize;
        let size = (shared as f64 * (1.0 + target) / (2.0 * target) + 1e-9).floor() as usize;
        for _ in 0..50 {
            let (a, b) = jaccard_pair(&mut next, shared, size, w);
            let j = brute_jaccard(&a, &b, w);
            ensure(j >= 0.8 - 1e-12, || format!("recall pair has J {j}"))?;
            let sigs = [hasher.signature("a", &a), hasher.signature("b", &b)];
            let found = lsh_candidates(&sigs, &params).map_err(|e| e.to_string())?.contains(&(0, 1));
            hits += found as usize;
            total += 1;
            if step == 0 {
                hits_at_08 += found as usize;
                total_at_08 += 1;
            }
        }
    }
    let recall = hits as f64 / total as f64;
    ensure(recall >= 0.95, || format!("LSH recall {recall:.3} over {total} pairs with J in [0.80, 0.95]"))?;
    Ok(format!(
        "{pairs} pairs, worst band J={} MAE {:.4} ({:.0}% of bound); LSH recall {recall:.3} over {total} pairs with J in [0.80, 0.95] (at J=0.80 alone: {hits_at_08}/{total_at_08})",
        worst.0,
        worst.1,
        worst.2 * 100.0
    ))
}

fn criterion_3() -> Check {
    let mut rng = common::rng(303);
    let mut docs = Vec::new();
    for d in 0..26u8 {
        let domain = format!("dom_{}", (b'a' + d) as char);
        let mut losses: Vec<f64> = (0..10_000).map(|i| 1.0 + i as f64 * 1e-3 + d as f64).collect();
        losses.shuffle(&mut rng);
        docs.extend(losses.into_iter().enumerate().map(|(i, l)| DocumentRecord::new(format!("{domain}-{i}"), "").with_domain(&domain).with_loss(l)));
    }
    for (domain, n) in [("tiny", 150usize), ("edge", 199)] {
        docs.extend((0..n).map(|i| DocumentRecord::new(format!("{domain}-{i}"), "").with_domain(domain).with_loss(i as f64 * 100.0)));
    }
    // Integer nearest rank: ceil(995 n / 1000).
    let oracle_rank = |n: usize| (995 * n).div_ceil(1000);
    let profiles = compute_domain_thresholds(&docs, 0.995, 200).map_err(|e| e.to_string())?;
    let out = filter_by_loss(docs, &profiles).map_err(|e| e.to_string())?;
    let mut removed: BTreeMap<String, usize> = BTreeMap::new();
    for d in &out.dropped {
        *removed.entry(d.domain.clone().unwrap()).or_default() += 1;
    }
    for d in 0..26u8 {
        let domain = format!("dom_{}", (b'a' + d) as char);
        let got = removed.get(&domain).copied().unwrap_or(0);
        let want = 10_000 - oracle_rank(10_000);
        ensure(got == want && want == 50, || format!("{domain}: removed {got}, oracle {want}"))?;
    }
    ensure(!removed.contains_key("tiny") && !removed.contains_key("edge"), || "small domain was filtered".into())?;
    ensure(out.dropped.len() == 1300, || format!("total removed {}", out.dropped.len()))?;
    Ok("26 domains x 50 removed = 1300; domains of 150 and 199 docs untouched".into())
}

fn bucket_sizes(buckets: &[u32], k: u32) -> (usize, usize) {
    let mut counts = vec![0usize; k as usize];
    for &b in buckets {
        counts[b as usize] += 1;
    }
    (*counts.iter().min().unwrap(), *counts.iter().max().unwrap())
}

fn criterion_4() -> Check {
    let mut rng = common::rng(404);
    let mut sizes: Vec<usize> = (1..=100).collect();
    sizes.extend((0..40).map(|_| rng.gen_range(101..100_000)));
    sizes.extend([1000, 99_999, 100_000]);
    let transforms: [(&str, fn(f64) -> f64); 5] = [
        ("affine", |x| 3.0 * x - 7.0),
        ("cube", |x| x * x * x),
        ("exp", f64::exp),
        ("log", f64::ln),
        ("neg-reciprocal", |x| -1.0 / x),
    ];
    let names: Vec<String> = ["c1", "c2", "c3"].iter().map(|s| s.to_string()).collect();
    for &n in &sizes {
        let ids: Vec<String> = (0..n).map(|i| format!("doc{i:06}")).collect();
        let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let raw: Vec<BTreeMap<String, f64>> = (0..n)
            .map(|_| {
                // Coarse scores force ties so the id tiebreak is exercised.
                names.iter().map(|c| (c.clone(), (rng.gen::<f64>() * 50.0).floor())).collect()
            })
            .collect();
        let ann = annotate_corpus(&id_refs, raw, &names, None).map_err(|e| e.to_string())?;
        let scores: Vec<f64> = ann.iter().map(|a| a.final_score).collect();
        let keyed: Vec<(&str, f64)> = id_refs.iter().copied().zip(scores.iter().copied()).collect();
        let base = assign_buckets(&keyed, 20).map_err(|e| e.to_string())?;
        let (lo, hi) = bucket_sizes(&base, 20);
        ensure(hi - lo <= 1, || format!("n={n}: bucket sizes range {lo}..{hi}"))?;
        for (name, f) in transforms {
            let moved: Vec<(&str, f64)> = keyed.iter().map(|&(id, s)| (id, f(s))).collect();
            let again = assign_buckets(&moved, 20).map_err(|e| e.to_string())?;
            ensure(again == base, || format!("n={n}: {name} transform changed buckets"))?;
        }
    }
    Ok(format!("{} corpus sizes from 1 to 100000, 5 monotone transforms each", sizes.len()))
}

fn criterion_5() -> Check {
    let mut rng = common::rng(505);
    let vocab = common::vocabulary(&mut rng, 1200);
    let (good, bad) = vocab.split_at(600);
    let make = |rng: &mut ChaCha8Rng, pool: &[String], prefix: &str, n: usize| -> Vec<DocumentRecord> {
        (0..n)
            .map(|i| {
                let len = rng.gen_range(20..80);
                DocumentRecord::new(format!("{prefix}{i:05}"), common::sentence(rng, pool, len))
            })
            .collect()
    };
    let positive = make(&mut rng, good, "p", 1100);
    let negative = make(&mut rng, bad, "n", 1100);
    let split = build_training_set(&TrainingSetSpec::new(positive, negative), 7).map_err(|e| e.to_string())?;
    ensure(split.train.len() == 2000 && split.test.len() == 200, || format!("split {}/{}", split.train.len(), split.test.len()))?;
    let hyper = TrainHyper { epochs: 5, hash_dim: 1 << 18, ..Default::default() };
    let a = train_linear_classifier(&split.train, &hyper, 11).map_err(|e| e.to_string())?;
    let b = train_linear_classifier(&split.train, &hyper, 11).map_err(|e| e.to_string())?;
    ensure(a.to_bytes() == b.to_bytes(), || "retraining with the same seed changed the model".into())?;
    let acc = accuracy(&a, &split.test);
    ensure(acc >= 0.95, || format!("held-out accuracy {acc:.3}"))?;
    Ok(format!("held-out accuracy {acc:.3} after 5 epochs on 2000/200 split; models bit-identical"))
}

/// Line count and char total excluding newline separators, with a trailing
/// newline not opening a new line.
fn line_stats(text: &str) -> (usize, usize) {
    let newlines = text.chars().filter(|&c| c == '\n').count();
    let total = text.chars().count() - newlines;
    let lines = if text.is_empty() { 0 } else { newlines + 1 - text.ends_with('\n') as usize };
    (lines, total)
}

fn criterion_6() -> Check {
    let mut rng = common::rng(606);
    let vocab = common::vocabulary(&mut rng, 500);
    let terms = ["forbiddenword", "禁止词"];
    let cjk: Vec<char> = "的一是在不了有和人这中大为上个国我以要他时来用们生到作地于出就分对成会可也你".chars().collect();
    let mut docs = Vec::new();
    for i in 0..3000 {
        let lines = match i % 6 {
            0 => rng.gen_range(1..4),
            1 => rng.gen_range(300..700),
            _ => rng.gen_range(1..60),
        };
        let mut text = String::new();
        for l in 0..lines {
            let width = rng.gen_range(0..(if i % 4 == 0 { 14 } else { 70 }));
            let line: String = if rng.gen_bool(0.2) {
                (0..width).map(|_| cjk[rng.gen_range(0..cjk.len())]).collect()
            } else {
                let mut s = words_until(&mut rng, &vocab, width);
                s.truncate(width);
                s
            };
            if l > 0 {
                text.push('\n');
            }
            text.push_str(&line);
        }
        if i % 37 == 0 {
            text.push_str(&format!(" {}", terms[i % 2]));
        }
        if i % 101 == 0 {
            text = " \n\t ".into();
        }
        if rng.gen_bool(0.3) {
            text.push('\n');
        }
        docs.push(DocumentRecord::new(format!("pp{i:05}"), text).with_source("web"));
    }
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = tmp.path().join("in");
    common::write_corpus(&input, "docs.jsonl", &docs);
    fs::write(tmp.path().join("terms.txt"), terms.join("\n")).map_err(|e| e.to_string())?;
    let raw = serde_json::json!({"stages": [{"name": "preprocess", "params": {
        "sensitive_terms_file": tmp.path().join("terms.txt"),
        "strip_code_boilerplate": false
    }}]});
    let config = validate_config(&raw.to_string()).map_err(|e| e.to_string())?;
    let out = tmp.path().join("out");
    let outcome = run_pipeline(&config, &input, &out, &RunOptions { deterministic: true, ..Default::default() }).map_err(|e| e.to_string())?;
    ensure(outcome.manifest.succeeded(), || format!("{:?}", outcome.manifest.failure))?;

    let kept: Vec<DocumentRecord> = fs::read_to_string(out.join(DATA_FILE))
        .map_err(|e| e.to_string())?
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    for d in &kept {
        let (lines, total) = line_stats(&d.text);
        ensure((100..=20_000).contains(&total), || format!("kept {} has {total} chars", d.id))?;
        ensure(lines > 0 && total as f64 / lines as f64 >= 10.0, || format!("kept {} has mean line {}", d.id, total as f64 / lines as f64))?;
        ensure(!terms.iter().any(|t| d.text.contains(t)), || format!("kept {} has a sensitive term", d.id))?;
    }
    let dropped: Vec<serde_json::Value> = fs::read_to_string(out.join(DROPPED_FILE))
        .map_err(|e| e.to_string())?
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let originals: HashMap<&str, &DocumentRecord> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    for entry in &dropped {
        let id = entry["doc_id"].as_str().unwrap();
        let reason = entry["reason"].as_str().unwrap();
        let text = &originals[id].text;
        let (lines, total) = line_stats(text);
        let violated = match reason {
            "empty" => text.trim().is_empty(),
            "too_short" => total < 100,
            "too_long" => total > 20_000,
            "low_avg_line" => (total as f64 / lines as f64) < 10.0,
            "sensitive_term" => terms.iter().any(|t| text.contains(t)),
            _ => false,
        };
        ensure(violated, || format!("{id} dropped as {reason:?} without violating that rule"))?;
        *reasons.entry(reason.to_string()).or_default() += 1;
    }
    ensure(kept.len() + dropped.len() == docs.len(), || format!("{} kept + {} dropped != {}", kept.len(), dropped.len(), docs.len()))?;
    ensure(reasons.len() == 5, || format!("not every rule fired: {reasons:?}"))?;
    Ok(format!("{} kept within bounds, {} dropped with verified reasons {reasons:?}", kept.len(), dropped.len()))
}

/// ISO 7064 MOD 11-2 computed by Horner's rule, independent of any weight
/// table.
fn mod11_2_check(digits: &[u8]) -> u8 {
    let mut p = 0u32;
    for &d in digits {
        p = ((p + (d - b'0') as u32) * 2) % 11;
    }
    let c = (12 - p % 11) % 11;
    if c == 10 { b'X' } else { b'0' + c as u8 }
}

fn valid_id(rng: &mut ChaCha8Rng) -> String {
    let region = rng.gen_range(110_000..660_000);
    let year = rng.gen_range(1930..2020);
    let month = rng.gen_range(1..=12);
    let day = rng.gen_range(1..=28);
    let seq = rng.gen_range(0..1000);
    let body = format!("{region:06}{year:04}{month:02}{day:02}{seq:03}");
    let check = mod11_2_check(body.as_bytes()) as char;
    format!("{body}{check}")
}

fn redact_text(text: &str) -> Result<String, String> {
    let spans = detect_pii(text);
    redact(text, &spans, RedactPolicy::Mask).map(|r| r.text).map_err(|e| e.to_string())
}

fn criterion_7() -> Check {
    let mut rng = common::rng(707);
    let mut with_x = 0;
    for i in 0..1000 {
        let id = valid_id(&mut rng);
        with_x += id.ends_with('X') as usize;
        let text = format!("applicant {i} holds id {id}, see file.");
        let once = redact_text(&text)?;
        ensure(!once.contains(&id) && once.contains("[PII:national_id]"), || format!("valid id {id} not redacted: {once}"))?;
        ensure(redact_text(&once)? == once, || format!("redaction of {id} is not idempotent"))?;

        let mut bytes = id.clone().into_bytes();
        let pos = rng.gen_range(0..18);
        let original = bytes[pos];
        let replacement = loop {
            let c = b'0' + rng.gen_range(0..10);
            if c != original {
                break c;
            }
        };
        bytes[pos] = replacement;
        let perturbed = String::from_utf8(bytes).unwrap();
        let text = format!("applicant {i} holds id {perturbed}, see file.");
        let out = redact_text(&text)?;
        ensure(out == text, || format!("perturbed id {perturbed} (pos {pos}) was redacted"))?;
    }
    Ok(format!("1000 valid ids redacted ({with_x} ending in X), 1000 single-digit perturbations untouched, idempotent"))
}

/// Deterministic stand-in for a chat endpoint. Segments on blank lines and
/// derives every answer from its prompt.
struct MockModel {
    calls: AtomicUsize,
    by_kind: [AtomicUsize; 4],
}

fn between<'a>(s: &'a str, open: &str, close: &str) -> &'a str {
    let start = s.find(open).map_or(0, |i| i + open.len());
    let end = s.rfind(close).unwrap_or(s.len());
    &s[start..end.max(start)]
}

impl MockModel {
    fn new() -> Self {
        MockModel { calls: AtomicUsize::new(0), by_kind: Default::default() }
    }

    fn answer(&self, prompt: &str) -> String {
        if prompt.starts_with("Split the document") {
            self.by_kind[0].fetch_add(1, Ordering::SeqCst);
            let doc = between(prompt, "<<<\n", "\n>>>");
            if doc.contains("UNSPLITTABLE") {
                return "I would rather not.".into();
            }
            let anchors: Vec<serde_json::Value> = doc
                .split("\n\n")
                .map(|p| {
                    let chars: Vec<char> = p.chars().collect();
                    let start: String = chars[..20.min(chars.len())].iter().collect();
                    let end: String = chars[chars.len().saturating_sub(20)..].iter().collect();
                    serde_json::json!({"start": start, "end": end})
                })
                .collect();
            serde_json::to_string(&anchors).unwrap()
        } else if prompt.starts_with("Write a concise summary") {
            self.by_kind[1].fetch_add(1, Ordering::SeqCst);
            let passage = between(prompt, "<<<\n", "\n>>>");
            let head: Vec<&str> = passage.split_whitespace().take(6).collect();
            format!("Covers {}", head.join(" "))
        } else if prompt.starts_with("The numbered summaries") {
            self.by_kind[2].fetch_add(1, Ordering::SeqCst);
            let body = prompt.split_once("\n\n").map_or("", |(_, b)| b);
            format!("First, {}", body.replace("\n\n", " Then, "))
        } else {
            self.by_kind[3].fetch_add(1, Ordering::SeqCst);
            let cot = between(prompt, "<<<\n", "\n>>>");
            if cot.contains("NOQUESTION") {
                return "   ".into();
            }
            format!("What does the passage starting with {:?} establish?", cot.chars().take(30).collect::<String>())
        }
    }
}

impl ChatModel for MockModel {
    fn model_name(&self) -> &str {
        "mock-model"
    }

    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = &request.messages.iter().find(|m| m.role == "user").expect("user message").content;
        let content = self.answer(prompt);
        Ok(LlmResponse { attempts: 1, content, finish_reason: "stop".into(), usage: Usage::default() })
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn criterion_8() -> Check {
    let mut rng = common::rng(808);
    let vocab = common::vocabulary(&mut rng, 800);
    let mut docs = Vec::new();
    let mut expected_calls = 0usize;
    let mut expected_ok = 0usize;
    let mut expected_rejects: BTreeMap<String, &str> = BTreeMap::new();
    for i in 0..100 {
        let paragraphs = rng.gen_range(3..=6);
        let mut parts: Vec<String> = (0..paragraphs).map(|_| words_in(&mut rng, &vocab, 120..300)).collect();
        let id = format!("cot{i:03}");
        match i % 10 {
            3 => {
                parts[0] = format!("UNSPLITTABLE {}", parts[0]);
                expected_calls += 2;
                expected_rejects.insert(id.clone(), "segment");
            }
            7 => {
                parts[0] = format!("NOQUESTION {}", parts[0]);
                expected_calls += 1 + paragraphs + 1 + 2;
                expected_rejects.insert(id.clone(), "question");
            }
            _ => {
                expected_calls += 1 + paragraphs + 2;
                expected_ok += 1;
            }
        }
        docs.push(DocumentRecord::new(id, parts.join("\n\n")).with_source("web"));
    }
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = tmp.path().join("in");
    common::write_corpus(&input, "docs.jsonl", &docs);
    let raw = r#"{"stages":[{"name":"cot","params":{"endpoint":"http://unused","model":"mock-model","max_inflight":8}}]}"#;
    let config = validate_config(raw).map_err(|e| e.to_string())?;

    let mut record_files = Vec::new();
    for run in 0..2 {
        let mock = Arc::new(MockModel::new());
        let options = RunOptions { deterministic: true, chat_model: Some(mock.clone()) };
        let out = tmp.path().join(format!("out{run}"));
        let outcome = run_pipeline(&config, &input, &out, &options).map_err(|e| e.to_string())?;
        ensure(outcome.manifest.succeeded(), || format!("{:?}", outcome.manifest.failure))?;
        let calls = mock.calls.load(Ordering::SeqCst);
        ensure(calls == expected_calls, || format!("run {run}: {calls} calls, expected {expected_calls}"))?;

        let records: Vec<CotRecord> = read_jsonl(&out.join(COT_RECORDS_FILE));
        let rejects: Vec<CotReject> = read_jsonl(&out.join(COT_REJECTS_FILE));
        ensure(records.len() == expected_ok, || format!("{} records, expected {expected_ok}", records.len()))?;
        let got: BTreeMap<String, &str> = rejects.iter().map(|r| (r.doc_id.clone(), r.stage.as_str())).collect();
        ensure(got == expected_rejects, || format!("rejects {got:?}"))?;
        for r in &records {
            let n = r.original_text.chars().count();
            validate_segments(&r.segments, n)?;
            let rebuilt: String = r.segments.iter().map(|s| segment_text(&r.original_text, s)).collect();
            ensure(rebuilt == r.original_text, || format!("{}: segments do not rebuild the text", r.original_doc_id))?;
            let paragraphs = r.original_text.split("\n\n").count();
            ensure(r.segments.len() == paragraphs, || format!("{}: {} segments", r.original_doc_id, r.segments.len()))?;
            ensure(r.segments.iter().all(|s| s.summary.is_some()), || "missing summary".into())?;
        }
        record_files.push((fs::read(out.join(COT_RECORDS_FILE)).unwrap(), fs::read(out.join(COT_REJECTS_FILE)).unwrap()));
    }
    ensure(record_files[0] == record_files[1], || "reruns produced different record files".into())?;
    Ok(format!("{expected_ok} records + {} rejects, {expected_calls} calls as predicted, reruns byte-identical", expected_rejects.len()))
}

fn fixture_corpus(target_bytes: usize) -> Vec<DocumentRecord> {
    let mut rng = common::rng(909);
    let mut docs = common::synthetic_corpus(909, 1);
    docs.clear();
    let mut bytes = 0;
    let mut batch = 0u64;
    while bytes < target_bytes {
        let mut more = common::synthetic_corpus(10_000 + batch, 500);
        for (i, d) in more.iter_mut().enumerate() {
            d.id = format!("fx{batch:03}-{i:04}");
        }
        // Near and exact duplicates for the dedup stages to find.
        for i in (0..more.len()).step_by(40) {
            if let Some(src) = docs.choose(&mut rng).cloned() {
                let mut text: String = src.text.clone();
                text.push_str(" extra");
                more[i].text = text;
            }
        }
        for i in (5..more.len()).step_by(60) {
            if let Some(src) = docs.iter().filter(|d: &&DocumentRecord| d.text.len() > 1500).collect::<Vec<_>>().choose(&mut rng) {
                let cut = corpusforge_core::text::floor_char_boundary(&src.text, 1200);
                more[i].text = format!("{}\n{}", more[i].text, &src.text[..cut]);
            }
        }
        bytes += more.iter().map(|d| d.text.len()).sum::<usize>();
        docs.extend(more);
        batch += 1;
    }
    docs
}

fn criterion_9() -> Check {
    let docs = fixture_corpus(10 << 20);
    let total_bytes: usize = docs.iter().map(|d| d.text.len()).sum();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = tmp.path().join("in");
    let half = docs.len() / 2;
    common::write_corpus(&input, "part-0.jsonl", &docs[..half]);
    common::write_corpus(&input, "part-1.jsonl", &docs[half..]);
    let config = validate_config(DEFAULT_CONFIG).map_err(|e| e.to_string())?;
    let options = RunOptions { deterministic: true, ..Default::default() };
    let mut runs = Vec::new();
    for run in 0..2 {
        let out = tmp.path().join(format!("out{run}"));
        let outcome = run_pipeline(&config, &input, &out, &options).map_err(|e| e.to_string())?;
        ensure(outcome.manifest.succeeded(), || format!("{:?}", outcome.manifest.failure))?;
        let manifest_bytes = fs::read(out.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
        let manifest: RunManifest = serde_json::from_slice(&manifest_bytes).map_err(|e| e.to_string())?;
        ensure(manifest.flow_conserved(), || format!("run {run}: flow not conserved"))?;
        let data = fs::read(out.join(DATA_FILE)).map_err(|e| e.to_string())?;
        let fp = format!("{:016x}", xxhash_rust::xxh3::xxh3_64(&data));
        ensure(fp == manifest.output_fingerprint, || format!("run {run}: data fingerprint {fp} != manifest"))?;
        runs.push((manifest_bytes, manifest));
    }
    ensure(runs[0].0 == runs[1].0, || "manifests differ between runs".into())?;
    let m = &runs[0].1;
    let drops: Vec<String> = m.stages.iter().map(|s| format!("{}-{}", s.stage_name, s.docs_dropped)).collect();
    Ok(format!(
        "{:.1} MiB, {} docs in, {} out, fingerprint {}; drops {}",
        total_bytes as f64 / (1 << 20) as f64,
        m.input_records,
        m.stages.last().map_or(0, |s| s.docs_out),
        m.output_fingerprint,
        drops.join(" ")
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("exact substring dedup", criterion_1),
        ("minhash estimator and lsh recall", criterion_2),
        ("per-domain percentile exactness", criterion_3),
        ("bucket balance and rank invariance", criterion_4),
        ("classifier sanity and determinism", criterion_5),
        ("preprocessing bounds", criterion_6),
        ("pii checksum redaction", criterion_7),
        ("cot protocol with mock endpoint", criterion_8),
        ("end-to-end determinism", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let label = format!("criterion {} {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {label} [{secs:.1}s]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {label} [{secs:.1}s]: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
