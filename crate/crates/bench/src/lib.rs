//! Synthetic inputs shared by the benchmarks.

use corpusforge_core::DocumentRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn vocabulary(rng: &mut ChaCha8Rng, size: usize) -> Vec<String> {
    const ON: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "st", "tr"];
    const NU: &[&str] = &["a", "e", "i", "o", "u", "ei"];
    let mut words = std::collections::BTreeSet::new();
    while words.len() < size {
        let n = rng.gen_range(1..=3);
        words.insert((0..n).map(|_| format!("{}{}", ON[rng.gen_range(0..ON.len())], NU[rng.gen_range(0..NU.len())])).collect::<String>());
    }
    words.into_iter().collect()
}

/// Line-structured prose of about `words` words.
pub fn text(rng: &mut ChaCha8Rng, vocab: &[String], words: usize) -> String {
    let mut out = String::with_capacity(words * 7);
    for i in 0..words {
        out.push_str(&vocab[rng.gen_range(0..vocab.len())]);
        out.push(if i % 14 == 13 { '\n' } else { ' ' });
    }
    out
}

/// `n` docs where roughly `dup_rate` of them are light edits of an earlier doc.
pub fn corpus(seed: u64, n: usize, words: usize, dup_rate: f64) -> Vec<DocumentRecord> {
    let mut r = rng(seed);
    let vocab = vocabulary(&mut r, 5000);
    let mut docs: Vec<DocumentRecord> = Vec::with_capacity(n);
    for i in 0..n {
        let body = if i > 0 && r.gen_bool(dup_rate) {
            let src = &docs[r.gen_range(0..i)].text;
            let mut t: Vec<&str> = src.split(' ').collect();
            let k = r.gen_range(0..t.len());
            t[k] = "edited";
            t.join(" ")
        } else {
            text(&mut r, &vocab, words)
        };
        docs.push(
            DocumentRecord::new(format!("doc-{i:07}"), body)
                .with_lang("en")
                .with_source("web")
                .with_domain(["news", "forum", "wiki"][i % 3])
                .with_loss(r.gen_range(1.0..6.0)),
        );
    }
    docs
}

/// Text sprinkled with phone numbers every few hundred bytes.
pub fn pii_text(seed: u64, bytes: usize) -> String {
    let mut r = rng(seed);
    let vocab = vocabulary(&mut r, 500);
    let mut out = String::with_capacity(bytes + 64);
    while out.len() < bytes {
        out.push_str(&text(&mut r, &vocab, 40));
        out.push_str(&format!("call 138{:08} ", r.gen_range(0..100_000_000u32)));
    }
    out
}
