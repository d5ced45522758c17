#![allow(dead_code)]

use corpusforge_core::DocumentRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Pronounceable pseudo-words so tokens look like prose.
pub fn vocabulary(rng: &mut ChaCha8Rng, size: usize) -> Vec<String> {
    const ON: &[&str] = &["b", "c", "d", "f", "g", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr"];
    const NU: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
    let mut words = std::collections::BTreeSet::new();
    while words.len() < size {
        let syllables = rng.gen_range(1..=3);
        let w: String = (0..syllables)
            .map(|_| format!("{}{}", ON[rng.gen_range(0..ON.len())], NU[rng.gen_range(0..NU.len())]))
            .collect();
        words.insert(w);
    }
    words.into_iter().collect()
}

pub fn sentence(rng: &mut ChaCha8Rng, vocab: &[String], words: usize) -> String {
    let mut s: Vec<&str> = (0..words).map(|_| vocab[rng.gen_range(0..vocab.len())].as_str()).collect();
    s.dedup();
    format!("{}.", s.join(" "))
}

/// Several lines of prose totalling roughly `approx_words` words.
pub fn paragraph(rng: &mut ChaCha8Rng, vocab: &[String], approx_words: usize) -> String {
    let mut lines = Vec::new();
    let mut n = 0;
    while n < approx_words {
        let w = rng.gen_range(8..16);
        lines.push(sentence(rng, vocab, w));
        n += w;
    }
    lines.join("\n")
}

/// A mixed corpus with the metadata every default stage reads.
pub fn synthetic_corpus(seed: u64, n: usize) -> Vec<DocumentRecord> {
    let mut r = rng(seed);
    let vocab = vocabulary(&mut r, 2000);
    let domains = ["news", "forum", "wiki"];
    let sources = ["web", "encyclopedia", "code"];
    (0..n)
        .map(|i| {
            let words = r.gen_range(20..400);
            let mut text = paragraph(&mut r, &vocab, words);
            if i % 17 == 0 {
                text.push_str("\ncall 13812345678 or mail the office.");
            }
            DocumentRecord::new(format!("doc-{i:06}"), text)
                .with_lang(if i % 5 == 0 { "de" } else { "en" })
                .with_source(sources[i % sources.len()])
                .with_domain(domains[i % domains.len()])
                .with_loss(r.gen_range(1.0..6.0))
                .with_meta("quality_score_1", format!("{:.6}", r.gen::<f64>()))
                .with_meta("quality_score_2", format!("{:.6}", r.gen::<f64>() * 10.0))
                .with_meta("quality_score_3", format!("{:.6}", -r.gen::<f64>()))
        })
        .collect()
}

pub fn write_corpus(dir: &std::path::Path, name: &str, docs: &[DocumentRecord]) {
    std::fs::create_dir_all(dir).unwrap();
    let f = std::fs::File::create(dir.join(name)).unwrap();
    corpusforge_core::io::write_records(docs, std::io::BufWriter::new(f)).unwrap();
}
