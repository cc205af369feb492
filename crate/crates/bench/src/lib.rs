//! Synthetic inputs shared by the benchmarks.

use docmix_core::{Corpus, LangPair, ParallelDocument, SplitMix64};

/// Word from a small vocabulary so n-gram matches are frequent.
fn word(rng: &mut SplitMix64, vocab: u64) -> String {
    format!("w{}", rng.below(vocab))
}

pub fn sentence(rng: &mut SplitMix64, max_len: u64, vocab: u64) -> String {
    let len = 1 + rng.below(max_len);
    (0..len).map(|_| word(rng, vocab)).collect::<Vec<_>>().join(" ")
}

pub fn corpus(docs: usize, sentences: u64, seed: u64) -> Corpus {
    let mut rng = SplitMix64::new(seed);
    let lp = LangPair::new("de", "en");
    let documents = (0..docs)
        .map(|i| {
            let n = 1 + rng.below(sentences) as usize;
            let src = (0..n).map(|_| sentence(&mut rng, 40, 500)).collect();
            let tgt = (0..n).map(|_| sentence(&mut rng, 40, 500)).collect();
            ParallelDocument::new(format!("d{i:06}"), lp.clone(), src, tgt).expect("valid document")
        })
        .collect();
    Corpus::new(lp, documents).expect("valid corpus")
}
