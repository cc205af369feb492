use criterion::{criterion_group, criterion_main, Criterion};
use docmix_bench::{corpus, sentence};
use docmix_core::{corpus_bleu, recover_sentences, render_separated, Smoothing, SplitMix64};
use std::hint::black_box;

fn bleu(c: &mut Criterion) {
    let mut rng = SplitMix64::new(1);
    let tokens = |s: String| s.split(' ').map(str::to_string).collect::<Vec<_>>();
    let hyps: Vec<Vec<String>> = (0..2000).map(|_| tokens(sentence(&mut rng, 40, 300))).collect();
    let refs: Vec<Vec<String>> = (0..2000).map(|_| tokens(sentence(&mut rng, 40, 300))).collect();
    c.bench_function("corpus_bleu_2000_segments", |b| {
        b.iter(|| corpus_bleu(black_box(&hyps), black_box(&refs), 4, Smoothing::None).unwrap())
    });
}

fn recovery(c: &mut Criterion) {
    let docs = corpus(200, 60, 2);
    let rendered: Vec<(String, usize)> = docs
        .documents
        .iter()
        .map(|d| (render_separated(&d.target), d.len()))
        .collect();
    c.bench_function("recover_sentences_200_docs", |b| {
        b.iter(|| {
            for (text, n) in &rendered {
                black_box(recover_sentences(text, *n));
            }
        })
    });
}

criterion_group!(benches, bleu, recovery);
criterion_main!(benches);
