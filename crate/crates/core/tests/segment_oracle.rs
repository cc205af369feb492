//! Segmentation against an explicit greedy packer over precomputed costs.

use std::collections::HashSet;

use docmix_core::{
    build_length_schedule, segment_document, LangPair, MixStrategy, ParallelDocument, SplitMix64, Tokenizer,
    DEFAULT_LENGTHS,
};
use proptest::prelude::*;

fn random_doc(rng: &mut SplitMix64, max_sentences: u64, max_words: u64) -> ParallelDocument {
    let n = 1 + rng.below(max_sentences) as usize;
    let side = |rng: &mut SplitMix64| -> Vec<String> {
        (0..n)
            .map(|_| {
                let words = 1 + rng.below(max_words);
                (0..words).map(|w| format!("t{w}")).collect::<Vec<_>>().join(" ")
            })
            .collect()
    };
    let src = side(rng);
    let tgt = side(rng);
    ParallelDocument::new("doc", LangPair::new("zh", "en"), src, tgt).unwrap()
}

/// Per-sentence rendered cost under whitespace tokenization: the `#k`
/// separator is one token, the sentence adds its word count.
fn sentence_costs(sentences: &[String]) -> Vec<usize> {
    sentences.iter().map(|s| 1 + s.split(' ').count()).collect()
}

fn oracle_pack(costs: &[usize], budget: usize) -> Vec<(usize, usize, bool)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut used = 0;
    let mut i = 0;
    while i < costs.len() {
        if start == i {
            if costs[i] > budget {
                out.push((i, i + 1, true));
                start = i + 1;
                used = 0;
            } else {
                used = costs[i];
            }
            i += 1;
            continue;
        }
        if used + costs[i] <= budget {
            used += costs[i];
            i += 1;
        } else {
            out.push((start, i, false));
            start = i;
            used = 0;
        }
    }
    if start < costs.len() {
        out.push((start, costs.len(), false));
    }
    out
}

#[test]
fn small_budget_example() {
    // Each sentence renders to 3 tokens: "#k x y".
    assert_eq!(oracle_pack(&[3, 3, 3], 6), [(0, 2, false), (2, 3, false)]);
}

#[test]
fn plans_match_greedy_oracle() {
    let tok = Tokenizer::whitespace();
    let mut rng = SplitMix64::new(77);
    for _ in 0..500 {
        let doc = random_doc(&mut rng, 30, 60);
        let budget = 1 + rng.below(200) as usize;
        let plan = segment_document(&doc, budget, &tok).unwrap();
        let got: Vec<_> = plan.segments.iter().map(|s| (s.start, s.end, s.oversized)).collect();
        assert_eq!(got, oracle_pack(&sentence_costs(&doc.source), budget));
    }
}

#[test]
fn reconstruction_budget_and_monotonicity() {
    let tok = Tokenizer::whitespace();
    let mut rng = SplitMix64::new(5);
    for _ in 0..1000 {
        let doc = random_doc(&mut rng, 200, 60);
        let mut counts = Vec::new();
        for budget in DEFAULT_LENGTHS {
            let plan = segment_document(&doc, budget, &tok).unwrap();
            assert!(plan.covers(&doc));
            let rebuilt: Vec<&String> = plan.segments.iter().flat_map(|s| &doc.source[s.start..s.end]).collect();
            assert_eq!(rebuilt, doc.source.iter().collect::<Vec<_>>());
            for s in &plan.segments {
                assert!(s.oversized || s.src_tokens <= budget);
                if s.oversized {
                    assert_eq!(s.len(), 1);
                }
            }
            counts.push(plan.segments.len());
        }
        assert!(counts[3] <= counts[0]);
        assert!(counts.windows(2).all(|w| w[1] <= w[0]));
    }
}

proptest! {
    #[test]
    fn partition_schedule_is_a_partition(n in 0usize..200, seed in any::<u64>(), k in 1usize..6) {
        let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        let lengths: Vec<usize> = (1..=k).map(|i| i * 512).collect();
        let s = build_length_schedule(&ids, &lengths, MixStrategy::Partition, seed).unwrap();
        let mut seen = HashSet::new();
        for (id, _) in s.pairs() {
            prop_assert!(seen.insert(id.to_string()));
        }
        prop_assert_eq!(seen.len(), n);
        for l in &lengths {
            let c = s.pairs().filter(|(_, x)| x == l).count();
            prop_assert!(c == n / k || c == n.div_ceil(k));
        }
    }

    #[test]
    fn segmentation_is_deterministic(seed in any::<u64>(), budget in 1usize..100) {
        let doc = random_doc(&mut SplitMix64::new(seed), 20, 20);
        let tok = Tokenizer::whitespace();
        prop_assert_eq!(segment_document(&doc, budget, &tok).unwrap(), segment_document(&doc, budget, &tok).unwrap());
    }
}
