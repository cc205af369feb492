//! Greedy packing of consecutive sentences into sub-documents that fit a
//! token budget, and the assignment of budgets to documents.

use std::collections::BTreeSet;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ParallelDocument};
use crate::rng::SplitMix64;
use crate::separator::render_separated;
use crate::tokenize::{TokenizeError, Tokenizer};

/// Budgets used for mixed instructions: multiples of 512 up to 2048.
pub const DEFAULT_LENGTHS: [usize; 4] = [512, 1024, 1536, 2048];

#[derive(Debug, thiserror::Error)]
pub enum SegmentError {
    #[error("token budget must be at least 1")]
    ZeroBudget,
    #[error("no segment lengths given")]
    EmptyLengths,
    #[error("unknown document id {0}")]
    UnknownDocId(String),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
}

/// Which side of a candidate segment is measured against the budget.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMode {
    /// Rendered source side only (the model input).
    #[default]
    Source,
    /// The larger of the rendered source and target sides.
    MaxSide,
}

impl FromStr for CostMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "source" => Ok(CostMode::Source),
            "max-side" => Ok(CostMode::MaxSide),
            other => Err(format!("unknown cost mode {other:?}, expected source or max-side")),
        }
    }
}

/// A contiguous sentence range `[start, end)` of one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubDocument {
    #[serde(skip)]
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    #[serde(skip)]
    pub budget: usize,
    pub src_tokens: usize,
    pub tgt_tokens: usize,
    /// A single sentence whose rendered cost alone exceeds the budget.
    pub oversized: bool,
}

impl SubDocument {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationPlan {
    pub doc_id: String,
    #[serde(rename = "L")]
    pub budget: usize,
    pub segments: Vec<SubDocument>,
}

impl SegmentationPlan {
    /// Restores the fields that are implied by the plan and not serialized
    /// per segment.
    pub fn normalize(mut self) -> Self {
        for seg in &mut self.segments {
            seg.doc_id.clone_from(&self.doc_id);
            seg.budget = self.budget;
        }
        self
    }

    /// Checks the plan covers `doc` with contiguous, non-empty segments.
    pub fn covers(&self, doc: &ParallelDocument) -> bool {
        let mut next = 0;
        for seg in &self.segments {
            if seg.start != next || seg.end <= seg.start {
                return false;
            }
            next = seg.end;
        }
        self.doc_id == doc.doc_id && next == doc.len()
    }
}

#[derive(Debug)]
pub struct Segmenter<'a> {
    pub tokenizer: &'a Tokenizer,
    pub cost_mode: CostMode,
}

/// Running token count of a rendered `#1 s1 #2 s2 ...` side.
struct SideCost<'s> {
    sentences: &'s [String],
}

impl SideCost<'_> {
    /// Cost of the sentence at `index` when it is the `position`-th (1-based)
    /// sentence of a segment, for additive tokenizers.
    fn piece(&self, tok: &Tokenizer, index: usize, position: usize) -> Result<usize, TokenizeError> {
        Ok(tok.count(&format!("#{position}"))? + tok.count(&self.sentences[index])?)
    }

    fn rendered(&self, tok: &Tokenizer, start: usize, end: usize) -> Result<usize, TokenizeError> {
        tok.count(&render_separated(&self.sentences[start..end]))
    }
}

impl Segmenter<'_> {
    /// Packs sentences left to right. A sentence joins the open segment if the
    /// rendered cost of the extended segment stays within `budget`; otherwise
    /// the open segment is closed and the sentence starts a new one. A
    /// sentence that does not fit even on its own becomes a single oversized
    /// segment.
    pub fn segment(
        &self,
        doc: &ParallelDocument,
        budget: usize,
    ) -> Result<SegmentationPlan, SegmentError> {
        if budget == 0 {
            return Err(SegmentError::ZeroBudget);
        }
        let tok = self.tokenizer;
        let src = SideCost { sentences: &doc.source };
        let tgt = SideCost { sentences: &doc.target };
        let additive = tok.is_additive();
        let cost_of = |side: &SideCost, start: usize, end: usize, running: usize| {
            if additive {
                Ok(running + side.piece(tok, end - 1, end - start)?)
            } else {
                side.rendered(tok, start, end)
            }
        };

        let mut segments = Vec::new();
        let mut start = 0;
        let mut src_cost = 0;
        let mut tgt_cost = 0;
        let close = |segments: &mut Vec<SubDocument>, start, end, src_tokens, tgt_tokens| {
            let measured = match self.cost_mode {
                CostMode::Source => src_tokens,
                CostMode::MaxSide => usize::max(src_tokens, tgt_tokens),
            };
            segments.push(SubDocument {
                doc_id: doc.doc_id.clone(),
                start,
                end,
                budget,
                src_tokens,
                tgt_tokens,
                oversized: measured > budget,
            });
        };

        for i in 0..doc.len() {
            if i > start {
                let s = cost_of(&src, start, i + 1, src_cost)?;
                let t = cost_of(&tgt, start, i + 1, tgt_cost)?;
                if self.measure(s, t) <= budget {
                    src_cost = s;
                    tgt_cost = t;
                    continue;
                }
                close(&mut segments, start, i, src_cost, tgt_cost);
                start = i;
            }
            src_cost = cost_of(&src, i, i + 1, 0)?;
            tgt_cost = cost_of(&tgt, i, i + 1, 0)?;
            if self.measure(src_cost, tgt_cost) > budget {
                close(&mut segments, i, i + 1, src_cost, tgt_cost);
                start = i + 1;
            }
        }
        if start < doc.len() {
            close(&mut segments, start, doc.len(), src_cost, tgt_cost);
        }

        Ok(SegmentationPlan {
            doc_id: doc.doc_id.clone(),
            budget,
            segments,
        })
    }

    fn measure(&self, src: usize, tgt: usize) -> usize {
        match self.cost_mode {
            CostMode::Source => src,
            CostMode::MaxSide => src.max(tgt),
        }
    }

    /// Segments every `(doc, L)` pair of a schedule. Documents are processed
    /// in parallel; the result follows schedule order.
    pub fn plan_schedule(
        &self,
        corpus: &Corpus,
        schedule: &LengthSchedule,
    ) -> Result<Vec<SegmentationPlan>, SegmentError> {
        let index = corpus.index();
        let jobs = schedule
            .pairs()
            .map(|(id, budget)| {
                index
                    .get(id)
                    .map(|&i| (&corpus.documents[i], budget))
                    .ok_or_else(|| SegmentError::UnknownDocId(id.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        jobs.into_par_iter()
            .map(|(doc, budget)| self.segment(doc, budget))
            .collect()
    }
}

/// Segments one document with the source-side cost.
pub fn segment_document(
    doc: &ParallelDocument,
    budget: usize,
    tokenizer: &Tokenizer,
) -> Result<SegmentationPlan, SegmentError> {
    Segmenter {
        tokenizer,
        cost_mode: CostMode::Source,
    }
    .segment(doc, budget)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixStrategy {
    /// Every document is segmented at every length.
    Replicate,
    /// Each document is assigned exactly one length, round-robin after a
    /// seeded shuffle.
    #[default]
    Partition,
}

impl FromStr for MixStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "replicate" => Ok(MixStrategy::Replicate),
            "partition" => Ok(MixStrategy::Partition),
            other => Err(format!("unknown strategy {other:?}, expected replicate or partition")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub doc_id: String,
    pub lengths: Vec<usize>,
}

/// Budgets assigned to each document, in input document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthSchedule {
    pub entries: Vec<ScheduleEntry>,
}

impl LengthSchedule {
    pub fn pairs(&self) -> impl Iterator<Item = (&str, usize)> + '_ {
        self.entries
            .iter()
            .flat_map(|e| e.lengths.iter().map(move |&l| (e.doc_id.as_str(), l)))
    }

    pub fn pair_count(&self) -> usize {
        self.entries.iter().map(|e| e.lengths.len()).sum()
    }

    pub fn lengths_for(&self, doc_id: &str) -> Option<&[usize]> {
        self.entries
            .iter()
            .find(|e| e.doc_id == doc_id)
            .map(|e| e.lengths.as_slice())
    }
}

pub fn build_length_schedule(
    doc_ids: &[String],
    lengths: &[usize],
    strategy: MixStrategy,
    seed: u64,
) -> Result<LengthSchedule, SegmentError> {
    let lengths: Vec<usize> = lengths.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if lengths.is_empty() {
        return Err(SegmentError::EmptyLengths);
    }
    if lengths[0] == 0 {
        return Err(SegmentError::ZeroBudget);
    }
    let entries = match strategy {
        MixStrategy::Replicate => doc_ids
            .iter()
            .map(|id| ScheduleEntry {
                doc_id: id.clone(),
                lengths: lengths.clone(),
            })
            .collect(),
        MixStrategy::Partition => {
            let mut order: Vec<usize> = (0..doc_ids.len()).collect();
            SplitMix64::new(seed).shuffle(&mut order);
            let mut assigned = vec![0; doc_ids.len()];
            for (rank, &doc) in order.iter().enumerate() {
                assigned[doc] = lengths[rank % lengths.len()];
            }
            doc_ids
                .iter()
                .zip(assigned)
                .map(|(id, l)| ScheduleEntry {
                    doc_id: id.clone(),
                    lengths: vec![l],
                })
                .collect()
        }
    };
    Ok(LengthSchedule { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LangPair;

    fn doc(src: &[&str]) -> ParallelDocument {
        let s: Vec<String> = src.iter().map(|s| s.to_string()).collect();
        ParallelDocument::new("d0", LangPair::new("de", "en"), s.clone(), s).unwrap()
    }

    fn ranges(plan: &SegmentationPlan) -> Vec<(usize, usize, bool)> {
        plan.segments.iter().map(|s| (s.start, s.end, s.oversized)).collect()
    }

    #[test]
    fn single_sentence() {
        let tok = Tokenizer::whitespace();
        let plan = segment_document(&doc(&["a b c"]), 4, &tok).unwrap();
        assert_eq!(ranges(&plan), [(0, 1, false)]);
        assert_eq!(plan.segments[0].src_tokens, 4);
    }

    #[test]
    fn greedy_packing_with_separators() {
        // "#k x y" costs 3 whitespace tokens per sentence.
        let tok = Tokenizer::whitespace();
        let plan = segment_document(&doc(&["x y", "x y", "x y"]), 6, &tok).unwrap();
        assert_eq!(ranges(&plan), [(0, 2, false), (2, 3, false)]);
        assert_eq!(plan.segments[0].src_tokens, 6);
    }

    #[test]
    fn oversized_sentence_is_isolated() {
        let tok = Tokenizer::whitespace();
        let plan = segment_document(&doc(&["a", "b c d e f g", "h", "i"]), 4, &tok).unwrap();
        assert_eq!(ranges(&plan), [(0, 1, false), (1, 2, true), (2, 4, false)]);
    }

    #[test]
    fn max_side_mode() {
        let tok = Tokenizer::whitespace();
        let d = ParallelDocument::new(
            "d",
            LangPair::new("de", "en"),
            vec!["a".into(), "b".into()],
            vec!["A B C".into(), "D".into()],
        )
        .unwrap();
        let seg = Segmenter { tokenizer: &tok, cost_mode: CostMode::MaxSide };
        assert_eq!(ranges(&seg.segment(&d, 5).unwrap()), [(0, 1, false), (1, 2, false)]);
        assert_eq!(ranges(&segment_document(&d, 5, &tok).unwrap()), [(0, 2, false)]);
    }

    #[test]
    fn external_tokenizer_renders_whole_candidate() {
        let ext = Tokenizer::new(crate::TokenizerSpec::External(
            r#"set -f; while IFS= read -r l; do set -- $l; printf '%s\n' "$*"; done"#.into(),
        ))
        .unwrap();
        let d = doc(&["x y", "x y", "x y"]);
        let builtin = segment_document(&d, 6, &Tokenizer::whitespace()).unwrap();
        assert_eq!(segment_document(&d, 6, &ext).unwrap(), builtin);
    }

    #[test]
    fn zero_budget() {
        let tok = Tokenizer::whitespace();
        assert!(matches!(segment_document(&doc(&["a"]), 0, &tok), Err(SegmentError::ZeroBudget)));
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i}")).collect()
    }

    #[test]
    fn partition_balances_lengths() {
        let s = build_length_schedule(&ids(4), &[512, 1024], MixStrategy::Partition, 1).unwrap();
        let count = |l| s.pairs().filter(|&(_, x)| x == l).count();
        assert_eq!((count(512), count(1024)), (2, 2));
        assert_eq!(s.pair_count(), 4);
    }

    #[test]
    fn replicate_every_length() {
        let s = build_length_schedule(&ids(3), &DEFAULT_LENGTHS, MixStrategy::Replicate, 0).unwrap();
        assert_eq!(s.pair_count(), 12);
        assert_eq!(s.lengths_for("d1"), Some(&DEFAULT_LENGTHS[..]));
    }

    #[test]
    fn empty_lengths() {
        assert!(matches!(
            build_length_schedule(&ids(3), &[], MixStrategy::Replicate, 0),
            Err(SegmentError::EmptyLengths)
        ));
    }

    #[test]
    fn plan_json_shape() {
        let tok = Tokenizer::whitespace();
        let plan = segment_document(&doc(&["a"]), 512, &tok).unwrap();
        let json = serde_json::to_string(&plan).unwrap();
        assert_eq!(
            json,
            r#"{"doc_id":"d0","L":512,"segments":[{"start":0,"end":1,"src_tokens":2,"tgt_tokens":2,"oversized":false}]}"#
        );
        let back: SegmentationPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back.normalize(), plan);
    }
}
