//! Joins hypothesis files with the reference corpus and runs the metrics.

use std::collections::HashMap;

use crate::corpus::{Corpus, ParallelDocument};
use crate::metrics::{
    self, BleuScore, CoverageInput, CoverageReport, DocumentOutput, Smoothing,
};
use crate::separator::strip_separators;
use crate::simulate::HypothesisRecord;
use crate::tokenize::Tokenizer;
use crate::HarnessError;

/// A hypothesis matched to the sentence range of the document it translates.
#[derive(Debug, Clone, Copy)]
pub struct AlignedUnit<'a> {
    pub doc: &'a ParallelDocument,
    pub start: usize,
    pub end: usize,
    pub generated: &'a str,
}

impl AlignedUnit<'_> {
    pub fn references(&self) -> &[String] {
        &self.doc.target[self.start..self.end]
    }
}

/// Resolves every hypothesis against `corpus`. A record without `start` and
/// `end` covers the whole document.
pub fn align<'a>(
    corpus: &'a Corpus,
    hyps: &'a [HypothesisRecord],
) -> Result<Vec<AlignedUnit<'a>>, HarnessError> {
    let index = corpus.index();
    hyps.iter()
        .map(|h| {
            let doc = index
                .get(h.doc_id.as_str())
                .map(|&i| &corpus.documents[i])
                .ok_or_else(|| HarnessError::UnknownDocId(h.doc_id.clone()))?;
            let start = h.start.unwrap_or(0);
            let end = h.end.unwrap_or(doc.len());
            if start >= end || end > doc.len() {
                return Err(HarnessError::InvalidRange {
                    doc_id: h.doc_id.clone(),
                    start,
                    end,
                });
            }
            Ok(AlignedUnit {
                doc,
                start,
                end,
                generated: &h.generated,
            })
        })
        .collect()
}

pub fn evaluate_coverage(corpus: &Corpus, hyps: &[HypothesisRecord]) -> crate::Result<CoverageReport> {
    let inputs: Vec<CoverageInput> = align(corpus, hyps)?
        .into_iter()
        .map(|u| CoverageInput {
            doc_id: u.doc.doc_id.clone(),
            start: u.start,
            generated: u.generated.to_string(),
            expected: u.end - u.start,
        })
        .collect();
    Ok(metrics::coverage(&inputs)?)
}

pub fn evaluate_sbleu(
    corpus: &Corpus,
    hyps: &[HypothesisRecord],
    tokenizer: &Tokenizer,
    smoothing: Smoothing,
) -> crate::Result<BleuScore> {
    let units = align(corpus, hyps)?;
    let outputs: Vec<DocumentOutput> = units
        .iter()
        .map(|u| DocumentOutput {
            generated: u.generated,
            references: u.references(),
        })
        .collect();
    Ok(metrics::sbleu_from_documents(&outputs, tokenizer, smoothing)?)
}

/// Sub-document outputs are stitched back into documents (ordered by start
/// sentence) before d-BLEU is computed. The reference of a document is the
/// concatenation of the target ranges its hypotheses cover.
pub fn evaluate_dbleu(
    corpus: &Corpus,
    hyps: &[HypothesisRecord],
    tokenizer: &Tokenizer,
    smoothing: Smoothing,
) -> crate::Result<BleuScore> {
    let units = align(corpus, hyps)?;
    let mut order: Vec<&str> = Vec::new();
    let mut grouped: HashMap<&str, Vec<AlignedUnit>> = HashMap::new();
    for u in units {
        let id = u.doc.doc_id.as_str();
        grouped
            .entry(id)
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(u);
    }
    let mut doc_hyps = Vec::with_capacity(order.len());
    let mut doc_refs = Vec::with_capacity(order.len());
    for id in order {
        let mut parts = grouped.remove(id).unwrap_or_default();
        parts.sort_by_key(|u| u.start);
        let hyp: Vec<String> = parts.iter().map(|u| strip_separators(u.generated)).collect();
        let reference: Vec<&str> = parts
            .iter()
            .flat_map(|u| u.references().iter().map(String::as_str))
            .collect();
        doc_hyps.push(hyp.join(" "));
        doc_refs.push(reference.join(" "));
    }
    Ok(metrics::dbleu(&doc_hyps, &doc_refs, tokenizer, smoothing)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LangPair;

    fn corpus() -> Corpus {
        let doc = ParallelDocument::new(
            "d0",
            LangPair::new("de", "en"),
            vec!["s1".into(), "s2".into(), "s3".into()],
            vec!["a b".into(), "c d".into(), "e f".into()],
        )
        .unwrap();
        Corpus::new(LangPair::new("de", "en"), vec![doc]).unwrap()
    }

    fn hyp(start: Option<usize>, end: Option<usize>, text: &str) -> HypothesisRecord {
        HypothesisRecord {
            doc_id: "d0".into(),
            start,
            end,
            budget: None,
            generated: text.into(),
        }
    }

    #[test]
    fn whole_document() {
        let c = corpus();
        let hyps = [hyp(None, None, "#1 a b #2 c d #3 e f")];
        let tok = Tokenizer::whitespace();
        assert_eq!(evaluate_dbleu(&c, &hyps, &tok, Smoothing::None).unwrap().score, 100.0);
        assert_eq!(evaluate_sbleu(&c, &hyps, &tok, Smoothing::None).unwrap().score, 100.0);
        assert_eq!(evaluate_coverage(&c, &hyps).unwrap().corpus_accuracy, 100.0);
    }

    #[test]
    fn stitched_segments() {
        let c = corpus();
        // Out of order on purpose.
        let hyps = [hyp(Some(2), Some(3), "#1 e f"), hyp(Some(0), Some(2), "#1 a b #2 c d")];
        let tok = Tokenizer::whitespace();
        assert_eq!(evaluate_dbleu(&c, &hyps, &tok, Smoothing::None).unwrap().score, 100.0);
        let cov = evaluate_coverage(&c, &hyps).unwrap();
        assert_eq!(cov.per_doc[0].expected, 1);
        assert_eq!(cov.per_doc[1].expected, 2);
    }

    #[test]
    fn bad_references() {
        let c = corpus();
        let bad_range = [hyp(Some(2), Some(5), "x")];
        assert!(matches!(align(&c, &bad_range), Err(HarnessError::InvalidRange { .. })));
        let unknown = [HypothesisRecord { doc_id: "zz".into(), ..hyp(None, None, "x") }];
        assert!(matches!(align(&c, &unknown), Err(HarnessError::UnknownDocId(_))));
    }
}
