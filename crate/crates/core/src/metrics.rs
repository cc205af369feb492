//! Sentence- and document-level BLEU, separator-based sentence recovery,
//! coverage statistics and discourse score aggregation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::separator::{separator_index, strip_separators, token_spans};
use crate::tokenize::{TokenizeError, Tokenizer};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("no segments to score")]
    EmptyCorpus,
    #[error("no outputs to analyse")]
    EmptyInput,
    #[error("expected sentence count must be at least 1 (unit {0})")]
    ZeroExpected(String),
    #[error("discourse scores must be positive, got {0}")]
    NonPositiveInput(f64),
    #[error("max n-gram order must be at least 1")]
    ZeroOrder,
    #[error("invalid smoothing {0:?}, expected none or add-k[:<k>]")]
    InvalidSmoothing(String),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    /// Any zero precision makes the score 0.
    #[default]
    None,
    /// `(matches + k) / (total + k)` for orders 2 and up.
    AddK(f64),
}

impl FromStr for Smoothing {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MetricsError::InvalidSmoothing(s.to_string());
        match s {
            "none" => Ok(Smoothing::None),
            "add-k" => Ok(Smoothing::AddK(1.0)),
            _ => {
                let k: f64 = s
                    .strip_prefix("add-k:")
                    .ok_or_else(bad)?
                    .parse()
                    .map_err(|_| bad())?;
                if k.is_finite() && k > 0.0 {
                    Ok(Smoothing::AddK(k))
                } else {
                    Err(bad())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    /// Percentage in `[0, 100]`.
    pub score: f64,
    /// Precisions for orders `1..=effective_order`.
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
    /// Clipped matches per order `1..=max_order`.
    pub matches: Vec<u64>,
    /// Hypothesis n-gram totals per order `1..=max_order`.
    pub totals: Vec<u64>,
    pub max_order: usize,
    /// Highest order with at least one hypothesis n-gram.
    pub effective_order: usize,
}

impl fmt::Display for BleuScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let precisions: Vec<String> = self.precisions.iter().map(|p| format!("{:.1}", p * 100.0)).collect();
        write!(
            f,
            "BLEU = {:.2} {} (BP = {:.3} hyp_len = {} ref_len = {})",
            self.score,
            precisions.join("/"),
            self.brevity_penalty,
            self.hyp_len,
            self.ref_len
        )
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Per-order clipped matches and totals for one segment pair.
fn segment_stats(hyp: &[String], reference: &[String], max_n: usize) -> (Vec<u64>, Vec<u64>) {
    let mut matches = vec![0; max_n];
    let mut totals = vec![0; max_n];
    for n in 1..=max_n.min(hyp.len()) {
        let ref_counts = ngram_counts(reference, n);
        let hyp_counts = ngram_counts(hyp, n);
        matches[n - 1] = hyp_counts
            .iter()
            .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        totals[n - 1] = (hyp.len() + 1 - n) as u64;
    }
    (matches, totals)
}

/// Corpus BLEU with one reference per segment.
///
/// Clipped n-gram matches and totals are summed over all segments before
/// the precisions are formed. The geometric mean runs over orders up to the
/// highest order for which the hypotheses contain at least one n-gram, so
/// corpora of very short hypotheses are not zeroed by orders that cannot
/// occur. The brevity penalty is `exp(1 - ref_len / hyp_len)` when the
/// hypotheses are shorter. Tokens are compared exactly (case-sensitive).
pub fn corpus_bleu<H, R>(
    hyps: &[H],
    refs: &[R],
    max_n: usize,
    smoothing: Smoothing,
) -> Result<BleuScore, MetricsError>
where
    H: AsRef<[String]> + Sync,
    R: AsRef<[String]> + Sync,
{
    if hyps.len() != refs.len() {
        return Err(MetricsError::LengthMismatch {
            hyps: hyps.len(),
            refs: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    if max_n == 0 {
        return Err(MetricsError::ZeroOrder);
    }

    let (matches, totals) = hyps
        .par_iter()
        .zip(refs.par_iter())
        .map(|(h, r)| segment_stats(h.as_ref(), r.as_ref(), max_n))
        .reduce(
            || (vec![0; max_n], vec![0; max_n]),
            |(mut m, mut t), (m2, t2)| {
                for n in 0..max_n {
                    m[n] += m2[n];
                    t[n] += t2[n];
                }
                (m, t)
            },
        );
    let hyp_len: usize = hyps.iter().map(|h| h.as_ref().len()).sum();
    let ref_len: usize = refs.iter().map(|r| r.as_ref().len()).sum();

    let effective_order = totals.iter().take_while(|&&t| t > 0).count();
    let precisions: Vec<f64> = (0..effective_order)
        .map(|i| match smoothing {
            Smoothing::AddK(k) if i > 0 => (matches[i] as f64 + k) / (totals[i] as f64 + k),
            _ => matches[i] as f64 / totals[i] as f64,
        })
        .collect();

    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };

    let score = if effective_order == 0 || precisions.contains(&0.0) {
        0.0
    } else {
        let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / effective_order as f64;
        (brevity_penalty * mean_log.exp() * 100.0).min(100.0)
    };

    Ok(BleuScore {
        score,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
        matches,
        totals,
        max_order: max_n,
        effective_order,
    })
}

fn tokenize_all<S: AsRef<str> + Sync>(
    texts: &[S],
    tokenizer: &Tokenizer,
    prepare: impl Fn(&str) -> String + Sync,
) -> Result<Vec<Vec<String>>, TokenizeError> {
    texts
        .par_iter()
        .map(|t| tokenizer.tokenize(&prepare(t.as_ref())).map(|s| s.into_inner()))
        .collect()
}

/// Sentence-level BLEU: corpus BLEU over aligned sentence pairs.
pub fn sbleu<S: AsRef<str> + Sync>(
    hyps: &[S],
    refs: &[S],
    tokenizer: &Tokenizer,
    smoothing: Smoothing,
) -> Result<BleuScore, MetricsError> {
    let h = tokenize_all(hyps, tokenizer, str::to_string)?;
    let r = tokenize_all(refs, tokenizer, str::to_string)?;
    corpus_bleu(&h, &r, 4, smoothing)
}

/// Document-level BLEU: separator tokens are removed, each document is one
/// segment.
pub fn dbleu<S: AsRef<str> + Sync>(
    doc_hyps: &[S],
    doc_refs: &[S],
    tokenizer: &Tokenizer,
    smoothing: Smoothing,
) -> Result<BleuScore, MetricsError> {
    let h = tokenize_all(doc_hyps, tokenizer, strip_separators)?;
    let r = tokenize_all(doc_refs, tokenizer, strip_separators)?;
    corpus_bleu(&h, &r, 4, smoothing)
}

/// Splits a generated document back into sentences using `#k` separators.
///
/// Separators with index in `1..=expected` are accepted when their index is
/// larger than the last accepted one. Text between an accepted separator and
/// the next accepted one (or the end) is that sentence, trimmed. Rejected
/// separators (duplicates, out of order, out of range) stay in the text of
/// the sentence they appear in. Text before the first accepted separator is
/// dropped. Indices that never appear are absent from the map.
pub fn recover_sentences(generated: &str, expected: usize) -> BTreeMap<usize, String> {
    let mut out = BTreeMap::new();
    let mut open: Option<(usize, usize)> = None;
    let mut last = 0;
    for (a, b) in token_spans(generated) {
        let Some(k) = separator_index(&generated[a..b]) else {
            continue;
        };
        if k == 0 || k > expected || k <= last {
            continue;
        }
        if let Some((index, from)) = open {
            out.insert(index, generated[from..a].trim().to_string());
        }
        open = Some((k, b));
        last = k;
    }
    if let Some((index, from)) = open {
        out.insert(index, generated[from..].trim().to_string());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageInput {
    pub doc_id: String,
    /// First sentence of the unit within its document.
    #[serde(default)]
    pub start: usize,
    pub generated: String,
    pub expected: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocCoverage {
    pub doc_id: String,
    pub start: usize,
    pub expected: usize,
    pub recovered: Vec<usize>,
    pub missing: Vec<usize>,
    pub full: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub per_doc: Vec<DocCoverage>,
    /// Percentage of units whose sentences were all recovered.
    pub corpus_accuracy: f64,
}

impl CoverageReport {
    pub fn full_count(&self) -> usize {
        self.per_doc.iter().filter(|d| d.full).count()
    }
}

/// A unit counts as covered when every separator `#1..#expected` is
/// recovered.
pub fn coverage(outputs: &[CoverageInput]) -> Result<CoverageReport, MetricsError> {
    if outputs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if let Some(bad) = outputs.iter().find(|o| o.expected == 0) {
        return Err(MetricsError::ZeroExpected(bad.doc_id.clone()));
    }
    let per_doc: Vec<DocCoverage> = outputs
        .par_iter()
        .map(|o| {
            let found = recover_sentences(&o.generated, o.expected);
            let (recovered, missing): (Vec<usize>, Vec<usize>) =
                (1..=o.expected).partition(|k| found.contains_key(k));
            DocCoverage {
                doc_id: o.doc_id.clone(),
                start: o.start,
                expected: o.expected,
                full: missing.is_empty(),
                recovered,
                missing,
            }
        })
        .collect();
    let full = per_doc.iter().filter(|d| d.full).count();
    Ok(CoverageReport {
        corpus_accuracy: 100.0 * full as f64 / per_doc.len() as f64,
        per_doc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscourseScores {
    pub tc: f64,
    pub cp: f64,
    pub pt: f64,
    /// Geometric mean of the three, unrounded.
    pub tcp: f64,
}

impl DiscourseScores {
    /// The aggregate as reported, to one decimal.
    pub fn tcp_rounded(&self) -> f64 {
        (self.tcp * 10.0).round() / 10.0
    }
}

impl fmt::Display for DiscourseScores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.tcp)
    }
}

/// Geometric mean of tense consistency, conjunction presence and pronoun
/// translation accuracies.
pub fn tcp(tc: f64, cp: f64, pt: f64) -> Result<DiscourseScores, MetricsError> {
    for v in [tc, cp, pt] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(MetricsError::NonPositiveInput(v));
        }
    }
    Ok(DiscourseScores {
        tc,
        cp,
        pt,
        tcp: (tc * cp * pt).cbrt(),
    })
}

/// One generated (sub-)document and the reference sentences it translates.
#[derive(Debug, Clone, Copy)]
pub struct DocumentOutput<'a> {
    pub generated: &'a str,
    pub references: &'a [String],
}

/// s-BLEU of document-level output: sentences are recovered through their
/// separators and paired with references by index. Unrecovered sentences
/// are scored as empty hypotheses.
pub fn sbleu_from_documents(
    outputs: &[DocumentOutput<'_>],
    tokenizer: &Tokenizer,
    smoothing: Smoothing,
) -> Result<BleuScore, MetricsError> {
    let mut hyps = Vec::new();
    let mut refs = Vec::new();
    for out in outputs {
        let mut found = recover_sentences(out.generated, out.references.len());
        for (k, reference) in out.references.iter().enumerate() {
            hyps.push(found.remove(&(k + 1)).unwrap_or_default());
            refs.push(reference.clone());
        }
    }
    sbleu(&hyps, &refs, tokenizer, smoothing)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn bleu(h: &[&str], r: &[&str]) -> BleuScore {
        let h: Vec<_> = h.iter().map(|s| seq(s)).collect();
        let r: Vec<_> = r.iter().map(|s| seq(s)).collect();
        corpus_bleu(&h, &r, 4, Smoothing::None).unwrap()
    }

    #[test]
    fn identity_is_100() {
        let b = bleu(&["the cat sat on the mat", "a b"], &["the cat sat on the mat", "a b"]);
        assert_eq!(b.score, 100.0);
        assert_eq!(b.brevity_penalty, 1.0);
    }

    #[test]
    fn short_hypothesis_clamps_order() {
        let b = bleu(&["a b"], &["a b c d"]);
        assert_eq!(b.effective_order, 2);
        assert_eq!(b.precisions, [1.0, 1.0]);
        assert!((b.brevity_penalty - (-1.0f64).exp()).abs() < 1e-15);
        assert!((b.score - 36.787944117144235).abs() < 1e-9, "{}", b.score);
    }

    #[test]
    fn zero_precision_without_smoothing() {
        assert_eq!(bleu(&["x y z w"], &["a b c d"]).score, 0.0);
        // Unigrams match but no bigram does.
        assert_eq!(bleu(&["b a d c"], &["a b c d"]).score, 0.0);
    }

    #[test]
    fn add_k_smoothing() {
        let h = vec![seq("b a d c")];
        let r = vec![seq("a b c d")];
        let b = corpus_bleu(&h, &r, 4, Smoothing::AddK(1.0)).unwrap();
        // p1 = 4/4, p2 = 1/4, p3 = 1/3, p4 = 1/2
        let expected = 100.0 * (1.0f64 * 0.25 * (1.0 / 3.0) * 0.5).powf(0.25);
        assert!((b.score - expected).abs() < 1e-9);
    }

    #[test]
    fn clipping() {
        // "the the the" vs "the cat": clipped unigram matches = 1.
        let b = bleu(&["the the the"], &["the cat"]);
        assert_eq!(b.matches[0], 1);
        assert_eq!(b.totals[0], 3);
    }

    #[test]
    fn case_sensitive() {
        assert_eq!(bleu(&["The"], &["the"]).score, 0.0);
    }

    #[test]
    fn errors() {
        let one = vec![seq("a")];
        let none: Vec<Vec<String>> = vec![];
        assert!(matches!(
            corpus_bleu(&one, &none, 4, Smoothing::None),
            Err(MetricsError::LengthMismatch { hyps: 1, refs: 0 })
        ));
        assert!(matches!(corpus_bleu(&none, &none, 4, Smoothing::None), Err(MetricsError::EmptyCorpus)));
    }

    #[test]
    fn empty_hypotheses_score_zero() {
        let b = bleu(&["", ""], &["a b", "c"]);
        assert_eq!(b.score, 0.0);
        assert_eq!(b.effective_order, 0);
    }

    #[test]
    fn smoothing_parse() {
        assert_eq!("none".parse::<Smoothing>().unwrap(), Smoothing::None);
        assert_eq!("add-k".parse::<Smoothing>().unwrap(), Smoothing::AddK(1.0));
        assert_eq!("add-k:0.5".parse::<Smoothing>().unwrap(), Smoothing::AddK(0.5));
        assert!("add-k:-1".parse::<Smoothing>().is_err());
        assert!("exp".parse::<Smoothing>().is_err());
    }

    #[test]
    fn dbleu_strips_separators() {
        let tok = Tokenizer::whitespace();
        let b = dbleu(&["#1 a b #2 c"], &["#1 a b #2 c"], &tok, Smoothing::None).unwrap();
        assert_eq!(b.score, 100.0);
        assert_eq!(b.hyp_len, 3);
        // `#3` is stripped even though it is not a neighbour of `#2`.
        let b = dbleu(&["a b c d #3"], &["#1 a b c d"], &tok, Smoothing::None).unwrap();
        assert_eq!(b.score, 100.0);
    }

    #[test]
    fn recover_basic() {
        let got = recover_sentences("#1 hello #2 world", 2);
        assert_eq!(got, BTreeMap::from([(1, "hello".into()), (2, "world".into())]));
        let got = recover_sentences("#1 hello", 2);
        assert_eq!(got, BTreeMap::from([(1, "hello".into())]));
    }

    #[test]
    fn recover_irregular() {
        // Duplicate #1 is kept as text of sentence 1; #5 is out of range.
        let got = recover_sentences("noise #1 a #1 b #3 c #5 d #2 e", 3);
        assert_eq!(got, BTreeMap::from([(1, "a #1 b".into()), (3, "c #5 d #2 e".into())]));
        assert!(recover_sentences("no separators", 2).is_empty());
        assert_eq!(recover_sentences("#0 x C#1 y #1 z", 1), BTreeMap::from([(1, "z".into())]));
        assert_eq!(recover_sentences("#1\t a  b \n#2 c", 2)[&1], "a  b");
    }

    fn unit(id: &str, generated: &str, expected: usize) -> CoverageInput {
        CoverageInput {
            doc_id: id.into(),
            start: 0,
            generated: generated.into(),
            expected,
        }
    }

    #[test]
    fn coverage_accuracy() {
        let report = coverage(&[unit("a", "#1 x #2 y", 2), unit("b", "#1 x", 2)]).unwrap();
        assert_eq!(report.corpus_accuracy, 50.0);
        assert_eq!(report.per_doc[1].missing, [2]);
        assert_eq!(report.per_doc[1].recovered, [1]);
        assert!(report.per_doc[0].full);
        assert!(matches!(coverage(&[]), Err(MetricsError::EmptyInput)));
        assert!(matches!(coverage(&[unit("z", "", 0)]), Err(MetricsError::ZeroExpected(_))));
    }

    #[test]
    fn tcp_values() {
        assert_eq!(tcp(46.5, 33.8, 63.5).unwrap().to_string(), "46.4");
        assert_eq!(tcp(51.2, 35.8, 67.9).unwrap().tcp_rounded(), 49.9);
        let x = tcp(7.25, 7.25, 7.25).unwrap().tcp;
        assert!((x - 7.25).abs() < 1e-12);
        assert!(matches!(tcp(0.0, 1.0, 1.0), Err(MetricsError::NonPositiveInput(_))));
        assert!(tcp(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn sbleu_with_missing_sentences() {
        let tok = Tokenizer::whitespace();
        let refs: Vec<String> = vec!["a b c d".into(), "e f g h".into()];
        let perfect = [DocumentOutput { generated: "#1 a b c d #2 e f g h", references: &refs }];
        let direct = sbleu(&refs, &refs, &tok, Smoothing::None).unwrap();
        assert_eq!(sbleu_from_documents(&perfect, &tok, Smoothing::None).unwrap(), direct);

        let none = [DocumentOutput { generated: "", references: &refs }];
        assert_eq!(sbleu_from_documents(&none, &tok, Smoothing::None).unwrap().score, 0.0);

        let half = [DocumentOutput { generated: "#1 a b c d", references: &refs }];
        let s = sbleu_from_documents(&half, &tok, Smoothing::None).unwrap();
        assert!(s.score > 0.0 && s.score < 100.0);
        assert_eq!(s.hyp_len, 4);
    }
}
