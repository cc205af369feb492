//! Synthetic document-level outputs with the typical coverage failure:
//! the last one or two sentences of a document go untranslated.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ParallelDocument};
use crate::rng::SplitMix64;
use crate::segment::SegmentationPlan;
use crate::separator::is_separator_token;
use crate::HarnessError;

/// Token substituted for a noised token.
pub const NOISE_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatorConfig {
    /// Probability that a unit loses sentences.
    pub tail_drop_prob: f64,
    /// `(sentences dropped, weight)` pairs; weights need not sum to 1.
    pub drop_counts: Vec<(usize, f64)>,
    /// Per-token substitution rate outside separators.
    pub noise: f64,
    /// Drop sentences at random positions instead of from the tail.
    pub drop_anywhere: bool,
    pub seed: u64,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            tail_drop_prob: 0.0,
            drop_counts: vec![(1, 0.5), (2, 0.5)],
            noise: 0.0,
            drop_anywhere: false,
            seed: 0,
        }
    }
}

impl SimulatorConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let unit = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(HarnessError::InvalidConfig(format!("{name} must be in [0, 1], got {p}")))
            }
        };
        unit("tail_drop_prob", self.tail_drop_prob)?;
        unit("noise", self.noise)?;
        if self.drop_counts.is_empty() {
            return Err(HarnessError::InvalidConfig("drop count distribution is empty".into()));
        }
        let mut total = 0.0;
        for &(count, weight) in &self.drop_counts {
            if count == 0 || !(weight >= 0.0 && weight.is_finite()) {
                return Err(HarnessError::InvalidConfig(format!(
                    "invalid drop count entry ({count}, {weight})"
                )));
            }
            total += weight;
        }
        if total <= 0.0 {
            return Err(HarnessError::InvalidConfig("drop count weights sum to zero".into()));
        }
        Ok(())
    }

    fn draw_count(&self, rng: &mut SplitMix64) -> usize {
        let total: f64 = self.drop_counts.iter().map(|(_, w)| w).sum();
        let mut x = rng.next_f64() * total;
        for &(count, weight) in &self.drop_counts {
            if x < weight {
                return count;
            }
            x -= weight;
        }
        self.drop_counts.last().map(|&(c, _)| c).unwrap_or(1)
    }
}

/// One line of a hypothesis file: the generated text for a document, or for
/// the sentence range `[start, end)` of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    pub generated: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulatedUnit {
    pub record: HypothesisRecord,
    /// 1-based positions (within the unit) that were dropped.
    pub dropped: Vec<usize>,
}

struct Unit<'a> {
    doc: &'a ParallelDocument,
    start: usize,
    end: usize,
    budget: Option<usize>,
    whole: bool,
}

fn units<'a>(
    corpus: &'a Corpus,
    plans: Option<&[SegmentationPlan]>,
) -> Result<Vec<Unit<'a>>, HarnessError> {
    let Some(plans) = plans else {
        return Ok(corpus
            .documents
            .iter()
            .map(|doc| Unit { doc, start: 0, end: doc.len(), budget: None, whole: true })
            .collect());
    };
    let index = corpus.index();
    let mut out = Vec::new();
    for plan in plans {
        let doc = index
            .get(plan.doc_id.as_str())
            .map(|&i| &corpus.documents[i])
            .ok_or_else(|| HarnessError::UnknownDocId(plan.doc_id.clone()))?;
        if !plan.covers(doc) {
            return Err(HarnessError::InvalidRange {
                doc_id: plan.doc_id.clone(),
                start: 0,
                end: doc.len(),
            });
        }
        for seg in &plan.segments {
            out.push(Unit {
                doc,
                start: seg.start,
                end: seg.end,
                budget: Some(plan.budget),
                whole: false,
            });
        }
    }
    Ok(out)
}

/// Renders the reference target of every unit with separators, then damages
/// some of them.
///
/// Units are the documents of `corpus`, or the segments of `plans` when
/// given. Per unit, in order, one draw decides whether it loses sentences;
/// the number lost comes from `drop_counts` and is clamped so at least one
/// sentence survives. Output is a function of the inputs and `seed`.
pub fn simulate_outputs(
    corpus: &Corpus,
    plans: Option<&[SegmentationPlan]>,
    cfg: &SimulatorConfig,
) -> Result<Vec<SimulatedUnit>, HarnessError> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.seed);
    let mut out = Vec::new();
    for unit in units(corpus, plans)? {
        let n = unit.end - unit.start;
        let mut keep = vec![true; n];
        let mut dropped = Vec::new();
        if rng.next_f64() < cfg.tail_drop_prob {
            let d = cfg.draw_count(&mut rng).min(n - 1);
            if cfg.drop_anywhere {
                let mut positions: Vec<usize> = (0..n).collect();
                rng.shuffle(&mut positions);
                dropped.extend(positions[..d].iter().map(|p| p + 1));
                dropped.sort_unstable();
            } else {
                dropped.extend(n - d + 1..=n);
            }
            for &p in &dropped {
                keep[p - 1] = false;
            }
        }

        let mut pieces = Vec::new();
        for (offset, sentence) in unit.doc.target[unit.start..unit.end].iter().enumerate() {
            if !keep[offset] {
                continue;
            }
            pieces.push(format!("#{}", offset + 1));
            for token in sentence.split_whitespace() {
                let noisy = cfg.noise > 0.0 && !is_separator_token(token) && rng.next_f64() < cfg.noise;
                pieces.push(if noisy { NOISE_TOKEN.to_string() } else { token.to_string() });
            }
        }

        out.push(SimulatedUnit {
            record: HypothesisRecord {
                doc_id: unit.doc.doc_id.clone(),
                start: (!unit.whole).then_some(unit.start),
                end: (!unit.whole).then_some(unit.end),
                budget: unit.budget,
                generated: pieces.join(" "),
            },
            dropped,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LangPair;
    use crate::separator::render_separated;

    fn corpus(lens: &[usize]) -> Corpus {
        let docs = lens
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let side = |t: &str| (0..n).map(|j| format!("{t}{i} w{j}")).collect();
                ParallelDocument::new(format!("d{i}"), LangPair::new("de", "en"), side("s"), side("t")).unwrap()
            })
            .collect();
        Corpus::new(LangPair::new("de", "en"), docs).unwrap()
    }

    #[test]
    fn no_drop_reproduces_references() {
        let c = corpus(&[1, 3, 5]);
        let out = simulate_outputs(&c, None, &SimulatorConfig::default()).unwrap();
        for (unit, doc) in out.iter().zip(&c.documents) {
            assert_eq!(unit.record.generated, render_separated(&doc.target));
            assert!(unit.dropped.is_empty());
            assert_eq!(unit.record.start, None);
        }
    }

    #[test]
    fn always_drop_last() {
        let c = corpus(&[3]);
        let cfg = SimulatorConfig {
            tail_drop_prob: 1.0,
            drop_counts: vec![(1, 1.0)],
            ..SimulatorConfig::default()
        };
        let out = simulate_outputs(&c, None, &cfg).unwrap();
        let g = &out[0].record.generated;
        assert!(g.contains("#1") && g.contains("#2") && !g.contains("#3"), "{g}");
        assert_eq!(out[0].dropped, [3]);
    }

    #[test]
    fn drop_is_clamped_to_keep_one_sentence() {
        let c = corpus(&[1, 2]);
        let cfg = SimulatorConfig {
            tail_drop_prob: 1.0,
            drop_counts: vec![(2, 1.0)],
            ..SimulatorConfig::default()
        };
        let out = simulate_outputs(&c, None, &cfg).unwrap();
        assert!(out[0].dropped.is_empty());
        assert_eq!(out[1].dropped, [2]);
        assert_eq!(out[1].record.generated, "#1 t1 w0");
    }

    #[test]
    fn drop_anywhere_keeps_original_indices() {
        let c = corpus(&[6]);
        let cfg = SimulatorConfig {
            tail_drop_prob: 1.0,
            drop_counts: vec![(2, 1.0)],
            drop_anywhere: true,
            seed: 4,
            ..SimulatorConfig::default()
        };
        let out = simulate_outputs(&c, None, &cfg).unwrap();
        assert_eq!(out[0].dropped.len(), 2);
        for k in 1..=6 {
            let present = out[0].record.generated.split(' ').any(|t| t == format!("#{k}"));
            assert_eq!(present, !out[0].dropped.contains(&k));
        }
    }

    #[test]
    fn noise_spares_separators() {
        let c = corpus(&[4]);
        let cfg = SimulatorConfig { noise: 1.0, ..SimulatorConfig::default() };
        let out = simulate_outputs(&c, None, &cfg).unwrap();
        assert_eq!(out[0].record.generated, "#1 <unk> <unk> #2 <unk> <unk> #3 <unk> <unk> #4 <unk> <unk>");
    }

    #[test]
    fn deterministic() {
        let c = corpus(&[3; 50]);
        let cfg = SimulatorConfig { tail_drop_prob: 0.3, noise: 0.1, seed: 11, ..SimulatorConfig::default() };
        assert_eq!(simulate_outputs(&c, None, &cfg).unwrap(), simulate_outputs(&c, None, &cfg).unwrap());
        let other = SimulatorConfig { seed: 12, ..cfg.clone() };
        assert_ne!(simulate_outputs(&c, None, &cfg).unwrap(), simulate_outputs(&c, None, &other).unwrap());
    }

    #[test]
    fn invalid_config() {
        let c = corpus(&[1]);
        for cfg in [
            SimulatorConfig { tail_drop_prob: 1.5, ..SimulatorConfig::default() },
            SimulatorConfig { noise: -0.1, ..SimulatorConfig::default() },
            SimulatorConfig { drop_counts: vec![(0, 1.0)], ..SimulatorConfig::default() },
            SimulatorConfig { drop_counts: vec![], ..SimulatorConfig::default() },
        ] {
            assert!(matches!(simulate_outputs(&c, None, &cfg), Err(HarnessError::InvalidConfig(_))));
        }
    }

    #[test]
    fn segment_units() {
        let c = corpus(&[4]);
        let tok = crate::Tokenizer::whitespace();
        // Each sentence renders to 3 tokens, so a budget of 6 gives [0,2), [2,4).
        let plan = crate::segment::segment_document(&c.documents[0], 6, &tok).unwrap();
        let out = simulate_outputs(&c, Some(&[plan]), &SimulatorConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].record.start, Some(2));
        assert_eq!(out[1].record.budget, Some(6));
        assert_eq!(out[1].record.generated, "#1 t0 w2 #2 t0 w3");
    }
}
