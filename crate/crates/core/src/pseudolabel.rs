//! Pseudo-label generation: confidence thresholding, the entropy gate, and
//! the lexicon regulator combined into one per-document decision.

use serde::{Deserialize, Serialize};

use crate::classifier::{forward, ForwardMode, ModelParams};
use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::lexicon::{match_count, Lexicon};

/// A pseudo-label is either a one-hot assignment or the all-zero rejection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PseudoLabel {
    Zero,
    OneHot { class: usize, confidence: f64 },
}

impl PseudoLabel {
    pub fn class(&self) -> Option<usize> {
        match self {
            PseudoLabel::Zero => None,
            PseudoLabel::OneHot { class, .. } => Some(*class),
        }
    }
}

/// Selection thresholds: per-class confidence lambda and the lexicon
/// matching threshold tau.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Per-class confidence thresholds, each in (0, 1). A single entry
    /// broadcasts to every class.
    pub lambda: Vec<f64>,
    pub tau: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            lambda: vec![0.8],
            tau: 2,
        }
    }
}

impl SelectionConfig {
    /// Expand the lambda vector to `num_classes` entries and validate.
    pub fn resolved_lambda(&self, num_classes: usize) -> Result<Vec<f64>> {
        let lambda = if self.lambda.len() == 1 {
            vec![self.lambda[0]; num_classes]
        } else if self.lambda.len() == num_classes {
            self.lambda.clone()
        } else {
            return Err(Error::InvalidConfig(format!(
                "lambda has {} entries for {} classes",
                self.lambda.len(),
                num_classes
            )));
        };
        for &l in &lambda {
            if !(0.0 < l && l < 1.0) {
                return Err(Error::InvalidConfig("lambda entries must be in (0,1)".into()));
            }
        }
        Ok(lambda)
    }
}

/// Why a document was not pseudo-labeled; `None` means it was accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reason {
    Confidence,
    Lexicon,
    None,
}

/// Audit record for one pool document in one selection pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    /// Index of the document within the pool it was scored from.
    pub index: usize,
    pub text: String,
    pub probs: Vec<f64>,
    pub chosen: Option<usize>,
    pub reason: Reason,
}

/// The confident candidate class: argmax of probs[c]/lambda[c] (ties to the
/// lowest index), kept only when its probability strictly exceeds lambda.
pub fn candidate_class(probs: &[f64], lambda: &[f64]) -> Option<usize> {
    debug_assert_eq!(probs.len(), lambda.len());
    let mut best = 0;
    for c in 1..probs.len() {
        if probs[c] / lambda[c] > probs[best] / lambda[best] {
            best = c;
        }
    }
    (probs[best] > lambda[best]).then_some(best)
}

/// The entropy rule: select a regulator-approved one-hot candidate iff its
/// entropy value -log(p/lambda) is strictly below the all-zero value of 0.
pub fn entropy_gate(
    probs: &[f64],
    chosen: usize,
    lambda: &[f64],
    regulator_pass: bool,
) -> bool {
    if !regulator_pass {
        return false;
    }
    let entropy = -(probs[chosen] / lambda[chosen]).ln();
    entropy < 0.0
}

/// Full per-document decision given class probabilities and a match-count
/// lookup for the candidate class.
pub fn decide<F>(probs: &[f64], lambda: &[f64], tau: usize, match_count_of: F) -> (Option<usize>, Reason)
where
    F: FnOnce(usize) -> usize,
{
    let Some(chosen) = candidate_class(probs, lambda) else {
        return (None, Reason::Confidence);
    };
    let regulator_pass = match_count_of(chosen) >= tau;
    if !regulator_pass {
        return (None, Reason::Lexicon);
    }
    if entropy_gate(probs, chosen, lambda, regulator_pass) {
        (Some(chosen), Reason::None)
    } else {
        (None, Reason::Confidence)
    }
}

/// Score every pool document and emit one-hot pseudo-labels for those that
/// clear the confidence threshold, the lexicon regulator, and the entropy
/// gate. Rejected documents produce no label, only a record.
pub fn generate_pseudo_labels(
    model: &ModelParams,
    lexicon: &Lexicon,
    unlabeled: &Corpus,
    config: &SelectionConfig,
) -> Result<(Vec<(Document, PseudoLabel)>, Vec<SelectionRecord>)> {
    let lambda = config.resolved_lambda(unlabeled.num_classes)?;
    let mut accepted = Vec::new();
    let mut records = Vec::with_capacity(unlabeled.len());
    for (index, ex) in unlabeled.examples.iter().enumerate() {
        let out = forward(model, &ex.doc, ForwardMode::Eval)?;
        let (chosen, reason) = decide(&out.probs, &lambda, config.tau, |class| {
            match_count(lexicon, class, &ex.doc)
        });
        if let Some(class) = chosen {
            accepted.push((
                ex.doc.clone(),
                PseudoLabel::OneHot {
                    class,
                    confidence: out.probs[class],
                },
            ));
        }
        records.push(SelectionRecord {
            index,
            text: ex.doc.raw_text.clone(),
            probs: out.probs,
            chosen,
            reason,
        });
    }
    Ok((accepted, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::init_params;
    use crate::corpus::{build_vocabulary, Example};
    use crate::lexicon::{build_lexicon, LexiconConfig};
    use std::collections::BTreeSet;

    #[test]
    fn candidate_class_threshold_examples() {
        assert_eq!(candidate_class(&[0.85, 0.15], &[0.8, 0.8]), Some(0));
        // boundary: strictly greater required
        assert_eq!(candidate_class(&[0.80, 0.20], &[0.8, 0.8]), None);
        // ratio argmax picks class 1 but 0.4 fails its own threshold
        assert_eq!(candidate_class(&[0.6, 0.4], &[0.9, 0.4]), None);
    }

    #[test]
    fn candidate_class_ties_go_to_lowest_index() {
        assert_eq!(candidate_class(&[0.45, 0.45, 0.10], &[0.4, 0.4, 0.4]), Some(0));
    }

    #[test]
    fn entropy_gate_examples() {
        // p=0.9, lambda=0.8: -ln(1.125) < 0 -> select
        assert!(entropy_gate(&[0.9, 0.1], 0, &[0.8, 0.8], true));
        // p = lambda: entropy exactly 0, not strictly lower
        assert!(!entropy_gate(&[0.8, 0.2], 0, &[0.8, 0.8], true));
        // regulator failure wins regardless of confidence
        assert!(!entropy_gate(&[0.99, 0.01], 0, &[0.8, 0.8], false));
    }

    #[test]
    fn entropy_gate_value_matches_direct_evaluation() {
        let p: f64 = 0.9;
        let lambda: f64 = 0.8;
        let entropy = -(p / lambda).ln();
        assert!((entropy - (-0.117_783_035_656_383_6)).abs() < 1e-12);
        assert_eq!(entropy < 0.0, entropy_gate(&[p, 1.0 - p], 0, &[lambda, lambda], true));
    }

    #[test]
    fn decide_reports_rejection_reasons() {
        let lambda = [0.8, 0.8];
        // confident + enough lexicon evidence
        assert_eq!(
            decide(&[0.95, 0.05], &lambda, 2, |_| 2),
            (Some(0), Reason::None)
        );
        // confident but starved of lexicon evidence
        assert_eq!(
            decide(&[0.95, 0.05], &lambda, 2, |_| 1),
            (None, Reason::Lexicon)
        );
        // unconfident never reaches the regulator
        assert_eq!(
            decide(&[0.6, 0.4], &lambda, 0, |_| 9),
            (None, Reason::Confidence)
        );
    }

    fn tiny_setup() -> (ModelParams, Lexicon, Corpus) {
        let texts: Vec<(String, usize)> = vec![
            ("great superb".to_string(), 0),
            ("dull tedious".to_string(), 1),
        ];
        let mut corpus = Corpus::new(
            texts
                .iter()
                .map(|(t, l)| Example {
                    doc: Document::from_text(t),
                    label: Some(*l),
                })
                .collect(),
            vec!["pos".to_string(), "neg".to_string()],
        );
        let vocab = build_vocabulary(&[&corpus], 1);
        corpus.apply_vocabulary(&vocab);
        let model = init_params(vocab.len(), 6, 4, 2, 1);
        let cfg = LexiconConfig {
            top_n: 2,
            k_percent: 100.0,
            stopwords: BTreeSet::new(),
            ..LexiconConfig::default()
        };
        let lexicon = build_lexicon(&model, &corpus, &cfg).unwrap();
        (model, lexicon, corpus)
    }

    #[test]
    fn empty_pool_yields_empty_results() {
        let (model, lexicon, corpus) = tiny_setup();
        let pool = Corpus::new(Vec::new(), corpus.class_names.clone());
        let (accepted, records) =
            generate_pseudo_labels(&model, &lexicon, &pool, &SelectionConfig::default()).unwrap();
        assert!(accepted.is_empty());
        assert!(records.is_empty());
    }

    #[test]
    fn records_cover_every_document_and_reasons_match() {
        let (model, lexicon, corpus) = tiny_setup();
        let mut pool = Corpus::new(
            vec![
                Example {
                    doc: Document::from_text("great superb great"),
                    label: None,
                },
                Example {
                    doc: Document::from_text("nothing to see"),
                    label: None,
                },
            ],
            corpus.class_names.clone(),
        );
        let vocab = build_vocabulary(&[&corpus], 1);
        pool.apply_vocabulary(&vocab);
        // permissive low threshold so the first doc's gates hinge on lexicon
        let config = SelectionConfig {
            lambda: vec![0.4],
            tau: 2,
        };
        let (accepted, records) =
            generate_pseudo_labels(&model, &lexicon, &pool, &config).unwrap();
        assert_eq!(records.len(), 2);
        for r in &records {
            assert_eq!(r.reason == Reason::None, r.chosen.is_some());
        }
        for (_, label) in &accepted {
            match label {
                PseudoLabel::OneHot { class, confidence } => {
                    assert!(*confidence > config.lambda[0]);
                    assert!(*class < 2);
                }
                PseudoLabel::Zero => panic!("zero labels must not be emitted"),
            }
        }
    }

    #[test]
    fn emitted_confidence_exceeds_lambda() {
        let (model, lexicon, corpus) = tiny_setup();
        let mut pool = Corpus::new(
            (0..10)
                .map(|i| Example {
                    doc: Document::from_text(&format!("great superb take{i}")),
                    label: None,
                })
                .collect(),
            corpus.class_names.clone(),
        );
        let vocab = build_vocabulary(&[&corpus], 1);
        pool.apply_vocabulary(&vocab);
        let config = SelectionConfig {
            lambda: vec![0.45],
            tau: 0,
        };
        let (accepted, _) = generate_pseudo_labels(&model, &lexicon, &pool, &config).unwrap();
        for (_, label) in &accepted {
            if let PseudoLabel::OneHot { confidence, .. } = label {
                assert!(*confidence > config.lambda[0]);
            }
        }
    }

    #[test]
    fn lambda_broadcast_and_validation() {
        let cfg = SelectionConfig {
            lambda: vec![0.8],
            tau: 0,
        };
        assert_eq!(cfg.resolved_lambda(3).unwrap(), vec![0.8, 0.8, 0.8]);
        let bad = SelectionConfig {
            lambda: vec![0.8, 0.9],
            tau: 0,
        };
        assert!(bad.resolved_lambda(3).is_err());
        let out_of_range = SelectionConfig {
            lambda: vec![1.0],
            tau: 0,
        };
        assert!(out_of_range.resolved_lambda(2).is_err());
    }

    #[test]
    fn raising_lambda_never_adds_labels() {
        let (model, lexicon, corpus) = tiny_setup();
        let mut pool = Corpus::new(
            (0..12)
                .map(|i| Example {
                    doc: Document::from_text(&format!("great superb w{i} dull")),
                    label: None,
                })
                .collect(),
            corpus.class_names.clone(),
        );
        let vocab = build_vocabulary(&[&corpus], 1);
        pool.apply_vocabulary(&vocab);
        let accepted_at = |lambda: f64, tau: usize| {
            let cfg = SelectionConfig {
                lambda: vec![lambda],
                tau,
            };
            generate_pseudo_labels(&model, &lexicon, &pool, &cfg)
                .unwrap()
                .0
                .len()
        };
        for tau in [0usize, 1, 2] {
            let mut prev = usize::MAX;
            for lambda in [0.3, 0.5, 0.7, 0.9] {
                let n = accepted_at(lambda, tau);
                assert!(n <= prev, "acceptance grew as lambda rose");
                prev = n;
            }
        }
        // and anti-monotone in tau
        let mut prev = usize::MAX;
        for tau in [0usize, 1, 2, 3] {
            let n = accepted_at(0.3, tau);
            assert!(n <= prev, "acceptance grew as tau rose");
            prev = n;
        }
    }
}
