//! The teacher-student loop: train a teacher on labeled data, gate
//! pseudo-labels through confidence and the lexicon, augment, retrain a
//! fresh student, refine the lexicon, promote, repeat until converged.

use serde::{Deserialize, Serialize};

use crate::classifier::{init_params, train, ModelParams, TrainConfig};
use crate::corpus::{Corpus, Document, Example, Vocabulary};
use crate::error::{Error, Result};
use crate::lexicon::{build_lexicon, refine_lexicon, Lexicon, LexiconConfig};
use crate::lexknowledge::{augment_example, AugmentConfig, LexicalKB};
use crate::pseudolabel::{
    generate_pseudo_labels, PseudoLabel, SelectionConfig, SelectionRecord,
};

/// Which pieces of the loop are active. The four modes mirror the ablation
/// grid: supervised only, classic self-training (no lexicon gate, tau
/// forced to 0), lexicon-gated self-training, and the full method with
/// augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Supervised,
    ClassicST,
    LexiconST,
    FullLST,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Supervised, Mode::ClassicST, Mode::LexiconST, Mode::FullLST];

    pub fn label(&self) -> &'static str {
        match self {
            Mode::Supervised => "supervised",
            Mode::ClassicST => "classic_st",
            Mode::LexiconST => "lexicon_st",
            Mode::FullLST => "full_lst",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s.to_lowercase().as_str() {
            "supervised" => Ok(Mode::Supervised),
            "classic_st" | "classicst" | "classic-st" => Ok(Mode::ClassicST),
            "lexicon_st" | "lexiconst" | "lexicon-st" => Ok(Mode::LexiconST),
            "full_lst" | "fulllst" | "full-lst" => Ok(Mode::FullLST),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

/// Classifier architecture dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub emb_dim: usize,
    pub attn_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            emb_dim: 64,
            attn_dim: 32,
        }
    }
}

/// Full configuration of one self-training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTrainConfig {
    pub mode: Mode,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub selection: SelectionConfig,
    pub lexicon: LexiconConfig,
    pub augment: AugmentConfig,
    /// Lets FullLST run with augmentation switched off (the classic-ST
    /// reduction); other modes never augment.
    pub augment_enabled: bool,
    /// Initialize each student from the teacher instead of fresh weights.
    pub warm_start: bool,
    pub max_iterations: usize,
    pub outer_patience: usize,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig {
            mode: Mode::FullLST,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            selection: SelectionConfig::default(),
            lexicon: LexiconConfig::default(),
            augment: AugmentConfig::default(),
            augment_enabled: true,
            warm_start: false,
            max_iterations: 10,
            outer_patience: 3,
        }
    }
}

/// One outer-loop iteration's bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub pool_before: usize,
    pub pool_after: usize,
    pub newly_accepted: usize,
    pub rejected_confidence: usize,
    pub rejected_lexicon: usize,
    pub dev_accuracy: f64,
    pub lexicon_sizes: Vec<usize>,
}

/// Run summary. Iteration 0 refers to the initial teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub teacher_dev_accuracy: f64,
    pub records: Vec<IterationRecord>,
    pub best_dev_accuracy: f64,
    pub best_iteration: usize,
}

/// Everything a run produces: the best model, the final lexicon, the
/// history, and per-iteration artifacts for checkpointing/auditing.
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub model: ModelParams,
    pub lexicon: Lexicon,
    pub history: History,
    pub iteration_models: Vec<ModelParams>,
    pub iteration_selections: Vec<Vec<SelectionRecord>>,
}

/// splitmix64; derives per-phase RNG seeds from the run seed.
fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Outer-loop convergence: dev accuracy stalled for `outer_patience`
/// consecutive iterations, or the last iteration accepted nothing new.
pub fn converged(history: &History, outer_patience: usize) -> bool {
    let records = &history.records;
    if records.is_empty() {
        return false;
    }
    if records.last().map(|r| r.newly_accepted) == Some(0) {
        return true;
    }
    let mut best = f64::NEG_INFINITY;
    let mut streak = 0usize;
    for record in records {
        if record.dev_accuracy > best {
            best = record.dev_accuracy;
            streak = 0;
        } else {
            streak += 1;
        }
    }
    streak >= outer_patience
}

/// Best dev accuracy from a training history (accuracy of the snapshot that
/// `classifier::train` returned).
fn best_dev_accuracy(epochs: &[crate::classifier::EpochRecord]) -> f64 {
    epochs
        .iter()
        .map(|e| e.dev_accuracy)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Retrain a student from scratch on labeled data plus pseudo-labeled and
/// augmented examples, each contributing an ordinary cross-entropy term.
pub fn student_retrain(
    labeled: &Corpus,
    pseudo: &[(Document, PseudoLabel)],
    augmented: &[(Document, usize)],
    dev: &Corpus,
    train_cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    vocab_size: usize,
    warm_from: Option<&ModelParams>,
    seed: u64,
) -> Result<(ModelParams, f64)> {
    let mut examples = labeled.examples.clone();
    for (doc, label) in pseudo {
        let class = label.class().ok_or_else(|| {
            Error::InvalidConfig("zero pseudo-label passed to student_retrain".into())
        })?;
        examples.push(Example {
            doc: doc.clone(),
            label: Some(class),
        });
    }
    for (doc, class) in augmented {
        examples.push(Example {
            doc: doc.clone(),
            label: Some(*class),
        });
    }
    let combined = Corpus::new(examples, labeled.class_names.clone());

    let initial = match warm_from {
        Some(teacher) => teacher.clone(),
        None => init_params(
            vocab_size,
            model_cfg.emb_dim,
            model_cfg.attn_dim,
            labeled.num_classes,
            seed,
        ),
    };
    let cfg = TrainConfig { seed, ..*train_cfg };
    let (model, epochs) = train(initial, &combined, dev, &cfg)?;
    Ok((model, best_dev_accuracy(&epochs)))
}

/// Run the full loop. The returned model is the snapshot with the best dev
/// accuracy across the teacher and every student.
pub fn run(
    labeled_train: &Corpus,
    labeled_dev: &Corpus,
    unlabeled: &Corpus,
    kb: &LexicalKB,
    vocab: &Vocabulary,
    config: &SelfTrainConfig,
) -> Result<RunOutputs> {
    if config.max_iterations == 0 {
        return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
    }
    let num_classes = labeled_train.num_classes;
    // validated up front so a bad lambda fails before any training
    config.selection.resolved_lambda(num_classes)?;

    let seed = config.train.seed;
    let teacher_seed = mix_seed(seed, 1);
    let initial = init_params(
        vocab.len(),
        config.model.emb_dim,
        config.model.attn_dim,
        num_classes,
        teacher_seed,
    );
    let teacher_cfg = TrainConfig {
        seed: teacher_seed,
        ..config.train
    };
    let (mut teacher, teacher_epochs) = train(initial, labeled_train, labeled_dev, &teacher_cfg)?;
    let teacher_dev_accuracy = best_dev_accuracy(&teacher_epochs);

    let mut best_model = teacher.clone();
    let mut best_acc = teacher_dev_accuracy;
    let mut best_iteration = 0usize;

    if config.mode == Mode::Supervised {
        return Ok(RunOutputs {
            model: best_model,
            lexicon: Lexicon::empty(num_classes),
            history: History {
                teacher_dev_accuracy,
                records: Vec::new(),
                best_dev_accuracy: best_acc,
                best_iteration,
            },
            iteration_models: Vec::new(),
            iteration_selections: Vec::new(),
        });
    }

    let mut lexicon = build_lexicon(&teacher, labeled_train, &config.lexicon)?;
    let effective_tau = match config.mode {
        Mode::ClassicST => 0,
        _ => config.selection.tau,
    };
    let selection_cfg = SelectionConfig {
        lambda: config.selection.lambda.clone(),
        tau: effective_tau,
    };

    let mut pool: Vec<Example> = unlabeled
        .examples
        .iter()
        .map(|ex| Example {
            doc: ex.doc.clone(),
            label: None,
        })
        .collect();
    let mut accepted: Vec<(Document, PseudoLabel)> = Vec::new();

    let mut history = History {
        teacher_dev_accuracy,
        records: Vec::new(),
        best_dev_accuracy: best_acc,
        best_iteration,
    };
    let mut iteration_models = Vec::new();
    let mut iteration_selections = Vec::new();

    for iteration in 1..=config.max_iterations {
        let pool_before = pool.len();
        let pool_corpus = Corpus::new(pool.clone(), labeled_train.class_names.clone());
        let (new_pseudo, selections) =
            generate_pseudo_labels(&teacher, &lexicon, &pool_corpus, &selection_cfg)?;

        // Accepted documents leave the pool for good and keep their first
        // assigned label; the rest return next iteration.
        let mut keep = vec![true; pool.len()];
        let mut rejected_confidence = 0usize;
        let mut rejected_lexicon = 0usize;
        for record in &selections {
            match record.reason {
                crate::pseudolabel::Reason::None => keep[record.index] = false,
                crate::pseudolabel::Reason::Confidence => rejected_confidence += 1,
                crate::pseudolabel::Reason::Lexicon => rejected_lexicon += 1,
            }
        }
        let newly_accepted = new_pseudo.len();
        accepted.extend(new_pseudo);
        pool = pool
            .into_iter()
            .zip(keep)
            .filter_map(|(ex, k)| k.then_some(ex))
            .collect();

        let augmented: Vec<(Document, usize)> =
            if config.mode == Mode::FullLST && config.augment_enabled {
                let aug_seed = mix_seed(seed, 1000 + iteration as u64);
                accepted
                    .iter()
                    .enumerate()
                    .flat_map(|(i, (doc, label))| {
                        let class = label.class().expect("accepted labels are one-hot");
                        let cfg = AugmentConfig {
                            seed: mix_seed(aug_seed, i as u64),
                            ..config.augment
                        };
                        augment_example(kb, doc, class, vocab, &cfg)
                    })
                    .collect()
            } else {
                Vec::new()
            };

        let student_seed = mix_seed(seed, 2000 + iteration as u64);
        let (student, student_dev_accuracy) = student_retrain(
            labeled_train,
            &accepted,
            &augmented,
            labeled_dev,
            &config.train,
            &config.model,
            vocab.len(),
            config.warm_start.then_some(&teacher),
            student_seed,
        )?;

        let pseudo_pairs: Vec<(Document, usize)> = accepted
            .iter()
            .map(|(doc, label)| (doc.clone(), label.class().expect("one-hot")))
            .collect();
        lexicon = refine_lexicon(&student, labeled_train, &pseudo_pairs, &config.lexicon)?;
        teacher = student;

        history.records.push(IterationRecord {
            iteration,
            pool_before,
            pool_after: pool.len(),
            newly_accepted,
            rejected_confidence,
            rejected_lexicon,
            dev_accuracy: student_dev_accuracy,
            lexicon_sizes: lexicon.sizes(),
        });
        iteration_models.push(teacher.clone());
        iteration_selections.push(selections);

        if student_dev_accuracy > best_acc {
            best_acc = student_dev_accuracy;
            best_model = teacher.clone();
            best_iteration = iteration;
        }

        if converged(&history, config.outer_patience) {
            break;
        }
    }

    history.best_dev_accuracy = best_acc;
    history.best_iteration = best_iteration;

    Ok(RunOutputs {
        model: best_model,
        lexicon,
        history,
        iteration_models,
        iteration_selections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn record(iteration: usize, accepted: usize, dev: f64) -> IterationRecord {
        IterationRecord {
            iteration,
            pool_before: 100,
            pool_after: 100 - accepted,
            newly_accepted: accepted,
            rejected_confidence: 0,
            rejected_lexicon: 0,
            dev_accuracy: dev,
            lexicon_sizes: vec![1, 1],
        }
    }

    fn history_of(devs: &[f64], accepted: usize) -> History {
        History {
            teacher_dev_accuracy: 0.0,
            records: devs
                .iter()
                .enumerate()
                .map(|(i, &d)| record(i + 1, accepted, d))
                .collect(),
            best_dev_accuracy: 0.0,
            best_iteration: 0,
        }
    }

    #[test]
    fn converged_after_patience_stalled_iterations() {
        let history = history_of(&[0.70, 0.72, 0.72, 0.72], 5);
        assert!(converged(&history, 2));
        let shorter = history_of(&[0.70, 0.72, 0.72], 5);
        assert!(!converged(&shorter, 2));
    }

    #[test]
    fn converged_on_zero_new_acceptances() {
        let history = history_of(&[0.7], 0);
        assert!(converged(&history, 3));
    }

    #[test]
    fn not_converged_while_accuracy_rises() {
        let history = history_of(&[0.70, 0.75, 0.80, 0.85], 5);
        assert!(!converged(&history, 2));
    }

    #[test]
    fn empty_history_is_not_converged() {
        let history = history_of(&[], 1);
        assert!(converged(&history, 0) == false);
    }

    #[test]
    fn student_retrain_rejects_zero_labels() {
        let corpus = Corpus::new(
            vec![Example {
                doc: Document::from_text("word"),
                label: Some(0),
            }],
            vec!["a".to_string(), "b".to_string()],
        );
        let pseudo = vec![(Document::from_text("other"), PseudoLabel::Zero)];
        let err = student_retrain(
            &corpus,
            &pseudo,
            &[],
            &corpus,
            &TrainConfig::default(),
            &ModelConfig::default(),
            10,
            None,
            0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("full_lst".parse::<Mode>().unwrap(), Mode::FullLST);
        assert_eq!("ClassicST".parse::<Mode>().unwrap(), Mode::ClassicST);
        assert!("bogus".parse::<Mode>().is_err());
    }

    #[test]
    fn mix_seed_spreads_salts() {
        let a = mix_seed(7, 1);
        let b = mix_seed(7, 2);
        let c = mix_seed(8, 1);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }
}
