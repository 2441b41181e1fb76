//! Lexicon-guided self-training for few-shot text classification.
//!
//! A small attention-pooling classifier supplies class probabilities and
//! per-word attention scores. From those, a per-class lexicon is mined
//! (top-attention words, cross-class conflicts removed, top k% by
//! frequency) and used to gate which confident predictions on the
//! unlabeled pool become pseudo-labels. Accepted examples are augmented by
//! word replacement through a lexical knowledge base, a fresh student is
//! retrained on the union, the lexicon is refined, and the student becomes
//! the next teacher until dev accuracy stalls.

pub mod classifier;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod lexicon;
pub mod lexknowledge;
pub mod pseudolabel;
pub mod selftrain;

pub use classifier::{
    forward, init_params, loss_and_grad, top_attention_words, train, EpochRecord, ForwardMode,
    ForwardOutput, Gradients, ModelParams, TrainConfig,
};
pub use corpus::{
    build_vocabulary, load_dataset, sample_few_shot, tokenize, Corpus, DatasetFormat,
    DatasetSchema, Document, Example, FewShotSplit, Vocabulary, UNK_ID, UNK_TOKEN,
};
pub use error::{Error, Result};
pub use harness::{
    evaluate, generate_synthetic, prepare, run_ablation, run_k_sweep, run_single, DataSource,
    ExperimentConfig, PreparedData, Report, ReportRow, SeedOutcome, SyntheticSpec,
};
pub use lexicon::{
    build_lexicon, match_count, refine_lexicon, regulate, Lexicon, LexiconConfig, LexiconEntry,
    MatchMode,
};
pub use lexknowledge::{
    augment_example, load_kb, AugmentConfig, LexicalKB, Relation, ReplaceAction,
};
pub use pseudolabel::{
    candidate_class, decide, entropy_gate, generate_pseudo_labels, PseudoLabel, Reason,
    SelectionConfig, SelectionRecord,
};
pub use selftrain::{
    converged, run, student_retrain, History, IterationRecord, Mode, ModelConfig, RunOutputs,
    SelfTrainConfig,
};
