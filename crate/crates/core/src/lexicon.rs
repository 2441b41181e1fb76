//! Per-class lexicon mined from attention scores and word frequency, plus
//! the match-count regulator that gates pseudo-label acceptance.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::classifier::{forward, rank_by_attention, ForwardMode, ModelParams};
use crate::corpus::{Corpus, Document, UNK_ID};
use crate::error::{Error, Result};

/// Built-in English function words kept out of the lexicon.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "if", "then", "else", "when", "while", "of", "at",
    "by", "for", "with", "about", "against", "between", "into", "through", "to", "from", "in",
    "on", "off", "over", "under", "is", "are", "was", "were", "be", "been", "being", "am",
    "do", "does", "did", "have", "has", "had", "it", "its", "he", "she", "him", "her", "his",
    "hers", "they", "them", "their", "we", "us", "our", "you", "your", "i", "me", "my", "this",
    "that", "these", "those", "as", "so", "not", "no", "nor", "too", "very", "can", "will",
    "would", "should", "could", "there", "here", "what", "which", "who", "whom", "s", "t",
];

/// How the regulator counts lexicon evidence in a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Every token occurrence counts.
    #[default]
    Occurrences,
    /// Each distinct lexicon word counts once.
    DistinctWords,
}

/// Lexicon construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconConfig {
    /// Words extracted per example (highest attention first).
    pub top_n: usize,
    /// Percentage of each class's surviving candidates to keep, in (0, 100].
    pub k_percent: f64,
    /// Minimum lexicon-word evidence required by the regulator.
    pub tau: usize,
    pub stopwords: BTreeSet<String>,
    pub match_mode: MatchMode,
}

impl Default for LexiconConfig {
    fn default() -> Self {
        LexiconConfig {
            top_n: 3,
            k_percent: 10.0,
            tau: 2,
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            match_mode: MatchMode::Occurrences,
        }
    }
}

impl LexiconConfig {
    fn validate(&self) -> Result<()> {
        if self.top_n == 0 {
            return Err(Error::InvalidConfig("top_n must be >= 1".into()));
        }
        if !(self.k_percent > 0.0 && self.k_percent <= 100.0) {
            return Err(Error::InvalidConfig("k_percent must be in (0, 100]".into()));
        }
        Ok(())
    }
}

/// One lexicon member: the word, its occurrence count within the class, and
/// the mean attention over those occurrences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub word: String,
    pub count: u64,
    pub mean_attention: f64,
}

/// Per-class representative words. Class word sets are pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    classes: Vec<Vec<LexiconEntry>>,
    word_sets: Vec<BTreeSet<String>>,
    match_mode: MatchMode,
}

impl Lexicon {
    /// An empty lexicon over `num_classes` classes (regulates nothing in).
    pub fn empty(num_classes: usize) -> Self {
        Lexicon {
            classes: vec![Vec::new(); num_classes],
            word_sets: vec![BTreeSet::new(); num_classes],
            match_mode: MatchMode::default(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn entries(&self, class: usize) -> &[LexiconEntry] {
        &self.classes[class]
    }

    pub fn contains(&self, class: usize, word: &str) -> bool {
        self.word_sets[class].contains(word)
    }

    /// Entry count per class, indexed by class.
    pub fn sizes(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.len()).collect()
    }

    /// JSON export mapping class name -> entries, ordered by class index.
    pub fn export(&self, class_names: &[String]) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (c, entries) in self.classes.iter().enumerate() {
            map.insert(
                class_names[c].clone(),
                serde_json::to_value(entries).expect("serializable entries"),
            );
        }
        serde_json::Value::Object(map)
    }
}

/// Top-`n` attention words of one document, skipping stopwords and
/// out-of-vocabulary tokens.
fn extract_words(
    doc: &Document,
    attention: &[f64],
    config: &LexiconConfig,
) -> Vec<String> {
    let mut filtered_words = Vec::new();
    let mut filtered_attn = Vec::new();
    for (i, word) in doc.token_strings.iter().enumerate() {
        if doc.tokens[i] == UNK_ID || config.stopwords.contains(word) {
            continue;
        }
        filtered_words.push(word.clone());
        filtered_attn.push(attention[i]);
    }
    rank_by_attention(&filtered_words, &filtered_attn)
        .into_iter()
        .take(config.top_n)
        .map(|(w, _, _)| w)
        .collect()
}

fn build_from_examples<'a, I>(
    model: &ModelParams,
    examples: I,
    num_classes: usize,
    config: &LexiconConfig,
) -> Result<Lexicon>
where
    I: Iterator<Item = (&'a Document, usize)>,
{
    config.validate()?;

    // Step 1: per-example attention extraction, caching attention vectors
    // for the frequency pass.
    let mut extracted: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    let mut scored_docs: Vec<(&Document, usize, Vec<f64>)> = Vec::new();
    for (doc, label) in examples {
        if label >= num_classes {
            return Err(Error::InvalidConfig(format!(
                "label {label} out of range for {num_classes} classes"
            )));
        }
        let out = forward(model, doc, ForwardMode::Eval)?;
        for word in extract_words(doc, &out.attention, config) {
            extracted.entry(word).or_default().insert(label);
        }
        scored_docs.push((doc, label, out.attention));
    }

    // Step 2: drop words extracted under more than one class.
    let mut candidates: Vec<BTreeSet<String>> = vec![BTreeSet::new(); num_classes];
    for (word, classes) in &extracted {
        if classes.len() == 1 {
            let class = *classes.iter().next().expect("non-empty class set");
            candidates[class].insert(word.clone());
        }
    }

    // Step 3: per class, count occurrences across all of its examples and
    // keep the top ceil(k%) of the surviving candidates.
    let mut classes = Vec::with_capacity(num_classes);
    let mut word_sets = Vec::with_capacity(num_classes);
    for (class, cand) in candidates.iter().enumerate() {
        let mut counts: BTreeMap<&str, (u64, f64)> = BTreeMap::new();
        for (doc, label, attention) in &scored_docs {
            if *label != class {
                continue;
            }
            for (i, word) in doc.token_strings.iter().enumerate() {
                if let Some(w) = cand.get(word.as_str()) {
                    let entry = counts.entry(w.as_str()).or_insert((0, 0.0));
                    entry.0 += 1;
                    entry.1 += attention[i];
                }
            }
        }
        let mut entries: Vec<LexiconEntry> = counts
            .into_iter()
            .map(|(word, (count, attn_sum))| LexiconEntry {
                word: word.to_string(),
                count,
                mean_attention: attn_sum / count as f64,
            })
            .collect();
        entries.sort_by(|a, b| {
            b.count
                .cmp(&a.count)
                .then_with(|| {
                    b.mean_attention
                        .partial_cmp(&a.mean_attention)
                        .expect("finite attention")
                })
                .then_with(|| a.word.cmp(&b.word))
        });
        let keep = ((config.k_percent / 100.0) * entries.len() as f64).ceil() as usize;
        entries.truncate(keep);
        word_sets.push(entries.iter().map(|e| e.word.clone()).collect());
        classes.push(entries);
    }

    Ok(Lexicon {
        classes,
        word_sets,
        match_mode: config.match_mode,
    })
}

/// Build the lexicon from labeled data: extract top-n attention words per
/// example, drop cross-class conflicts, keep the top k% frequent words per
/// class. A class left without candidates gets an empty lexicon.
pub fn build_lexicon(
    model: &ModelParams,
    labeled: &Corpus,
    config: &LexiconConfig,
) -> Result<Lexicon> {
    if labeled.is_empty() {
        return Err(Error::InvalidConfig("empty labeled corpus".into()));
    }
    let pairs = labeled.examples.iter().filter_map(|ex| {
        ex.label.map(|l| (&ex.doc, l))
    });
    build_from_examples(model, pairs, labeled.num_classes, config)
}

/// Rebuild the lexicon over labeled data plus the current pseudo-labeled
/// examples, weighting both equally.
pub fn refine_lexicon(
    model: &ModelParams,
    labeled: &Corpus,
    pseudo_labeled: &[(Document, usize)],
    config: &LexiconConfig,
) -> Result<Lexicon> {
    let pairs = labeled
        .examples
        .iter()
        .filter_map(|ex| ex.label.map(|l| (&ex.doc, l)))
        .chain(pseudo_labeled.iter().map(|(doc, label)| (doc, *label)));
    build_from_examples(model, pairs, labeled.num_classes, config)
}

/// Lexicon evidence for `class` in `doc`, counted per the lexicon's match
/// mode (occurrences by default).
pub fn match_count(lexicon: &Lexicon, class: usize, doc: &Document) -> usize {
    match lexicon.match_mode {
        MatchMode::Occurrences => doc
            .token_strings
            .iter()
            .filter(|w| lexicon.contains(class, w))
            .count(),
        MatchMode::DistinctWords => doc
            .token_strings
            .iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter(|w| lexicon.contains(class, w))
            .count(),
    }
}

/// The lexicon regulator: a candidate pseudo-label survives only when the
/// document carries at least `tau` lexicon words of its class.
pub fn regulate(lexicon: &Lexicon, candidate: (&Document, usize), tau: usize) -> bool {
    let (doc, class) = candidate;
    match_count(lexicon, class, doc) >= tau
}
