//! Dataset ingestion, tokenization, vocabulary construction, and few-shot
//! split sampling.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token string reserved for out-of-vocabulary words.
pub const UNK_TOKEN: &str = "<unk>";
/// Vocabulary id reserved for out-of-vocabulary words.
pub const UNK_ID: u32 = 0;

/// A tokenized text. `tokens` and `token_strings` always have equal length;
/// ids are `UNK_ID` until a vocabulary is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub raw_text: String,
    pub tokens: Vec<u32>,
    pub token_strings: Vec<String>,
}

impl Document {
    /// Tokenize `text`; all ids start as `UNK_ID`.
    pub fn from_text(text: &str) -> Self {
        let token_strings = tokenize(text);
        let tokens = vec![UNK_ID; token_strings.len()];
        Document {
            raw_text: text.to_string(),
            tokens,
            token_strings,
        }
    }

    /// Build directly from token strings (used by augmentation and the
    /// synthetic generator). `raw_text` is the space-joined form.
    pub fn from_token_strings(token_strings: Vec<String>, vocab: &Vocabulary) -> Self {
        let raw_text = token_strings.join(" ");
        let tokens = token_strings.iter().map(|w| vocab.id(w)).collect();
        Document {
            raw_text,
            tokens,
            token_strings,
        }
    }

    pub fn len(&self) -> usize {
        self.token_strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_strings.is_empty()
    }

    /// Re-map token ids through `vocab`, leaving strings untouched.
    pub fn apply_vocabulary(&mut self, vocab: &Vocabulary) {
        self.tokens = self.token_strings.iter().map(|w| vocab.id(w)).collect();
    }
}

/// A document with an optional class label. Labels are present for
/// labeled-source examples and absent for pool examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub doc: Document,
    pub label: Option<usize>,
}

/// A set of examples over a fixed class inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub examples: Vec<Example>,
    pub num_classes: usize,
    pub class_names: Vec<String>,
}

impl Corpus {
    pub fn new(examples: Vec<Example>, class_names: Vec<String>) -> Self {
        let num_classes = class_names.len();
        Corpus {
            examples,
            num_classes,
            class_names,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn apply_vocabulary(&mut self, vocab: &Vocabulary) {
        for ex in &mut self.examples {
            ex.doc.apply_vocabulary(vocab);
        }
    }
}

/// Lowercase and split on every non-alphanumeric boundary. Pure-numeric
/// tokens are dropped; punctuation never survives.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !t.chars().all(|c| c.is_numeric()))
        .map(|t| t.to_string())
        .collect()
}

/// Bijective word <-> id map with per-word corpus frequencies.
/// Id 0 is always the unknown token.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    word_to_id: HashMap<String, u32>,
    id_to_word: Vec<String>,
    counts: Vec<u64>,
}

impl Vocabulary {
    /// Id for `word`, or `UNK_ID` when absent.
    pub fn id(&self, word: &str) -> u32 {
        self.word_to_id.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.word_to_id.contains_key(word)
    }

    pub fn word(&self, id: u32) -> &str {
        &self.id_to_word[id as usize]
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    /// Number of entries including the unknown token.
    pub fn len(&self) -> usize {
        self.id_to_word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_word.len() <= 1
    }
}

/// Collect every word with total frequency >= `min_freq` across `corpora`.
/// Ids are assigned deterministically: frequency descending, then
/// lexicographic, with id 0 reserved for the unknown token.
pub fn build_vocabulary(corpora: &[&Corpus], min_freq: u64) -> Vocabulary {
    let mut freq: HashMap<String, u64> = HashMap::new();
    for corpus in corpora {
        for ex in &corpus.examples {
            for w in &ex.doc.token_strings {
                *freq.entry(w.clone()).or_insert(0) += 1;
            }
        }
    }
    let mut entries: Vec<(String, u64)> = freq
        .into_iter()
        .filter(|(_, c)| *c >= min_freq)
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let mut id_to_word = vec![UNK_TOKEN.to_string()];
    let mut counts = vec![0u64];
    let mut word_to_id = HashMap::new();
    word_to_id.insert(UNK_TOKEN.to_string(), UNK_ID);
    for (word, count) in entries {
        let id = id_to_word.len() as u32;
        word_to_id.insert(word.clone(), id);
        id_to_word.push(word);
        counts.push(count);
    }
    Vocabulary {
        word_to_id,
        id_to_word,
        counts,
    }
}

/// Source file format for [`load_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Jsonl,
    Csv,
}

/// Field names used when reading records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub text_field: String,
    pub label_field: String,
}

impl Default for DatasetSchema {
    fn default() -> Self {
        DatasetSchema {
            text_field: "text".to_string(),
            label_field: "label".to_string(),
        }
    }
}

/// Load a JSON Lines or CSV dataset. Class names are collected in
/// first-appearance order unless `class_list` fixes them up front, in which
/// case an unknown label is an error.
pub fn load_dataset(
    path: &Path,
    format: DatasetFormat,
    schema: &DatasetSchema,
    class_list: Option<&[String]>,
) -> Result<Corpus> {
    let path_str = path.display().to_string();
    let mut class_names: Vec<String> = class_list.map(|c| c.to_vec()).unwrap_or_default();
    let fixed_classes = class_list.is_some();
    let mut examples = Vec::new();

    let mut push_record = |text: &str, label: Option<&str>, line: usize| -> Result<()> {
        let label_idx = match label {
            Some(name) => match class_names.iter().position(|c| c == name) {
                Some(idx) => Some(idx),
                None if fixed_classes => {
                    return Err(Error::UnknownLabel {
                        label: name.to_string(),
                        line,
                    })
                }
                None => {
                    class_names.push(name.to_string());
                    Some(class_names.len() - 1)
                }
            },
            None => None,
        };
        examples.push(Example {
            doc: Document::from_text(text),
            label: label_idx,
        });
        Ok(())
    };

    match format {
        DatasetFormat::Jsonl => {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line_no = i + 1;
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let value: serde_json::Value =
                    serde_json::from_str(&line).map_err(|e| Error::Malformed {
                        path: path_str.clone(),
                        line: line_no,
                        message: e.to_string(),
                    })?;
                let text = value
                    .get(&schema.text_field)
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| Error::Malformed {
                        path: path_str.clone(),
                        line: line_no,
                        message: format!("missing text field `{}`", schema.text_field),
                    })?;
                // Labels may be strings or bare numbers/bools in the wild.
                let label = value.get(&schema.label_field).map(|v| match v.as_str() {
                    Some(s) => s.to_string(),
                    None => v.to_string(),
                });
                push_record(text, label.as_deref(), line_no)?;
            }
        }
        DatasetFormat::Csv => {
            let mut reader = csv::Reader::from_path(path)?;
            let headers = reader.headers()?.clone();
            let text_idx = headers
                .iter()
                .position(|h| h == schema.text_field)
                .ok_or_else(|| Error::Malformed {
                    path: path_str.clone(),
                    line: 1,
                    message: format!("missing text column `{}`", schema.text_field),
                })?;
            let label_idx = headers.iter().position(|h| h == schema.label_field);
            for (i, record) in reader.records().enumerate() {
                let line_no = i + 2; // header is line 1
                let record = record.map_err(|e| Error::Malformed {
                    path: path_str.clone(),
                    line: line_no,
                    message: e.to_string(),
                })?;
                let text = record.get(text_idx).ok_or_else(|| Error::Malformed {
                    path: path_str.clone(),
                    line: line_no,
                    message: "missing text column".to_string(),
                })?;
                let label = label_idx.and_then(|idx| record.get(idx)).and_then(|l| {
                    if l.is_empty() {
                        None
                    } else {
                        Some(l.to_string())
                    }
                });
                push_record(text, label.as_deref(), line_no)?;
            }
        }
    }

    if examples.is_empty() {
        return Err(Error::NoRecords(path_str));
    }
    Ok(Corpus::new(examples, class_names))
}

/// Result of [`sample_few_shot`]. `hidden_labels` aligns with
/// `unlabeled.examples` and is the evaluation-only ground truth.
#[derive(Debug, Clone)]
pub struct FewShotSplit {
    pub train: Corpus,
    pub dev: Corpus,
    pub unlabeled: Corpus,
    pub hidden_labels: Vec<Option<usize>>,
}

/// Draw `per_class` train and `per_class` dev examples per class (disjoint,
/// seeded); everything left over becomes the unlabeled pool with labels
/// stripped but retained on the side.
pub fn sample_few_shot(corpus: &Corpus, per_class: usize, seed: u64) -> Result<FewShotSplit> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); corpus.num_classes];
    for (i, ex) in corpus.examples.iter().enumerate() {
        if let Some(label) = ex.label {
            by_class[label].push(i);
        }
    }
    for (c, indices) in by_class.iter().enumerate() {
        if indices.len() < 2 * per_class {
            return Err(Error::InsufficientExamples {
                class: corpus.class_names[c].clone(),
                required: 2 * per_class,
                available: indices.len(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut dev_idx = Vec::new();
    let mut taken = vec![false; corpus.examples.len()];
    for indices in &mut by_class {
        indices.shuffle(&mut rng);
        for &i in &indices[..per_class] {
            train_idx.push(i);
            taken[i] = true;
        }
        for &i in &indices[per_class..2 * per_class] {
            dev_idx.push(i);
            taken[i] = true;
        }
    }

    let pick = |idx: &[usize]| -> Corpus {
        Corpus::new(
            idx.iter().map(|&i| corpus.examples[i].clone()).collect(),
            corpus.class_names.clone(),
        )
    };
    let train = pick(&train_idx);
    let dev = pick(&dev_idx);

    let mut pool = Vec::new();
    let mut hidden_labels = Vec::new();
    for (i, ex) in corpus.examples.iter().enumerate() {
        if !taken[i] {
            hidden_labels.push(ex.label);
            pool.push(Example {
                doc: ex.doc.clone(),
                label: None,
            });
        }
    }
    let unlabeled = Corpus::new(pool, corpus.class_names.clone());

    Ok(FewShotSplit {
        train,
        dev,
        unlabeled,
        hidden_labels,
    })
}
