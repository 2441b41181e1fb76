//! Lexical knowledge base (synonym / hypernym / hyponym / antonym graph)
//! and label-preserving word-replacement augmentation.
//!
//! KB file format: UTF-8 TSV, one relation per line,
//! `word<TAB>relation<TAB>word`; `#`-prefixed lines are comments.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Vocabulary};
use crate::error::{Error, Result};

/// Relation kinds stored in the KB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Synonym,
    Hypernym,
    Hyponym,
    Antonym,
}

impl Relation {
    fn parse(tag: &str) -> Option<Relation> {
        match tag {
            "synonym" => Some(Relation::Synonym),
            "hypernym" => Some(Relation::Hypernym),
            "hyponym" => Some(Relation::Hyponym),
            "antonym" => Some(Relation::Antonym),
            _ => None,
        }
    }

    /// The relation materialized for the reversed pair.
    fn inverse(self) -> Relation {
        match self {
            Relation::Synonym => Relation::Synonym,
            Relation::Hypernym => Relation::Hyponym,
            Relation::Hyponym => Relation::Hypernym,
            Relation::Antonym => Relation::Antonym,
        }
    }
}

/// Replacement actions available to augmentation. Plain antonym replacement
/// would flip labels, so only the two-hop antonym-of-antonym is offered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReplaceAction {
    Synonym,
    Hypernym,
    Hyponym,
    AntonymOfAntonym,
}

impl ReplaceAction {
    pub const ALL: [ReplaceAction; 4] = [
        ReplaceAction::Synonym,
        ReplaceAction::Hypernym,
        ReplaceAction::Hyponym,
        ReplaceAction::AntonymOfAntonym,
    ];
}

/// Word-relation graph with symmetric antonym/synonym edges and
/// hypernym/hyponym inverses materialized at insertion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LexicalKB {
    relations: BTreeMap<String, BTreeMap<Relation, BTreeSet<String>>>,
}

impl LexicalKB {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of words with at least one relation.
    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// Insert one relation pair (casefolded); the inverse direction is
    /// stored as well. Self-loops are ignored.
    pub fn insert(&mut self, word: &str, relation: Relation, other: &str) {
        let a = word.to_lowercase();
        let b = other.to_lowercase();
        if a == b {
            return;
        }
        self.relations
            .entry(a.clone())
            .or_default()
            .entry(relation)
            .or_default()
            .insert(b.clone());
        self.relations
            .entry(b)
            .or_default()
            .entry(relation.inverse())
            .or_default()
            .insert(a);
    }

    fn related(&self, word: &str, relation: Relation) -> Option<&BTreeSet<String>> {
        self.relations.get(word).and_then(|m| m.get(&relation))
    }

    /// Replacement candidates for `word` under `action`. Never contains the
    /// word itself; unknown words yield the empty set.
    pub fn related_words(&self, word: &str, action: ReplaceAction) -> BTreeSet<String> {
        let direct = |rel: Relation| -> BTreeSet<String> {
            self.related(word, rel)
                .map(|s| s.iter().filter(|w| w.as_str() != word).cloned().collect())
                .unwrap_or_default()
        };
        match action {
            ReplaceAction::Synonym => direct(Relation::Synonym),
            ReplaceAction::Hypernym => direct(Relation::Hypernym),
            ReplaceAction::Hyponym => direct(Relation::Hyponym),
            ReplaceAction::AntonymOfAntonym => {
                let mut out = BTreeSet::new();
                if let Some(antonyms) = self.related(word, Relation::Antonym) {
                    for a in antonyms {
                        if let Some(back) = self.related(a, Relation::Antonym) {
                            out.extend(back.iter().cloned());
                        }
                    }
                }
                out.remove(word);
                out
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut lines = Vec::new();
        for (word, rels) in &self.relations {
            for (rel, others) in rels {
                let tag = match rel {
                    Relation::Synonym => "synonym",
                    Relation::Hypernym => "hypernym",
                    Relation::Hyponym => "hyponym",
                    Relation::Antonym => "antonym",
                };
                for other in others {
                    lines.push(format!("{word}\t{tag}\t{other}"));
                }
            }
        }
        std::fs::write(path, lines.join("\n") + "\n")?;
        Ok(())
    }
}

/// Parse a TSV knowledge base file.
pub fn load_kb(path: &Path) -> Result<LexicalKB> {
    let path_str = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut kb = LexicalKB::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Malformed {
                path: path_str.clone(),
                line: line_no,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let relation = Relation::parse(&fields[1].to_lowercase()).ok_or_else(|| Error::Malformed {
            path: path_str.clone(),
            line: line_no,
            message: format!("unknown relation tag `{}`", fields[1]),
        })?;
        kb.insert(fields[0], relation, fields[2]);
    }
    Ok(kb)
}

/// Augmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Fraction of eligible tokens replaced per copy, in (0, 1].
    pub replace_fraction: f64,
    pub copies_per_example: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            replace_fraction: 0.3,
            copies_per_example: 1,
            seed: 0,
        }
    }
}

/// Produce `copies_per_example` label-preserving copies of `doc`. Eligible
/// tokens (those with at least one non-empty action result) are sampled
/// without replacement; each replacement picks an action uniformly among
/// those with candidates, then a word uniformly within the action's set.
/// Replacement words absent from `vocab` map to the unknown id but keep
/// their surface string.
pub fn augment_example(
    kb: &LexicalKB,
    doc: &Document,
    label: usize,
    vocab: &Vocabulary,
    config: &AugmentConfig,
) -> Vec<(Document, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Candidates per position, computed once; actions keep their canonical
    // order so draws are reproducible.
    let options: Vec<Vec<(ReplaceAction, Vec<String>)>> = doc
        .token_strings
        .iter()
        .map(|word| {
            ReplaceAction::ALL
                .iter()
                .filter_map(|&action| {
                    let words: Vec<String> = kb.related_words(word, action).into_iter().collect();
                    (!words.is_empty()).then_some((action, words))
                })
                .collect()
        })
        .collect();
    let eligible: Vec<usize> = (0..doc.len()).filter(|&i| !options[i].is_empty()).collect();

    let mut out = Vec::with_capacity(config.copies_per_example);
    for _ in 0..config.copies_per_example {
        if eligible.is_empty() {
            out.push((doc.clone(), label));
            continue;
        }
        let k = ((config.replace_fraction * eligible.len() as f64).ceil() as usize)
            .clamp(1, eligible.len());
        let mut order = eligible.clone();
        order.shuffle(&mut rng);
        let mut picked: Vec<usize> = order.into_iter().take(k).collect();
        picked.sort_unstable();

        let mut token_strings = doc.token_strings.clone();
        for pos in picked {
            let actions = &options[pos];
            let (_, words) = &actions[rng.random_range(0..actions.len())];
            token_strings[pos] = words[rng.random_range(0..words.len())].clone();
        }
        out.push((Document::from_token_strings(token_strings, vocab), label));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, Corpus, Example, UNK_ID};
    use std::io::Write;

    fn kb_from(lines: &[(&str, Relation, &str)]) -> LexicalKB {
        let mut kb = LexicalKB::new();
        for (a, rel, b) in lines {
            kb.insert(a, *rel, b);
        }
        kb
    }

    #[test]
    fn load_kb_materializes_direct_and_inverse_edges() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment line").unwrap();
        writeln!(f, "good\tsynonym\tfine").unwrap();
        writeln!(f, "dog\thypernym\tanimal").unwrap();
        writeln!(f, "hot\tantonym\tcold").unwrap();
        let kb = load_kb(f.path()).unwrap();

        assert!(kb.related_words("good", ReplaceAction::Synonym).contains("fine"));
        assert!(kb.related_words("animal", ReplaceAction::Hyponym).contains("dog"));
        assert!(kb.related_words("dog", ReplaceAction::Hypernym).contains("animal"));
        assert!(kb.related("cold", Relation::Antonym).unwrap().contains("hot"));
    }

    #[test]
    fn load_kb_rejects_malformed_lines_with_numbers() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "good\tsynonym\tfine").unwrap();
        writeln!(f, "broken line without tabs").unwrap();
        let err = load_kb(f.path()).unwrap_err();
        match err {
            Error::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_kb_rejects_unknown_relation_tags() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "good\tmeronym\tfine").unwrap();
        let err = load_kb(f.path()).unwrap_err();
        assert!(err.to_string().contains("meronym"));
    }

    #[test]
    fn kb_casefolds_words() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "Good\tsynonym\tFINE").unwrap();
        let kb = load_kb(f.path()).unwrap();
        assert!(kb.related_words("good", ReplaceAction::Synonym).contains("fine"));
    }

    #[test]
    fn antonym_of_antonym_two_hop_excludes_self() {
        let kb = kb_from(&[
            ("good", Relation::Antonym, "bad"),
            ("bad", Relation::Antonym, "poorquality"),
        ]);
        let aoa = kb.related_words("good", ReplaceAction::AntonymOfAntonym);
        assert!(aoa.contains("poorquality"));
        assert!(!aoa.contains("good"));
    }

    #[test]
    fn unknown_word_has_no_relations() {
        let kb = kb_from(&[("good", Relation::Synonym, "fine")]);
        assert!(kb.related_words("absent", ReplaceAction::Synonym).is_empty());
        assert!(kb
            .related_words("absent", ReplaceAction::AntonymOfAntonym)
            .is_empty());
    }

    #[test]
    fn self_loops_are_ignored() {
        let kb = kb_from(&[("word", Relation::Synonym, "word")]);
        assert!(kb.related_words("word", ReplaceAction::Synonym).is_empty());
        let kb = kb_from(&[("word", Relation::Antonym, "WORD")]);
        assert!(kb.is_empty());
    }

    #[test]
    fn kb_round_trips_through_save_and_load() {
        let kb = kb_from(&[
            ("good", Relation::Synonym, "fine"),
            ("dog", Relation::Hypernym, "animal"),
            ("hot", Relation::Antonym, "cold"),
        ]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.tsv");
        kb.save(&path).unwrap();
        let loaded = load_kb(&path).unwrap();
        assert_eq!(kb, loaded);
    }

    fn doc_and_vocab(text: &str) -> (Document, Vocabulary) {
        let corpus = Corpus::new(
            vec![Example {
                doc: Document::from_text(text),
                label: Some(0),
            }],
            vec!["only".to_string()],
        );
        let vocab = build_vocabulary(&[&corpus], 1);
        let mut doc = Document::from_text(text);
        doc.apply_vocabulary(&vocab);
        (doc, vocab)
    }

    #[test]
    fn single_eligible_token_is_replaced() {
        let kb = kb_from(&[("great", Relation::Synonym, "superb")]);
        let (doc, vocab) = doc_and_vocab("great film");
        let cfg = AugmentConfig {
            replace_fraction: 1.0,
            copies_per_example: 1,
            seed: 4,
        };
        let out = augment_example(&kb, &doc, 0, &vocab, &cfg);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0.token_strings, ["superb", "film"]);
        assert_eq!(out[0].1, 0);
        // "superb" is not in the corpus vocabulary -> unknown id, string kept
        assert_eq!(out[0].0.tokens[0], UNK_ID);
        assert_ne!(out[0].0.tokens[1], UNK_ID);
    }

    #[test]
    fn doc_without_kb_words_passes_through() {
        let kb = kb_from(&[("unrelated", Relation::Synonym, "other")]);
        let (doc, vocab) = doc_and_vocab("plain boring text");
        let cfg = AugmentConfig {
            replace_fraction: 0.5,
            copies_per_example: 3,
            seed: 0,
        };
        let out = augment_example(&kb, &doc, 1, &vocab, &cfg);
        assert_eq!(out.len(), 3);
        for (aug, label) in out {
            assert_eq!(aug.token_strings, doc.token_strings);
            assert_eq!(label, 1);
        }
    }

    #[test]
    fn augmentation_is_deterministic_given_seed() {
        let kb = kb_from(&[
            ("great", Relation::Synonym, "superb"),
            ("great", Relation::Synonym, "fine"),
            ("film", Relation::Hypernym, "work"),
        ]);
        let (doc, vocab) = doc_and_vocab("great film great");
        let cfg = AugmentConfig {
            replace_fraction: 0.7,
            copies_per_example: 2,
            seed: 31,
        };
        let a = augment_example(&kb, &doc, 0, &vocab, &cfg);
        let b = augment_example(&kb, &doc, 0, &vocab, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn available_actions_are_chosen_uniformly() {
        // "great" has synonym and antonym-of-antonym options only; over 1000
        // seeds each action should land near 500.
        let kb = kb_from(&[
            ("great", Relation::Synonym, "superb"),
            ("great", Relation::Synonym, "fine"),
            ("great", Relation::Antonym, "awful"),
            ("awful", Relation::Antonym, "wonderful"),
            ("awful", Relation::Antonym, "splendid"),
        ]);
        let (doc, vocab) = doc_and_vocab("great");
        let synonyms = ["superb", "fine"];
        let aoa = ["wonderful", "splendid"];
        let mut syn_count = 0;
        let mut aoa_count = 0;
        for seed in 0..1000 {
            let cfg = AugmentConfig {
                replace_fraction: 1.0,
                copies_per_example: 1,
                seed,
            };
            let out = augment_example(&kb, &doc, 0, &vocab, &cfg);
            let word = out[0].0.token_strings[0].as_str();
            if synonyms.contains(&word) {
                syn_count += 1;
            } else if aoa.contains(&word) {
                aoa_count += 1;
            } else {
                panic!("replacement `{word}` not traceable to the KB");
            }
        }
        assert_eq!(syn_count + aoa_count, 1000);
        assert!((450..=550).contains(&syn_count), "synonym draws: {syn_count}");
        assert!((450..=550).contains(&aoa_count), "aoa draws: {aoa_count}");
    }

    #[test]
    fn length_and_label_preserved_with_traceable_replacements() {
        let kb = kb_from(&[
            ("good", Relation::Synonym, "fine"),
            ("good", Relation::Antonym, "bad"),
            ("bad", Relation::Antonym, "greatvalue"),
            ("movie", Relation::Hypernym, "show"),
            ("movie", Relation::Hyponym, "documentary"),
        ]);
        let (doc, vocab) = doc_and_vocab("good movie good plot");
        for seed in 0..50 {
            let cfg = AugmentConfig {
                replace_fraction: 0.6,
                copies_per_example: 2,
                seed,
            };
            for (aug, label) in augment_example(&kb, &doc, 1, &vocab, &cfg) {
                assert_eq!(label, 1);
                assert_eq!(aug.len(), doc.len());
                for (i, word) in aug.token_strings.iter().enumerate() {
                    if word != &doc.token_strings[i] {
                        let original = &doc.token_strings[i];
                        let reachable = ReplaceAction::ALL
                            .iter()
                            .any(|&a| kb.related_words(original, a).contains(word));
                        assert!(reachable, "{original} -> {word} not in KB");
                    }
                }
            }
        }
    }
}
