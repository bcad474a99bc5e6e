use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use super::vocab::Vocabulary;
use crate::error::{Error, Result};

/// A sentence is a list of word tokens.
pub type Sentence = Vec<String>;

pub fn parse_transcripts(text: &str) -> Vec<Sentence> {
    text.lines()
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect()
}

pub fn read_transcripts(path: &Path) -> Result<Vec<Sentence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_transcripts(&text))
}

pub fn transcripts_to_text(corpus: &[Sentence]) -> String {
    let mut s = String::new();
    for sent in corpus {
        s.push_str(&sent.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_transcripts(path: &Path, corpus: &[Sentence]) -> Result<()> {
    std::fs::write(path, transcripts_to_text(corpus)).map_err(|e| Error::io(path, e))
}

pub fn word_counts(corpus: &[Sentence]) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for w in corpus.iter().flatten() {
        *counts.entry(w.as_str()).or_insert(0) += 1;
    }
    counts
}

/// Word vocabulary of the words seen strictly more than `min_count` times,
/// in lexicographic order.
pub fn cut_vocabulary(transcripts: &[Sentence], min_count: usize) -> Result<Vocabulary> {
    let kept = word_counts(transcripts)
        .into_iter()
        .filter(|&(_, c)| c > min_count)
        .map(|(w, _)| w.to_string());
    Vocabulary::words(kept)
}

/// Percentage of running tokens not covered by `vocab`.
pub fn oov_rate(vocab: &Vocabulary, transcripts: &[Sentence]) -> Result<f64> {
    let total: usize = transcripts.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::UndefinedRate);
    }
    let missing = transcripts
        .iter()
        .flatten()
        .filter(|w| !vocab.contains_regular(w))
        .count();
    Ok(100.0 * missing as f64 / total as f64)
}

/// Partitions sentence indices into in-vocabulary and out-of-vocabulary
/// sentences. A sentence is in-vocabulary iff every token is covered.
pub fn split_ivs_oovs(vocab: &Vocabulary, transcripts: &[Sentence]) -> (Vec<usize>, Vec<usize>) {
    transcripts
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s.iter().all(|w| vocab.contains_regular(w))))
        .fold((Vec::new(), Vec::new()), |(mut ivs, mut oovs), (i, inside)| {
            if inside {
                ivs.push(i);
            } else {
                oovs.push(i);
            }
            (ivs, oovs)
        })
}

/// Appends every test-set word missing from `base`, in first-occurrence
/// order. Existing indices are unchanged.
pub fn extend_vocabulary(base: &Vocabulary, test: &[Sentence]) -> Result<Vocabulary> {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut units: Vec<String> = base.regular_units().to_vec();
    for w in test.iter().flatten() {
        if !base.contains(w) && seen.insert(w.as_str()) {
            units.push(w.clone());
        }
    }
    Vocabulary::words(units)
}
