use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;

use super::vocab::Vocabulary;
use crate::ctc::PosteriorSequence;
use crate::error::{Error, Result};
use crate::numeric::rng::seeded;
use crate::numeric::Matrix;

/// Word to pronunciation dictionary. Repeated entries for a word are
/// alternative pronunciations (polyphones).
#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    phones: Vocabulary,
    entries: BTreeMap<String, Vec<Vec<usize>>>,
}

impl Lexicon {
    /// Parses `word<TAB>ph ph ...` lines. The phoneme inventory is the
    /// sorted set of symbols used.
    pub fn parse(text: &str) -> Result<Self> {
        let rows = parse_rows(text)?;
        let symbols: BTreeSet<&str> = rows
            .iter()
            .flat_map(|(_, p)| p.iter().map(String::as_str))
            .collect();
        let phones = Vocabulary::phonemes(symbols.iter().copied())?;
        Self::from_rows(phones, rows)
    }

    /// Parses against a fixed phoneme inventory.
    pub fn parse_with(text: &str, phones: Vocabulary) -> Result<Self> {
        Self::from_rows(phones, parse_rows(text)?)
    }

    pub fn read(path: &Path, phones: Option<Vocabulary>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match phones {
            Some(p) => Self::parse_with(&text, p),
            None => Self::parse(&text),
        }
    }

    fn from_rows(phones: Vocabulary, rows: Vec<(String, Vec<String>)>) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<Vec<usize>>> = BTreeMap::new();
        for (word, pron) in rows {
            let ids = pron
                .iter()
                .map(|p| match phones.id(p) {
                    Some(i) if !phones.is_reserved(i) => Ok(i),
                    _ => Err(Error::format("lexicon", format!("unknown phoneme `{p}` in `{word}`"))),
                })
                .collect::<Result<Vec<_>>>()?;
            let prons = entries.entry(word).or_default();
            if !prons.contains(&ids) {
                prons.push(ids);
            }
        }
        Ok(Lexicon { phones, entries })
    }

    pub fn phones(&self) -> &Vocabulary {
        &self.phones
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn pronunciations(&self, word: &str) -> Option<&[Vec<usize>]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (w, prons) in &self.entries {
            for p in prons {
                s.push_str(w);
                s.push('\t');
                let syms: Vec<&str> = p.iter().map(|&i| self.phones.unit(i)).collect();
                s.push_str(&syms.join(" "));
                s.push('\n');
            }
        }
        s
    }

    /// First word of `words` without a pronunciation, if any.
    pub fn first_gap<S: AsRef<str>>(&self, words: &[S]) -> Option<String> {
        words
            .iter()
            .find(|w| !self.contains(w.as_ref()))
            .map(|w| w.as_ref().to_string())
    }

    /// Concatenates one pronunciation per word. Each occurrence of a
    /// polyphone draws its pronunciation uniformly from `rng`.
    pub fn generate_phoneme_sequence<S: AsRef<str>>(
        &self,
        words: &[S],
        rng: &mut impl Rng,
    ) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for w in words {
            let w = w.as_ref();
            let prons = self
                .pronunciations(w)
                .ok_or_else(|| Error::LexiconGap(w.to_string()))?;
            let pick = if prons.len() == 1 {
                0
            } else {
                rng.random_range(0..prons.len())
            };
            out.extend_from_slice(&prons[pick]);
        }
        Ok(out)
    }

    pub fn generate_with_seed<S: AsRef<str>>(&self, words: &[S], seed: u64) -> Result<Vec<usize>> {
        self.generate_phoneme_sequence(words, &mut seeded(seed))
    }
}

fn parse_rows(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (word, pron) = line
            .split_once('\t')
            .ok_or_else(|| Error::format("lexicon", format!("line {}: missing tab", n + 1)))?;
        let pron: Vec<String> = pron.split_whitespace().map(String::from).collect();
        if word.is_empty() || pron.is_empty() {
            return Err(Error::format("lexicon", format!("line {}: empty field", n + 1)));
        }
        rows.push((word.to_string(), pron));
    }
    Ok(rows)
}

/// Indicator posteriors for a phoneme sequence: frame i puts all mass on
/// `p[i]`. No blank frames are emitted.
pub fn one_hot_posteriors(p: &[usize], vocab_size: usize) -> PosteriorSequence {
    let mut m = Matrix::filled(p.len(), vocab_size, f64::NEG_INFINITY);
    for (i, &ph) in p.iter().enumerate() {
        m[(i, ph)] = 0.0;
    }
    PosteriorSequence::from_log_probs_unchecked(m, 0)
}
