use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const BLANK: &str = "<blank>";
pub const SOS: &str = "<sos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

const PHONEME_RESERVED: &[&str] = &[BLANK];
const WORD_RESERVED: &[&str] = &[BLANK, SOS, EOS, UNK];

/// Ordered unit inventory. Reserved symbols occupy the lowest indices:
/// phoneme vocabularies reserve only the blank, word vocabularies reserve
/// blank, sos, eos and unk in that order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    units: Vec<String>,
    index: HashMap<String, usize>,
    reserved: usize,
}

impl Vocabulary {
    pub fn phonemes<I, S>(units: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::build(PHONEME_RESERVED, units)
    }

    pub fn words<I, S>(units: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::build(WORD_RESERVED, units)
    }

    fn build<I, S>(reserved: &[&str], units: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = reserved.iter().map(|s| s.to_string()).collect();
        all.extend(units.into_iter().map(Into::into));
        let mut index = HashMap::with_capacity(all.len());
        for (i, u) in all.iter().enumerate() {
            if u.is_empty() || u.chars().any(char::is_whitespace) {
                return Err(Error::Vocabulary(format!("unit {i} `{u}` is empty or has whitespace")));
            }
            if index.insert(u.clone(), i).is_some() {
                return Err(Error::Vocabulary(format!("unit `{u}` appears more than once")));
            }
        }
        Ok(Vocabulary {
            units: all,
            index,
            reserved: reserved.len(),
        })
    }

    /// Parses a full unit list (reserved symbols included) as stored on disk.
    pub fn from_listing(units: Vec<String>) -> Result<Self> {
        let reserved = if units.get(1).map(String::as_str) == Some(SOS) {
            WORD_RESERVED
        } else {
            PHONEME_RESERVED
        };
        if units.len() < reserved.len()
            || units.iter().zip(reserved).any(|(u, r)| u != r)
        {
            return Err(Error::Vocabulary(format!(
                "listing must start with reserved symbols {reserved:?}"
            )));
        }
        Self::build(reserved, units.into_iter().skip(reserved.len()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_listing(text.lines().map(str::to_string).filter(|l| !l.is_empty()).collect())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for u in &self.units {
            s.push_str(u);
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn is_word_vocabulary(&self) -> bool {
        self.reserved == WORD_RESERVED.len()
    }

    pub fn id(&self, unit: &str) -> Option<usize> {
        self.index.get(unit).copied()
    }

    pub fn unit(&self, id: usize) -> &str {
        &self.units[id]
    }

    pub fn contains(&self, unit: &str) -> bool {
        self.index.contains_key(unit)
    }

    /// True for a non-reserved unit present in the vocabulary.
    pub fn contains_regular(&self, unit: &str) -> bool {
        self.id(unit).is_some_and(|i| i >= self.reserved)
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    /// Units after the reserved block.
    pub fn regular_units(&self) -> &[String] {
        &self.units[self.reserved..]
    }

    pub fn reserved_count(&self) -> usize {
        self.reserved
    }

    pub fn is_reserved(&self, id: usize) -> bool {
        id < self.reserved
    }

    pub fn blank(&self) -> usize {
        0
    }

    pub fn sos(&self) -> Option<usize> {
        self.is_word_vocabulary().then_some(1)
    }

    pub fn eos(&self) -> Option<usize> {
        self.is_word_vocabulary().then_some(2)
    }

    pub fn unk(&self) -> Option<usize> {
        self.is_word_vocabulary().then_some(3)
    }

    /// Maps words to indices; unknown words map to unk when the vocabulary
    /// has one.
    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<usize>> {
        words
            .iter()
            .map(|w| {
                let w = w.as_ref();
                match self.id(w) {
                    Some(i) if i >= self.reserved => Ok(i),
                    _ => self
                        .unk()
                        .ok_or_else(|| Error::Vocabulary(format!("unit `{w}` not in vocabulary"))),
                }
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.units[i].clone()).collect()
    }

    /// Content hash of the ordered unit list.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for u in &self.units {
            h.update(u.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}
