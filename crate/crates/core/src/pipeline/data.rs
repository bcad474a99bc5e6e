use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, Sentence, Vocabulary};
use crate::numeric::rng::derived;
use crate::numeric::Matrix;

/// Acoustic feature frames of one utterance, frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence(Matrix);

impl FeatureSequence {
    pub fn new(frames: Matrix) -> Result<Self> {
        if frames.rows() == 0 {
            return Err(Error::EmptyInput);
        }
        if !frames.is_finite() {
            return Err(Error::Numeric("feature frames contain non-finite values".into()));
        }
        Ok(FeatureSequence(frames))
    }

    pub fn frames(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// A feature sequence paired with its word transcript.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub features: FeatureSequence,
    pub words: Sentence,
}

/// Oracle phoneme sequence of an utterance. Polyphones are resolved by a
/// stream derived from the corpus seed and the utterance id, so the choice
/// is the same wherever the sequence is regenerated.
pub fn utterance_phones(lexicon: &Lexicon, pron_seed: u64, utt: &str, words: &[String]) -> Result<Vec<usize>> {
    lexicon.generate_phoneme_sequence(words, &mut derived(pron_seed, &format!("pron/{utt}")))
}

/// Everything the training stages read: acoustic pairs, held-out pairs,
/// text-only sentences, the lexicon and the word vocabulary.
#[derive(Clone, Debug)]
pub struct CorpusBundle {
    pub acoustic: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub text: Vec<Sentence>,
    pub lexicon: Lexicon,
    pub words: Vocabulary,
    pub pron_seed: u64,
}

impl CorpusBundle {
    pub fn phones(&self) -> &Vocabulary {
        self.lexicon.phones()
    }

    pub fn oracle_phones(&self, utt: &Utterance) -> Result<Vec<usize>> {
        utterance_phones(&self.lexicon, self.pron_seed, &utt.id, &utt.words)
    }

    /// Checks that every transcript word has a pronunciation (acoustic
    /// pairs) and that feature widths agree.
    pub fn validate(&self) -> Result<()> {
        let mut dim = None;
        for u in self.acoustic.iter().chain(&self.dev) {
            if let Some(w) = self.lexicon.first_gap(&u.words) {
                return Err(Error::LexiconGap(w));
            }
            match dim {
                None => dim = Some(u.features.dim()),
                Some(d) if d != u.features.dim() => {
                    return Err(Error::Dimension(format!(
                        "utterance {} has {} feature columns, expected {d}",
                        u.id,
                        u.features.dim()
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> Result<usize> {
        self.acoustic
            .first()
            .or(self.dev.first())
            .map(|u| u.features.dim())
            .ok_or(Error::EmptyInput)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_sequences_are_validated() {
        assert!(matches!(FeatureSequence::new(Matrix::zeros(0, 3)), Err(Error::EmptyInput)));
        let mut m = Matrix::zeros(2, 2);
        m.fill(f64::NAN);
        assert!(FeatureSequence::new(m).is_err());
        assert_eq!(FeatureSequence::new(Matrix::zeros(3, 2)).unwrap().frames(), 3);
    }

    #[test]
    fn oracle_phones_are_stable_per_utterance() {
        let lex = Lexicon::parse("w\ta b\nw\tb a\nv\tc\n").unwrap();
        let words: Sentence = ["w", "w", "v", "w"].iter().map(|s| s.to_string()).collect();
        let a = utterance_phones(&lex, 5, "u1", &words).unwrap();
        assert_eq!(a, utterance_phones(&lex, 5, "u1", &words).unwrap());
        assert_eq!(a.len(), 7);
        assert!(matches!(
            utterance_phones(&lex, 5, "u1", &["zz".to_string()]),
            Err(Error::LexiconGap(w)) if w == "zz"
        ));
    }
}
