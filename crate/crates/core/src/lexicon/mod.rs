//! Vocabularies, the pronunciation dictionary, oracle phoneme generation and
//! vocabulary accounting over transcripts.

mod corpus;
mod dict;
mod vocab;

pub use corpus::{
    cut_vocabulary, extend_vocabulary, oov_rate, parse_transcripts, read_transcripts,
    split_ivs_oovs, transcripts_to_text, word_counts, write_transcripts, Sentence,
};
pub use dict::{one_hot_posteriors, Lexicon};
pub use vocab::{Vocabulary, BLANK, EOS, SOS, UNK};
