//! Modular speech recognition: an acoustic-to-phoneme CTC network, a
//! phoneme-synchronous blank-removal layer and a phoneme-to-word network
//! (CTC or attention encoder-decoder) trained with text-only data, composed
//! at decode time into one acoustic-to-word recognizer.

pub mod cli;
pub mod ctc;
pub mod eval;
pub mod error;
pub mod lexicon;
pub mod numeric;
pub mod pipeline;
pub mod psd;
pub mod seq2seq;

pub use error::{Error, Result};
