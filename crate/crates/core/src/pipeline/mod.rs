//! The modular recognizer: acoustic-to-phoneme training, text-data
//! initialization and fine-tuning of the phoneme-to-word network, composed
//! decoding and vocabulary extension.

mod checkpoint;
mod data;
pub mod decode;
mod network;
mod train;

pub use checkpoint::{require_stage, ModelCheckpoint, PsdSettings, Stage};
pub use data::{utterance_phones, CorpusBundle, FeatureSequence, Utterance};
pub use decode::{check_composition, decode_modular, decode_modular_words};
pub use network::{Architecture, CtcNet, Network};
pub use train::{
    extend_oov, finetune_p2w, init_p2w_tdi, oracle_input_wer, phone_error_rate, train_a2p,
    A2pConfig, LogRow, OovStrategy, P2wConfig, P2wVariant, TrainConfig, TrainReport, TrainingLog,
};
