//! Recurrent cells, additive attention and the attention encoder-decoder.

mod attention;
mod linear;
mod lstm;
mod model;

pub use attention::{AdditiveAttention, AttentionStep};
pub use linear::{Embedding, Linear};
pub use lstm::{CellStep, Direction, LstmCell, RecurrentStack, SeqCache, StackCache};
pub use model::{DecoderState, EncoderRoute, EncoderStates, Seq2Seq, Seq2SeqConfig};
