//! Composed acoustic-to-word decoding. Everything here is network
//! evaluation plus blank-frame removal; the only inputs are the two
//! checkpoints and the features.

use super::checkpoint::{require_stage, ModelCheckpoint, Stage};
use super::data::FeatureSequence;
use crate::ctc::PosteriorSequence;
use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::psd::{psd_downsample, PsdConfig};

/// Checks that the checkpoints can be chained. Returns warnings for
/// usable but unusual combinations.
pub fn check_composition(a2p: &ModelCheckpoint, p2w: &ModelCheckpoint) -> Result<Vec<String>> {
    require_stage(a2p.stage, &[Stage::A2p])?;
    require_stage(
        p2w.stage,
        &[Stage::P2wTdi, Stage::P2wFinetuned, Stage::P2wOovExtended],
    )?;
    if a2p.phone_fingerprint() != p2w.phone_fingerprint() {
        return Err(Error::Composition(format!(
            "A2P phonemes {} vs P2W phonemes {}",
            a2p.phone_fingerprint(),
            p2w.phone_fingerprint()
        )));
    }
    let mut warnings = Vec::new();
    if p2w.stage == Stage::P2wTdi {
        warnings.push("P2W network was never fine-tuned on A2P outputs".to_string());
    }
    Ok(warnings)
}

/// Phoneme posteriors from the acoustic model.
pub fn a2p_posteriors(a2p: &ModelCheckpoint, x: &FeatureSequence) -> Result<PosteriorSequence> {
    a2p.network.posteriors(x.matrix())
}

/// Network input for the phoneme-to-word model: the frames that survive
/// blank removal, as probabilities.
pub fn p2w_input(post: &PosteriorSequence, psd: &PsdConfig) -> Result<Matrix> {
    let (kept, _) = psd_downsample(post, psd)?;
    Ok(kept.probs())
}

/// Word ids from phoneme-level input.
pub fn p2w_decode(p2w: &ModelCheckpoint, input: &Matrix) -> Result<Vec<usize>> {
    p2w.network.decode(input, input.rows() + 1)
}

/// `P2W(PSD(A2P(x)))` with the P2W checkpoint's PSD settings.
pub fn decode_modular(a2p: &ModelCheckpoint, p2w: &ModelCheckpoint, x: &FeatureSequence) -> Result<Vec<usize>> {
    check_composition(a2p, p2w)?;
    let post = a2p_posteriors(a2p, x)?;
    let input = p2w_input(&post, &p2w.psd)?;
    p2w_decode(p2w, &input)
}

/// [`decode_modular`] rendered through the P2W output vocabulary.
pub fn decode_modular_words(
    a2p: &ModelCheckpoint,
    p2w: &ModelCheckpoint,
    x: &FeatureSequence,
) -> Result<Vec<String>> {
    let units = p2w.output_units();
    Ok(decode_modular(a2p, p2w, x)?
        .into_iter()
        .map(|id| units[id].clone())
        .collect())
}
