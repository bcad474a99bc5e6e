//! Flat `key=value` run configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::toy::ToyConfig;
use crate::error::{Error, Result};
use crate::numeric::OptimizerKind;
use crate::pipeline::{A2pConfig, OovStrategy, P2wConfig, P2wVariant, TrainConfig};
use crate::psd::PsdConfig;

/// Every recognized key with its default value.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "1"),
    ("corpus.phones", "20"),
    ("corpus.words", "200"),
    ("corpus.min_word_len", "2"),
    ("corpus.max_word_len", "5"),
    ("corpus.polyphones", "10"),
    ("corpus.zipf", "1.0"),
    ("corpus.min_sentence", "3"),
    ("corpus.max_sentence", "12"),
    ("corpus.min_frames", "3"),
    ("corpus.max_frames", "8"),
    ("corpus.max_silence", "3"),
    ("corpus.noise", "0.3"),
    ("corpus.train", "300"),
    ("corpus.dev", "50"),
    ("corpus.test", "200"),
    ("corpus.text", "2000"),
    ("corpus.cut", "10"),
    ("corpus.min_occurrence", "5"),
    ("a2p.hidden", "48"),
    ("a2p.layers", "1"),
    ("a2p.epochs", "16"),
    ("a2p.batch", "8"),
    ("a2p.lr", "0.005"),
    ("p2w.variant", "ctc"),
    ("p2w.hidden", "64"),
    ("p2w.layers", "1"),
    ("p2w.dec_layers", "1"),
    ("p2w.dec_hidden", "64"),
    ("p2w.embed", "32"),
    ("p2w.attn", "32"),
    ("p2w.batch", "8"),
    ("p2w.lr", "0.003"),
    ("p2w.tdi_epochs", "6"),
    ("p2w.ft_epochs", "12"),
    ("p2w.max_steps", "0"),
    ("p2w.require_tdi", "false"),
    ("oov.strategy", "alternative"),
    ("oov.epochs", "12"),
    ("psd.lambda", "8"),
    ("psd.min_keep", "1"),
    ("train.optimizer", "adam"),
    ("train.clip", "5"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

/// Which P2W training phase a budget is read for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum P2wPhase {
    Tdi,
    Finetune,
    Oov,
}

impl RunConfig {
    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{kv}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .values
            .get(key)
            .ok_or_else(|| Error::Config(format!("unknown configuration key `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::Config(format!("`{key}` has invalid value `{raw}`")))
    }

    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// sha256 of the canonical `key=value` listing.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    pub fn psd(&self) -> Result<PsdConfig> {
        let lambda: f64 = self.get("psd.lambda")?;
        if !lambda.is_finite() {
            return Err(Error::Config("psd.lambda must be finite".into()));
        }
        PsdConfig::new(lambda, self.get("psd.min_keep")?)
    }

    pub fn toy(&self) -> Result<ToyConfig> {
        Ok(ToyConfig {
            phones: self.get("corpus.phones")?,
            words: self.get("corpus.words")?,
            min_word_len: self.get("corpus.min_word_len")?,
            max_word_len: self.get("corpus.max_word_len")?,
            polyphones: self.get("corpus.polyphones")?,
            zipf: self.get("corpus.zipf")?,
            min_sentence: self.get("corpus.min_sentence")?,
            max_sentence: self.get("corpus.max_sentence")?,
            min_frames: self.get("corpus.min_frames")?,
            max_frames: self.get("corpus.max_frames")?,
            max_silence: self.get("corpus.max_silence")?,
            noise: self.get("corpus.noise")?,
            train: self.get("corpus.train")?,
            dev: self.get("corpus.dev")?,
            test: self.get("corpus.test")?,
            text: self.get("corpus.text")?,
            cut: self.get("corpus.cut")?,
            min_occurrence: self.get("corpus.min_occurrence")?,
        })
    }

    fn train(&self, prefix: &str, epochs_key: &str, max_steps: Option<u64>) -> Result<TrainConfig> {
        Ok(TrainConfig {
            epochs: self.get(epochs_key)?,
            batch_size: self.get(&format!("{prefix}.batch"))?,
            lr: self.get(&format!("{prefix}.lr"))?,
            optimizer: self.get::<OptimizerKind>("train.optimizer")?,
            clip_norm: self.get("train.clip")?,
            max_steps,
        })
    }

    pub fn a2p(&self) -> Result<A2pConfig> {
        Ok(A2pConfig {
            hidden: self.get("a2p.hidden")?,
            layers: self.get("a2p.layers")?,
            train: self.train("a2p", "a2p.epochs", None)?,
            psd: self.psd()?,
            seed: self.seed()?,
            config_hash: self.hash(),
        })
    }

    pub fn p2w(&self, phase: P2wPhase) -> Result<P2wConfig> {
        let epochs_key = match phase {
            P2wPhase::Tdi => "p2w.tdi_epochs",
            P2wPhase::Finetune => "p2w.ft_epochs",
            P2wPhase::Oov => "oov.epochs",
        };
        let max_steps: u64 = self.get("p2w.max_steps")?;
        Ok(P2wConfig {
            variant: self.get::<P2wVariant>("p2w.variant")?,
            hidden: self.get("p2w.hidden")?,
            layers: self.get("p2w.layers")?,
            dec_layers: self.get("p2w.dec_layers")?,
            dec_hidden: self.get("p2w.dec_hidden")?,
            embed_dim: self.get("p2w.embed")?,
            attn_dim: self.get("p2w.attn")?,
            train: self.train("p2w", epochs_key, (max_steps > 0).then_some(max_steps))?,
            psd: self.psd()?,
            require_tdi: self.get("p2w.require_tdi")?,
            seed: self.seed()?,
            config_hash: self.hash(),
        })
    }

    pub fn oov_strategy(&self) -> Result<OovStrategy> {
        self.get("oov.strategy")
    }
}
