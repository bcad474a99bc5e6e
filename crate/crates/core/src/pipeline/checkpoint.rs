use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{Architecture, Network};
use crate::error::{Error, Result};
use crate::lexicon::Vocabulary;
use crate::numeric::{Matrix, ParamStore};
use crate::psd::PsdConfig;

const MAGIC: &[u8; 8] = b"MODASRCK";
const VERSION: u32 = 1;

/// Training stage of a checkpoint, in workflow order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "a2p")]
    A2p,
    #[serde(rename = "p2w-tdi")]
    P2wTdi,
    #[serde(rename = "p2w-finetuned")]
    P2wFinetuned,
    #[serde(rename = "p2w-oov-extended")]
    P2wOovExtended,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::A2p => "a2p",
            Stage::P2wTdi => "p2w-tdi",
            Stage::P2wFinetuned => "p2w-finetuned",
            Stage::P2wOovExtended => "p2w-oov-extended",
        }
    }

    pub fn is_p2w(self) -> bool {
        self != Stage::A2p
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Stage::A2p, Stage::P2wTdi, Stage::P2wFinetuned, Stage::P2wOovExtended]
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Errors unless `found` is one of `allowed`.
pub fn require_stage(found: Stage, allowed: &[Stage]) -> Result<()> {
    if allowed.contains(&found) {
        return Ok(());
    }
    let names: Vec<&str> = allowed.iter().map(|s| s.as_str()).collect();
    Err(Error::Stage {
        expected: names.join(" or "),
        found: found.to_string(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdSettings {
    pub lambda: f64,
    pub min_keep: usize,
}

impl From<PsdConfig> for PsdSettings {
    fn from(c: PsdConfig) -> Self {
        PsdSettings {
            lambda: c.lambda,
            min_keep: c.min_keep,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    stage: Stage,
    architecture: Architecture,
    phones: Vec<String>,
    phone_fingerprint: String,
    words: Option<Vec<String>>,
    word_fingerprint: Option<String>,
    psd: PsdSettings,
    tdi: bool,
    seed: u64,
    config_hash: String,
    steps: u64,
    params: Vec<ParamEntry>,
}

/// A trained network with the vocabularies and settings needed to use it.
#[derive(Clone, Debug)]
pub struct ModelCheckpoint {
    pub stage: Stage,
    pub phones: Vocabulary,
    /// Output vocabulary of a phoneme-to-word network.
    pub words: Option<Vocabulary>,
    pub psd: PsdConfig,
    /// Whether the network was initialized from text data.
    pub tdi: bool,
    pub seed: u64,
    pub config_hash: String,
    pub network: Network,
}

impl ModelCheckpoint {
    pub fn phone_fingerprint(&self) -> String {
        self.phones.fingerprint()
    }

    pub fn word_fingerprint(&self) -> Option<String> {
        self.words.as_ref().map(Vocabulary::fingerprint)
    }

    /// Output units as strings (word vocabulary for a P2W network, phoneme
    /// inventory otherwise).
    pub fn output_units(&self) -> &[String] {
        match &self.words {
            Some(w) => w.units(),
            None => self.phones.units(),
        }
    }

    /// sha256 of the serialized form.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let store = self.network.store();
        let header = Header {
            stage: self.stage,
            architecture: self.network.architecture(),
            phones: self.phones.units().to_vec(),
            phone_fingerprint: self.phone_fingerprint(),
            words: self.words.as_ref().map(|w| w.units().to_vec()),
            word_fingerprint: self.word_fingerprint(),
            psd: self.psd.into(),
            tdi: self.tdi,
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            steps: store.step_count(),
            params: store
                .ids()
                .map(|id| ParamEntry {
                    name: store.name(id).to_string(),
                    rows: store.value(id).rows(),
                    cols: store.value(id).cols(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::format("checkpoint", e.to_string()))?;
        let mut out = Vec::with_capacity(20 + json.len() + 8 * store.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for id in store.ids() {
            for v in store.value(id).data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |d: String| Error::format("checkpoint", d);
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic string".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < hlen {
            return Err(bad("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| bad(e.to_string()))?;
        let mut payload = body[hlen..].chunks_exact(8);
        if payload.remainder().len() != 0 {
            return Err(bad("payload is not a whole number of floats".into()));
        }
        let mut store = ParamStore::new();
        for entry in &header.params {
            let n = entry.rows * entry.cols;
            let data: Vec<f64> = payload
                .by_ref()
                .take(n)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            if data.len() != n {
                return Err(bad(format!("payload ends inside `{}`", entry.name)));
            }
            store.add(entry.name.clone(), Matrix::new(entry.rows, entry.cols, data)?)?;
        }
        if payload.next().is_some() {
            return Err(bad("trailing payload".into()));
        }
        store.set_step_count(header.steps);

        let phones = Vocabulary::from_listing(header.phones)?;
        if phones.fingerprint() != header.phone_fingerprint {
            return Err(bad("phoneme vocabulary does not match its fingerprint".into()));
        }
        let words = match header.words {
            Some(units) => {
                let v = Vocabulary::from_listing(units)?;
                if Some(v.fingerprint()) != header.word_fingerprint {
                    return Err(bad("word vocabulary does not match its fingerprint".into()));
                }
                Some(v)
            }
            None => None,
        };
        let psd = PsdConfig::new(header.psd.lambda, header.psd.min_keep)?;
        Ok(ModelCheckpoint {
            stage: header.stage,
            phones,
            words,
            psd,
            tdi: header.tdi,
            seed: header.seed,
            config_hash: header.config_hash,
            network: Network::from_parts(header.architecture, store)?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
