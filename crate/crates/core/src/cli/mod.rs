//! Command-line front end: configuration, data formats, the toy corpus
//! generator and one command per workflow stage.

pub mod archive;
pub mod config;
pub mod toy;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::warn;
use serde_json::{json, Value};

use self::config::{P2wPhase, RunConfig};
use crate::error::{Error, Result};
use crate::eval::score_corpus;
use crate::lexicon::{read_transcripts, write_transcripts, Lexicon, Sentence, Vocabulary};
use crate::pipeline::{
    check_composition, decode_modular_words, extend_oov, finetune_p2w, init_p2w_tdi, train_a2p,
    CorpusBundle, ModelCheckpoint, TrainReport, TrainingLog, Utterance,
};
use crate::psd::{frame_retention_curve, retention_tsv};

#[derive(Debug, Parser)]
#[command(name = "modasr", version, about = "Modular A2P/P2W speech recognizer")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// key=value configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output path (directory for gen-corpus, file otherwise)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// key=value configuration override, repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus
    GenCorpus,
    /// Train the acoustic-to-phoneme network
    TrainA2p {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Initialize a phoneme-to-word network from text data
    InitP2w {
        #[arg(long)]
        corpus: PathBuf,
        /// Word vocabulary listing (default: corpus words.txt)
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Text sentences (default: corpus text.txt)
        #[arg(long)]
        text: Option<PathBuf>,
    },
    /// Fine-tune a phoneme-to-word network on A2P outputs
    FinetuneP2w {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        a2p: PathBuf,
        /// Text-initialized network; omitted means train from scratch
        #[arg(long)]
        p2w: Option<PathBuf>,
        /// Word vocabulary when training from scratch
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Decode a feature archive into word transcripts
    Decode {
        #[arg(long)]
        a2p: PathBuf,
        #[arg(long)]
        p2w: PathBuf,
        #[arg(long)]
        features: PathBuf,
    },
    /// Score hypotheses against references
    Eval {
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        hyps: PathBuf,
        /// Working vocabulary for the IVS/OOVS split
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Extend the P2W vocabulary with the words of extra text
    ExtendOov {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        a2p: PathBuf,
        #[arg(long)]
        p2w: PathBuf,
        #[arg(long)]
        text: PathBuf,
        /// direct, alternative or multimodal (default: oov.strategy)
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Kept-frame counts of blank removal over a range of thresholds
    PsdReport {
        #[arg(long)]
        a2p: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "3,8,15")]
        lambdas: String,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenCorpus => "gen-corpus",
            Command::TrainA2p { .. } => "train-a2p",
            Command::InitP2w { .. } => "init-p2w",
            Command::FinetuneP2w { .. } => "finetune-p2w",
            Command::Decode { .. } => "decode",
            Command::Eval { .. } => "eval",
            Command::ExtendOov { .. } => "extend-oov",
            Command::PsdReport { .. } => "psd-report",
        }
    }
}

/// Resolves the effective configuration: defaults, then the file, then
/// `--set` overrides, then `--seed`.
pub fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::read(p)?,
        None => RunConfig::default(),
    };
    for kv in &common.overrides {
        cfg.apply_override(kv)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

fn need_out(common: &Common) -> Result<&Path> {
    common
        .out
        .as_deref()
        .ok_or_else(|| Error::Config("--out is required".into()))
}

fn require_file(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn provenance(cfg: &RunConfig) -> Result<String> {
    Ok(format!("# seed={} config={}\n", cfg.seed()?, cfg.hash()))
}

fn pron_seed(dir: &Path) -> Result<u64> {
    let path = dir.join("manifest.txt");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .find_map(|l| l.strip_prefix("seed="))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::format("corpus manifest", "missing seed"))
}

fn read_split(dir: &Path, name: &str) -> Result<Vec<Utterance>> {
    let words = read_transcripts(&dir.join(format!("{name}.txt")))?;
    let feats = archive::read_archive(&dir.join(format!("{name}.feats")))?;
    if words.len() != feats.len() {
        return Err(Error::format(
            "corpus",
            format!("{name}: {} transcripts for {} feature sequences", words.len(), feats.len()),
        ));
    }
    Ok(feats
        .into_iter()
        .zip(words)
        .map(|((id, features), words)| Utterance { id, features, words })
        .collect())
}

/// Loads a corpus directory written by `gen-corpus` (or laid out alike).
pub fn load_bundle(dir: &Path, vocab: Option<&Path>, text: Option<&Path>) -> Result<CorpusBundle> {
    let phones = Vocabulary::read(&dir.join("phones.txt"))?;
    let lexicon = Lexicon::read(&dir.join("lexicon.txt"), Some(phones))?;
    let words = Vocabulary::read(&vocab.map_or_else(|| dir.join("words.txt"), Path::to_path_buf))?;
    let text = read_transcripts(&text.map_or_else(|| dir.join("text.txt"), Path::to_path_buf))?;
    let bundle = CorpusBundle {
        acoustic: read_split(dir, "train")?,
        dev: read_split(dir, "dev")?,
        text,
        lexicon,
        words,
        pron_seed: pron_seed(dir)?,
    };
    bundle.validate()?;
    Ok(bundle)
}

fn report_json(r: &TrainReport) -> Value {
    json!({
        "steps": r.steps,
        "epochs": r.epochs,
        "skipped": r.skipped,
        "initial_loss": r.initial_loss,
        "final_loss": r.final_loss,
        "dev_error": r.dev_error,
    })
}

fn save_model(ck: &ModelCheckpoint, log: &TrainingLog, out: &Path) -> Result<()> {
    ck.write(out)?;
    let mut log_path = out.as_os_str().to_owned();
    log_path.push(".log");
    log.append_to(Path::new(&log_path))
}

/// Runs one parsed command and returns its summary object.
pub fn execute(cli: &Cli) -> Result<Value> {
    let cfg = resolve_config(&cli.common)?;
    let out = need_out(&cli.common)?;
    let mut log = TrainingLog::default();
    let summary = match &cli.command {
        Command::GenCorpus => {
            let seed = cfg.seed()?;
            let corpus = toy::generate(&cfg.toy()?, seed)?;
            let manifest = format!("seed={seed}\nconfig={}\n{}", cfg.hash(), cfg.to_text());
            toy::write_corpus(&corpus, out, &manifest)?;
            json!({
                "words": corpus.words.len() - corpus.words.reserved_count(),
                "cut_words": corpus.cut_words.len() - corpus.cut_words.reserved_count(),
                "train": corpus.train.len(),
                "dev": corpus.dev.len(),
                "test": corpus.test.len(),
                "text": corpus.text.len(),
                "oov_words": corpus.oov_words.len(),
                "oov_text": corpus.oov_text.len(),
            })
        }
        Command::TrainA2p { corpus } => {
            let bundle = load_bundle(corpus, None, None)?;
            let (ck, report) = train_a2p(&bundle, &cfg.a2p()?, &mut log)?;
            save_model(&ck, &log, out)?;
            json!({"stage": ck.stage.as_str(), "report": report_json(&report)})
        }
        Command::InitP2w { corpus, vocab, text } => {
            let bundle = load_bundle(corpus, vocab.as_deref(), text.as_deref())?;
            let (ck, report) = init_p2w_tdi(&bundle, &cfg.p2w(P2wPhase::Tdi)?, &mut log)?;
            save_model(&ck, &log, out)?;
            json!({"stage": ck.stage.as_str(), "report": report_json(&report)})
        }
        Command::FinetuneP2w { corpus, a2p, p2w, vocab } => {
            let bundle = load_bundle(corpus, vocab.as_deref(), None)?;
            let a2p = ModelCheckpoint::read(a2p)?;
            let p2w = p2w.as_deref().map(ModelCheckpoint::read).transpose()?;
            let (ck, report) = finetune_p2w(p2w.as_ref(), &a2p, &bundle, &cfg.p2w(P2wPhase::Finetune)?, &mut log)?;
            save_model(&ck, &log, out)?;
            json!({"stage": ck.stage.as_str(), "tdi": ck.tdi, "report": report_json(&report)})
        }
        Command::Decode { a2p, p2w, features } => {
            let a2p = ModelCheckpoint::read(a2p)?;
            let p2w = ModelCheckpoint::read(p2w)?;
            let warnings = check_composition(&a2p, &p2w)?;
            for w in &warnings {
                warn!("{w}");
            }
            let utts = archive::read_archive(features)?;
            let mut hyps: Vec<Sentence> = Vec::with_capacity(utts.len());
            for (_, x) in &utts {
                hyps.push(decode_modular_words(&a2p, &p2w, x)?);
            }
            write_transcripts(out, &hyps)?;
            let mut meta = out.as_os_str().to_owned();
            meta.push(".meta");
            write_text(
                Path::new(&meta),
                &format!(
                    "{}# a2p={} p2w={}\n",
                    provenance(&cfg)?,
                    a2p.content_hash()?,
                    p2w.content_hash()?
                ),
            )?;
            json!({"utterances": hyps.len(), "p2w_stage": p2w.stage.as_str(), "warnings": warnings})
        }
        Command::Eval { refs, hyps, vocab } => {
            let r = read_transcripts(refs)?;
            let h = read_transcripts(hyps)?;
            let v = match vocab {
                Some(p) => Vocabulary::read(p)?,
                None => Vocabulary::words(
                    r.iter()
                        .flatten()
                        .cloned()
                        .collect::<std::collections::BTreeSet<String>>(),
                )?,
            };
            let report = score_corpus(&r, &h, &v)?;
            write_text(out, &format!("{}{}", provenance(&cfg)?, report.to_tsv()))?;
            eprint!("{}", report.to_table());
            json!({
                "wer": report.all.wer(),
                "ivs_wer": report.ivs.wer(),
                "oovs_wer": report.oovs.wer(),
                "ref_tokens": report.all.ref_tokens,
                "sentences": report.all.sentences,
            })
        }
        Command::ExtendOov { corpus, a2p, p2w, text, strategy } => {
            let a2p = ModelCheckpoint::read(a2p)?;
            let p2w = ModelCheckpoint::read(p2w)?;
            let bundle = load_bundle(corpus, None, None)?;
            let extra = read_transcripts(text)?;
            let strategy = match strategy {
                Some(s) => s.parse()?,
                None => cfg.oov_strategy()?,
            };
            let (ck, report) = extend_oov(&p2w, &a2p, strategy, &bundle, &extra, &cfg.p2w(P2wPhase::Oov)?, &mut log)?;
            save_model(&ck, &log, out)?;
            json!({
                "stage": ck.stage.as_str(),
                "strategy": strategy.to_string(),
                "words": ck.words.as_ref().map_or(0, Vocabulary::len),
                "report": report_json(&report),
            })
        }
        Command::PsdReport { a2p, features, lambdas } => {
            let a2p = ModelCheckpoint::read(a2p)?;
            require_file(features)?;
            let lambdas: Vec<f64> = lambdas
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad threshold `{s}`")))
                })
                .collect::<Result<_>>()?;
            let mut posts = Vec::new();
            for (_, x) in archive::read_archive(features)? {
                posts.push(crate::pipeline::decode::a2p_posteriors(&a2p, &x)?);
            }
            let rows = frame_retention_curve(&posts, &lambdas, cfg.psd()?.min_keep)?;
            write_text(out, &format!("{}{}", provenance(&cfg)?, retention_tsv(&rows)))?;
            json!({
                "lambdas": lambdas,
                "frames_kept": rows.iter().map(|r| r.frames_kept).collect::<Vec<_>>(),
                "total_frames": posts.iter().map(|p| p.frames()).sum::<usize>(),
            })
        }
    };
    Ok(json!({
        "command": cli.command.name(),
        "status": "ok",
        "seed": cfg.seed()?,
        "config": cfg.hash(),
        "out": out.display().to_string(),
        "summary": summary,
    }))
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code and the message to print: the JSON summary, the JSON
/// error object, or clap's usage text.
pub fn run<I, T>(args: I) -> (i32, String)
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            return (code, e.to_string());
        }
    };
    match execute(&cli) {
        Ok(summary) => (0, summary.to_string()),
        Err(e) => (
            e.exit_code(),
            json!({"command": cli.command.name(), "status": "error", "error": e.to_string()}).to_string(),
        ),
    }
}
