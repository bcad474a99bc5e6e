use std::fmt;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use rand::seq::SliceRandom;

use super::checkpoint::{require_stage, ModelCheckpoint, Stage};
use super::data::{CorpusBundle, Utterance};
use super::decode::{a2p_posteriors, check_composition, p2w_input};
use super::network::{Architecture, Network};
use crate::ctc::min_frames;
use crate::error::{Error, Result};
use crate::eval::edit_distance;
use crate::lexicon::{extend_vocabulary, one_hot_posteriors, Lexicon, Sentence, Vocabulary};
use crate::numeric::rng::{derived, Rng64};
use crate::numeric::{Matrix, Optimizer, OptimizerKind};
use crate::psd::PsdConfig;
use crate::seq2seq::{EncoderRoute, Seq2SeqConfig};

/// Optimization budget shared by every training stage.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    /// Stops training after this many optimizer steps.
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 8,
            lr: 2e-3,
            optimizer: OptimizerKind::Adam,
            clip_norm: 5.0,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} is not positive", self.lr)));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct A2pConfig {
    pub hidden: usize,
    pub layers: usize,
    pub train: TrainConfig,
    pub psd: PsdConfig,
    pub seed: u64,
    pub config_hash: String,
}

impl Default for A2pConfig {
    fn default() -> Self {
        A2pConfig {
            hidden: 32,
            layers: 1,
            train: TrainConfig::default(),
            psd: PsdConfig::default(),
            seed: 1,
            config_hash: String::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum P2wVariant {
    Ctc,
    S2s,
}

impl FromStr for P2wVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ctc" => Ok(P2wVariant::Ctc),
            "s2s" => Ok(P2wVariant::S2s),
            other => Err(Error::Config(format!("unknown P2W variant `{other}`"))),
        }
    }
}

impl fmt::Display for P2wVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            P2wVariant::Ctc => "ctc",
            P2wVariant::S2s => "s2s",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct P2wConfig {
    pub variant: P2wVariant,
    /// Encoder width and depth (both variants).
    pub hidden: usize,
    pub layers: usize,
    pub dec_layers: usize,
    pub dec_hidden: usize,
    pub embed_dim: usize,
    pub attn_dim: usize,
    pub train: TrainConfig,
    pub psd: PsdConfig,
    /// Fine-tuning refuses a network that was not initialized from text.
    pub require_tdi: bool,
    pub seed: u64,
    pub config_hash: String,
}

impl Default for P2wConfig {
    fn default() -> Self {
        P2wConfig {
            variant: P2wVariant::Ctc,
            hidden: 64,
            layers: 1,
            dec_layers: 1,
            dec_hidden: 64,
            embed_dim: 32,
            attn_dim: 32,
            train: TrainConfig::default(),
            psd: PsdConfig::default(),
            require_tdi: false,
            seed: 1,
            config_hash: String::new(),
        }
    }
}

impl P2wConfig {
    fn architecture(&self, phones: usize, words: usize) -> Architecture {
        match self.variant {
            P2wVariant::Ctc => Architecture::Ctc {
                input_dim: phones,
                hidden: self.hidden,
                layers: self.layers,
                output_dim: words,
            },
            P2wVariant::S2s => Architecture::S2s {
                config: Seq2SeqConfig {
                    input_dim: phones,
                    vocab_size: words,
                    enc_layers: self.layers,
                    enc_hidden: self.hidden,
                    dec_layers: self.dec_layers,
                    dec_hidden: self.dec_hidden,
                    embed_dim: self.embed_dim,
                    attn_dim: self.attn_dim,
                },
                aux_encoder: false,
            },
        }
    }
}

/// Vocabulary-extension retraining schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OovStrategy {
    /// Fine-tune on the extra text only.
    Direct,
    /// Alternate whole epochs: acoustic data, extra text, acoustic data, ...
    Alternative,
    /// Extra text goes through a second encoder; attention decoder only.
    Multimodal,
}

impl FromStr for OovStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(OovStrategy::Direct),
            "alternative" => Ok(OovStrategy::Alternative),
            "multimodal" => Ok(OovStrategy::Multimodal),
            other => Err(Error::Config(format!("unknown OOV strategy `{other}`"))),
        }
    }
}

impl fmt::Display for OovStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OovStrategy::Direct => "direct",
            OovStrategy::Alternative => "alternative",
            OovStrategy::Multimodal => "multimodal",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

/// Per-epoch training metrics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn push(&mut self, epoch: usize, split: &str, metric: &str, value: f64) {
        info!("epoch {epoch} {split} {metric} {value:.4}");
        self.rows.push(LogRow {
            epoch,
            split: split.to_string(),
            metric: metric.to_string(),
            value,
        });
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    /// Last value recorded for `split`/`metric`.
    pub fn last(&self, split: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .rev()
            .find(|r| r.split == split && r.metric == metric)
            .map(|r| r.value)
    }

    /// `epoch<TAB>split<TAB>metric<TAB>value` lines.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let _ = writeln!(s, "{}\t{}\t{}\t{:.6}", r.epoch, r.split, r.metric, r.value);
        }
        s
    }

    pub fn append_to(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_tsv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Summary of one training call.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub steps: u64,
    pub epochs: usize,
    /// Examples dropped because their CTC target cannot fit the input.
    pub skipped: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Phoneme error rate (A2P) or word error rate (P2W) on held-out data.
    pub dev_error: Option<f64>,
}

struct Sample {
    input: Matrix,
    target: Vec<usize>,
    route: EncoderRoute,
}

struct Trainer {
    opt: Optimizer,
    cfg: TrainConfig,
    steps: u64,
    order_rng: Rng64,
}

impl Trainer {
    fn new(cfg: &TrainConfig, order_rng: Rng64) -> Result<Self> {
        cfg.validate()?;
        Ok(Trainer {
            opt: Optimizer::new(cfg.optimizer, cfg.lr),
            cfg: cfg.clone(),
            steps: 0,
            order_rng,
        })
    }

    fn exhausted(&self) -> bool {
        self.cfg.max_steps.is_some_and(|m| self.steps >= m)
    }

    /// One shuffled pass; returns the mean per-example loss of the
    /// examples visited.
    fn epoch(&mut self, net: &mut Network, samples: &[&Sample]) -> Result<f64> {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut self.order_rng);
        let (mut total, mut seen) = (0.0, 0usize);
        for batch in order.chunks(self.cfg.batch_size) {
            if self.exhausted() {
                break;
            }
            net.store_mut().zero_grads();
            for &i in batch {
                let s = &samples[i];
                total += net.loss_and_backward(&s.input, &s.target, s.route)?;
            }
            seen += batch.len();
            let store = net.store_mut();
            store.scale_grads(1.0 / batch.len() as f64);
            store.clip_grad_norm(self.cfg.clip_norm);
            self.opt.step(store)?;
            self.steps += 1;
        }
        Ok(if seen == 0 { f64::NAN } else { total / seen as f64 })
    }
}

fn mean_loss(net: &Network, samples: &[&Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for s in samples {
        total += net.loss(&s.input, &s.target, s.route)?;
    }
    Ok(total / samples.len() as f64)
}

fn fits(net: &Network, frames: usize, target: &[usize]) -> bool {
    if net.is_ctc() {
        frames >= min_frames(target)
    } else {
        !target.is_empty()
    }
}

/// Percentage edit distance between decoded and reference unit sequences.
fn error_rate(pairs: impl Iterator<Item = (Vec<usize>, Vec<usize>)>) -> f64 {
    let (mut errors, mut tokens) = (0usize, 0usize);
    for (reference, hyp) in pairs {
        errors += edit_distance(&reference, &hyp).total();
        tokens += reference.len();
    }
    if tokens == 0 {
        0.0
    } else {
        100.0 * errors as f64 / tokens as f64
    }
}

fn decode_error(net: &Network, samples: &[Sample]) -> Result<f64> {
    let mut pairs = Vec::with_capacity(samples.len());
    for s in samples {
        pairs.push((s.target.clone(), net.decode(&s.input, s.input.rows() + 1)?));
    }
    Ok(error_rate(pairs.into_iter()))
}

/// Phoneme error rate of an acoustic model on utterances with oracle
/// phoneme references.
pub fn phone_error_rate(a2p: &ModelCheckpoint, bundle: &CorpusBundle, utts: &[Utterance]) -> Result<f64> {
    let mut pairs = Vec::with_capacity(utts.len());
    for u in utts {
        let reference = bundle.oracle_phones(u)?;
        pairs.push((reference, a2p.network.decode(u.features.matrix(), 0)?));
    }
    Ok(error_rate(pairs.into_iter()))
}

/// Word error rate of a P2W network fed oracle one-hot phoneme sequences.
pub fn oracle_input_wer(p2w: &ModelCheckpoint, bundle: &CorpusBundle, utts: &[Utterance]) -> Result<f64> {
    let words = p2w_words(p2w)?;
    let samples = oracle_utterance_samples(bundle, utts, words, p2w.phones.len())?;
    decode_error(&p2w.network, &samples)
}

fn p2w_words(ck: &ModelCheckpoint) -> Result<&Vocabulary> {
    ck.words.as_ref().ok_or_else(|| Error::Stage {
        expected: "a phoneme-to-word checkpoint".into(),
        found: ck.stage.to_string(),
    })
}

fn oracle_input(phones: &[usize], dim: usize) -> Matrix {
    one_hot_posteriors(phones, dim).probs()
}

fn oracle_utterance_samples(
    bundle: &CorpusBundle,
    utts: &[Utterance],
    words: &Vocabulary,
    dim: usize,
) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(utts.len());
    for u in utts {
        let phones = bundle.oracle_phones(u)?;
        if phones.is_empty() {
            continue;
        }
        out.push(Sample {
            input: oracle_input(&phones, dim),
            target: words.encode(&u.words)?,
            route: EncoderRoute::Primary,
        });
    }
    Ok(out)
}

/// Oracle-input samples from text; polyphones are drawn from `rng`.
fn text_samples(
    net: &Network,
    text: &[Sentence],
    lexicon: &Lexicon,
    words: &Vocabulary,
    rng: &mut Rng64,
    route: EncoderRoute,
) -> Result<(Vec<Sample>, usize)> {
    let dim = lexicon.phones().len();
    let mut out = Vec::with_capacity(text.len());
    let mut skipped = 0;
    for sent in text {
        if sent.is_empty() {
            continue;
        }
        let phones = lexicon.generate_phoneme_sequence(sent, rng)?;
        let target = words.encode(sent)?;
        if !fits(net, phones.len(), &target) {
            skipped += 1;
            continue;
        }
        out.push(Sample {
            input: oracle_input(&phones, dim),
            target,
            route,
        });
    }
    Ok((out, skipped))
}

/// PSD-filtered A2P posteriors paired with word targets.
fn posterior_samples(
    net: &Network,
    a2p: &ModelCheckpoint,
    utts: &[Utterance],
    words: &Vocabulary,
    psd: &PsdConfig,
) -> Result<(Vec<Sample>, usize)> {
    let mut out = Vec::with_capacity(utts.len());
    let mut skipped = 0;
    for u in utts {
        if u.words.is_empty() {
            continue;
        }
        let input = p2w_input(&a2p_posteriors(a2p, &u.features)?, psd)?;
        let target = words.encode(&u.words)?;
        if !fits(net, input.rows(), &target) {
            skipped += 1;
            continue;
        }
        out.push(Sample {
            input,
            target,
            route: EncoderRoute::Primary,
        });
    }
    Ok((out, skipped))
}

fn check_lexicon(lexicon: &Lexicon, text: &[Sentence]) -> Result<()> {
    for sent in text {
        if let Some(w) = lexicon.first_gap(sent) {
            return Err(Error::LexiconGap(w));
        }
    }
    Ok(())
}

/// Trains the acoustic-to-phoneme network with CTC on oracle phoneme
/// targets.
pub fn train_a2p(bundle: &CorpusBundle, cfg: &A2pConfig, log: &mut TrainingLog) -> Result<(ModelCheckpoint, TrainReport)> {
    bundle.validate()?;
    let phones = bundle.phones().clone();
    let arch = Architecture::Ctc {
        input_dim: bundle.feature_dim()?,
        hidden: cfg.hidden,
        layers: cfg.layers,
        output_dim: phones.len(),
    };
    let mut net = Network::build(arch, &mut derived(cfg.seed, "a2p/init"))?;
    let mut samples = Vec::with_capacity(bundle.acoustic.len());
    let mut skipped = 0;
    for u in &bundle.acoustic {
        let target = bundle.oracle_phones(u)?;
        if u.features.frames() < min_frames(&target) {
            skipped += 1;
            continue;
        }
        samples.push(Sample {
            input: u.features.matrix().clone(),
            target,
            route: EncoderRoute::Primary,
        });
    }
    if skipped > 0 {
        warn!("skipped {skipped} utterances shorter than their phoneme targets");
    }
    let samples: Vec<&Sample> = samples.iter().collect();
    let mut trainer = Trainer::new(&cfg.train, derived(cfg.seed, "a2p/order"))?;
    let mut report = TrainReport {
        skipped,
        initial_loss: mean_loss(&net, &samples)?,
        ..TrainReport::default()
    };
    log.push(0, "train", "loss", report.initial_loss);
    let mut ck = ModelCheckpoint {
        stage: Stage::A2p,
        phones,
        words: None,
        psd: cfg.psd,
        tdi: false,
        seed: cfg.seed,
        config_hash: cfg.config_hash.clone(),
        network: net.clone(),
    };
    for epoch in 1..=cfg.train.epochs {
        if trainer.exhausted() {
            break;
        }
        report.final_loss = trainer.epoch(&mut net, &samples)?;
        report.epochs = epoch;
        log.push(epoch, "train", "loss", report.final_loss);
        if !bundle.dev.is_empty() {
            ck.network = net.clone();
            let per = phone_error_rate(&ck, bundle, &bundle.dev)?;
            log.push(epoch, "dev", "per", per);
            report.dev_error = Some(per);
        }
    }
    report.steps = trainer.steps;
    ck.network = net;
    Ok((ck, report))
}

/// Trains for `epochs` passes over `fixed` plus whatever `regen`
/// produces for that epoch.
#[allow(clippy::too_many_arguments)]
fn run_epochs(
    net: &mut Network,
    trainer: &mut Trainer,
    epochs: usize,
    log: &mut TrainingLog,
    fixed: &[Sample],
    mut regen: impl FnMut(&Network) -> Result<Vec<Sample>>,
    mut dev: impl FnMut(&Network) -> Result<Option<f64>>,
    report: &mut TrainReport,
) -> Result<()> {
    for epoch in 1..=epochs {
        if trainer.exhausted() {
            break;
        }
        let fresh = regen(net)?;
        let samples: Vec<&Sample> = fixed.iter().chain(&fresh).collect();
        if epoch == 1 {
            report.initial_loss = mean_loss(net, &samples)?;
            log.push(0, "train", "loss", report.initial_loss);
        }
        report.final_loss = trainer.epoch(net, &samples)?;
        report.epochs = epoch;
        log.push(epoch, "train", "loss", report.final_loss);
        if let Some(err) = dev(net)? {
            log.push(epoch, "dev", "wer", err);
            report.dev_error = Some(err);
        }
    }
    report.steps = trainer.steps;
    Ok(())
}

/// Text data initialization: trains a fresh P2W network on oracle one-hot
/// phoneme sequences generated from `bundle.text` through the lexicon.
pub fn init_p2w_tdi(bundle: &CorpusBundle, cfg: &P2wConfig, log: &mut TrainingLog) -> Result<(ModelCheckpoint, TrainReport)> {
    check_lexicon(&bundle.lexicon, &bundle.text)?;
    let phones = bundle.phones().clone();
    let words = bundle.words.clone();
    let mut net = Network::build(
        cfg.architecture(phones.len(), words.len()),
        &mut derived(cfg.seed, "p2w/init"),
    )?;
    let mut trainer = Trainer::new(&cfg.train, derived(cfg.seed, "tdi/order"))?;
    let mut pron_rng = derived(cfg.seed, "tdi/pron");
    let dev = oracle_utterance_samples(bundle, &bundle.dev, &words, phones.len())?;
    let mut report = TrainReport::default();
    let mut skipped = 0;
    run_epochs(
        &mut net,
        &mut trainer,
        cfg.train.epochs,
        log,
        &[],
        |net| {
            let (s, k) = text_samples(net, &bundle.text, &bundle.lexicon, &words, &mut pron_rng, EncoderRoute::Primary)?;
            skipped = k;
            Ok(s)
        },
        |net| {
            if dev.is_empty() {
                Ok(None)
            } else {
                decode_error(net, &dev).map(Some)
            }
        },
        &mut report,
    )?;
    report.skipped = skipped;
    Ok((
        ModelCheckpoint {
            stage: Stage::P2wTdi,
            phones,
            words: Some(words),
            psd: cfg.psd,
            tdi: true,
            seed: cfg.seed,
            config_hash: cfg.config_hash.clone(),
            network: net,
        },
        report,
    ))
}

fn dev_wer(
    net: &Network,
    a2p: &ModelCheckpoint,
    utts: &[Utterance],
    words: &Vocabulary,
    psd: &PsdConfig,
) -> Result<Option<f64>> {
    if utts.is_empty() {
        return Ok(None);
    }
    let mut pairs = Vec::with_capacity(utts.len());
    for u in utts {
        let input = p2w_input(&a2p_posteriors(a2p, &u.features)?, psd)?;
        pairs.push((words.encode(&u.words)?, net.decode(&input, input.rows() + 1)?));
    }
    Ok(Some(error_rate(pairs.into_iter())))
}

/// Fine-tunes a P2W network on PSD-filtered posteriors of the frozen
/// acoustic model. Without `p2w` a freshly initialized network is trained
/// (the no-text-initialization baseline).
pub fn finetune_p2w(
    p2w: Option<&ModelCheckpoint>,
    a2p: &ModelCheckpoint,
    bundle: &CorpusBundle,
    cfg: &P2wConfig,
    log: &mut TrainingLog,
) -> Result<(ModelCheckpoint, TrainReport)> {
    require_stage(a2p.stage, &[Stage::A2p])?;
    if a2p.phone_fingerprint() != bundle.phones().fingerprint() {
        return Err(Error::Composition("A2P phonemes differ from the lexicon inventory".into()));
    }
    let (mut net, words, tdi) = match p2w {
        Some(ck) => {
            check_composition(a2p, ck)?;
            if cfg.require_tdi && !ck.tdi {
                return Err(Error::Stage {
                    expected: Stage::P2wTdi.to_string(),
                    found: format!("{} without text initialization", ck.stage),
                });
            }
            (ck.network.clone(), p2w_words(ck)?.clone(), ck.tdi)
        }
        None => {
            if cfg.require_tdi {
                return Err(Error::Stage {
                    expected: Stage::P2wTdi.to_string(),
                    found: "no P2W checkpoint".into(),
                });
            }
            let arch = cfg.architecture(a2p.phones.len(), bundle.words.len());
            (Network::build(arch, &mut derived(cfg.seed, "p2w/init"))?, bundle.words.clone(), false)
        }
    };
    let (samples, skipped) = posterior_samples(&net, a2p, &bundle.acoustic, &words, &cfg.psd)?;
    if skipped > 0 {
        warn!("skipped {skipped} utterances with too few kept frames");
    }
    let mut trainer = Trainer::new(&cfg.train, derived(cfg.seed, "ft/order"))?;
    let mut report = TrainReport::default();
    run_epochs(
        &mut net,
        &mut trainer,
        cfg.train.epochs,
        log,
        &samples,
        |_| Ok(Vec::new()),
        |net| dev_wer(net, a2p, &bundle.dev, &words, &cfg.psd),
        &mut report,
    )?;
    report.skipped = skipped;
    Ok((
        ModelCheckpoint {
            stage: Stage::P2wFinetuned,
            phones: a2p.phones.clone(),
            words: Some(words),
            psd: cfg.psd,
            tdi,
            seed: cfg.seed,
            config_hash: cfg.config_hash.clone(),
            network: net,
        },
        report,
    ))
}

/// Extends the P2W output vocabulary with the words of `extra_text` and
/// retrains with the chosen strategy. Old output units keep their indices
/// and weights.
pub fn extend_oov(
    p2w: &ModelCheckpoint,
    a2p: &ModelCheckpoint,
    strategy: OovStrategy,
    bundle: &CorpusBundle,
    extra_text: &[Sentence],
    cfg: &P2wConfig,
    log: &mut TrainingLog,
) -> Result<(ModelCheckpoint, TrainReport)> {
    check_composition(a2p, p2w)?;
    check_lexicon(&bundle.lexicon, extra_text)?;
    let mut net = p2w.network.clone();
    if strategy == OovStrategy::Multimodal && net.is_ctc() {
        return Err(Error::UnsupportedStrategy(strategy.to_string()));
    }
    let old = p2w_words(p2w)?;
    let words = extend_vocabulary(old, extra_text)?;
    let mut init_rng = derived(cfg.seed, "oov/init");
    net.extend_outputs(words.len() - old.len(), &mut init_rng)?;
    if strategy == OovStrategy::Multimodal {
        net.add_aux_encoder(&mut init_rng)?;
    }

    let mut trainer = Trainer::new(&cfg.train, derived(cfg.seed, "oov/order"))?;
    let mut pron_rng = derived(cfg.seed, "oov/pron");
    let mut report = TrainReport::default();
    let acoustic = if strategy == OovStrategy::Direct {
        (Vec::new(), 0)
    } else {
        posterior_samples(&net, a2p, &bundle.acoustic, &words, &p2w.psd)?
    };
    let (d_samples, d_skipped) = acoustic;
    let mut a_skipped = 0;
    let text_route = match strategy {
        OovStrategy::Multimodal => EncoderRoute::Auxiliary,
        _ => EncoderRoute::Primary,
    };
    let dev = |net: &Network| dev_wer(net, a2p, &bundle.dev, &words, &p2w.psd);

    match strategy {
        OovStrategy::Direct => {
            run_epochs(
                &mut net,
                &mut trainer,
                cfg.train.epochs,
                log,
                &[],
                |net| {
                    let (s, k) = text_samples(net, extra_text, &bundle.lexicon, &words, &mut pron_rng, text_route)?;
                    a_skipped = k;
                    Ok(s)
                },
                dev,
                &mut report,
            )?;
        }
        OovStrategy::Alternative => {
            // one round = one epoch over D followed by one epoch over A
            let d_refs: Vec<&Sample> = d_samples.iter().collect();
            report.initial_loss = mean_loss(&net, &d_refs)?;
            log.push(0, "D", "loss", report.initial_loss);
            for round in 1..=cfg.train.epochs {
                if trainer.exhausted() {
                    break;
                }
                let d_loss = trainer.epoch(&mut net, &d_refs)?;
                log.push(round, "D", "loss", d_loss);
                let (a, k) = text_samples(&net, extra_text, &bundle.lexicon, &words, &mut pron_rng, text_route)?;
                a_skipped = k;
                let a_refs: Vec<&Sample> = a.iter().collect();
                let a_loss = trainer.epoch(&mut net, &a_refs)?;
                log.push(round, "A", "loss", a_loss);
                report.final_loss = d_loss;
                report.epochs = round;
                if let Some(err) = dev(&net)? {
                    log.push(round, "dev", "wer", err);
                    report.dev_error = Some(err);
                }
            }
            report.steps = trainer.steps;
        }
        OovStrategy::Multimodal => {
            run_epochs(
                &mut net,
                &mut trainer,
                cfg.train.epochs,
                log,
                &d_samples,
                |net| {
                    let (a, k) = text_samples(net, extra_text, &bundle.lexicon, &words, &mut pron_rng, text_route)?;
                    a_skipped = k;
                    Ok(a)
                },
                dev,
                &mut report,
            )?;
        }
    }
    report.skipped = d_skipped + a_skipped;
    Ok((
        ModelCheckpoint {
            stage: Stage::P2wOovExtended,
            phones: p2w.phones.clone(),
            words: Some(words),
            psd: p2w.psd,
            tdi: p2w.tdi,
            seed: cfg.seed,
            config_hash: cfg.config_hash.clone(),
            network: net,
        },
        report,
    ))
}
