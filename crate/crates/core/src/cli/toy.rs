//! Synthetic corpus: a random lexicon, Zipf-distributed sentences and
//! noisy indicator features, one block of frames per phoneme.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Normal;

use super::archive::write_archive;
use crate::error::{Error, Result};
use crate::lexicon::{cut_vocabulary, write_transcripts, Lexicon, Sentence, Vocabulary};
use crate::numeric::rng::{derived, Rng64};
use crate::numeric::Matrix;
use crate::pipeline::utterance_phones;

const PHONE_NAMES: [&str; 39] = [
    "aa", "ae", "ah", "ao", "aw", "ay", "b", "ch", "d", "dh", "eh", "er", "ey", "f", "g", "hh", "ih",
    "iy", "jh", "k", "l", "m", "n", "ng", "ow", "oy", "p", "r", "s", "sh", "t", "th", "uh", "uw",
    "v", "w", "y", "z", "zh",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ToyConfig {
    pub phones: usize,
    pub words: usize,
    pub min_word_len: usize,
    pub max_word_len: usize,
    /// Words given a second pronunciation.
    pub polyphones: usize,
    pub zipf: f64,
    pub min_sentence: usize,
    pub max_sentence: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Longest run of noise-only frames before, between and after words.
    pub max_silence: usize,
    pub noise: f64,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub text: usize,
    /// Words seen at most this often in the training transcripts are out of
    /// the cut vocabulary.
    pub cut: usize,
    /// Occurrences of each designated OOV word in the OOV text set.
    pub min_occurrence: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            phones: 20,
            words: 200,
            min_word_len: 2,
            max_word_len: 5,
            polyphones: 10,
            zipf: 1.0,
            min_sentence: 3,
            max_sentence: 12,
            min_frames: 3,
            max_frames: 8,
            max_silence: 3,
            noise: 0.3,
            train: 300,
            dev: 50,
            test: 200,
            text: 2000,
            cut: 10,
            min_occurrence: 5,
        }
    }
}

impl ToyConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.phones < 2 {
            return bad("toy corpus needs at least 2 phonemes");
        }
        if self.min_word_len == 0 || self.min_word_len > self.max_word_len {
            return bad("word length range is empty");
        }
        if self.min_sentence == 0 || self.min_sentence > self.max_sentence {
            return bad("sentence length range is empty");
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return bad("phoneme duration range is empty");
        }
        if self.words == 0 || self.polyphones > self.words {
            return bad("polyphone count exceeds word count");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) || !(self.zipf >= 0.0) {
            return bad("noise and zipf exponent must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ToyUtterance {
    pub id: String,
    pub words: Sentence,
    pub features: Matrix,
}

#[derive(Clone, Debug)]
pub struct ToyCorpus {
    pub lexicon: Lexicon,
    pub words: Vocabulary,
    pub cut_words: Vocabulary,
    pub train: Vec<ToyUtterance>,
    pub dev: Vec<ToyUtterance>,
    pub test: Vec<ToyUtterance>,
    pub text: Vec<Sentence>,
    /// Held-out words missing from the cut vocabulary.
    pub oov_words: Vec<String>,
    pub oov_text: Vec<Sentence>,
}

fn phone_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match PHONE_NAMES.get(i) {
            Some(p) => p.to_string(),
            None => format!("x{i}"),
        })
        .collect()
}

fn random_pron(rng: &mut Rng64, cfg: &ToyConfig) -> Vec<usize> {
    let len = rng.random_range(cfg.min_word_len..=cfg.max_word_len);
    let mut pron: Vec<usize> = Vec::with_capacity(len);
    while pron.len() < len {
        let p = rng.random_range(0..cfg.phones);
        if pron.last() != Some(&p) {
            pron.push(p);
        }
    }
    pron
}

/// Lexicon text and the words in Zipf rank order.
fn make_lexicon(cfg: &ToyConfig, rng: &mut Rng64) -> Result<(String, Vec<String>)> {
    let names = phone_names(cfg.phones);
    let mut spellings = HashSet::new();
    let mut prons_seen = HashSet::new();
    let mut entries: Vec<(String, Vec<Vec<usize>>)> = Vec::with_capacity(cfg.words);
    let mut attempts = 0;
    while entries.len() < cfg.words {
        attempts += 1;
        if attempts > 1000 * cfg.words {
            return Err(Error::Config("cannot draw enough distinct words".into()));
        }
        let pron = random_pron(rng, cfg);
        let spelling: String = pron.iter().map(|&p| names[p].as_str()).collect();
        if prons_seen.contains(&pron) || !spellings.insert(spelling.clone()) {
            continue;
        }
        prons_seen.insert(pron.clone());
        entries.push((spelling, vec![pron]));
    }
    // alternative pronunciations: one phoneme replaced, no adjacent repeats
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.shuffle(rng);
    let mut added = 0;
    for &i in &order {
        if added == cfg.polyphones {
            break;
        }
        let base = entries[i].1[0].clone();
        for _ in 0..50 {
            let k = rng.random_range(0..base.len());
            let p = rng.random_range(0..cfg.phones);
            let clash = p == base[k]
                || (k > 0 && base[k - 1] == p)
                || (k + 1 < base.len() && base[k + 1] == p);
            if clash {
                continue;
            }
            let mut alt = base.clone();
            alt[k] = p;
            if prons_seen.insert(alt.clone()) {
                entries[i].1.push(alt);
                added += 1;
                break;
            }
        }
    }
    let mut text = String::new();
    for (w, prons) in &entries {
        for pron in prons {
            let symbols: Vec<&str> = pron.iter().map(|&p| names[p].as_str()).collect();
            text.push_str(&format!("{w}\t{}\n", symbols.join(" ")));
        }
    }
    let mut ranked: Vec<String> = entries.into_iter().map(|(w, _)| w).collect();
    ranked.shuffle(rng);
    Ok((text, ranked))
}

struct SentenceSampler {
    ranked: Vec<String>,
    dist: WeightedIndex<f64>,
    min: usize,
    max: usize,
}

impl SentenceSampler {
    fn new(ranked: Vec<String>, cfg: &ToyConfig) -> Result<Self> {
        let weights: Vec<f64> = (1..=ranked.len()).map(|r| (r as f64).powf(-cfg.zipf)).collect();
        let dist = WeightedIndex::new(weights).map_err(|e| Error::Config(e.to_string()))?;
        Ok(SentenceSampler {
            ranked,
            dist,
            min: cfg.min_sentence,
            max: cfg.max_sentence,
        })
    }

    fn sample(&self, rng: &mut Rng64) -> Sentence {
        let n = rng.random_range(self.min..=self.max);
        (0..n).map(|_| self.ranked[self.dist.sample(rng)].clone()).collect()
    }
}

/// Indicator features: each phoneme lasts a random number of frames; every
/// frame is the phoneme's unit vector plus Gaussian noise. Words are
/// separated by short noise-only stretches.
fn render(words: &[&[usize]], dim: usize, cfg: &ToyConfig, rng: &mut Rng64) -> Result<Matrix> {
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut data = Vec::new();
    let mut frames = 0;
    let mut emit = |p: Option<usize>, rng: &mut Rng64| {
        for k in 0..dim {
            let on = if Some(k + 1) == p { 1.0 } else { 0.0 };
            data.push(on + noise.sample(rng));
        }
        frames += 1;
    };
    for word in words {
        for _ in 0..rng.random_range(0..=cfg.max_silence) {
            emit(None, rng);
        }
        for &p in *word {
            for _ in 0..rng.random_range(cfg.min_frames..=cfg.max_frames) {
                emit(Some(p), rng);
            }
        }
    }
    for _ in 0..rng.random_range(0..=cfg.max_silence) {
        emit(None, rng);
    }
    Matrix::new(frames, dim, data)
}

fn utterances(
    split: &str,
    count: usize,
    sampler: &SentenceSampler,
    lexicon: &Lexicon,
    cfg: &ToyConfig,
    seed: u64,
) -> Result<Vec<ToyUtterance>> {
    let mut text_rng = derived(seed, &format!("{split}/text"));
    let dim = cfg.phones;
    (0..count)
        .map(|i| {
            let id = format!("{split}-{i:05}");
            let words = sampler.sample(&mut text_rng);
            let phones = utterance_phones(lexicon, seed, &id, &words)?;
            // every pronunciation of a word has the same length
            let mut spans = Vec::with_capacity(words.len());
            let mut at = 0;
            for w in &words {
                let n = lexicon.pronunciations(w).expect("sampled words are in the lexicon")[0].len();
                spans.push(&phones[at..at + n]);
                at += n;
            }
            let features = render(&spans, dim, cfg, &mut derived(seed, &format!("feat/{id}")))?;
            Ok(ToyUtterance { id, words, features })
        })
        .collect()
}

pub fn generate(cfg: &ToyConfig, seed: u64) -> Result<ToyCorpus> {
    cfg.validate()?;
    let (lexicon_text, ranked) = make_lexicon(cfg, &mut derived(seed, "lexicon"))?;
    let phones = Vocabulary::phonemes(phone_names(cfg.phones))?;
    let lexicon = Lexicon::parse_with(&lexicon_text, phones)?;
    let words = Vocabulary::words(lexicon.words().map(String::from))?;
    let sampler = SentenceSampler::new(ranked, cfg)?;

    let train = utterances("train", cfg.train, &sampler, &lexicon, cfg, seed)?;
    let dev = utterances("dev", cfg.dev, &sampler, &lexicon, cfg, seed)?;
    let test = utterances("test", cfg.test, &sampler, &lexicon, cfg, seed)?;
    let mut text_rng = derived(seed, "text");
    let text: Vec<Sentence> = (0..cfg.text).map(|_| sampler.sample(&mut text_rng)).collect();

    let train_words: Vec<Sentence> = train.iter().map(|u| u.words.clone()).collect();
    let cut_words = cut_vocabulary(&train_words, cfg.cut)?;
    let mut seen = BTreeSet::new();
    let mut oov_words = Vec::new();
    for w in dev.iter().chain(&test).flat_map(|u| &u.words) {
        if !cut_words.contains_regular(w) && seen.insert(w.clone()) {
            oov_words.push(w.clone());
        }
    }
    let mut oov_rng = derived(seed, "oov-text");
    let mut oov_text = Vec::with_capacity(oov_words.len() * cfg.min_occurrence);
    for w in &oov_words {
        for _ in 0..cfg.min_occurrence {
            let mut s = sampler.sample(&mut oov_rng);
            let at = oov_rng.random_range(0..s.len());
            s[at] = w.clone();
            oov_text.push(s);
        }
    }
    oov_text.shuffle(&mut oov_rng);
    Ok(ToyCorpus {
        lexicon,
        words,
        cut_words,
        train,
        dev,
        test,
        text,
        oov_words,
        oov_text,
    })
}

fn write_split(dir: &Path, name: &str, utts: &[ToyUtterance]) -> Result<()> {
    let words: Vec<Sentence> = utts.iter().map(|u| u.words.clone()).collect();
    write_transcripts(&dir.join(format!("{name}.txt")), &words)?;
    write_archive(
        &dir.join(format!("{name}.feats")),
        utts.iter().map(|u| (u.id.as_str(), &u.features)),
    )
}

/// Writes the corpus files into `dir` (created if missing).
pub fn write_corpus(corpus: &ToyCorpus, dir: &Path, manifest: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let put = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    put("lexicon.txt", corpus.lexicon.to_text())?;
    corpus.lexicon.phones().write(&dir.join("phones.txt"))?;
    corpus.words.write(&dir.join("words.txt"))?;
    corpus.cut_words.write(&dir.join("words_cut.txt"))?;
    write_split(dir, "train", &corpus.train)?;
    write_split(dir, "dev", &corpus.dev)?;
    write_split(dir, "test", &corpus.test)?;
    write_transcripts(&dir.join("text.txt"), &corpus.text)?;
    write_transcripts(&dir.join("oov_text.txt"), &corpus.oov_text)?;
    put("oov_words.txt", corpus.oov_words.iter().map(|w| format!("{w}\n")).collect())?;
    put("manifest.txt", manifest.to_string())
}
