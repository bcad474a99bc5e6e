use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ctc::{ctc_loss, ctc_loss_and_grad, greedy_decode, PosteriorSequence};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, ParamStore};
use crate::seq2seq::{Direction, EncoderRoute, Linear, RecurrentStack, Seq2Seq, Seq2SeqConfig};

/// Blank, sos and eos positions in every word vocabulary.
const WORD_BLANK: usize = 0;
const WORD_SOS: usize = 1;
const WORD_EOS: usize = 2;

/// Shape of a network; enough to rebuild it around stored parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    /// Bidirectional LSTM stack with a per-frame softmax layer, trained
    /// with CTC.
    Ctc {
        input_dim: usize,
        hidden: usize,
        layers: usize,
        output_dim: usize,
    },
    /// Attention encoder-decoder over a word vocabulary.
    S2s {
        config: Seq2SeqConfig,
        aux_encoder: bool,
    },
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        match self {
            Architecture::Ctc { input_dim, .. } => *input_dim,
            Architecture::S2s { config, .. } => config.input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Architecture::Ctc { output_dim, .. } => *output_dim,
            Architecture::S2s { config, .. } => config.vocab_size,
        }
    }
}

/// CTC network: recurrent stack followed by a linear layer and a
/// log-softmax over units (blank at index 0).
#[derive(Clone, Debug)]
pub struct CtcNet {
    stack: RecurrentStack,
    out: Linear,
}

impl CtcNet {
    fn new(
        store: &mut ParamStore,
        input_dim: usize,
        hidden: usize,
        layers: usize,
        output_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let stack = RecurrentStack::new(store, "ctc.rnn", input_dim, hidden, layers, Direction::Bi, rng)?;
        let out = Linear::new(store, "ctc.out", stack.output_size(), output_dim, rng)?;
        Ok(CtcNet { stack, out })
    }

    pub fn posteriors(&self, store: &ParamStore, x: &Matrix) -> PosteriorSequence {
        let p = store.params();
        let (h, _) = self.stack.forward(p, x);
        PosteriorSequence::from_logits(&self.out.forward(p, &h), 0)
    }

    pub fn loss_and_backward(&self, store: &mut ParamStore, x: &Matrix, target: &[usize]) -> Result<f64> {
        let p = store.params();
        let (h, cache) = self.stack.forward(p, x);
        let post = PosteriorSequence::from_logits(&self.out.forward(p, &h), 0);
        let (loss, dlogits) = ctc_loss_and_grad(&post, target)?;
        let (p, mut g) = store.split();
        if let Some(dh) = self.out.backward(p, &mut g, &h, &dlogits, true) {
            self.stack.backward(p, &mut g, &cache, &dh, false);
        }
        Ok(loss)
    }
}

#[derive(Clone, Debug)]
enum Body {
    Ctc(CtcNet),
    S2s(Seq2Seq),
}

/// A network together with its parameters.
#[derive(Clone, Debug)]
pub struct Network {
    arch: Architecture,
    store: ParamStore,
    body: Body,
}

impl Network {
    pub fn build(arch: Architecture, rng: &mut impl Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let body = match arch {
            Architecture::Ctc {
                input_dim,
                hidden,
                layers,
                output_dim,
            } => Body::Ctc(CtcNet::new(&mut store, input_dim, hidden, layers, output_dim, rng)?),
            Architecture::S2s { config, aux_encoder } => {
                if config.vocab_size <= WORD_EOS {
                    return Err(Error::Config("attention decoder needs a word vocabulary".into()));
                }
                let mut m = Seq2Seq::new(&mut store, config, WORD_BLANK, WORD_SOS, WORD_EOS, rng)?;
                if aux_encoder {
                    m.add_aux_encoder(&mut store, rng)?;
                }
                Body::S2s(m)
            }
        };
        Ok(Network { arch, store, body })
    }

    /// Rebuilds the network for `arch` and installs `store`, which must
    /// hold the same parameter names and shapes in construction order.
    pub fn from_parts(arch: Architecture, store: ParamStore) -> Result<Self> {
        let mut rng = crate::numeric::rng::seeded(0);
        let mut net = Network::build(arch, &mut rng)?;
        if net.store.len() != store.len() {
            return Err(Error::format(
                "checkpoint",
                format!("{} parameter tensors, architecture has {}", store.len(), net.store.len()),
            ));
        }
        for (a, b) in net.store.ids().zip(store.ids()) {
            let (want, got) = (net.store.value(a), store.value(b));
            if net.store.name(a) != store.name(b) || want.shape() != got.shape() {
                return Err(Error::format(
                    "checkpoint",
                    format!(
                        "parameter {} {:?} does not match architecture {} {:?}",
                        store.name(b),
                        got.shape(),
                        net.store.name(a),
                        want.shape()
                    ),
                ));
            }
        }
        net.store = store;
        Ok(net)
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn is_ctc(&self) -> bool {
        matches!(self.body, Body::Ctc(_))
    }

    fn ctc(&self) -> Result<&CtcNet> {
        match &self.body {
            Body::Ctc(n) => Ok(n),
            Body::S2s(_) => Err(Error::Config("frame posteriors need a CTC network".into())),
        }
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.rows() == 0 {
            return Err(Error::EmptyInput);
        }
        if x.cols() != self.arch.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.arch.input_dim()
            )));
        }
        Ok(())
    }

    /// Per-frame output posteriors of a CTC network.
    pub fn posteriors(&self, x: &Matrix) -> Result<PosteriorSequence> {
        self.check_input(x)?;
        Ok(self.ctc()?.posteriors(&self.store, x))
    }

    /// Training loss on one example; gradients accumulate into the store.
    pub fn loss_and_backward(&mut self, x: &Matrix, target: &[usize], route: EncoderRoute) -> Result<f64> {
        self.check_input(x)?;
        match &self.body {
            Body::Ctc(n) => n.loss_and_backward(&mut self.store, x, target),
            Body::S2s(m) => m.loss_and_backward(&mut self.store, x, target, route),
        }
    }

    pub fn loss(&self, x: &Matrix, target: &[usize], route: EncoderRoute) -> Result<f64> {
        self.check_input(x)?;
        match &self.body {
            Body::Ctc(n) => ctc_loss(&n.posteriors(&self.store, x), target),
            Body::S2s(m) => m.loss(self.store.params(), x, target, route),
        }
    }

    /// Best-path output units. For CTC networks this is the merged argmax
    /// path; the attention decoder stops at eos or `max_len` units.
    pub fn decode(&self, x: &Matrix, max_len: usize) -> Result<Vec<usize>> {
        self.check_input(x)?;
        match &self.body {
            Body::Ctc(n) => Ok(greedy_decode(&n.posteriors(&self.store, x))),
            Body::S2s(m) => m.greedy_decode(self.store.params(), x, max_len, EncoderRoute::Primary),
        }
    }

    /// Appends `extra` output units; existing units keep their weights.
    pub fn extend_outputs(&mut self, extra: usize, rng: &mut impl Rng) -> Result<()> {
        if extra == 0 {
            return Ok(());
        }
        match (&mut self.body, &mut self.arch) {
            (Body::Ctc(n), Architecture::Ctc { output_dim, .. }) => {
                n.out.extend_outputs(&mut self.store, extra, rng)?;
                *output_dim += extra;
            }
            (Body::S2s(m), Architecture::S2s { config, .. }) => {
                m.extend_vocab(&mut self.store, extra, rng)?;
                config.vocab_size += extra;
            }
            _ => unreachable!("body and architecture always agree"),
        }
        Ok(())
    }

    /// Adds the second encoder used for oracle-input samples.
    pub fn add_aux_encoder(&mut self, rng: &mut impl Rng) -> Result<()> {
        match (&mut self.body, &mut self.arch) {
            (Body::S2s(m), Architecture::S2s { aux_encoder, .. }) => {
                if !*aux_encoder {
                    m.add_aux_encoder(&mut self.store, rng)?;
                    *aux_encoder = true;
                }
                Ok(())
            }
            _ => Err(Error::UnsupportedStrategy("multimodal".into())),
        }
    }

    /// Raw output scores of the last layer at the first decoding step (S2S)
    /// or every frame (CTC), as log-probabilities.
    pub fn output_log_probs(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        match &self.body {
            Body::Ctc(n) => Ok(n.posteriors(&self.store, x).into_log_probs()),
            Body::S2s(m) => {
                let p = self.store.params();
                let enc = m.encode(p, x, EncoderRoute::Primary)?;
                let mut st = m.initial_state(&enc);
                let lp = m.step_log_probs(p, &enc, &mut st, |_| WORD_SOS);
                Ok(Matrix::row_vector(&lp))
            }
        }
    }
}
