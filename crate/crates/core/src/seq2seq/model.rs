use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::{AdditiveAttention, AttentionStep};
use super::linear::{Embedding, Linear};
use super::lstm::{CellStep, Direction, LstmCell, RecurrentStack, StackCache};
use crate::error::{Error, Result};
use crate::numeric::{argmax, log_softmax_in_place, Matrix, ParamStore, Params};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seq2SeqConfig {
    pub input_dim: usize,
    pub vocab_size: usize,
    pub enc_layers: usize,
    pub enc_hidden: usize,
    pub dec_layers: usize,
    pub dec_hidden: usize,
    pub embed_dim: usize,
    pub attn_dim: usize,
}

/// Which encoder reads the input. The auxiliary encoder exists only after
/// [`Seq2Seq::add_aux_encoder`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderRoute {
    Primary,
    Auxiliary,
}

/// Per-step encoder outputs.
#[derive(Clone, Debug)]
pub struct EncoderStates {
    pub states: Matrix,
}

impl EncoderStates {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }
}

/// Recurrent state of the decoder between steps.
#[derive(Clone, Debug)]
pub struct DecoderState {
    pub hidden: Vec<(Vec<f64>, Vec<f64>)>,
    pub prefix: Vec<usize>,
    pub context: Vec<f64>,
}

struct DecStep {
    prev_token: usize,
    cells: Vec<CellStep>,
    attn: AttentionStep,
    out_in: Vec<f64>,
    log_probs: Vec<f64>,
}

/// Attention encoder-decoder. Decoder input at step i is the embedding of
/// the previous token concatenated with the previous context; the output
/// layer reads the top decoder state concatenated with the new context.
#[derive(Clone, Debug)]
pub struct Seq2Seq {
    cfg: Seq2SeqConfig,
    encoder: RecurrentStack,
    aux_encoder: Option<RecurrentStack>,
    embed: Embedding,
    decoder: Vec<LstmCell>,
    attention: AdditiveAttention,
    output: Linear,
    sos: usize,
    eos: usize,
    blank: usize,
}

impl Seq2Seq {
    pub fn new(
        store: &mut ParamStore,
        cfg: Seq2SeqConfig,
        blank: usize,
        sos: usize,
        eos: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let encoder = RecurrentStack::new(
            store,
            "s2s.enc",
            cfg.input_dim,
            cfg.enc_hidden,
            cfg.enc_layers,
            Direction::Bi,
            rng,
        )?;
        let state_dim = encoder.output_size();
        let embed = Embedding::new(store, "s2s.embed", cfg.vocab_size, cfg.embed_dim, rng)?;
        let mut decoder = Vec::with_capacity(cfg.dec_layers);
        for l in 0..cfg.dec_layers {
            let input = if l == 0 {
                cfg.embed_dim + state_dim
            } else {
                cfg.dec_hidden
            };
            decoder.push(LstmCell::new(store, &format!("s2s.dec.l{l}"), input, cfg.dec_hidden, rng)?);
        }
        let attention =
            AdditiveAttention::new(store, "s2s.att", state_dim, cfg.dec_hidden, cfg.attn_dim, rng)?;
        let output = Linear::new(store, "s2s.out", cfg.dec_hidden + state_dim, cfg.vocab_size, rng)?;
        Ok(Seq2Seq {
            cfg,
            encoder,
            aux_encoder: None,
            embed,
            decoder,
            attention,
            output,
            sos,
            eos,
            blank,
        })
    }

    pub fn config(&self) -> &Seq2SeqConfig {
        &self.cfg
    }

    pub fn has_aux_encoder(&self) -> bool {
        self.aux_encoder.is_some()
    }

    pub fn attention(&self) -> &AdditiveAttention {
        &self.attention
    }

    /// Adds a second encoder with the primary encoder's shape. It starts as
    /// a copy of the primary encoder's weights.
    pub fn add_aux_encoder(&mut self, store: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        if self.aux_encoder.is_some() {
            return Ok(());
        }
        let before = store.len();
        let aux = RecurrentStack::new(
            store,
            "s2s.aux",
            self.cfg.input_dim,
            self.cfg.enc_hidden,
            self.cfg.enc_layers,
            Direction::Bi,
            rng,
        )?;
        let primary: Vec<_> = store
            .ids()
            .filter(|&id| store.name(id).starts_with("s2s.enc."))
            .collect();
        let added: Vec<_> = store.ids().skip(before).collect();
        for (src, dst) in primary.into_iter().zip(added) {
            let v = store.value(src).clone();
            *store.value_mut(dst) = v;
        }
        self.aux_encoder = Some(aux);
        Ok(())
    }

    /// Appends output units (and embedding rows) for new vocabulary entries.
    pub fn extend_vocab(&mut self, store: &mut ParamStore, extra: usize, rng: &mut impl Rng) -> Result<()> {
        self.output.extend_outputs(store, extra, rng)?;
        self.embed.extend_rows(store, extra, rng)?;
        self.cfg.vocab_size += extra;
        Ok(())
    }

    fn encoder_for(&self, route: EncoderRoute) -> Result<&RecurrentStack> {
        match route {
            EncoderRoute::Primary => Ok(&self.encoder),
            EncoderRoute::Auxiliary => self
                .aux_encoder
                .as_ref()
                .ok_or_else(|| Error::UnsupportedStrategy("auxiliary encoder not present".into())),
        }
    }

    fn encode_cached(
        &self,
        p: Params<'_>,
        input: &Matrix,
        route: EncoderRoute,
    ) -> Result<(Matrix, StackCache)> {
        if input.rows() == 0 {
            return Err(Error::EmptyInput);
        }
        if input.cols() != self.cfg.input_dim {
            return Err(Error::Dimension(format!(
                "input has {} columns, encoder expects {}",
                input.cols(),
                self.cfg.input_dim
            )));
        }
        Ok(self.encoder_for(route)?.forward(p, input))
    }

    pub fn encode(&self, p: Params<'_>, input: &Matrix, route: EncoderRoute) -> Result<EncoderStates> {
        self.encode_cached(p, input, route)
            .map(|(states, _)| EncoderStates { states })
    }

    pub fn initial_state(&self, states: &EncoderStates) -> DecoderState {
        DecoderState {
            hidden: vec![(vec![0.0; self.cfg.dec_hidden], vec![0.0; self.cfg.dec_hidden]); self.cfg.dec_layers],
            prefix: Vec::new(),
            context: vec![0.0; states.states.cols()],
        }
    }

    fn dec_step(&self, p: Params<'_>, keys: &Matrix, states: &Matrix, state: &DecoderState) -> DecStep {
        let prev_token = state.prefix.last().copied().unwrap_or(self.sos);
        let mut x: Vec<f64> = self.embed.lookup(p, prev_token).to_vec();
        x.extend_from_slice(&state.context);
        let mut cells = Vec::with_capacity(self.decoder.len());
        for (cell, (h, c)) in self.decoder.iter().zip(&state.hidden) {
            let step = cell.step(p, &x, h, c);
            x = step.h.clone();
            cells.push(step);
        }
        let attn = self.attention.step(p, keys, states, &x);
        let mut out_in = x;
        out_in.extend_from_slice(&attn.context);
        let mut log_probs = self.output.forward_vec(p, &out_in);
        log_softmax_in_place(&mut log_probs);
        DecStep {
            prev_token,
            cells,
            attn,
            out_in,
            log_probs,
        }
    }

    fn advance(state: &mut DecoderState, step: &DecStep, token: usize) {
        for (slot, cell) in state.hidden.iter_mut().zip(&step.cells) {
            *slot = (cell.h.clone(), cell.c.clone());
        }
        state.context = step.attn.context.clone();
        state.prefix.push(token);
    }

    /// Log-distribution over the next unit given the prefix in `state`;
    /// `state` is then advanced with `token`.
    pub fn step_log_probs(
        &self,
        p: Params<'_>,
        states: &EncoderStates,
        state: &mut DecoderState,
        token_after: impl FnOnce(&[f64]) -> usize,
    ) -> Vec<f64> {
        let keys = self.attention.keys(p, &states.states);
        let step = self.dec_step(p, &keys, &states.states, state);
        let tok = token_after(&step.log_probs);
        Self::advance(state, &step, tok);
        step.log_probs
    }

    fn check_target(&self, target: &[usize]) -> Result<()> {
        if target.is_empty() {
            return Err(Error::InvalidTarget("empty target".into()));
        }
        for &t in target {
            if t == self.blank || t == self.sos || t == self.eos || t >= self.cfg.vocab_size {
                return Err(Error::InvalidTarget(format!(
                    "unit {t} is reserved or outside {} units",
                    self.cfg.vocab_size
                )));
            }
        }
        Ok(())
    }

    /// Teacher-forced negative log-likelihood of `target` followed by eos.
    pub fn loss(&self, p: Params<'_>, input: &Matrix, target: &[usize], route: EncoderRoute) -> Result<f64> {
        self.check_target(target)?;
        let (states, _) = self.encode_cached(p, input, route)?;
        let keys = self.attention.keys(p, &states);
        let enc = EncoderStates { states };
        let mut state = self.initial_state(&enc);
        let mut loss = 0.0;
        for &y in target.iter().chain(std::iter::once(&self.eos)) {
            let step = self.dec_step(p, &keys, &enc.states, &state);
            loss -= step.log_probs[y];
            Self::advance(&mut state, &step, y);
        }
        Ok(loss)
    }

    /// Loss with its gradient accumulated into `store`.
    pub fn loss_and_backward(
        &self,
        store: &mut ParamStore,
        input: &Matrix,
        target: &[usize],
        route: EncoderRoute,
    ) -> Result<f64> {
        self.check_target(target)?;
        let p = store.params();
        let (states, enc_cache) = self.encode_cached(p, input, route)?;
        let keys = self.attention.keys(p, &states);
        let enc = EncoderStates { states };
        let mut state = self.initial_state(&enc);
        let mut steps = Vec::with_capacity(target.len() + 1);
        let mut loss = 0.0;
        let gold: Vec<usize> = target.iter().copied().chain(std::iter::once(self.eos)).collect();
        for &y in &gold {
            let step = self.dec_step(p, &keys, &enc.states, &state);
            loss -= step.log_probs[y];
            Self::advance(&mut state, &step, y);
            steps.push(step);
        }
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("sequence loss is {loss}")));
        }

        let states = enc.states;
        let (p, mut g) = store.split();
        let layers = self.decoder.len();
        let hid = self.cfg.dec_hidden;
        let ctx_dim = states.cols();
        let mut d_keys = Matrix::zeros(keys.rows(), keys.cols());
        let mut d_states = Matrix::zeros(states.rows(), states.cols());
        let mut dh_next = vec![vec![0.0; hid]; layers];
        let mut dc_next = vec![vec![0.0; hid]; layers];
        let mut d_ctx_next = vec![0.0; ctx_dim];
        for (step, &y) in steps.iter().zip(&gold).rev() {
            let mut dlogits: Vec<f64> = step.log_probs.iter().map(|v| v.exp()).collect();
            dlogits[y] -= 1.0;
            let d_out_in = self.output.backward_vec(p, &mut g, &step.out_in, &dlogits);
            let mut d_ctx = d_out_in[hid..].to_vec();
            for (a, b) in d_ctx.iter_mut().zip(&d_ctx_next) {
                *a += b;
            }
            let dq = self
                .attention
                .step_backward(p, &mut g, &step.attn, &states, &d_ctx, &mut d_keys, &mut d_states);
            let mut dh: Vec<f64> = d_out_in[..hid].iter().zip(&dq).map(|(a, b)| a + b).collect();
            for l in (0..layers).rev() {
                for (a, b) in dh.iter_mut().zip(&dh_next[l]) {
                    *a += b;
                }
                let (dx, dh_prev, dc_prev) =
                    self.decoder[l].step_backward(p, &mut g, &step.cells[l], &dh, &dc_next[l]);
                dh_next[l] = dh_prev;
                dc_next[l] = dc_prev;
                if l > 0 {
                    dh = dx;
                } else {
                    let emb = self.cfg.embed_dim;
                    self.embed.backward(&mut g, step.prev_token, &dx[..emb]);
                    d_ctx_next = dx[emb..].to_vec();
                }
            }
        }
        self.attention.keys_backward(p, &mut g, &states, &d_keys, &mut d_states);
        self.encoder_for(route)?.backward(p, &mut g, &enc_cache, &d_states, false);
        Ok(loss)
    }

    /// Argmax decoding fed with its own outputs; stops at eos or `max_len`.
    /// Output excludes sos and eos.
    pub fn greedy_decode(
        &self,
        p: Params<'_>,
        input: &Matrix,
        max_len: usize,
        route: EncoderRoute,
    ) -> Result<Vec<usize>> {
        let (states, _) = self.encode_cached(p, input, route)?;
        let keys = self.attention.keys(p, &states);
        let enc = EncoderStates { states };
        let mut state = self.initial_state(&enc);
        let mut out = Vec::new();
        for _ in 0..max_len.max(1) {
            let step = self.dec_step(p, &keys, &enc.states, &state);
            let tok = argmax(&step.log_probs);
            if tok == self.eos {
                break;
            }
            Self::advance(&mut state, &step, tok);
            if tok != self.sos {
                out.push(tok);
            }
        }
        Ok(out)
    }

    /// Argmax prediction at every step given the gold prefix (target + eos).
    pub fn teacher_forced_predictions(
        &self,
        p: Params<'_>,
        input: &Matrix,
        target: &[usize],
        route: EncoderRoute,
    ) -> Result<Vec<usize>> {
        let (states, _) = self.encode_cached(p, input, route)?;
        let keys = self.attention.keys(p, &states);
        let enc = EncoderStates { states };
        let mut state = self.initial_state(&enc);
        let mut out = Vec::with_capacity(target.len() + 1);
        for &y in target.iter().chain(std::iter::once(&self.eos)) {
            let step = self.dec_step(p, &keys, &enc.states, &state);
            out.push(argmax(&step.log_probs));
            Self::advance(&mut state, &step, y);
        }
        Ok(out)
    }
}
