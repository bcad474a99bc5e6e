use rand::Rng;

use crate::error::Result;
use crate::numeric::{axpy, dot, softmax_in_place, Grads, Matrix, ParamId, ParamStore, Params};

/// Additive (single hidden layer) attention:
/// `score_j = v · tanh(h_j·Wk + s·Wq + b)`, weights are the softmax of the
/// scores and the context is the weighted sum of encoder states.
#[derive(Clone, Debug)]
pub struct AdditiveAttention {
    wk: ParamId,
    wq: ParamId,
    b: ParamId,
    v: ParamId,
}

#[derive(Clone, Debug)]
pub struct AttentionStep {
    query: Vec<f64>,
    hidden: Matrix,
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
}

impl AdditiveAttention {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        state_dim: usize,
        query_dim: usize,
        attn_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let fan_in = state_dim + query_dim;
        Ok(AdditiveAttention {
            wk: store.add_uniform(format!("{prefix}.wk"), state_dim, attn_dim, fan_in, rng)?,
            wq: store.add_uniform(format!("{prefix}.wq"), query_dim, attn_dim, fan_in, rng)?,
            b: store.add_uniform(format!("{prefix}.b"), 1, attn_dim, fan_in, rng)?,
            v: store.add_uniform(format!("{prefix}.v"), 1, attn_dim, attn_dim, rng)?,
        })
    }

    /// Key projections of all encoder states; computed once per utterance.
    pub fn keys(&self, p: Params<'_>, states: &Matrix) -> Matrix {
        states.dot(&p[self.wk])
    }

    pub fn step(&self, p: Params<'_>, keys: &Matrix, states: &Matrix, query: &[f64]) -> AttentionStep {
        let mut q = p[self.b].row(0).to_vec();
        let wq = &p[self.wq];
        for (k, &s) in query.iter().enumerate() {
            axpy(s, wq.row(k), &mut q);
        }
        let v = p[self.v].row(0);
        let mut hidden = keys.clone();
        let mut scores = Vec::with_capacity(keys.rows());
        for j in 0..keys.rows() {
            let row = hidden.row_mut(j);
            for (u, qk) in row.iter_mut().zip(&q) {
                *u = (*u + qk).tanh();
            }
            scores.push(dot(row, v));
        }
        softmax_in_place(&mut scores);
        let mut context = vec![0.0; states.cols()];
        for (j, &a) in scores.iter().enumerate() {
            axpy(a, states.row(j), &mut context);
        }
        AttentionStep {
            query: query.to_vec(),
            hidden,
            weights: scores,
            context,
        }
    }

    /// Context vector and weights for one query.
    pub fn attend(&self, p: Params<'_>, states: &Matrix, query: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let keys = self.keys(p, states);
        let s = self.step(p, &keys, states, query);
        (s.context, s.weights)
    }

    /// Backward through one step. Key and state gradients are accumulated
    /// into `d_keys` and `d_states`; returns the query gradient.
    pub fn step_backward(
        &self,
        p: Params<'_>,
        g: &mut Grads<'_>,
        step: &AttentionStep,
        states: &Matrix,
        d_context: &[f64],
        d_keys: &mut Matrix,
        d_states: &mut Matrix,
    ) -> Vec<f64> {
        let t_len = states.rows();
        let d_w: Vec<f64> = (0..t_len).map(|j| dot(d_context, states.row(j))).collect();
        for (j, &a) in step.weights.iter().enumerate() {
            axpy(a, d_context, d_states.row_mut(j));
        }
        let mean: f64 = step.weights.iter().zip(&d_w).map(|(a, d)| a * d).sum();
        let v = p[self.v].row(0).to_vec();
        let attn = v.len();
        let mut dq = vec![0.0; attn];
        let mut dv = vec![0.0; attn];
        let mut dpre = vec![0.0; attn];
        for j in 0..t_len {
            let de = step.weights[j] * (d_w[j] - mean);
            if de == 0.0 {
                continue;
            }
            let u = step.hidden.row(j);
            axpy(de, u, &mut dv);
            for k in 0..attn {
                dpre[k] = de * v[k] * (1.0 - u[k] * u[k]);
            }
            axpy(1.0, &dpre, d_keys.row_mut(j));
            axpy(1.0, &dpre, &mut dq);
        }
        axpy(1.0, &dv, g.get_mut(self.v).data_mut());
        axpy(1.0, &dq, g.get_mut(self.b).data_mut());
        {
            let gwq = g.get_mut(self.wq);
            let cols = gwq.cols();
            for (k, &s) in step.query.iter().enumerate() {
                axpy(s, &dq, &mut gwq.data_mut()[k * cols..(k + 1) * cols]);
            }
        }
        let wq = &p[self.wq];
        (0..wq.rows()).map(|k| dot(wq.row(k), &dq)).collect()
    }

    /// Propagates accumulated key gradients to `Wk` and the encoder states.
    pub fn keys_backward(
        &self,
        p: Params<'_>,
        g: &mut Grads<'_>,
        states: &Matrix,
        d_keys: &Matrix,
        d_states: &mut Matrix,
    ) {
        crate::numeric::gemm_tn_acc(states, d_keys, g.get_mut(self.wk));
        d_states.add_assign(&d_keys.dot_t(&p[self.wk]));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rng::seeded;
    use crate::numeric::{grad_check, uniform_init};

    fn setup(seed: u64) -> (ParamStore, AdditiveAttention, crate::numeric::rng::Rng64) {
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let att = AdditiveAttention::new(&mut store, "att", 4, 3, 5, &mut rng).unwrap();
        (store, att, rng)
    }

    #[test]
    fn single_state_gets_all_weight() {
        let (store, att, mut rng) = setup(1);
        let h = uniform_init(1, 4, 1, &mut rng);
        let (ctx, w) = att.attend(store.params(), &h, &[0.1, 0.2, 0.3]);
        assert_eq!(w, vec![1.0]);
        assert_eq!(ctx, h.row(0));
    }

    #[test]
    fn identical_states_get_uniform_weights() {
        let (store, att, mut rng) = setup(2);
        let row = uniform_init(1, 4, 1, &mut rng);
        let h = Matrix::from_rows(&[row.row(0), row.row(0), row.row(0)]).unwrap();
        let (_, w) = att.attend(store.params(), &h, &[0.5, -0.2, 0.1]);
        for a in w {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn context_matches_direct_evaluation() {
        let (store, att, mut rng) = setup(3);
        let h = uniform_init(6, 4, 1, &mut rng);
        let s = [0.3, -0.1, 0.7];
        let (ctx, w) = att.attend(store.params(), &h, &s);
        // independent oracle: explicit loops over the formula
        let p = store.params();
        let (wk, wq, b, v) = (&p[att.wk], &p[att.wq], &p[att.b], &p[att.v]);
        let mut scores = Vec::new();
        for j in 0..6 {
            let mut e = 0.0;
            for a in 0..5 {
                let mut pre = b[(0, a)];
                for k in 0..4 {
                    pre += h[(j, k)] * wk[(k, a)];
                }
                for k in 0..3 {
                    pre += s[k] * wq[(k, a)];
                }
                e += v[(0, a)] * pre.tanh();
            }
            scores.push(e);
        }
        let z: f64 = scores.iter().map(|e| e.exp()).sum();
        let weights: Vec<f64> = scores.iter().map(|e| e.exp() / z).collect();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for k in 0..4 {
            let c: f64 = (0..6).map(|j| weights[j] * h[(j, k)]).sum();
            assert!((c - ctx[k]).abs() < 1e-12);
        }
        assert!(w.iter().all(|&a| a >= 0.0));
    }

    #[test]
    fn gradients() {
        let (mut store, att, mut rng) = setup(4);
        let h = uniform_init(6, 4, 1, &mut rng);
        let hid = store.add("states", h).unwrap();
        let qid = store.add("query", uniform_init(1, 3, 1, &mut rng)).unwrap();
        let wc = uniform_init(1, 4, 1, &mut rng);
        let err = grad_check(&mut store, 1e-5, |s| {
            let states = s.value(hid).clone();
            let query = s.value(qid).row(0).to_vec();
            let p = s.params();
            let keys = att.keys(p, &states);
            let step = att.step(p, &keys, &states, &query);
            let loss = dot(&step.context, wc.row(0));
            let mut dk = Matrix::zeros(6, 5);
            let mut dh = Matrix::zeros(6, 4);
            let (p, mut g) = s.split();
            let dq = att.step_backward(p, &mut g, &step, &states, wc.row(0), &mut dk, &mut dh);
            att.keys_backward(p, &mut g, &states, &dk, &mut dh);
            g.get_mut(hid).add_assign(&dh);
            axpy(1.0, &dq, g.get_mut(qid).data_mut());
            Ok(loss)
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
