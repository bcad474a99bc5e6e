use rand::Rng;

use crate::error::Result;
use crate::numeric::{axpy, dot, sigmoid, Grads, Matrix, ParamId, ParamStore, Params};

/// LSTM cell with gate layout `[input | forget | candidate | output]`.
#[derive(Clone, Debug)]
pub struct LstmCell {
    input: usize,
    hidden: usize,
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
}

/// Activations of one cell step, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct CellStep {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Cached activations of a full-sequence pass (zero initial state).
#[derive(Clone, Debug)]
pub struct SeqCache {
    x: Matrix,
    gates: Matrix,
    c: Matrix,
    tanh_c: Matrix,
    h: Matrix,
}

impl LstmCell {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let fan_in = input + hidden;
        let wx = store.add_uniform(format!("{prefix}.wx"), input, 4 * hidden, fan_in, rng)?;
        let wh = store.add_uniform(format!("{prefix}.wh"), hidden, 4 * hidden, fan_in, rng)?;
        let b = store.add_uniform(format!("{prefix}.b"), 1, 4 * hidden, fan_in, rng)?;
        Ok(LstmCell {
            input,
            hidden,
            wx,
            wh,
            b,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    fn activate(&self, z: &mut [f64], c_prev: &[f64], c: &mut [f64], tanh_c: &mut [f64], h: &mut [f64]) {
        let n = self.hidden;
        for j in 0..n {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[n + j]);
            let g = z[2 * n + j].tanh();
            let o = sigmoid(z[3 * n + j]);
            z[j] = i;
            z[n + j] = f;
            z[2 * n + j] = g;
            z[3 * n + j] = o;
            c[j] = f * c_prev[j] + i * g;
            tanh_c[j] = c[j].tanh();
            h[j] = o * tanh_c[j];
        }
    }

    pub fn step(&self, p: Params<'_>, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> CellStep {
        let n = self.hidden;
        let mut z = p[self.b].row(0).to_vec();
        let wx = &p[self.wx];
        for (k, &xk) in x.iter().enumerate() {
            if xk != 0.0 {
                axpy(xk, wx.row(k), &mut z);
            }
        }
        let wh = &p[self.wh];
        for (k, &hk) in h_prev.iter().enumerate() {
            axpy(hk, wh.row(k), &mut z);
        }
        let mut c = vec![0.0; n];
        let mut tanh_c = vec![0.0; n];
        let mut h = vec![0.0; n];
        self.activate(&mut z, c_prev, &mut c, &mut tanh_c, &mut h);
        CellStep {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates: z,
            tanh_c,
            h,
            c,
        }
    }

    /// Pre-activation gradient of one step from the gradients on its
    /// outputs; returns `(dz, dc_prev)`.
    fn gate_grads(
        &self,
        gates: &[f64],
        c_prev: &[f64],
        tanh_c: &[f64],
        dh: &[f64],
        dc: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let n = self.hidden;
        let mut dz = vec![0.0; 4 * n];
        let mut dc_prev = vec![0.0; n];
        for j in 0..n {
            let (i, f, g, o) = (gates[j], gates[n + j], gates[2 * n + j], gates[3 * n + j]);
            let tc = tanh_c[j];
            let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
            dz[j] = dct * g * i * (1.0 - i);
            dz[n + j] = dct * c_prev[j] * f * (1.0 - f);
            dz[2 * n + j] = dct * i * (1.0 - g * g);
            dz[3 * n + j] = dh[j] * tc * o * (1.0 - o);
            dc_prev[j] = dct * f;
        }
        (dz, dc_prev)
    }

    /// Backward through one step; returns `(dx, dh_prev, dc_prev)`.
    pub fn step_backward(
        &self,
        p: Params<'_>,
        g: &mut Grads<'_>,
        step: &CellStep,
        dh: &[f64],
        dc: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (dz, dc_prev) = self.gate_grads(&step.gates, &step.c_prev, &step.tanh_c, dh, dc);
        {
            let gwx = g.get_mut(self.wx);
            let cols = gwx.cols();
            for (k, &xk) in step.x.iter().enumerate() {
                if xk != 0.0 {
                    axpy(xk, &dz, &mut gwx.data_mut()[k * cols..(k + 1) * cols]);
                }
            }
        }
        {
            let gwh = g.get_mut(self.wh);
            let cols = gwh.cols();
            for (k, &hk) in step.h_prev.iter().enumerate() {
                axpy(hk, &dz, &mut gwh.data_mut()[k * cols..(k + 1) * cols]);
            }
        }
        axpy(1.0, &dz, g.get_mut(self.b).data_mut());
        let wx = &p[self.wx];
        let dx = (0..self.input).map(|k| dot(wx.row(k), &dz)).collect();
        let wh = &p[self.wh];
        let dh_prev = (0..self.hidden).map(|k| dot(wh.row(k), &dz)).collect();
        (dx, dh_prev, dc_prev)
    }

    /// Runs the cell over all rows of `x` from a zero state.
    pub fn forward_seq(&self, p: Params<'_>, x: &Matrix) -> (Matrix, SeqCache) {
        let t_len = x.rows();
        let n = self.hidden;
        let mut zx = Matrix::zeros(t_len, 4 * n);
        crate::numeric::gemm_nn(x, &p[self.wx], &mut zx);
        let bias = p[self.b].row(0);
        let wh = &p[self.wh];
        let mut c = Matrix::zeros(t_len, n);
        let mut tanh_c = Matrix::zeros(t_len, n);
        let mut h = Matrix::zeros(t_len, n);
        let zeros = vec![0.0; n];
        for t in 0..t_len {
            let z = zx.row_mut(t);
            axpy(1.0, bias, z);
            if t > 0 {
                let hp = h.row(t - 1).to_vec();
                for (k, &hk) in hp.iter().enumerate() {
                    axpy(hk, wh.row(k), z);
                }
            }
            let c_prev = if t > 0 { c.row(t - 1).to_vec() } else { zeros.clone() };
            let mut ct = vec![0.0; n];
            let mut tct = vec![0.0; n];
            let mut ht = vec![0.0; n];
            self.activate(zx.row_mut(t), &c_prev, &mut ct, &mut tct, &mut ht);
            c.row_mut(t).copy_from_slice(&ct);
            tanh_c.row_mut(t).copy_from_slice(&tct);
            h.row_mut(t).copy_from_slice(&ht);
        }
        let cache = SeqCache {
            x: x.clone(),
            gates: zx,
            c,
            tanh_c,
            h: h.clone(),
        };
        (h, cache)
    }

    /// Backward through a full sequence given gradients on every output.
    /// Returns the input gradient when `need_dx`.
    pub fn backward_seq(
        &self,
        p: Params<'_>,
        g: &mut Grads<'_>,
        cache: &SeqCache,
        dh_out: &Matrix,
        need_dx: bool,
    ) -> Option<Matrix> {
        let t_len = cache.x.rows();
        let n = self.hidden;
        let wh = &p[self.wh];
        let mut dz_all = Matrix::zeros(t_len, 4 * n);
        let mut dh_next = vec![0.0; n];
        let mut dc_next = vec![0.0; n];
        let zeros = vec![0.0; n];
        for t in (0..t_len).rev() {
            let dh: Vec<f64> = dh_out.row(t).iter().zip(&dh_next).map(|(a, b)| a + b).collect();
            let c_prev = if t > 0 { cache.c.row(t - 1) } else { &zeros[..] };
            let (dz, dc_prev) =
                self.gate_grads(cache.gates.row(t), c_prev, cache.tanh_c.row(t), &dh, &dc_next);
            for (k, v) in dh_next.iter_mut().enumerate() {
                *v = dot(wh.row(k), &dz);
            }
            dc_next = dc_prev;
            dz_all.row_mut(t).copy_from_slice(&dz);
        }
        crate::numeric::gemm_tn_acc(&cache.x, &dz_all, g.get_mut(self.wx));
        if t_len > 1 {
            let h_prev = cache.h.select_rows(&(0..t_len - 1).collect::<Vec<_>>());
            let dz_tail = dz_all.select_rows(&(1..t_len).collect::<Vec<_>>());
            crate::numeric::gemm_tn_acc(&h_prev, &dz_tail, g.get_mut(self.wh));
        }
        g.get_mut(self.b).add_assign(&dz_all.col_sums());
        need_dx.then(|| dz_all.dot_t(&p[self.wx]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Uni,
    Bi,
}

/// Stack of LSTM layers; a bidirectional layer concatenates a forward pass
/// and a pass over the reversed input.
#[derive(Clone, Debug)]
pub struct RecurrentStack {
    layers: Vec<(LstmCell, Option<LstmCell>)>,
    hidden: usize,
    direction: Direction,
}

#[derive(Clone, Debug)]
pub struct StackCache {
    layers: Vec<(SeqCache, Option<SeqCache>)>,
}

impl RecurrentStack {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        direction: Direction,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut cells = Vec::with_capacity(layers);
        let mut width = input;
        for l in 0..layers {
            let fwd = LstmCell::new(store, &format!("{prefix}.l{l}.fwd"), width, hidden, rng)?;
            let bwd = match direction {
                Direction::Bi => Some(LstmCell::new(
                    store,
                    &format!("{prefix}.l{l}.bwd"),
                    width,
                    hidden,
                    rng,
                )?),
                Direction::Uni => None,
            };
            cells.push((fwd, bwd));
            width = match direction {
                Direction::Bi => 2 * hidden,
                Direction::Uni => hidden,
            };
        }
        Ok(RecurrentStack {
            layers: cells,
            hidden,
            direction,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn output_size(&self) -> usize {
        match self.direction {
            Direction::Bi => 2 * self.hidden,
            Direction::Uni => self.hidden,
        }
    }

    pub fn forward(&self, p: Params<'_>, x: &Matrix) -> (Matrix, StackCache) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (fwd, bwd) in &self.layers {
            let (hf, cf) = fwd.forward_seq(p, &cur);
            match bwd {
                Some(b) => {
                    let (hb_rev, cb) = b.forward_seq(p, &cur.reversed_rows());
                    cur = Matrix::hcat(&hf, &hb_rev.reversed_rows());
                    caches.push((cf, Some(cb)));
                }
                None => {
                    cur = hf;
                    caches.push((cf, None));
                }
            }
        }
        (cur, StackCache { layers: caches })
    }

    pub fn backward(
        &self,
        p: Params<'_>,
        g: &mut Grads<'_>,
        cache: &StackCache,
        d_out: &Matrix,
        need_dx: bool,
    ) -> Option<Matrix> {
        let mut d = d_out.clone();
        for (l, ((fwd, bwd), (cf, cb))) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let want = need_dx || l > 0;
            match (bwd, cb) {
                (Some(b), Some(cb)) => {
                    let h = self.hidden;
                    let df = d.col_slice(0, h);
                    let db = d.col_slice(h, 2 * h).reversed_rows();
                    let dxf = fwd.backward_seq(p, g, cf, &df, want);
                    let dxb = b.backward_seq(p, g, cb, &db, want);
                    match (dxf, dxb) {
                        (Some(mut a), Some(bm)) => {
                            a.add_assign(&bm.reversed_rows());
                            d = a;
                        }
                        _ => return None,
                    }
                }
                _ => match fwd.backward_seq(p, g, cf, &d, want) {
                    Some(dx) => d = dx,
                    None => return None,
                },
            }
        }
        Some(d)
    }
}
