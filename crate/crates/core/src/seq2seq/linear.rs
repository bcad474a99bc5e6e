use rand::Rng;

use crate::error::Result;
use crate::numeric::{axpy, dot, uniform_init, Grads, Matrix, ParamId, ParamStore, Params};

/// Affine map `y = x·W + b` with `W` stored `in x out`.
#[derive(Clone, Debug)]
pub struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        output: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = store.add_uniform(format!("{prefix}.w"), input, output, input, rng)?;
        let b = store.add_uniform(format!("{prefix}.b"), 1, output, input, rng)?;
        Ok(Linear { w, b })
    }

    pub fn output_size(&self, p: Params<'_>) -> usize {
        p[self.w].cols()
    }

    pub fn forward(&self, p: Params<'_>, x: &Matrix) -> Matrix {
        let mut y = x.dot(&p[self.w]);
        let b = p[self.b].row(0);
        for r in 0..y.rows() {
            axpy(1.0, b, y.row_mut(r));
        }
        y
    }

    pub fn forward_vec(&self, p: Params<'_>, x: &[f64]) -> Vec<f64> {
        let w = &p[self.w];
        let mut y = p[self.b].row(0).to_vec();
        for (k, &xk) in x.iter().enumerate() {
            axpy(xk, w.row(k), &mut y);
        }
        y
    }

    pub fn backward(
        &self,
        p: Params<'_>,
        g: &mut Grads<'_>,
        x: &Matrix,
        dy: &Matrix,
        need_dx: bool,
    ) -> Option<Matrix> {
        crate::numeric::gemm_tn_acc(x, dy, g.get_mut(self.w));
        g.get_mut(self.b).add_assign(&dy.col_sums());
        need_dx.then(|| dy.dot_t(&p[self.w]))
    }

    pub fn backward_vec(
        &self,
        p: Params<'_>,
        g: &mut Grads<'_>,
        x: &[f64],
        dy: &[f64],
    ) -> Vec<f64> {
        let gw = g.get_mut(self.w);
        let cols = gw.cols();
        for (k, &xk) in x.iter().enumerate() {
            axpy(xk, dy, &mut gw.data_mut()[k * cols..(k + 1) * cols]);
        }
        axpy(1.0, dy, g.get_mut(self.b).data_mut());
        let w = &p[self.w];
        (0..w.rows()).map(|k| dot(w.row(k), dy)).collect()
    }

    /// Appends `extra` freshly initialized output units; existing columns
    /// are unchanged.
    pub fn extend_outputs(
        &self,
        store: &mut ParamStore,
        extra: usize,
        rng: &mut impl Rng,
    ) -> Result<()> {
        let input = store.value(self.w).rows();
        store.extend_cols(self.w, &uniform_init(input, extra, input, rng))?;
        store.extend_cols(self.b, &uniform_init(1, extra, input, rng))
    }
}

/// Lookup table of `rows` vectors.
#[derive(Clone, Debug)]
pub struct Embedding {
    table: ParamId,
}

impl Embedding {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        rows: usize,
        dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let table = store.add_uniform(format!("{prefix}.table"), rows, dim, dim, rng)?;
        Ok(Embedding { table })
    }

    pub fn lookup<'a>(&self, p: Params<'a>, id: usize) -> &'a [f64] {
        p.get(self.table).row(id)
    }

    pub fn backward(&self, g: &mut Grads<'_>, id: usize, d: &[f64]) {
        axpy(1.0, d, g.get_mut(self.table).row_mut(id));
    }

    pub fn extend_rows(&self, store: &mut ParamStore, extra: usize, rng: &mut impl Rng) -> Result<()> {
        let dim = store.value(self.table).cols();
        store.extend_rows(self.table, &uniform_init(extra, dim, dim, rng))
    }
}
