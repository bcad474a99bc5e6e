//! Connectionist temporal classification: the merge function, the
//! blank-augmented forward-backward lattice, a brute-force enumeration
//! oracle and best-path decoding.

use crate::error::{Error, Result};
use crate::numeric::{argmax, log_add, log_softmax, logsumexp, Matrix};

/// Per-frame log-probabilities over a unit inventory that includes a blank.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSequence {
    log_probs: Matrix,
    blank: usize,
}

impl PosteriorSequence {
    /// Validates that every row is a log-distribution (within 1e-9).
    pub fn from_log_probs(log_probs: Matrix, blank: usize) -> Result<Self> {
        if blank >= log_probs.cols() {
            return Err(Error::Dimension(format!(
                "blank index {blank} outside {} units",
                log_probs.cols()
            )));
        }
        for (t, row) in log_probs.row_iter().enumerate() {
            if row.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(Error::Numeric(format!("frame {t} has NaN or +inf")));
            }
            let total = logsumexp(row);
            if total.abs() > 1e-9 {
                return Err(Error::Numeric(format!(
                    "frame {t} is not normalized (log-sum {total})"
                )));
            }
        }
        Ok(Self::from_log_probs_unchecked(log_probs, blank))
    }

    pub fn from_log_probs_unchecked(log_probs: Matrix, blank: usize) -> Self {
        PosteriorSequence { log_probs, blank }
    }

    /// Row-wise log-softmax of unnormalized scores.
    pub fn from_logits(logits: &Matrix, blank: usize) -> Self {
        PosteriorSequence {
            log_probs: log_softmax(logits),
            blank,
        }
    }

    pub fn frames(&self) -> usize {
        self.log_probs.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.log_probs.cols()
    }

    pub fn blank(&self) -> usize {
        self.blank
    }

    pub fn log_probs(&self) -> &Matrix {
        &self.log_probs
    }

    pub fn into_log_probs(self) -> Matrix {
        self.log_probs
    }

    /// Probabilities (exponentiated rows).
    pub fn probs(&self) -> Matrix {
        self.log_probs.map(f64::exp)
    }

    pub fn select_frames(&self, idx: &[usize]) -> Self {
        PosteriorSequence {
            log_probs: self.log_probs.select_rows(idx),
            blank: self.blank,
        }
    }
}

/// The merge function: collapse consecutive repeats, then delete blanks.
pub fn merge_beta(alignment: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(alignment.len());
    let mut prev = None;
    for &u in alignment {
        if Some(u) != prev && u != blank {
            out.push(u);
        }
        prev = Some(u);
    }
    out
}

/// Number of adjacent equal pairs in a label sequence.
pub fn adjacent_repeats(target: &[usize]) -> usize {
    target.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Minimum number of frames able to emit `target`.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + adjacent_repeats(target)
}

fn check_target(post: &PosteriorSequence, target: &[usize]) -> Result<()> {
    if let Some(&bad) = target
        .iter()
        .find(|&&l| l == post.blank || l >= post.vocab_size())
    {
        return Err(Error::InvalidTarget(format!(
            "label {bad} is blank or outside {} units",
            post.vocab_size()
        )));
    }
    let repeats = adjacent_repeats(target);
    if post.frames() < target.len() + repeats {
        return Err(Error::InfeasibleTarget {
            frames: post.frames(),
            labels: target.len(),
            repeats,
        });
    }
    Ok(())
}

/// Forward and backward log-scores over the blank-interleaved target.
///
/// `beta` excludes the emission at its own frame, so `alpha[t][s] +
/// beta[t][s]` is the log-mass of all alignments passing through state `s`
/// at frame `t`.
#[derive(Clone, Debug)]
pub struct CtcLattice {
    pub labels: Vec<usize>,
    pub alpha: Matrix,
    pub beta: Matrix,
    pub log_likelihood: f64,
}

impl CtcLattice {
    pub fn compute(post: &PosteriorSequence, target: &[usize]) -> Result<Self> {
        check_target(post, target)?;
        let blank = post.blank;
        let lp = &post.log_probs;
        let t_len = post.frames();

        let mut labels = Vec::with_capacity(2 * target.len() + 1);
        labels.push(blank);
        for &l in target {
            labels.push(l);
            labels.push(blank);
        }
        let s_len = labels.len();
        // skip transition s-2 -> s allowed only between distinct non-blank labels
        let skip: Vec<bool> = (0..s_len)
            .map(|s| s >= 2 && labels[s] != blank && labels[s] != labels[s - 2])
            .collect();

        let neg = f64::NEG_INFINITY;
        let mut alpha = Matrix::filled(t_len, s_len, neg);
        let mut beta = Matrix::filled(t_len, s_len, neg);
        if t_len == 0 {
            return Ok(CtcLattice {
                labels,
                alpha,
                beta,
                log_likelihood: 0.0,
            });
        }

        alpha[(0, 0)] = lp[(0, blank)];
        if s_len > 1 {
            alpha[(0, 1)] = lp[(0, labels[1])];
        }
        for t in 1..t_len {
            for s in 0..s_len {
                let mut acc = alpha[(t - 1, s)];
                if s >= 1 {
                    acc = log_add(acc, alpha[(t - 1, s - 1)]);
                }
                if skip[s] {
                    acc = log_add(acc, alpha[(t - 1, s - 2)]);
                }
                if acc != neg {
                    alpha[(t, s)] = acc + lp[(t, labels[s])];
                }
            }
        }

        beta[(t_len - 1, s_len - 1)] = 0.0;
        if s_len > 1 {
            beta[(t_len - 1, s_len - 2)] = 0.0;
        }
        for t in (0..t_len - 1).rev() {
            for s in 0..s_len {
                let mut acc = beta[(t + 1, s)] + lp[(t + 1, labels[s])];
                if s + 1 < s_len {
                    acc = log_add(acc, beta[(t + 1, s + 1)] + lp[(t + 1, labels[s + 1])]);
                }
                if s + 2 < s_len && skip[s + 2] {
                    acc = log_add(acc, beta[(t + 1, s + 2)] + lp[(t + 1, labels[s + 2])]);
                }
                beta[(t, s)] = acc;
            }
        }

        let mut ll = alpha[(t_len - 1, s_len - 1)];
        if s_len > 1 {
            ll = log_add(ll, alpha[(t_len - 1, s_len - 2)]);
        }
        if !ll.is_finite() {
            return Err(Error::Numeric(format!("CTC log-likelihood is {ll}")));
        }
        Ok(CtcLattice {
            labels,
            alpha,
            beta,
            log_likelihood: ll,
        })
    }

    /// Total log-likelihood recovered from the backward pass alone.
    pub fn backward_log_likelihood(&self, post: &PosteriorSequence) -> f64 {
        if self.alpha.rows() == 0 {
            return 0.0;
        }
        let lp = &post.log_probs;
        let mut total = self.beta[(0, 0)] + lp[(0, self.labels[0])];
        if self.labels.len() > 1 {
            total = log_add(total, self.beta[(0, 1)] + lp[(0, self.labels[1])]);
        }
        total
    }

    /// Posterior occupancy of each unit at each frame.
    pub fn occupancy(&self, vocab_size: usize) -> Matrix {
        let t_len = self.alpha.rows();
        let mut gamma = Matrix::zeros(t_len, vocab_size);
        let mut acc = vec![f64::NEG_INFINITY; vocab_size];
        for t in 0..t_len {
            acc.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
            for (s, &l) in self.labels.iter().enumerate() {
                acc[l] = log_add(acc[l], self.alpha[(t, s)] + self.beta[(t, s)]);
            }
            for (k, &a) in acc.iter().enumerate() {
                if a != f64::NEG_INFINITY {
                    gamma[(t, k)] = (a - self.log_likelihood).exp();
                }
            }
        }
        gamma
    }
}

/// Negative log-likelihood of `target` summed over all alignments.
pub fn ctc_loss(post: &PosteriorSequence, target: &[usize]) -> Result<f64> {
    Ok(-CtcLattice::compute(post, target)?.log_likelihood)
}

/// Loss together with its gradient with respect to the pre-softmax logits
/// that produced `post`.
pub fn ctc_loss_and_grad(post: &PosteriorSequence, target: &[usize]) -> Result<(f64, Matrix)> {
    let lattice = CtcLattice::compute(post, target)?;
    let mut grad = post.probs();
    let gamma = lattice.occupancy(post.vocab_size());
    for (g, o) in grad.data_mut().iter_mut().zip(gamma.data()) {
        *g -= o;
    }
    Ok((-lattice.log_likelihood, grad))
}

pub fn ctc_grad(post: &PosteriorSequence, target: &[usize]) -> Result<Matrix> {
    ctc_loss_and_grad(post, target).map(|(_, g)| g)
}

/// Path-count ceiling for [`ctc_loss_bruteforce`].
pub const BRUTEFORCE_LIMIT: f64 = 1e7;

/// Enumerates every length-T unit string, keeps those that merge to
/// `target`, and sums their probabilities. Returns `+inf` when no
/// alignment exists.
pub fn ctc_loss_bruteforce(post: &PosteriorSequence, target: &[usize]) -> Result<f64> {
    let v = post.vocab_size();
    let t_len = post.frames();
    let paths = (v as f64).powi(t_len as i32);
    if paths > BRUTEFORCE_LIMIT {
        return Err(Error::OracleScale(paths));
    }
    let lp = &post.log_probs;
    let mut digits = vec![0usize; t_len];
    let mut total = f64::NEG_INFINITY;
    loop {
        if merge_beta(&digits, post.blank) == target {
            let score: f64 = digits.iter().enumerate().map(|(t, &u)| lp[(t, u)]).sum();
            total = log_add(total, score);
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == t_len {
                return Ok(-total);
            }
            digits[pos] += 1;
            if digits[pos] < v {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// Best-path decoding: per-frame argmax (lowest index on ties), then merge.
pub fn greedy_decode(post: &PosteriorSequence) -> Vec<usize> {
    let path: Vec<usize> = post.log_probs.row_iter().map(argmax).collect();
    merge_beta(&path, post.blank)
}
