//! Phoneme-synchronous down-sampling: drop frames on which the blank
//! dominates every other unit by at least `lambda` nats.

use std::fmt::Write as _;

use crate::ctc::PosteriorSequence;
use crate::error::{Error, Result};

/// Default blank-dominance threshold in nats.
pub const DEFAULT_LAMBDA: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsdConfig {
    pub lambda: f64,
    pub min_keep: usize,
}

impl Default for PsdConfig {
    fn default() -> Self {
        PsdConfig {
            lambda: DEFAULT_LAMBDA,
            min_keep: 1,
        }
    }
}

impl PsdConfig {
    pub fn new(lambda: f64, min_keep: usize) -> Result<Self> {
        if min_keep == 0 {
            return Err(Error::Config("PSD min_keep must be at least 1".into()));
        }
        if lambda.is_nan() {
            return Err(Error::Config("PSD lambda is NaN".into()));
        }
        Ok(PsdConfig { lambda, min_keep })
    }
}

/// `log p(blank) − max_{t≠blank} log p(t)` for every frame.
pub fn blank_margins(post: &PosteriorSequence) -> Vec<f64> {
    let blank = post.blank();
    post.log_probs()
        .row_iter()
        .map(|row| {
            let best_other = row
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != blank)
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            row[blank] - best_other
        })
        .collect()
}

/// Indices of the frames kept at `cfg`, in order.
pub fn kept_frames(post: &PosteriorSequence, cfg: &PsdConfig) -> Result<Vec<usize>> {
    if post.frames() == 0 {
        return Err(Error::EmptyInput);
    }
    let margins = blank_margins(post);
    let kept: Vec<usize> = (0..margins.len()).filter(|&i| margins[i] < cfg.lambda).collect();
    if !kept.is_empty() {
        return Ok(kept);
    }
    // floor: the min_keep least blank-dominated frames, lowest index on ties
    let mut order: Vec<usize> = (0..margins.len()).collect();
    order.sort_by(|&a, &b| margins[a].total_cmp(&margins[b]).then(a.cmp(&b)));
    let mut floor: Vec<usize> = order.into_iter().take(cfg.min_keep).collect();
    floor.sort_unstable();
    Ok(floor)
}

/// Removes blank-dominated frames. Kept rows are copied unmodified.
pub fn psd_downsample(
    post: &PosteriorSequence,
    cfg: &PsdConfig,
) -> Result<(PosteriorSequence, Vec<usize>)> {
    let kept = kept_frames(post, cfg)?;
    Ok((post.select_frames(&kept), kept))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetentionRow {
    pub lambda: f64,
    pub frames_kept: usize,
    pub fraction: f64,
}

/// Kept-frame totals over a collection of sequences for each threshold.
pub fn frame_retention_curve(
    posts: &[PosteriorSequence],
    lambdas: &[f64],
    min_keep: usize,
) -> Result<Vec<RetentionRow>> {
    if lambdas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("PSD thresholds must be sorted ascending".into()));
    }
    let total: usize = posts.iter().map(PosteriorSequence::frames).sum();
    lambdas
        .iter()
        .map(|&lambda| {
            let cfg = PsdConfig::new(lambda, min_keep)?;
            let mut kept = 0;
            for p in posts {
                kept += kept_frames(p, &cfg)?.len();
            }
            Ok(RetentionRow {
                lambda,
                frames_kept: kept,
                fraction: if total == 0 { 0.0 } else { kept as f64 / total as f64 },
            })
        })
        .collect()
}

/// `lambda<TAB>frames_kept<TAB>fraction` lines with a header.
pub fn retention_tsv(rows: &[RetentionRow]) -> String {
    let mut s = String::from("lambda\tframes_kept\tfraction\n");
    for r in rows {
        let _ = writeln!(s, "{}\t{}\t{:.6}", r.lambda, r.frames_kept, r.fraction);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::one_hot_posteriors;
    use crate::numeric::rng::seeded;
    use crate::numeric::Matrix;
    use rand::Rng;

    fn from_probs(rows: &[[f64; 3]]) -> PosteriorSequence {
        let m = Matrix::from_rows(rows).unwrap().map(f64::ln);
        PosteriorSequence::from_log_probs(m, 0).unwrap()
    }

    fn random_post(t: usize, v: usize, rng: &mut impl Rng) -> PosteriorSequence {
        let data = (0..t * v).map(|_| rng.random_range(-6.0..6.0)).collect();
        PosteriorSequence::from_logits(&Matrix::new(t, v, data).unwrap(), 0)
    }

    #[test]
    fn worked_margin() {
        let post = from_probs(&[[0.999, 0.0005, 0.0005]]);
        let m = blank_margins(&post)[0];
        assert!((m - (0.999f64 / 0.0005).ln()).abs() < 1e-12);
        assert!((m - 7.60).abs() < 0.005);
        assert_eq!(kept_frames(&post, &PsdConfig::new(8.0, 1).unwrap()).unwrap(), vec![0]);
        assert!(m >= 3.0, "removed at lambda 3");
    }

    #[test]
    fn removal_at_low_threshold() {
        let post = from_probs(&[[0.999, 0.0005, 0.0005], [0.2, 0.7, 0.1]]);
        let (out, kept) = psd_downsample(&post, &PsdConfig::new(3.0, 1).unwrap()).unwrap();
        assert_eq!(kept, vec![1]);
        assert_eq!(out.log_probs().row(0), post.log_probs().row(1));
        let (_, kept) = psd_downsample(&post, &PsdConfig::new(8.0, 1).unwrap()).unwrap();
        assert_eq!(kept, vec![0, 1]);
    }

    #[test]
    fn uniform_frame_always_kept() {
        let post = from_probs(&[[1.0 / 3.0; 3]]);
        for lambda in [1e-6, 3.0, 8.0, 15.0] {
            assert_eq!(kept_frames(&post, &PsdConfig::new(lambda, 1).unwrap()).unwrap(), vec![0]);
        }
    }

    #[test]
    fn infinite_threshold_is_identity() {
        let post = random_post(9, 4, &mut seeded(2));
        let (out, _) = psd_downsample(&post, &PsdConfig::new(f64::INFINITY, 1).unwrap()).unwrap();
        assert_eq!(out, post);
    }

    #[test]
    fn floor_rule() {
        let post = from_probs(&[[0.99, 0.005, 0.005], [0.9, 0.05, 0.05], [0.999, 0.0005, 0.0005]]);
        let cfg = PsdConfig::new(f64::NEG_INFINITY, 2).unwrap();
        assert_eq!(kept_frames(&post, &cfg).unwrap(), vec![0, 1]);
        let rows = frame_retention_curve(&[post.clone(), post], &[f64::NEG_INFINITY], 2).unwrap();
        assert_eq!(rows[0].frames_kept, 4);
    }

    #[test]
    fn empty_input_rejected() {
        let post = PosteriorSequence::from_log_probs_unchecked(Matrix::zeros(0, 3), 0);
        assert!(matches!(psd_downsample(&post, &PsdConfig::default()), Err(Error::EmptyInput)));
        assert!(PsdConfig::new(8.0, 0).is_err());
    }

    #[test]
    fn one_hot_inputs_pass_through() {
        let p = vec![1, 2, 2, 3];
        let post = one_hot_posteriors(&p, 4);
        for lambda in [0.5, 8.0, 100.0] {
            let (out, _) = psd_downsample(&post, &PsdConfig::new(lambda, 1).unwrap()).unwrap();
            assert_eq!(out, post);
        }
    }

    #[test]
    fn retention_report() {
        let post = from_probs(&[[1.0 / 3.0; 3]]);
        let rows = frame_retention_curve(&[post], &[3.0, 8.0, 15.0], 1).unwrap();
        assert!(rows.iter().all(|r| r.frames_kept == 1));
        let tsv = retention_tsv(&rows);
        assert_eq!(tsv.lines().nth(1).unwrap(), "3\t1\t1.000000");
        assert!(frame_retention_curve(&[], &[8.0, 3.0], 1).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn kept_sets_nest(seed in 0u64..1000, l1 in -2.0f64..12.0, l2 in -2.0f64..12.0) {
                let post = random_post(12, 4, &mut seeded(seed));
                let (lo, hi) = (l1.min(l2), l1.max(l2));
                let margins = blank_margins(&post);
                let raw = |l: f64| -> Vec<usize> { (0..12).filter(|&i| margins[i] < l).collect() };
                let a = raw(lo);
                let b = raw(hi);
                prop_assert!(a.iter().all(|i| b.contains(i)));
                let kept = kept_frames(&post, &PsdConfig::new(hi, 1).unwrap()).unwrap();
                if !b.is_empty() {
                    prop_assert_eq!(&kept, &b);
                    for i in 0..12 {
                        prop_assert_eq!(kept.contains(&i), margins[i] < hi);
                    }
                }
                // order-preserving, content-identical subsequence
                let (out, idx) = psd_downsample(&post, &PsdConfig::new(hi, 1).unwrap()).unwrap();
                prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
                for (r, &i) in idx.iter().enumerate() {
                    prop_assert_eq!(out.log_probs().row(r), post.log_probs().row(i));
                }
            }
        }
    }
}
