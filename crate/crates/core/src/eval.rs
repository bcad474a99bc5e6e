//! Word error rate scoring with an in-vocabulary / out-of-vocabulary
//! sentence breakdown.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lexicon::{split_ivs_oovs, Sentence, Vocabulary};

/// Substitution, insertion and deletion counts of one alignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

/// Minimal Levenshtein alignment of `hyp` against `reference`. Among the
/// minimal alignments the backtrace prefers a substitution, then a deletion,
/// then an insertion.
pub fn edit_distance<T: PartialEq>(reference: &[T], hyp: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = diag.min(del).min(ins);
        }
    }
    let mut counts = EditCounts::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hyp[j - 1];
            if here == d[(i - 1) * w + j - 1] + usize::from(!same) {
                if !same {
                    counts.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * w + j] + 1 {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    counts
}

/// Aggregated counts over a set of sentences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ErrorCounts {
    pub sentences: usize,
    pub ref_tokens: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl ErrorCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// `100 · errors / reference tokens`. An empty reference scores 0 when
    /// there are no errors and +inf otherwise.
    pub fn wer(&self) -> f64 {
        if self.ref_tokens == 0 {
            return if self.errors() == 0 { 0.0 } else { f64::INFINITY };
        }
        100.0 * self.errors() as f64 / self.ref_tokens as f64
    }

    fn add(&mut self, ref_len: usize, e: EditCounts) {
        self.sentences += 1;
        self.ref_tokens += ref_len;
        self.substitutions += e.substitutions;
        self.insertions += e.insertions;
        self.deletions += e.deletions;
    }
}

/// Corpus scores split by whether every reference word is in the working
/// vocabulary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WerReport {
    pub all: ErrorCounts,
    pub ivs: ErrorCounts,
    pub oovs: ErrorCounts,
}

fn check_pairing(refs: &[Sentence], hyps: &[Sentence]) -> Result<()> {
    if refs.len() != hyps.len() {
        return Err(Error::Pairing {
            refs: refs.len(),
            hyps: hyps.len(),
        });
    }
    Ok(())
}

/// Unsplit corpus counts.
pub fn score(refs: &[Sentence], hyps: &[Sentence]) -> Result<ErrorCounts> {
    check_pairing(refs, hyps)?;
    let mut c = ErrorCounts::default();
    for (r, h) in refs.iter().zip(hyps) {
        c.add(r.len(), edit_distance(r, h));
    }
    Ok(c)
}

pub fn score_corpus(refs: &[Sentence], hyps: &[Sentence], vocab: &Vocabulary) -> Result<WerReport> {
    check_pairing(refs, hyps)?;
    let (_, oovs) = split_ivs_oovs(vocab, refs);
    let mut is_oov = vec![false; refs.len()];
    for i in oovs {
        is_oov[i] = true;
    }
    let mut report = WerReport::default();
    for (i, (r, h)) in refs.iter().zip(hyps).enumerate() {
        let e = edit_distance(r, h);
        report.all.add(r.len(), e);
        if is_oov[i] {
            report.oovs.add(r.len(), e);
        } else {
            report.ivs.add(r.len(), e);
        }
    }
    Ok(report)
}

impl WerReport {
    fn rows(&self) -> [(&'static str, &ErrorCounts); 3] {
        [("All", &self.all), ("IVS", &self.ivs), ("OOVS", &self.oovs)]
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("subset\tsentences\tref_tokens\tsub\tdel\tins\twer\n");
        for (name, c) in self.rows() {
            let _ = writeln!(
                s,
                "{name}\t{}\t{}\t{}\t{}\t{}\t{:.2}",
                c.sentences,
                c.ref_tokens,
                c.substitutions,
                c.deletions,
                c.insertions,
                c.wer()
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<8}{:>8}{:>8}{:>8}\n", "", "All", "IVS", "OOVS");
        let _ = writeln!(
            s,
            "{:<8}{:>8}{:>8}{:>8}",
            "sents", self.all.sentences, self.ivs.sentences, self.oovs.sentences
        );
        let _ = writeln!(
            s,
            "{:<8}{:>8}{:>8}{:>8}",
            "tokens", self.all.ref_tokens, self.ivs.ref_tokens, self.oovs.ref_tokens
        );
        let _ = writeln!(
            s,
            "{:<8}{:>8.2}{:>8.2}{:>8.2}",
            "WER", self.all.wer(), self.ivs.wer(), self.oovs.wer()
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(text: &str) -> Sentence {
        text.split_whitespace().map(String::from).collect()
    }

    // minimal edit count by exhaustive recursion over edit scripts
    fn brute(r: &[u8], h: &[u8]) -> usize {
        match (r.split_first(), h.split_first()) {
            (None, _) => h.len(),
            (_, None) => r.len(),
            (Some((a, rr)), Some((b, hh))) => {
                let keep = brute(rr, hh) + usize::from(a != b);
                keep.min(brute(rr, h) + 1).min(brute(r, hh) + 1)
            }
        }
    }

    #[test]
    fn identical_sequences_cost_nothing() {
        assert_eq!(edit_distance(&s("a b c"), &s("a b c")), EditCounts::default());
    }

    #[test]
    fn single_substitution() {
        let e = edit_distance(&s("a b c"), &s("a x c"));
        assert_eq!((e.substitutions, e.insertions, e.deletions), (1, 0, 0));
    }

    #[test]
    fn deletions_and_insertions() {
        let e = edit_distance(&s("a b c"), &s("a c"));
        assert_eq!((e.substitutions, e.insertions, e.deletions), (0, 0, 1));
        let e = edit_distance(&s("a c"), &s("a b c"));
        assert_eq!((e.substitutions, e.insertions, e.deletions), (0, 1, 0));
        let e = edit_distance(&s(""), &s("a b"));
        assert_eq!(e.insertions, 2);
    }

    #[test]
    fn substitution_preferred_over_delete_insert() {
        // "a b" vs "b c": 2 subs or 1 del + 1 ins are both minimal
        let e = edit_distance(&s("a b"), &s("b c"));
        assert_eq!(e.total(), 2);
        assert_eq!(e.substitutions, 2);
    }

    #[test]
    fn random_pairs_match_exhaustive_search() {
        let mut rng = crate::numeric::rng::seeded(31);
        use rand::Rng;
        for _ in 0..2000 {
            let r: Vec<u8> = (0..rng.random_range(0..=6)).map(|_| rng.random_range(0..3)).collect();
            let h: Vec<u8> = (0..rng.random_range(0..=6)).map(|_| rng.random_range(0..3)).collect();
            assert_eq!(edit_distance(&r, &h).total(), brute(&r, &h));
        }
    }

    #[test]
    fn pairing_mismatch_is_an_error() {
        assert!(matches!(
            score(&[s("a")], &[]),
            Err(Error::Pairing { refs: 1, hyps: 0 })
        ));
    }

    #[test]
    fn perfect_hypothesis_scores_zero_in_its_subset() {
        let v = Vocabulary::words(["a", "b"]).unwrap();
        let r = score_corpus(&[s("a b")], &[s("a b")], &v).unwrap();
        assert_eq!(r.ivs.sentences, 1);
        assert_eq!(r.ivs.wer(), 0.0);
        assert_eq!(r.oovs.sentences, 0);
    }

    #[test]
    fn unk_hypothesis_counts_as_error() {
        let v = Vocabulary::words(["a"]).unwrap();
        let r = score_corpus(&[s("a zz")], &[s("a <unk>")], &v).unwrap();
        assert_eq!(r.oovs.substitutions, 1);
        let r = score_corpus(&[s("<unk>")], &[s("<unk>")], &v).unwrap();
        assert_eq!(r.all.errors(), 0);
    }

    #[test]
    fn reports_render() {
        let v = Vocabulary::words(["a", "b"]).unwrap();
        let r = score_corpus(&[s("a b"), s("c")], &[s("a"), s("c")], &v).unwrap();
        let tsv = r.to_tsv();
        assert!(tsv.starts_with("subset\t"));
        assert!(tsv.contains("All\t2\t3\t0\t1\t0\t33.33"));
        assert!(r.to_table().contains("OOVS"));
    }

    fn corpus_strategy() -> impl Strategy<Value = (Vec<Sentence>, Vec<Sentence>)> {
        let word = prop::sample::select(vec!["a", "b", "c", "d"]);
        let sent = prop::collection::vec(word, 0..6)
            .prop_map(|ws| ws.into_iter().map(String::from).collect::<Sentence>());
        prop::collection::vec((sent.clone(), sent), 1..8)
            .prop_map(|pairs| pairs.into_iter().unzip())
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(
            a in prop::collection::vec(0u8..3, 0..7),
            b in prop::collection::vec(0u8..3, 0..7),
            c in prop::collection::vec(0u8..3, 0..7),
        ) {
            prop_assert_eq!(edit_distance(&a, &a).total(), 0);
            let ab = edit_distance(&a, &b).total();
            prop_assert_eq!(ab, edit_distance(&b, &a).total());
            prop_assert!(edit_distance(&a, &c).total() <= ab + edit_distance(&b, &c).total());
        }

        #[test]
        fn subsets_decompose_all((refs, hyps) in corpus_strategy()) {
            let v = Vocabulary::words(["a", "b"]).unwrap();
            let r = score_corpus(&refs, &hyps, &v).unwrap();
            prop_assert_eq!(r.ivs.ref_tokens + r.oovs.ref_tokens, r.all.ref_tokens);
            prop_assert_eq!(r.ivs.errors() + r.oovs.errors(), r.all.errors());
            prop_assert_eq!(r.ivs.sentences + r.oovs.sentences, r.all.sentences);
            if r.all.ref_tokens > 0 && r.ivs.ref_tokens > 0 && r.oovs.ref_tokens > 0 {
                let t = r.all.ref_tokens as f64;
                let combined = r.ivs.wer() * r.ivs.ref_tokens as f64 / t
                    + r.oovs.wer() * r.oovs.ref_tokens as f64 / t;
                prop_assert!((combined - r.all.wer()).abs() < 1e-9);
            }
        }

        #[test]
        fn wer_invariant_under_self_concatenation((refs, hyps) in corpus_strategy()) {
            let once = score(&refs, &hyps).unwrap();
            let r2: Vec<Sentence> = refs.iter().chain(&refs).cloned().collect();
            let h2: Vec<Sentence> = hyps.iter().chain(&hyps).cloned().collect();
            let twice = score(&r2, &h2).unwrap();
            prop_assert_eq!(once.wer().to_bits(), twice.wer().to_bits());
        }
    }
}
