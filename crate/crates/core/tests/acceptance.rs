//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Set `MODASR_ACCEPTANCE_DIR` to keep the generated corpus, checkpoints
//! and reports in a fixed directory instead of a temporary one.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde_json::Value;

use modular_asr::ctc::{
    ctc_loss, ctc_loss_and_grad, ctc_loss_bruteforce, merge_beta, min_frames, PosteriorSequence,
};
use modular_asr::numeric::rng::seeded;
use modular_asr::numeric::{axpy, dot, grad_check, uniform_init, Matrix, ParamStore};
use modular_asr::pipeline::decode::{a2p_posteriors, decode_modular, p2w_decode, p2w_input};
use modular_asr::pipeline::ModelCheckpoint;
use modular_asr::psd::{kept_frames, PsdConfig};
use modular_asr::Error;
use modular_asr::seq2seq::{
    AdditiveAttention, Direction, EncoderRoute, LstmCell, RecurrentStack, Seq2Seq, Seq2SeqConfig,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_posteriors(rng: &mut impl Rng, frames: usize, width: usize, spread: f64) -> PosteriorSequence {
    let data = (0..frames * width).map(|_| rng.random_range(-spread..spread)).collect();
    PosteriorSequence::from_logits(&Matrix::new(frames, width, data).unwrap(), 0)
}

fn random_target(rng: &mut impl Rng, len: usize, labels: usize) -> Vec<usize> {
    (0..len).map(|_| rng.random_range(1..=labels)).collect()
}

// ---------------------------------------------------------------- 1

fn ctc_oracle() -> Outcome {
    let mut rng = seeded(101);
    let mut draws = 0;
    let mut worst: f64 = 0.0;
    let mut infeasible = 0;
    while draws < 1024 {
        for t in 1..=8 {
            for v in 1..=4 {
                for l in 1..=4 {
                    let post = random_posteriors(&mut rng, t, v + 1, 3.0);
                    let target = random_target(&mut rng, l, v);
                    let slow = ctc_loss_bruteforce(&post, &target).map_err(|e| e.to_string())?;
                    if t < min_frames(&target) {
                        // no alignment exists: the oracle sums nothing, the lattice refuses
                        let refused = matches!(ctc_loss(&post, &target), Err(Error::InfeasibleTarget { .. }));
                        ensure(slow == f64::INFINITY && refused, || format!("T={t} V={v} {target:?}: {slow}"))?;
                        infeasible += 1;
                    } else {
                        let fast = ctc_loss(&post, &target).map_err(|e| e.to_string())?;
                        let d = (fast - slow).abs();
                        ensure(d <= 1e-9, || format!("T={t} V={v} {target:?}: |Δ| = {d:e}"))?;
                        worst = worst.max(d);
                    }
                    draws += 1;
                }
            }
        }
    }
    Ok(format!("{draws} draws ({infeasible} infeasible), max |Δ| = {worst:.1e}"))
}

// ---------------------------------------------------------------- 2

const GRAD_TOL: f64 = 1e-4;
const GRAD_CASES: u64 = 50;

fn check_all(name: &str, mut case: impl FnMut(u64) -> Result<f64, String>) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for seed in 0..GRAD_CASES {
        let err = case(seed)?;
        ensure(err < GRAD_TOL, || format!("{name} instance {seed}: relative error {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(worst)
}

fn ctc_gradients(seed: u64) -> Result<f64, String> {
    let mut rng = seeded(1000 + seed);
    let v = rng.random_range(1..=4);
    let l = rng.random_range(1..=3);
    let target = random_target(&mut rng, l, v);
    let t = min_frames(&target) + rng.random_range(0..4);
    let mut store = ParamStore::new();
    let id = store.add("logits", uniform_init(t, v + 1, 1, &mut rng)).unwrap();
    grad_check(&mut store, 1e-5, |s| {
        let post = PosteriorSequence::from_logits(s.value(id), 0);
        let (loss, g) = ctc_loss_and_grad(&post, &target)?;
        s.grad_mut(id).add_assign(&g);
        Ok(loss)
    })
    .map_err(|e| e.to_string())
}

fn s2s_gradients(seed: u64) -> Result<f64, String> {
    let mut rng = seeded(2000 + seed);
    let cfg = Seq2SeqConfig {
        input_dim: 3,
        vocab_size: 7,
        enc_layers: rng.random_range(1..=2),
        enc_hidden: 3,
        dec_layers: rng.random_range(1..=2),
        dec_hidden: 4,
        embed_dim: 3,
        attn_dim: 3,
    };
    let mut store = ParamStore::new();
    let m = Seq2Seq::new(&mut store, cfg, 0, 1, 2, &mut rng).map_err(|e| e.to_string())?;
    // sharper attention and at least three frames, so attention parameters
    // carry gradients well above central-difference roundoff
    let att: Vec<_> = store.ids().filter(|&id| store.name(id).starts_with("s2s.att.")).collect();
    for id in att {
        store.value_mut(id).scale(5.0);
    }
    let mut x = uniform_init(rng.random_range(3..=6), 3, 1, &mut rng);
    x.scale(3.0);
    let target = (0..rng.random_range(1..=3)).map(|_| rng.random_range(3..7)).collect::<Vec<_>>();
    grad_check(&mut store, 1e-5, |s| m.loss_and_backward(s, &x, &target, EncoderRoute::Primary))
        .map_err(|e| e.to_string())
}

fn attention_gradients(seed: u64) -> Result<f64, String> {
    let mut rng = seeded(3000 + seed);
    let t = rng.random_range(1..=6);
    let mut store = ParamStore::new();
    let att = AdditiveAttention::new(&mut store, "att", 4, 3, 5, &mut rng).unwrap();
    let hid = store.add("states", uniform_init(t, 4, 1, &mut rng)).unwrap();
    let qid = store.add("query", uniform_init(1, 3, 1, &mut rng)).unwrap();
    let wc = uniform_init(1, 4, 1, &mut rng);
    grad_check(&mut store, 1e-5, |s| {
        let states = s.value(hid).clone();
        let query = s.value(qid).row(0).to_vec();
        let p = s.params();
        let keys = att.keys(p, &states);
        let step = att.step(p, &keys, &states, &query);
        let loss = dot(&step.context, wc.row(0));
        let mut dk = Matrix::zeros(t, 5);
        let mut dh = Matrix::zeros(t, 4);
        let (p, mut g) = s.split();
        let dq = att.step_backward(p, &mut g, &step, &states, wc.row(0), &mut dk, &mut dh);
        att.keys_backward(p, &mut g, &states, &dk, &mut dh);
        g.get_mut(hid).add_assign(&dh);
        axpy(1.0, &dq, g.get_mut(qid).data_mut());
        Ok(loss)
    })
    .map_err(|e| e.to_string())
}

fn cell_step_gradients(seed: u64) -> Result<f64, String> {
    let mut rng = seeded(4000 + seed);
    let t_len = rng.random_range(1..=8);
    let mut store = ParamStore::new();
    let cell = LstmCell::new(&mut store, "c", 3, 4, &mut rng).unwrap();
    let x = uniform_init(t_len, 3, 1, &mut rng);
    let w = uniform_init(t_len, 4, 1, &mut rng);
    grad_check(&mut store, 1e-5, |s| {
        let mut steps = Vec::new();
        let (mut hp, mut cp) = (vec![0.0; 4], vec![0.0; 4]);
        let mut loss = 0.0;
        for t in 0..t_len {
            let st = cell.step(s.params(), x.row(t), &hp, &cp);
            loss += dot(&st.h, w.row(t));
            hp = st.h.clone();
            cp = st.c.clone();
            steps.push(st);
        }
        let (p, mut g) = s.split();
        let (mut dh, mut dc) = (vec![0.0; 4], vec![0.0; 4]);
        for t in (0..t_len).rev() {
            let tot: Vec<f64> = dh.iter().zip(w.row(t)).map(|(a, b)| a + b).collect();
            let (_, dhp, dcp) = cell.step_backward(p, &mut g, &steps[t], &tot, &dc);
            dh = dhp;
            dc = dcp;
        }
        Ok(loss)
    })
    .map_err(|e| e.to_string())
}

fn stack_gradients(seed: u64, direction: Direction) -> Result<f64, String> {
    let mut rng = seeded(5000 + seed);
    let t_len = rng.random_range(1..=8);
    let layers = rng.random_range(1..=2);
    let mut store = ParamStore::new();
    let stack = RecurrentStack::new(&mut store, "s", 3, 4, layers, direction, &mut rng).unwrap();
    let x = uniform_init(t_len, 3, 1, &mut rng);
    let width = match direction {
        Direction::Bi => 8,
        Direction::Uni => 4,
    };
    let w = uniform_init(t_len, width, 1, &mut rng);
    grad_check(&mut store, 1e-5, |s| {
        let (out, cache) = stack.forward(s.params(), &x);
        let loss: f64 = out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum();
        let (p, mut g) = s.split();
        stack.backward(p, &mut g, &cache, &w, false);
        Ok(loss)
    })
    .map_err(|e| e.to_string())
}

fn gradient_suite() -> Outcome {
    let parts = [
        ("ctc", check_all("ctc", ctc_gradients)?),
        ("s2s", check_all("s2s", s2s_gradients)?),
        ("attention", check_all("attention", attention_gradients)?),
        ("lstm-cell", check_all("lstm-cell", cell_step_gradients)?),
        ("uni-stack", check_all("uni-stack", |s| stack_gradients(s, Direction::Uni))?),
        ("bi-stack", check_all("bi-stack", |s| stack_gradients(s, Direction::Bi))?),
    ];
    let detail: Vec<String> = parts.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    Ok(format!("{GRAD_CASES} instances each, worst: {}", detail.join(", ")))
}

// ---------------------------------------------------------------- 3

fn merge_examples() -> Outcome {
    const A: usize = 1;
    const B: usize = 2;
    const BL: usize = 0;
    let cases: [[usize; 6]; 4] = [
        [A, BL, BL, A, A, B],
        [BL, BL, A, BL, A, B],
        [A, BL, A, B, B, B],
        [A, A, BL, A, A, B],
    ];
    for c in &cases {
        ensure(merge_beta(c, BL) == [A, A, B], || format!("β({c:?}) = {:?}", merge_beta(c, BL)))?;
    }
    let mut rng = seeded(303);
    for trial in 0..10_000 {
        let len = rng.random_range(0..8);
        let path: Vec<usize> = (0..len).map(|_| rng.random_range(0..4)).collect();
        let merged = merge_beta(&path, BL);
        // repeat-expand every symbol
        let mut expanded = Vec::new();
        for &u in &path {
            for _ in 0..rng.random_range(1..=3) {
                expanded.push(u);
            }
        }
        // insert blanks at positions that do not separate equal labels
        let mut with_blanks = Vec::new();
        for (i, &u) in expanded.iter().enumerate() {
            let splits_repeat = i > 0 && expanded[i - 1] == u && u != BL;
            if !splits_repeat && rng.random_bool(0.3) {
                with_blanks.push(BL);
            }
            with_blanks.push(u);
        }
        if rng.random_bool(0.3) {
            with_blanks.push(BL);
        }
        ensure(merge_beta(&expanded, BL) == merged, || format!("trial {trial}: repeat expansion of {path:?}"))?;
        ensure(merge_beta(&with_blanks, BL) == merged, || format!("trial {trial}: blanks into {path:?}"))?;
        let mut oracle: Vec<usize> = path.clone();
        oracle.dedup();
        oracle.retain(|&u| u != BL);
        ensure(merged == oracle, || format!("trial {trial}: β({path:?}) = {merged:?}, expected {oracle:?}"))?;
    }
    Ok("4 worked merges, 10000 invariance trials".into())
}

// ---------------------------------------------------------------- pipeline

struct Run {
    dir: PathBuf,
    _tmp: Option<tempfile::TempDir>,
}

impl Run {
    fn new() -> Run {
        match std::env::var_os("MODASR_ACCEPTANCE_DIR") {
            Some(d) => {
                let dir = PathBuf::from(d);
                fs::create_dir_all(&dir).unwrap();
                Run { dir, _tmp: None }
            }
            None => {
                let tmp = tempfile::tempdir().unwrap();
                Run {
                    dir: tmp.path().to_path_buf(),
                    _tmp: Some(tmp),
                }
            }
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    /// Runs a command, returning its exit code and parsed JSON message.
    fn try_cli(&self, args: &[&str]) -> (i32, Value) {
        let mut full = vec!["modasr"];
        full.extend_from_slice(args);
        let (code, msg) = modular_asr::cli::run(full);
        let v = serde_json::from_str(&msg).unwrap_or(Value::String(msg));
        (code, v)
    }

    fn cli(&self, args: &[&str]) -> Result<Value, String> {
        match self.try_cli(args) {
            (0, v) => Ok(v["summary"].clone()),
            (code, v) => Err(format!("`{}` exited {code}: {v}", args.join(" "))),
        }
    }

    fn decode_wer(&self, a2p: &str, p2w: &str, tag: &str, vocab: Option<&str>) -> Result<Value, String> {
        let hyp = self.p(&format!("hyp_{tag}.txt"));
        let feats = self.p("corpus/test.feats");
        self.cli(&["decode", "--a2p", a2p, "--p2w", p2w, "--features", &feats, "--out", &hyp])?;
        let refs = self.p("corpus/test.txt");
        let out = self.p(&format!("wer_{tag}.tsv"));
        let mut args = vec!["eval", "--refs", &refs, "--hyps", &hyp, "--out", &out];
        if let Some(v) = vocab {
            args.extend(["--vocab", v]);
        }
        self.cli(&args)
    }
}

fn num(v: &Value, path: &[&str]) -> Result<f64, String> {
    let mut cur = v;
    for k in path {
        cur = &cur[*k];
    }
    cur.as_f64().ok_or_else(|| format!("missing {} in {v}", path.join(".")))
}

/// Artifacts shared across criteria.
struct Shared {
    corpus: String,
    a2p: String,
    a2p_summary: Value,
    tdi_ctc: String,
    tdi_ctc_summary: Value,
    ft_ctc: String,
    ft_ctc_summary: Value,
    ft_ctc_wer: Value,
    pipeline_secs: f64,
}

fn build_pipeline(run: &Run) -> Result<Shared, String> {
    let t0 = Instant::now();
    let corpus = run.p("corpus");
    run.cli(&["gen-corpus", "--out", &corpus])?;
    let a2p = run.p("a2p.ck");
    let a2p_summary = run.cli(&["train-a2p", "--corpus", &corpus, "--out", &a2p])?;
    let tdi_ctc = run.p("tdi_ctc.ck");
    let tdi_ctc_summary = run.cli(&["init-p2w", "--corpus", &corpus, "--out", &tdi_ctc])?;
    let ft_ctc = run.p("ft_ctc.ck");
    let ft_ctc_summary =
        run.cli(&["finetune-p2w", "--corpus", &corpus, "--a2p", &a2p, "--p2w", &tdi_ctc, "--out", &ft_ctc])?;
    let ft_ctc_wer = run.decode_wer(&a2p, &ft_ctc, "ft_ctc", None)?;
    Ok(Shared {
        corpus,
        a2p,
        a2p_summary,
        tdi_ctc,
        tdi_ctc_summary,
        ft_ctc,
        ft_ctc_summary,
        ft_ctc_wer,
        pipeline_secs: t0.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------- 4

fn psd_checks(run: &Run, shared: &Shared) -> Outcome {
    let margin = (0.999f64 / 0.0005).ln();
    ensure((margin - 7.60).abs() < 0.005, || format!("margin {margin}"))?;
    let lp = Matrix::from_rows(&[
        [0.999f64.ln(), 0.0005f64.ln(), 0.0005f64.ln()],
        [0.1f64.ln(), 0.8f64.ln(), 0.1f64.ln()],
    ])
    .unwrap();
    let post = PosteriorSequence::from_log_probs(lp, 0).map_err(|e| e.to_string())?;
    let at = |l: f64| kept_frames(&post, &PsdConfig::new(l, 1).unwrap()).unwrap();
    ensure(at(8.0) == [0, 1], || format!("λ=8 kept {:?}", at(8.0)))?;
    ensure(at(3.0) == [1], || format!("λ=3 kept {:?}", at(3.0)))?;

    let mut rng = seeded(404);
    let lambdas = [-2.0, 0.0, 1.0, 3.0, 8.0, 15.0, f64::INFINITY];
    for trial in 0..2000 {
        let frames = rng.random_range(1..12);
        let post = random_posteriors(&mut rng, frames, 4, 12.0);
        let sets: Vec<Vec<usize>> = lambdas
            .iter()
            .map(|&l| kept_frames(&post, &PsdConfig::new(l, 1).unwrap()).unwrap())
            .collect();
        for w in sets.windows(2) {
            ensure(w[0].iter().all(|i| w[1].contains(i)), || format!("trial {trial}: {:?} ⊄ {:?}", w[0], w[1]))?;
        }
        ensure(sets.last().unwrap().len() == frames, || format!("trial {trial}: λ=∞ dropped frames"))?;
    }

    let report = run.p("psd_report.tsv");
    let feats = format!("{}/test.feats", shared.corpus);
    let s = run.cli(&["psd-report", "--a2p", &shared.a2p, "--features", &feats, "--out", &report])?;
    let counts: Vec<u64> = s["frames_kept"]
        .as_array()
        .ok_or("psd-report summary lacks frames_kept")?
        .iter()
        .filter_map(Value::as_u64)
        .collect();
    ensure(counts.len() == 3 && counts[0] < counts[1] && counts[1] < counts[2], || {
        format!("kept counts for λ=3,8,15: {counts:?}")
    })?;
    Ok(format!(
        "margin {margin:.4}; nesting over 2000 sequences; kept frames λ=3/8/15: {}/{}/{} of {}",
        counts[0], counts[1], counts[2], s["total_frames"]
    ))
}

// ---------------------------------------------------------------- 5

fn end_to_end(shared: &Shared) -> Outcome {
    let per = num(&shared.a2p_summary, &["report", "dev_error"])?;
    let tdi = num(&shared.tdi_ctc_summary, &["report", "dev_error"])?;
    let wer = num(&shared.ft_ctc_wer, &["wer"])?;
    let secs = shared.pipeline_secs;
    let detail = format!(
        "A2P dev PER {per:.2}%, TDI oracle-input dev WER {tdi:.2}%, modular test WER {wer:.2}%, pipeline {secs:.0} s"
    );
    ensure(per < 10.0 && tdi < 5.0 && wer < 25.0 && secs < 900.0, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- 6

struct TableRow {
    no_ft: f64,
    no_tdi: f64,
    tdi_ft: f64,
}

/// Extra settings per P2W variant. The attention model needs more text
/// epochs before its oracle-input WER settles.
fn variant_settings(variant: &str) -> Vec<String> {
    let mut v = vec![format!("p2w.variant={variant}")];
    if variant == "s2s" {
        v.push("p2w.tdi_epochs=15".into());
    }
    v
}

fn with_sets<'a>(base: &[&'a str], sets: &'a [String]) -> Vec<&'a str> {
    let mut args = base.to_vec();
    for s in sets {
        args.push("--set");
        args.push(s);
    }
    args
}

fn table_one_variant(run: &Run, shared: &Shared, variant: &str) -> Result<TableRow, String> {
    let c = &shared.corpus;
    let a2p = &shared.a2p;
    let sets = variant_settings(variant);
    let (tdi, tdi_summary, ft, ft_summary) = if variant == "ctc" {
        (
            shared.tdi_ctc.clone(),
            shared.tdi_ctc_summary.clone(),
            shared.ft_ctc.clone(),
            shared.ft_ctc_summary.clone(),
        )
    } else {
        let tdi = run.p(&format!("tdi_{variant}.ck"));
        let tdi_summary = run.cli(&with_sets(&["init-p2w", "--corpus", c, "--out", &tdi], &sets))?;
        let ft = run.p(&format!("ft_{variant}.ck"));
        let ft_summary = run.cli(&with_sets(
            &["finetune-p2w", "--corpus", c, "--a2p", a2p, "--p2w", &tdi, "--out", &ft],
            &sets,
        ))?;
        (tdi, tdi_summary, ft, ft_summary)
    };
    let budget = num(&tdi_summary, &["report", "steps"])? + num(&ft_summary, &["report", "steps"])?;
    let mut sets_nt = sets.clone();
    sets_nt.push(format!("p2w.max_steps={budget}"));
    sets_nt.push("p2w.ft_epochs=100000".into());
    let nt = run.p(&format!("notdi_{variant}.ck"));
    let nt_summary = run.cli(&with_sets(&["finetune-p2w", "--corpus", c, "--a2p", a2p, "--out", &nt], &sets_nt))?;
    let nt_steps = num(&nt_summary, &["report", "steps"])?;
    ensure(nt_steps == budget, || format!("{variant}: no-TDI run took {nt_steps} steps, budget {budget}"))?;

    Ok(TableRow {
        no_ft: num(&run.decode_wer(a2p, &tdi, &format!("noft_{variant}"), None)?, &["wer"])?,
        no_tdi: num(&run.decode_wer(a2p, &nt, &format!("notdi_{variant}"), None)?, &["wer"])?,
        tdi_ft: num(&run.decode_wer(a2p, &ft, &format!("tdift_{variant}"), None)?, &["wer"])?,
    })
}

fn table_one(run: &Run, shared: &Shared) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for variant in ["ctc", "s2s"] {
        let r = table_one_variant(run, shared, variant)?;
        let holds = r.no_ft - r.no_tdi >= 1.0 && r.no_tdi - r.tdi_ft >= 1.0;
        ok &= holds;
        lines.push(format!(
            "{variant}: no-FT {:.2} > no-TDI {:.2} > TDI+FT {:.2}{}",
            r.no_ft,
            r.no_tdi,
            r.tdi_ft,
            if holds { "" } else { " (violated)" }
        ));
    }
    let detail = lines.join("; ");
    ensure(ok, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- 7

fn table_six(run: &Run, shared: &Shared) -> Outcome {
    let c = &shared.corpus;
    let a2p = &shared.a2p;
    let cut = format!("{c}/words_cut.txt");
    let oov_text = format!("{c}/oov_text.txt");
    let tdi = run.p("tdi_cut.ck");
    run.cli(&["init-p2w", "--corpus", c, "--vocab", &cut, "--out", &tdi])?;
    let base = run.p("ft_cut.ck");
    run.cli(&["finetune-p2w", "--corpus", c, "--a2p", a2p, "--p2w", &tdi, "--vocab", &cut, "--out", &base])?;
    let before = run.decode_wer(a2p, &base, "cut_base", Some(&cut))?;
    let ext = run.p("ext_alternative.ck");
    run.cli(&[
        "extend-oov", "--corpus", c, "--a2p", a2p, "--p2w", &base, "--text", &oov_text, "--strategy",
        "alternative", "--out", &ext,
    ])?;
    let after = run.decode_wer(a2p, &ext, "cut_alternative", Some(&cut))?;

    let (ivs, oovs) = (num(&before, &["ivs_wer"])?, num(&before, &["oovs_wer"])?);
    let oovs_after = num(&after, &["oovs_wer"])?;

    let (code, msg) = run.try_cli(&[
        "extend-oov", "--corpus", c, "--a2p", a2p, "--p2w", &base, "--text", &oov_text, "--strategy",
        "multimodal", "--out", &run.p("ext_mm_ctc.ck"),
    ]);
    ensure(code == 4, || format!("multimodal on CTC exited {code}: {msg}"))?;
    ensure(!run.path("ext_mm_ctc.ck").exists(), || "multimodal on CTC wrote a checkpoint".into())?;

    // multimodal on the attention model is accepted
    let s2s = run.p("ft_s2s.ck");
    let mm = run.p("ext_mm_s2s.ck");
    let (code, msg) = run.try_cli(&[
        "extend-oov", "--corpus", c, "--a2p", a2p, "--p2w", &s2s, "--text", &oov_text, "--strategy",
        "multimodal", "--set", "p2w.variant=s2s", "--set", "oov.epochs=1", "--out", &mm,
    ]);
    ensure(code == 0, || format!("multimodal on S2S exited {code}: {msg}"))?;

    let detail = format!(
        "baseline IVS {ivs:.2} / OOVS {oovs:.2}; alternative OOVS {oovs_after:.2} (IVS {:.2}); multimodal: CTC rejected, S2S accepted",
        num(&after, &["ivs_wer"])?
    );
    ensure(oovs > ivs && oovs - oovs_after >= 2.0, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- 8

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        if e.file_type().unwrap().is_dir() {
            continue;
        }
        out.insert(e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap());
    }
    out
}

fn determinism(run: &Run, shared: &Shared) -> Outcome {
    let quick = ["a2p.epochs=2", "p2w.tdi_epochs=1", "p2w.ft_epochs=1", "oov.epochs=1"];
    let c = &shared.corpus;
    let mut compared = 0;
    for round in ["r1", "r2"] {
        let d = run.path(round);
        fs::create_dir_all(&d).unwrap();
        let at = |n: &str| d.join(n).display().to_string();
        let go = |args: &[&str]| -> Result<(), String> {
            let mut full = args.to_vec();
            for q in &quick {
                full.extend(["--set", q]);
            }
            run.cli(&full).map(|_| ())
        };
        go(&["gen-corpus", "--out", &at("corpus")])?;
        go(&["train-a2p", "--corpus", c, "--out", &at("a2p.ck")])?;
        go(&["init-p2w", "--corpus", c, "--out", &at("tdi.ck")])?;
        go(&["finetune-p2w", "--corpus", c, "--a2p", &at("a2p.ck"), "--p2w", &at("tdi.ck"), "--out", &at("ft.ck")])?;
        go(&[
            "extend-oov", "--corpus", c, "--a2p", &at("a2p.ck"), "--p2w", &at("ft.ck"), "--text",
            &format!("{c}/oov_text.txt"), "--out", &at("ext.ck"),
        ])?;
        go(&[
            "decode", "--a2p", &at("a2p.ck"), "--p2w", &at("ext.ck"), "--features", &format!("{c}/dev.feats"),
            "--out", &at("hyp.txt"),
        ])?;
        go(&["eval", "--refs", &format!("{c}/dev.txt"), "--hyps", &at("hyp.txt"), "--out", &at("wer.tsv")])?;
        go(&[
            "psd-report", "--a2p", &at("a2p.ck"), "--features", &format!("{c}/dev.feats"), "--out",
            &at("psd.tsv"),
        ])?;
    }
    let a = dir_bytes(&run.path("r1"));
    let b = dir_bytes(&run.path("r2"));
    ensure(a.keys().eq(b.keys()), || "different file sets".into())?;
    for (name, bytes) in &a {
        ensure(&b[name] == bytes, || format!("{name} differs between runs"))?;
        compared += 1;
    }
    let ca = dir_bytes(&run.path("r1/corpus"));
    let cb = dir_bytes(&run.path("r2/corpus"));
    ensure(ca == cb, || "generated corpora differ".into())?;
    Ok(format!("8 commands run twice: {compared} outputs and {} corpus files byte-identical", ca.len()))
}

// ---------------------------------------------------------------- 9

fn decode_audit(run: &Run, shared: &Shared) -> Outcome {
    let src = include_str!("../src/pipeline/decode.rs");
    for word in ["lexicon", "Lexicon", "corpus", "Corpus", "transcript", "std::fs", "File", "read_to_string"] {
        ensure(!src.contains(word), || format!("decode path mentions `{word}`"))?;
    }
    let allowed = [
        "use super::checkpoint::",
        "use super::data::FeatureSequence;",
        "use crate::ctc::",
        "use crate::error::",
        "use crate::numeric::",
        "use crate::psd::",
    ];
    for line in src.lines().map(str::trim).filter(|l| l.starts_with("use ")) {
        ensure(allowed.iter().any(|a| line.starts_with(a)), || format!("unexpected import `{line}`"))?;
    }

    // composed decode equals the three stages run by hand
    let a2p = ModelCheckpoint::read(Path::new(&shared.a2p)).map_err(|e| e.to_string())?;
    let p2w = ModelCheckpoint::read(Path::new(&shared.ft_ctc)).map_err(|e| e.to_string())?;
    let utts = modular_asr::cli::archive::read_archive(Path::new(&format!("{}/test.feats", shared.corpus)))
        .map_err(|e| e.to_string())?;
    for (id, x) in &utts {
        let composed = decode_modular(&a2p, &p2w, x).map_err(|e| e.to_string())?;
        let post = a2p_posteriors(&a2p, x).map_err(|e| e.to_string())?;
        let input = p2w_input(&post, &p2w.psd).map_err(|e| e.to_string())?;
        let manual = p2w_decode(&p2w, &input).map_err(|e| e.to_string())?;
        ensure(composed == manual, || format!("{id}: composed decode differs"))?;
    }

    // decoding with only the two checkpoints and features present
    let iso = run.path("isolated");
    fs::create_dir_all(&iso).unwrap();
    for f in ["a2p.ck", "p2w.ck", "test.feats"] {
        let from = match f {
            "a2p.ck" => PathBuf::from(&shared.a2p),
            "p2w.ck" => PathBuf::from(&shared.ft_ctc),
            _ => PathBuf::from(format!("{}/test.feats", shared.corpus)),
        };
        fs::copy(from, iso.join(f)).unwrap();
    }
    let at = |n: &str| iso.join(n).display().to_string();
    run.cli(&["decode", "--a2p", &at("a2p.ck"), "--p2w", &at("p2w.ck"), "--features", &at("test.feats"), "--out", &at("hyp.txt")])?;
    let isolated = fs::read(iso.join("hyp.txt")).unwrap();
    let original = fs::read(run.path("hyp_ft_ctc.txt")).unwrap();
    ensure(isolated == original, || "isolated decode differs from the pipeline decode".into())?;
    Ok(format!("imports restricted, {} utterances match the staged decode, isolated decode identical", utts.len()))
}

// ---------------------------------------------------------------- main

fn report(n: usize, name: &str, t0: Instant, outcome: Outcome) -> bool {
    let secs = t0.elapsed().as_secs_f64();
    match outcome {
        Ok(d) => {
            println!("PASS {n} {name}: {d} [{secs:.1} s]");
            true
        }
        Err(d) => {
            println!("FAIL {n} {name}: {d} [{secs:.1} s]");
            false
        }
    }
}

fn main() {
    let mut all = true;

    let t = Instant::now();
    all &= report(1, "ctc oracle equivalence", t, ctc_oracle());
    let t = Instant::now();
    all &= report(2, "gradient suite", t, gradient_suite());
    let t = Instant::now();
    all &= report(3, "merge examples", t, merge_examples());

    let run = Run::new();
    let t = Instant::now();
    match build_pipeline(&run) {
        Ok(shared) => {
            all &= report(5, "toy end-to-end", t, end_to_end(&shared));
            let t = Instant::now();
            all &= report(4, "psd", t, psd_checks(&run, &shared));
            let t = Instant::now();
            all &= report(6, "fine-tuning and text initialization trend", t, table_one(&run, &shared));
            let t = Instant::now();
            all &= report(7, "oov trend", t, table_six(&run, &shared));
            let t = Instant::now();
            all &= report(8, "determinism", t, determinism(&run, &shared));
            let t = Instant::now();
            all &= report(9, "decode audit", t, decode_audit(&run, &shared));
        }
        Err(e) => {
            for (n, name) in [
                (4, "psd"),
                (5, "toy end-to-end"),
                (6, "fine-tuning and text initialization trend"),
                (7, "oov trend"),
                (8, "determinism"),
                (9, "decode audit"),
            ] {
                report(n, name, t, Err(format!("pipeline failed: {e}")));
            }
            all = false;
        }
    }
    if !all {
        std::process::exit(1);
    }
}
