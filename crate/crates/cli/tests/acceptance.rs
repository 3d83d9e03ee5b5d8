//! Acceptance criteria, one test each. Every test prints a single
//! `PASS`/`FAIL` line with the measured quantities.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ctxinfo::ablate::{
    apply, Ablation, AblationEnv, AblationSpec, ShuffleScope, ShuffleUnit, Slot, SHUFFLE_MODES,
};
use ctxinfo::corpus::{
    build_vocabulary, ingest_corpus, partition_frequency, AnnotatedDocument, FrequencyClass,
    Pos, ReservedTokens, Split, WordToken,
};
use ctxinfo::metrics::{
    ablated_information, aggregate_likelihood, BootstrapConfig, LikelihoodReport, WindowKey,
};
use ctxinfo::models::ConditionalModel;
use ctxinfo_cli::config::ExperimentConfig;
use ctxinfo_cli::runner::{run_experiment, Arm, Experiment, ResultsFile, RunOptions, TrainedModel};
use ctxinfo_cli::synth::{generate, SynthConfig};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn report(name: &str, ok: bool, detail: &str) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

// ---------------------------------------------------------------------------
// Ablation invariants

const POS_TAGS: [Pos; 8] = [
    Pos::Noun,
    Pos::Propn,
    Pos::Verb,
    Pos::Aux,
    Pos::Adj,
    Pos::Adv,
    Pos::Det,
    Pos::Punct,
];

fn random_doc(rng: &mut ChaCha8Rng, len: usize) -> AnnotatedDocument {
    let mut tokens = Vec::with_capacity(len);
    let mut sentence = 0u32;
    let mut left_in_sentence = rng.gen_range(1..16);
    let mut span = 0usize;
    let mut in_span = 0usize;
    for i in 0..len {
        if left_in_sentence == 0 {
            sentence += 1;
            left_in_sentence = rng.gen_range(1..16);
        }
        left_in_sentence -= 1;
        if in_span == 0 && rng.gen_bool(0.1) {
            span += 1;
            in_span = rng.gen_range(1..4);
        }
        let entity = (in_span > 0).then(|| format!("ENT{span}"));
        in_span = in_span.saturating_sub(1);
        tokens.push(WordToken {
            surface: format!("w{}", rng.gen_range(0..(i % 50 + 5))),
            pos: POS_TAGS[rng.gen_range(0..POS_TAGS.len())],
            entity_span: entity,
            sentence_index: sentence,
            sentence_id: format!("s{sentence}"),
        });
    }
    AnnotatedDocument {
        doc_id: format!("r{}", rng.gen::<u32>()),
        explicit_id: true,
        annotated: true,
        tokens,
    }
}

fn words(slots: &[Slot]) -> Vec<usize> {
    slots
        .iter()
        .filter_map(|s| match s {
            Slot::Word(p) => Some(*p),
            Slot::Pad => None,
        })
        .collect()
}

fn runs_of(doc: &AnnotatedDocument, range: std::ops::Range<usize>) -> Vec<Vec<usize>> {
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for p in range {
        match runs.last_mut() {
            Some(r) if doc.tokens[r[0]].sentence_index == doc.tokens[p].sentence_index => r.push(p),
            _ => runs.push(vec![p]),
        }
    }
    runs
}

/// `out` is a concatenation of exactly the sequences in `blocks`.
fn is_block_permutation(out: &[usize], blocks: &[Vec<usize>]) -> bool {
    let mut remaining: Vec<&Vec<usize>> = blocks.iter().collect();
    let mut i = 0;
    while i < out.len() {
        let Some(k) = remaining.iter().position(|b| out[i..].starts_with(b)) else {
            return false;
        };
        i += remaining.swap_remove(k).len();
    }
    remaining.is_empty()
}

fn shuffle_violations(
    doc: &AnnotatedDocument,
    range: std::ops::Range<usize>,
    unit: ShuffleUnit,
    scope: ShuffleScope,
    slots: &[Slot],
) -> Vec<&'static str> {
    let mut v = Vec::new();
    let out = words(slots);
    if slots.len() != range.len() || out.len() != range.len() {
        v.push("length");
    }
    let mut sorted = out.clone();
    sorted.sort_unstable();
    if sorted != range.clone().collect::<Vec<_>>() {
        v.push("multiset");
        return v;
    }
    let start = range.start;
    let sent = |p: usize| doc.tokens[p].sentence_index;
    let ctx_blocks: Vec<Vec<usize>> = range.clone().collect::<Vec<_>>().chunks(3).map(<[usize]>::to_vec).collect();
    let runs = runs_of(doc, range.clone());
    let ok = match (unit, scope) {
        (ShuffleUnit::Word, ShuffleScope::Context) => true,
        (ShuffleUnit::TrigramBlock, ShuffleScope::Context) => is_block_permutation(&out, &ctx_blocks),
        (ShuffleUnit::Word, ShuffleScope::Sentence) => {
            out.iter().enumerate().all(|(k, &p)| sent(p) == sent(start + k))
        }
        (ShuffleUnit::Word, ShuffleScope::TrigramBlock) => {
            out.iter().enumerate().all(|(k, &p)| (p - start) / 3 == k / 3)
        }
        (ShuffleUnit::TrigramBlock, ShuffleScope::Sentence) => {
            let same_sentence = out.iter().enumerate().all(|(k, &p)| sent(p) == sent(start + k));
            let mut offset = 0;
            let blocks_ok = runs.iter().all(|r| {
                let seg = &out[offset..offset + r.len()];
                offset += r.len();
                let blocks: Vec<Vec<usize>> = r.chunks(3).map(<[usize]>::to_vec).collect();
                is_block_permutation(seg, &blocks)
            });
            same_sentence && blocks_ok
        }
        (ShuffleUnit::Sentence, ShuffleScope::Context) => is_block_permutation(&out, &runs),
        _ => false,
    };
    if !ok {
        v.push("boundary");
    }
    v
}

#[test]
fn ablation_invariant_suite() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut violations: BTreeMap<String, usize> = BTreeMap::new();
    let mut checked = 0usize;

    for (mode, &(unit, scope)) in SHUFFLE_MODES.iter().enumerate() {
        let spec = AblationSpec::new(format!("shuffle-{mode}"), Ablation::Shuffle { unit, scope });
        for i in 0..1000 {
            let len = rng.gen_range(1..400);
            let doc = random_doc(&mut rng, len);
            let a = rng.gen_range(0..doc.len());
            let b = rng.gen_range(a + 1..=doc.len());
            let env = AblationEnv { partition: None, seed: i };
            let seg = apply(&spec, &doc, a..b, &env).unwrap();
            for what in shuffle_violations(&doc, a..b, unit, scope, &seg.slots) {
                *violations.entry(format!("{unit}/{scope} {what}")).or_default() += 1;
            }
            checked += 1;
        }
    }

    let vocab_doc = random_doc(&mut rng, 3000);
    let vocab = build_vocabulary(&ctxinfo::corpus::AnnotatedCorpus {
        split: Split::Train,
        documents: vec![vocab_doc],
    });
    let partition = partition_frequency(&vocab, 0.8).unwrap();
    let deletions = [
        "nouns",
        "nouns-verbs",
        "nouns-verbs-adj",
        "content-words",
        "func-words",
        "named-entities",
        "common",
        "rare",
    ];
    for name in deletions {
        let spec = AblationSpec::preset(name).unwrap();
        let predicate = |doc: &AnnotatedDocument, p: usize| -> bool {
            let t = &doc.tokens[p];
            match &spec.ablation {
                Ablation::PosFilter { pos_set } => pos_set.contains(&t.pos.class()),
                Ablation::EntityFilter => t.entity_span.is_some(),
                Ablation::FrequencyFilter { keep } => {
                    let common = partition.common.contains(&t.surface);
                    (*keep == FrequencyClass::Common) == common
                }
                _ => unreachable!(),
            }
        };
        for _ in 0..1000 {
            let len = rng.gen_range(1..400);
            let doc = random_doc(&mut rng, len);
            let a = rng.gen_range(0..doc.len());
            let b = rng.gen_range(a + 1..=doc.len());
            let env = AblationEnv { partition: Some(&partition), seed: 0 };
            let seg = apply(&spec, &doc, a..b, &env).unwrap();
            let kept = words(&seg.slots);
            let expected: Vec<usize> = (a..b).filter(|&p| predicate(&doc, p)).collect();
            if seg.slots.len() != b - a {
                *violations.entry(format!("{name} length")).or_default() += 1;
            }
            let pads = seg.slots.iter().take_while(|s| **s == Slot::Pad).count();
            if pads != b - a - kept.len() {
                *violations.entry(format!("{name} left-padding")).or_default() += 1;
            }
            let mut as_set = kept.clone();
            as_set.sort_unstable();
            as_set.dedup();
            if as_set != expected {
                *violations.entry(format!("{name} predicate")).or_default() += 1;
            }
            if kept.windows(2).any(|w| w[0] >= w[1]) {
                *violations.entry(format!("{name} order")).or_default() += 1;
            }
            checked += 1;
        }
    }
    let elapsed = t0.elapsed();
    let total: usize = violations.values().sum();
    report(
        "ablation invariant suite",
        total == 0 && elapsed < Duration::from_secs(60),
        &format!("{checked} segments, {total} violations {violations:?}, {elapsed:.2?}"),
    );
}

// ---------------------------------------------------------------------------
// Visualization fixtures

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

#[test]
fn visualization_fixtures() {
    let text = fs::read_to_string(fixture("vinken.tsv")).unwrap();
    let corpus = ingest_corpus(text.as_bytes(), Split::Validation, &ReservedTokens::default()).unwrap();
    let doc = &corpus.documents[0];
    let partition = partition_frequency(&build_vocabulary(&corpus), 0.8).unwrap();
    let cases = [
        ("nouns", "Pierre Vinken years board director Nov. Mr. Vinken chairman Elsevier N.V. publishing group"),
        ("nouns-verbs", "Pierre Vinken years will join board director Nov. Mr. Vinken chairman Elsevier N.V. publishing group"),
        ("nouns-verbs-adj", "Pierre Vinken years old will join board nonexecutive director Nov. Mr. Vinken chairman Elsevier N.V. Dutch publishing group"),
        ("content-words", "Pierre Vinken years old will join board nonexecutive director Nov. Mr. Vinken chairman Elsevier N.V. Dutch publishing group"),
        ("func-words", ", 61 , the as a 29 . is of , the ."),
        ("named-entities", "Pierre Vinken 61 years old Nov. 29 Vinken Elsevier N.V. Dutch"),
        ("common", "Pierre years old join board director . Mr. chairman Dutch publishing group ."),
        ("rare", "Vinken nonexecutive Nov. Vinken Elsevier N.V."),
    ];
    let env = AblationEnv { partition: Some(&partition), seed: 0 };
    let mut failures = Vec::new();
    for (name, expected) in cases {
        let spec = AblationSpec::preset(name).unwrap();
        let got = apply(&spec, doc, 0..doc.len(), &env).unwrap().kept_text(doc);
        if got != expected {
            failures.push(format!("{name}: got {got:?}"));
        }
    }
    report(
        "visualization fixtures",
        failures.is_empty(),
        &format!(
            "{}/{} strings reproduced{}",
            cases.len() - failures.len(),
            cases.len(),
            if failures.is_empty() { String::new() } else { format!("; mismatches: {}", failures.join("; ")) }
        ),
    );
}

// ---------------------------------------------------------------------------
// Metric algebra

fn injected(spec: &str, nll: &[f64], counts: &[usize]) -> LikelihoodReport {
    let windows: Vec<(WindowKey, Vec<f64>)> = nll
        .iter()
        .zip(counts)
        .enumerate()
        .map(|(i, (&v, &c))| (WindowKey { doc_id: format!("d{i}"), start: 0 }, vec![-v; c]))
        .collect();
    aggregate_likelihood(spec, "mid_range", 1, &windows).unwrap()
}

#[test]
fn metric_algebra() {
    let boot = BootstrapConfig { resamples: 100, ..Default::default() };
    let one = [1usize];
    let hand = ablated_information(
        &injected("f", &[3.2], &one),
        &injected("full", &[3.0], &one),
        &injected("none", &[3.5], &one),
        &boot,
    )
    .unwrap();
    // (3.2 - 3.0) / (3.5 - 3.0) = 0.2 / 0.5
    let hand_err = (hand.a.unwrap() - 0.4).abs();
    let zero = ablated_information(&injected("f", &[3.0], &one), &injected("full", &[3.0], &one), &injected("none", &[3.5], &one), &boot).unwrap();
    let unit = ablated_information(&injected("f", &[3.5], &one), &injected("full", &[3.0], &one), &injected("none", &[3.5], &one), &boot).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut affine = 0;
    let mut monotone = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..6);
        let counts: Vec<usize> = (0..n).map(|_| rng.gen_range(1..50)).collect();
        let full: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..6.0)).collect();
        let none: Vec<f64> = full.iter().map(|f| f + rng.gen_range(0.05..2.0)).collect();
        let abl: Vec<f64> = full.iter().map(|f| f + rng.gen_range(-0.5..2.5)).collect();
        let (ra, rf, rn) = (injected("f", &abl, &counts), injected("full", &full, &counts), injected("none", &none, &counts));
        let a = ablated_information(&ra, &rf, &rn, &boot).unwrap().a.unwrap();
        let c = rng.gen_range(-3.0..3.0);
        let shifted = ablated_information(&ra.shifted(c), &rf.shifted(c), &rn.shifted(c), &boot)
            .unwrap()
            .a
            .unwrap();
        if (shifted - a).abs() > 1e-9 {
            affine += 1;
        }
        let up = ablated_information(&ra.shifted(rng.gen_range(1e-3..1.0)), &rf, &rn, &boot)
            .unwrap()
            .a
            .unwrap();
        if up <= a {
            monotone += 1;
        }
    }
    report(
        "metric algebra",
        hand_err <= 1e-12 && zero.a == Some(0.0) && unit.a == Some(1.0) && affine == 0 && monotone == 0,
        &format!(
            "|A-0.4| = {hand_err:e}, identity {:?}, erase {:?}, affine violations {affine}/10000, monotonicity violations {monotone}/10000",
            zero.a, unit.a
        ),
    );
}

// ---------------------------------------------------------------------------
// Pipeline runs

struct Corpora {
    dir: tempfile::TempDir,
}

impl Corpora {
    fn new(train_words: usize, valid_words: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let gen = |words, seed| generate(&SynthConfig { words, seed, ..SynthConfig::default() });
        fs::write(dir.path().join("train.tsv"), gen(train_words, 101)).unwrap();
        fs::write(dir.path().join("valid.tsv"), gen(valid_words, 202)).unwrap();
        Self { dir }
    }

    fn config(&self, extra: &str, out: &str) -> PathBuf {
        let path = self.dir.path().join(format!("{out}.toml"));
        fs::write(
            &path,
            format!(
                "output_dir = \"{out}\"\n{extra}\n[corpus]\ntrain = \"train.tsv\"\nvalidation = \"valid.tsv\"\n"
            ),
        )
        .unwrap();
        path
    }
}

fn results(dir: &Path) -> ResultsFile {
    serde_json::from_slice(&fs::read(dir.join("results.json")).unwrap()).unwrap()
}

fn a_of(r: &ResultsFile, spec: &str, cond: &str) -> Option<f64> {
    r.rows.iter().find(|x| x.spec == spec && x.condition == cond).and_then(|x| x.a)
}

struct Calibration {
    results: ResultsFile,
    elapsed: Duration,
    words: usize,
}

fn calibration() -> &'static Calibration {
    static RUN: OnceLock<Calibration> = OnceLock::new();
    RUN.get_or_init(|| {
        let corpora = Corpora::new(1_000_000, 100_000);
        let path = corpora.config(
            "seeds = [7]\nablations = [\"identity\", \"erase-all\"]\n[model]\nclass = \"ngram\"\norder = 3",
            "calibration",
        );
        let t0 = Instant::now();
        let config = ExperimentConfig::load(&path).unwrap();
        let out = config.output_dir.clone();
        run_experiment(config, &RunOptions::default()).unwrap();
        Calibration {
            results: results(&out),
            elapsed: t0.elapsed(),
            words: 1_000_000,
        }
    })
}

#[test]
fn calibration_identity() {
    let c = calibration();
    let mid = a_of(&c.results, "identity", "mid_range");
    let long = a_of(&c.results, "identity", "long_range");
    let ok = [mid, long].iter().all(|a| a.is_some_and(|a| a.abs() <= 1e-9))
        && c.elapsed < Duration::from_secs(300);
    report(
        "calibration, identity",
        ok,
        &format!("{} training words, A mid {mid:?}, A long {long:?}, run {:.1?}", c.words, c.elapsed),
    );
}

#[test]
fn calibration_erasure() {
    let c = calibration();
    let long = a_of(&c.results, "erase-all", "long_range");
    let mid = a_of(&c.results, "erase-all", "mid_range");
    report(
        "calibration, erasure",
        long.is_some_and(|a| (a - 1.0).abs() <= 1e-9),
        &format!("A long {long:?} (mid {mid:?}), run {:.1?}", c.elapsed),
    );
}

#[test]
fn cache_oracle() {
    let t0 = Instant::now();
    let corpora = Corpora::new(300_000, 60_000);
    let shuffles = [
        "shuffle-all",
        "shuf-trigrams-globally",
        "shuf-within-sent",
        "shuf-within-trigrams",
        "shuf-trigrams-within-sent",
        "shuf-sent",
    ];
    let list: Vec<String> = shuffles.iter().chain(&["common"]).map(|s| format!("\"{s}\"")).collect();
    let path = corpora.config(
        &format!("seeds = [3]\nablations = [{}]\n[model]\nclass = \"cache\"", list.join(", ")),
        "cache",
    );
    let config = ExperimentConfig::load(&path).unwrap();
    let out = config.output_dir.clone();
    run_experiment(config, &RunOptions::default()).unwrap();
    let r = results(&out);
    let mut worst: f64 = 0.0;
    let mut missing = 0;
    for s in shuffles {
        for cond in ["mid_range", "long_range"] {
            match a_of(&r, s, cond) {
                Some(a) => worst = worst.max(a.abs()),
                None => missing += 1,
            }
        }
    }
    let common: Vec<Option<f64>> = ["mid_range", "long_range"].iter().map(|c| a_of(&r, "common", c)).collect();
    let elapsed = t0.elapsed();
    report(
        "cache oracle",
        missing == 0
            && worst <= 1e-12
            && common.iter().all(|a| a.is_some_and(|a| a > 0.2))
            && elapsed < Duration::from_secs(300),
        &format!("max |A| over 6 shuffles x 2 strata = {worst:e}, A(common) = {common:?}, {elapsed:.1?}"),
    );
}

#[test]
fn estimator_equivalence() {
    let corpora = Corpora::new(10_000, 10_000);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for class in ["ngram", "cache"] {
        let path = corpora.config(
            &format!("seeds = [5]\nablations = [\"shuffle-all\", \"nouns\"]\n[model]\nclass = \"{class}\""),
            class,
        );
        let exp = Experiment::load(ExperimentConfig::load(&path).unwrap()).unwrap();
        for arm in [Arm::Full, Arm::None, Arm::Spec(0), Arm::Spec(1)] {
            let (model, w, s) = exp.train(arm, 5).unwrap();
            let batched = exp.evaluate(arm, 5, &model, w, s).unwrap();
            let windows = exp.realize_eval(arm, 5).unwrap();
            for (k, stratum) in exp.config.windows.strata.iter().enumerate() {
                let mut sum = 0.0;
                let mut count = 0usize;
                for win in &windows {
                    for i in win.scored_range(stratum) {
                        let ctx = &win.input[..i];
                        sum += match &model {
                            TrainedModel::NGram(m) => m.log_prob(ctx, win.input[i]),
                            TrainedModel::Cache(m) => m.log_prob(ctx, win.input[i]),
                            TrainedModel::Adapter => unreachable!(),
                        };
                        count += 1;
                    }
                }
                let brute = -sum / count as f64;
                worst = worst.max((brute - batched.reports[k].mean_nll).abs());
                compared += 1;
            }
        }
    }
    report(
        "estimator equivalence",
        worst <= 1e-10 && compared == 16,
        &format!("{compared} arm/stratum means, max |batched - brute force| = {worst:e}"),
    );
}

// ---------------------------------------------------------------------------
// End-to-end smoke

const SMOKE_SPECS: [&str; 12] = [
    "identity",
    "shuffle-all",
    "shuf-trigrams-globally",
    "shuf-within-sent",
    "shuf-within-trigrams",
    "shuf-trigrams-within-sent",
    "shuf-sent",
    "replace-w-old",
    "nouns",
    "nouns-verbs",
    "named-entities",
    "common",
];

fn all_files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn evaluated_arms(dir: &Path) -> usize {
    fs::read_to_string(dir.join("manifest.json"))
        .map(|m| m.matches("\"evaluated\"").count())
        .unwrap_or(0)
}

#[test]
fn end_to_end_smoke() {
    let bin = env!("CARGO_BIN_EXE_ctxinfo");
    let corpora = Corpora::new(1_000_000, 100_000);
    let specs: Vec<String> = SMOKE_SPECS.iter().map(|s| format!("\"{s}\"")).collect();
    let body = format!("seeds = [1, 2]\nablations = [{}]", specs.join(", "));
    let straight = corpora.config(&body, "straight");
    let killed = corpora.config(&body, "killed");
    let root = corpora.dir.path();

    let t0 = Instant::now();
    let status = Command::new(bin)
        .args(["run", "-c"])
        .arg(&straight)
        .stderr(Stdio::null())
        .stdout(Stdio::null())
        .status()
        .unwrap();
    let full_run = t0.elapsed();
    let reference = all_files(&root.join("straight"));
    let emitted = ["results.json", "results.csv", "chart.svg"]
        .iter()
        .all(|f| reference.contains_key(Path::new(f)));

    // Kill a second run part-way, then resume it.
    let mut child = Command::new(bin)
        .args(["run", "--workers", "1", "-c"])
        .arg(&killed)
        .stderr(Stdio::null())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let out = root.join("killed");
    let deadline = Instant::now() + Duration::from_secs(600);
    while evaluated_arms(&out) < 6 && Instant::now() < deadline && child.try_wait().unwrap().is_none() {
        std::thread::sleep(Duration::from_millis(20));
    }
    let killed_after = evaluated_arms(&out);
    let was_running = child.try_wait().unwrap().is_none();
    child.kill().unwrap();
    child.wait().unwrap();
    let partial = !out.join("results.json").exists();

    let resume = Command::new(bin).args(["run", "-c"]).arg(&killed).output().unwrap();
    let resumed = all_files(&out);
    let rerun = Command::new(bin).args(["run", "-c"]).arg(&killed).output().unwrap();
    let rerun_log = String::from_utf8_lossy(&rerun.stderr).to_string();
    let rerun_files = all_files(&out);

    let differing: BTreeSet<&PathBuf> = reference
        .keys()
        .chain(resumed.keys())
        .filter(|k| k.file_name() != Some("manifest.json".as_ref()))
        .filter(|k| reference.get(*k) != resumed.get(*k))
        .collect();
    let arms = reference.keys().filter(|k| k.starts_with("arms")).count();
    let rows = results(&root.join("straight")).rows.len();
    let no_retraining = rerun_log.contains("trained 0,");
    let ok = status.success()
        && emitted
        && arms == (SMOKE_SPECS.len() + 2) * 2
        && rows == SMOKE_SPECS.len() * 2
        && was_running
        && partial
        && resume.status.success()
        && differing.is_empty()
        && rerun.status.success()
        && no_retraining
        && rerun_files == resumed
        && full_run < Duration::from_secs(1800);
    let names: HashSet<String> = differing.iter().map(|p| p.display().to_string()).collect();
    report(
        "end-to-end smoke",
        ok,
        &format!(
            "grid {} specs x 2 seeds in {full_run:.1?}, {arms} arm files, {rows} result rows; killed after {killed_after} arms (running: {was_running}), resumed byte-identical: {} (differing {names:?}), re-run without training: {no_retraining}",
            SMOKE_SPECS.len(),
            differing.is_empty()
        ),
    );
}
