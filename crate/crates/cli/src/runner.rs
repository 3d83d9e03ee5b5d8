//! Training and evaluation grid.
//!
//! Every run has a full-information arm, a no-information arm and one arm
//! per ablation spec, each repeated per seed. Arm results are written as
//! they finish and recorded in the manifest, so an interrupted run resumes
//! where it stopped.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use ctxinfo::ablate::{AblationEnv, AblationSpec};
use ctxinfo::corpus::{
    build_vocabulary, ingest_corpus, ingest_plain_text, partition_frequency, AnnotatedCorpus,
    FrequencyPartition, ReservedTokens, Split,
};
use ctxinfo::lexicon::{IndexedCorpus, Lexicon};
use ctxinfo::metrics::{
    ablated_information, aggregate_likelihood, average_over_seeds, AblatedInformationResult,
    LikelihoodReport, WindowKey,
};
use ctxinfo::models::adapter::{AdapterEndpoint, AdapterModel};
use ctxinfo::models::ngram::NGramSnapshot;
use ctxinfo::models::{
    score_window, CacheModel, ConditionalModel, LanguageModel, ModelError, NGramModel,
};
use ctxinfo::windows::{
    enumerate_training_windows, enumerate_windows, realize_window, training_views,
    RealizedWindow, WindowDescriptor, WindowMode,
};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CorpusFormat, ExperimentConfig, ModelConfig, Paradigm, FULL_ARM, NONE_ARM};
use crate::manifest::{arm_key, sha256_file, write_atomic, ArmEntry, ArmStatus, RunManifest};
use crate::report;
use crate::RunError;

pub const WORKERS_ENV: &str = "CTXINFO_WORKERS";
pub const RESULTS_JSON: &str = "results.json";
pub const RESULTS_CSV: &str = "results.csv";
pub const WINDOWS_FILE: &str = "windows.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    Full,
    None,
    Spec(usize),
}

pub enum TrainedModel {
    NGram(NGramModel),
    Cache(CacheModel),
    /// Adapters are attached, not trained.
    Adapter,
}

impl TrainedModel {
    pub fn name(&self) -> String {
        match self {
            TrainedModel::NGram(m) => ConditionalModel::name(m),
            TrainedModel::Cache(m) => ConditionalModel::name(m),
            TrainedModel::Adapter => "adapter".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: String,
    pub seed: u64,
    pub model: String,
    pub training_windows: usize,
    pub short_training_docs: usize,
    /// One report per stratum, in config order.
    pub reports: Vec<LikelihoodReport>,
}

/// Trained model as written by the `train` verb.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub config_hash: String,
    pub arm: String,
    pub seed: u64,
    pub lexicon_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub training_windows: usize,
    pub short_training_docs: usize,
    pub snapshot: NGramSnapshot,
}

pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    split: Split,
    reserved: &ReservedTokens,
) -> Result<AnnotatedCorpus, RunError> {
    let file = File::open(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let parsed = match format {
        CorpusFormat::Sidecar => ingest_corpus(reader, split, reserved),
        CorpusFormat::Plain => ingest_plain_text(reader, split, reserved),
    };
    parsed.map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}

/// Everything an arm needs, loaded once per run.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub hash: String,
    pub specs: Vec<AblationSpec>,
    pub lexicon: Arc<Lexicon>,
    pub train: IndexedCorpus,
    pub valid: IndexedCorpus,
    pub partition: FrequencyPartition,
    pub eval_windows: Vec<WindowDescriptor>,
    erase: AblationSpec,
}

impl Experiment {
    pub fn load(config: ExperimentConfig) -> Result<Self, RunError> {
        config.validate()?;
        let reserved = ReservedTokens::default();
        let format = config.corpus.format;
        let train = load_corpus(&config.corpus.train, format, Split::Train, &reserved)?;
        let valid = load_corpus(&config.corpus.validation, format, Split::Validation, &reserved)?;
        let partition = partition_frequency(&build_vocabulary(&train), config.frequency_threshold)
            .map_err(|e| RunError::Config(format!("training corpus: {e}")))?;
        let mut lexicon = Lexicon::new(&reserved);
        let train = IndexedCorpus::new(train, &mut lexicon);
        let valid = IndexedCorpus::new(valid, &mut lexicon);
        let eval_windows = enumerate_windows(&valid, &config.windows);
        if eval_windows.is_empty() {
            return Err(RunError::Config(format!(
                "validation corpus has no document of at least {} words",
                config.windows.prefix_len + config.windows.continuation_len()
            )));
        }
        let (training, short) = enumerate_training_windows(&train, &config.windows);
        if training.is_empty() {
            return Err(RunError::Config("training corpus is empty".into()));
        }
        if short > 0 {
            warn!("{short} training document(s) shorter than one window will be left-padded");
        }
        Ok(Self {
            hash: config.hash(),
            specs: config.specs()?,
            config,
            lexicon: Arc::new(lexicon),
            train,
            valid,
            partition,
            eval_windows,
            erase: AblationSpec::preset("erase-all").expect("preset exists"),
        })
    }

    pub fn arms(&self) -> Vec<Arm> {
        let mut arms = vec![Arm::Full, Arm::None];
        arms.extend((0..self.specs.len()).map(Arm::Spec));
        arms
    }

    pub fn arm_name(&self, arm: Arm) -> &str {
        match arm {
            Arm::Full => FULL_ARM,
            Arm::None => NONE_ARM,
            Arm::Spec(i) => &self.specs[i].name,
        }
    }

    pub fn find_arm(&self, name: &str) -> Option<Arm> {
        self.arms().into_iter().find(|&a| self.arm_name(a) == name)
    }

    fn env(&self, seed: u64) -> AblationEnv<'_> {
        AblationEnv {
            partition: Some(&self.partition),
            seed,
        }
    }

    fn train_mode(&self, arm: Arm) -> (WindowMode, Option<&AblationSpec>) {
        match (self.config.paradigm, arm) {
            (Paradigm::EvalOnly, _) => (WindowMode::EvalOnly, None),
            (Paradigm::TrainAndEval, Arm::Full) => (WindowMode::FullInformation, None),
            (Paradigm::TrainAndEval, Arm::None) => (WindowMode::NoInformation, None),
            (Paradigm::TrainAndEval, Arm::Spec(i)) => (WindowMode::Ablated, Some(&self.specs[i])),
        }
    }

    fn eval_mode(&self, arm: Arm) -> (WindowMode, Option<&AblationSpec>) {
        match (self.config.paradigm, arm) {
            (_, Arm::Full) => (WindowMode::FullInformation, None),
            (Paradigm::TrainAndEval, Arm::None) => (WindowMode::NoInformation, None),
            (Paradigm::EvalOnly, Arm::None) => (WindowMode::Ablated, Some(&self.erase)),
            (_, Arm::Spec(i)) => (WindowMode::Ablated, Some(&self.specs[i])),
        }
    }

    /// Training windows for `arm`, with the number of short documents.
    pub fn training_windows(&self, arm: Arm, seed: u64) -> Result<(Vec<RealizedWindow>, usize), RunError> {
        let (mode, spec) = self.train_mode(arm);
        let (_, short) = enumerate_training_windows(&self.train, &self.config.windows);
        let views = training_views(&self.train, &self.config.windows, mode, spec, &self.env(seed))
            .map_err(|e| RunError::Arm(e.to_string()))?;
        Ok((views, short))
    }

    pub fn train(&self, arm: Arm, seed: u64) -> Result<(TrainedModel, usize, usize), RunError> {
        if let ModelConfig::Adapter { .. } = self.config.model {
            return Ok((TrainedModel::Adapter, 0, 0));
        }
        let (views, short) = self.training_windows(arm, seed)?;
        let model = match &self.config.model {
            ModelConfig::Ngram { .. } => {
                NGramModel::train_windows(&views, self.config.model.ngram().unwrap()).map(TrainedModel::NGram)
            }
            ModelConfig::Cache { .. } => {
                CacheModel::train_windows(&views, self.config.model.cache().unwrap()).map(TrainedModel::Cache)
            }
            ModelConfig::Adapter { .. } => unreachable!(),
        }
        .map_err(|e| RunError::Arm(format!("{}: {e}", self.arm_name(arm))))?;
        Ok((model, views.len(), short))
    }

    pub fn model_file(&self, arm: Arm, seed: u64, model: &TrainedModel, windows: usize, short: usize) -> Option<ModelFile> {
        let (snapshot, lambda) = match model {
            TrainedModel::NGram(m) => (m.snapshot(), None),
            TrainedModel::Cache(m) => (m.base().snapshot(), Some(m.lambda())),
            TrainedModel::Adapter => return None,
        };
        Some(ModelFile {
            config_hash: self.hash.clone(),
            arm: self.arm_name(arm).to_string(),
            seed,
            lexicon_size: self.lexicon.len(),
            lambda,
            training_windows: windows,
            short_training_docs: short,
            snapshot,
        })
    }

    pub fn model_from_file(&self, file: ModelFile) -> Result<(TrainedModel, usize, usize), RunError> {
        if file.config_hash != self.hash || file.lexicon_size != self.lexicon.len() {
            return Err(RunError::Config("model file belongs to a different experiment".into()));
        }
        let base = NGramModel::from_snapshot(file.snapshot).map_err(|e| RunError::Config(e.to_string()))?;
        let model = match file.lambda {
            None => TrainedModel::NGram(base),
            Some(lambda) => TrainedModel::Cache(
                CacheModel::new(base, lambda).map_err(|e| RunError::Config(e.to_string()))?,
            ),
        };
        Ok((model, file.training_windows, file.short_training_docs))
    }

    fn score_all<M: LanguageModel + ?Sized>(
        &self,
        model: &mut M,
        windows: &[RealizedWindow],
    ) -> Result<Vec<Vec<Vec<f64>>>, ModelError> {
        windows
            .iter()
            .map(|w| {
                self.config
                    .windows
                    .strata
                    .iter()
                    .map(|s| score_window(model, w, s))
                    .collect()
            })
            .collect()
    }

    fn score_shared<M: ConditionalModel>(
        &self,
        model: &M,
        windows: &[RealizedWindow],
    ) -> Result<Vec<Vec<Vec<f64>>>, ModelError> {
        windows
            .par_iter()
            .map(|w| {
                self.config
                    .windows
                    .strata
                    .iter()
                    .map(|s| {
                        let scored: Vec<usize> = w.scored_range(s).collect();
                        model.score_positions(&w.input, &scored)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn realize_eval(&self, arm: Arm, seed: u64) -> Result<Vec<RealizedWindow>, RunError> {
        let (mode, spec) = self.eval_mode(arm);
        let env = self.env(seed);
        self.eval_windows
            .iter()
            .map(|d| realize_window(d, mode, spec, &self.valid, self.config.windows.prefix_len, &env))
            .collect::<Result<_, _>>()
            .map_err(|e| RunError::Arm(format!("{}: {e}", self.arm_name(arm))))
    }

    pub fn evaluate(
        &self,
        arm: Arm,
        seed: u64,
        model: &TrainedModel,
        training_windows: usize,
        short_training_docs: usize,
    ) -> Result<ArmResult, RunError> {
        let name = self.arm_name(arm).to_string();
        let windows = self.realize_eval(arm, seed)?;
        let (scores, model_name) = match (model, &self.config.model) {
            (TrainedModel::NGram(m), _) => (self.score_shared(m, &windows), model.name()),
            (TrainedModel::Cache(m), _) => (self.score_shared(m, &windows), model.name()),
            (TrainedModel::Adapter, ModelConfig::Adapter { address, timeout_secs }) => {
                let endpoint = AdapterEndpoint::open(address, Duration::from_secs(*timeout_secs))
                    .map_err(|e| RunError::Arm(format!("{name}: opening adapter: {e}")))?;
                let mut adapter = AdapterModel::new(endpoint, Arc::clone(&self.lexicon));
                let model_name = LanguageModel::name(&adapter);
                (self.score_all(&mut adapter, &windows), model_name)
            }
            (TrainedModel::Adapter, _) => {
                return Err(RunError::Config("adapter model without adapter config".into()))
            }
        };
        let scores = scores.map_err(|e| RunError::Arm(format!("{name}: {e}")))?;
        let mut reports = Vec::new();
        for (k, stratum) in self.config.windows.strata.iter().enumerate() {
            let per_window: Vec<(WindowKey, Vec<f64>)> = windows
                .iter()
                .zip(&scores)
                .map(|(w, s)| {
                    (
                        WindowKey {
                            doc_id: w.doc_id.clone(),
                            start: w.start,
                        },
                        s[k].clone(),
                    )
                })
                .collect();
            reports.push(
                aggregate_likelihood(&name, &stratum.name, seed, &per_window)
                    .map_err(|e| RunError::Arm(format!("{name}: {e}")))?,
            );
        }
        Ok(ArmResult {
            arm: name,
            seed,
            model: model_name,
            training_windows,
            short_training_docs,
            reports,
        })
    }

    pub fn window_records(&self) -> String {
        let mut out = String::new();
        for arm in self.arms() {
            for d in &self.eval_windows {
                let rec = d.record(&self.hash, self.arm_name(arm));
                out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; defaults to `CTXINFO_WORKERS`, then the CPU count.
    pub workers: Option<usize>,
    /// Stop once this many jobs have finished in this invocation.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub trained: usize,
    pub evaluated: usize,
    pub skipped: usize,
    pub failed: Vec<String>,
    pub stopped_early: bool,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub config_hash: String,
    pub model: String,
    pub paradigm: Paradigm,
    pub conditions: Vec<String>,
    pub specs: Vec<String>,
    pub rows: Vec<AblatedInformationResult>,
    /// Spec/condition pairs that could not be computed.
    pub missing: Vec<String>,
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    spec: &'a str,
    condition: &'a str,
    nll_ablated: f64,
    nll_full: f64,
    nll_none: f64,
    a: Option<f64>,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    degenerate: bool,
    seeds: String,
    window_count: usize,
}

fn worker_count(opts: &RunOptions) -> usize {
    opts.workers
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

struct Job {
    seed: u64,
    /// Several arms share one job when they share one model.
    arms: Vec<Arm>,
}

fn arm_path(name: &str, seed: u64) -> PathBuf {
    PathBuf::from("arms").join(name).join(format!("seed-{seed}.json"))
}

fn to_json(value: &impl Serialize) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("serializes");
    text.push('\n');
    text.into_bytes()
}

struct Shared<'a> {
    exp: &'a Experiment,
    dir: &'a Path,
    manifest: Mutex<RunManifest>,
    finished: AtomicUsize,
    trained: AtomicUsize,
    evaluated: AtomicUsize,
}

impl Shared<'_> {
    fn update(&self, key: &str, entry: ArmEntry) -> Result<(), RunError> {
        let mut m = self.manifest.lock().expect("manifest lock");
        m.set(key, entry);
        m.save(self.dir)?;
        Ok(())
    }

    fn run_job(&self, job: &Job) -> Result<(), RunError> {
        let exp = self.exp;
        let pending: Vec<Arm> = {
            let m = self.manifest.lock().expect("manifest lock");
            job.arms
                .iter()
                .copied()
                .filter(|&a| !m.is_complete(self.dir, &arm_key(exp.arm_name(a), job.seed)))
                .collect()
        };
        if pending.is_empty() {
            return Ok(());
        }
        let train_arm = pending[0];
        let trained = exp.train(train_arm, job.seed);
        let (model, windows, short) = match trained {
            Ok(t) => t,
            Err(e) => {
                for &a in &pending {
                    self.fail(a, job.seed, &e)?;
                }
                return Ok(());
            }
        };
        if !matches!(model, TrainedModel::Adapter) {
            self.trained.fetch_add(1, Ordering::SeqCst);
            for &a in &pending {
                self.update(
                    &arm_key(exp.arm_name(a), job.seed),
                    ArmEntry {
                        status: ArmStatus::Trained,
                        ..ArmEntry::pending()
                    },
                )?;
            }
        }
        for &arm in &pending {
            let name = exp.arm_name(arm);
            match exp.evaluate(arm, job.seed, &model, windows, short) {
                Ok(result) => {
                    let rel = arm_path(name, job.seed);
                    let path = self.dir.join(&rel);
                    write_atomic(&path, &to_json(&result))?;
                    self.evaluated.fetch_add(1, Ordering::SeqCst);
                    self.update(
                        &arm_key(name, job.seed),
                        ArmEntry {
                            status: ArmStatus::Evaluated,
                            sha256: Some(sha256_file(&path)?),
                            path: Some(rel),
                            error: None,
                        },
                    )?;
                    info!("{name} seed {}: done", job.seed);
                }
                Err(e) => self.fail(arm, job.seed, &e)?,
            }
        }
        Ok(())
    }

    fn fail(&self, arm: Arm, seed: u64, err: &RunError) -> Result<(), RunError> {
        let name = self.exp.arm_name(arm);
        warn!("{name} seed {seed} failed: {err}");
        self.update(
            &arm_key(name, seed),
            ArmEntry {
                status: ArmStatus::Failed,
                error: Some(err.to_string()),
                ..ArmEntry::pending()
            },
        )
    }
}

/// Run (or resume) the full grid and write results, table and chart.
pub fn run_experiment(config: ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, RunError> {
    let exp = Experiment::load(config)?;
    let dir = exp.config.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let mut manifest = match RunManifest::load(&dir)? {
        Some(m) if m.config_hash != exp.hash => {
            return Err(RunError::Config(format!(
                "{} holds results of a different experiment",
                dir.display()
            )))
        }
        Some(m) => m,
        None => RunManifest::new(&exp.hash),
    };
    for arm in exp.arms() {
        for &seed in &exp.config.seeds {
            let key = arm_key(exp.arm_name(arm), seed);
            if !manifest.is_complete(&dir, &key) {
                manifest.set(&key, ArmEntry::pending());
            }
        }
    }
    manifest.save(&dir)?;
    write_atomic(&dir.join(WINDOWS_FILE), exp.window_records().as_bytes())?;

    let jobs: Vec<Job> = match exp.config.paradigm {
        Paradigm::TrainAndEval => exp
            .arms()
            .into_iter()
            .flat_map(|arm| exp.config.seeds.iter().map(move |&seed| Job { seed, arms: vec![arm] }))
            .collect(),
        Paradigm::EvalOnly => exp
            .config
            .seeds
            .iter()
            .map(|&seed| Job { seed, arms: exp.arms() })
            .collect(),
    };
    let total_keys = exp.arms().len() * exp.config.seeds.len();
    let skipped = exp
        .arms()
        .iter()
        .flat_map(|&a| exp.config.seeds.iter().map(move |&s| (a, s)))
        .filter(|&(a, s)| manifest.is_complete(&dir, &arm_key(exp.arm_name(a), s)))
        .count();

    let shared = Shared {
        exp: &exp,
        dir: &dir,
        manifest: Mutex::new(manifest),
        finished: AtomicUsize::new(0),
        trained: AtomicUsize::new(0),
        evaluated: AtomicUsize::new(0),
    };
    let workers = worker_count(opts);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Other(e.to_string()))?;
    info!("{} jobs on {workers} worker(s), {skipped} arm(s) already complete", jobs.len());
    let stopped = AtomicUsize::new(0);
    let outcomes: Vec<Result<(), RunError>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                if let Some(limit) = opts.stop_after {
                    if shared.finished.load(Ordering::SeqCst) >= limit {
                        stopped.fetch_add(1, Ordering::SeqCst);
                        return Ok(());
                    }
                }
                let r = shared.run_job(job);
                shared.finished.fetch_add(1, Ordering::SeqCst);
                r
            })
            .collect()
    });
    for o in outcomes {
        o?;
    }
    let manifest = shared.manifest.into_inner().expect("manifest lock");
    let failed = manifest.failed();
    let mut summary = RunSummary {
        trained: shared.trained.load(Ordering::SeqCst),
        evaluated: shared.evaluated.load(Ordering::SeqCst),
        skipped,
        failed: failed.clone(),
        stopped_early: stopped.load(Ordering::SeqCst) > 0,
        output_dir: dir.clone(),
    };
    if summary.stopped_early {
        return Ok(summary);
    }
    let complete = manifest
        .arms
        .keys()
        .filter(|k| manifest.is_complete(&dir, k))
        .count();
    if complete < total_keys && failed.is_empty() {
        summary.stopped_early = true;
        return Ok(summary);
    }
    let results = compute_results(&exp, &dir, &manifest, pool)?;
    write_results(&dir, &results)?;
    report::emit_report(&dir)?;
    if failed.is_empty() {
        Ok(summary)
    } else {
        Err(RunError::ArmsFailed(failed))
    }
}

fn load_arm(dir: &Path, manifest: &RunManifest, key: &str) -> Option<ArmResult> {
    if !manifest.is_complete(dir, key) {
        return None;
    }
    let path = dir.join(manifest.arms[key].path.as_ref()?);
    serde_json::from_slice(&fs::read(path).ok()?).ok()
}

fn compute_results(
    exp: &Experiment,
    dir: &Path,
    manifest: &RunManifest,
    pool: rayon::ThreadPool,
) -> Result<ResultsFile, RunError> {
    let seeds = &exp.config.seeds;
    let load_all = |name: &str| -> Option<Vec<ArmResult>> {
        seeds
            .iter()
            .map(|&s| load_arm(dir, manifest, &arm_key(name, s)))
            .collect()
    };
    let full = load_all(FULL_ARM);
    let none = load_all(NONE_ARM);
    let model = full
        .as_ref()
        .and_then(|f| f.first())
        .map(|r| r.model.clone())
        .unwrap_or_default();
    let strata = &exp.config.windows.strata;
    let averaged = |results: &[ArmResult], k: usize| -> Result<LikelihoodReport, RunError> {
        let reports: Vec<LikelihoodReport> = results.iter().map(|r| r.reports[k].clone()).collect();
        average_over_seeds(&reports).map_err(|e| RunError::Other(e.to_string()))
    };
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    let jobs: Vec<(usize, usize)> = (0..exp.specs.len())
        .flat_map(|i| (0..strata.len()).map(move |k| (i, k)))
        .collect();
    let per_spec: Vec<Option<Vec<ArmResult>>> =
        exp.specs.iter().map(|s| load_all(&s.name)).collect();
    let computed: Vec<Result<Option<AblatedInformationResult>, RunError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, k)| {
                let (Some(full), Some(none), Some(abl)) = (&full, &none, &per_spec[i]) else {
                    return Ok(None);
                };
                let r = ablated_information(
                    &averaged(abl, k)?,
                    &averaged(full, k)?,
                    &averaged(none, k)?,
                    &exp.config.bootstrap,
                )
                .map_err(|e| RunError::Other(e.to_string()))?;
                Ok(Some(r))
            })
            .collect()
    });
    for (&(i, k), r) in jobs.iter().zip(computed) {
        match r? {
            Some(row) => {
                if row.degenerate {
                    warn!(
                        "{} / {}: full and no-information likelihoods do not separate, A undefined",
                        row.spec, row.condition
                    );
                }
                rows.push(row)
            }
            None => missing.push(format!("{}/{}", exp.specs[i].name, strata[k].name)),
        }
    }
    Ok(ResultsFile {
        config_hash: exp.hash.clone(),
        model,
        paradigm: exp.config.paradigm,
        conditions: strata.iter().map(|s| s.name.clone()).collect(),
        specs: exp.specs.iter().map(|s| s.name.clone()).collect(),
        rows,
        missing,
    })
}

pub fn write_results(dir: &Path, results: &ResultsFile) -> Result<(), RunError> {
    write_atomic(&dir.join(RESULTS_JSON), &to_json(results))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &results.rows {
        w.serialize(CsvRow {
            spec: &r.spec,
            condition: &r.condition,
            nll_ablated: r.nll_ablated,
            nll_full: r.nll_full,
            nll_none: r.nll_none,
            a: r.a,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            degenerate: r.degenerate,
            seeds: r
                .seeds_used
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(";"),
            window_count: r.window_count,
        })
        .map_err(|e| RunError::Other(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| RunError::Other(e.to_string()))?;
    write_atomic(&dir.join(RESULTS_CSV), &bytes)?;
    Ok(())
}

pub fn load_results(dir: &Path) -> Result<ResultsFile, RunError> {
    let path = dir.join(RESULTS_JSON);
    let bytes = fs::read(&path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}
