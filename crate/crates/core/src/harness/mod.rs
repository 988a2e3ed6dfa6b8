//! Experiment orchestration: data, surrogate scoring, selection, downstream
//! training and evaluation, swept over (method, policy, rate, seed).

pub mod config;
pub mod plot;
pub mod report;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::characterize::{self, EmbeddingMatrix, ScoreMethod, ScoreVector};
use crate::data::{generate_synthetic, group_table, LabeledDataset, SynthConfig};
use crate::error::{Error, Result};
use crate::metrics::{self, mean_std};
use crate::seed;
use crate::select::{self, Coreset, Policy};
use crate::trainer::{self, TrainConfig, TrainedModel};

pub use config::{DataSource, ExperimentConfig, KeyValues};

/// Environment variable bounding the sweep worker pool.
pub const WORKERS_ENV: &str = "COREKIT_WORKERS";

pub const RESULTS_HEADER: [&str; 11] = [
    "dataset",
    "method",
    "policy",
    "rate",
    "seed",
    "bias_level",
    "wga",
    "avg_acc",
    "conflict_ap",
    "n_selected",
    "group_counts",
];

/// One completed (method, policy, rate, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub method: ScoreMethod,
    pub policy: Policy,
    pub rate: f64,
    pub seed: u64,
    pub bias_level: f64,
    pub wga: f64,
    pub avg_acc: f64,
    pub conflict_ap: f64,
    pub n_selected: usize,
    /// `class:attr=count` pairs joined by `;`.
    pub group_counts: String,
}

impl ResultRow {
    fn sort_key(&self) -> (ScoreMethod, Policy, f64, u64) {
        (self.method, self.policy, self.rate, self.seed)
    }

    fn record(&self) -> [String; 11] {
        [
            self.dataset.clone(),
            self.method.to_string(),
            self.policy.to_string(),
            self.rate.to_string(),
            self.seed.to_string(),
            format!("{:.6}", self.bias_level),
            format!("{:.6}", self.wga),
            format!("{:.6}", self.avg_acc),
            format!("{:.6}", self.conflict_ap),
            self.n_selected.to_string(),
            self.group_counts.clone(),
        ]
    }

    fn from_record(rec: &csv::StringRecord, line: usize) -> Result<Self> {
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let bad = |col: &str| Error::Schema(format!("row {line}: bad {col} value {:?}", rec));
        let num = |i: usize, col: &str| field(i).parse::<f64>().map_err(|_| bad(col));
        Ok(Self {
            dataset: field(0).to_string(),
            method: field(1).parse().map_err(|_| bad("method"))?,
            policy: field(2).parse().map_err(|_| bad("policy"))?,
            rate: num(3, "rate")?,
            seed: field(4).parse().map_err(|_| bad("seed"))?,
            bias_level: num(5, "bias_level")?,
            wga: num(6, "wga")?,
            avg_acc: num(7, "avg_acc")?,
            conflict_ap: num(8, "conflict_ap")?,
            n_selected: field(9).parse().map_err(|_| bad("n_selected"))?,
            group_counts: field(10).to_string(),
        })
    }
}

/// Sort rows into canonical (method, policy, rate, seed) order.
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        let (ka, kb) = (a.sort_key(), b.sort_key());
        ka.0.cmp(&kb.0)
            .then(ka.1.cmp(&kb.1))
            .then(ka.2.total_cmp(&kb.2))
            .then(ka.3.cmp(&kb.3))
    });
}

pub fn write_results(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(Error::Schema(format!(
            "expected header {}, found {}",
            RESULTS_HEADER.join(","),
            header.join(",")
        )));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
            if rec.len() != RESULTS_HEADER.len() {
                return Err(Error::Schema(format!("row {i} has {} fields", rec.len())));
            }
            ResultRow::from_record(&rec, i)
        })
        .collect()
}

/// Train and test splits for one run seed.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Synthetic splits are redrawn per run seed; file splits are fixed. Both
/// splits share one label space.
pub fn load_splits(cfg: &ExperimentConfig, run_seed: u64) -> Result<Splits> {
    let (train, test) = match &cfg.data {
        DataSource::Synthetic {
            train,
            n_test,
            rho_test,
        } => {
            let base = train.seed ^ seed::mix64(run_seed);
            let train_cfg = SynthConfig {
                seed: seed::derive(base, "train-split"),
                ..train.clone()
            };
            let test_cfg = SynthConfig {
                n: *n_test,
                rho: *rho_test,
                seed: seed::derive(base, "test-split"),
                ..train.clone()
            };
            (
                generate_synthetic(&train_cfg)?,
                generate_synthetic(&test_cfg)?,
            )
        }
        DataSource::Files { train, test } => {
            let tr = LabeledDataset::read_csv(train, None, None)?;
            let te = LabeledDataset::read_csv(test, None, None)?;
            if te.dim() != tr.dim() {
                return Err(Error::ShapeMismatch {
                    what: "test feature dimension",
                    expected: tr.dim(),
                    found: te.dim(),
                });
            }
            (tr, te)
        }
    };
    let c = train.num_classes().max(test.num_classes());
    let a = train.num_attrs().max(test.num_attrs());
    Ok(Splits {
        train: relabel(train, &cfg.name, c, a)?,
        test: relabel(test, &cfg.name, c, a)?,
    })
}

fn relabel(
    ds: LabeledDataset,
    name: &str,
    num_classes: u32,
    num_attrs: u32,
) -> Result<LabeledDataset> {
    LabeledDataset::new(
        name,
        ds.dim(),
        ds.features().to_vec(),
        ds.class_labels().to_vec(),
        ds.attr_labels().to_vec(),
        num_classes,
        num_attrs,
    )
}

fn surrogate_config(
    cfg: &ExperimentConfig,
    epochs: usize,
    run_seed: u64,
    dynamics: bool,
) -> TrainConfig {
    TrainConfig {
        base_epochs: epochs,
        selection_rate: 1.0,
        seed: seed::derive(run_seed, "surrogate"),
        record_dynamics: dynamics,
        ..cfg.surrogate.clone()
    }
}

/// Embeddings for embedding-based scores: an imported EMB file, the raw
/// features (linear surrogate), or the hidden activations of a short
/// surrogate run.
pub fn embeddings_for(
    cfg: &ExperimentConfig,
    train: &LabeledDataset,
    run_seed: u64,
) -> Result<EmbeddingMatrix> {
    if let Some(path) = &cfg.embeddings_file {
        let emb = EmbeddingMatrix::load(path)?;
        if emb.len() != train.len() {
            return Err(Error::LengthMismatch {
                declared: train.len(),
                found: emb.len(),
            });
        }
        return Ok(emb);
    }
    if cfg.surrogate.hidden_units == 0 {
        return EmbeddingMatrix::new(train.dim(), train.features().to_vec());
    }
    let model = trainer::train(
        train,
        None,
        &surrogate_config(cfg, cfg.short_epochs, run_seed, false),
    )?;
    let (dim, values) = model.embed(train)?;
    EmbeddingMatrix::new(dim, values)
}

/// Score every training sample with `method`.
pub fn compute_scores(
    cfg: &ExperimentConfig,
    train: &LabeledDataset,
    method: ScoreMethod,
    run_seed: u64,
) -> Result<ScoreVector> {
    if let Some(path) = &cfg.scores_file {
        let s = ScoreVector::load(path, method)?;
        s.expect_len(train.len())?;
        return Ok(s);
    }
    let c = train.num_classes() as usize;
    let scores = match method {
        ScoreMethod::El2n | ScoreMethod::Uncertainty => {
            let model = trainer::train(
                train,
                None,
                &surrogate_config(cfg, cfg.short_epochs, run_seed, false),
            )?;
            let probs = model.predict_proba_dataset(train)?;
            if method == ScoreMethod::El2n {
                characterize::el2n(&probs, c, train.class_labels())?
            } else {
                characterize::uncertainty(&probs, c)?
            }
        }
        ScoreMethod::Forgetting => {
            let model = trainer::train(
                train,
                None,
                &surrogate_config(cfg, cfg.long_epochs, run_seed, true),
            )?;
            characterize::forgetting(model.dynamics().expect("dynamics recorded"))?
        }
        ScoreMethod::SelfSup => {
            let emb = embeddings_for(cfg, train, run_seed)?;
            let k = cfg.selfsup_k.unwrap_or(c);
            characterize::selfsup_score(&emb, k, seed::derive(run_seed, "selfsup"))?
        }
        ScoreMethod::SupProto => {
            let emb = embeddings_for(cfg, train, run_seed)?;
            characterize::supproto_score(&emb, train.class_labels(), train.num_classes())?
        }
    };
    scores.expect_len(train.len())?;
    Ok(scores)
}

/// Data and scores shared by every run with the same (method, seed).
#[derive(Debug, Clone)]
pub struct ScoredData {
    pub splits: Splits,
    pub scores: ScoreVector,
    /// Bias-conflicting flags of the full train split.
    pub conflicting: Vec<bool>,
    pub conflict_ap: f64,
}

/// Pipeline stage where a run failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Data,
    Score,
    Select,
    Train,
    Eval,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Data => "data",
            Stage::Score => "score",
            Stage::Select => "select",
            Stage::Train => "train",
            Stage::Eval => "eval",
        })
    }
}

#[derive(Debug)]
pub struct RunFailure {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for RunFailure {}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, RunFailure>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, RunFailure> {
        self.map_err(|error| RunFailure { stage, error })
    }
}

pub fn prepare(
    cfg: &ExperimentConfig,
    method: ScoreMethod,
    run_seed: u64,
) -> std::result::Result<ScoredData, RunFailure> {
    let splits = load_splits(cfg, run_seed).at(Stage::Data)?;
    let scores = compute_scores(cfg, &splits.train, method, run_seed).at(Stage::Score)?;
    let report = metrics::bias_level(&group_table(&splits.train)).at(Stage::Eval)?;
    let conflicting = metrics::label_alignment(&report, &splits.train).at(Stage::Eval)?;
    let conflict_ap = if conflicting.iter().any(|&c| c) {
        metrics::bias_conflict_ap(&scores, &conflicting).at(Stage::Eval)?
    } else {
        // no conflicting samples: every ordering is equally uninformative
        0.0
    };
    Ok(ScoredData {
        splits,
        scores,
        conflicting,
        conflict_ap,
    })
}

/// Downstream training configuration for a coreset at `rate`.
pub fn downstream_config(cfg: &ExperimentConfig, rate: f64, run_seed: u64) -> TrainConfig {
    TrainConfig {
        selection_rate: rate,
        seed: seed::derive(run_seed, "downstream"),
        record_dynamics: false,
        ..cfg.downstream.clone()
    }
}

/// Everything a run produces, beyond its result row.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub row: ResultRow,
    pub coreset: Coreset,
    pub model: TrainedModel,
    pub eval: metrics::EvalReport,
}

/// Select, train and evaluate on already-scored data.
pub fn run_scored(
    cfg: &ExperimentConfig,
    data: &ScoredData,
    policy: Policy,
    rate: f64,
    run_seed: u64,
) -> std::result::Result<RunOutput, RunFailure> {
    let train = &data.splits.train;
    let coreset = select::select(
        train,
        policy,
        Some(&data.scores),
        rate,
        seed::derive(run_seed, "select"),
        &cfg.select,
    )
    .at(Stage::Select)?;
    let dcfg = downstream_config(cfg, rate, run_seed);
    let model = trainer::train(train, Some(&coreset.indices), &dcfg).at(Stage::Train)?;
    let train_table = group_table(train);
    let eval = metrics::group_eval(&model, &data.splits.test, &train_table).at(Stage::Eval)?;
    let core_table = coreset.group_table(train);
    let bias = metrics::bias_level(&core_table).at(Stage::Eval)?;
    let row = ResultRow {
        dataset: train.name().to_string(),
        method: data.scores.method(),
        policy,
        rate,
        seed: run_seed,
        bias_level: bias.bias_level,
        wga: eval.worst_group_accuracy,
        avg_acc: eval.weighted_average_accuracy,
        conflict_ap: data.conflict_ap,
        n_selected: coreset.len(),
        group_counts: core_table.encode(),
    };
    let finite = [row.bias_level, row.wga, row.avg_acc, row.conflict_ap];
    if finite.iter().any(|v| !v.is_finite()) {
        return Err(RunFailure {
            stage: Stage::Eval,
            error: Error::NonFinite {
                what: "result metrics",
                index: 0,
            },
        });
    }
    Ok(RunOutput {
        row,
        coreset,
        model,
        eval,
    })
}

/// Full pipeline for one (method, policy, rate, seed) tuple.
pub fn run_once(
    cfg: &ExperimentConfig,
    method: ScoreMethod,
    policy: Policy,
    rate: f64,
    run_seed: u64,
) -> std::result::Result<ResultRow, RunFailure> {
    let data = prepare(cfg, method, run_seed)?;
    Ok(run_scored(cfg, &data, policy, rate, run_seed)?.row)
}

/// Content hash identifying a run: configuration (without the output
/// directory) plus the run tuple.
pub fn run_key(
    cfg: &ExperimentConfig,
    method: ScoreMethod,
    policy: Policy,
    rate: f64,
    run_seed: u64,
) -> Result<String> {
    #[derive(Serialize)]
    struct Key<'a> {
        config: &'a ExperimentConfig,
        method: ScoreMethod,
        policy: Policy,
        rate: f64,
        seed: u64,
        version: &'static str,
    }
    let json = serde_json::to_vec(&Key {
        config: cfg,
        method,
        policy,
        rate,
        seed: run_seed,
        version: env!("CARGO_PKG_VERSION"),
    })?;
    Ok(hex::encode(Sha256::digest(&json)))
}

/// Write-once store of completed rows keyed by [`run_key`].
#[derive(Debug, Clone)]
pub struct RunCache {
    dir: PathBuf,
}

impl RunCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
        Ok(Self { dir })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<ResultRow> {
        let text = std::fs::read_to_string(self.path(key)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn put(&self, key: &str, row: &ResultRow) -> Result<()> {
        let path = self.path(key);
        if path.exists() {
            return Ok(());
        }
        let tmp = self.dir.join(format!(".{key}.{}.tmp", std::process::id()));
        std::fs::write(&tmp, serde_json::to_vec(row)?).map_err(|e| Error::file(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::file(&path, e))?;
        Ok(())
    }
}

/// A run that failed, with the stage that raised the error.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureRecord {
    pub method: ScoreMethod,
    pub policy: Policy,
    pub rate: f64,
    pub seed: u64,
    pub stage: String,
    pub error: String,
}

/// Aggregate over seeds of one (dataset, method, policy, rate) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub method: ScoreMethod,
    pub policy: Policy,
    pub rate: f64,
    pub n_seeds: usize,
    pub bias_level: (f64, f64),
    pub wga: (f64, f64),
    pub avg_acc: (f64, f64),
    pub conflict_ap: (f64, f64),
}

/// Mean and standard deviation over seeds, in canonical row order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let r0 = &rows[start];
        let end = rows[start..]
            .iter()
            .position(|r| {
                r.dataset != r0.dataset
                    || r.method != r0.method
                    || r.policy != r0.policy
                    || r.rate != r0.rate
            })
            .map_or(rows.len(), |p| start + p);
        let cell = &rows[start..end];
        let col = |f: fn(&ResultRow) -> f64| mean_std(&cell.iter().map(f).collect::<Vec<_>>());
        out.push(SummaryRow {
            dataset: r0.dataset.clone(),
            method: r0.method,
            policy: r0.policy,
            rate: r0.rate,
            n_seeds: cell.len(),
            bias_level: col(|r| r.bias_level),
            wga: col(|r| r.wga),
            avg_acc: col(|r| r.avg_acc),
            conflict_ap: col(|r| r.conflict_ap),
        });
        start = end;
    }
    out
}

pub fn write_summary(path: impl AsRef<Path>, summary: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "dataset",
        "method",
        "policy",
        "rate",
        "n_seeds",
        "bias_level_mean",
        "bias_level_std",
        "wga_mean",
        "wga_std",
        "avg_acc_mean",
        "avg_acc_std",
        "conflict_ap_mean",
        "conflict_ap_std",
    ])?;
    for s in summary {
        let mut rec = vec![
            s.dataset.clone(),
            s.method.to_string(),
            s.policy.to_string(),
            s.rate.to_string(),
            s.n_seeds.to_string(),
        ];
        for (m, sd) in [s.bias_level, s.wga, s.avg_acc, s.conflict_ap] {
            rec.push(format!("{m:.6}"));
            rec.push(format!("{sd:.6}"));
        }
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// AP of a score against its random-ordering baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApRow {
    pub method: ScoreMethod,
    pub seed: u64,
    pub ap: f64,
    pub baseline_mean: f64,
    pub baseline_std: f64,
    pub positive_rate: f64,
}

pub fn ap_row(cfg: &ExperimentConfig, data: &ScoredData, run_seed: u64) -> Result<ApRow> {
    let positives = data.conflicting.iter().filter(|&&c| c).count();
    let baseline = if positives > 0 {
        metrics::random_ap_baseline(
            &data.conflicting,
            cfg.ap_trials,
            seed::derive(run_seed, "ap"),
        )?
    } else {
        metrics::ApBaseline {
            mean: 0.0,
            std: 0.0,
            trials: 0,
        }
    };
    Ok(ApRow {
        method: data.scores.method(),
        seed: run_seed,
        ap: data.conflict_ap,
        baseline_mean: baseline.mean,
        baseline_std: baseline.std,
        positive_rate: positives as f64 / data.conflicting.len() as f64,
    })
}

fn write_ap(path: &Path, rows: &[ApRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "method",
        "seed",
        "ap",
        "baseline_mean",
        "baseline_std",
        "positive_rate",
    ])?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.seed.to_string(),
            format!("{:.6}", r.ap),
            format!("{:.6}", r.baseline_mean),
            format!("{:.6}", r.baseline_std),
            format!("{:.6}", r.positive_rate),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_failures(path: &Path, failures: &[FailureRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["method", "policy", "rate", "seed", "stage", "error"])?;
    for f in failures {
        w.write_record([
            f.method.to_string(),
            f.policy.to_string(),
            f.rate.to_string(),
            f.seed.to_string(),
            f.stage.clone(),
            f.error.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<FailureRecord>,
    pub summary: Vec<SummaryRow>,
    pub ap: Vec<ApRow>,
    pub results_path: PathBuf,
}

/// Run the Cartesian product of methods, policies, rates and seeds.
///
/// Completed runs are cached under `out/cache`, so an interrupted sweep
/// resumes where it stopped. Writes `results.csv`, `summary.csv`, `ap.csv`
/// and `failures.csv` under `cfg.out`, in canonical order.
pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    sweep_with_workers(cfg, worker_count())
}

pub fn sweep_with_workers(cfg: &ExperimentConfig, workers: usize) -> Result<SweepOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::file(&cfg.out, e))?;
    let cache = RunCache::new(cfg.out.join("cache"))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;

    let mut tuples = Vec::new();
    for &m in &cfg.methods {
        for &p in &cfg.policies {
            for &r in &cfg.rates {
                for &s in &cfg.seeds {
                    tuples.push((m, p, r, s, run_key(cfg, m, p, r, s)?));
                }
            }
        }
    }

    // Scoring contexts are computed for every (method, seed) because the AP
    // report needs them even when all runs are cached.
    let mut contexts: Vec<(ScoreMethod, u64)> = Vec::new();
    for &m in &cfg.methods {
        for &s in &cfg.seeds {
            contexts.push((m, s));
        }
    }
    let prepared: HashMap<(ScoreMethod, u64), std::result::Result<Arc<ScoredData>, String>> = pool
        .install(|| {
            contexts
                .par_iter()
                .map(|&(m, s)| {
                    let r = prepare(cfg, m, s)
                        .map(Arc::new)
                        .map_err(|f| format!("{}\t{}", f.stage, f.error));
                    ((m, s), r)
                })
                .collect()
        });

    let outcomes: Vec<std::result::Result<ResultRow, FailureRecord>> = pool.install(|| {
        tuples
            .par_iter()
            .map(|(m, p, r, s, key)| {
                if let Some(row) = cache.get(key) {
                    return Ok(row);
                }
                let fail = |stage: String, error: String| FailureRecord {
                    method: *m,
                    policy: *p,
                    rate: *r,
                    seed: *s,
                    stage,
                    error,
                };
                let data = match &prepared[&(*m, *s)] {
                    Ok(d) => d,
                    Err(msg) => {
                        let (stage, error) = msg.split_once('\t').unwrap_or(("score", msg));
                        return Err(fail(stage.into(), error.into()));
                    }
                };
                match run_scored(cfg, data, *p, *r, *s) {
                    Ok(out) => {
                        if let Err(e) = cache.put(key, &out.row) {
                            log::warn!("could not cache run {key}: {e}");
                        }
                        Ok(out.row)
                    }
                    Err(f) => Err(fail(f.stage.to_string(), f.error.to_string())),
                }
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => rows.push(r),
            Err(f) => failures.push(f),
        }
    }
    sort_rows(&mut rows);
    failures.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.policy.cmp(&b.policy))
            .then(a.rate.total_cmp(&b.rate))
            .then(a.seed.cmp(&b.seed))
    });
    for f in &failures {
        log::warn!(
            "run ({}, {}, {}, {}) failed at {}: {}",
            f.method,
            f.policy,
            f.rate,
            f.seed,
            f.stage,
            f.error
        );
    }

    let mut ap = Vec::new();
    for &(m, s) in &contexts {
        if let Ok(d) = &prepared[&(m, s)] {
            ap.push(ap_row(cfg, d, s)?);
        }
    }

    let results_path = cfg.out.join("results.csv");
    write_results(&results_path, &rows)?;
    let summary = summarize(&rows);
    write_summary(cfg.out.join("summary.csv"), &summary)?;
    write_ap(&cfg.out.join("ap.csv"), &ap)?;
    write_failures(&cfg.out.join("failures.csv"), &failures)?;
    Ok(SweepOutcome {
        rows,
        failures,
        summary,
        ap,
        results_path,
    })
}

/// Mean of a column over the rows matching a (method, policy, rate) cell.
pub fn cell_mean(
    rows: &[ResultRow],
    method: ScoreMethod,
    policy: Policy,
    rate: f64,
    f: impl Fn(&ResultRow) -> f64,
) -> Option<f64> {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method && r.policy == policy && r.rate == rate)
        .map(f)
        .collect();
    (!vals.is_empty()).then(|| mean_std(&vals).0)
}

/// Group counts parsed back from a result row.
pub fn parse_group_counts(s: &str) -> Result<BTreeMap<crate::data::GroupKey, u64>> {
    let mut out = BTreeMap::new();
    for part in s.split(';').filter(|p| !p.is_empty()) {
        let bad = || Error::Schema(format!("bad group count {part:?}"));
        let (k, v) = part.split_once('=').ok_or_else(bad)?;
        let (y, a) = k.split_once(':').ok_or_else(bad)?;
        out.insert(
            crate::data::GroupKey::new(
                y.parse().map_err(|_| bad())?,
                a.parse().map_err(|_| bad())?,
            ),
            v.parse().map_err(|_| bad())?,
        );
    }
    Ok(out)
}
