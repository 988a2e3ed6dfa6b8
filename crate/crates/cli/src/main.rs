use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use corekit::characterize::forgetting;
use corekit::harness::{self, report, KeyValues};
use corekit::metrics::{bias_conflict_ap, group_eval, label_alignment};
use corekit::select::select;
use corekit::{
    bias_level, group_table, train, Coreset, DynamicsLog, ExperimentConfig, Policy, ScoreMethod,
    ScoreVector, TrainConfig, TrainedModel,
};

#[derive(Parser)]
#[command(
    name = "corekit",
    version,
    about = "Coreset selection and dataset bias auditing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Plain-text `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed; for `sweep` it replaces the `seeds` list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the train and test splits as CSV.
    GenData(Common),
    /// Score every training sample and write an SSF file.
    Score(Common),
    /// Select a coreset and write its manifest.
    Select(Common),
    /// Train a model on the full train split or a coreset.
    Train(Common),
    /// Evaluate a checkpoint on the test split.
    Eval(Common),
    /// Run the full (method, policy, rate, seed) grid.
    Sweep(Common),
    /// Render figures and tables from a results CSV.
    Report(Common),
}

/// Configuration-level problems exit with the usage code.
struct UsageError(anyhow::Error);

struct Ctx {
    kv: KeyValues,
    cfg: ExperimentConfig,
    seed: u64,
    out: PathBuf,
    method: ScoreMethod,
    policy: Policy,
    rate: f64,
}

impl Ctx {
    fn load(common: &Common) -> Result<Self, UsageError> {
        let mut kv = match &common.config {
            Some(path) => KeyValues::from_file(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(UsageError)?,
            None => KeyValues::default(),
        };
        if let Some(out) = &common.out {
            kv.set("out", out.display().to_string());
        }
        if let Some(seed) = common.seed {
            kv.set("seeds", seed.to_string());
        }
        let usage = |e: corekit::Error| UsageError(e.into());
        let cfg = ExperimentConfig::from_kv(&kv).map_err(usage)?;
        let method = kv
            .get("score.method")
            .map_err(usage)?
            .unwrap_or(cfg.methods[0]);
        let policy = kv
            .get("select.policy")
            .map_err(usage)?
            .unwrap_or(Policy::Rand);
        let rate: f64 = kv
            .get("select.rate")
            .map_err(usage)?
            .unwrap_or(cfg.rates[0]);
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(UsageError(anyhow!(
                "select.rate = {rate} must lie in (0, 1]"
            )));
        }
        Ok(Self {
            seed: cfg.seeds[0],
            out: cfg.out.clone(),
            kv,
            cfg,
            method,
            policy,
            rate,
        })
    }

    fn input(&self, key: &str) -> Result<PathBuf> {
        self.kv
            .path(key)
            .ok_or_else(|| anyhow!("`{key}` must be set in the config"))
    }

    fn output(&self, file: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        Ok(self.out.join(file))
    }
}

fn gen_data(ctx: &Ctx) -> Result<()> {
    let splits = harness::load_splits(&ctx.cfg, ctx.seed)?;
    for (name, ds) in [("train.csv", &splits.train), ("test.csv", &splits.test)] {
        let path = ctx.output(name)?;
        ds.write_csv(&path)?;
        let report = bias_level(&group_table(ds))?;
        println!(
            "{}: {} samples, groups {}, bias level {:.4}",
            path.display(),
            ds.len(),
            group_table(ds).encode(),
            report.bias_level
        );
    }
    Ok(())
}

fn scores_for(ctx: &Ctx, train: &corekit::LabeledDataset) -> Result<ScoreVector> {
    let method = ctx.method;
    if method == ScoreMethod::Forgetting && ctx.cfg.scores_file.is_none() {
        if let Some(path) = ctx.kv.path("input.dynamics") {
            let scores = forgetting(&DynamicsLog::read_csv(&path)?)?;
            scores.expect_len(train.len())?;
            return Ok(scores);
        }
    }
    Ok(harness::compute_scores(&ctx.cfg, train, method, ctx.seed)?)
}

fn score(ctx: &Ctx) -> Result<()> {
    let splits = harness::load_splits(&ctx.cfg, ctx.seed)?;
    let scores = scores_for(ctx, &splits.train)?;
    let path = ctx.output(&format!("{}.ssf", scores.method()))?;
    scores.save(&path)?;
    println!(
        "{}: {} {} scores",
        path.display(),
        scores.len(),
        scores.method()
    );
    let conflicting = label_alignment(&bias_level(&group_table(&splits.train))?, &splits.train)?;
    if conflicting.iter().any(|&c| c) {
        println!(
            "bias-conflicting AP: {:.4}",
            bias_conflict_ap(&scores, &conflicting)?
        );
    }
    Ok(())
}

fn select_cmd(ctx: &Ctx) -> Result<()> {
    let splits = harness::load_splits(&ctx.cfg, ctx.seed)?;
    let (policy, rate) = (ctx.policy, ctx.rate);
    let scores = if policy.needs_scores() {
        Some(scores_for(ctx, &splits.train)?)
    } else {
        None
    };
    let coreset = select(
        &splits.train,
        policy,
        scores.as_ref(),
        rate,
        ctx.seed,
        &ctx.cfg.select,
    )?;
    let path = ctx.output("coreset.csv")?;
    coreset.write_manifest(&path)?;
    let table = coreset.group_table(&splits.train);
    println!(
        "{}: {} of {} samples, groups {}, bias level {:.4}",
        path.display(),
        coreset.len(),
        splits.train.len(),
        table.encode(),
        bias_level(&table)?.bias_level
    );
    Ok(())
}

fn train_cmd(ctx: &Ctx) -> Result<()> {
    let splits = harness::load_splits(&ctx.cfg, ctx.seed)?;
    let coreset = ctx
        .kv
        .path("input.coreset")
        .map(Coreset::read_manifest)
        .transpose()?;
    let rate = coreset.as_ref().map_or(1.0, |c| c.rate);
    let cfg = TrainConfig {
        selection_rate: rate,
        seed: ctx.seed,
        ..ctx.cfg.downstream.clone()
    };
    let model = train(
        &splits.train,
        coreset.as_ref().map(|c| c.indices.as_slice()),
        &cfg,
    )?;
    let path = ctx.output("model.ckpt")?;
    model.write_checkpoint(&path)?;
    println!(
        "{}: {} epochs at rate {rate}",
        path.display(),
        cfg.epochs()?
    );
    if let Some(log) = model.dynamics() {
        let dyn_path = ctx.output("dynamics.csv")?;
        log.write_csv(&dyn_path)?;
        println!(
            "{}: {} epochs x {} samples",
            dyn_path.display(),
            log.epochs(),
            log.sample_ids.len()
        );
    }
    Ok(())
}

fn eval_cmd(ctx: &Ctx) -> Result<()> {
    let splits = harness::load_splits(&ctx.cfg, ctx.seed)?;
    let model = TrainedModel::read_checkpoint(ctx.input("input.model")?)?;
    let report = group_eval(&model, &splits.test, &group_table(&splits.train))?;
    let text = report.summary();
    let path = ctx.output("eval.txt")?;
    std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    print!("{text}");
    Ok(())
}

fn sweep_cmd(ctx: &Ctx) -> Result<()> {
    let outcome = harness::sweep(&ctx.cfg)?;
    println!(
        "{}: {} rows, {} failed runs",
        outcome.results_path.display(),
        outcome.rows.len(),
        outcome.failures.len()
    );
    if !outcome.failures.is_empty() {
        bail!("{} runs failed, see failures.csv", outcome.failures.len());
    }
    Ok(())
}

fn report_cmd(ctx: &Ctx) -> Result<()> {
    let results = ctx
        .kv
        .path("input.results")
        .unwrap_or_else(|| ctx.out.join("results.csv"));
    for path in report::report(&results, &ctx.out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn run(command: &Command) -> Result<(), (u8, anyhow::Error)> {
    let (common, f): (&Common, fn(&Ctx) -> Result<()>) = match command {
        Command::GenData(c) => (c, gen_data),
        Command::Score(c) => (c, score),
        Command::Select(c) => (c, select_cmd),
        Command::Train(c) => (c, train_cmd),
        Command::Eval(c) => (c, eval_cmd),
        Command::Sweep(c) => (c, sweep_cmd),
        Command::Report(c) => (c, report_cmd),
    };
    let ctx = Ctx::load(common).map_err(|UsageError(e)| (1, e))?;
    f(&ctx).map_err(|e| (2, e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
