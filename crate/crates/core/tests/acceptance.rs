//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero if any fails.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use corekit::characterize::{el2n, forgetting, kmeans, selfsup_score, supproto_score, uncertainty};
use corekit::harness::{self, ResultRow};
use corekit::metrics::{average_precision, random_ap_baseline};
use corekit::select::allocate_balanced;
use corekit::trainer::{loss, loss_and_gradient, scaled_epochs};
use corekit::{
    bias_level, DynamicsLog, EmbeddingMatrix, ExperimentConfig, GroupKey, GroupTable,
    LabeledDataset, Policy, ScoreMethod, TrainedModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(what: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || {
        format!("{what}: got {got}, want {want} ± {tol}")
    })
}

fn within(what: &str, elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || {
        format!("{what} took {elapsed:.2?}, limit {limit:?}")
    })
}

fn table2x2(counts: [u64; 4]) -> GroupTable {
    let keys = [(0, 0), (0, 1), (1, 0), (1, 1)];
    GroupTable::from_counts(
        2,
        2,
        keys.iter()
            .zip(counts)
            .map(|(&(y, a), c)| (GroupKey::new(y, a), c)),
    )
    .unwrap()
}

fn sweep_config(lines: &[&str], out: &std::path::Path) -> ExperimentConfig {
    let mut text = lines.join("\n");
    text.push_str(&format!("\nout = {}\n", out.display()));
    ExperimentConfig::parse(&text).unwrap()
}

fn mean_where(rows: &[ResultRow], policy: Policy, rate: f64, f: fn(&ResultRow) -> f64) -> f64 {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.policy == policy && r.rate == rate)
        .map(f)
        .collect();
    assert!(!v.is_empty(), "no rows for {policy} at {rate}");
    v.iter().sum::<f64>() / v.len() as f64
}

// 1
fn bias_fixtures() -> Outcome {
    let t = Instant::now();
    let waterbirds = bias_level(&table2x2([3498, 184, 56, 1057]))
        .unwrap()
        .bias_level;
    let symmetric = bias_level(&table2x2([95, 5, 5, 95])).unwrap().bias_level;
    let elapsed = t.elapsed();
    close("waterbirds-like counts", waterbirds, 3.67, 0.005)?;
    ensure(symmetric == 1.9, || {
        format!("symmetric counts: got {symmetric}, want exactly 1.9")
    })?;
    within("bias fixtures", elapsed, Duration::from_secs(1))?;
    Ok(format!("{waterbirds:.4} and {symmetric} in {elapsed:.2?}"))
}

// 2
fn epoch_scaling() -> Outcome {
    let e = scaled_epochs(100, 0.02).unwrap();
    ensure(e == 5000, || format!("scaled_epochs(100, 0.02) = {e}"))?;
    Ok(format!("scaled_epochs(100, 0.02) = {e}"))
}

// 3
fn score_oracles() -> Outcome {
    let tol = 1e-6;
    let v = |s: corekit::ScoreVector| s.values().to_vec();
    close(
        "el2n perfect",
        v(el2n(&[1.0, 0.0], 2, &[0]).unwrap())[0],
        0.0,
        tol,
    )?;
    close(
        "el2n uniform",
        v(el2n(&[0.5, 0.5], 2, &[0]).unwrap())[0],
        0.5f64.sqrt(),
        tol,
    )?;
    close(
        "el2n 3-class",
        v(el2n(&[0.2, 0.5, 0.3], 3, &[1]).unwrap())[0],
        0.38f64.sqrt(),
        tol,
    )?;

    let entropy = |p: &[f64]| {
        -p.iter()
            .filter(|&&x| x > 0.0)
            .map(|x| x * x.ln())
            .sum::<f64>()
    };
    close(
        "entropy one-hot",
        v(uncertainty(&[1.0, 0.0], 2).unwrap())[0],
        0.0,
        tol,
    )?;
    close(
        "entropy uniform",
        v(uncertainty(&[0.5, 0.5], 2).unwrap())[0],
        2f64.ln(),
        tol,
    )?;
    close(
        "entropy 3-class",
        v(uncertainty(&[0.2, 0.5, 0.3], 3).unwrap())[0],
        entropy(&[0.2, 0.5, 0.3]),
        tol,
    )?;

    let log = |h: &[bool]| DynamicsLog {
        sample_ids: vec![0],
        correct: h.iter().map(|&c| vec![c]).collect(),
    };
    for (hist, want) in [
        (&[true, true, true][..], 0.0),
        (&[false, true, false, true, false][..], 2.0),
        (&[false, false, false][..], 3.0),
    ] {
        close(
            "forgetting",
            v(forgetting(&log(hist)).unwrap())[0],
            want,
            tol,
        )?;
    }

    let emb = EmbeddingMatrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
    for s in v(selfsup_score(&emb, 1, 0).unwrap()) {
        close("selfsup k=1", s, 1.0, tol)?;
    }
    let line = EmbeddingMatrix::from_rows(&[vec![0.0], vec![1.0], vec![10.0], vec![11.0]]).unwrap();
    for seed in 0..10 {
        let mut c = kmeans(&line, 2, seed).unwrap().centroids;
        c.sort_by(f64::total_cmp);
        close("centroid", c[0], 0.5, tol)?;
        close("centroid", c[1], 10.5, tol)?;
        for s in v(selfsup_score(&line, 2, seed).unwrap()) {
            close("selfsup k=2", s, 0.5, tol)?;
        }
    }
    let single = EmbeddingMatrix::from_rows(&[vec![3.0, -1.0]]).unwrap();
    close(
        "point on centroid",
        v(selfsup_score(&single, 1, 0).unwrap())[0],
        0.0,
        tol,
    )?;

    close(
        "supproto singleton",
        v(supproto_score(&single, &[0], 1).unwrap())[0],
        0.0,
        tol,
    )?;
    let pair = EmbeddingMatrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
    for s in v(supproto_score(&pair, &[0, 0], 1).unwrap()) {
        close("supproto pair", s, 2f64.sqrt(), tol)?;
    }

    let scores = [0.9, 0.8, 0.2, 0.1];
    close(
        "AP perfect",
        average_precision(&scores, &[true, true, false, false]).unwrap(),
        1.0,
        tol,
    )?;
    close(
        "AP reversed",
        average_precision(&scores, &[false, false, true, true]).unwrap(),
        (1.0 / 3.0 + 2.0 / 4.0) / 2.0,
        tol,
    )?;

    let positives: Vec<bool> = (0..2000).map(|i| i % 20 == 0).collect();
    let base = random_ap_baseline(&positives, 1000, 7).unwrap();
    close("random AP baseline", base.mean, 0.05, 0.02)?;
    Ok(format!(
        "all fixtures within 1e-6; baseline {:.4} at 5% positives",
        base.mean
    ))
}

// 4
/// max_k |K*x_k - B|, i.e. K times the largest deviation from the uniform share.
fn scaled_deviation(x: &[usize], budget: usize) -> usize {
    let k = x.len();
    x.iter().map(|&v| (k * v).abs_diff(budget)).max().unwrap()
}

/// Exhaustive minimum of [`scaled_deviation`] per budget for one availability vector.
fn exhaustive_minimax(avail: &[usize]) -> Vec<usize> {
    let total: usize = avail.iter().sum();
    let mut best = vec![usize::MAX; total + 1];
    let mut x = vec![0; avail.len()];
    loop {
        let b: usize = x.iter().sum();
        best[b] = best[b].min(scaled_deviation(&x, b));
        let mut i = 0;
        while i < x.len() && x[i] == avail[i] {
            x[i] = 0;
            i += 1;
        }
        if i == x.len() {
            break;
        }
        x[i] += 1;
    }
    best
}

fn allocation_oracle() -> Outcome {
    let t = Instant::now();
    let mut instances = 0usize;
    let mut oracle: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for k in 1..=4u32 {
        let mut avail = vec![0usize; k as usize];
        loop {
            let total: usize = avail.iter().sum();
            let mut sorted = avail.clone();
            sorted.sort_unstable();
            let best = oracle
                .entry(sorted)
                .or_insert_with_key(|s| exhaustive_minimax(s))
                .clone();
            let map: BTreeMap<usize, usize> = avail.iter().copied().enumerate().collect();
            for budget in 0..=20 {
                let got = allocate_balanced(&map, budget);
                if budget > total {
                    ensure(got.is_err(), || {
                        format!("{avail:?} budget {budget}: accepted")
                    })?;
                    continue;
                }
                let alloc = got.map_err(|e| format!("{avail:?} budget {budget}: {e}"))?;
                let x: Vec<usize> = (0..avail.len()).map(|i| alloc.get(&i)).collect();
                ensure(x.iter().sum::<usize>() == budget, || {
                    format!("{avail:?} budget {budget}: {x:?} not conserved")
                })?;
                ensure(x.iter().zip(&avail).all(|(a, b)| a <= b), || {
                    format!("{avail:?} budget {budget}: {x:?} exceeds caps")
                })?;
                let dev = scaled_deviation(&x, budget);
                let opt = best.get(budget).copied();
                ensure(opt == Some(dev), || {
                    format!(
                        "{avail:?} budget {budget}: {x:?} deviation {dev}/{k}, optimum {opt:?}/{k}"
                    )
                })?;
                instances += 1;
            }
            let mut i = 0;
            while i < avail.len() && avail[i] == 10 {
                avail[i] = 0;
                i += 1;
            }
            if i == avail.len() {
                break;
            }
            avail[i] += 1;
        }
    }
    let elapsed = t.elapsed();
    within("allocation oracle", elapsed, Duration::from_secs(30))?;
    Ok(format!("{instances} instances optimal in {elapsed:.2?}"))
}

// 5
fn conflict_ap_pattern() -> Outcome {
    let t = Instant::now();
    let cfg = sweep_config(
        &[
            "synth.n = 5000",
            "synth.dim = 10",
            "synth.rho = 0.95",
            "seeds = 0, 1, 2, 3, 4",
        ],
        std::path::Path::new("unused"),
    );
    let mut detail = Vec::new();
    for method in [
        ScoreMethod::El2n,
        ScoreMethod::Uncertainty,
        ScoreMethod::SupProto,
    ] {
        let mut ap = 0.0;
        let mut base = 0.0;
        for &seed in &cfg.seeds {
            let data = harness::prepare(&cfg, method, seed).map_err(|e| e.to_string())?;
            let row = harness::ap_row(&cfg, &data, seed).map_err(|e| e.to_string())?;
            ap += row.ap / cfg.seeds.len() as f64;
            base += row.baseline_mean / cfg.seeds.len() as f64;
        }
        let factor = if method == ScoreMethod::SupProto {
            1.0
        } else {
            3.0
        };
        ensure(ap >= factor * base && ap > base, || {
            format!("{method}: AP {ap:.4} vs baseline {base:.4} (need x{factor})")
        })?;
        detail.push(format!("{method} {ap:.3}/{base:.3}"));
    }
    let elapsed = t.elapsed();
    within("AP pattern", elapsed, Duration::from_secs(120))?;
    Ok(format!("{} in {elapsed:.2?}", detail.join(", ")))
}

// 6
fn coreset_bias_ordering() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep_config(
        &[
            "methods = el2n",
            "policies = diff, rand, eas",
            "rates = 0.1",
            "seeds = 0, 1, 2, 3, 4",
        ],
        dir.path(),
    );
    let out = harness::sweep(&cfg).map_err(|e| e.to_string())?;
    ensure(out.failures.is_empty(), || {
        format!("{} failed runs", out.failures.len())
    })?;
    let b = |p| mean_where(&out.rows, p, 0.1, |r| r.bias_level);
    let (diff, rand, eas) = (b(Policy::Diff), b(Policy::Rand), b(Policy::Eas));
    ensure(rand - diff >= 0.05 && eas - rand >= 0.05, || {
        format!("diff {diff:.4}, rand {rand:.4}, eas {eas:.4}")
    })?;
    let elapsed = t.elapsed();
    within("bias ordering", elapsed, Duration::from_secs(120))?;
    Ok(format!(
        "diff {diff:.3} < rand {rand:.3} < eas {eas:.3} in {elapsed:.2?}"
    ))
}

// 7
fn small_coreset_gap() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep_config(
        &[
            "synth.dim = 50",
            "methods = el2n",
            "policies = rand",
            "rates = 0.05, 1.0",
            "seeds = 0, 1, 2, 3, 4",
        ],
        dir.path(),
    );
    let out = harness::sweep(&cfg).map_err(|e| e.to_string())?;
    ensure(out.failures.is_empty(), || {
        format!("{} failed runs", out.failures.len())
    })?;
    let gap = |rate| mean_where(&out.rows, Policy::Rand, rate, |r| r.avg_acc - r.wga);
    let (small, full) = (gap(0.05), gap(1.0));
    ensure(small - full >= 0.05, || {
        format!("gap {small:.4} at 0.05 vs {full:.4} at 1.0")
    })?;
    let elapsed = t.elapsed();
    within("accuracy gap", elapsed, Duration::from_secs(300))?;
    Ok(format!(
        "gap {small:.3} at 0.05 vs {full:.3} at 1.0 in {elapsed:.2?}"
    ))
}

// 8
fn group_oracle_policies() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep_config(
        &[
            "methods = el2n",
            "policies = rand, rgbal, diffgbal, easgbal",
            "rates = 0.1",
            "seeds = 0, 1, 2, 3, 4",
        ],
        dir.path(),
    );
    let out = harness::sweep(&cfg).map_err(|e| e.to_string())?;
    ensure(out.failures.is_empty(), || {
        format!("{} failed runs", out.failures.len())
    })?;
    let w = |p| mean_where(&out.rows, p, 0.1, |r| r.wga);
    let (rgbal, rand) = (w(Policy::RGbal), w(Policy::Rand));
    ensure(rgbal >= rand, || {
        format!("RGbal WGA {rgbal:.4} < Random {rand:.4}")
    })?;
    for &seed in &cfg.seeds {
        let cell: Vec<&ResultRow> = out
            .rows
            .iter()
            .filter(|r| r.seed == seed && r.policy.is_group_balanced())
            .collect();
        ensure(cell.len() == 3, || {
            format!("seed {seed}: {} group-balanced rows", cell.len())
        })?;
        ensure(
            cell.iter().all(|r| {
                r.group_counts == cell[0].group_counts && r.bias_level == cell[0].bias_level
            }),
            || format!("seed {seed}: bias levels differ"),
        )?;
    }
    Ok(format!(
        "RGbal WGA {rgbal:.3} >= Random {rand:.3}; group-balanced bias levels identical"
    ))
}

// 9
fn sweep_determinism() -> Outcome {
    let lines = [
        "methods = el2n",
        "policies = rand, diff, strat",
        "rates = 0.1, 0.5, 1.0",
        "seeds = 0, 1",
    ];
    let mut csvs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let out = harness::sweep(&sweep_config(&lines, dir.path())).map_err(|e| e.to_string())?;
        ensure(out.rows.len() == 18, || format!("{} rows", out.rows.len()))?;
        csvs.push(std::fs::read(&out.results_path).unwrap());
    }
    ensure(csvs[0] == csvs[1], || "results differ between runs".into())?;
    Ok(format!("18 rows, {} identical bytes", csvs[0].len()))
}

// 10
fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for hidden in [0usize, 4] {
        for _ in 0..20 {
            let n = rng.random_range(2..8);
            let dim = rng.random_range(1..5);
            let classes = rng.random_range(2..4u32);
            let features: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..classes)).collect();
            let ds =
                LabeledDataset::new("g", dim, features, labels, vec![0; n], classes, 1).unwrap();
            let mut model = TrainedModel::init(dim, hidden, classes as usize, rng.random());
            for p in model.params_mut() {
                *p += rng.random_range(-0.5..0.5);
            }
            let wd = rng.random_range(0.0..0.1);
            let idx: Vec<usize> = (0..n).collect();
            let (_, analytic) = loss_and_gradient(&model, &ds, &idx, wd);
            let h = 1e-4;
            let mut numeric = vec![0.0; analytic.len()];
            for (j, g) in numeric.iter_mut().enumerate() {
                let orig = model.params()[j];
                model.params_mut()[j] = orig + h;
                let up = loss(&model, &ds, &idx, wd);
                model.params_mut()[j] = orig - h;
                let down = loss(&model, &ds, &idx, wd);
                model.params_mut()[j] = orig;
                *g = (up - down) / (2.0 * h);
            }
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
            let rel = norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12);
            worst = worst.max(rel);
            ensure(rel < 1e-4, || {
                format!("hidden={hidden}: relative error {rel:e}")
            })?;
        }
    }
    Ok(format!("40 instances, worst relative error {worst:.2e}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("bias level fixtures", bias_fixtures),
        ("epoch scaling", epoch_scaling),
        ("score and AP oracles", score_oracles),
        (
            "balanced allocation vs exhaustive oracle",
            allocation_oracle,
        ),
        ("conflict detection AP", conflict_ap_pattern),
        ("coreset bias ordering", coreset_bias_ordering),
        ("small-coreset accuracy gap", small_coreset_gap),
        ("group-balanced oracle policies", group_oracle_policies),
        ("sweep determinism", sweep_determinism),
        ("gradient check", gradient_check),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
