use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use corekit::harness::{self, report::build_report, ExperimentConfig};
use corekit::metrics::{average_precision_of_order, group_eval_predictions, random_ap_baseline};
use corekit::trainer::loss;
use corekit::{
    bias_level, generate_synthetic, group_table, train, Error, GroupKey, SynthConfig, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(lines: &[&str], out: &std::path::Path) -> ExperimentConfig {
    let mut text = lines.join("\n");
    text.push_str(&format!("\nout = {}\n", out.display()));
    ExperimentConfig::parse(&text).unwrap()
}

#[test]
fn synthetic_alignment_rate_and_bias_level() {
    let ds = generate_synthetic(&SynthConfig {
        n: 20_000,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let aligned = (0..ds.len())
        .filter(|&i| ds.class_labels()[i] == ds.attr_labels()[i])
        .count();
    assert_abs_diff_eq!(aligned as f64 / ds.len() as f64, 0.95, epsilon = 0.01);
    let b = bias_level(&group_table(&ds)).unwrap().bias_level;
    assert_abs_diff_eq!(b, 1.9, epsilon = 0.05);
}

#[test]
fn balanced_synthetic_has_bias_level_near_one() {
    let ds = generate_synthetic(&SynthConfig {
        n: 20_000,
        rho: 0.5,
        ..SynthConfig::default()
    })
    .unwrap();
    assert_abs_diff_eq!(
        bias_level(&group_table(&ds)).unwrap().bias_level,
        1.0,
        epsilon = 0.05
    );
}

#[test]
fn full_data_linear_model_favours_aligned_groups() {
    for seed in 0..5 {
        let train_ds = generate_synthetic(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let test_ds = generate_synthetic(&SynthConfig {
            n: 4000,
            rho: 0.5,
            seed: seed + 100,
            ..SynthConfig::default()
        })
        .unwrap();
        let model = train(
            &train_ds,
            None,
            &TrainConfig {
                seed,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let pred = model.predict(test_ds.features(), test_ds.dim()).unwrap();
        let eval = group_eval_predictions(&pred, &test_ds, &group_table(&train_ds)).unwrap();
        let acc = |y, a| eval.group_accuracy[&GroupKey::new(y, a)];
        let conflicting = acc(0, 1).max(acc(1, 0));
        let aligned = acc(0, 0).min(acc(1, 1));
        assert!(
            conflicting < aligned,
            "seed {seed}: {conflicting} vs {aligned}"
        );
    }
}

#[test]
fn full_batch_loss_is_monotone_at_small_learning_rate() {
    let ds = generate_synthetic(&SynthConfig {
        n: 200,
        ..SynthConfig::default()
    })
    .unwrap();
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut prev = f64::INFINITY;
    for epochs in 1..=15 {
        let cfg = TrainConfig {
            base_epochs: epochs,
            learning_rate: 1e-3,
            momentum: 0.0,
            batch_size: ds.len(),
            ..TrainConfig::default()
        };
        let l = loss(
            &train(&ds, None, &cfg).unwrap(),
            &ds,
            &all,
            cfg.weight_decay,
        );
        assert!(l <= prev, "epoch {epochs}: {l} > {prev}");
        prev = l;
    }
}

#[test]
fn random_predictor_scores_half_per_group() {
    let test = generate_synthetic(&SynthConfig {
        n: 4000,
        rho: 0.5,
        seed: 9,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pred: Vec<u32> = (0..test.len()).map(|_| rng.random_range(0..2)).collect();
    let eval = group_eval_predictions(&pred, &test, &group_table(&test)).unwrap();
    for (g, &n) in &eval.group_size {
        assert!(n >= 500, "group {g} has only {n} samples");
        assert_abs_diff_eq!(eval.group_accuracy[g], 0.5, epsilon = 0.05);
    }
}

#[test]
fn weighted_average_matches_plain_accuracy_when_proportions_match() {
    // test proportions equal the train table below: 6/3/2/1 out of 12
    let groups = [(0, 0, 6), (0, 1, 3), (1, 0, 2), (1, 1, 1)];
    let mut classes = Vec::new();
    let mut attrs = Vec::new();
    for &(y, a, c) in &groups {
        classes.extend(std::iter::repeat_n(y, c));
        attrs.extend(std::iter::repeat_n(a, c));
    }
    let n = classes.len();
    let test =
        corekit::LabeledDataset::new("w", 1, vec![0.0; n], classes.clone(), attrs, 2, 2).unwrap();
    let train_table = corekit::GroupTable::from_counts(
        2,
        2,
        groups
            .iter()
            .map(|&(y, a, c)| (GroupKey::new(y, a), 10 * c as u64)),
    )
    .unwrap();
    let pred: Vec<u32> = (0..n)
        .map(|i| {
            if i % 3 == 0 {
                1 - classes[i]
            } else {
                classes[i]
            }
        })
        .collect();
    let plain = (0..n).filter(|&i| pred[i] == classes[i]).count() as f64 / n as f64;
    let eval = group_eval_predictions(&pred, &test, &train_table).unwrap();
    assert_abs_diff_eq!(eval.weighted_average_accuracy, plain, epsilon = 1e-12);
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn single_positive_mean_ap_is_harmonic_over_n() {
    for n in 1..=7 {
        for pos in [0, n - 1] {
            let labels: Vec<bool> = (0..n).map(|i| i == pos).collect();
            let perms = permutations(n);
            let mean = perms
                .iter()
                .map(|p| average_precision_of_order(p, &labels).unwrap())
                .sum::<f64>()
                / perms.len() as f64;
            let harmonic: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
            assert_abs_diff_eq!(mean, harmonic / n as f64, epsilon = 1e-12);
        }
    }
}

#[test]
fn random_baseline_tracks_positive_rate() {
    let labels: Vec<bool> = (0..5000).map(|i| i % 20 == 7).collect();
    let b = random_ap_baseline(&labels, 1000, 11).unwrap();
    assert_abs_diff_eq!(b.mean, 0.05, epsilon = 0.02);
    let all = vec![true; 10];
    let b = random_ap_baseline(&all, 50, 0).unwrap();
    assert_eq!((b.mean, b.std), (1.0, 0.0));
    assert!(matches!(
        random_ap_baseline(&[false; 4], 10, 0),
        Err(Error::NoPositives)
    ));
}

#[test]
fn sweep_row_count_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let lines = [
        "synth.n = 800",
        "methods = el2n",
        "policies = rand, diff",
        "rates = 0.1, 0.5, 1.0",
        "seeds = 0, 1",
    ];
    let cfg = config(&lines, dir.path());
    let first = harness::sweep_with_workers(&cfg, 3).unwrap();
    assert_eq!(first.rows.len(), 12);
    assert!(first.failures.is_empty());
    let original = std::fs::read(&first.results_path).unwrap();

    // simulate an interrupted run: half the cache and the results file are gone
    let cache = dir.path().join("cache");
    let mut entries: Vec<_> = std::fs::read_dir(&cache)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    assert_eq!(entries.len(), 12);
    for p in entries.iter().step_by(2) {
        std::fs::remove_file(p).unwrap();
    }
    std::fs::remove_file(&first.results_path).unwrap();
    let resumed = harness::sweep_with_workers(&cfg, 1).unwrap();
    assert_eq!(std::fs::read(&resumed.results_path).unwrap(), original);

    let fresh = tempfile::tempdir().unwrap();
    let again = harness::sweep_with_workers(&config(&lines, fresh.path()), 4).unwrap();
    assert_eq!(std::fs::read(&again.results_path).unwrap(), original);
}

#[test]
fn failed_runs_are_logged_and_others_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        &[
            "synth.n = 300",
            "methods = el2n, selfsup",
            "selfsup.k = 100000",
            "policies = rand",
            "rates = 0.5",
            "seeds = 0, 1",
        ],
        dir.path(),
    );
    let out = harness::sweep(&cfg).unwrap();
    assert_eq!(out.rows.len(), 2);
    assert_eq!(out.failures.len(), 2);
    assert!(out.failures.iter().all(|f| f.stage == "score"));
    let log = std::fs::read_to_string(dir.path().join("failures.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    // the CSV keeps six decimals
    let read = harness::read_results(&out.results_path).unwrap();
    assert_eq!(read.len(), out.rows.len());
    for (a, b) in read.iter().zip(&out.rows) {
        assert_eq!(
            (a.policy, a.seed, &a.group_counts),
            (b.policy, b.seed, &b.group_counts)
        );
        assert_abs_diff_eq!(a.wga, b.wga, epsilon = 1e-6);
    }
}

#[test]
fn report_files_cover_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        &[
            "synth.n = 400",
            "methods = el2n",
            "policies = rand, rgbal",
            "rates = 0.2, 1.0",
            "seeds = 0",
        ],
        dir.path(),
    );
    let out = harness::sweep(&cfg).unwrap();
    let written = harness::report::report(&out.results_path, dir.path().join("report")).unwrap();
    assert_eq!(written.len(), 2);
    let svg = std::fs::read_to_string(&written[0]).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("rgbal"));
    let md = std::fs::read_to_string(&written[1]).unwrap();
    assert!(md.contains("| rate | rand | rgbal |"));

    let rep = build_report(&out.rows).unwrap();
    let wga = &rep.figures[0].panels[1];
    for r in &out.rows {
        assert!(wga.y_range.0 <= r.wga && r.wga <= wga.y_range.1);
        assert!(wga.x_range.0 <= r.rate && r.rate <= wga.x_range.1);
    }
}

#[test]
fn single_row_report_and_empty_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        &[
            "synth.n = 200",
            "methods = el2n",
            "policies = rand",
            "rates = 1.0",
            "seeds = 0",
        ],
        dir.path(),
    );
    let out = harness::sweep(&cfg).unwrap();
    assert_eq!(out.rows.len(), 1);
    let rep = build_report(&out.rows).unwrap();
    assert!(rep.figures[0]
        .panels
        .iter()
        .all(|p| p.x_range.0 < p.x_range.1 && p.y_range.0 < p.y_range.1));

    let empty = dir.path().join("empty.csv");
    harness::write_results(&empty, &[]).unwrap();
    assert!(matches!(
        harness::report::report(&empty, dir.path()),
        Err(Error::EmptyResults)
    ));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "dataset,method\nx,el2n\n").unwrap();
    assert!(matches!(harness::read_results(&bad), Err(Error::Schema(_))));
}

#[test]
fn full_rate_random_equals_full_data_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        &[
            "synth.n = 300",
            "methods = el2n",
            "policies = rand",
            "rates = 1.0",
            "seeds = 4",
        ],
        dir.path(),
    );
    let run = harness::run_once(
        &cfg,
        corekit::ScoreMethod::El2n,
        corekit::Policy::Rand,
        1.0,
        4,
    )
    .unwrap();
    let splits = harness::load_splits(&cfg, 4).unwrap();
    assert_eq!(run.n_selected, splits.train.len());
    let direct = train(
        &splits.train,
        None,
        &harness::downstream_config(&cfg, 1.0, 4),
    )
    .unwrap();
    let pred = direct
        .predict(splits.test.features(), splits.test.dim())
        .unwrap();
    let eval = group_eval_predictions(&pred, &splits.test, &group_table(&splits.train)).unwrap();
    assert_abs_diff_eq!(run.wga, eval.worst_group_accuracy, epsilon = 1e-6);
    let counts: BTreeMap<GroupKey, u64> = harness::parse_group_counts(&run.group_counts).unwrap();
    assert_eq!(counts, group_table(&splits.train).counts().clone());
}
