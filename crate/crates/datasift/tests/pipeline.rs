//! Cross-module integration checks: baseline equivalences on degenerate
//! partitionings, arm-preference sanity on attribute partitions, and
//! end-to-end reproducibility of the written artifacts.

use datasift::bandit::{run_acquisition, BanditConfig};
use datasift::dataset::{split, synthesize, Dataset, SplitSpec, SyntheticSpec};
use datasift::harness::{
    run_datasift, run_experiment, run_inf, DataConfig, ExperimentConfig, Method,
    PartitionConfig, SplitConfig,
};
use datasift::model::{train, TrainConfig};
use datasift::partition::{fit_gmm, partition_by_attribute};
use datasift::valuation::{
    fit_influence_regressor, sort_partitions, FairnessInfluence, TopKSampler,
};

fn scenario(n: usize, seed: u64) -> (Dataset, Dataset, Dataset) {
    let data = synthesize(&SyntheticSpec::biased_benchmark(n, seed)).unwrap();
    split(&data, &SplitSpec { ratios: (1, 4, 15), rho: 0.25, seed }).unwrap()
}

#[test]
fn autodata_equals_datasift_on_a_single_partition() {
    // With one arm there is nothing for the reward rule to discriminate:
    // the same sampler seed must produce identical acquisition traces.
    let (train_set, test, pool) = scenario(4_000, 21);
    let model_cfg = TrainConfig::default();
    let cfg = BanditConfig {
        budget: 300,
        batch_size: 60,
        tau: 0.0,
        ..BanditConfig::defaults_for_pool(pool.len(), 99)
    };

    let mut part_a = fit_gmm(&pool, 1, 5).unwrap();
    let mut part_b = part_a.clone();
    let a = datasift::harness::run_autodata(&train_set, &test, &pool, &mut part_a, &model_cfg, &cfg)
        .unwrap();
    let b = run_datasift(&train_set, &test, &pool, &mut part_b, &model_cfg, &cfg).unwrap();

    assert_eq!(a.rows.len(), b.rows.len());
    assert!(!a.rows.is_empty());
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        assert_eq!(ra.iter, rb.iter);
        assert_eq!(ra.arm, rb.arm);
        assert_eq!(ra.accepted, rb.accepted);
        assert_eq!(ra.batch_size, rb.batch_size);
        assert_eq!(ra.parity, rb.parity);
        assert_eq!(ra.accuracy, rb.accuracy);
        assert_eq!(ra.budget_used, rb.budget_used);
        assert_eq!(ra.delta_improve, rb.delta_improve);
    }
    assert_eq!(a.acquired, b.acquired);
}

#[test]
fn single_partition_ranked_batches_follow_the_global_score_order() {
    // At g = 1 the per-arm rankings collapse to one global ranking, so the
    // bandit's candidate batches must be exactly the chunks that the
    // plain influence-ordered baseline acquires.
    let (train_set, test, pool) = scenario(4_000, 22);
    let model_cfg = TrainConfig::default();

    // Independent expected order: score the pool with the same regressor
    // pipeline and sort descending (ties toward smaller ids).
    let model0 = train(&train_set, &model_cfg).unwrap();
    let engine = FairnessInfluence::new(&model0, &train_set, &test).unwrap();
    let train_scores = engine.score_all(&train_set).unwrap();
    let reg = fit_influence_regressor(&train_set, &train_scores, 1.0, &model0.design).unwrap();
    let mut keyed: Vec<(f64, usize)> = pool
        .examples()
        .iter()
        .map(|ex| (reg.predict(ex).unwrap(), ex.id))
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let expected: Vec<usize> = keyed.iter().map(|&(_, id)| id).collect();

    let k = 50;
    let inf = run_inf(&train_set, &test, &pool, &model_cfg, 250, k, 1.0).unwrap();
    assert_eq!(inf.acquired, expected[..250].to_vec());

    let mut part = fit_gmm(&pool, 1, 5).unwrap();
    sort_partitions(&mut part, &pool, &reg).unwrap();
    let cfg = BanditConfig {
        budget: 250,
        batch_size: k,
        tau: 0.0,
        ..BanditConfig::defaults_for_pool(pool.len(), 99)
    };
    let mut sampler = TopKSampler;
    let run = run_acquisition(
        &train_set, &test, &pool, &mut part, &model_cfg, &cfg, &mut sampler, None,
    )
    .unwrap();
    for (i, rec) in run.trace.iter().enumerate() {
        assert_eq!(rec.batch, expected[i * k..(i + 1) * k].to_vec(), "batch {i}");
    }
}

#[test]
fn bandit_prefers_the_partition_that_repairs_the_gap() {
    // Partition by the group flag itself: the protected partition holds
    // the thinned-away kind of data, so accepted batches should come from
    // it far more often than from the privileged partition.
    let mut protected_total = 0usize;
    let mut privileged_total = 0usize;
    for seed in [31, 32, 33] {
        let (train_set, test, pool) = scenario(8_000, seed);
        let mut part = partition_by_attribute(&pool, "group").unwrap();
        assert_eq!(part.g(), 2);
        let model_cfg = TrainConfig::default();
        let cfg = BanditConfig::defaults_for_pool(pool.len(), seed);
        let out =
            run_datasift(&train_set, &test, &pool, &mut part, &model_cfg, &cfg).unwrap();
        // Attribute values ascend: partition 0 is group = 0 (protected).
        protected_total += out.rows.iter().filter(|r| r.accepted && r.arm == 0).count();
        privileged_total += out.rows.iter().filter(|r| r.accepted && r.arm == 1).count();
    }
    assert!(
        protected_total > privileged_total,
        "accepted batches: protected {protected_total} vs privileged {privileged_total}"
    );
}

#[test]
fn identical_configs_write_byte_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let config = |out: std::path::PathBuf, seed: u64| ExperimentConfig {
        data: DataConfig::SyntheticBenchmark { n: 3_000 },
        split: SplitConfig::default(),
        partition: PartitionConfig::FixedG { g: 3 },
        method: Method::Datasift,
        budget_frac: 0.2,
        batch_frac: 0.1,
        alpha: 0.1,
        tau: 0.01,
        max_evals: None,
        count_all_selections: false,
        reward: Default::default(),
        refit_every: None,
        lambda_r: 1.0,
        model: TrainConfig::default(),
        seed,
        out_dir: out,
        dump_partitions: true,
        dump_scores: false,
    };

    let s1 = run_experiment(&config(dir.path().join("a"), 7)).unwrap();
    let s2 = run_experiment(&config(dir.path().join("b"), 7)).unwrap();
    let s3 = run_experiment(&config(dir.path().join("c"), 8)).unwrap();

    let read = |name: &str, sub: &str| std::fs::read(dir.path().join(sub).join(name)).unwrap();
    assert_eq!(read("trace.csv", "a"), read("trace.csv", "b"));
    assert_eq!(read("partitions.json", "a"), read("partitions.json", "b"));
    assert_ne!(read("trace.csv", "a"), read("trace.csv", "c"));

    assert_eq!(s1.final_parity, s2.final_parity);
    assert_eq!(s1.acquired_ids, s2.acquired_ids);
    assert_ne!(s1.seed, s3.seed);
}

#[test]
fn satisfied_threshold_stops_before_any_acquisition() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        data: DataConfig::SyntheticBenchmark { n: 3_000 },
        split: SplitConfig::default(),
        partition: PartitionConfig::FixedG { g: 3 },
        method: Method::Datasift,
        budget_frac: 0.2,
        batch_frac: 0.1,
        alpha: 0.1,
        tau: 1.0, // any gap satisfies this
        max_evals: None,
        count_all_selections: false,
        reward: Default::default(),
        refit_every: None,
        lambda_r: 1.0,
        model: TrainConfig::default(),
        seed: 5,
        out_dir: dir.path().join("run"),
        dump_partitions: false,
        dump_scores: false,
    };
    let summary = run_experiment(&config).unwrap();
    assert_eq!(summary.acquired_count, 0);
    assert_eq!(summary.iterations, 0);
    assert_eq!(summary.stop_reason, "threshold-met");
    assert_eq!(summary.initial_parity, summary.final_parity);
    let trace = std::fs::read_to_string(dir.path().join("run/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1, "header only");
}

#[test]
fn every_method_writes_a_complete_summary() {
    let dir = tempfile::tempdir().unwrap();
    for method in [Method::Random, Method::Entropy, Method::Inf, Method::Datasift] {
        let out = dir.path().join(method.name());
        let config = ExperimentConfig {
            data: DataConfig::SyntheticBenchmark { n: 2_000 },
            split: SplitConfig::default(),
            partition: PartitionConfig::FixedG { g: 2 },
            method,
            budget_frac: 0.1,
            batch_frac: 0.2,
            alpha: 0.1,
            tau: 0.01,
            max_evals: None,
            count_all_selections: false,
            reward: Default::default(),
            refit_every: None,
            lambda_r: 1.0,
            model: TrainConfig::default(),
            seed: 17,
            out_dir: out.clone(),
            dump_partitions: false,
            dump_scores: method == Method::Inf,
        };
        let summary = run_experiment(&config).unwrap();
        assert_eq!(summary.schema, 1);
        assert_eq!(summary.method, method.name());
        assert!(summary.acquired_count <= summary.budget);

        let text = std::fs::read_to_string(out.join("summary.json")).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in [
            "schema", "method", "seed", "initial_parity", "final_parity",
            "initial_accuracy", "final_accuracy", "checkpoints", "acquired_ids",
            "budget", "batch_size", "stop_reason", "wall_time_secs",
        ] {
            assert!(parsed.get(key).is_some(), "summary.json missing {key}");
        }
        let header = std::fs::read_to_string(out.join("trace.csv")).unwrap();
        assert!(header.starts_with(
            "iter,method,arm,accepted,batch_size,parity,accuracy,budget_used,delta_improve"
        ));
        if method == Method::Inf {
            assert!(out.join("scores.csv").exists());
        }
    }
}
