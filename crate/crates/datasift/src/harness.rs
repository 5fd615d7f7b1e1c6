//! Experiment harness: runs one acquisition method end to end from a
//! config, writes a per-iteration trace CSV and a JSON summary, and hosts
//! the simple baselines the guided methods are compared against.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use itertools::Itertools;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::bandit::{
    run_acquisition, AcquisitionRun, BanditConfig, RewardKind, UniformSampler,
};
use crate::dataset::{load_csv, synthesize, CsvSchema, Dataset, SplitSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::fairness::{demographic_parity, entropy};
use crate::model::{train, TrainConfig};
use crate::partition::{fit_gmm, partition_by_attribute, select_g, Partitioning};
use crate::valuation::{
    fit_influence_regressor, FairnessInfluence, InfluenceScore, PoolRefitter, TopKSampler,
};

/// The acquisition methods the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Uniform batches from the whole pool, always accepted.
    Random,
    /// Highest predictive-entropy batches under the current model.
    Entropy,
    /// Influence-ranked batches from a single up-front valuation pass.
    Inf,
    /// Partition bandit with the distance-only reward discount.
    Autodata,
    /// Partition bandit with random batches from the selected arm.
    Datasift,
    /// Partition bandit walking influence-ranked batches per arm.
    DatasiftInf,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Entropy => "entropy",
            Method::Inf => "inf",
            Method::Autodata => "autodata",
            Method::Datasift => "datasift",
            Method::DatasiftInf => "datasift-inf",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "random" => Ok(Method::Random),
            "entropy" => Ok(Method::Entropy),
            "inf" => Ok(Method::Inf),
            "autodata" => Ok(Method::Autodata),
            "datasift" => Ok(Method::Datasift),
            "datasift-inf" => Ok(Method::DatasiftInf),
            other => Err(Error::Config(format!(
                "unknown method {other:?} (expected one of: random, entropy, inf, autodata, datasift, datasift-inf)"
            ))),
        }
    }

    fn uses_partitions(self) -> bool {
        matches!(self, Method::Autodata | Method::Datasift | Method::DatasiftInf)
    }
}

/// One line of the per-iteration trace. `arm` is −1 for methods without
/// partitions; `budget_used` counts points actually merged into training.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub method: String,
    pub arm: i64,
    pub accepted: bool,
    pub batch_size: usize,
    pub parity: f64,
    pub accuracy: f64,
    pub budget_used: usize,
    pub delta_improve: f64,
}

/// Everything one method run produces, before files are written.
#[derive(Debug)]
pub struct MethodOutcome {
    pub rows: Vec<TraceRow>,
    pub acquired: Vec<usize>,
    pub initial_parity: f64,
    pub initial_accuracy: f64,
    pub final_parity: f64,
    pub final_accuracy: f64,
    pub stop_reason: String,
    pub accepted_batches: usize,
    /// Predicted pool scores, when the method computes them up front.
    pub pool_scores: Option<Vec<InfluenceScore>>,
}

// ---------------------------------------------------------------------------
// Baselines

fn metrics(
    train_set: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    let model = train(train_set, cfg)?;
    let report = demographic_parity(&model, test)?;
    Ok((report.parity, report.accuracy))
}

struct BaselineLoop<'a> {
    method: Method,
    train: &'a Dataset,
    test: &'a Dataset,
    pool: &'a Dataset,
    model_cfg: &'a TrainConfig,
    budget: usize,
    batch_size: usize,
}

impl BaselineLoop<'_> {
    /// Drive a baseline: `next_batch` picks ids from the not-yet-acquired
    /// slice of the pool; every batch is accepted and merged.
    fn run(
        &self,
        mut next_batch: impl FnMut(&Dataset, &[usize]) -> Result<Vec<usize>>,
    ) -> Result<MethodOutcome> {
        if self.pool.is_empty() {
            return Err(Error::Data("empty pool".into()));
        }
        if self.batch_size == 0 || self.budget < self.batch_size {
            return Err(Error::Config(format!(
                "batch size {} incompatible with budget {}",
                self.batch_size, self.budget
            )));
        }
        let by_id = self.pool.by_id();
        let mut available: Vec<usize> = self.pool.examples().iter().map(|e| e.id).collect();
        let mut current = self.train.clone();
        let (initial_parity, initial_accuracy) = metrics(&current, self.test, self.model_cfg)?;
        let mut parity = initial_parity;
        let mut accuracy = initial_accuracy;
        let mut rows = Vec::new();
        let mut acquired = Vec::new();
        let mut budget_used = 0usize;
        let mut iter = 0usize;
        let mut stop_reason = "budget-exhausted";

        while budget_used + self.batch_size <= self.budget {
            if available.len() < self.batch_size {
                stop_reason = "pool-exhausted";
                break;
            }
            let batch = next_batch(&current, &available)?;
            debug_assert_eq!(batch.len(), self.batch_size);
            available.retain(|id| !batch.contains(id));
            let extra: Vec<_> = batch.iter().map(|id| (*by_id.get(id).unwrap()).clone()).collect();
            current = current.with_extra(&extra)?;
            let (new_parity, new_accuracy) = metrics(&current, self.test, self.model_cfg)?;
            iter += 1;
            budget_used += self.batch_size;
            let delta_improve = parity.abs() - new_parity.abs();
            parity = new_parity;
            accuracy = new_accuracy;
            acquired.extend_from_slice(&batch);
            rows.push(TraceRow {
                iter,
                method: self.method.name().into(),
                arm: -1,
                accepted: true,
                batch_size: self.batch_size,
                parity,
                accuracy,
                budget_used,
                delta_improve,
            });
        }
        Ok(MethodOutcome {
            rows,
            acquired,
            initial_parity,
            initial_accuracy,
            final_parity: parity,
            final_accuracy: accuracy,
            stop_reason: stop_reason.into(),
            accepted_batches: iter,
            pool_scores: None,
        })
    }
}

/// Uniform batches from the whole pool, without replacement, always merged.
pub fn run_random(
    train_set: &Dataset,
    test: &Dataset,
    pool: &Dataset,
    model_cfg: &TrainConfig,
    budget: usize,
    batch_size: usize,
    seed: u64,
) -> Result<MethodOutcome> {
    let mut sampler = UniformSampler::new(seed);
    let driver =
        BaselineLoop { method: Method::Random, train: train_set, test, pool, model_cfg, budget, batch_size };
    driver.run(|_, available| {
        use crate::bandit::BatchSampler;
        sampler
            .draw(available, batch_size)
            .ok_or_else(|| Error::Data("pool exhausted mid-draw".into()))
    })
}

/// Batches with the highest predictive entropy under the model trained on
/// the current training set; ties break toward smaller ids.
pub fn run_entropy(
    train_set: &Dataset,
    test: &Dataset,
    pool: &Dataset,
    model_cfg: &TrainConfig,
    budget: usize,
    batch_size: usize,
) -> Result<MethodOutcome> {
    let by_id = pool.by_id();
    let driver =
        BaselineLoop { method: Method::Entropy, train: train_set, test, pool, model_cfg, budget, batch_size };
    driver.run(|current, available| {
        let model = train(current, model_cfg)?;
        let mut keyed: Vec<(f64, usize)> = available
            .iter()
            .map(|id| {
                let p = model.predict_proba(&by_id[id].features)?;
                Ok((entropy(p), *id))
            })
            .collect::<Result<_>>()?;
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(keyed.into_iter().take(batch_size).map(|(_, id)| id).collect())
    })
}

/// Influence-ranked acquisition without partitions: the score regressor is
/// fit once on the initial model and the pool is consumed in descending
/// predicted-score order.
pub fn run_inf(
    train_set: &Dataset,
    test: &Dataset,
    pool: &Dataset,
    model_cfg: &TrainConfig,
    budget: usize,
    batch_size: usize,
    lambda_r: f64,
) -> Result<MethodOutcome> {
    if pool.is_empty() {
        return Err(Error::Data("empty pool".into()));
    }
    let model0 = train(train_set, model_cfg)?;
    let engine = FairnessInfluence::new(&model0, train_set, test)?;
    let train_scores = engine.score_all(train_set)?;
    let reg = fit_influence_regressor(train_set, &train_scores, lambda_r, &model0.design)?;
    let mut pool_scores: Vec<InfluenceScore> = pool
        .examples()
        .iter()
        .map(|ex| Ok(InfluenceScore { id: ex.id, score: reg.predict(ex)? }))
        .collect::<Result<_>>()?;
    pool_scores.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    let order: Vec<usize> = pool_scores.iter().map(|s| s.id).collect();

    let mut ordered = order.into_iter();
    let driver =
        BaselineLoop { method: Method::Inf, train: train_set, test, pool, model_cfg, budget, batch_size };
    let mut outcome = driver.run(|_, _| Ok(ordered.by_ref().take(batch_size).collect()))?;
    pool_scores.sort_by_key(|s| s.id);
    outcome.pool_scores = Some(pool_scores);
    Ok(outcome)
}

// ---------------------------------------------------------------------------
// Bandit-backed methods

fn bandit_outcome(method: Method, budget: usize, run: AcquisitionRun) -> MethodOutcome {
    let rows = run
        .trace
        .iter()
        .map(|rec| TraceRow {
            iter: rec.iteration,
            method: method.name().into(),
            arm: rec.arm as i64,
            accepted: rec.accepted,
            batch_size: rec.batch.len(),
            parity: rec.parity_after,
            accuracy: rec.accuracy_after,
            budget_used: budget - rec.budget_remaining,
            delta_improve: rec.delta_improve,
        })
        .collect();
    MethodOutcome {
        rows,
        acquired: run.acquired,
        initial_parity: run.initial_parity,
        initial_accuracy: run.initial_accuracy,
        final_parity: run.final_parity,
        final_accuracy: run.final_accuracy,
        stop_reason: run.stop.to_string(),
        accepted_batches: run.accepted_batches,
        pool_scores: None,
    }
}

/// Partition bandit with uniform in-arm batches and the full reward rule.
pub fn run_datasift(
    train_set: &Dataset,
    test: &Dataset,
    pool: &Dataset,
    part: &mut Partitioning,
    model_cfg: &TrainConfig,
    cfg: &BanditConfig,
) -> Result<MethodOutcome> {
    let mut sampler = UniformSampler::new(cfg.seed);
    let run = run_acquisition(train_set, test, pool, part, model_cfg, cfg, &mut sampler, None)?;
    Ok(bandit_outcome(Method::Datasift, cfg.budget, run))
}

/// Partition bandit with the distance-only reward discount (the reward
/// rule ignores per-partition base-rate imbalance).
pub fn run_autodata(
    train_set: &Dataset,
    test: &Dataset,
    pool: &Dataset,
    part: &mut Partitioning,
    model_cfg: &TrainConfig,
    cfg: &BanditConfig,
) -> Result<MethodOutcome> {
    let cfg = BanditConfig { reward: RewardKind::DistanceOnly, ..cfg.clone() };
    let mut sampler = UniformSampler::new(cfg.seed);
    let run = run_acquisition(train_set, test, pool, part, model_cfg, &cfg, &mut sampler, None)?;
    Ok(bandit_outcome(Method::Autodata, cfg.budget, run))
}

/// Valuation-guided bandit: rank every partition's points by predicted
/// influence once up front, then walk each ranking top-down.
pub fn run_datasift_inf(
    train_set: &Dataset,
    test: &Dataset,
    pool: &Dataset,
    part: &mut Partitioning,
    model_cfg: &TrainConfig,
    cfg: &BanditConfig,
    lambda_r: f64,
) -> Result<MethodOutcome> {
    let model0 = train(train_set, model_cfg)?;
    let engine = FairnessInfluence::new(&model0, train_set, test)?;
    let train_scores = engine.score_all(train_set)?;
    let reg = fit_influence_regressor(train_set, &train_scores, lambda_r, &model0.design)?;
    let mut pool_scores: Vec<InfluenceScore> = pool
        .examples()
        .iter()
        .map(|ex| Ok(InfluenceScore { id: ex.id, score: reg.predict(ex)? }))
        .collect::<Result<_>>()?;
    pool_scores.sort_by_key(|s| s.id);
    crate::valuation::sort_partitions(part, pool, &reg)?;

    let mut sampler = TopKSampler;
    let mut refitter = PoolRefitter { lambda_r, pool: pool.clone() };
    let refit: Option<&mut dyn crate::bandit::BatchRefitter> =
        if cfg.refit_every.is_some() { Some(&mut refitter) } else { None };
    let run = run_acquisition(train_set, test, pool, part, model_cfg, cfg, &mut sampler, refit)?;
    let mut outcome = bandit_outcome(Method::DatasiftInf, cfg.budget, run);
    outcome.pool_scores = Some(pool_scores);
    Ok(outcome)
}

// ---------------------------------------------------------------------------
// Brute-force oracle

#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub batch: Vec<usize>,
    pub parity: f64,
    pub evaluated: usize,
}

/// Exhaustively retrain on every k-subset of the pool and return the batch
/// minimizing |parity| (first in lexicographic id order on ties). Guarded
/// to small pools.
pub fn brute_force_best_batch(
    train_set: &Dataset,
    test: &Dataset,
    pool: &Dataset,
    k: usize,
    model_cfg: &TrainConfig,
) -> Result<BruteForceResult> {
    let n = pool.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!("batch size {k} infeasible for pool of {n}")));
    }
    let mut combos = 1f64;
    for i in 0..k {
        combos = combos * (n - i) as f64 / (i + 1) as f64;
    }
    if combos > 1e6 {
        return Err(Error::Config(format!(
            "{combos:.0} candidate batches exceed the brute-force guard of 1e6"
        )));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut evaluated = 0usize;
    for combo in (0..n).combinations(k) {
        let extra: Vec<_> = combo.iter().map(|&i| pool.examples()[i].clone()).collect();
        let candidate = train_set.with_extra(&extra)?;
        let model = train(&candidate, model_cfg)?;
        let parity = demographic_parity(&model, test)?.parity.abs();
        evaluated += 1;
        if best.as_ref().map_or(true, |(b, _)| parity < *b) {
            best = Some((parity, combo.iter().map(|&i| pool.examples()[i].id).collect()));
        }
    }
    let (parity, batch) = best.expect("at least one combination");
    Ok(BruteForceResult { batch, parity, evaluated })
}

// ---------------------------------------------------------------------------
// Config and experiment dispatch

fn default_budget_frac() -> f64 {
    0.2
}
fn default_batch_frac() -> f64 {
    0.1
}
fn default_alpha() -> f64 {
    0.1
}
fn default_tau() -> f64 {
    0.01
}
fn default_lambda_r() -> f64 {
    1.0
}
fn default_ratios() -> [u32; 3] {
    [1, 4, 15]
}
fn default_rho() -> f64 {
    0.25
}
fn default_g_min() -> usize {
    2
}
fn default_g_max() -> usize {
    10
}

/// Where the data comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataConfig {
    /// A CSV file plus its schema file.
    Csv { path: PathBuf, schema: PathBuf },
    /// Fully specified synthetic generator (seed comes from the run seed).
    Synthetic(SyntheticParams),
    /// The built-in biased benchmark scenario at a chosen size.
    SyntheticBenchmark { n: usize },
}

/// `SyntheticSpec` minus the seed, which the run seed derives.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub n: usize,
    pub p: usize,
    pub q_privileged: f64,
    pub mean_protected_negative: Vec<f64>,
    pub mean_protected_positive: Vec<f64>,
    pub mean_privileged_negative: Vec<f64>,
    pub mean_privileged_positive: Vec<f64>,
    pub variances: Vec<f64>,
    pub base_rate_protected: f64,
    pub base_rate_privileged: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitConfig {
    #[serde(default = "default_ratios")]
    pub ratios: [u32; 3],
    #[serde(default = "default_rho")]
    pub rho: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { ratios: default_ratios(), rho: default_rho() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionConfig {
    /// Mixture clustering with BIC selection of the component count.
    Gmm {
        #[serde(default = "default_g_min")]
        g_min: usize,
        #[serde(default = "default_g_max")]
        g_max: usize,
    },
    /// Mixture clustering at a fixed component count.
    FixedG { g: usize },
    /// Group by a declared categorical column.
    Attribute { column: String },
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig::Gmm { g_min: default_g_min(), g_max: default_g_max() }
    }
}

/// Full description of one run. A single `seed` drives generation,
/// splitting, partitioning, and sampling, so identical configs reproduce
/// byte-identical traces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    pub method: Method,
    #[serde(default = "default_budget_frac")]
    pub budget_frac: f64,
    #[serde(default = "default_batch_frac")]
    pub batch_frac: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub max_evals: Option<usize>,
    #[serde(default)]
    pub count_all_selections: bool,
    #[serde(default)]
    pub reward: RewardKind,
    #[serde(default)]
    pub refit_every: Option<usize>,
    #[serde(default = "default_lambda_r")]
    pub lambda_r: f64,
    #[serde(default)]
    pub model: TrainConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub dump_partitions: bool,
    #[serde(default)]
    pub dump_scores: bool,
}

impl ExperimentConfig {
    /// Load from a JSON or TOML file (decided by extension).
    pub fn from_path(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
            Some("toml") => toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
            other => Err(Error::Config(format!(
                "config file must end in .json or .toml, got {other:?}"
            ))),
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("budget_frac", self.budget_frac), ("batch_frac", self.batch_frac)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} {v} outside (0, 1]")));
            }
        }
        if let PartitionConfig::Gmm { g_min, g_max } = &self.partition {
            if *g_min == 0 || g_min > g_max {
                return Err(Error::Config(format!("bad g range [{g_min}, {g_max}]")));
            }
        }
        Ok(())
    }
}

fn subseed(master: u64, slot: u64) -> u64 {
    master ^ slot.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(13)
}

#[derive(Debug, Clone, Serialize)]
pub struct Checkpoint {
    pub budget_frac: f64,
    pub budget_used: usize,
    pub parity: f64,
    pub accuracy: f64,
}

/// Final JSON artifact of a run (`schema` is bumped on layout changes).
#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub schema: u32,
    pub method: String,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_pool: usize,
    pub budget: usize,
    pub batch_size: usize,
    pub initial_parity: f64,
    pub initial_accuracy: f64,
    pub final_parity: f64,
    pub final_accuracy: f64,
    pub iterations: usize,
    pub accepted_batches: usize,
    pub acquired_count: usize,
    pub budget_used: usize,
    pub checkpoints: Vec<Checkpoint>,
    pub stop_reason: String,
    pub wall_time_secs: f64,
    pub acquired_ids: Vec<usize>,
}

/// Fairness/accuracy at every 10%-of-budget crossing actually reached.
pub fn checkpoints_from_rows(rows: &[TraceRow], budget: usize) -> Vec<Checkpoint> {
    let mut out = Vec::new();
    for i in 1..=10usize {
        let threshold = budget as f64 * i as f64 / 10.0;
        if let Some(row) = rows.iter().find(|r| r.budget_used as f64 >= threshold) {
            out.push(Checkpoint {
                budget_frac: i as f64 / 10.0,
                budget_used: row.budget_used,
                parity: row.parity,
                accuracy: row.accuracy,
            });
        }
    }
    out
}

/// Write the 9-column trace. Plain `Display` float formatting keeps equal
/// runs byte-identical.
pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut out = String::from("iter,method,arm,accepted,batch_size,parity,accuracy,budget_used,delta_improve\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.iter,
            r.method,
            r.arm,
            r.accepted,
            r.batch_size,
            r.parity,
            r.accuracy,
            r.budget_used,
            r.delta_improve
        ));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

fn write_scores(path: &Path, scores: &[InfluenceScore]) -> Result<()> {
    let mut out = String::from("id,score\n");
    for s in scores {
        out.push_str(&format!("{},{}\n", s.id, s.score));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn resolve_data(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.data {
        DataConfig::Csv { path, schema } => {
            let schema = CsvSchema::from_json_file(schema)?;
            load_csv(path, &schema)
        }
        DataConfig::Synthetic(params) => synthesize(&SyntheticSpec {
            n: params.n,
            p: params.p,
            q_privileged: params.q_privileged,
            mean_protected_negative: params.mean_protected_negative.clone(),
            mean_protected_positive: params.mean_protected_positive.clone(),
            mean_privileged_negative: params.mean_privileged_negative.clone(),
            mean_privileged_positive: params.mean_privileged_positive.clone(),
            variances: params.variances.clone(),
            base_rate_protected: params.base_rate_protected,
            base_rate_privileged: params.base_rate_privileged,
            seed: subseed(config.seed, 0),
        }),
        DataConfig::SyntheticBenchmark { n } => {
            synthesize(&SyntheticSpec::biased_benchmark(*n, subseed(config.seed, 0)))
        }
    }
}

fn build_partitioning(config: &ExperimentConfig, pool: &Dataset) -> Result<Partitioning> {
    let seed = subseed(config.seed, 2);
    match &config.partition {
        PartitionConfig::Gmm { g_min, g_max } => {
            let g = select_g(pool, *g_min..=*g_max, seed)?;
            fit_gmm(pool, g, seed)
        }
        PartitionConfig::FixedG { g } => fit_gmm(pool, *g, seed),
        PartitionConfig::Attribute { column } => partition_by_attribute(pool, column),
    }
}

/// Run one configured experiment, writing `trace.csv` and `summary.json`
/// (plus optional partition/score dumps) under `out_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let started = Instant::now();

    let data = resolve_data(config)?;
    let [a, b, c] = config.split.ratios;
    let split_spec =
        SplitSpec { ratios: (a, b, c), rho: config.split.rho, seed: subseed(config.seed, 1) };
    let (train_set, test, pool) = crate::dataset::split(&data, &split_spec)?;

    let budget = ((pool.len() as f64) * config.budget_frac).ceil().max(1.0) as usize;
    let batch_size = ((budget as f64) * config.batch_frac).ceil().max(1.0) as usize;
    let bandit = BanditConfig {
        budget,
        batch_size,
        alpha: config.alpha,
        tau: config.tau,
        max_evals: config.max_evals.unwrap_or_else(|| pool.len().div_ceil(batch_size)),
        seed: subseed(config.seed, 3),
        count_all_selections: config.count_all_selections,
        reward: config.reward,
        refit_every: config.refit_every,
    };

    let mut partitioning = if config.method.uses_partitions() {
        Some(build_partitioning(config, &pool)?)
    } else {
        None
    };

    std::fs::create_dir_all(&config.out_dir)?;
    if config.dump_partitions {
        match &partitioning {
            Some(part) => {
                std::fs::write(config.out_dir.join("partitions.json"), part.export_json())?
            }
            None => warn!("--dump-partitions ignored: {} has no partitions", config.method.name()),
        }
    }

    let outcome = match config.method {
        Method::Random => run_random(
            &train_set, &test, &pool, &config.model, budget, batch_size, bandit.seed,
        )?,
        Method::Entropy => {
            run_entropy(&train_set, &test, &pool, &config.model, budget, batch_size)?
        }
        Method::Inf => run_inf(
            &train_set, &test, &pool, &config.model, budget, batch_size, config.lambda_r,
        )?,
        Method::Autodata => run_autodata(
            &train_set, &test, &pool,
            partitioning.as_mut().expect("partitioned method"),
            &config.model, &bandit,
        )?,
        Method::Datasift => run_datasift(
            &train_set, &test, &pool,
            partitioning.as_mut().expect("partitioned method"),
            &config.model, &bandit,
        )?,
        Method::DatasiftInf => run_datasift_inf(
            &train_set, &test, &pool,
            partitioning.as_mut().expect("partitioned method"),
            &config.model, &bandit, config.lambda_r,
        )?,
    };

    if config.dump_scores {
        match &outcome.pool_scores {
            Some(scores) => write_scores(&config.out_dir.join("scores.csv"), scores)?,
            None => warn!("--dump-scores ignored: {} computes no scores", config.method.name()),
        }
    }

    write_trace(&config.out_dir.join("trace.csv"), &outcome.rows)?;
    let summary = RunSummary {
        schema: 1,
        method: config.method.name().into(),
        seed: config.seed,
        n_train: train_set.len(),
        n_test: test.len(),
        n_pool: pool.len(),
        budget,
        batch_size,
        initial_parity: outcome.initial_parity,
        initial_accuracy: outcome.initial_accuracy,
        final_parity: outcome.final_parity,
        final_accuracy: outcome.final_accuracy,
        iterations: outcome.rows.len(),
        accepted_batches: outcome.accepted_batches,
        acquired_count: outcome.acquired.len(),
        budget_used: outcome.rows.last().map_or(0, |r| r.budget_used),
        checkpoints: checkpoints_from_rows(&outcome.rows, budget),
        stop_reason: outcome.stop_reason.clone(),
        wall_time_secs: started.elapsed().as_secs_f64(),
        acquired_ids: outcome.acquired.clone(),
    };
    let json = serde_json::to_string_pretty(&summary).expect("serializable") + "\n";
    std::fs::write(config.out_dir.join("summary.json"), json)?;
    Ok(summary)
}
