//! The acquisition engine: a UCB bandit over pool partitions.
//!
//! Each round selects the partition with the highest upper-confidence
//! score, proposes a batch from it, retrains, and accepts the batch only
//! when the parity gap strictly shrinks. Feedback is shared: every arm is
//! rewarded, discounted by its base-rate imbalance and by its distance
//! from the evaluated arm, so unexplored-but-similar partitions inherit
//! credit before ever being pulled.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fairness::demographic_parity;
use crate::model::{train, TrainConfig, TrainedModel};
use crate::partition::Partitioning;

/// Which discounts enter the shared reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    /// delta / ((1 + |ΔBR|)(1 + dist)) — the full rule.
    #[default]
    BaseRateAndDistance,
    /// delta / (1 + dist) — distance discount only.
    DistanceOnly,
    /// delta / (1 + |ΔBR|) — base-rate discount only.
    BaseRateOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BanditConfig {
    /// Total points the run may acquire.
    pub budget: usize,
    /// Points per proposed batch.
    pub batch_size: usize,
    /// Exploration strength in the confidence bonus.
    pub alpha: f64,
    /// Stop once |parity| falls below this.
    pub tau: f64,
    /// Cap on evaluated batches (accepted or rejected).
    pub max_evals: usize,
    pub seed: u64,
    /// When set, an arm's pull count grows on every selection instead of
    /// only on positively rewarded ones.
    #[serde(default)]
    pub count_all_selections: bool,
    #[serde(default)]
    pub reward: RewardKind,
    /// Re-rank partition orderings every this many accepted batches
    /// (valuation-guided runs only).
    #[serde(default)]
    pub refit_every: Option<usize>,
}

impl BanditConfig {
    /// Conventional defaults: budget is 20% of the pool, batches are 10%
    /// of the budget, and the evaluation cap is pool/batch rounded up.
    pub fn defaults_for_pool(pool_size: usize, seed: u64) -> BanditConfig {
        let budget = ((pool_size as f64) * 0.20).ceil() as usize;
        let batch_size = ((budget as f64) * 0.10).ceil().max(1.0) as usize;
        BanditConfig {
            budget,
            batch_size,
            alpha: 0.1,
            tau: 0.01,
            max_evals: pool_size.div_ceil(batch_size),
            seed,
            count_all_selections: false,
            reward: RewardKind::default(),
            refit_every: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.budget < self.batch_size {
            return Err(Error::Config(format!(
                "budget {} is smaller than batch_size {}",
                self.budget, self.batch_size
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Config("alpha must be non-negative".into()));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::Config("tau must be non-negative".into()));
        }
        Ok(())
    }
}

/// Book-keeping for one partition-arm.
#[derive(Debug, Clone, Serialize)]
pub struct ArmState {
    /// Sum of every shared reward this arm has received.
    pub cum_reward: f64,
    /// Rounds this arm was selected and came back with a positive reward
    /// (or simply selected, under `count_all_selections`).
    pub n_pos: u64,
    /// cum_reward / max(1, n_pos)
    pub r_agg: f64,
    pub ucb: f64,
    pub active: bool,
    /// |ΔBR| of the partition; breaks score ties (smaller wins).
    pub tie_bias: f64,
}

impl ArmState {
    pub fn new(tie_bias: f64, active: bool) -> ArmState {
        ArmState { cum_reward: 0.0, n_pos: 0, r_agg: 0.0, ucb: 0.0, active, tie_bias }
    }
}

/// Shared rewards for one evaluated batch: the improvement is credited to
/// every arm, discounted per `kind` by that arm's base-rate imbalance and
/// its distance from the selected arm.
pub fn compute_rewards(
    delta_improve: f64,
    selected: usize,
    part: &Partitioning,
    kind: RewardKind,
) -> Vec<f64> {
    (0..part.g())
        .map(|j| {
            let br = match kind {
                RewardKind::DistanceOnly => 1.0,
                _ => 1.0 + part.delta_br[j].abs(),
            };
            let d = match kind {
                RewardKind::BaseRateOnly => 1.0,
                _ => 1.0 + part.dist[[selected, j]],
            };
            delta_improve / (br * d)
        })
        .collect()
}

/// Refresh every arm's aggregate and confidence score. The bonus is
/// `α·√(2·ln(total_n/(n_i+1)))` with the log argument clamped at 1 so the
/// score never goes imaginary early on.
pub fn ucb_scores(arms: &mut [ArmState], alpha: f64, total_n: u64) {
    for arm in arms.iter_mut() {
        arm.r_agg = arm.cum_reward / (arm.n_pos.max(1) as f64);
        let ratio = total_n as f64 / (arm.n_pos + 1) as f64;
        arm.ucb = arm.r_agg + alpha * (2.0 * ratio.max(1.0).ln()).sqrt();
    }
}

/// Highest-score active arm; ties go to the smaller base-rate imbalance,
/// then the smaller index. `None` when every arm is exhausted.
pub fn select_arm(arms: &[ArmState]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, arm) in arms.iter().enumerate() {
        if !arm.active {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let cur = &arms[b];
                if arm.ucb > cur.ucb
                    || (arm.ucb == cur.ucb && arm.tie_bias < cur.tie_bias)
                {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

/// How batches are drawn from a partition's remaining ids.
pub trait BatchSampler {
    /// Propose `k` distinct ids, or `None` if the arm cannot fill a batch.
    fn draw(&mut self, remaining: &[usize], k: usize) -> Option<Vec<usize>>;
    /// Whether a rejected batch is still removed from `remaining`
    /// (rank-ordered samplers consume; random ones re-offer).
    fn consume_on_rejection(&self) -> bool;
}

/// Uniform without-replacement draws; rejected batches return to the pool.
pub struct UniformSampler {
    rng: ChaCha20Rng,
}

impl UniformSampler {
    pub fn new(seed: u64) -> UniformSampler {
        UniformSampler { rng: ChaCha20Rng::seed_from_u64(seed) }
    }
}

impl BatchSampler for UniformSampler {
    fn draw(&mut self, remaining: &[usize], k: usize) -> Option<Vec<usize>> {
        if remaining.len() < k {
            return None;
        }
        let picks = rand::seq::index::sample(&mut self.rng, remaining.len(), k);
        Some(picks.iter().map(|i| remaining[i]).collect())
    }

    fn consume_on_rejection(&self) -> bool {
        false
    }
}

/// Re-ranks partition orderings after accepted batches, for
/// valuation-guided runs.
pub trait BatchRefitter {
    fn refit(
        &mut self,
        model: &TrainedModel,
        train: &Dataset,
        test: &Dataset,
        part: &mut Partitioning,
    ) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// |parity| fell below τ.
    ThresholdMet,
    /// Remaining budget cannot cover another batch.
    BudgetExhausted,
    /// The evaluation cap was reached.
    EvalCapReached,
    /// No arm can fill a batch any more.
    ArmsExhausted,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StopReason::ThresholdMet => "threshold-met",
            StopReason::BudgetExhausted => "budget-exhausted",
            StopReason::EvalCapReached => "eval-cap-reached",
            StopReason::ArmsExhausted => "arms-exhausted",
        };
        f.write_str(s)
    }
}

/// Snapshot of one arm after a round, for the trace.
#[derive(Debug, Clone, Serialize)]
pub struct ArmSnapshot {
    pub r_agg: f64,
    pub n_pos: u64,
    pub ucb: f64,
    pub active: bool,
}

/// One evaluated batch.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub arm: usize,
    pub batch: Vec<usize>,
    /// Signed parity change of the candidate model: F_new − F_current.
    pub delta_signed: f64,
    /// |F_current| − |F_new|; positive means the gap shrank.
    pub delta_improve: f64,
    pub accepted: bool,
    /// Training failed on this candidate; no reward was distributed.
    pub failed: bool,
    /// Parity of the training set after this round (unchanged unless the
    /// batch was accepted).
    pub parity_after: f64,
    pub accuracy_after: f64,
    pub budget_remaining: usize,
    pub arms: Vec<ArmSnapshot>,
}

/// Everything a finished acquisition run reports.
#[derive(Debug)]
pub struct AcquisitionRun {
    pub acquired: Vec<usize>,
    pub trace: Vec<IterationRecord>,
    pub initial_parity: f64,
    pub initial_accuracy: f64,
    pub final_parity: f64,
    pub final_accuracy: f64,
    pub stop: StopReason,
    pub final_model: TrainedModel,
    pub final_train: Dataset,
    pub evaluations: usize,
    pub accepted_batches: usize,
}

fn snapshot(arms: &[ArmState]) -> Vec<ArmSnapshot> {
    arms.iter()
        .map(|a| ArmSnapshot { r_agg: a.r_agg, n_pos: a.n_pos, ucb: a.ucb, active: a.active })
        .collect()
}

/// Run the acquisition loop until the parity threshold, the budget, the
/// evaluation cap, or arm exhaustion stops it.
pub fn run_acquisition(
    train_set: &Dataset,
    test: &Dataset,
    pool: &Dataset,
    part: &mut Partitioning,
    model_cfg: &TrainConfig,
    cfg: &BanditConfig,
    sampler: &mut dyn BatchSampler,
    mut refitter: Option<&mut dyn BatchRefitter>,
) -> Result<AcquisitionRun> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(Error::Data("empty pool".into()));
    }
    let by_id = pool.by_id();
    let k = cfg.batch_size;

    let mut current_train = train_set.clone();
    let mut model = train(&current_train, model_cfg)?;
    let report = demographic_parity(&model, test)?;
    let initial_parity = report.parity;
    let initial_accuracy = report.accuracy;
    let mut f_cur = initial_parity;
    let mut f_best = initial_parity;
    let mut acc_cur = initial_accuracy;

    let mut arms: Vec<ArmState> = (0..part.g())
        .map(|i| ArmState::new(part.delta_br[i].abs(), part.remaining[i].len() >= k))
        .collect();

    let mut acquired: Vec<usize> = Vec::new();
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut budget_remaining = cfg.budget;
    let mut evaluations = 0usize;
    let mut accepted_batches = 0usize;

    let stop = loop {
        if f_best.abs() < cfg.tau {
            break StopReason::ThresholdMet;
        }
        if budget_remaining < k {
            break StopReason::BudgetExhausted;
        }
        if evaluations >= cfg.max_evals {
            break StopReason::EvalCapReached;
        }
        let arm = match select_arm(&arms) {
            Some(a) => a,
            None => break StopReason::ArmsExhausted,
        };
        let batch = match sampler.draw(&part.remaining[arm], k) {
            Some(b) => b,
            None => {
                // Defensive: deactivation below should make this unreachable.
                arms[arm].active = false;
                continue;
            }
        };
        evaluations += 1;

        let extra: Vec<_> = batch.iter().map(|id| (*by_id.get(id).unwrap()).clone()).collect();
        let candidate = current_train.with_extra(&extra)?;
        let candidate_model = match train(&candidate, model_cfg) {
            Ok(m) => m,
            Err(e) => {
                warn!("iteration {evaluations}: training failed ({e}); batch rejected");
                trace.push(IterationRecord {
                    iteration: evaluations,
                    arm,
                    batch,
                    delta_signed: 0.0,
                    delta_improve: 0.0,
                    accepted: false,
                    failed: true,
                    parity_after: f_cur,
                    accuracy_after: acc_cur,
                    budget_remaining,
                    arms: snapshot(&arms),
                });
                continue;
            }
        };
        let new_report = demographic_parity(&candidate_model, test)?;
        let f_new = new_report.parity;
        let delta_signed = f_new - f_cur;
        let delta_improve = f_cur.abs() - f_new.abs();
        let accepted = delta_improve > 0.0 && f_new.abs() <= f_best.abs();

        if accepted {
            current_train = candidate;
            model = candidate_model;
            f_cur = f_new;
            f_best = f_new;
            acc_cur = new_report.accuracy;
            acquired.extend_from_slice(&batch);
            budget_remaining -= k;
            accepted_batches += 1;
            part.consume(arm, &batch);
            if let (Some(refit), Some(every)) = (refitter.as_deref_mut(), cfg.refit_every) {
                if accepted_batches % every == 0 {
                    refit.refit(&model, &current_train, test, part)?;
                }
            }
        } else if sampler.consume_on_rejection() {
            part.consume(arm, &batch);
        }

        let rewards = compute_rewards(delta_improve, arm, part, cfg.reward);
        for (j, r) in rewards.iter().enumerate() {
            arms[j].cum_reward += r;
        }
        if cfg.count_all_selections || rewards[arm] > 0.0 {
            arms[arm].n_pos += 1;
        }
        let total_n: u64 = arms.iter().map(|a| a.n_pos).sum();
        ucb_scores(&mut arms, cfg.alpha, total_n);
        for (j, arm_state) in arms.iter_mut().enumerate() {
            if part.remaining[j].len() < k {
                arm_state.active = false;
            }
        }

        trace.push(IterationRecord {
            iteration: evaluations,
            arm,
            batch,
            delta_signed,
            delta_improve,
            accepted,
            failed: false,
            parity_after: f_cur,
            accuracy_after: acc_cur,
            budget_remaining,
            arms: snapshot(&arms),
        });
    };

    Ok(AcquisitionRun {
        acquired,
        trace,
        initial_parity,
        initial_accuracy,
        final_parity: f_cur,
        final_accuracy: acc_cur,
        stop,
        final_model: model,
        final_train: current_train,
        evaluations,
        accepted_batches,
    })
}
