//! Pool partitioning: Gaussian-mixture clustering (diagonal covariances,
//! hard assignments) or grouping by a declared categorical column.
//!
//! Features are z-scored before clustering so distances are scale-free;
//! the exported centroids are reported back in the original feature space,
//! while the inter-partition distance matrix is computed on standardized
//! centroids and normalized by its maximum entry.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use log::warn;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::dataset::{base_rate_diff, Dataset};
use crate::error::{Error, Result};

const EM_MAX_ITERS: usize = 200;
const EM_TOL: f64 = 1e-6;
const VAR_FLOOR: f64 = 1e-6;
const RESEED_ATTEMPTS: usize = 6;

/// A fixed split of the pool into arms for the acquisition loop.
#[derive(Debug, Clone)]
pub struct Partitioning {
    /// example id → partition index
    pub assignment: BTreeMap<usize, usize>,
    pub sizes: Vec<usize>,
    /// Per-partition feature means in the original space (g × p).
    pub centroids: Array2<f64>,
    /// Per-partition label base-rate difference, falling back to the
    /// pool-level value where a partition lacks a group or a label class.
    pub delta_br: Vec<f64>,
    /// Pairwise centroid distances normalized to [0, 1].
    pub dist: Array2<f64>,
    /// Per-partition ids not yet consumed by acquisition, id-ascending
    /// until a valuation pass re-orders them.
    pub remaining: Vec<Vec<usize>>,
}

impl Partitioning {
    pub fn g(&self) -> usize {
        self.sizes.len()
    }

    /// Remove acquired (or consumed) ids from a partition's remaining list.
    pub fn consume(&mut self, part: usize, ids: &[usize]) {
        self.remaining[part].retain(|id| !ids.contains(id));
    }

    /// Build every derived field from a per-example partition index
    /// (aligned with `pool.examples()` order).
    pub fn from_assignment(pool: &Dataset, assign: &[usize]) -> Result<Partitioning> {
        if assign.len() != pool.len() {
            return Err(Error::Dimension { expected: pool.len(), got: assign.len() });
        }
        let g = match assign.iter().max() {
            Some(&m) => m + 1,
            None => return Err(Error::Partition("empty assignment".into())),
        };
        let p = pool.p();
        let mut sizes = vec![0usize; g];
        for &k in assign {
            sizes[k] += 1;
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Partition("a partition has no members".into()));
        }

        let (z, _, _) = standardize(pool);
        let mut centroids = Array2::<f64>::zeros((g, p));
        let mut centroids_std = Array2::<f64>::zeros((g, p));
        let mut assignment = BTreeMap::new();
        let mut remaining: Vec<Vec<usize>> = vec![Vec::new(); g];
        let mut counts = vec![[[0usize; 2]; 2]; g];
        for (i, ex) in pool.examples().iter().enumerate() {
            let k = assign[i];
            assignment.insert(ex.id, k);
            remaining[k].push(ex.id);
            counts[k][ex.sensitive as usize][ex.label as usize] += 1;
            for j in 0..p {
                centroids[[k, j]] += ex.features[j];
                centroids_std[[k, j]] += z[[i, j]];
            }
        }
        for k in 0..g {
            remaining[k].sort_unstable();
            for j in 0..p {
                centroids[[k, j]] /= sizes[k] as f64;
                centroids_std[[k, j]] /= sizes[k] as f64;
            }
        }

        let pool_delta = base_rate_diff(pool)?;
        let delta_br = counts
            .iter()
            .map(|c| {
                let n_s0 = c[0][0] + c[0][1];
                let n_s1 = c[1][0] + c[1][1];
                let n_y0 = c[0][0] + c[1][0];
                let n_y1 = c[0][1] + c[1][1];
                if n_s0 > 0 && n_s1 > 0 && n_y0 > 0 && n_y1 > 0 {
                    c[0][1] as f64 / n_s0 as f64 - c[1][1] as f64 / n_s1 as f64
                } else {
                    pool_delta
                }
            })
            .collect();

        let dist = normalized_distances(&centroids_std);
        Ok(Partitioning { assignment, sizes, centroids, delta_br, dist, remaining })
    }

    /// JSON export of the stable fields, for debugging and replay.
    pub fn export_json(&self) -> String {
        #[derive(Serialize)]
        struct Export<'a> {
            g: usize,
            sizes: &'a [usize],
            assignment: &'a BTreeMap<usize, usize>,
            centroids: Vec<Vec<f64>>,
            delta_br: &'a [f64],
            dist: Vec<Vec<f64>>,
        }
        let export = Export {
            g: self.g(),
            sizes: &self.sizes,
            assignment: &self.assignment,
            centroids: self.centroids.rows().into_iter().map(|r| r.to_vec()).collect(),
            delta_br: &self.delta_br,
            dist: self.dist.rows().into_iter().map(|r| r.to_vec()).collect(),
        };
        serde_json::to_string_pretty(&export).expect("serializable")
    }
}

/// Pairwise Euclidean distances scaled so the largest is 1 (all zeros when
/// the centroids coincide or there is a single one).
pub fn normalized_distances(centroids: &Array2<f64>) -> Array2<f64> {
    let g = centroids.nrows();
    let mut dist = Array2::<f64>::zeros((g, g));
    let mut max = 0.0f64;
    for i in 0..g {
        for j in (i + 1)..g {
            let mut d2 = 0.0;
            for c in 0..centroids.ncols() {
                let dv = centroids[[i, c]] - centroids[[j, c]];
                d2 += dv * dv;
            }
            let d = d2.sqrt();
            dist[[i, j]] = d;
            dist[[j, i]] = d;
            max = max.max(d);
        }
    }
    if max > 0.0 {
        dist /= max;
    }
    dist
}

/// Per-feature z-scoring; constant columns get unit scale to stay finite.
fn standardize(data: &Dataset) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
    let n = data.len();
    let p = data.p();
    let mut mean = vec![0.0f64; p];
    for ex in data.examples() {
        for j in 0..p {
            mean[j] += ex.features[j];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0f64; p];
    for ex in data.examples() {
        for j in 0..p {
            let d = ex.features[j] - mean[j];
            var[j] += d * d;
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|v| {
            let s = (v / n as f64).sqrt();
            if s < 1e-12 {
                1.0
            } else {
                s
            }
        })
        .collect();
    let mut z = Array2::<f64>::zeros((n, p));
    for (i, ex) in data.examples().iter().enumerate() {
        for j in 0..p {
            z[[i, j]] = (ex.features[j] - mean[j]) / std[j];
        }
    }
    (z, mean, std)
}

fn derive_seed(seed: u64, salt: u64) -> u64 {
    seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct EmFit {
    assign: Vec<usize>,
    total_loglik: f64,
}

/// One EM run: k-means++ seeding, diagonal Gaussians, hard assignment.
fn em(z: &Array2<f64>, g: usize, seed: u64) -> EmFit {
    let n = z.nrows();
    let p = z.ncols();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    // k-means++-style seeding on the standardized rows.
    let mut centers: Vec<usize> = vec![rng.gen_range(0..n)];
    let mut d2 = vec![f64::INFINITY; n];
    while centers.len() < g {
        let last = *centers.last().unwrap();
        for i in 0..n {
            let mut d = 0.0;
            for j in 0..p {
                let dv = z[[i, j]] - z[[last, j]];
                d += dv * dv;
            }
            d2[i] = d2[i].min(d);
        }
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                u -= d;
                if u <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        centers.push(next);
    }

    let mut weights = vec![1.0 / g as f64; g];
    let mut means = Array2::<f64>::zeros((g, p));
    for (k, &c) in centers.iter().enumerate() {
        for j in 0..p {
            means[[k, j]] = z[[c, j]];
        }
    }
    let mut vars = Array2::<f64>::from_elem((g, p), 1.0);

    let ln_2pi = std::f64::consts::TAU.ln();
    let mut resp = Array2::<f64>::zeros((n, g));
    let mut total_loglik = f64::NEG_INFINITY;
    let mut prev_mean_ll = f64::NEG_INFINITY;

    for _iter in 0..=EM_MAX_ITERS {
        // E-step.
        let mut ll = 0.0;
        for i in 0..n {
            let mut row = vec![0.0f64; g];
            let mut row_max = f64::NEG_INFINITY;
            for k in 0..g {
                let mut acc = weights[k].max(1e-300).ln();
                for j in 0..p {
                    let v = vars[[k, j]];
                    let dv = z[[i, j]] - means[[k, j]];
                    acc -= 0.5 * (ln_2pi + v.ln() + dv * dv / v);
                }
                row[k] = acc;
                row_max = row_max.max(acc);
            }
            let lse = row_max + row.iter().map(|a| (a - row_max).exp()).sum::<f64>().ln();
            ll += lse;
            for k in 0..g {
                resp[[i, k]] = (row[k] - lse).exp();
            }
        }
        total_loglik = ll;
        let mean_ll = ll / n as f64;
        if (mean_ll - prev_mean_ll).abs() < EM_TOL {
            break;
        }
        prev_mean_ll = mean_ll;

        // M-step.
        for k in 0..g {
            let nk: f64 = (0..n).map(|i| resp[[i, k]]).sum::<f64>().max(1e-10);
            weights[k] = nk / n as f64;
            for j in 0..p {
                let m: f64 = (0..n).map(|i| resp[[i, k]] * z[[i, j]]).sum::<f64>() / nk;
                means[[k, j]] = m;
                let v: f64 =
                    (0..n).map(|i| resp[[i, k]] * (z[[i, j]] - m).powi(2)).sum::<f64>() / nk;
                vars[[k, j]] = v.max(VAR_FLOOR);
            }
        }
    }

    let assign = (0..n)
        .map(|i| {
            let mut best = 0;
            for k in 1..g {
                if resp[[i, k]] > resp[[i, best]] {
                    best = k;
                }
            }
            best
        })
        .collect();
    EmFit { assign, total_loglik }
}

/// EM with re-seeding until every component keeps at least one member.
fn em_nonempty(z: &Array2<f64>, g: usize, seed: u64) -> Result<EmFit> {
    for attempt in 0..RESEED_ATTEMPTS {
        let fit = em(z, g, derive_seed(seed, attempt as u64));
        let mut sizes = vec![0usize; g];
        for &k in &fit.assign {
            sizes[k] += 1;
        }
        if sizes.iter().all(|&s| s > 0) {
            return Ok(fit);
        }
        warn!("mixture fit with g={g} produced an empty component (attempt {attempt}); re-seeding");
    }
    Err(Error::Partition(format!(
        "mixture fit with g={g} kept producing empty components after {RESEED_ATTEMPTS} attempts"
    )))
}

/// Cluster the pool into `g` partitions. If EM cannot keep `g` components
/// populated it falls back to `g − 1` (down to 1), logging each reduction.
pub fn fit_gmm(pool: &Dataset, g: usize, seed: u64) -> Result<Partitioning> {
    if g == 0 {
        return Err(Error::Partition("g must be at least 1".into()));
    }
    if pool.len() < 5 * g {
        return Err(Error::Partition(format!(
            "pool of {} is too small for g={g} (need at least {})",
            pool.len(),
            5 * g
        )));
    }
    let (z, _, _) = standardize(pool);
    let mut g_eff = g;
    loop {
        match em_nonempty(&z, g_eff, seed) {
            Ok(fit) => return Partitioning::from_assignment(pool, &fit.assign),
            Err(e) if g_eff > 1 => {
                warn!("{e}; reducing to g={}", g_eff - 1);
                g_eff -= 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Pick a component count by BIC over `g_range`, preferring the smaller
/// count on ties. Counts infeasible for the pool size are skipped.
pub fn select_g(pool: &Dataset, g_range: RangeInclusive<usize>, seed: u64) -> Result<usize> {
    if g_range.is_empty() {
        return Err(Error::Partition("empty g range".into()));
    }
    let n = pool.len();
    let p = pool.p();
    let (z, _, _) = standardize(pool);
    let mut best: Option<(f64, usize)> = None;
    for g in g_range.clone() {
        if g == 0 || n < 5 * g {
            continue;
        }
        let fit = match em_nonempty(&z, g, derive_seed(seed, 1000 + g as u64)) {
            Ok(f) => f,
            Err(e) => {
                warn!("skipping g={g} during model selection: {e}");
                continue;
            }
        };
        let k_params = (g * (2 * p + 1) - 1) as f64;
        let bic = -2.0 * fit.total_loglik + k_params * (n as f64).ln();
        if best.map_or(true, |(b, _)| bic < b) {
            best = Some((bic, g));
        }
    }
    best.map(|(_, g)| g).ok_or_else(|| {
        Error::Partition(format!("no feasible component count in {g_range:?} for pool of {n}"))
    })
}

/// Partition by the distinct values of a named feature column (at most 32),
/// ordered ascending. A constant column degenerates to a single partition.
pub fn partition_by_attribute(pool: &Dataset, column: &str) -> Result<Partitioning> {
    let idx = pool
        .feature_names()
        .iter()
        .position(|n| n == column)
        .ok_or_else(|| Error::Partition(format!("column {column:?} not found")))?;
    let mut values: Vec<f64> = pool.examples().iter().map(|e| e.features[idx]).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    if values.len() > 32 {
        return Err(Error::Partition(format!(
            "column {column:?} has {} distinct values (max 32 for attribute partitioning)",
            values.len()
        )));
    }
    let assign: Vec<usize> = pool
        .examples()
        .iter()
        .map(|e| values.binary_search_by(|v| v.total_cmp(&e.features[idx])).unwrap())
        .collect();
    Partitioning::from_assignment(pool, &assign)
}
