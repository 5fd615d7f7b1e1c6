//! Datasets: CSV ingestion with a declared schema, train/test/pool splitting
//! with optional under-sampling of protected positives, and a synthetic
//! Gaussian generator for controlled experiments.
//!
//! Conventions used throughout the crate: `sensitive == 0` is the protected
//! group, `sensitive == 1` the privileged group; `label == 1` is the positive
//! outcome. The sensitive attribute is carried both as the `sensitive` field
//! and as one coordinate of `features` (by default the last one).

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labeled, group-annotated point. `id` is a stable index into the
/// source the point came from (CSV row order, or generation order).
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: usize,
    pub features: Vec<f64>,
    pub label: u8,
    pub sensitive: u8,
}

/// An immutable collection of examples with a common feature layout.
#[derive(Debug, Clone)]
pub struct Dataset {
    examples: Vec<Example>,
    p: usize,
    feature_names: Vec<String>,
    sensitive_index: Option<usize>,
}

impl Dataset {
    /// Build a dataset, validating width consistency, finite features,
    /// binary labels/groups, and id uniqueness.
    pub fn new(
        examples: Vec<Example>,
        feature_names: Vec<String>,
        sensitive_index: Option<usize>,
    ) -> Result<Dataset> {
        if examples.is_empty() {
            return Err(Error::Data("empty dataset".into()));
        }
        let p = examples[0].features.len();
        if feature_names.len() != p {
            return Err(Error::Dimension { expected: p, got: feature_names.len() });
        }
        if let Some(si) = sensitive_index {
            if si >= p {
                return Err(Error::Dimension { expected: p, got: si });
            }
        }
        let mut seen = HashSet::with_capacity(examples.len());
        for ex in &examples {
            if ex.features.len() != p {
                return Err(Error::Dimension { expected: p, got: ex.features.len() });
            }
            if ex.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite feature in example {}", ex.id)));
            }
            if ex.label > 1 || ex.sensitive > 1 {
                return Err(Error::Data(format!("non-binary label/group in example {}", ex.id)));
            }
            if !seen.insert(ex.id) {
                return Err(Error::Data(format!("duplicate example id {}", ex.id)));
            }
        }
        Ok(Dataset { examples, p, feature_names, sensitive_index })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Feature dimension (including the sensitive coordinate when present).
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Position of the sensitive attribute inside `features`, if it is one.
    pub fn sensitive_index(&self) -> Option<usize> {
        self.sensitive_index
    }

    /// New dataset with `extra` examples appended (ids must stay unique).
    pub fn with_extra(&self, extra: &[Example]) -> Result<Dataset> {
        let mut examples = self.examples.clone();
        examples.extend_from_slice(extra);
        Dataset::new(examples, self.feature_names.clone(), self.sensitive_index)
    }

    /// New dataset containing the examples with the given ids.
    pub fn select(&self, ids: &[usize]) -> Result<Dataset> {
        let by_id = self.by_id();
        let examples = ids
            .iter()
            .map(|id| {
                by_id
                    .get(id)
                    .map(|ex| (*ex).clone())
                    .ok_or_else(|| Error::Data(format!("no example with id {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(examples, self.feature_names.clone(), self.sensitive_index)
    }

    fn select_positions(&self, positions: &[usize]) -> Result<Dataset> {
        let examples = positions.iter().map(|&i| self.examples[i].clone()).collect();
        Dataset::new(examples, self.feature_names.clone(), self.sensitive_index)
    }

    /// Look up examples by id.
    pub fn by_id(&self) -> BTreeMap<usize, &Example> {
        self.examples.iter().map(|ex| (ex.id, ex)).collect()
    }
}

/// Per-group/label counts and base rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupStats {
    /// counts[s][y]
    pub counts: [[usize; 2]; 2],
}

impl GroupStats {
    pub fn n_protected(&self) -> usize {
        self.counts[0][0] + self.counts[0][1]
    }

    pub fn n_privileged(&self) -> usize {
        self.counts[1][0] + self.counts[1][1]
    }

    /// P(Y = 1 | S = 0)
    pub fn rate_protected(&self) -> f64 {
        self.counts[0][1] as f64 / self.n_protected() as f64
    }

    /// P(Y = 1 | S = 1)
    pub fn rate_privileged(&self) -> f64 {
        self.counts[1][1] as f64 / self.n_privileged() as f64
    }

    /// Base-rate difference P(Y=1|S=0) − P(Y=1|S=1); negative means the
    /// protected group has fewer positive labels.
    pub fn delta_br(&self) -> f64 {
        self.rate_protected() - self.rate_privileged()
    }
}

/// Count labels per sensitive group. Errors if either group is absent.
pub fn group_stats(data: &Dataset) -> Result<GroupStats> {
    let mut counts = [[0usize; 2]; 2];
    for ex in data.examples() {
        counts[ex.sensitive as usize][ex.label as usize] += 1;
    }
    let stats = GroupStats { counts };
    if stats.n_protected() == 0 || stats.n_privileged() == 0 {
        return Err(Error::Stats("a sensitive group is absent".into()));
    }
    Ok(stats)
}

/// Base-rate difference of a dataset's labels.
pub fn base_rate_diff(data: &Dataset) -> Result<f64> {
    Ok(group_stats(data)?.delta_br())
}

/// How to carve a dataset into train/test/pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Relative part sizes (train, test, pool).
    pub ratios: (u32, u32, u32),
    /// Retention probability for protected-positive rows in the train part;
    /// 1.0 keeps the train part an unbiased sample.
    pub rho: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { ratios: (1, 4, 15), rho: 0.25, seed: 0 }
    }
}

/// Split into (train, test, pool). Test and pool are uniform samples sized
/// by `floor(n·ratio/total)`; the remainder forms the train part, which is
/// then thinned: protected-positive rows survive with probability `rho`.
pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let (a, b, c) = spec.ratios;
    if a == 0 || b == 0 || c == 0 {
        return Err(Error::Split("ratios must be positive".into()));
    }
    if !(0.0..=1.0).contains(&spec.rho) {
        return Err(Error::Split(format!("rho {} outside [0, 1]", spec.rho)));
    }
    let total = (a + b + c) as usize;
    let n = data.len();
    if n < 20 * total {
        return Err(Error::Split(format!(
            "dataset too small: {n} rows for ratio total {total} (need at least {})",
            20 * total
        )));
    }
    let n_train = n * a as usize / total;
    let n_test = n * b as usize / total;
    let n_pool = n - n_train - n_test;

    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut test: Vec<usize> = order[..n_test].to_vec();
    let mut pool: Vec<usize> = order[n_test..n_test + n_pool].to_vec();
    let mut train: Vec<usize> = Vec::with_capacity(n_train);
    for &i in &order[n_test + n_pool..] {
        let ex = &data.examples()[i];
        let protected_positive = ex.sensitive == 0 && ex.label == 1;
        if protected_positive && spec.rho < 1.0 {
            if rng.gen::<f64>() < spec.rho {
                train.push(i);
            }
        } else {
            train.push(i);
        }
    }
    train.truncate(n_train);

    train.sort_unstable();
    test.sort_unstable();
    pool.sort_unstable();

    let parts = (
        data.select_positions(&train)?,
        data.select_positions(&test)?,
        data.select_positions(&pool)?,
    );
    for (name, part) in [("train", &parts.0), ("test", &parts.1), ("pool", &parts.2)] {
        if group_stats(part).is_err() {
            return Err(Error::Split(format!("{name} part is missing a sensitive group")));
        }
    }
    Ok(parts)
}

/// Parameters of the synthetic generator: group membership is Bernoulli,
/// labels follow per-group base rates, and features are Gaussian with
/// per-group, per-label means and shared diagonal variances. The group flag
/// is appended as the final feature coordinate, so the Gaussian block has
/// dimension `p - 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    /// Total feature dimension, including the trailing group flag.
    pub p: usize,
    /// P(S = 1), the privileged-group proportion.
    pub q_privileged: f64,
    pub mean_protected_negative: Vec<f64>,
    pub mean_protected_positive: Vec<f64>,
    pub mean_privileged_negative: Vec<f64>,
    pub mean_privileged_positive: Vec<f64>,
    /// Shared diagonal variances for the Gaussian block (length `p - 1`).
    pub variances: Vec<f64>,
    /// P(Y = 1 | S = 0)
    pub base_rate_protected: f64,
    /// P(Y = 1 | S = 1)
    pub base_rate_privileged: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// A benchmark scenario with a group-dependent feature shift: a
    /// qualification score separates the labels (protected positives sit
    /// closer to the decision boundary than privileged ones), a second
    /// coordinate separates the groups, and a third is pure noise. True
    /// base rates are equal, so the large negative parity gap of a model
    /// trained after protected-positive thinning is a sampling artifact
    /// that acquiring unbiased pool data can repair without losing
    /// accuracy.
    pub fn biased_benchmark(n: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n,
            p: 4,
            q_privileged: 0.6,
            mean_protected_negative: vec![-1.0, -1.0, 0.0],
            mean_protected_positive: vec![0.45, -1.0, 0.0],
            mean_privileged_negative: vec![-0.6, 1.0, 0.0],
            mean_privileged_positive: vec![1.4, 1.0, 0.0],
            variances: vec![1.0, 1.0, 1.0],
            base_rate_protected: 0.5,
            base_rate_privileged: 0.5,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Data("empty dataset: n = 0".into()));
        }
        if self.p == 0 {
            return Err(Error::Data("feature dimension must be at least 1".into()));
        }
        let d = self.p - 1;
        for (name, m) in [
            ("mean_protected_negative", &self.mean_protected_negative),
            ("mean_protected_positive", &self.mean_protected_positive),
            ("mean_privileged_negative", &self.mean_privileged_negative),
            ("mean_privileged_positive", &self.mean_privileged_positive),
        ] {
            if m.len() != d {
                return Err(Error::Data(format!("{name} must have length {d}, got {}", m.len())));
            }
        }
        if self.variances.len() != d {
            return Err(Error::Data(format!(
                "variances must have length {d}, got {}",
                self.variances.len()
            )));
        }
        if self.variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Data("variances must be positive and finite".into()));
        }
        for (name, q) in [
            ("q_privileged", self.q_privileged),
            ("base_rate_protected", self.base_rate_protected),
            ("base_rate_privileged", self.base_rate_privileged),
        ] {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Data(format!("{name} {q} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Draw a dataset from the generator. Deterministic for a given spec.
pub fn synthesize(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let d = spec.p - 1;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut examples = Vec::with_capacity(spec.n);
    for id in 0..spec.n {
        let sensitive: u8 = if rng.gen::<f64>() < spec.q_privileged { 1 } else { 0 };
        let rate = if sensitive == 1 { spec.base_rate_privileged } else { spec.base_rate_protected };
        let label: u8 = if rng.gen::<f64>() < rate { 1 } else { 0 };
        let mean = match (sensitive, label) {
            (0, 0) => &spec.mean_protected_negative,
            (0, 1) => &spec.mean_protected_positive,
            (1, 0) => &spec.mean_privileged_negative,
            _ => &spec.mean_privileged_positive,
        };
        let mut features = Vec::with_capacity(spec.p);
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            features.push(mean[j] + spec.variances[j].sqrt() * z);
        }
        features.push(sensitive as f64);
        examples.push(Example { id, features, label, sensitive });
    }
    let mut names: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    names.push("group".into());
    Dataset::new(examples, names, Some(d))
}

// ---------------------------------------------------------------------------
// CSV ingestion

/// Declared encoding for one feature column.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Parse the cell as a float.
    Numeric,
    /// Map declared string values to floats; unseen values use `fallback`
    /// when given, otherwise fail the row.
    Ordinal {
        map: BTreeMap<String, f64>,
        #[serde(default)]
        fallback: Option<f64>,
    },
    /// One indicator column per declared value; unseen values are all-zeros
    /// when `allow_unknown` is set, otherwise fail the row.
    OneHot {
        values: Vec<String>,
        #[serde(default)]
        allow_unknown: bool,
    },
}

impl Default for Encoding {
    fn default() -> Self {
        Encoding::Numeric
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub column: String,
    #[serde(default)]
    pub encoding: Encoding,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelSpec {
    pub column: String,
    /// Values counted as the positive outcome.
    pub positive: Vec<String>,
    /// When declared, any value outside positive ∪ negative is an error;
    /// when absent, every non-positive value counts as negative.
    #[serde(default)]
    pub negative: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitiveSpec {
    pub column: String,
    pub privileged: Vec<String>,
    #[serde(default)]
    pub protected: Option<Vec<String>>,
}

/// Column roles and encodings for a CSV source. The sensitive attribute is
/// appended to the feature vector as a trailing 0/1 coordinate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label: LabelSpec,
    pub sensitive: SensitiveSpec,
    pub features: Vec<FeatureSpec>,
}

impl CsvSchema {
    pub fn from_json(text: &str) -> Result<CsvSchema> {
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn from_json_file(path: &Path) -> Result<CsvSchema> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        CsvSchema::from_json(&text)
    }
}

fn encode_binary(
    value: &str,
    yes: &[String],
    no: &Option<Vec<String>>,
    what: &str,
    row: usize,
) -> Result<u8> {
    if yes.iter().any(|v| v == value) {
        return Ok(1);
    }
    match no {
        Some(no) if !no.iter().any(|v| v == value) => Err(Error::Encoding(format!(
            "row {row}: {what} value {value:?} is neither positive nor negative"
        ))),
        _ => Ok(0),
    }
}

/// Load a headered CSV under a schema. Row numbers in errors are 1-based
/// data rows (the header is row 0).
pub fn load_csv(csv_path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(csv_path)
        .map_err(|e| Error::Data(format!("{}: {e}", csv_path.display())))?;
    let headers = reader.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column {name:?} not found in CSV header")))
    };

    let label_col = col(&schema.label.column)?;
    let sens_col = col(&schema.sensitive.column)?;
    let feat_cols: Vec<usize> =
        schema.features.iter().map(|f| col(&f.column)).collect::<Result<_>>()?;

    let mut names = Vec::new();
    for f in &schema.features {
        match &f.encoding {
            Encoding::OneHot { values, .. } => {
                if values.is_empty() {
                    return Err(Error::Schema(format!(
                        "one-hot column {:?} declares no values",
                        f.column
                    )));
                }
                for v in values {
                    names.push(format!("{}={}", f.column, v));
                }
            }
            _ => names.push(f.column.clone()),
        }
    }
    names.push(schema.sensitive.column.clone());
    let sensitive_index = names.len() - 1;

    let mut examples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Row { row, msg: e.to_string() })?;
        let mut features = Vec::with_capacity(names.len());
        for (spec, &ci) in schema.features.iter().zip(&feat_cols) {
            let cell = record.get(ci).unwrap_or("").trim();
            match &spec.encoding {
                Encoding::Numeric => {
                    let v: f64 = cell.parse().map_err(|_| Error::Row {
                        row,
                        msg: format!("column {:?}: cannot parse {cell:?} as a number", spec.column),
                    })?;
                    features.push(v);
                }
                Encoding::Ordinal { map, fallback } => match map.get(cell) {
                    Some(&v) => features.push(v),
                    None => match fallback {
                        Some(v) => features.push(*v),
                        None => {
                            return Err(Error::Row {
                                row,
                                msg: format!(
                                    "column {:?}: unknown category {cell:?}",
                                    spec.column
                                ),
                            })
                        }
                    },
                },
                Encoding::OneHot { values, allow_unknown } => {
                    let hit = values.iter().position(|v| v == cell);
                    if hit.is_none() && !allow_unknown {
                        return Err(Error::Row {
                            row,
                            msg: format!("column {:?}: unknown category {cell:?}", spec.column),
                        });
                    }
                    for (k, _) in values.iter().enumerate() {
                        features.push(if hit == Some(k) { 1.0 } else { 0.0 });
                    }
                }
            }
        }
        let label_cell = record.get(label_col).unwrap_or("").trim();
        let label = encode_binary(label_cell, &schema.label.positive, &schema.label.negative, "label", row)?;
        let sens_cell = record.get(sens_col).unwrap_or("").trim();
        let sensitive = encode_binary(
            sens_cell,
            &schema.sensitive.privileged,
            &schema.sensitive.protected,
            "sensitive",
            row,
        )?;
        features.push(sensitive as f64);
        examples.push(Example { id: i, features, label, sensitive });
    }
    if examples.is_empty() {
        return Err(Error::Data("CSV contains no data rows".into()));
    }
    Dataset::new(examples, names, Some(sensitive_index))
}
