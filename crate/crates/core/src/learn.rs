//! Random-forest classification, per-subject score aggregation, late fusion
//! and evaluation metrics.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Scores at or above this are classified positive.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("no training rows")]
    EmptyData,
    #[error("training data contains a single class ({0})")]
    SingleClass(u8),
    #[error("feature vector has {got} values, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {0} is not binary")]
    InvalidLabel(u8),
    #[error("non-finite feature value in row {0}")]
    NonFinite(usize),
    #[error("subject {0:?} appears in more than one split")]
    SubjectLeak(String),
    #[error("no scores to aggregate")]
    EmptyScores,
    #[error("scaling factor c must be positive and finite, got {0}")]
    BadC(f64),
    #[error("{0} is not a probability")]
    BadProbability(f64),
    #[error("missing score: {0}")]
    MissingScore(String),
    #[error("forest fusion requested but no fusion model is trained")]
    UntrainedFusion,
    #[error("{predictions} predictions for {truth} labels")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("invalid forest configuration: {0}")]
    BadConfig(String),
    #[error("model format version {0} is not supported")]
    UnsupportedVersion(u32),
    #[error("model JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRow {
    pub features: Vec<f64>,
    pub label: u8,
    pub subject_id: String,
    pub split: Split,
}

/// Rows with uniform dimensionality, binary labels, and each subject in a
/// single split.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    feature_names: Vec<String>,
    rows: Vec<LabeledRow>,
}

impl LabeledDataset {
    pub fn new(feature_names: Vec<String>, rows: Vec<LabeledRow>) -> Result<Self, LearnError> {
        let d = feature_names.len();
        let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
        for (i, r) in rows.iter().enumerate() {
            if r.features.len() != d {
                return Err(LearnError::DimensionMismatch {
                    expected: d,
                    got: r.features.len(),
                });
            }
            if r.label > 1 {
                return Err(LearnError::InvalidLabel(r.label));
            }
            if r.features.iter().any(|v| !v.is_finite()) {
                return Err(LearnError::NonFinite(i));
            }
            if let Some(&s) = seen.get(r.subject_id.as_str()) {
                if s != r.split {
                    return Err(LearnError::SubjectLeak(r.subject_id.clone()));
                }
            } else {
                seen.insert(&r.subject_id, r.split);
            }
        }
        Ok(Self {
            feature_names,
            rows,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn rows(&self) -> &[LabeledRow] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Rows of one split, as a new dataset.
    pub fn split(&self, split: Split) -> LabeledDataset {
        LabeledDataset {
            feature_names: self.feature_names.clone(),
            rows: self
                .rows
                .iter()
                .filter(|r| r.split == split)
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Defaults to `ceil(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 8,
            min_leaf: 2,
            features_per_split: None,
            seed: 42,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.n_trees == 0 {
            return Err(LearnError::BadConfig("n_trees must be positive".into()));
        }
        if self.min_leaf == 0 {
            return Err(LearnError::BadConfig("min_leaf must be positive".into()));
        }
        if self.features_per_split == Some(0) {
            return Err(LearnError::BadConfig(
                "features_per_split must be positive".into(),
            ));
        }
        Ok(())
    }

    fn features_for(&self, d: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// `x[feature] <= threshold` goes to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class probabilities `[p(0), p(1)]`.
    Leaf { proba: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { proba } => return proba[1],
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub format_version: u32,
    pub config: ForestConfig,
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
}

impl RandomForestModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, LearnError> {
        let model: Self = serde_json::from_str(s)?;
        model.check()?;
        Ok(model)
    }

    pub(crate) fn check(&self) -> Result<(), LearnError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(LearnError::UnsupportedVersion(self.format_version));
        }
        for tree in &self.trees {
            for node in &tree.nodes {
                let bad = match node {
                    Node::Split {
                        feature,
                        left,
                        right,
                        ..
                    } => {
                        *feature >= self.n_features
                            || *left >= tree.nodes.len()
                            || *right >= tree.nodes.len()
                    }
                    Node::Leaf { proba } => ((proba[0] + proba[1]) - 1.0).abs() > 1e-9,
                };
                if bad {
                    return Err(LearnError::BadConfig("corrupt tree node".into()));
                }
            }
        }
        Ok(())
    }

    /// Mean positive-class probability over the trees.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, LearnError> {
        if x.len() != self.n_features {
            return Err(LearnError::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let total: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok((total / self.trees.len() as f64).clamp(0.0, 1.0))
    }
}

/// Trains on every row of `data`, regardless of split.
pub fn train_random_forest(
    data: &LabeledDataset,
    config: &ForestConfig,
) -> Result<RandomForestModel, LearnError> {
    let x: Vec<&[f64]> = data.rows().iter().map(|r| r.features.as_slice()).collect();
    let y: Vec<u8> = data.rows().iter().map(|r| r.label).collect();
    train_forest(&x, &y, config)
}

/// Trains a forest on raw rows.
///
/// Rows are first put in a canonical order, so the model depends on the
/// multiset of rows and the seed, not on input order. Tree `k` draws from
/// stream `k` of a ChaCha generator seeded with `config.seed`, which makes
/// parallel and serial training identical.
pub fn train_forest(
    x: &[&[f64]],
    y: &[u8],
    config: &ForestConfig,
) -> Result<RandomForestModel, LearnError> {
    config.validate()?;
    if x.is_empty() {
        return Err(LearnError::EmptyData);
    }
    if x.len() != y.len() {
        return Err(LearnError::LengthMismatch {
            predictions: x.len(),
            truth: y.len(),
        });
    }
    let d = x[0].len();
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(LearnError::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::NonFinite(i));
        }
    }
    if let Some(&bad) = y.iter().find(|&&l| l > 1) {
        return Err(LearnError::InvalidLabel(bad));
    }
    if y.len() < 2 || y.iter().all(|&l| l == y[0]) {
        return Err(LearnError::SingleClass(y[0]));
    }

    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        x[a].iter()
            .zip(x[b])
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
            .then(y[a].cmp(&y[b]))
    });
    let rows: Vec<&[f64]> = order.iter().map(|&i| x[i]).collect();
    let labels: Vec<u8> = order.iter().map(|&i| y[i]).collect();

    let grower = TreeGrower {
        x: &rows,
        y: &labels,
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
        n_candidates: config.features_for(d),
        d,
    };
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(k as u64);
            let n = rows.len();
            let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            grower.grow(sample, &mut rng)
        })
        .collect();
    Ok(RandomForestModel {
        format_version: MODEL_FORMAT_VERSION,
        config: *config,
        n_features: d,
        trees,
    })
}

struct TreeGrower<'a> {
    x: &'a [&'a [f64]],
    y: &'a [u8],
    max_depth: usize,
    min_leaf: usize,
    n_candidates: usize,
    d: usize,
}

struct BestSplit {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

fn gini(c0: usize, c1: usize) -> f64 {
    let n = (c0 + c1) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (c0 as f64 / n, c1 as f64 / n);
    1.0 - p0 * p0 - p1 * p1
}

impl TreeGrower<'_> {
    fn grow(&self, sample: Vec<usize>, rng: &mut ChaCha8Rng) -> DecisionTree {
        let mut nodes = Vec::new();
        self.grow_node(sample, 0, rng, &mut nodes);
        DecisionTree { nodes }
    }

    fn grow_node(
        &self,
        mut sample: Vec<usize>,
        depth: usize,
        rng: &mut ChaCha8Rng,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let id = nodes.len();
        let c1 = sample.iter().filter(|&&i| self.y[i] == 1).count();
        let c0 = sample.len() - c1;
        let n = sample.len() as f64;
        let leaf = Node::Leaf {
            proba: [c0 as f64 / n, c1 as f64 / n],
        };
        nodes.push(leaf);
        if c0 == 0 || c1 == 0 || depth >= self.max_depth || sample.len() < 2 * self.min_leaf {
            return id;
        }
        let Some(best) = self.best_split(&mut sample, rng) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = sample
            .into_iter()
            .partition(|&i| self.x[i][best.feature] <= best.threshold);
        let l = self.grow_node(left, depth + 1, rng, nodes);
        let r = self.grow_node(right, depth + 1, rng, nodes);
        nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id
    }

    /// Lowest weighted Gini over a random feature subset. Ties go to the
    /// lowest feature index, then the lowest threshold.
    fn best_split(&self, sample: &mut [usize], rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let mut features = index::sample(rng, self.d, self.n_candidates).into_vec();
        features.sort_unstable();
        let n = sample.len();
        let total1 = sample.iter().filter(|&&i| self.y[i] == 1).count();
        let total0 = n - total1;
        let mut best: Option<BestSplit> = None;
        for &f in &features {
            sample.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let (mut l0, mut l1) = (0usize, 0usize);
            for pos in 1..n {
                if self.y[sample[pos - 1]] == 1 {
                    l1 += 1;
                } else {
                    l0 += 1;
                }
                if pos < self.min_leaf || n - pos < self.min_leaf {
                    continue;
                }
                let (lo, hi) = (self.x[sample[pos - 1]][f], self.x[sample[pos]][f]);
                if lo >= hi {
                    continue;
                }
                let (r0, r1) = (total0 - l0, total1 - l1);
                let impurity =
                    (pos as f64 * gini(l0, l1) + (n - pos) as f64 * gini(r0, r1)) / n as f64;
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        impurity,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best
    }
}

/// Inputs of the per-subject aggregation rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientAggregate {
    pub subject_id: String,
    pub n: usize,
    pub p_max: f64,
    pub p_mean: f64,
    pub c: f64,
}

impl PatientAggregate {
    pub fn from_scores(
        subject_id: impl Into<String>,
        scores: &[f64],
        c: f64,
    ) -> Result<Self, LearnError> {
        if scores.is_empty() {
            return Err(LearnError::EmptyScores);
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(LearnError::BadC(c));
        }
        if let Some(&p) = scores.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(LearnError::BadProbability(p));
        }
        let p_max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let p_mean = (scores.iter().sum::<f64>() / scores.len() as f64).min(p_max);
        Ok(Self {
            subject_id: subject_id.into(),
            n: scores.len(),
            p_max,
            p_mean,
            c,
        })
    }

    /// `(p_max + p_mean * n / c) / (1 + n / c)`.
    pub fn probability(&self) -> f64 {
        let ratio = self.n as f64 / self.c;
        (self.p_max + self.p_mean * ratio) / (1.0 + ratio)
    }
}

/// Blends the maximum and the mean of per-subsequence probabilities, leaning
/// towards the mean as the number of subsequences grows relative to `c`.
pub fn aggregate_patient(scores: &[f64], c: f64) -> Result<f64, LearnError> {
    Ok(PatientAggregate::from_scores("", scores, c)?.probability())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    #[default]
    AverageMerge,
    Forest,
}

/// Per-family voice probabilities for one subject. A family may be absent
/// (not trained, or no usable clip); at least one must be present to fuse.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VoiceScores {
    pub mfcc: Option<f64>,
    pub egemaps: Option<f64>,
    pub vg: Option<f64>,
}

impl VoiceScores {
    pub fn all(mfcc: f64, egemaps: f64, vg: f64) -> Self {
        Self {
            mfcc: Some(mfcc),
            egemaps: Some(egemaps),
            vg: Some(vg),
        }
    }

    /// Mean of the present families.
    pub fn average(&self) -> Result<f64, LearnError> {
        let present: Vec<f64> = [self.mfcc, self.egemaps, self.vg]
            .into_iter()
            .flatten()
            .collect();
        if present.is_empty() {
            return Err(LearnError::MissingScore("no voice family score".into()));
        }
        if let Some(&p) = present.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(LearnError::BadProbability(p));
        }
        Ok(present.iter().sum::<f64>() / present.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fused {
    pub voice_avg: f64,
    pub text_p: f64,
    pub final_p: f64,
    pub label: u8,
}

pub fn classify(p: f64) -> u8 {
    u8::from(p >= DECISION_THRESHOLD)
}

/// Late fusion of voice and text probabilities.
pub fn fuse_scores(
    voice: &VoiceScores,
    text_p: Option<f64>,
    strategy: FusionStrategy,
    fusion_model: Option<&RandomForestModel>,
) -> Result<Fused, LearnError> {
    let voice_avg = voice.average()?;
    let text_p = text_p.ok_or_else(|| LearnError::MissingScore("no text score".into()))?;
    if !(0.0..=1.0).contains(&text_p) {
        return Err(LearnError::BadProbability(text_p));
    }
    let final_p = match strategy {
        FusionStrategy::AverageMerge => (voice_avg + text_p) / 2.0,
        FusionStrategy::Forest => fusion_model
            .ok_or(LearnError::UntrainedFusion)?
            .predict_proba(&[voice_avg, text_p])?,
    };
    Ok(Fused {
        voice_avg,
        text_p,
        final_p,
        label: classify(final_p),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent when the truth holds a single class.
    pub roc_auc: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Metrics {
    pub fn from_confusion(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Self {
            accuracy: ratio(tp + tn, tp + fp + tn + fn_),
            precision,
            recall,
            f1: f1_score(precision, recall),
            roc_auc: None,
            tp,
            fp,
            tn,
            fn_,
        }
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Confusion-matrix metrics of `predicted` against `truth`, plus ROC AUC
/// from `scores` when both classes are present.
pub fn evaluate(predicted: &[u8], scores: &[f64], truth: &[u8]) -> Result<Metrics, LearnError> {
    if predicted.len() != truth.len() || scores.len() != truth.len() {
        return Err(LearnError::LengthMismatch {
            predictions: predicted.len().max(scores.len()),
            truth: truth.len(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 0) => tn += 1,
            (0, 1) => fn_ += 1,
            (l, 1 | 0) | (_, l) => return Err(LearnError::InvalidLabel(l)),
        }
    }
    let mut m = Metrics::from_confusion(tp, fp, tn, fn_);
    m.roc_auc = roc_auc(scores, truth);
    Ok(m)
}

/// Trapezoidal area under the ROC curve. Tied scores form one threshold
/// step (a diagonal segment), which equals average-rank tie handling.
pub fn roc_auc(scores: &[f64], truth: &[u8]) -> Option<f64> {
    let pos = truth.iter().filter(|&&t| t == 1).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let (tp0, fp0) = (tp, fp);
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
    }
    Some(area / (pos * neg) as f64)
}
