//! Location classifiers.
//!
//! The provider-side classification runs in two steps: entries sharing at
//! least one access point with the query are selected, then a distribution
//! built from their Wi-Fi similarities is blended with a distribution from a
//! classifier trained on their additional features. The default classifier
//! is NFM (number of feature matches); a softmax regression baseline is
//! available for comparison.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fingerprint::{Entry, FeatureVector, LocalDatabase, LocationLabel, WifiScan};

/// Tolerance used when checking that masses sum to one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Probability mass over location labels.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelDistribution {
    mass: BTreeMap<LocationLabel, f64>,
}

impl LabelDistribution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (LocationLabel, f64)>>(pairs: I) -> Self {
        let mut d = Self::new();
        for (l, m) in pairs {
            d.add(l, m);
        }
        d
    }

    /// Uniform mass over the given labels (duplicates collapse).
    pub fn uniform<'a, I: IntoIterator<Item = &'a LocationLabel>>(labels: I) -> Self {
        let mut d = Self::from_pairs(labels.into_iter().map(|l| (l.clone(), 1.0)));
        let n = d.len() as f64;
        d.mass.values_mut().for_each(|m| *m = 1.0 / n);
        d
    }

    pub fn set(&mut self, label: LocationLabel, mass: f64) {
        self.mass.insert(label, mass);
    }

    /// Adds `mass` to the label, inserting it if absent.
    pub fn add(&mut self, label: LocationLabel, mass: f64) {
        *self.mass.entry(label).or_insert(0.0) += mass;
    }

    /// Inserts the label with zero mass unless it is already present.
    pub fn pad(&mut self, label: LocationLabel) {
        self.mass.entry(label).or_insert(0.0);
    }

    pub fn get(&self, label: &LocationLabel) -> f64 {
        self.mass.get(label).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, label: &LocationLabel) -> bool {
        self.mass.contains_key(label)
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LocationLabel, f64)> {
        self.mass.iter().map(|(l, &m)| (l, m))
    }

    pub fn labels(&self) -> impl Iterator<Item = &LocationLabel> {
        self.mass.keys()
    }

    pub(crate) fn masses_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.mass.values_mut()
    }

    pub fn total(&self) -> f64 {
        self.mass.values().sum()
    }

    pub fn is_normalized(&self) -> bool {
        !self.is_empty()
            && self.mass.values().all(|&m| m >= 0.0)
            && (self.total() - 1.0).abs() <= NORMALIZATION_TOLERANCE
    }

    /// Divides every mass by the total. A zero total yields the uniform
    /// distribution over the support.
    pub fn normalize(&mut self) {
        let total = self.total();
        let n = self.len() as f64;
        if total > 0.0 && total.is_finite() {
            self.mass.values_mut().for_each(|m| *m /= total);
        } else {
            self.mass.values_mut().for_each(|m| *m = 1.0 / n);
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    /// The unique highest-mass label, or `None` on an empty distribution or
    /// a tie for the maximum.
    pub fn argmax(&self) -> Option<(&LocationLabel, f64)> {
        let mut best: Option<(&LocationLabel, f64)> = None;
        let mut tied = false;
        for (l, &m) in &self.mass {
            match best {
                Some((_, bm)) if m < bm => {}
                Some((_, bm)) if m == bm => tied = true,
                _ => {
                    best = Some((l, m));
                    tied = false;
                }
            }
        }
        if tied {
            None
        } else {
            best
        }
    }

    /// Linear blend `Σ w_i · d_i` over the union of supports.
    pub fn weighted_sum(parts: &[(&LabelDistribution, f64)]) -> Self {
        let mut out = Self::new();
        for (d, w) in parts {
            for (l, m) in d.iter() {
                out.add(l.clone(), w * m);
            }
        }
        out
    }
}

impl FromIterator<(LocationLabel, f64)> for LabelDistribution {
    fn from_iter<T: IntoIterator<Item = (LocationLabel, f64)>>(iter: T) -> Self {
        Self::from_pairs(iter)
    }
}

/// Categories of one numeric feature, split at midpoints between adjacent
/// distinct training values.
///
/// Category `i` is `[boundaries[i-1], boundaries[i])`, with the first and last
/// open towards infinity.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryPartition {
    boundaries: Vec<f64>,
}

impl CategoryPartition {
    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn category_count(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn category_of(&self, value: f64) -> usize {
        self.boundaries.partition_point(|&b| b <= value)
    }

    pub fn intervals(&self) -> Vec<(f64, f64)> {
        let mut edges = Vec::with_capacity(self.boundaries.len() + 2);
        edges.push(f64::NEG_INFINITY);
        edges.extend_from_slice(&self.boundaries);
        edges.push(f64::INFINITY);
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

pub fn build_categories(values: &[f64]) -> Result<CategoryPartition> {
    if values.is_empty() {
        return Err(invalid("cannot build categories from no values"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(invalid(format!("non-finite feature value {v}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let boundaries = sorted.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    Ok(CategoryPartition { boundaries })
}

fn check_training(training: &[&Entry], input: &FeatureVector) -> Result<()> {
    if training.is_empty() {
        return Err(invalid("classifier needs at least one training entry"));
    }
    let schema = input.schema();
    for e in training {
        e.features.check_schema(&schema)?;
    }
    input.check_schema(&schema)
}

/// Number-of-feature-matches classifier.
///
/// Each training entry scores one point per feature on which the query
/// agrees with it: numeric features agree when both values fall in the same
/// midpoint category, categorical ones when they are equal. Scores are
/// summed per label and normalized; if nothing matches the result is uniform
/// over the training labels.
pub fn nfm_classify(training: &[&Entry], input: &FeatureVector) -> Result<LabelDistribution> {
    check_training(training, input)?;
    let mut counts = vec![0u32; training.len()];
    for (name, &query) in &input.numeric {
        let column: Vec<f64> = training.iter().map(|e| e.features.numeric[name]).collect();
        let partition = build_categories(&column)?;
        let query_cat = partition.category_of(query);
        for (count, &v) in counts.iter_mut().zip(&column) {
            if partition.category_of(v) == query_cat {
                *count += 1;
            }
        }
    }
    for (name, query) in &input.categorical {
        for (count, e) in counts.iter_mut().zip(training) {
            if &e.features.categorical[name] == query {
                *count += 1;
            }
        }
    }
    let sum: u32 = counts.iter().sum();
    if sum == 0 {
        return Ok(LabelDistribution::uniform(training.iter().map(|e| &e.label)));
    }
    Ok(training
        .iter()
        .zip(&counts)
        .map(|(e, &c)| (e.label.clone(), f64::from(c) / f64::from(sum)))
        .collect())
}

/// Normalized Wi-Fi similarities, summed per label.
pub fn similarity_distribution(matches: &[(&Entry, f64)]) -> Result<LabelDistribution> {
    if matches.is_empty() {
        return Err(invalid("similarity distribution needs at least one match"));
    }
    if let Some((e, s)) = matches.iter().find(|(_, s)| !(*s > 0.0)) {
        return Err(invalid(format!("non-positive similarity {s} for {}", e.label)));
    }
    Ok(matches
        .iter()
        .map(|(e, s)| (e.label.clone(), *s))
        .collect::<LabelDistribution>()
        .normalized())
}

/// Which classifier runs on the additional features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    #[default]
    Nfm,
    Mlr,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Nfm => "nfm",
            Self::Mlr => "mlr",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nfm" => Ok(Self::Nfm),
            "mlr" => Ok(Self::Mlr),
            other => Err(invalid(format!("unknown classifier {other:?}"))),
        }
    }
}

impl ClassifierKind {
    pub fn classify(self, training: &[&Entry], input: &FeatureVector) -> Result<LabelDistribution> {
        match self {
            Self::Nfm => nfm_classify(training, input),
            Self::Mlr => mlr_classify(training, input),
        }
    }
}

/// Blend weights of the two classification steps: `similarity` for the
/// Wi-Fi similarity distribution, `features` for the feature classifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepWeights {
    pub similarity: f64,
    pub features: f64,
}

impl Default for StepWeights {
    fn default() -> Self {
        Self {
            similarity: 0.5,
            features: 0.5,
        }
    }
}

impl StepWeights {
    pub fn new(similarity: f64, features: f64) -> Result<Self> {
        let w = Self {
            similarity,
            features,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.similarity >= 0.0 && self.features >= 0.0)
            || (self.similarity + self.features - 1.0).abs() > 1e-9
        {
            return Err(invalid(format!(
                "step weights ({}, {}) must be non-negative and sum to 1",
                self.similarity, self.features
            )));
        }
        Ok(())
    }
}

/// Two-step classification of a query against a local database.
///
/// Returns `Ok(None)` (an NA answer) when no entry shares an access point
/// with the query. Otherwise the similarity distribution and the feature
/// classifier's distribution over the matched entries are blended, every
/// other database label is appended with zero mass and the result is
/// normalized.
pub fn two_step_classify(
    db: &LocalDatabase,
    scan: &WifiScan,
    features: &FeatureVector,
    weights: StepWeights,
    classifier: ClassifierKind,
) -> Result<Option<LabelDistribution>> {
    weights.validate()?;
    let matches = db.match_entries(scan)?;
    if matches.is_empty() {
        return Ok(None);
    }
    let matched: Vec<(&Entry, f64)> = matches.iter().map(|&(i, s)| (&db.entries()[i], s)).collect();
    let by_similarity = similarity_distribution(&matched)?;
    let training: Vec<&Entry> = matched.iter().map(|(e, _)| *e).collect();
    let by_features = classifier.classify(&training, features)?;

    let mut blended = LabelDistribution::weighted_sum(&[
        (&by_similarity, weights.similarity),
        (&by_features, weights.features),
    ]);
    for e in db.entries() {
        blended.pad(e.label.clone());
    }
    blended.normalize();
    Ok(Some(blended))
}

/// Gradient descent settings for the softmax regression baseline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlrConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
}

impl Default for MlrConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_epochs: 500,
            tolerance: 1e-6,
        }
    }
}

/// Standardizes numeric features and one-hot encodes categorical ones.
#[derive(Clone, Debug)]
struct FeatureEncoder {
    numeric: Vec<(String, f64, f64)>,
    categorical: Vec<(String, Vec<String>)>,
}

impl FeatureEncoder {
    fn fit(training: &[&Entry]) -> Self {
        let first = &training[0].features;
        let n = training.len() as f64;
        let numeric = first
            .numeric
            .keys()
            .map(|name| {
                let vals: Vec<f64> = training.iter().map(|e| e.features.numeric[name]).collect();
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
                (name.clone(), mean, sd)
            })
            .collect();
        let categorical = first
            .categorical
            .keys()
            .map(|name| {
                let mut levels: Vec<String> = training
                    .iter()
                    .map(|e| e.features.categorical[name].clone())
                    .collect();
                levels.sort();
                levels.dedup();
                (name.clone(), levels)
            })
            .collect();
        Self {
            numeric,
            categorical,
        }
    }

    /// Encoded vector with a trailing bias term.
    fn encode(&self, f: &FeatureVector) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .numeric
            .iter()
            .map(|(name, mean, sd)| (f.numeric[name] - mean) / sd)
            .collect();
        for (name, levels) in &self.categorical {
            let v = &f.categorical[name];
            x.extend(levels.iter().map(|l| if l == v { 1.0 } else { 0.0 }));
        }
        x.push(1.0);
        x
    }
}

/// Multinomial logistic regression fitted by full-batch gradient descent.
#[derive(Clone, Debug)]
pub struct SoftmaxModel {
    classes: Vec<LocationLabel>,
    encoder: FeatureEncoder,
    weights: Vec<Vec<f64>>,
    epochs: usize,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

impl SoftmaxModel {
    pub fn fit(training: &[&Entry], config: MlrConfig) -> Result<Self> {
        if training.is_empty() {
            return Err(invalid("softmax regression needs training data"));
        }
        let mut classes: Vec<LocationLabel> = training.iter().map(|e| e.label.clone()).collect();
        classes.sort();
        classes.dedup();
        let encoder = FeatureEncoder::fit(training);
        let xs: Vec<Vec<f64>> = training.iter().map(|e| encoder.encode(&e.features)).collect();
        let ys: Vec<usize> = training
            .iter()
            .map(|e| classes.binary_search(&e.label).expect("label collected above"))
            .collect();
        let dims = xs[0].len();
        let mut weights = vec![vec![0.0; dims]; classes.len()];
        let mut epochs = 0;
        if classes.len() > 1 {
            let n = xs.len() as f64;
            let mut prev_loss = f64::INFINITY;
            for _ in 0..config.max_epochs {
                epochs += 1;
                let mut grad = vec![vec![0.0; dims]; classes.len()];
                let mut loss = 0.0;
                for (x, &y) in xs.iter().zip(&ys) {
                    let p = softmax(&Self::logits(&weights, x));
                    loss -= p[y].max(f64::MIN_POSITIVE).ln();
                    for (c, g) in grad.iter_mut().enumerate() {
                        let err = p[c] - if c == y { 1.0 } else { 0.0 };
                        g.iter_mut().zip(x).for_each(|(gi, xi)| *gi += err * xi);
                    }
                }
                loss /= n;
                for (w, g) in weights.iter_mut().zip(&grad) {
                    w.iter_mut()
                        .zip(g)
                        .for_each(|(wi, gi)| *wi -= config.learning_rate * gi / n);
                }
                if (prev_loss - loss).abs() < config.tolerance {
                    break;
                }
                prev_loss = loss;
            }
        }
        Ok(Self {
            classes,
            encoder,
            weights,
            epochs,
        })
    }

    fn logits(weights: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        weights
            .iter()
            .map(|w| w.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn predict(&self, input: &FeatureVector) -> LabelDistribution {
        if self.classes.len() == 1 {
            return LabelDistribution::from_pairs([(self.classes[0].clone(), 1.0)]);
        }
        let p = softmax(&Self::logits(&self.weights, &self.encoder.encode(input)));
        self.classes.iter().cloned().zip(p).collect()
    }
}

/// Softmax regression baseline with default hyperparameters.
pub fn mlr_classify(training: &[&Entry], input: &FeatureVector) -> Result<LabelDistribution> {
    check_training(training, input)?;
    Ok(SoftmaxModel::fit(training, MlrConfig::default())?.predict(input))
}
