//! Provider-side location distribution generation.
//!
//! A provider answers a request by classifying it against its own database,
//! enlarging the result with zero-mass decoy labels drawn from its privacy
//! region, adding Gaussian noise to every mass, and sending back only the
//! `k` most likely labels.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::classifier::{two_step_classify, ClassifierKind, LabelDistribution, StepWeights};
use crate::error::{invalid, Result};
use crate::fingerprint::{FeatureVector, LocalDatabase, LocationLabel, WifiScan};

/// Version tag written into every serialized response.
pub const RESPONSE_SCHEMA_VERSION: u32 = 1;

/// The region inside which a provider's location history is anonymized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaLevel {
    #[default]
    CellTower,
    City,
    County,
    State,
    Country,
}

impl AreaLevel {
    pub const ALL: [AreaLevel; 5] = [
        AreaLevel::CellTower,
        AreaLevel::City,
        AreaLevel::County,
        AreaLevel::State,
        AreaLevel::Country,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::CellTower => "cell_tower",
            Self::City => "city",
            Self::County => "county",
            Self::State => "state",
            Self::Country => "country",
        }
    }
}

impl fmt::Display for AreaLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AreaLevel {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown area level {s:?}")))
    }
}

/// Opaque device identifier.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProviderId(pub String);

impl fmt::Display for ProviderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ProviderId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    /// Number of decoy labels.
    pub p1: usize,
    /// Standard deviation of the Gaussian noise added to each mass.
    pub p2: f64,
    /// Response length.
    pub k: usize,
    pub area_level: AreaLevel,
}

impl Default for PrivacyParams {
    fn default() -> Self {
        Self {
            p1: 0,
            p2: 0.0,
            k: 25,
            area_level: AreaLevel::CellTower,
        }
    }
}

impl PrivacyParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if !(self.p2 >= 0.0 && self.p2.is_finite()) {
            return Err(invalid(format!("noise level p2 = {} must be >= 0", self.p2)));
        }
        Ok(())
    }
}

/// Public place names inside a provider's privacy region.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelPool {
    labels: Vec<LocationLabel>,
}

impl LabelPool {
    pub fn new(labels: Vec<LocationLabel>) -> Result<Self> {
        if labels.is_empty() {
            return Err(invalid("label pool must be non-empty"));
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[LocationLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Appends up to `p1` zero-mass decoys, drawn uniformly without replacement
/// from the pool labels not already in `dist`.
pub fn add_decoys<R: Rng + ?Sized>(
    dist: &LabelDistribution,
    p1: usize,
    pool: &LabelPool,
    rng: &mut R,
) -> LabelDistribution {
    let mut out = dist.clone();
    if p1 == 0 {
        return out;
    }
    // A uniformly shuffled sample large enough to survive the filter; its
    // first p1 survivors are a uniform draw from the filtered pool.
    let amount = (p1 + dist.len()).min(pool.len());
    let mut added = 0;
    for i in index::sample(rng, pool.len(), amount).iter() {
        let label = &pool.labels[i];
        if dist.contains(label) {
            continue;
        }
        out.set(label.clone(), 0.0);
        added += 1;
        if added == p1 {
            break;
        }
    }
    out
}

/// Adds `N(0, p2)` noise to every mass, clamps negatives to zero and
/// renormalizes. An all-zero result becomes uniform over the support.
pub fn perturb<R: Rng + ?Sized>(dist: &LabelDistribution, p2: f64, rng: &mut R) -> LabelDistribution {
    let mut out = dist.clone();
    if p2 > 0.0 {
        let noise = Normal::new(0.0, p2).expect("p2 is finite and positive");
        for m in out.masses_mut() {
            *m = (*m + noise.sample(rng)).max(0.0);
        }
    } else {
        for m in out.masses_mut() {
            *m = m.max(0.0);
        }
    }
    out.normalized()
}

/// Labels ranked by mass, most likely first.
pub type RankedLabels = Vec<(LocationLabel, f64)>;

/// The `k` highest-mass labels in decreasing order; equal masses are ordered
/// by label. Probabilities are not renormalized.
pub fn top_k(dist: &LabelDistribution, k: usize) -> RankedLabels {
    let mut ranked: RankedLabels = dist.iter().map(|(l, m)| (l.clone(), m)).collect();
    ranked.sort_by(|(la, ma), (lb, mb)| mb.total_cmp(ma).then_with(|| la.cmp(lb)));
    ranked.truncate(k);
    ranked
}

/// Everything a provider needs besides its database to answer a request.
#[derive(Clone, Copy, Debug)]
pub struct ProviderSettings<'a> {
    pub params: PrivacyParams,
    pub weights: StepWeights,
    pub classifier: ClassifierKind,
    pub pool: &'a LabelPool,
}

/// The complete provider pipeline: two-step classification, decoys,
/// perturbation and truncation. `Ok(None)` is an NA answer.
pub fn generate_location_distribution<R: Rng + ?Sized>(
    db: &LocalDatabase,
    scan: &WifiScan,
    features: &FeatureVector,
    settings: ProviderSettings<'_>,
    rng: &mut R,
) -> Result<Option<RankedLabels>> {
    settings.params.validate()?;
    let Some(classified) =
        two_step_classify(db, scan, features, settings.weights, settings.classifier)?
    else {
        return Ok(None);
    };
    let enlarged = add_decoys(&classified, settings.params.p1, settings.pool, rng);
    let noisy = perturb(&enlarged, settings.params.p2, rng);
    Ok(Some(top_k(&noisy, settings.params.k)))
}

/// JSON form of one provider's answer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseMessage {
    pub schema_version: u32,
    pub provider_id: ProviderId,
    pub na: bool,
    pub labels: Vec<LabelProbability>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelProbability {
    pub building: String,
    pub room: String,
    pub probability: f64,
}

impl ResponseMessage {
    pub fn new(provider_id: ProviderId, ranked: Option<&RankedLabels>) -> Self {
        Self {
            schema_version: RESPONSE_SCHEMA_VERSION,
            provider_id,
            na: ranked.is_none(),
            labels: ranked
                .map(|r| {
                    r.iter()
                        .map(|(l, p)| LabelProbability {
                            building: l.building.clone(),
                            room: l.room.clone(),
                            probability: *p,
                        })
                        .collect()
                })
                .unwrap_or_default(),
        }
    }

    /// The ranked labels, or `None` for an NA answer.
    pub fn ranked(&self) -> Result<Option<RankedLabels>> {
        if self.schema_version != RESPONSE_SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported response schema version {}",
                self.schema_version
            )));
        }
        if self.na {
            if !self.labels.is_empty() {
                return Err(invalid("NA response must not carry labels"));
            }
            return Ok(None);
        }
        if self.labels.is_empty() {
            return Err(invalid("non-NA response needs at least one label"));
        }
        self.labels
            .iter()
            .map(|lp| {
                if !(0.0..=1.0).contains(&lp.probability) {
                    return Err(invalid(format!("probability {} outside [0, 1]", lp.probability)));
                }
                Ok((LocationLabel::new(lp.building.clone(), lp.room.clone())?, lp.probability))
            })
            .collect::<Result<_>>()
            .map(Some)
    }
}
