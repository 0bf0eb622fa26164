//! Utility-weighted fusion of provider responses.
//!
//! The cell-tower PM averages the top-k lists it received, weighting each
//! by the provider's utility `U = U_n · U_t`. `U_n` tracks how useful a
//! provider's past answers were; `U_t` decays with the age of its data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifier::LabelDistribution;
use crate::error::{invalid, Error, Result};
use crate::fingerprint::LocationLabel;
use crate::privacy::{LabelProbability, ProviderId, RankedLabels};

/// Acceptance threshold used by requesters during local learning.
pub const DEFAULT_ACCEPT_THRESHOLD: f64 = 0.5;

/// Default half-life of the time utility: 30 days, in seconds.
pub const DEFAULT_HALF_LIFE: f64 = 30.0 * 24.0 * 3600.0;

pub const DEFAULT_SMOOTHING: f64 = 0.2;

pub const FUSED_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utility {
    /// Usefulness estimated from past feedback, in [0, 1].
    pub noise: f64,
    /// Freshness, in (0, 1].
    pub time: f64,
}

impl Default for Utility {
    fn default() -> Self {
        Self::FULL
    }
}

impl Utility {
    pub const FULL: Utility = Utility {
        noise: 1.0,
        time: 1.0,
    };

    pub fn new(noise: f64, time: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&noise) {
            return Err(invalid(format!("noise utility {noise} outside [0, 1]")));
        }
        if !(time > 0.0 && time <= 1.0) {
            return Err(invalid(format!("time utility {time} outside (0, 1]")));
        }
        Ok(Self { noise, time })
    }

    pub fn weight(&self) -> f64 {
        self.noise * self.time
    }
}

/// One collaborator's contribution as seen by the fusing PM.
#[derive(Clone, Debug, PartialEq)]
pub struct ProviderResponse {
    pub provider: ProviderId,
    /// `None` is an NA ("I don't know") answer.
    pub ranked: Option<RankedLabels>,
    pub utility: Utility,
}

/// Weighted average of the non-NA responses.
///
/// A label missing from a response counts as probability zero there.
/// Responses with zero weight are ignored entirely, so they add neither
/// mass nor support.
pub fn weighted_average_fusion(responses: &[ProviderResponse]) -> Result<LabelDistribution> {
    let mut fused = LabelDistribution::new();
    let mut total_weight = 0.0;
    let mut informative = 0;
    for r in responses {
        let Some(ranked) = &r.ranked else { continue };
        informative += 1;
        let w = r.utility.weight();
        if w < 0.0 || !w.is_finite() {
            return Err(invalid(format!("utility weight {w} of {} is invalid", r.provider)));
        }
        if w == 0.0 {
            continue;
        }
        total_weight += w;
        for (label, p) in ranked {
            fused.add(label.clone(), w * p);
        }
    }
    if informative == 0 {
        return Err(Error::NoInformation("every response was NA".into()));
    }
    if total_weight == 0.0 {
        return Err(Error::NoInformation("total utility weight is zero".into()));
    }
    fused.masses_mut().for_each(|m| *m /= total_weight);
    Ok(fused.normalized())
}

/// The most likely label if its mass exceeds `threshold`. Ties for the
/// maximum count as insufficient confidence.
pub fn accept_label(dist: &LabelDistribution, threshold: f64) -> Option<LocationLabel> {
    dist.argmax()
        .filter(|(_, m)| *m > threshold)
        .map(|(l, _)| l.clone())
}

/// `2^(-age / half_life)`.
pub fn time_utility(age: f64, half_life: f64) -> Result<f64> {
    if !(half_life > 0.0) {
        return Err(invalid(format!("half-life {half_life} must be positive")));
    }
    if !(age >= 0.0) {
        return Err(invalid(format!("age {age} must be non-negative")));
    }
    Ok((-age / half_life).exp2())
}

/// Exponential moving average of feedback.
pub fn update_noise_utility(current: f64, feedback: f64, smoothing: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&current) || !(0.0..=1.0).contains(&feedback) {
        return Err(invalid(format!(
            "utility {current} and feedback {feedback} must lie in [0, 1]"
        )));
    }
    if !(smoothing > 0.0 && smoothing < 1.0) {
        return Err(invalid(format!("smoothing {smoothing} outside (0, 1)")));
    }
    Ok(((1.0 - smoothing) * current + smoothing * feedback).clamp(0.0, 1.0))
}

/// Feedback for one provider once a fused label was accepted: the mass its
/// response gave that label, relative to its own top-1 mass.
///
/// This is a consistency signal, not ground truth; the fusing PM never sees
/// the true location.
pub fn consistency_feedback(ranked: &RankedLabels, accepted: &LocationLabel) -> f64 {
    let top = ranked.iter().map(|(_, p)| *p).fold(0.0, f64::max);
    if top <= 0.0 {
        return 0.0;
    }
    let p = ranked
        .iter()
        .find(|(l, _)| l == accepted)
        .map_or(0.0, |(_, p)| *p);
    (p / top).clamp(0.0, 1.0)
}

/// Per-provider utilities held by the fusing side.
#[derive(Clone, Debug, Default)]
pub struct UtilityLedger {
    utilities: BTreeMap<ProviderId, Utility>,
    /// `Some(smoothing)` enables learning from consistency feedback.
    learning: Option<f64>,
}

impl UtilityLedger {
    pub fn fixed() -> Self {
        Self::default()
    }

    pub fn learning(smoothing: f64) -> Result<Self> {
        if !(smoothing > 0.0 && smoothing < 1.0) {
            return Err(invalid(format!("smoothing {smoothing} outside (0, 1)")));
        }
        Ok(Self {
            utilities: BTreeMap::new(),
            learning: Some(smoothing),
        })
    }

    pub fn set(&mut self, provider: ProviderId, utility: Utility) {
        self.utilities.insert(provider, utility);
    }

    /// Unknown providers get full utility.
    pub fn get(&self, provider: &ProviderId) -> Utility {
        self.utilities.get(provider).copied().unwrap_or_default()
    }

    pub fn is_learning(&self) -> bool {
        self.learning.is_some()
    }

    /// Applies consistency feedback to every contributing provider.
    pub fn record_feedback(&mut self, responses: &[ProviderResponse], accepted: &LocationLabel) -> Result<()> {
        let Some(smoothing) = self.learning else {
            return Ok(());
        };
        for r in responses {
            let Some(ranked) = &r.ranked else { continue };
            let fb = consistency_feedback(ranked, accepted);
            let mut u = self.get(&r.provider);
            u.noise = update_noise_utility(u.noise, fb, smoothing)?;
            self.utilities.insert(r.provider.clone(), u);
        }
        Ok(())
    }
}

/// Fused distribution as sent back to a requester.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusedResult {
    pub schema_version: u32,
    /// Sorted by decreasing probability, then label.
    pub labels: Vec<LabelProbability>,
    /// Number of non-NA responses fused (`l`).
    pub collaborators: usize,
    /// Collection iterations (`r`).
    pub iterations: usize,
    pub providers_contacted: usize,
}

impl FusedResult {
    pub fn new(dist: &LabelDistribution, collaborators: usize, iterations: usize, providers_contacted: usize) -> Self {
        let ranked = crate::privacy::top_k(dist, dist.len());
        Self {
            schema_version: FUSED_SCHEMA_VERSION,
            labels: ranked
                .into_iter()
                .map(|(l, p)| LabelProbability {
                    building: l.building,
                    room: l.room,
                    probability: p,
                })
                .collect(),
            collaborators,
            iterations,
            providers_contacted,
        }
    }

    pub fn distribution(&self) -> Result<LabelDistribution> {
        if self.schema_version != FUSED_SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported fused schema version {}",
                self.schema_version
            )));
        }
        self.labels
            .iter()
            .map(|lp| Ok((LocationLabel::new(lp.building.clone(), lp.room.clone())?, lp.probability)))
            .collect()
    }
}
