//! Request load on country-level PMs.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{invalid, Result};
use crate::fingerprint::{AccessPointReading, FeatureVector, WifiScan};
use crate::fusion::UtilityLedger;
use crate::overlay::routing::{CtpmConfig, OverlaySim, ProviderDirectory, ProviderQuery};
use crate::overlay::{CollectPolicy, NodeId, Overlay, PmLevel};
use crate::privacy::{ProviderId, RankedLabels};
use crate::rng::stream;

/// Requests per country PM per day when `n_r` requesters each send
/// `nreq_r` requests a week, spread over `n_pmc` country PMs.
pub fn theoretical_request_load(n_r: f64, nreq_r: f64, n_pmc: f64) -> Result<f64> {
    if !(n_pmc > 0.0) || !n_pmc.is_finite() {
        return Err(invalid(format!("country PM count must be positive, got {n_pmc}")));
    }
    if !(n_r >= 0.0 && nreq_r >= 0.0) || !n_r.is_finite() || !nreq_r.is_finite() {
        return Err(invalid("requester count and request rate must be non-negative"));
    }
    Ok(n_r * nreq_r / (7.0 * n_pmc))
}

/// Per-PM daily load observed in one simulated week.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadReport {
    pub requests: usize,
    pub country_pms: usize,
    /// Mean daily arrivals for every country PM, including idle ones.
    pub daily: BTreeMap<NodeId, f64>,
    pub expected: f64,
}

impl LoadReport {
    /// Largest relative deviation of any PM from the formula.
    pub fn max_relative_error(&self) -> f64 {
        self.daily
            .values()
            .map(|d| (d - self.expected).abs() / self.expected)
            .fold(0.0, f64::max)
    }
}

struct Silent;

impl ProviderDirectory for Silent {
    fn respond(&mut self, _: &ProviderId, _: &ProviderQuery<'_>) -> Result<Option<RankedLabels>> {
        Ok(None)
    }
}

/// Routes one week of requests through `overlay` and counts forward
/// arrivals at each country PM.
///
/// Every requester sends `weekly_requests` requests from a tower drawn
/// uniformly. Providers answer NA so only routing is exercised.
pub fn simulate_weekly_load(overlay: Overlay, requesters: usize, weekly_requests: usize, seed: u64) -> Result<LoadReport> {
    let towers: Vec<String> = overlay
        .tree()
        .towers()
        .map(|t| overlay.tree().region(t).path.clone())
        .collect();
    let country: Vec<NodeId> = overlay
        .tree()
        .at_level(PmLevel::Country)
        .flat_map(|r| overlay.replicas(r).to_vec())
        .collect();
    if towers.is_empty() || country.is_empty() {
        return Err(invalid("overlay has no towers"));
    }
    let ctpm = CtpmConfig {
        policy: CollectPolicy::new(1),
        utilities: UtilityLedger::fixed(),
        feedback_threshold: 0.5,
    };
    let mut sim = OverlaySim::new(overlay, ctpm, seed);
    let scan = WifiScan::new(vec![AccessPointReading::of("02:00:00:00:00:00", -60.0)?], 0.0)?;
    let features = FeatureVector::default();
    let mut rng = stream(seed, &[0x10ad]);
    let mut requests = 0;
    for day in 0..7 {
        for r in 0..requesters {
            // Spread each requester's weekly quota evenly over the days.
            let quota = weekly_requests * (day + 1) / 7 - weekly_requests * day / 7;
            for _ in 0..quota {
                let tower = &towers[rng.random_range(0..towers.len())];
                sim.submit(&format!("req-{r}"), &scan, &features, tower, &mut rng)?;
                requests += 1;
            }
        }
        sim.run(&mut Silent);
    }
    let arrivals = sim.forward_arrivals();
    let daily = country
        .iter()
        .map(|n| (*n, arrivals.get(n).copied().unwrap_or(0) as f64 / 7.0))
        .collect();
    Ok(LoadReport {
        requests,
        country_pms: country.len(),
        daily,
        expected: theoretical_request_load(requesters as f64, weekly_requests as f64, country.len() as f64)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlay::{build_hierarchy, RegionTree, Replication};

    #[test]
    fn formula_values() {
        let v = theoretical_request_load(20e6, 15.0, 1e5).unwrap();
        assert!((v - 428.571_428_571).abs() < 1e-6);
        assert_eq!(theoretical_request_load(20e6, 0.0, 1e5).unwrap(), 0.0);
        let half = theoretical_request_load(20e6, 15.0, 2e5).unwrap();
        assert!((half * 2.0 - v).abs() < 1e-9);
        assert!(theoretical_request_load(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn simulated_week_matches_formula() {
        let tree = RegionTree::from_tower_paths(["us/nj/mx/nb/a", "us/nj/mx/nb/b", "us/ny/kings/bk/c"]).unwrap();
        let overlay = build_hierarchy(tree, Replication::default(), 3).unwrap();
        let rep = simulate_weekly_load(overlay, 100, 15, 11).unwrap();
        assert_eq!(rep.requests, 1500);
        assert_eq!(rep.country_pms, 3);
        let total: f64 = rep.daily.values().sum();
        assert!((total - 1500.0 / 7.0).abs() < 1e-9);
        assert!(rep.max_relative_error() < 0.1, "{rep:?}");
    }
}
