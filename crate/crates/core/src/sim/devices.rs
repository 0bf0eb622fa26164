//! Device sensing models and the provider fleet.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fingerprint::{
    AccessPointReading, Bssid, Entry, FeatureSchema, FeatureVector, LocalDatabase, SimTime, WifiScan,
    DEFAULT_SIM_THRESHOLD, RSSI_FLOOR_DBM,
};
use crate::privacy::{AreaLevel, PrivacyParams, ProviderId};
use crate::rng::stream;
use crate::sim::world::World;

/// Resampling attempts when a scan comes back empty.
pub const MAX_RESAMPLES: usize = 10;

/// How the provider fleet and the requester are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FleetConfig {
    pub providers: usize,
    /// Fraction of places each provider has visited.
    pub coverage: f64,
    /// Range each provider's AP detection probability is drawn from.
    pub detection_probability: [f64; 2],
    /// Range each provider's RSSI jitter σ (dB) is drawn from.
    pub rssi_jitter_db: [f64; 2],
    pub sound_noise_db: f64,
    pub cell_noise_db: f64,
    pub area_level: AreaLevel,
    pub requester_detection_probability: f64,
    pub requester_jitter_db: f64,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            providers: 7,
            coverage: 0.85,
            detection_probability: [0.8, 1.0],
            rssi_jitter_db: [1.0, 3.0],
            sound_noise_db: 8.0,
            cell_noise_db: 6.0,
            area_level: AreaLevel::City,
            requester_detection_probability: 0.98,
            requester_jitter_db: 2.0,
        }
    }
}

impl FleetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.providers == 0 {
            return Err(invalid("fleet needs at least one provider"));
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(invalid(format!("coverage {} outside (0, 1]", self.coverage)));
        }
        let [dlo, dhi] = self.detection_probability;
        if !(dlo > 0.0 && dlo <= dhi && dhi <= 1.0) {
            return Err(invalid("detection probability range must lie in (0, 1]"));
        }
        if !(self.requester_detection_probability > 0.0 && self.requester_detection_probability <= 1.0) {
            return Err(invalid("requester detection probability must lie in (0, 1]"));
        }
        let [jlo, jhi] = self.rssi_jitter_db;
        for v in [jlo, jhi, self.sound_noise_db, self.cell_noise_db, self.requester_jitter_db] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid("noise levels must be non-negative"));
            }
        }
        if jlo > jhi {
            return Err(invalid("jitter range is reversed"));
        }
        Ok(())
    }
}

/// One device's sensing characteristics and history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub id: ProviderId,
    pub detection_probability: f64,
    pub rssi_jitter_db: f64,
    pub sound_noise_db: f64,
    pub cell_noise_db: f64,
    /// Indices into `World::places`, in visiting order.
    pub coverage: Vec<usize>,
    pub privacy: PrivacyParams,
    pub home_tower: String,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.detection_probability > 0.0 && self.detection_probability <= 1.0) {
            return Err(invalid(format!(
                "{}: detection probability {} outside (0, 1]",
                self.id, self.detection_probability
            )));
        }
        for v in [self.rssi_jitter_db, self.sound_noise_db, self.cell_noise_db] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{}: noise levels must be non-negative", self.id)));
            }
        }
        self.privacy.validate()
    }
}

fn gaussian<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("positive sigma").sample(rng)
    } else {
        0.0
    }
}

/// One sensing of `place` by `device`. `None` when no AP was detected.
pub fn sample_scan<R: Rng + ?Sized>(
    world: &World,
    device: &DeviceProfile,
    place: usize,
    at: SimTime,
    rng: &mut R,
) -> Result<Option<(WifiScan, FeatureVector)>> {
    let p = world
        .places
        .get(place)
        .ok_or_else(|| invalid(format!("place {place} does not exist")))?;
    let mut readings = Vec::new();
    for &(ai, mean) in &p.audible {
        if !rng.random_bool(device.detection_probability) {
            continue;
        }
        let rssi = mean + gaussian(device.rssi_jitter_db, rng);
        if rssi <= RSSI_FLOOR_DBM {
            continue;
        }
        let bssid = Bssid::new(world.access_points[ai].bssid.clone())?;
        readings.push(AccessPointReading::new(bssid, rssi.min(0.0))?);
    }
    if readings.is_empty() {
        return Ok(None);
    }
    let tower = world.tower_of_place(place);
    let features = FeatureVector::default()
        .with_numeric("sound_level", p.sound_level + gaussian(device.sound_noise_db, rng))
        .with_numeric("cell_signal_dbm", p.cell_signal_dbm + gaussian(device.cell_noise_db, rng))
        .with_categorical("cell_tower_id", &tower.name)
        .with_categorical("lac", &tower.lac);
    Ok(Some((WifiScan::strongest(readings, at)?, features)))
}

/// Like [`sample_scan`], retrying empty scans up to [`MAX_RESAMPLES`] times.
pub fn sample_nonempty<R: Rng + ?Sized>(
    world: &World,
    device: &DeviceProfile,
    place: usize,
    at: SimTime,
    rng: &mut R,
) -> Result<Option<(WifiScan, FeatureVector)>> {
    for _ in 0..MAX_RESAMPLES {
        if let Some(s) = sample_scan(world, device, place, at, rng)? {
            return Ok(Some(s));
        }
    }
    Ok(None)
}

/// Draws the provider fleet described by `world.config.fleet`.
pub fn build_fleet(world: &World, seed: u64) -> Vec<DeviceProfile> {
    let fleet = &world.config.fleet;
    let n_places = world.places.len();
    let visits = ((fleet.coverage * n_places as f64).round() as usize).clamp(1, n_places);
    (0..fleet.providers)
        .map(|i| {
            let mut rng = stream(seed, &[0xf1ee7, i as u64]);
            let coverage = index::sample(&mut rng, n_places, visits).into_vec();
            let mut per_tower = vec![0usize; world.towers.len()];
            for &p in &coverage {
                per_tower[world.buildings[world.places[p].building].tower] += 1;
            }
            let home = (0..per_tower.len())
                .max_by_key(|&t| (per_tower[t], std::cmp::Reverse(t)))
                .unwrap_or(0);
            let [dlo, dhi] = fleet.detection_probability;
            let [jlo, jhi] = fleet.rssi_jitter_db;
            DeviceProfile {
                id: ProviderId(format!("phone-{}", i + 1)),
                detection_probability: if dhi > dlo { rng.random_range(dlo..=dhi) } else { dlo },
                rssi_jitter_db: if jhi > jlo { rng.random_range(jlo..=jhi) } else { jlo },
                sound_noise_db: fleet.sound_noise_db,
                cell_noise_db: fleet.cell_noise_db,
                coverage,
                privacy: PrivacyParams {
                    area_level: fleet.area_level,
                    ..PrivacyParams::default()
                },
                home_tower: world.towers[home].path.clone(),
            }
        })
        .collect()
}

/// The device issuing test queries.
pub fn requester_profile(world: &World) -> DeviceProfile {
    let fleet = &world.config.fleet;
    DeviceProfile {
        id: ProviderId("requester".into()),
        detection_probability: fleet.requester_detection_probability,
        rssi_jitter_db: fleet.requester_jitter_db,
        sound_noise_db: fleet.sound_noise_db,
        cell_noise_db: fleet.cell_noise_db,
        coverage: (0..world.places.len()).collect(),
        privacy: PrivacyParams::default(),
        home_tower: world.towers[0].path.clone(),
    }
}

/// Runs each device's local-learning loop over its coverage: a visit adds
/// an entry (labelled with ground truth) only when it is a new location.
pub fn populate_devices(world: &World, profiles: &[DeviceProfile], seed: u64) -> Result<Vec<LocalDatabase>> {
    profiles
        .iter()
        .enumerate()
        .map(|(i, dev)| {
            dev.validate()?;
            let mut rng = stream(seed, &[0xdb, i as u64]);
            let mut db = LocalDatabase::new(FeatureSchema::standard(), DEFAULT_SIM_THRESHOLD)?;
            for (visit, &place) in dev.coverage.iter().enumerate() {
                let at = visit as SimTime;
                let Some((scan, features)) = sample_nonempty(world, dev, place, at, &mut rng)? else {
                    continue;
                };
                if db.is_new_location(&scan, &features)? {
                    db.insert_entry(Entry {
                        scan,
                        features,
                        label: world.places[place].label.clone(),
                        recorded_at: at,
                    })?;
                }
            }
            Ok(db)
        })
        .collect()
}
