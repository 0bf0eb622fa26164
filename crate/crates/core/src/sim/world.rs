//! Synthetic campus worlds: buildings, rooms, access points and the radio
//! ground truth each room sees.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::fingerprint::{LocationLabel, RSSI_FLOOR_DBM};
use crate::rng::stream;
use crate::sim::devices::FleetConfig;

/// Physical layout and radio model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub seed: u64,
    #[serde(default = "defaults::buildings")]
    pub buildings: usize,
    /// Inclusive range of rooms per building.
    #[serde(default = "defaults::rooms_per_building")]
    pub rooms_per_building: [usize; 2],
    #[serde(default = "defaults::aps_per_building")]
    pub aps_per_building: usize,
    /// Path-loss exponent γ.
    #[serde(default = "defaults::path_loss_exponent")]
    pub path_loss_exponent: f64,
    /// RSSI at 1 m, in dBm.
    #[serde(default = "defaults::reference_power_dbm")]
    pub reference_power_dbm: f64,
    /// Standard deviation of the static per-(AP, room) shadowing, in dB.
    #[serde(default = "defaults::shadowing_db")]
    pub shadowing_db: f64,
    #[serde(default = "defaults::building_spacing_m")]
    pub building_spacing_m: f64,
    #[serde(default = "defaults::room_spacing_m")]
    pub room_spacing_m: f64,
    /// Cell-tower paths (`country/state/county/city/tower`); buildings are
    /// dealt round-robin.
    #[serde(default = "defaults::towers")]
    pub towers: Vec<String>,
    /// Public place names per tower that providers draw decoys from, on
    /// top of the world's own rooms.
    #[serde(default = "defaults::public_places_per_tower")]
    pub public_places_per_tower: usize,
    #[serde(default)]
    pub fleet: FleetConfig,
}

mod defaults {
    pub fn buildings() -> usize {
        15
    }
    pub fn rooms_per_building() -> [usize; 2] {
        [3, 4]
    }
    pub fn aps_per_building() -> usize {
        8
    }
    pub fn path_loss_exponent() -> f64 {
        3.0
    }
    pub fn reference_power_dbm() -> f64 {
        -30.0
    }
    pub fn shadowing_db() -> f64 {
        4.0
    }
    pub fn building_spacing_m() -> f64 {
        150.0
    }
    pub fn room_spacing_m() -> f64 {
        10.0
    }
    pub fn towers() -> Vec<String> {
        vec![
            "us/nj/middlesex/new_brunswick/campus".into(),
            "us/nj/middlesex/new_brunswick/downtown".into(),
        ]
    }
    pub fn public_places_per_tower() -> usize {
        2500
    }
}

impl WorldConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            buildings: defaults::buildings(),
            rooms_per_building: defaults::rooms_per_building(),
            aps_per_building: defaults::aps_per_building(),
            path_loss_exponent: defaults::path_loss_exponent(),
            reference_power_dbm: defaults::reference_power_dbm(),
            shadowing_db: defaults::shadowing_db(),
            building_spacing_m: defaults::building_spacing_m(),
            room_spacing_m: defaults::room_spacing_m(),
            towers: defaults::towers(),
            public_places_per_tower: defaults::public_places_per_tower(),
            fleet: FleetConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.rooms_per_building;
        if self.buildings == 0 || lo == 0 || lo > hi || self.aps_per_building == 0 {
            return Err(invalid("building, room and AP counts must be positive"));
        }
        for (name, v) in [
            ("path_loss_exponent", self.path_loss_exponent),
            ("building_spacing_m", self.building_spacing_m),
            ("room_spacing_m", self.room_spacing_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if !(self.shadowing_db >= 0.0 && self.shadowing_db.is_finite()) {
            return Err(invalid("shadowing_db must be non-negative"));
        }
        if !self.reference_power_dbm.is_finite() {
            return Err(invalid("reference_power_dbm must be finite"));
        }
        if self.towers.is_empty() {
            return Err(invalid("at least one tower is required"));
        }
        crate::overlay::RegionTree::from_tower_paths(&self.towers)?;
        self.fleet.validate()
    }
}

/// Log-distance path loss: `P0 - 10·γ·log10(d)`, with `d` floored at 1 m.
pub fn path_loss_rssi(reference_power_dbm: f64, gamma: f64, distance_m: f64) -> f64 {
    reference_power_dbm - 10.0 * gamma * distance_m.max(1.0).log10()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tower {
    pub path: String,
    /// Last path segment; doubles as the cell-tower-id feature.
    pub name: String,
    pub lac: String,
    pub position: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub name: String,
    pub tower: usize,
    pub position: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccessPoint {
    pub bssid: String,
    pub building: usize,
    pub position: [f64; 2],
}

/// A labelled room with its ground-truth sensor values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Place {
    pub label: LocationLabel,
    pub building: usize,
    pub position: [f64; 2],
    pub sound_level: f64,
    pub cell_signal_dbm: f64,
    /// `(AP index, mean RSSI)` for every AP above the sensitivity floor,
    /// strongest first.
    pub audible: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    pub towers: Vec<Tower>,
    pub buildings: Vec<Building>,
    pub access_points: Vec<AccessPoint>,
    pub places: Vec<Place>,
    /// Decoy source per tower.
    pub public_places: Vec<Vec<LocationLabel>>,
}

const TOWER_SEPARATION_M: f64 = 3000.0;

/// Builds a world. Deterministic in `config.seed`.
pub fn generate_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let mut rng = stream(config.seed, &[0x3031]);
    let shadow = Normal::new(0.0, config.shadowing_db.max(f64::MIN_POSITIVE)).expect("finite sigma");

    let towers: Vec<Tower> = config
        .towers
        .iter()
        .enumerate()
        .map(|(i, path)| Tower {
            name: path.rsplit('/').next().unwrap_or(path).to_owned(),
            lac: format!("lac-{}", 100 + i),
            path: path.clone(),
            position: [i as f64 * TOWER_SEPARATION_M, 0.0],
        })
        .collect();

    let mut buildings = Vec::new();
    let mut per_tower = vec![0usize; towers.len()];
    for b in 0..config.buildings {
        let t = b % towers.len();
        let slot = per_tower[t];
        per_tower[t] += 1;
        let cols = 3;
        buildings.push(Building {
            name: format!("bldg-{:02}", b + 1),
            tower: t,
            position: [
                towers[t].position[0] + (slot % cols) as f64 * config.building_spacing_m,
                towers[t].position[1] + (slot / cols) as f64 * config.building_spacing_m,
            ],
        });
    }

    let mut places = Vec::new();
    let mut access_points = Vec::new();
    let mut room_positions: Vec<Vec<[f64; 2]>> = Vec::new();
    for (bi, b) in buildings.iter().enumerate() {
        let rooms = rng.random_range(config.rooms_per_building[0]..=config.rooms_per_building[1]);
        let side = (rooms as f64).sqrt().ceil() as usize;
        let footprint = side as f64 * config.room_spacing_m;
        let half = 0.5 * config.room_spacing_m;
        let positions: Vec<[f64; 2]> = (0..rooms)
            .map(|r| {
                [
                    b.position[0] + (r % side) as f64 * config.room_spacing_m,
                    b.position[1] + (r / side) as f64 * config.room_spacing_m,
                ]
            })
            .collect();
        for a in 0..config.aps_per_building {
            access_points.push(AccessPoint {
                bssid: format!("02:00:00:{:02x}:{:02x}:{:02x}", b.tower, bi, a),
                building: bi,
                position: [
                    b.position[0] + rng.random_range(-half..footprint - half),
                    b.position[1] + rng.random_range(-half..footprint - half),
                ],
            });
        }
        room_positions.push(positions);
    }

    let tower_cell_base = |p: [f64; 2], t: &Tower| {
        let d = ((p[0] - t.position[0]).powi(2) + (p[1] - t.position[1]).powi(2)).sqrt();
        path_loss_rssi(-40.0, 2.0, d + 100.0)
    };
    for (bi, b) in buildings.iter().enumerate() {
        for (ri, &pos) in room_positions[bi].iter().enumerate() {
            let mut audible: Vec<(usize, f64)> = access_points
                .iter()
                .enumerate()
                .filter_map(|(ai, ap)| {
                    let d = ((pos[0] - ap.position[0]).powi(2) + (pos[1] - ap.position[1]).powi(2)).sqrt();
                    let s = if config.shadowing_db > 0.0 {
                        shadow.sample(&mut rng)
                    } else {
                        0.0
                    };
                    let rssi = path_loss_rssi(config.reference_power_dbm, config.path_loss_exponent, d) + s;
                    (rssi > RSSI_FLOOR_DBM).then_some((ai, rssi.min(0.0)))
                })
                .collect();
            if audible.is_empty() {
                return Err(Error::Generation(format!(
                    "room {} of {} hears no access point",
                    ri + 1,
                    b.name
                )));
            }
            audible.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
            places.push(Place {
                label: LocationLabel::new(b.name.clone(), format!("room-{}", ri + 1))?,
                building: bi,
                position: pos,
                sound_level: rng.random_range(35.0..80.0),
                cell_signal_dbm: tower_cell_base(pos, &towers[b.tower]) + rng.random_range(-6.0..6.0),
                audible,
            });
        }
    }

    let public_places = towers
        .iter()
        .enumerate()
        .map(|(ti, t)| {
            let mut labels: Vec<LocationLabel> = places
                .iter()
                .filter(|p| buildings[p.building].tower == ti)
                .map(|p| p.label.clone())
                .collect();
            labels.extend((0..config.public_places_per_tower).map(|i| {
                LocationLabel::new(format!("{}-poi-{:04}", t.name, i + 1), "main").expect("non-empty label")
            }));
            labels
        })
        .collect();

    Ok(World {
        config: config.clone(),
        towers,
        buildings,
        access_points,
        places,
        public_places,
    })
}

impl World {
    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("world serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn tower_of_place(&self, place: usize) -> &Tower {
        &self.towers[self.buildings[self.places[place].building].tower]
    }

    pub fn place_index(&self, label: &LocationLabel) -> Option<usize> {
        self.places.iter().position(|p| &p.label == label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn path_loss_identity() {
        assert_eq!(path_loss_rssi(-30.0, 2.0, 1.0), -30.0);
        assert!((path_loss_rssi(-30.0, 2.0, 10.0) + 50.0).abs() < 1e-12);
        assert_eq!(path_loss_rssi(-30.0, 3.0, 0.2), -30.0);
    }

    #[test]
    fn zero_shadowing_one_metre() {
        let mut c = WorldConfig::with_seed(1);
        c.shadowing_db = 0.0;
        c.path_loss_exponent = 2.0;
        let w = generate_world(&c).unwrap();
        for p in &w.places {
            for &(ai, rssi) in &p.audible {
                let ap = &w.access_points[ai];
                let d = ((p.position[0] - ap.position[0]).powi(2) + (p.position[1] - ap.position[1]).powi(2)).sqrt();
                assert!((rssi - path_loss_rssi(c.reference_power_dbm, 2.0, d)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn default_world_scale() {
        let w = generate_world(&WorldConfig::with_seed(7)).unwrap();
        assert_eq!(w.buildings.len(), 15);
        assert!((45..=60).contains(&w.places.len()), "{}", w.places.len());
        assert!(w.places.iter().all(|p| !p.audible.is_empty()));
        let labels: BTreeSet<_> = w.places.iter().map(|p| &p.label).collect();
        assert_eq!(labels.len(), w.places.len());
        assert_eq!(w.public_places.len(), 2);
    }

    #[test]
    fn deterministic_digest() {
        let a = generate_world(&WorldConfig::with_seed(3)).unwrap();
        let b = generate_world(&WorldConfig::with_seed(3)).unwrap();
        let c = generate_world(&WorldConfig::with_seed(4)).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn inaudible_world_fails() {
        let mut c = WorldConfig::with_seed(1);
        c.reference_power_dbm = -120.0;
        c.shadowing_db = 0.0;
        assert!(matches!(generate_world(&c), Err(Error::Generation(_))));
    }

    #[test]
    fn toml_defaults() {
        let c = WorldConfig::from_toml("seed = 5\nbuildings = 4").unwrap();
        assert_eq!(c.buildings, 4);
        assert_eq!(c.towers.len(), 2);
        assert!(WorldConfig::from_toml("buildings = 4").is_err());
        assert!(WorldConfig::from_toml("seed = 1\nbogus = 2").is_err());
    }
}
