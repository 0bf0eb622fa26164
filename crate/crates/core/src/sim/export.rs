//! On-disk form of a generated world.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::overlay::topology::ProviderPlacement;
use crate::overlay::{Replication, TopologyConfig};
use crate::sim::devices::{build_fleet, populate_devices};
use crate::sim::world::{generate_world, WorldConfig};

/// Summary of what [`write_world_dir`] produced.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldExport {
    pub digest: String,
    pub places: usize,
    /// `(provider id, database entries)`.
    pub databases: Vec<(String, usize)>,
}

/// Generates the world of `config` with its fleet and writes
/// `world.json`, `topology.toml` and `db/<provider>.jsonl` into `dir`.
pub fn write_world_dir(config: &WorldConfig, dir: &Path) -> Result<WorldExport> {
    let world = generate_world(config)?;
    let fleet = build_fleet(&world, config.seed);
    let dbs = populate_devices(&world, &fleet, config.seed)?;
    fs::create_dir_all(dir.join("db"))?;

    let mut out = BufWriter::new(File::create(dir.join("world.json"))?);
    serde_json::to_writer_pretty(&mut out, &world)?;
    out.write_all(b"\n")?;
    out.flush()?;

    let topology = TopologyConfig {
        towers: world.towers.iter().map(|t| t.path.clone()).collect(),
        replication: Replication::default(),
        providers: fleet
            .iter()
            .map(|d| ProviderPlacement {
                id: d.id.clone(),
                home_tower: d.home_tower.clone(),
                area_level: d.privacy.area_level,
            })
            .collect(),
    };
    fs::write(dir.join("topology.toml"), topology.to_toml()?)?;

    let mut databases = Vec::with_capacity(fleet.len());
    for (dev, db) in fleet.iter().zip(&dbs) {
        let mut w = BufWriter::new(File::create(dir.join("db").join(format!("{}.jsonl", dev.id)))?);
        db.write_jsonl(&mut w)?;
        w.flush()?;
        databases.push((dev.id.to_string(), db.len()));
    }
    Ok(WorldExport {
        digest: world.digest(),
        places: world.places.len(),
        databases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::{FeatureSchema, LocalDatabase};
    use crate::fingerprint::DEFAULT_SIM_THRESHOLD;

    #[test]
    fn world_dir_round_trips() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = WorldConfig::with_seed(5);
        cfg.buildings = 4;
        cfg.public_places_per_tower = 10;
        let export = write_world_dir(&cfg, tmp.path()).unwrap();
        let topo = TopologyConfig::from_toml(&fs::read_to_string(tmp.path().join("topology.toml")).unwrap()).unwrap();
        assert_eq!(topo.providers.len(), cfg.fleet.providers);
        topo.build(1).unwrap();
        let (id, len) = &export.databases[0];
        let file = File::open(tmp.path().join("db").join(format!("{id}.jsonl"))).unwrap();
        let db = LocalDatabase::read_jsonl(std::io::BufReader::new(file), FeatureSchema::standard(), DEFAULT_SIM_THRESHOLD).unwrap();
        assert_eq!(db.len(), *len);
        let again = write_world_dir(&cfg, tmp.path()).unwrap();
        assert_eq!(again, export);
    }
}
