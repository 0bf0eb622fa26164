//! The PM hierarchy: regions, replicated PM nodes and provider repositories.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::onion::KeyPair;
use crate::error::{invalid, Error, Result};
use crate::privacy::{AreaLevel, ProviderId};
use crate::rng::stream;

/// PM level. Shares its ordering with [`AreaLevel`]: `Country` is highest.
pub type PmLevel = AreaLevel;

/// Levels from the root down.
pub const TOP_DOWN: [PmLevel; 5] = [
    PmLevel::Country,
    PmLevel::State,
    PmLevel::County,
    PmLevel::City,
    PmLevel::CellTower,
];

/// Distance from the country level: `Country` is 0, `CellTower` is 4.
pub fn depth(level: PmLevel) -> usize {
    4 - level as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pm{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    /// Slash-separated path from the country, e.g. `us/nj/middlesex/nb/t1`.
    pub path: String,
    pub level: PmLevel,
    pub parent: Option<RegionId>,
    pub children: Vec<RegionId>,
}

/// Administrative regions implied by a set of cell-tower paths.
#[derive(Clone, Debug, Default)]
pub struct RegionTree {
    regions: Vec<Region>,
    by_path: HashMap<String, RegionId>,
}

impl RegionTree {
    /// Builds the tree from `country/state/county/city/tower` paths.
    pub fn from_tower_paths<I, S>(paths: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut tree = Self::default();
        for p in paths {
            let p = p.as_ref();
            let parts: Vec<&str> = p.split('/').collect();
            if parts.len() != 5 || parts.iter().any(|s| s.trim().is_empty() || *s != s.trim()) {
                return Err(invalid(format!(
                    "tower path {p:?} must have five non-empty segments"
                )));
            }
            if tree.by_path.contains_key(p) {
                return Err(invalid(format!("duplicate tower {p:?}")));
            }
            let mut parent = None;
            for (d, level) in TOP_DOWN.into_iter().enumerate() {
                let path = parts[..=d].join("/");
                let id = match tree.by_path.get(&path) {
                    Some(&id) => id,
                    None => {
                        let id = RegionId(tree.regions.len());
                        tree.regions.push(Region {
                            path: path.clone(),
                            level,
                            parent,
                            children: Vec::new(),
                        });
                        if let Some(RegionId(pi)) = parent {
                            tree.regions[pi].children.push(id);
                        }
                        tree.by_path.insert(path, id);
                        id
                    }
                };
                parent = Some(id);
            }
        }
        if tree.regions.is_empty() {
            return Err(invalid("topology has no cell towers"));
        }
        Ok(tree)
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, id: RegionId) -> &Region {
        &self.regions[id.0]
    }

    pub fn lookup(&self, path: &str) -> Option<RegionId> {
        self.by_path.get(path).copied()
    }

    pub fn at_level(&self, level: PmLevel) -> impl Iterator<Item = RegionId> + '_ {
        self.regions
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.level == level)
            .map(|(i, _)| RegionId(i))
    }

    pub fn towers(&self) -> impl Iterator<Item = RegionId> + '_ {
        self.at_level(PmLevel::CellTower)
    }

    /// The enclosing region at `level` (itself if already there).
    pub fn ancestor_at(&self, mut id: RegionId, level: PmLevel) -> Option<RegionId> {
        loop {
            let r = self.region(id);
            if r.level == level {
                return Some(id);
            }
            if r.level > level {
                return None;
            }
            id = r.parent?;
        }
    }

    pub fn towers_under(&self, id: RegionId) -> Vec<RegionId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(r) = stack.pop() {
            let region = self.region(r);
            if region.level == PmLevel::CellTower {
                out.push(r);
            }
            stack.extend(region.children.iter().rev());
        }
        out.sort();
        out
    }

    /// Region chain from the country down to the deepest existing prefix
    /// of `tower_path`. Empty when even the country is unknown.
    pub fn resolve_prefix(&self, tower_path: &str) -> Vec<RegionId> {
        let parts: Vec<&str> = tower_path.split('/').collect();
        (1..=parts.len().min(5))
            .map_while(|d| self.lookup(&parts[..d].join("/")))
            .collect()
    }
}

/// Replicas per level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Replication {
    pub country: usize,
    pub state: usize,
    pub county: usize,
    pub city: usize,
    pub cell_tower: usize,
}

impl Default for Replication {
    fn default() -> Self {
        Self {
            country: 3,
            state: 2,
            county: 2,
            city: 1,
            cell_tower: 1,
        }
    }
}

impl Replication {
    pub const NONE: Replication = Replication {
        country: 1,
        state: 1,
        county: 1,
        city: 1,
        cell_tower: 1,
    };

    pub fn for_level(&self, level: PmLevel) -> usize {
        match level {
            PmLevel::Country => self.country,
            PmLevel::State => self.state,
            PmLevel::County => self.county,
            PmLevel::City => self.city,
            PmLevel::CellTower => self.cell_tower,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for level in TOP_DOWN {
            if self.for_level(level) == 0 {
                return Err(invalid(format!("{level} replication must be at least 1")));
            }
        }
        Ok(())
    }

    /// Whether some level has more replicas than the level above it.
    pub fn is_inverted(&self) -> bool {
        TOP_DOWN
            .windows(2)
            .any(|w| self.for_level(w[1]) > self.for_level(w[0]))
    }
}

#[derive(Clone, Debug)]
pub struct PmNode {
    pub id: NodeId,
    pub level: PmLevel,
    pub region: RegionId,
    /// Every replica of every child region.
    pub children: Vec<NodeId>,
    pub(crate) keys: KeyPair,
}

impl PmNode {
    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registration {
    pub home_tower: String,
    pub area_level: AreaLevel,
}

/// A built hierarchy with its provider repositories.
///
/// Replicas of a cell-tower PM share one repository view.
#[derive(Clone, Debug)]
pub struct Overlay {
    tree: RegionTree,
    replication: Replication,
    nodes: Vec<PmNode>,
    replicas: Vec<Vec<NodeId>>,
    repositories: BTreeMap<RegionId, BTreeSet<ProviderId>>,
    registrations: BTreeMap<ProviderId, Registration>,
}

/// Instantiates `replication` PM nodes per region and wires each node to
/// all replicas of its child regions. PM key pairs derive from `key_seed`.
pub fn build_hierarchy(tree: RegionTree, replication: Replication, key_seed: u64) -> Result<Overlay> {
    replication.validate()?;
    if replication.is_inverted() {
        log::warn!("replication grows towards the leaves: {replication:?}");
    }
    let mut nodes = Vec::new();
    let mut replicas = vec![Vec::new(); tree.regions.len()];
    for (i, region) in tree.regions.iter().enumerate() {
        for _ in 0..replication.for_level(region.level) {
            let id = NodeId(nodes.len() as u32);
            nodes.push(PmNode {
                id,
                level: region.level,
                region: RegionId(i),
                children: Vec::new(),
                keys: KeyPair::generate(&mut stream(key_seed, &[u64::from(id.0)])),
            });
            replicas[i].push(id);
        }
    }
    for node in &mut nodes {
        node.children = tree.regions[node.region.0]
            .children
            .iter()
            .flat_map(|c| replicas[c.0].iter().copied())
            .collect();
    }
    let repositories = tree.towers().map(|t| (t, BTreeSet::new())).collect();
    Ok(Overlay {
        tree,
        replication,
        nodes,
        replicas,
        repositories,
        registrations: BTreeMap::new(),
    })
}

impl Overlay {
    pub fn tree(&self) -> &RegionTree {
        &self.tree
    }

    pub fn replication(&self) -> Replication {
        self.replication
    }

    pub fn nodes(&self) -> &[PmNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&PmNode> {
        self.nodes.get(id.0 as usize)
    }

    pub fn replicas(&self, region: RegionId) -> &[NodeId] {
        &self.replicas[region.0]
    }

    /// Region path of a node, with its replica index.
    pub fn node_name(&self, id: NodeId) -> String {
        match self.node(id) {
            Some(n) => {
                let idx = self.replicas[n.region.0].iter().position(|r| *r == id).unwrap_or(0);
                format!("{}#{idx}", self.tree.region(n.region).path)
            }
            None => id.to_string(),
        }
    }

    /// Places `provider` in every cell-tower repository of the `area_level`
    /// region containing `home_tower`. Re-registering moves the provider.
    pub fn register_provider(&mut self, provider: ProviderId, home_tower: &str, area_level: AreaLevel) -> Result<()> {
        let tower = self
            .tree
            .lookup(home_tower)
            .filter(|t| self.tree.region(*t).level == PmLevel::CellTower)
            .ok_or_else(|| invalid(format!("unknown cell tower {home_tower:?}")))?;
        let area = self
            .tree
            .ancestor_at(tower, area_level)
            .ok_or_else(|| Error::Config(format!("no {area_level} region above {home_tower}")))?;
        self.unregister_provider(&provider);
        for t in self.tree.towers_under(area) {
            self.repositories.entry(t).or_default().insert(provider.clone());
        }
        self.registrations.insert(
            provider,
            Registration {
                home_tower: home_tower.to_owned(),
                area_level,
            },
        );
        Ok(())
    }

    pub fn unregister_provider(&mut self, provider: &ProviderId) -> bool {
        if self.registrations.remove(provider).is_none() {
            return false;
        }
        for repo in self.repositories.values_mut() {
            repo.remove(provider);
        }
        true
    }

    pub fn registration(&self, provider: &ProviderId) -> Option<&Registration> {
        self.registrations.get(provider)
    }

    pub fn registrations(&self) -> &BTreeMap<ProviderId, Registration> {
        &self.registrations
    }

    /// Picks one replica per level, uniformly, from the country down to the
    /// deepest existing prefix of `tower_path`. The flag tells whether the
    /// full path resolved to a cell tower.
    pub fn choose_path<R: Rng + ?Sized>(&self, tower_path: &str, rng: &mut R) -> (Vec<NodeId>, bool) {
        let regions = self.tree.resolve_prefix(tower_path);
        let path = regions
            .iter()
            .map(|&r| {
                let reps = &self.replicas[r.0];
                reps[rng.random_range(0..reps.len())]
            })
            .collect();
        (path, regions.len() == TOP_DOWN.len())
    }

    /// Providers reachable from a cell-tower region.
    pub fn repository(&self, tower: RegionId) -> Option<&BTreeSet<ProviderId>> {
        self.repositories.get(&tower)
    }

    /// Number of cell-tower repositories listing `provider`.
    pub fn repository_count(&self, provider: &ProviderId) -> usize {
        self.repositories.values().filter(|r| r.contains(provider)).count()
    }
}

/// TOML topology description.
///
/// ```toml
/// towers = ["us/nj/middlesex/new_brunswick/t1"]
/// [replication]
/// country = 3
/// [[provider]]
/// id = "phone-1"
/// home_tower = "us/nj/middlesex/new_brunswick/t1"
/// area_level = "city"
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub towers: Vec<String>,
    #[serde(default)]
    pub replication: Replication,
    #[serde(default, rename = "provider")]
    pub providers: Vec<ProviderPlacement>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderPlacement {
    pub id: ProviderId,
    pub home_tower: String,
    #[serde(default)]
    pub area_level: AreaLevel,
}

impl TopologyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build(&self, key_seed: u64) -> Result<Overlay> {
        let mut overlay = build_hierarchy(RegionTree::from_tower_paths(&self.towers)?, self.replication, key_seed)?;
        let mut seen = BTreeSet::new();
        for p in &self.providers {
            if !seen.insert(&p.id) {
                return Err(invalid(format!("provider {} placed twice", p.id)));
            }
            overlay.register_provider(p.id.clone(), &p.home_tower, p.area_level)?;
        }
        Ok(overlay)
    }
}
