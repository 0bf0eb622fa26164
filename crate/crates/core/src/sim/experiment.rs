//! Parameter sweeps over the full pipeline: sensing, overlay routing,
//! provider-side generation, fusion and scoring.
//!
//! Random streams are keyed by run index rather than by cell, so every cell
//! sees the same provider picks, requester scans and noise draws in a given
//! run (common random numbers). Differences between cells are then due to
//! the parameters alone.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierKind, StepWeights};
use crate::error::{invalid, Error, Result};
use crate::fingerprint::{LocalDatabase, LocationLabel};
use crate::fusion::{accept_label, Utility, UtilityLedger, DEFAULT_SMOOTHING};
use crate::overlay::{
    build_hierarchy, CollectPolicy, CtpmConfig, CtpmReply, Overlay, OverlaySim, ProviderDirectory, ProviderQuery,
    RegionTree, Replication, TraceRecord,
};
use crate::privacy::{generate_location_distribution, LabelPool, PrivacyParams, ProviderId, ProviderSettings, RankedLabels};
use crate::rng::{derive_seed, stream};
use crate::sim::devices::{build_fleet, populate_devices, requester_profile, sample_nonempty, DeviceProfile};
use crate::sim::report::{AccuracyReport, RunResult};
use crate::sim::world::{generate_world, World, WorldConfig};

/// Environment variable that overrides the experiment seed.
pub const SEED_ENV: &str = "COLLABLOC_SEED";

const REQUESTER: &str = "requester";

/// How the fusing PM weights provider responses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    /// Every response weighs 1.
    #[default]
    Uniform,
    /// Noisy providers weigh `noisy_weight`, clean ones 1.
    Oracle,
    /// Weights learned from consistency feedback during the run.
    Feedback,
}

impl WeightingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Oracle => "oracle",
            Self::Feedback => "feedback",
        }
    }
}

impl fmt::Display for WeightingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Self::Uniform, Self::Oracle, Self::Feedback]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown weighting mode {s:?}")))
    }
}

/// Parameters of one grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellParams {
    /// Collaborators picked per run; also the CTPM's `l`.
    pub n: usize,
    pub k: usize,
    pub p1: usize,
    pub p2: f64,
    pub weighting: WeightingMode,
    pub classifier: ClassifierKind,
    /// When positive, only this many of the `n` providers use `p2`; the
    /// rest use the spec's `clean_p2`.
    pub n_noisy: usize,
}

impl Default for CellParams {
    fn default() -> Self {
        Self {
            n: 7,
            k: 25,
            p1: 0,
            p2: 0.0,
            weighting: WeightingMode::Uniform,
            classifier: ClassifierKind::Nfm,
            n_noisy: 0,
        }
    }
}

/// Axes swept by one `[[sweep]]` table; unset axes keep the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub name: String,
    pub n: Option<Vec<usize>>,
    pub k: Option<Vec<usize>>,
    pub p1: Option<Vec<usize>>,
    pub p2: Option<Vec<f64>>,
    pub weighting: Option<Vec<WeightingMode>>,
    pub classifier: Option<Vec<ClassifierKind>>,
    pub n_noisy: Option<Vec<usize>>,
}

impl Sweep {
    fn expand(&self, base: CellParams) -> Vec<CellParams> {
        fn axis<T: Copy>(cells: Vec<CellParams>, values: &Option<Vec<T>>, set: impl Fn(&mut CellParams, T)) -> Vec<CellParams> {
            let Some(values) = values else { return cells };
            let set = &set;
            cells
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |&v| {
                        let mut c = c;
                        set(&mut c, v);
                        c
                    })
                })
                .collect::<Vec<_>>()
        }
        let mut cells = vec![base];
        cells = axis(cells, &self.n, |c, v| c.n = v);
        cells = axis(cells, &self.k, |c, v| c.k = v);
        cells = axis(cells, &self.p1, |c, v| c.p1 = v);
        cells = axis(cells, &self.p2, |c, v| c.p2 = v);
        cells = axis(cells, &self.weighting, |c, v| c.weighting = v);
        cells = axis(cells, &self.classifier, |c, v| c.classifier = v);
        cells = axis(cells, &self.n_noisy, |c, v| c.n_noisy = v);
        cells
    }
}

/// A declarative experiment: world, defaults and the axes to sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Fixed set of places queried in every run.
    #[serde(default = "default_test_places")]
    pub test_places: usize,
    /// Requester-side acceptance threshold used for scoring. Zero scores the
    /// fused argmax.
    #[serde(default)]
    pub accept_threshold: f64,
    #[serde(default = "default_noisy_weight")]
    pub noisy_weight: f64,
    /// Noise level of the clean providers in cells with `n_noisy > 0`.
    #[serde(default)]
    pub clean_p2: f64,
    #[serde(default)]
    pub step_weights: StepWeights,
    /// Inline world; alternatively `world_file`.
    #[serde(default)]
    pub world: Option<WorldConfig>,
    /// Path to a world TOML file, relative to the spec file.
    #[serde(default)]
    pub world_file: Option<String>,
    #[serde(default)]
    pub base: CellParams,
    #[serde(default, rename = "sweep")]
    pub sweeps: Vec<Sweep>,
}

fn default_runs() -> usize {
    48
}

fn default_test_places() -> usize {
    15
}

fn default_noisy_weight() -> f64 {
    0.1
}

/// One cell of the expanded grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub id: String,
    pub params: CellParams,
}

impl ExperimentSpec {
    pub fn new(seed: u64, world: WorldConfig) -> Self {
        Self {
            seed,
            runs: default_runs(),
            test_places: default_test_places(),
            accept_threshold: 0.0,
            noisy_weight: default_noisy_weight(),
            clean_p2: 0.0,
            step_weights: StepWeights::default(),
            world: Some(world),
            world_file: None,
            base: CellParams::default(),
            sweeps: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a spec file and resolves `world_file` against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if spec.world.is_none() {
            let file = spec
                .world_file
                .as_ref()
                .ok_or_else(|| Error::Config("spec needs a [world] table or world_file".into()))?;
            let dir = path.parent().unwrap_or(Path::new("."));
            spec.world = Some(WorldConfig::from_toml(&std::fs::read_to_string(dir.join(file))?)?);
        }
        Ok(spec)
    }

    /// Applies [`SEED_ENV`] if set.
    pub fn apply_seed_override(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn world_config(&self) -> Result<&WorldConfig> {
        self.world
            .as_ref()
            .ok_or_else(|| Error::Config("world configuration not resolved".into()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs < 2 {
            return Err(invalid("runs must be at least 2 for confidence intervals"));
        }
        if self.test_places == 0 {
            return Err(invalid("test_places must be positive"));
        }
        if !(0.0..1.0).contains(&self.accept_threshold) {
            return Err(invalid("accept_threshold must lie in [0, 1)"));
        }
        if !(self.noisy_weight > 0.0 && self.noisy_weight <= 1.0) {
            return Err(invalid("noisy_weight must lie in (0, 1]"));
        }
        self.step_weights.validate()?;
        self.world_config()?.validate()
    }

    /// The base cell when no sweep is given, else the union of all sweeps
    /// with duplicates removed (first occurrence keeps its id).
    pub fn cells(&self) -> Vec<Cell> {
        let mut out: Vec<Cell> = Vec::new();
        if self.sweeps.is_empty() {
            out.push(Cell {
                id: "base-000".into(),
                params: self.base,
            });
        }
        for s in &self.sweeps {
            for (i, params) in s.expand(self.base).into_iter().enumerate() {
                if out.iter().all(|c| c.params != params) {
                    out.push(Cell {
                        id: format!("{}-{i:03}", s.name),
                        params,
                    });
                }
            }
        }
        out
    }
}

/// Everything shared by all runs of an experiment.
#[derive(Clone, Debug)]
pub struct Testbed {
    pub world: World,
    pub fleet: Vec<DeviceProfile>,
    pub databases: Vec<LocalDatabase>,
    pub pools: Vec<LabelPool>,
    pub requester: DeviceProfile,
    pub test_places: Vec<usize>,
    template: Overlay,
}

impl Testbed {
    /// Generates the world, the fleet and its databases (from the world
    /// seed) and draws the test places (from `seed`).
    pub fn new(world_config: &WorldConfig, seed: u64, test_places: usize) -> Result<Self> {
        let world = generate_world(world_config)?;
        let fleet = build_fleet(&world, world_config.seed);
        let databases = populate_devices(&world, &fleet, world_config.seed)?;
        let tree = RegionTree::from_tower_paths(world.towers.iter().map(|t| t.path.as_str()))?;
        let template = build_hierarchy(tree, Replication::default(), world_config.seed)?;

        let pools = fleet
            .iter()
            .map(|dev| {
                let t = template
                    .tree()
                    .lookup(&dev.home_tower)
                    .ok_or_else(|| invalid(format!("unknown home tower {}", dev.home_tower)))?;
                let area = template
                    .tree()
                    .ancestor_at(t, dev.privacy.area_level)
                    .ok_or_else(|| invalid("area level above the country"))?;
                let towers: Vec<String> = template
                    .tree()
                    .towers_under(area)
                    .into_iter()
                    .map(|r| template.tree().region(r).path.clone())
                    .collect();
                let labels = world
                    .towers
                    .iter()
                    .zip(&world.public_places)
                    .filter(|(tw, _)| towers.contains(&tw.path))
                    .flat_map(|(_, l)| l.iter().cloned())
                    .collect();
                LabelPool::new(labels)
            })
            .collect::<Result<Vec<_>>>()?;

        let covered: Vec<usize> = (0..world.places.len())
            .filter(|p| fleet.iter().any(|d| d.coverage.contains(p)))
            .collect();
        if covered.is_empty() {
            return Err(Error::Generation("no place is covered by any provider".into()));
        }
        let amount = test_places.min(covered.len());
        let mut test: Vec<usize> = index::sample(&mut stream(seed, &[0x7e57]), covered.len(), amount)
            .into_iter()
            .map(|i| covered[i])
            .collect();
        test.sort_unstable();
        let requester = requester_profile(&world);
        Ok(Self {
            world,
            fleet,
            databases,
            pools,
            requester,
            test_places: test,
            template,
        })
    }

    /// A fresh overlay with `providers` registered.
    pub fn overlay_with(&self, providers: &[usize]) -> Result<Overlay> {
        let mut o = self.template.clone();
        for &i in providers {
            let d = &self.fleet[i];
            o.register_provider(d.id.clone(), &d.home_tower, d.privacy.area_level)?;
        }
        Ok(o)
    }
}

/// Score of one answer against the truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    RoomHit,
    BuildingHit,
    Miss,
    NoAnswer,
}

impl Outcome {
    pub fn is_room_hit(self) -> bool {
        self == Outcome::RoomHit
    }

    /// A room hit is also a building hit.
    pub fn is_building_hit(self) -> bool {
        matches!(self, Outcome::RoomHit | Outcome::BuildingHit)
    }
}

pub fn score(predicted: Option<&LocationLabel>, truth: &LocationLabel) -> Outcome {
    match predicted {
        None => Outcome::NoAnswer,
        Some(p) if p == truth => Outcome::RoomHit,
        Some(p) if p.building == truth.building => Outcome::BuildingHit,
        Some(_) => Outcome::Miss,
    }
}

/// Provider side of one run.
struct FleetDirectory<'a> {
    bed: &'a Testbed,
    index_of: BTreeMap<ProviderId, usize>,
    params: BTreeMap<usize, PrivacyParams>,
    weights: StepWeights,
    classifier: ClassifierKind,
    seed: u64,
    run: usize,
}

impl ProviderDirectory for FleetDirectory<'_> {
    fn respond(&mut self, provider: &ProviderId, query: &ProviderQuery<'_>) -> Result<Option<RankedLabels>> {
        let i = *self
            .index_of
            .get(provider)
            .ok_or_else(|| invalid(format!("unknown provider {provider}")))?;
        let settings = ProviderSettings {
            params: self.params[&i],
            weights: self.weights,
            classifier: self.classifier,
            pool: &self.bed.pools[i],
        };
        let mut rng = stream(self.seed, &[0x9a0f, self.run as u64, query.sequence, i as u64]);
        generate_location_distribution(&self.bed.databases[i], query.scan, query.features, settings, &mut rng)
    }
}

/// Everything produced by [`run_experiment`].
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub cells: Vec<CellStatus>,
    pub results: Vec<RunResult>,
    pub report: AccuracyReport,
    /// Event trace of the first run of each cell, keyed by cell id.
    pub traces: BTreeMap<String, Vec<TraceRecord>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellStatus {
    pub cell: Cell,
    pub skipped: Option<String>,
}

/// Runs one (cell, run) pair.
pub fn run_cell(spec: &ExperimentSpec, bed: &Testbed, cell: &Cell, run: usize, trace: bool) -> Result<(RunResult, Vec<TraceRecord>)> {
    let p = cell.params;
    let providers = bed.fleet.len();
    let mut pick_rng = stream(spec.seed, &[0xc4, run as u64, p.n as u64]);
    let chosen: Vec<usize> = index::sample(&mut pick_rng, providers, p.n).into_vec();
    let noisy: Vec<usize> = if p.n_noisy > 0 {
        chosen.iter().copied().take(p.n_noisy).collect()
    } else {
        chosen.clone()
    };

    let mut params = BTreeMap::new();
    let mut ledger = match p.weighting {
        WeightingMode::Feedback => UtilityLedger::learning(DEFAULT_SMOOTHING)?,
        _ => UtilityLedger::fixed(),
    };
    for &i in &chosen {
        let is_noisy = noisy.contains(&i);
        params.insert(
            i,
            PrivacyParams {
                p1: p.p1,
                p2: if is_noisy { p.p2 } else { spec.clean_p2 },
                k: p.k,
                area_level: bed.fleet[i].privacy.area_level,
            },
        );
        if p.weighting == WeightingMode::Oracle && is_noisy && p.n_noisy > 0 {
            ledger.set(bed.fleet[i].id.clone(), Utility::new(spec.noisy_weight, 1.0)?);
        }
    }

    let overlay = bed.overlay_with(&chosen)?;
    let mut sim = OverlaySim::new(
        overlay,
        CtpmConfig {
            policy: CollectPolicy::new(p.n),
            utilities: ledger,
            feedback_threshold: spec.accept_threshold,
        },
        derive_seed(spec.seed, &[0x0e7, run as u64]),
    );
    sim.set_tracing(trace);
    let mut directory = FleetDirectory {
        bed,
        index_of: bed.fleet.iter().enumerate().map(|(i, d)| (d.id.clone(), i)).collect(),
        params,
        weights: spec.step_weights,
        classifier: p.classifier,
        seed: spec.seed,
        run,
    };

    let (mut room, mut building, mut iterations, mut answered) = (0usize, 0usize, 0usize, 0usize);
    for (q, &place) in bed.test_places.iter().enumerate() {
        let mut rng = stream(spec.seed, &[0x5ca9, run as u64, q as u64]);
        let truth = &bed.world.places[place].label;
        let Some((scan, features)) = sample_nonempty(&bed.world, &bed.requester, place, q as f64, &mut rng)? else {
            continue;
        };
        let tower = &bed.world.tower_of_place(place).path;
        let delivery = sim.route_request(REQUESTER, &scan, &features, tower, &mut rng, &mut directory)?;
        let predicted = match &delivery.outcome {
            Ok(CtpmReply::Fused(f)) => {
                iterations += f.iterations;
                answered += 1;
                accept_label(&f.distribution()?, spec.accept_threshold)
            }
            Ok(CtpmReply::NoInformation { iterations: r, .. }) => {
                iterations += r;
                answered += 1;
                None
            }
            Err(f) => {
                return Err(Error::Routing {
                    at: f.at.clone(),
                    reason: f.reason.clone(),
                })
            }
        };
        let outcome = score(predicted.as_ref(), truth);
        room += usize::from(outcome.is_room_hit());
        building += usize::from(outcome.is_building_hit());
    }
    let queries = bed.test_places.len() as f64;
    Ok((
        RunResult {
            cell_id: cell.id.clone(),
            n: p.n,
            k: p.k,
            p1: p.p1,
            p2: p.p2,
            weighting: p.weighting,
            classifier: p.classifier,
            run,
            room_hit: room as f64 / queries,
            building_hit: building as f64 / queries,
            r_iters: if answered > 0 { iterations as f64 / answered as f64 } else { 0.0 },
        },
        sim.take_trace(),
    ))
}

/// Runs every cell of `spec`. Runs execute in parallel; results are merged
/// in (cell, run) order, so the output is independent of scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let bed = Testbed::new(spec.world_config()?, spec.seed, spec.test_places)?;
    run_experiment_on(spec, &bed)
}

/// [`run_experiment`] on a prepared testbed.
pub fn run_experiment_on(spec: &ExperimentSpec, bed: &Testbed) -> Result<ExperimentOutput> {
    spec.validate()?;
    let cells: Vec<CellStatus> = spec
        .cells()
        .into_iter()
        .map(|cell| {
            let p = cell.params;
            let skipped = if p.n == 0 || p.n > bed.fleet.len() {
                Some(format!("n = {} with {} providers", p.n, bed.fleet.len()))
            } else if p.n_noisy > p.n {
                Some(format!("n_noisy = {} exceeds n = {}", p.n_noisy, p.n))
            } else if p.k == 0 || !(p.p2 >= 0.0 && p.p2.is_finite()) {
                Some("invalid privacy parameters".to_owned())
            } else {
                None
            };
            if let Some(why) = &skipped {
                log::warn!("skipping cell {}: {why}", cell.id);
            }
            CellStatus { cell, skipped }
        })
        .collect();

    let jobs: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.skipped.is_none())
        .flat_map(|(ci, _)| (0..spec.runs).map(move |r| (ci, r)))
        .collect();
    let done: Vec<(RunResult, Vec<TraceRecord>)> = jobs
        .par_iter()
        .map(|&(ci, r)| run_cell(spec, bed, &cells[ci].cell, r, r == 0))
        .collect::<Result<Vec<_>>>()?;

    let mut traces = BTreeMap::new();
    let mut results = Vec::with_capacity(done.len());
    for (res, trace) in done {
        if res.run == 0 {
            traces.insert(res.cell_id.clone(), trace);
        }
        results.push(res);
    }
    let report = AccuracyReport::from_results(&results);
    Ok(ExperimentOutput {
        cells,
        results,
        report,
        traces,
    })
}
