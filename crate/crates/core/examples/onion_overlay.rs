//! Routes requests through the PM hierarchy and checks what each hop saw.

use collabloc::fusion::UtilityLedger;
use collabloc::overlay::routing::{CtpmConfig, OverlaySim, ProviderDirectory, ProviderQuery};
use collabloc::overlay::trace::TraceRecord;
use collabloc::overlay::{build_hierarchy, verify_trace, CollectPolicy, RegionTree, Replication};
use collabloc::privacy::{ProviderId, RankedLabels};
use collabloc::rng::stream;
use collabloc::{AccessPointReading, AreaLevel, FeatureVector, LocationLabel, WifiScan};

const CAMPUS: &str = "us/nj/middlesex/new_brunswick/campus";
const DOWNTOWN: &str = "us/nj/middlesex/new_brunswick/downtown";

struct Phones;

impl ProviderDirectory for Phones {
    fn respond(&mut self, p: &ProviderId, _: &ProviderQuery<'_>) -> collabloc::Result<Option<RankedLabels>> {
        if p.0 == "stranger" {
            return Ok(None);
        }
        Ok(Some(vec![(LocationLabel::new("hill", "101")?, 0.7), (LocationLabel::new("hill", "102")?, 0.3)]))
    }
}

fn main() -> collabloc::Result<()> {
    let tree = RegionTree::from_tower_paths([CAMPUS, DOWNTOWN])?;
    let mut overlay = build_hierarchy(tree, Replication::default(), 42)?;
    overlay.register_provider("alice".into(), CAMPUS, AreaLevel::City)?;
    overlay.register_provider("bob".into(), DOWNTOWN, AreaLevel::City)?;
    overlay.register_provider("stranger".into(), CAMPUS, AreaLevel::CellTower)?;
    println!("{} PM nodes", overlay.nodes().len());

    let ctpm = CtpmConfig {
        policy: CollectPolicy::new(2),
        utilities: UtilityLedger::fixed(),
        feedback_threshold: 0.5,
    };
    let mut sim = OverlaySim::new(overlay, ctpm, 7);
    sim.set_tracing(true);
    let scan = WifiScan::new(vec![AccessPointReading::of("aa:01", -48.0)?], 0.0)?;
    let features = FeatureVector::default().with_categorical("cell_tower_id", "campus");
    let mut rng = stream(3, &[]);
    let d = sim.route_request("requester-1", &scan, &features, CAMPUS, &mut rng, &mut Phones)?;
    let path: Vec<String> = d.path.iter().map(|n| sim.overlay().node_name(*n)).collect();
    println!("path {}", path.join(" -> "));
    let fused = d.fused().expect("two providers answered");
    println!("{} messages, {} iterations, top {}/{} at {:.2}", d.messages, fused.iterations, fused.labels[0].building, fused.labels[0].room, fused.labels[0].probability);

    let trace = sim.take_trace();
    for r in &trace {
        if let TraceRecord::Hop(h) = r {
            let keys: Vec<&str> = h.observed.keys().map(String::as_str).collect();
            println!("  {:<40} {:?} terminal={} sees {keys:?}", h.node, h.direction, h.terminal);
        }
    }
    let report = verify_trace(&trace);
    println!("privacy check: {} hops, {} violations", report.hops, report.violations.len());
    Ok(())
}
