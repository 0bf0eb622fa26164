//! Accuracy against the number of collaborators on the default world.
//!
//! ```text
//! cargo run --release --example trend_sweep -- [runs]
//! ```

use collabloc::sim::experiment::{run_experiment, ExperimentSpec, Sweep};
use collabloc::sim::WorldConfig;

fn main() -> collabloc::Result<()> {
    let runs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(12);
    let mut spec = ExperimentSpec::new(1, WorldConfig::with_seed(2014));
    spec.runs = runs;
    spec.base.p2 = 0.1;
    spec.sweeps = vec![Sweep {
        name: "n".into(),
        n: Some(vec![1, 3, 5, 7]),
        p1: Some(vec![0, 500]),
        ..Sweep::default()
    }];
    let out = run_experiment(&spec)?;
    println!("{:<10} {:>2} {:>4} {:>16} {:>16} {:>6}", "cell", "n", "p1", "room", "building", "r");
    for c in &out.report.cells {
        println!(
            "{:<10} {:>2} {:>4} {:>8.3} ± {:.3} {:>8.3} ± {:.3} {:>6.2}",
            c.cell_id, c.n, c.p1, c.room_acc, c.room_hw, c.building_acc, c.building_hw, c.r_mean
        );
    }
    Ok(())
}
