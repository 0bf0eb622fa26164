//! Runs the trend grid on the default world and prints every verdict,
//! optionally overriding a few world knobs.
//!
//! ```text
//! cargo run --release --example calibrate -- [runs] [coverage] [sound_db] [cell_db]
//! ```

use collabloc::sim::experiment::{run_experiment_on, Testbed};
use collabloc::sim::trends::{evaluate_trends, trend_spec, TrendLevels};
use collabloc::sim::WorldConfig;

fn main() -> collabloc::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut world = WorldConfig::with_seed(2014);
    if let Some(&c) = args.get(1) {
        world.fleet.coverage = c;
    }
    if let Some(&s) = args.get(2) {
        world.fleet.sound_noise_db = s;
    }
    if let Some(&c) = args.get(3) {
        world.fleet.cell_noise_db = c;
    }
    let levels = TrendLevels::default();
    let mut spec = trend_spec(20_140_601, world.clone(), levels);
    if let Some(&r) = args.first() {
        spec.runs = r as usize;
    }
    println!(
        "coverage {}, sound {} dB, cell {} dB, detection {:?}, {} APs per building, {} runs",
        world.fleet.coverage,
        world.fleet.sound_noise_db,
        world.fleet.cell_noise_db,
        world.fleet.detection_probability,
        world.aps_per_building,
        spec.runs
    );
    println!("levels: {levels:?}");
    let bed = Testbed::new(&world, spec.seed, spec.test_places)?;
    let out = run_experiment_on(&spec, &bed)?;
    for c in &out.report.cells {
        println!(
            "  {:<16} room {:.3} ± {:.3}  building {:.3} ± {:.3}  r {:.2}",
            c.cell_id, c.room_acc, c.room_hw, c.building_acc, c.building_hw, c.r_mean
        );
    }
    for v in evaluate_trends(&out, levels) {
        println!("{v}");
    }
    Ok(())
}
