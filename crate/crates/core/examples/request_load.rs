//! Daily request load on country-level PMs, by formula and by simulation.

use collabloc::overlay::{build_hierarchy, RegionTree, Replication};
use collabloc::sim::{simulate_weekly_load, theoretical_request_load};

fn main() -> collabloc::Result<()> {
    for n_pmc in [2e4, 5e4, 1e5, 2e5] {
        println!("{n_pmc:>8} country PMs: {:8.2} requests per PM per day", theoretical_request_load(20e6, 15.0, n_pmc)?);
    }
    let tree = RegionTree::from_tower_paths(["us/nj/mx/nb/a", "us/nj/mx/nb/b", "us/ny/kings/bk/c"])?;
    let overlay = build_hierarchy(tree, Replication { country: 4, ..Replication::default() }, 1)?;
    let rep = simulate_weekly_load(overlay, 500, 15, 9)?;
    println!("simulated {} requests, expected {:.2} per PM per day", rep.requests, rep.expected);
    for (pm, daily) in &rep.daily {
        println!("  {pm}: {daily:.2}");
    }
    println!("worst deviation {:.1}%", rep.max_relative_error() * 100.0);
    Ok(())
}
