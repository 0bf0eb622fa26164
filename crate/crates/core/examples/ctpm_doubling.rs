//! Iterations of the collection loop against repository size and the
//! number of collaborators wanted.

use collabloc::overlay::collect::{exhaustive_iterations, expected_iterations};
use collabloc::overlay::CollectPolicy;
use collabloc::rng::stream;

fn main() {
    println!("all-NA repositories, j0 = 1:");
    for m in [1, 2, 3, 100, 500, 1000, 5000] {
        println!("  m = {m:>4}: r = {}", exhaustive_iterations(m, 1));
    }
    let q = 0.05;
    println!("mean r when each provider knows the place with probability {q}:");
    for m in [500, 1000, 5000] {
        let row: Vec<String> = (2..=10)
            .map(|l| format!("{:.2}", expected_iterations(m, CollectPolicy::new(l), q, 1000, &mut stream(1, &[m as u64, l as u64]))))
            .collect();
        println!("  m = {m:>4}, l = 2..10: {}", row.join(" "));
    }
}
