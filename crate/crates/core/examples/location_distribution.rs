//! A provider's answer under increasing privacy settings.

use collabloc::classifier::{ClassifierKind, StepWeights};
use collabloc::privacy::{generate_location_distribution, ProviderSettings};
use collabloc::rng::stream;
use collabloc::sim::devices::sample_nonempty;
use collabloc::sim::experiment::Testbed;
use collabloc::sim::WorldConfig;
use collabloc::{AreaLevel, PrivacyParams};

fn main() -> collabloc::Result<()> {
    let bed = Testbed::new(&WorldConfig::with_seed(2014), 1, 10)?;
    let place = bed.fleet[0].coverage[0];
    let truth = &bed.world.places[place].label;
    let (scan, features) = sample_nonempty(&bed.world, &bed.requester, place, 0.0, &mut stream(1, &[]))?.expect("audible place");
    println!("true place {truth}; provider knows {} entries", bed.databases[0].len());
    for (p1, p2, k) in [(0, 0.0, 5), (100, 0.0, 5), (100, 0.1, 5), (500, 0.4, 5)] {
        let settings = ProviderSettings {
            params: PrivacyParams { p1, p2, k, area_level: AreaLevel::City },
            weights: StepWeights::default(),
            classifier: ClassifierKind::Nfm,
            pool: &bed.pools[0],
        };
        let ranked = generate_location_distribution(&bed.databases[0], &scan, &features, settings, &mut stream(2, &[]))?
            .expect("provider knows the area");
        let shown: Vec<String> = ranked.iter().map(|(l, m)| format!("{l}={m:.3}")).collect();
        println!("p1={p1:<3} p2={p2:.1}: {}", shown.join("  "));
    }
    Ok(())
}
