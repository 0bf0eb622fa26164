//! Classifies one query with the similarity step, NFM and MLR, and blends
//! them the way a provider does.

use collabloc::classifier::{build_categories, mlr_classify, nfm_classify, two_step_classify, ClassifierKind, StepWeights};
use collabloc::fingerprint::Entry;
use collabloc::{AccessPointReading, FeatureSchema, FeatureVector, LocalDatabase, LocationLabel, WifiScan};

fn main() -> collabloc::Result<()> {
    let p = build_categories(&[1.0, 5.0, 6.0])?;
    println!("categories of (1, 5, 6): {:?}", p.intervals());

    let mut db = LocalDatabase::new(FeatureSchema::new(["sound_level"], ["cell_tower_id"]), 0.05)?;
    let rows = [
        ("101", -45.0, 30.0),
        ("101", -47.0, 33.0),
        ("102", -55.0, 60.0),
        ("103", -70.0, 45.0),
    ];
    for (room, rssi, sound) in rows {
        db.insert_entry(Entry {
            scan: WifiScan::new(vec![AccessPointReading::of("aa:01", rssi)?, AccessPointReading::of("aa:02", -60.0)?], 0.0)?,
            features: FeatureVector::default()
                .with_numeric("sound_level", sound)
                .with_categorical("cell_tower_id", "campus"),
            label: LocationLabel::new("hill", room)?,
            recorded_at: 0.0,
        })?;
    }
    let scan = WifiScan::new(vec![AccessPointReading::of("aa:01", -46.0)?, AccessPointReading::of("aa:02", -61.0)?], 0.0)?;
    let query = FeatureVector::default()
        .with_numeric("sound_level", 31.0)
        .with_categorical("cell_tower_id", "campus");

    let training: Vec<&Entry> = db.entries().iter().collect();
    let show = |name: &str, d: &collabloc::LabelDistribution| {
        let parts: Vec<String> = d.iter().map(|(l, m)| format!("{}={m:.3}", l.room)).collect();
        println!("{name:<9} {}", parts.join("  "));
    };
    show("NFM", &nfm_classify(&training, &query)?);
    show("MLR", &mlr_classify(&training, &query)?);
    for kind in [ClassifierKind::Nfm, ClassifierKind::Mlr] {
        let d = two_step_classify(&db, &scan, &query, StepWeights::default(), kind)?.expect("shares APs");
        show(&format!("two-step/{kind}"), &d);
    }
    Ok(())
}
