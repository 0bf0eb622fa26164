//! Builds a small local database and matches a fresh scan against it.

use collabloc::fingerprint::{cosine_similarity, Entry};
use collabloc::{AccessPointReading, FeatureSchema, FeatureVector, LocalDatabase, LocationLabel, WifiScan};

fn scan(aps: &[(&str, f64)]) -> collabloc::Result<WifiScan> {
    let readings = aps
        .iter()
        .map(|(b, r)| AccessPointReading::of(b, *r))
        .collect::<collabloc::Result<Vec<_>>>()?;
    WifiScan::new(readings, 0.0)
}

fn features(sound: f64, tower: &str) -> FeatureVector {
    FeatureVector::default()
        .with_numeric("sound_level", sound)
        .with_numeric("cell_signal_dbm", -71.0)
        .with_categorical("cell_tower_id", tower)
        .with_categorical("lac", "lac-1")
}

fn main() -> collabloc::Result<()> {
    let mut db = LocalDatabase::new(FeatureSchema::standard(), 0.05)?;
    let rooms = [
        ("hill", "101", scan(&[("aa:01", -42.0), ("aa:02", -60.0), ("bb:01", -85.0)])?, 40.0),
        ("hill", "102", scan(&[("aa:01", -58.0), ("aa:02", -45.0)])?, 55.0),
        ("library", "lobby", scan(&[("bb:01", -40.0), ("bb:02", -52.0)])?, 70.0),
    ];
    for (b, r, s, sound) in rooms {
        db.insert_entry(Entry {
            scan: s,
            features: features(sound, "campus"),
            label: LocationLabel::new(b, r)?,
            recorded_at: 0.0,
        })?;
    }

    let query = scan(&[("aa:01", -44.0), ("aa:02", -61.0), ("cc:09", -90.0)])?;
    for (i, s) in db.match_entries(&query)? {
        println!("{:<14} similarity {s:.4}", db.entries()[i].label.to_string());
    }
    let (best, s) = db.best_match(&query)?.expect("query shares an AP");
    println!("best match {} at {s:.4}", db.entries()[best].label);

    // The same AP set with very different powers is still far from a match.
    let flipped = scan(&[("aa:01", -80.0), ("aa:02", -40.0)])?;
    println!("flipped powers against 101: {:.4}", cosine_similarity(&db.entries()[0].scan, &flipped)?);

    println!("new place (same room, quieter)? {}", db.is_new_location(&query, &features(41.0, "campus"))?);
    println!("new place (other tower)? {}", db.is_new_location(&query, &features(40.0, "downtown"))?);
    Ok(())
}
