//! Location fingerprints and the per-device database.
//!
//! A fingerprint is a Wi-Fi scan (access points and their received signal
//! strength) plus a vector of additional sensor features. Scans are compared
//! with cosine similarity over linear power, so RSSI values recorded in dBm
//! are converted to milliwatts first.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Simulation time in seconds.
pub type SimTime = f64;

/// Scans keep at most this many access points (the strongest ones).
pub const MAX_SCAN_APS: usize = 15;

/// Weakest signal a reading may carry.
pub const RSSI_FLOOR_DBM: f64 = -100.0;

/// Default similarity threshold below which a scan denotes a new place.
pub const DEFAULT_SIM_THRESHOLD: f64 = 0.05;

/// Default relative tolerance before two numeric features count as different.
pub const DEFAULT_NUMERIC_TOLERANCE: f64 = 0.10;

/// Opaque access point identifier (a MAC address in practice).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bssid(String);

impl Bssid {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(invalid("bssid must be non-empty"));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Bssid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Converts a dBm reading to linear milliwatts.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccessPointReading {
    bssid: Bssid,
    rssi_dbm: f64,
}

impl AccessPointReading {
    pub fn new(bssid: Bssid, rssi_dbm: f64) -> Result<Self> {
        if !(RSSI_FLOOR_DBM..=0.0).contains(&rssi_dbm) {
            return Err(invalid(format!(
                "rssi {rssi_dbm} dBm for {bssid} outside [-100, 0]"
            )));
        }
        Ok(Self { bssid, rssi_dbm })
    }

    /// Shorthand used heavily by tests and examples.
    pub fn of(bssid: &str, rssi_dbm: f64) -> Result<Self> {
        Self::new(Bssid::new(bssid)?, rssi_dbm)
    }

    pub fn bssid(&self) -> &Bssid {
        &self.bssid
    }

    pub fn rssi_dbm(&self) -> f64 {
        self.rssi_dbm
    }

    pub fn milliwatts(&self) -> f64 {
        dbm_to_mw(self.rssi_dbm)
    }
}

/// The access points observed by one scan.
#[derive(Clone, Debug, PartialEq)]
pub struct WifiScan {
    readings: Vec<AccessPointReading>,
    captured_at: SimTime,
}

impl WifiScan {
    /// Builds a scan from readings with pairwise distinct BSSIDs.
    pub fn new(readings: Vec<AccessPointReading>, captured_at: SimTime) -> Result<Self> {
        if readings.len() > MAX_SCAN_APS {
            return Err(invalid(format!(
                "scan holds {} access points, limit is {MAX_SCAN_APS}",
                readings.len()
            )));
        }
        let mut seen = HashSet::with_capacity(readings.len());
        for r in &readings {
            if !seen.insert(r.bssid.as_str()) {
                return Err(invalid(format!("duplicate bssid {} in scan", r.bssid)));
            }
        }
        Ok(Self {
            readings,
            captured_at,
        })
    }

    /// Keeps the [`MAX_SCAN_APS`] strongest readings, strongest first.
    /// Equal strengths are ordered by BSSID.
    pub fn strongest(mut readings: Vec<AccessPointReading>, captured_at: SimTime) -> Result<Self> {
        readings.sort_by(|a, b| {
            b.rssi_dbm
                .total_cmp(&a.rssi_dbm)
                .then_with(|| a.bssid.cmp(&b.bssid))
        });
        readings.truncate(MAX_SCAN_APS);
        Self::new(readings, captured_at)
    }

    pub fn readings(&self) -> &[AccessPointReading] {
        &self.readings
    }

    pub fn captured_at(&self) -> SimTime {
        self.captured_at
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }

    pub fn contains(&self, bssid: &Bssid) -> bool {
        self.readings.iter().any(|r| &r.bssid == bssid)
    }
}

/// Cosine similarity between two scans over linear power.
///
/// Access points are matched by BSSID; unmatched ones only contribute to the
/// norms. Shared products are summed in BSSID order so the result is exactly
/// symmetric.
pub fn cosine_similarity(a: &WifiScan, b: &WifiScan) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("cosine similarity needs two non-empty scans"));
    }
    let mut shared: Vec<(&Bssid, f64)> = a
        .readings
        .iter()
        .filter_map(|ra| {
            b.readings
                .iter()
                .find(|rb| rb.bssid == ra.bssid)
                .map(|rb| (&ra.bssid, ra.milliwatts() * rb.milliwatts()))
        })
        .collect();
    if shared.is_empty() {
        return Ok(0.0);
    }
    shared.sort_by(|x, y| x.0.cmp(y.0));
    let dot: f64 = shared.iter().map(|(_, p)| p).sum();
    let norm = |s: &WifiScan| {
        s.readings
            .iter()
            .map(|r| r.milliwatts().powi(2))
            .sum::<f64>()
            .sqrt()
    };
    Ok((dot / (norm(a) * norm(b))).clamp(0.0, 1.0))
}

/// Names of the numeric and categorical features every device records.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub numeric: Vec<String>,
    pub categorical: Vec<String>,
}

impl FeatureSchema {
    pub fn new<N, C>(numeric: N, categorical: C) -> Self
    where
        N: IntoIterator,
        N::Item: Into<String>,
        C: IntoIterator,
        C::Item: Into<String>,
    {
        let mut numeric: Vec<String> = numeric.into_iter().map(Into::into).collect();
        let mut categorical: Vec<String> = categorical.into_iter().map(Into::into).collect();
        numeric.sort();
        categorical.sort();
        Self {
            numeric,
            categorical,
        }
    }

    /// sound level (amplitude counts), cell signal (dBm), cell tower id, LAC.
    pub fn standard() -> Self {
        Self::new(["cell_signal_dbm", "sound_level"], ["cell_tower_id", "lac"])
    }

    pub fn len(&self) -> usize {
        self.numeric.len() + self.categorical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Additional (non Wi-Fi) location features.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub numeric: BTreeMap<String, f64>,
    pub categorical: BTreeMap<String, String>,
}

impl FeatureVector {
    pub fn with_numeric(mut self, name: &str, value: f64) -> Self {
        self.numeric.insert(name.to_owned(), value);
        self
    }

    pub fn with_categorical(mut self, name: &str, value: &str) -> Self {
        self.categorical.insert(name.to_owned(), value.to_owned());
        self
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema {
            numeric: self.numeric.keys().cloned().collect(),
            categorical: self.categorical.keys().cloned().collect(),
        }
    }

    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        let own = self.schema();
        if &own != schema {
            return Err(invalid(format!(
                "feature schema mismatch: expected {schema:?}, got {own:?}"
            )));
        }
        if let Some((name, v)) = self.numeric.iter().find(|(_, v)| !v.is_finite()) {
            return Err(invalid(format!("numeric feature {name} is not finite ({v})")));
        }
        Ok(())
    }

    /// True if any feature differs from `other` (categorical: inequality,
    /// numeric: relative difference above `tolerance`).
    pub fn differs_from(&self, other: &FeatureVector, tolerance: f64) -> bool {
        let categorical = self
            .categorical
            .iter()
            .any(|(k, v)| other.categorical.get(k) != Some(v));
        let numeric = self.numeric.iter().any(|(k, &x)| match other.numeric.get(k) {
            Some(&y) => relative_difference(x, y) > tolerance,
            None => true,
        });
        categorical || numeric
    }
}

/// `|x - y| / max(|x|, |y|)`, zero when both are zero.
pub fn relative_difference(x: f64, y: f64) -> f64 {
    let scale = x.abs().max(y.abs());
    if scale == 0.0 {
        0.0
    } else {
        (x - y).abs() / scale
    }
}

/// A publicly known place name.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocationLabel {
    pub building: String,
    pub room: String,
}

impl LocationLabel {
    pub fn new(building: impl Into<String>, room: impl Into<String>) -> Result<Self> {
        let (building, room) = (building.into(), room.into());
        if building.is_empty() || room.is_empty() {
            return Err(invalid("location label needs a building and a room"));
        }
        Ok(Self { building, room })
    }
}

impl fmt::Display for LocationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.building, self.room)
    }
}

/// One database row: a fingerprint and its label.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub scan: WifiScan,
    pub features: FeatureVector,
    pub label: LocationLabel,
    pub recorded_at: SimTime,
}

/// A device's local knowledge store.
#[derive(Clone, Debug)]
pub struct LocalDatabase {
    schema: FeatureSchema,
    entries: Vec<Entry>,
    sim_threshold: f64,
    numeric_tolerance: f64,
}

impl LocalDatabase {
    pub fn new(schema: FeatureSchema, sim_threshold: f64) -> Result<Self> {
        if !(sim_threshold > 0.0 && sim_threshold < 1.0) {
            return Err(invalid(format!(
                "similarity threshold {sim_threshold} outside (0, 1)"
            )));
        }
        Ok(Self {
            schema,
            entries: Vec::new(),
            sim_threshold,
            numeric_tolerance: DEFAULT_NUMERIC_TOLERANCE,
        })
    }

    pub fn with_numeric_tolerance(mut self, tolerance: f64) -> Result<Self> {
        if !(tolerance >= 0.0 && tolerance.is_finite()) {
            return Err(invalid(format!("numeric tolerance {tolerance} must be >= 0")));
        }
        self.numeric_tolerance = tolerance;
        Ok(self)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sim_threshold(&self) -> f64 {
        self.sim_threshold
    }

    pub fn numeric_tolerance(&self) -> f64 {
        self.numeric_tolerance
    }

    /// Distinct labels in the database, sorted.
    pub fn labels(&self) -> Vec<LocationLabel> {
        let mut labels: Vec<LocationLabel> = self.entries.iter().map(|e| e.label.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    /// Indices (ascending) of entries sharing at least one AP with `scan`,
    /// paired with their similarity.
    pub fn match_entries(&self, scan: &WifiScan) -> Result<Vec<(usize, f64)>> {
        if scan.is_empty() {
            return Err(invalid("cannot match an empty scan"));
        }
        let mut out = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.scan.is_empty() {
                continue;
            }
            let s = cosine_similarity(&e.scan, scan)?;
            if s > 0.0 {
                out.push((i, s));
            }
        }
        Ok(out)
    }

    /// The most similar entry; the lowest index wins ties.
    pub fn best_match(&self, scan: &WifiScan) -> Result<Option<(usize, f64)>> {
        Ok(self
            .match_entries(scan)?
            .into_iter()
            .fold(None, |best, (i, s)| match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((i, s)),
            }))
    }

    /// Whether the fingerprint denotes a place the database does not know.
    ///
    /// New when the best similarity is below the threshold, or when it is at
    /// or above the threshold but some feature of the best-matching entry
    /// differs.
    pub fn is_new_location(&self, scan: &WifiScan, features: &FeatureVector) -> Result<bool> {
        features.check_schema(&self.schema)?;
        match self.best_match(scan)? {
            None => Ok(true),
            Some((_, sim)) if sim < self.sim_threshold => Ok(true),
            Some((i, _)) => Ok(features.differs_from(&self.entries[i].features, self.numeric_tolerance)),
        }
    }

    /// Appends an entry. Deduplication is the caller's job.
    pub fn insert_entry(&mut self, entry: Entry) -> Result<()> {
        entry.features.check_schema(&self.schema)?;
        self.entries.push(entry);
        Ok(())
    }

    /// Writes one JSON object per entry.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, &EntryRecord::from(e))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads entries written by [`LocalDatabase::write_jsonl`]. Blank lines
    /// are skipped.
    pub fn read_jsonl<R: BufRead>(input: R, schema: FeatureSchema, sim_threshold: f64) -> Result<Self> {
        let mut db = Self::new(schema, sim_threshold)?;
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: EntryRecord = serde_json::from_str(&line)?;
            let entry = Entry::try_from(record)
                .map_err(|e| invalid(format!("line {}: {e}", n + 1)))?;
            db.insert_entry(entry)?;
        }
        Ok(db)
    }
}

/// Wire form of an [`Entry`] in database files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryRecord {
    pub aps: Vec<ApRecord>,
    pub captured_at: SimTime,
    pub numeric: BTreeMap<String, f64>,
    pub categorical: BTreeMap<String, String>,
    pub building: String,
    pub room: String,
    pub recorded_at: SimTime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApRecord {
    pub bssid: String,
    pub rssi_dbm: f64,
}

impl WifiScan {
    /// Wire form of the readings.
    pub fn to_records(&self) -> Vec<ApRecord> {
        self.readings
            .iter()
            .map(|r| ApRecord {
                bssid: r.bssid.0.clone(),
                rssi_dbm: r.rssi_dbm,
            })
            .collect()
    }

    pub fn from_records(aps: Vec<ApRecord>, captured_at: SimTime) -> Result<Self> {
        let readings = aps
            .into_iter()
            .map(|ap| AccessPointReading::new(Bssid::new(ap.bssid)?, ap.rssi_dbm))
            .collect::<Result<Vec<_>>>()?;
        WifiScan::new(readings, captured_at)
    }
}

impl From<&Entry> for EntryRecord {
    fn from(e: &Entry) -> Self {
        Self {
            aps: e.scan.to_records(),
            captured_at: e.scan.captured_at,
            numeric: e.features.numeric.clone(),
            categorical: e.features.categorical.clone(),
            building: e.label.building.clone(),
            room: e.label.room.clone(),
            recorded_at: e.recorded_at,
        }
    }
}

impl TryFrom<EntryRecord> for Entry {
    type Error = Error;

    fn try_from(r: EntryRecord) -> Result<Self> {
        Ok(Entry {
            scan: WifiScan::from_records(r.aps, r.captured_at)?,
            features: FeatureVector {
                numeric: r.numeric,
                categorical: r.categorical,
            },
            label: LocationLabel::new(r.building, r.room)?,
            recorded_at: r.recorded_at,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan(aps: &[(&str, f64)]) -> WifiScan {
        WifiScan::new(
            aps.iter()
                .map(|(b, r)| AccessPointReading::of(b, *r).unwrap())
                .collect(),
            0.0,
        )
        .unwrap()
    }

    fn features(tower: &str, sound: f64) -> FeatureVector {
        FeatureVector::default()
            .with_numeric("sound_level", sound)
            .with_numeric("cell_signal_dbm", -80.0)
            .with_categorical("cell_tower_id", tower)
            .with_categorical("lac", "L1")
    }

    fn entry(aps: &[(&str, f64)], f: FeatureVector, room: &str) -> Entry {
        Entry {
            scan: scan(aps),
            features: f,
            label: LocationLabel::new("B", room).unwrap(),
            recorded_at: 0.0,
        }
    }

    fn db() -> LocalDatabase {
        LocalDatabase::new(FeatureSchema::standard(), DEFAULT_SIM_THRESHOLD).unwrap()
    }

    // Cosine evaluated term by term over the full (i, j) grid of readings.
    fn cosine_oracle(a: &[(&str, f64)], b: &[(&str, f64)]) -> f64 {
        let mw = |d: f64| 10f64.powf(d / 10.0);
        let mut num = 0.0;
        for (ba, ra) in a {
            for (bb, rb) in b {
                if ba == bb {
                    num += mw(*ra) * mw(*rb);
                }
            }
        }
        let na: f64 = a.iter().map(|(_, r)| mw(*r) * mw(*r)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|(_, r)| mw(*r) * mw(*r)).sum::<f64>().sqrt();
        num / (na * nb)
    }

    #[test]
    fn self_similarity_is_one() {
        let s = scan(&[("X", -40.0), ("Y", -70.0), ("Z", -55.5)]);
        assert!((cosine_similarity(&s, &s).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_scans_are_zero() {
        let a = scan(&[("X", -40.0)]);
        let b = scan(&[("Y", -40.0)]);
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn golden_two_ap_case() {
        let a = [("X", -40.0), ("Y", -70.0)];
        let b = [("X", -50.0), ("Z", -60.0)];
        // X: 1e-4 mW vs 1e-5 mW; Y: 1e-7 mW; Z: 1e-6 mW
        let expected = 1e-9 / ((1e-8f64 + 1e-14).sqrt() * (1e-10f64 + 1e-12).sqrt());
        let oracle = cosine_oracle(&a, &b);
        assert!((oracle - expected).abs() < 1e-12);
        assert!((oracle - 0.995_036_692_691_767_1).abs() < 1e-12);
        let got = cosine_similarity(&scan(&a), &scan(&b)).unwrap();
        assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    }

    #[test]
    fn empty_scan_is_rejected() {
        let empty = WifiScan::new(vec![], 0.0).unwrap();
        let a = scan(&[("X", -40.0)]);
        assert!(matches!(
            cosine_similarity(&empty, &a),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn reading_and_scan_invariants() {
        assert!(AccessPointReading::of("X", 5.0).is_err());
        assert!(AccessPointReading::of("X", -100.5).is_err());
        assert!(AccessPointReading::of("", -50.0).is_err());
        let dup = vec![
            AccessPointReading::of("X", -40.0).unwrap(),
            AccessPointReading::of("X", -50.0).unwrap(),
        ];
        assert!(WifiScan::new(dup, 0.0).is_err());
        let many: Vec<_> = (0..20)
            .map(|i| AccessPointReading::of(&format!("ap{i:02}"), -30.0 - i as f64).unwrap())
            .collect();
        assert!(WifiScan::new(many.clone(), 0.0).is_err());
        let kept = WifiScan::strongest(many, 0.0).unwrap();
        assert_eq!(kept.len(), MAX_SCAN_APS);
        assert_eq!(kept.readings()[0].bssid().as_str(), "ap00");
        assert_eq!(kept.readings()[14].bssid().as_str(), "ap14");
    }

    #[test]
    fn match_entries_edge_cases() {
        let mut d = db();
        let q = scan(&[("X", -40.0)]);
        assert!(d.match_entries(&q).unwrap().is_empty());
        for room in ["r1", "r2", "r3"] {
            d.insert_entry(entry(&[("X", -50.0), ("Q", -60.0)], features("T", 10.0), room))
                .unwrap();
        }
        assert_eq!(d.match_entries(&q).unwrap().len(), 3);
        d.insert_entry(entry(&[("Q", -60.0)], features("T", 10.0), "r4")).unwrap();
        let idx: Vec<usize> = d.match_entries(&q).unwrap().iter().map(|m| m.0).collect();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    #[test]
    fn new_location_rules() {
        let mut d = db();
        let s = scan(&[("X", -40.0), ("Y", -60.0)]);
        assert!(d.is_new_location(&s, &features("T1", 100.0)).unwrap());
        d.insert_entry(Entry {
            scan: s.clone(),
            features: features("T1", 100.0),
            label: LocationLabel::new("B", "r").unwrap(),
            recorded_at: 0.0,
        })
        .unwrap();
        assert!(!d.is_new_location(&s, &features("T1", 100.0)).unwrap());
        // within the 10% numeric tolerance
        assert!(!d.is_new_location(&s, &features("T1", 105.0)).unwrap());
        assert!(d.is_new_location(&s, &features("T1", 125.0)).unwrap());

        // Similarity 0.5 exactly: equal-power X shared, then an extra AP of
        // the same power on each side. cos = 1 / (sqrt(2) sqrt(2)) = 0.5.
        let a = scan(&[("X", -50.0), ("Y", -50.0)]);
        let b = scan(&[("X", -50.0), ("Z", -50.0)]);
        assert!((cosine_similarity(&a, &b).unwrap() - 0.5).abs() < 1e-12);
        let mut d2 = db();
        d2.insert_entry(Entry {
            scan: a,
            features: features("T1", 100.0),
            label: LocationLabel::new("B", "r").unwrap(),
            recorded_at: 0.0,
        })
        .unwrap();
        assert!(!d2.is_new_location(&b, &features("T1", 100.0)).unwrap());
        assert!(d2.is_new_location(&b, &features("T2", 100.0)).unwrap());

        let bad = FeatureVector::default().with_numeric("sound_level", 1.0);
        assert!(d2.is_new_location(&b, &bad).is_err());
    }

    #[test]
    fn below_threshold_is_new_even_with_equal_features() {
        let mut d = db();
        d.insert_entry(entry(&[("X", -90.0), ("Y", -30.0)], features("T", 1.0), "r"))
            .unwrap();
        let q = scan(&[("X", -30.0), ("Z", -30.0)]);
        let sim = cosine_similarity(&d.entries()[0].scan, &q).unwrap();
        assert!(sim > 0.0 && sim < DEFAULT_SIM_THRESHOLD);
        assert!(d.is_new_location(&q, &features("T", 1.0)).unwrap());
    }

    #[test]
    fn insert_appends() {
        let mut d = db();
        let e = entry(&[("X", -40.0)], features("T", 1.0), "r");
        d.insert_entry(e.clone()).unwrap();
        assert_eq!(d.len(), 1);
        d.insert_entry(e.clone()).unwrap();
        assert_eq!(d.len(), 2);
        for i in 0..48 {
            d.insert_entry(entry(&[("X", -40.0)], features("T", 1.0), &format!("r{i}")))
                .unwrap();
        }
        assert_eq!(d.len(), 50);
        assert_eq!(d.entries()[0], e);
        let mut wrong = e;
        wrong.features = FeatureVector::default();
        assert!(d.insert_entry(wrong).is_err());
    }

    #[test]
    fn threshold_bounds() {
        assert!(LocalDatabase::new(FeatureSchema::standard(), 0.0).is_err());
        assert!(LocalDatabase::new(FeatureSchema::standard(), 1.0).is_err());
    }

    #[test]
    fn jsonl_rejects_bad_rows() {
        let line = r#"{"aps":[{"bssid":"X","rssi_dbm":3.0}],"captured_at":0,"numeric":{},"categorical":{},"building":"B","room":"r","recorded_at":0}"#;
        let err = LocalDatabase::read_jsonl(line.as_bytes(), FeatureSchema::default(), 0.05);
        assert!(err.is_err());
    }
}
