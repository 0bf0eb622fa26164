//! Collaborative, privacy-preserving room-level localization.
//!
//! The crate is organised around the life of a location request:
//!
//! - [`fingerprint`]: Wi-Fi scans, additional sensor features, the cosine
//!   similarity between scans (computed on linear milliwatts) and each
//!   device's local database with new-location detection.
//! - [`classifier`]: the number-of-feature-matches (NFM) classifier, the
//!   similarity distribution, the two-step combination of both, and a
//!   multinomial logistic regression baseline.
//! - [`privacy`]: the provider-side location distribution generation
//!   pipeline (classify, add decoy labels, Gaussian perturbation, top-k).
//! - [`fusion`]: utility-weighted averaging of provider responses, label
//!   acceptance and utility bookkeeping.
//! - [`overlay`]: a discrete-event simulation of the Phone-Master (PM)
//!   hierarchy with area-level provider registration, onion-sealed
//!   request/response routing and the cell-tower PM collection loop.
//! - [`sim`]: synthetic worlds, device sensing models, experiment sweeps,
//!   accuracy reports and the request-load model.
//!
//! Runnable walkthroughs of each part live in `crates/core/examples/`.

pub mod classifier;
pub mod error;
pub mod fingerprint;
pub mod fusion;
pub mod overlay;
pub mod privacy;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use fingerprint::{
    AccessPointReading, Bssid, Entry, FeatureSchema, FeatureVector, LocalDatabase, LocationLabel,
    WifiScan,
};
pub use classifier::LabelDistribution;
pub use privacy::{AreaLevel, LabelPool, PrivacyParams};
