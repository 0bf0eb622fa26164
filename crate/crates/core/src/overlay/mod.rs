//! The Phone-Master (PM) overlay.
//!
//! PMs form a hierarchy mirroring administrative regions (country, state,
//! county, city, cell tower), each level replicated. Providers register
//! with the cell-tower PMs of their chosen area level; requests travel
//! down the hierarchy sealed in onion layers so that only the final
//! cell-tower PM reads them, and only the requester reads the reply.

pub mod collect;
pub mod onion;
pub mod routing;
pub mod topology;
pub mod trace;

pub use collect::{ctpm_collect, CollectPolicy, Collection};
pub use onion::{KeyPair, PublicKey, ReferenceCodec, SealCodec, UnsealError};
pub use routing::{
    CtpmConfig, CtpmReply, Delivery, LocationRequest, OverlaySim, ProviderDirectory, ProviderQuery, RouteFailure,
};
pub use topology::{build_hierarchy, NodeId, Overlay, PmLevel, PmNode, RegionId, RegionTree, Replication, TopologyConfig};
pub use trace::{verify_trace, PrivacyReport, TraceRecord};
