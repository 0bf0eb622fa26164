//! Discrete-event simulation of request routing through the PM hierarchy.
//!
//! A requester picks one replica per level from the country down to the
//! target cell tower, seals the request in one layer per hop and hands it
//! to the country PM. Each PM removes its layer and forwards the rest. The
//! cell-tower PM collects provider responses, fuses them and seals the
//! result to the requester's per-request key; the reply retraces the path.
//!
//! Every link has the same latency and ties are broken by send order, so
//! delivery on a link is FIFO. One message arrival is one event.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::collect::{ctpm_collect, CollectPolicy};
use super::onion::{seal_onion, unseal_layer, KeyPair, Layer, PublicKey, ReferenceCodec, SealCodec, Terminal};
use super::topology::{NodeId, Overlay, PmLevel};
use super::trace::{Direction, HopRecord, RequestRecord, TraceRecord};
use crate::error::{Error, Result};
use crate::fingerprint::{ApRecord, FeatureVector, SimTime, WifiScan};
use crate::fusion::{accept_label, weighted_average_fusion, FusedResult, ProviderResponse, UtilityLedger};
use crate::privacy::{ProviderId, RankedLabels};
use crate::rng::{stream, SimRng};

/// Innermost payload, readable only by the cell-tower PM.
///
/// Carries no requester identity; `reply_key` is fresh per request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationRequest {
    pub aps: Vec<ApRecord>,
    pub captured_at: SimTime,
    pub features: FeatureVector,
    pub reply_key: PublicKey,
}

/// What the cell-tower PM seals back to the requester.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "body", rename_all = "snake_case")]
pub enum CtpmReply {
    Fused(FusedResult),
    NoInformation { iterations: usize, contacted: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RouteFailure {
    pub at: String,
    pub reason: String,
}

/// A provider's view of one request.
#[derive(Clone, Copy, Debug)]
pub struct ProviderQuery<'a> {
    pub scan: &'a WifiScan,
    pub features: &'a FeatureVector,
    /// Simulator-wide request sequence number, for deterministic RNG streams.
    pub sequence: u64,
}

/// How cell-tower PMs reach providers.
pub trait ProviderDirectory {
    /// `Ok(None)` is an NA answer.
    fn respond(&mut self, provider: &ProviderId, query: &ProviderQuery<'_>) -> Result<Option<RankedLabels>>;
}

/// A completed request as seen by its requester.
#[derive(Clone, Debug)]
pub struct Delivery {
    pub request: u64,
    pub requester: String,
    pub path: Vec<NodeId>,
    pub outcome: std::result::Result<CtpmReply, RouteFailure>,
    /// Message arrivals on the way out and back.
    pub messages: usize,
    pub latency: u64,
}

impl Delivery {
    pub fn fused(&self) -> Option<&FusedResult> {
        match &self.outcome {
            Ok(CtpmReply::Fused(f)) => Some(f),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Endpoint {
    Requester(String),
    Node(NodeId),
}

#[derive(Debug)]
enum Body {
    Forward(Vec<u8>),
    Backward(std::result::Result<Vec<u8>, RouteFailure>),
}

#[derive(Debug)]
struct Message {
    from: Endpoint,
    to: Endpoint,
    circuit: u64,
    body: Body,
    /// Bookkeeping only; never shown to nodes.
    request: u64,
}

struct Pending {
    keys: KeyPair,
    requester: String,
    tower: String,
    path: Vec<NodeId>,
    sent_at: u64,
    messages: usize,
}

/// CTPM-side settings.
#[derive(Clone, Debug)]
pub struct CtpmConfig {
    pub policy: CollectPolicy,
    pub utilities: UtilityLedger,
    /// Threshold used to decide which label feedback refers to.
    pub feedback_threshold: f64,
}

/// Event-driven overlay simulator.
pub struct OverlaySim {
    overlay: Overlay,
    codec: Box<dyn SealCodec>,
    ctpm: CtpmConfig,
    seed: u64,
    rng: SimRng,
    hop_latency: u64,
    now: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<(u64, u64)>>,
    messages: HashMap<u64, Message>,
    /// `(node, outgoing circuit) -> (previous endpoint, incoming circuit)`.
    circuits: HashMap<(NodeId, u64), (Endpoint, u64)>,
    pending: HashMap<u64, Pending>,
    next_request: u64,
    tracing: bool,
    trace: Vec<TraceRecord>,
    arrivals: BTreeMap<NodeId, u64>,
}

impl OverlaySim {
    pub fn new(overlay: Overlay, ctpm: CtpmConfig, seed: u64) -> Self {
        Self {
            overlay,
            codec: Box::new(ReferenceCodec),
            ctpm,
            seed,
            rng: stream(seed, &[0x5eed]),
            hop_latency: 1,
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            messages: HashMap::new(),
            circuits: HashMap::new(),
            pending: HashMap::new(),
            next_request: 0,
            tracing: false,
            trace: Vec::new(),
            arrivals: BTreeMap::new(),
        }
    }

    pub fn with_codec(mut self, codec: Box<dyn SealCodec>) -> Self {
        self.codec = codec;
        self
    }

    pub fn set_tracing(&mut self, on: bool) {
        self.tracing = on;
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.trace)
    }

    /// Forward-direction message arrivals per PM since construction.
    pub fn forward_arrivals(&self) -> &BTreeMap<NodeId, u64> {
        &self.arrivals
    }

    pub fn overlay(&self) -> &Overlay {
        &self.overlay
    }

    pub fn overlay_mut(&mut self) -> &mut Overlay {
        &mut self.overlay
    }

    pub fn utilities(&self) -> &UtilityLedger {
        &self.ctpm.utilities
    }

    pub fn utilities_mut(&mut self) -> &mut UtilityLedger {
        &mut self.ctpm.utilities
    }

    /// Seals and queues a request. Fails locally when even the country of
    /// `tower` is unknown.
    pub fn submit<R: Rng + ?Sized>(
        &mut self,
        requester: &str,
        scan: &WifiScan,
        features: &FeatureVector,
        tower: &str,
        rng: &mut R,
    ) -> Result<u64> {
        let (path, resolved) = self.overlay.choose_path(tower, rng);
        if path.is_empty() {
            return Err(Error::Routing {
                at: requester.to_owned(),
                reason: format!("no country PM for {tower:?}"),
            });
        }
        let keys = KeyPair::generate(rng);
        let route: Vec<(NodeId, PublicKey)> = path
            .iter()
            .map(|&n| (n, self.overlay.node(n).expect("path node exists").keys().public))
            .collect();
        let terminal = if resolved {
            let req = LocationRequest {
                aps: scan.to_records(),
                captured_at: scan.captured_at(),
                features: features.clone(),
                reply_key: keys.public,
            };
            Terminal::Deliver(serde_json::to_vec(&req)?)
        } else {
            Terminal::Unresolved(tower.to_owned())
        };
        let envelope = seal_onion(self.codec.as_ref(), &route, terminal);
        let request = self.next_request;
        self.next_request += 1;
        let circuit = self.rng.random();
        self.pending.insert(
            request,
            Pending {
                keys,
                requester: requester.to_owned(),
                tower: tower.to_owned(),
                path: path.clone(),
                sent_at: self.now,
                messages: 0,
            },
        );
        self.send(Message {
            from: Endpoint::Requester(requester.to_owned()),
            to: Endpoint::Node(path[0]),
            circuit,
            body: Body::Forward(envelope),
            request,
        });
        Ok(request)
    }

    /// Processes events until the queue drains; returns finished requests
    /// in completion order.
    pub fn run(&mut self, directory: &mut dyn ProviderDirectory) -> Vec<Delivery> {
        let mut done = Vec::new();
        while let Some(Reverse((time, seq))) = self.queue.pop() {
            self.now = time;
            let msg = self.messages.remove(&seq).expect("queued message exists");
            if let Some(p) = self.pending.get_mut(&msg.request) {
                p.messages += 1;
            }
            match msg.to.clone() {
                Endpoint::Node(n) => {
                    if matches!(msg.body, Body::Forward(_)) {
                        *self.arrivals.entry(n).or_default() += 1;
                    }
                    self.handle_at_node(n, msg, directory)
                }
                Endpoint::Requester(_) => {
                    if let Some(d) = self.handle_at_requester(msg) {
                        done.push(d);
                    }
                }
            }
        }
        done
    }

    /// Submits one request and runs it to completion.
    pub fn route_request<R: Rng + ?Sized>(
        &mut self,
        requester: &str,
        scan: &WifiScan,
        features: &FeatureVector,
        tower: &str,
        rng: &mut R,
        directory: &mut dyn ProviderDirectory,
    ) -> Result<Delivery> {
        let id = self.submit(requester, scan, features, tower, rng)?;
        self.run(directory)
            .into_iter()
            .find(|d| d.request == id)
            .ok_or_else(|| Error::Routing {
                at: requester.to_owned(),
                reason: "request never completed".into(),
            })
    }

    fn send(&mut self, msg: Message) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse((self.now + self.hop_latency, seq)));
        self.messages.insert(seq, msg);
    }

    fn name(&self, e: &Endpoint) -> String {
        match e {
            Endpoint::Requester(r) => r.clone(),
            Endpoint::Node(n) => self.overlay.node_name(*n),
        }
    }

    fn record(&mut self, request: u64, node: NodeId, direction: Direction, terminal: bool, observed: Vec<(&str, String)>) {
        if !self.tracing {
            return;
        }
        let level = self.overlay.node(node).map_or(PmLevel::CellTower, |n| n.level);
        self.trace.push(TraceRecord::Hop(HopRecord {
            request,
            time: self.now,
            node: self.overlay.node_name(node),
            level,
            direction,
            terminal,
            observed: observed.into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
        }));
    }

    fn fail_back(&mut self, node: NodeId, msg: &Message, reason: String) {
        let failure = RouteFailure {
            at: self.overlay.node_name(node),
            reason,
        };
        self.record(
            msg.request,
            node,
            Direction::Forward,
            false,
            vec![
                ("from", self.name(&msg.from)),
                ("circuit_in", msg.circuit.to_string()),
                ("error", failure.reason.clone()),
            ],
        );
        self.send(Message {
            from: Endpoint::Node(node),
            to: msg.from.clone(),
            circuit: msg.circuit,
            body: Body::Backward(Err(failure)),
            request: msg.request,
        });
    }

    fn handle_at_node(&mut self, node: NodeId, msg: Message, directory: &mut dyn ProviderDirectory) {
        match &msg.body {
            Body::Forward(envelope) => {
                let keys = self.overlay.node(node).expect("node exists").keys().clone();
                match unseal_layer(self.codec.as_ref(), &keys, envelope) {
                    Err(e) => self.fail_back(node, &msg, format!("unseal: {e}")),
                    Ok(Layer::Unresolved { target }) => {
                        self.fail_back(node, &msg, format!("no route below this PM towards {target}"))
                    }
                    Ok(Layer::Forward { next, inner }) => {
                        let is_child = self.overlay.node(node).is_some_and(|n| n.children.contains(&next));
                        if !is_child {
                            self.fail_back(node, &msg, format!("{next} is not a child"));
                            return;
                        }
                        let out: u64 = self.rng.random();
                        self.circuits.insert((node, out), (msg.from.clone(), msg.circuit));
                        self.record(
                            msg.request,
                            node,
                            Direction::Forward,
                            false,
                            vec![
                                ("from", self.name(&msg.from)),
                                ("circuit_in", msg.circuit.to_string()),
                                ("next_hop", self.overlay.node_name(next)),
                                ("circuit_out", out.to_string()),
                                ("envelope_bytes", envelope.len().to_string()),
                                ("envelope_sha256", hex::encode(Sha256::digest(envelope))),
                            ],
                        );
                        self.send(Message {
                            from: Endpoint::Node(node),
                            to: Endpoint::Node(next),
                            circuit: out,
                            body: Body::Forward(inner),
                            request: msg.request,
                        });
                    }
                    Ok(Layer::Deliver { payload }) => self.serve(node, &msg, &payload, directory),
                }
            }
            Body::Backward(body) => {
                let Some((prev, circuit_in)) = self.circuits.remove(&(node, msg.circuit)) else {
                    log::warn!("{}: reply on unknown circuit", self.overlay.node_name(node));
                    return;
                };
                let mut observed = vec![
                    ("from", self.name(&msg.from)),
                    ("to", self.name(&prev)),
                    ("circuit_in", msg.circuit.to_string()),
                    ("circuit_out", circuit_in.to_string()),
                ];
                match body {
                    Ok(b) => {
                        observed.push(("body_bytes", b.len().to_string()));
                        observed.push(("body_sha256", hex::encode(Sha256::digest(b))));
                    }
                    Err(f) => observed.push(("error", format!("{}: {}", f.at, f.reason))),
                }
                self.record(msg.request, node, Direction::Backward, false, observed);
                let Message { body, request, .. } = msg;
                self.send(Message {
                    from: Endpoint::Node(node),
                    to: prev,
                    circuit: circuit_in,
                    body,
                    request,
                });
            }
        }
    }

    /// Cell-tower PM: collect, fuse, seal, reply.
    fn serve(&mut self, node: NodeId, msg: &Message, payload: &[u8], directory: &mut dyn ProviderDirectory) {
        let pm = self.overlay.node(node).expect("node exists");
        if pm.level != PmLevel::CellTower {
            self.fail_back(node, msg, "payload delivered above the cell-tower level".into());
            return;
        }
        let region = pm.region;
        let request: LocationRequest = match serde_json::from_slice(payload) {
            Ok(r) => r,
            Err(e) => return self.fail_back(node, msg, format!("bad request payload: {e}")),
        };
        let scan = match WifiScan::from_records(request.aps.clone(), request.captured_at) {
            Ok(s) => s,
            Err(e) => return self.fail_back(node, msg, format!("bad scan: {e}")),
        };
        let repository: Vec<ProviderId> = self
            .overlay
            .repository(region)
            .map(|r| r.iter().cloned().collect())
            .unwrap_or_default();
        let query = ProviderQuery {
            scan: &scan,
            features: &request.features,
            sequence: msg.request,
        };
        let mut collect_rng = stream(self.seed, &[0xc7, msg.request]);
        let collected = ctpm_collect(&repository, self.ctpm.policy, &mut collect_rng, |p| directory.respond(p, &query));
        let reply = match collected {
            Ok(c) => {
                let responses: Vec<ProviderResponse> = c
                    .responses
                    .into_iter()
                    .map(|(p, ranked)| ProviderResponse {
                        utility: self.ctpm.utilities.get(&p),
                        provider: p,
                        ranked: Some(ranked),
                    })
                    .collect();
                match weighted_average_fusion(&responses) {
                    Ok(dist) => {
                        if let Some(label) = accept_label(&dist, self.ctpm.feedback_threshold) {
                            if let Err(e) = self.ctpm.utilities.record_feedback(&responses, &label) {
                                log::warn!("feedback rejected: {e}");
                            }
                        }
                        CtpmReply::Fused(FusedResult::new(&dist, responses.len(), c.iterations, c.contacted))
                    }
                    Err(_) => CtpmReply::NoInformation {
                        iterations: c.iterations,
                        contacted: c.contacted,
                    },
                }
            }
            Err(Error::Exhausted { iterations, contacted }) => CtpmReply::NoInformation { iterations, contacted },
            Err(e) => return self.fail_back(node, msg, format!("collection failed: {e}")),
        };
        let plain = serde_json::to_vec(&reply).expect("reply serializes");
        let sealed = self.codec.seal(&request.reply_key, &plain);
        let (iterations, contacted) = match &reply {
            CtpmReply::Fused(f) => (f.iterations, f.providers_contacted),
            CtpmReply::NoInformation { iterations, contacted } => (*iterations, *contacted),
        };
        self.record(
            msg.request,
            node,
            Direction::Forward,
            true,
            vec![
                ("from", self.name(&msg.from)),
                ("circuit_in", msg.circuit.to_string()),
                ("request", String::from_utf8_lossy(payload).into_owned()),
                ("providers_contacted", contacted.to_string()),
                ("iterations", iterations.to_string()),
                ("reply", String::from_utf8_lossy(&plain).into_owned()),
            ],
        );
        self.send(Message {
            from: Endpoint::Node(node),
            to: msg.from.clone(),
            circuit: msg.circuit,
            body: Body::Backward(Ok(sealed)),
            request: msg.request,
        });
    }

    fn handle_at_requester(&mut self, msg: Message) -> Option<Delivery> {
        let p = self.pending.remove(&msg.request)?;
        let outcome = match msg.body {
            Body::Backward(Ok(sealed)) => self
                .codec
                .open(&p.keys, &sealed)
                .map_err(|e| e.to_string())
                .and_then(|plain| serde_json::from_slice::<CtpmReply>(&plain).map_err(|e| e.to_string()))
                .map_err(|reason| RouteFailure {
                    at: p.requester.clone(),
                    reason,
                }),
            Body::Backward(Err(f)) => Err(f),
            Body::Forward(_) => Err(RouteFailure {
                at: p.requester.clone(),
                reason: "unexpected forward message".into(),
            }),
        };
        let delivery = Delivery {
            request: msg.request,
            requester: p.requester.clone(),
            path: p.path.clone(),
            outcome,
            messages: p.messages,
            latency: self.now - p.sent_at,
        };
        if self.tracing {
            let (outcome, iterations) = match &delivery.outcome {
                Ok(CtpmReply::Fused(f)) => ("fused", Some(f.iterations)),
                Ok(CtpmReply::NoInformation { iterations, .. }) => ("no_information", Some(*iterations)),
                Err(_) => ("route_error", None),
            };
            self.trace.push(TraceRecord::Request(RequestRecord {
                request: msg.request,
                requester: p.requester,
                tower: p.tower,
                path: p.path.iter().map(|n| self.overlay.node_name(*n)).collect(),
                outcome: outcome.into(),
                iterations,
                messages: delivery.messages,
            }));
        }
        Some(delivery)
    }
}

/// Distinct PM nodes a set of deliveries passed through.
pub fn nodes_on_paths(deliveries: &[Delivery]) -> BTreeSet<NodeId> {
    deliveries.iter().flat_map(|d| d.path.iter().copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::{AccessPointReading, LocationLabel};
    use crate::overlay::topology::{build_hierarchy, RegionTree, Replication};
    use crate::overlay::trace::verify_trace;
    use crate::privacy::AreaLevel;

    const T1: &str = "us/nj/middlesex/nb/t1";
    const T2: &str = "us/nj/middlesex/nb/t2";

    struct Fixed;

    impl ProviderDirectory for Fixed {
        fn respond(&mut self, p: &ProviderId, _: &ProviderQuery<'_>) -> Result<Option<RankedLabels>> {
            Ok(match p.0.as_str() {
                "na" => None,
                _ => Some(vec![(LocationLabel::new("hill", "101").unwrap(), 0.8), (LocationLabel::new("hill", "102").unwrap(), 0.2)]),
            })
        }
    }

    fn sim(providers: &[&str], replication: Replication) -> OverlaySim {
        let tree = RegionTree::from_tower_paths([T1, T2]).unwrap();
        let mut o = build_hierarchy(tree, replication, 9).unwrap();
        for p in providers {
            o.register_provider((*p).into(), T1, AreaLevel::City).unwrap();
        }
        let mut s = OverlaySim::new(
            o,
            CtpmConfig {
                policy: CollectPolicy::new(2),
                utilities: UtilityLedger::fixed(),
                feedback_threshold: 0.5,
            },
            4,
        );
        s.set_tracing(true);
        s
    }

    fn scan() -> (WifiScan, FeatureVector) {
        let s = WifiScan::new(vec![AccessPointReading::of("ap-hill-1", -50.0).unwrap()], 0.0).unwrap();
        (s, FeatureVector::default().with_categorical("cell_tower_id", "t1"))
    }

    #[test]
    fn round_trip_fuses_and_stays_private() {
        let mut s = sim(&["a", "b", "na"], Replication::default());
        let (scan, f) = scan();
        let mut rng = stream(1, &[]);
        let d = s.route_request("requester-7", &scan, &f, T2, &mut rng, &mut Fixed).unwrap();
        let fused = d.fused().expect("fused reply");
        assert_eq!(fused.labels[0].room, "101");
        assert!((fused.labels[0].probability - 0.8).abs() < 1e-12);
        assert_eq!(d.path.len(), 5);
        assert_eq!(d.messages, 10);
        let report = verify_trace(&s.take_trace());
        assert!(report.is_clean(), "{:?}", report.violations);
        // Five forward hops, four backward relays.
        assert_eq!(report.hops, 9);
    }

    #[test]
    fn all_na_is_no_information() {
        let mut s = sim(&["na"], Replication::NONE);
        let (scan, f) = scan();
        let d = s.route_request("r", &scan, &f, T1, &mut stream(2, &[]), &mut Fixed).unwrap();
        assert!(matches!(d.outcome, Ok(CtpmReply::NoInformation { iterations: 1, contacted: 1 })));
    }

    #[test]
    fn unknown_tower_fails_along_path() {
        let mut s = sim(&["a"], Replication::NONE);
        let (scan, f) = scan();
        let d = s
            .route_request("r", &scan, &f, "us/nj/middlesex/nb/t9", &mut stream(3, &[]), &mut Fixed)
            .unwrap();
        let err = d.outcome.unwrap_err();
        assert!(err.at.starts_with("us/nj/middlesex/nb#"), "{}", err.at);
        assert_eq!(d.messages, 8);
        assert!(s
            .route_request("r", &scan, &f, "fr/idf/paris/paris/t1", &mut stream(3, &[]), &mut Fixed)
            .is_err());
    }

    #[test]
    fn concurrent_requests_complete() {
        let mut s = sim(&["a", "b"], Replication::default());
        let (scan, f) = scan();
        let mut rng = stream(5, &[]);
        for i in 0..20 {
            s.submit(&format!("r{i}"), &scan, &f, if i % 2 == 0 { T1 } else { T2 }, &mut rng).unwrap();
        }
        let done = s.run(&mut Fixed);
        assert_eq!(done.len(), 20);
        assert!(done.iter().all(|d| d.fused().is_some() && d.messages <= 10));
        assert!(verify_trace(&s.take_trace()).is_clean());
    }
}
