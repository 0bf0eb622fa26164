//! Layered sealing of requests along a PM path.
//!
//! Each layer is sealed to one hop's public key and names only the next
//! hop, so a PM learns its neighbours on the path and nothing else. The
//! cipher is behind [`SealCodec`]; [`ReferenceCodec`] is a deterministic,
//! dependency-light stand-in used by the simulator.
//!
//! [`ReferenceCodec`] is **not** cryptographically secure: anyone holding a
//! recipient's public key can open what was sealed to it. It models the
//! information flow (who can open what) and detects wrong keys and
//! tampering, which is all the simulation needs.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::topology::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum UnsealError {
    #[error("envelope is malformed")]
    Malformed,
    #[error("envelope is sealed to a different key")]
    WrongKey,
    #[error("envelope integrity check failed")]
    Tampered,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PublicKey(#[serde(with = "hex_bytes")] pub [u8; 32]);

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(&self.0[..6]))
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; 32]);

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPair {
    pub public: PublicKey,
    secret: SecretKey,
}

impl KeyPair {
    pub fn from_secret(secret: [u8; 32]) -> Self {
        let public = PublicKey(Sha256::new().chain_update(b"collabloc-pk").chain_update(secret).finalize().into());
        Self {
            public,
            secret: SecretKey(secret),
        }
    }

    pub fn generate<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut secret = [0u8; 32];
        rng.fill(&mut secret);
        Self::from_secret(secret)
    }

    pub fn secret(&self) -> &SecretKey {
        &self.secret
    }
}

/// A public-key sealing scheme.
pub trait SealCodec: Send + Sync {
    fn seal(&self, recipient: &PublicKey, plaintext: &[u8]) -> Vec<u8>;
    fn open(&self, keys: &KeyPair, sealed: &[u8]) -> Result<Vec<u8>, UnsealError>;
}

/// Keystream-masked envelope with a truncated SHA-256 tag.
///
/// Layout: `magic(4) | recipient(32) | body | tag(16)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ReferenceCodec;

const MAGIC: &[u8; 4] = b"CLS1";
const TAG_LEN: usize = 16;
const HEADER_LEN: usize = MAGIC.len() + 32;

impl ReferenceCodec {
    fn mask(recipient: &PublicKey, data: &mut [u8]) {
        for (i, chunk) in data.chunks_mut(32).enumerate() {
            let block = Sha256::new()
                .chain_update(b"ks")
                .chain_update(recipient.0)
                .chain_update((i as u64).to_le_bytes())
                .finalize();
            chunk.iter_mut().zip(block.iter()).for_each(|(b, k)| *b ^= k);
        }
    }

    fn tag(recipient: &PublicKey, body: &[u8]) -> [u8; TAG_LEN] {
        let d = Sha256::new()
            .chain_update(b"tag")
            .chain_update(recipient.0)
            .chain_update(body)
            .finalize();
        d[..TAG_LEN].try_into().expect("digest is longer than the tag")
    }
}

impl SealCodec for ReferenceCodec {
    fn seal(&self, recipient: &PublicKey, plaintext: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + plaintext.len() + TAG_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&recipient.0);
        let start = out.len();
        out.extend_from_slice(plaintext);
        Self::mask(recipient, &mut out[start..]);
        let tag = Self::tag(recipient, &out[start..]);
        out.extend_from_slice(&tag);
        out
    }

    fn open(&self, keys: &KeyPair, sealed: &[u8]) -> Result<Vec<u8>, UnsealError> {
        if sealed.len() < HEADER_LEN + TAG_LEN || &sealed[..MAGIC.len()] != MAGIC {
            return Err(UnsealError::Malformed);
        }
        let recipient = &sealed[MAGIC.len()..HEADER_LEN];
        if recipient != keys.public.0 {
            return Err(UnsealError::WrongKey);
        }
        let (body, tag) = sealed[HEADER_LEN..].split_at(sealed.len() - HEADER_LEN - TAG_LEN);
        if Self::tag(&keys.public, body) != tag {
            return Err(UnsealError::Tampered);
        }
        let mut plain = body.to_vec();
        Self::mask(&keys.public, &mut plain);
        Ok(plain)
    }
}

/// What a hop finds after removing its layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Layer {
    /// Pass `inner` on to the child `next`.
    Forward { next: NodeId, inner: Vec<u8> },
    /// This hop is the destination.
    Deliver { payload: Vec<u8> },
    /// The requester could not resolve the path below this hop.
    Unresolved { target: String },
}

const TAG_FORWARD: u8 = 1;
const TAG_DELIVER: u8 = 2;
const TAG_UNRESOLVED: u8 = 3;

impl Layer {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Layer::Forward { next, inner } => {
                let mut v = Vec::with_capacity(5 + inner.len());
                v.push(TAG_FORWARD);
                v.extend_from_slice(&next.0.to_le_bytes());
                v.extend_from_slice(inner);
                v
            }
            Layer::Deliver { payload } => {
                let mut v = Vec::with_capacity(1 + payload.len());
                v.push(TAG_DELIVER);
                v.extend_from_slice(payload);
                v
            }
            Layer::Unresolved { target } => {
                let mut v = vec![TAG_UNRESOLVED];
                v.extend_from_slice(target.as_bytes());
                v
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, UnsealError> {
        let (&tag, rest) = bytes.split_first().ok_or(UnsealError::Malformed)?;
        match tag {
            TAG_FORWARD if rest.len() >= 4 => {
                let (id, inner) = rest.split_at(4);
                Ok(Layer::Forward {
                    next: NodeId(u32::from_le_bytes(id.try_into().expect("four bytes"))),
                    inner: inner.to_vec(),
                })
            }
            TAG_DELIVER => Ok(Layer::Deliver {
                payload: rest.to_vec(),
            }),
            TAG_UNRESOLVED => String::from_utf8(rest.to_vec())
                .map(|target| Layer::Unresolved { target })
                .map_err(|_| UnsealError::Malformed),
            _ => Err(UnsealError::Malformed),
        }
    }
}

/// The end of a sealed path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Terminal {
    Deliver(Vec<u8>),
    Unresolved(String),
}

/// Seals `terminal` for the last hop of `route` and wraps one forwarding
/// layer per preceding hop. Returns the envelope for `route[0]`.
pub fn seal_onion(codec: &dyn SealCodec, route: &[(NodeId, PublicKey)], terminal: Terminal) -> Vec<u8> {
    assert!(!route.is_empty(), "an onion needs at least one hop");
    let last = route.len() - 1;
    let layer = match terminal {
        Terminal::Deliver(payload) => Layer::Deliver { payload },
        Terminal::Unresolved(target) => Layer::Unresolved { target },
    };
    let mut envelope = codec.seal(&route[last].1, &layer.encode());
    for i in (0..last).rev() {
        let layer = Layer::Forward {
            next: route[i + 1].0,
            inner: envelope,
        };
        envelope = codec.seal(&route[i].1, &layer.encode());
    }
    envelope
}

/// Removes one layer with `keys`.
pub fn unseal_layer(codec: &dyn SealCodec, keys: &KeyPair, envelope: &[u8]) -> Result<Layer, UnsealError> {
    Layer::decode(&codec.open(keys, envelope)?)
}

mod hex_bytes {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(&s).map_err(D::Error::custom)?;
        v.try_into().map_err(|_| D::Error::custom("expected 32 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn hops(n: usize) -> Vec<(NodeId, KeyPair)> {
        let mut rng = stream(3, &[]);
        (0..n)
            .map(|i| (NodeId(i as u32 + 10), KeyPair::generate(&mut rng)))
            .collect()
    }

    fn route(h: &[(NodeId, KeyPair)]) -> Vec<(NodeId, PublicKey)> {
        h.iter().map(|(id, k)| (*id, k.public)).collect()
    }

    #[test]
    fn seal_open_round_trip() {
        let k = KeyPair::from_secret([7; 32]);
        let sealed = ReferenceCodec.seal(&k.public, b"hello");
        assert_eq!(ReferenceCodec.open(&k, &sealed).unwrap(), b"hello");
        assert!(!sealed.windows(5).any(|w| w == b"hello"));
    }

    #[test]
    fn wrong_key_and_tamper() {
        let k = KeyPair::from_secret([7; 32]);
        let other = KeyPair::from_secret([8; 32]);
        let mut sealed = ReferenceCodec.seal(&k.public, b"payload bytes");
        assert_eq!(ReferenceCodec.open(&other, &sealed), Err(UnsealError::WrongKey));
        sealed[HEADER_LEN + 2] ^= 1;
        assert_eq!(ReferenceCodec.open(&k, &sealed), Err(UnsealError::Tampered));
        assert_eq!(ReferenceCodec.open(&k, b"CLS"), Err(UnsealError::Malformed));
    }

    #[test]
    fn five_hops_in_order() {
        let h = hops(5);
        let mut env = seal_onion(&ReferenceCodec, &route(&h), Terminal::Deliver(b"features".to_vec()));
        for (i, (_, keys)) in h.iter().enumerate() {
            match unseal_layer(&ReferenceCodec, keys, &env).unwrap() {
                Layer::Forward { next, inner } => {
                    assert_eq!(next, h[i + 1].0);
                    env = inner;
                }
                Layer::Deliver { payload } => {
                    assert_eq!(i, 4);
                    assert_eq!(payload, b"features");
                    return;
                }
                Layer::Unresolved { .. } => panic!("unexpected"),
            }
        }
        panic!("payload never delivered");
    }

    #[test]
    fn out_of_order_fails_at_first_wrong_hop() {
        let h = hops(5);
        let env = seal_onion(&ReferenceCodec, &route(&h), Terminal::Deliver(b"x".to_vec()));
        assert_eq!(unseal_layer(&ReferenceCodec, &h[1].1, &env), Err(UnsealError::WrongKey));
        let Layer::Forward { inner, .. } = unseal_layer(&ReferenceCodec, &h[0].1, &env).unwrap() else {
            panic!("expected a forward layer");
        };
        assert_eq!(unseal_layer(&ReferenceCodec, &h[2].1, &inner), Err(UnsealError::WrongKey));
    }

    #[test]
    fn layers_round_trip() {
        for l in [
            Layer::Forward {
                next: NodeId(9),
                inner: vec![1, 2, 3],
            },
            Layer::Deliver { payload: vec![] },
            Layer::Unresolved {
                target: "us/nj".into(),
            },
        ] {
            assert_eq!(Layer::decode(&l.encode()).unwrap(), l);
        }
        assert_eq!(Layer::decode(&[]), Err(UnsealError::Malformed));
        assert_eq!(Layer::decode(&[1, 0]), Err(UnsealError::Malformed));
        assert_eq!(Layer::decode(&[9]), Err(UnsealError::Malformed));
    }

    #[test]
    fn public_key_serde_is_hex() {
        let k = KeyPair::from_secret([1; 32]).public;
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(s.len(), 66);
        assert_eq!(serde_json::from_str::<PublicKey>(&s).unwrap(), k);
    }
}
