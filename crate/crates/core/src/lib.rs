//! Deterministic simulator of the 5G control plane for subscriber-privacy
//! analysis.
//!
//! A [`endpoints::World`] wires UE and network state machines together over an
//! interposable radio channel. Every transmission is recorded as a
//! [`proto::TraceEvent`] together with the identifiers a passive observer
//! could read from it. The [`adversary`] module runs attack procedures on top
//! of that and judges the resulting traces; [`conformance`] turns verdicts and
//! traces into a matrix and audit findings.

pub mod adversary;
pub mod cli;
pub mod conformance;
pub mod endpoints;
pub mod identity;
pub mod profiles;
pub mod proto;
pub mod secctx;

/// Seed used when none is given, so runs are reproducible by default.
pub const DEFAULT_SEED: u64 = 0x5eed;

pub(crate) mod hexbytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}
