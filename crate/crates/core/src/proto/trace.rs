//! Ordered simulation log and its JSON Lines encoding.
//!
//! One event per line, fields always in this order:
//! `seq, sim_time, direction, delivery, ue, layer, integrity, ciphered, nea,
//! count, mac, crnti, kind, fields, sealed, exposed`.
//! `kind`/`fields` hold the plaintext message as known to the sender; when the
//! payload went out effectively ciphered, `sealed` carries the ciphertext hex
//! and `exposed` reflects only what was readable on the air.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::envelope::{exposed_fields, Body, Layer, SecurityEnvelope};
use super::message::{is_known_kind, Exposure, IdentifierKind, Message};
use crate::identity::Crnti;
use crate::secctx::{CipherAlg, Direction, MacTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delivery {
    Delivered,
    /// Altered in flight by the adversary before delivery.
    Modified,
    /// Sent by the adversary posing as the network.
    Injected,
    /// Transmitted but suppressed before reaching the receiver.
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub seq: u64,
    pub sim_time: u64,
    pub direction: Direction,
    pub delivery: Delivery,
    /// Simulator index of the UE on the link; `None` for broadcasts.
    pub ue: Option<u32>,
    pub envelope: SecurityEnvelope,
    /// Plaintext of the payload, whether or not it was readable on the air.
    pub message: Message,
    pub exposed: BTreeSet<Exposure>,
}

impl TraceEvent {
    pub fn new(
        seq: u64,
        sim_time: u64,
        direction: Direction,
        delivery: Delivery,
        ue: Option<u32>,
        envelope: SecurityEnvelope,
        message: Message,
    ) -> Self {
        let exposed = exposed_fields(&envelope);
        Self {
            seq,
            sim_time,
            direction,
            delivery,
            ue,
            envelope,
            message,
            exposed,
        }
    }

    pub fn kind(&self) -> &'static str {
        self.message.kind()
    }

    pub fn exposes(&self, kind: IdentifierKind) -> bool {
        self.exposed.iter().any(|(k, _)| *k == kind)
    }

    pub fn exposed_values(&self, kind: IdentifierKind) -> impl Iterator<Item = &str> {
        self.exposed
            .iter()
            .filter(move |(k, _)| *k == kind)
            .map(|(_, v)| v.as_str())
    }

    /// Whether the receiver actually got the message.
    pub fn arrived(&self) -> bool {
        self.delivery != Delivery::Dropped
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn next_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq + 1)
    }

    pub fn get(&self, seq: u64) -> Option<&TraceEvent> {
        self.events
            .binary_search_by_key(&seq, |e| e.seq)
            .ok()
            .map(|i| &self.events[i])
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a TraceEvent> + 'a {
        self.events.iter().filter(move |e| e.kind() == kind)
    }

    pub fn first_of_kind<'a>(&'a self, kind: &'a str) -> Option<&'a TraceEvent> {
        self.of_kind(kind).next()
    }

    /// Appends another trace, renumbering its events to continue this one.
    pub fn append(&mut self, other: Trace) {
        let start = self.next_seq();
        for (seq, mut e) in (start..).zip(other.events) {
            e.seq = seq;
            self.events.push(e);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace line {line}: {reason}")]
pub struct TraceError {
    pub line: usize,
    pub reason: String,
    /// Set when the line named a message kind this simulator does not know.
    pub kind: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ExposedEntry {
    kind: IdentifierKind,
    value: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    seq: u64,
    sim_time: u64,
    direction: Direction,
    delivery: Delivery,
    ue: Option<u32>,
    layer: Layer,
    integrity: bool,
    ciphered: bool,
    nea: CipherAlg,
    count: u32,
    mac: Option<MacTag>,
    crnti: Option<Crnti>,
    kind: String,
    fields: serde_json::Value,
    sealed: Option<String>,
    exposed: Vec<ExposedEntry>,
}

fn to_record(e: &TraceEvent) -> Record {
    let env = &e.envelope;
    Record {
        seq: e.seq,
        sim_time: e.sim_time,
        direction: e.direction,
        delivery: e.delivery,
        ue: e.ue,
        layer: env.layer,
        integrity: env.integrity_protected,
        ciphered: env.ciphered,
        nea: env.nea,
        count: env.count,
        mac: env.mac,
        crnti: env.crnti,
        kind: e.message.kind().to_owned(),
        fields: e.message.fields(),
        sealed: match &env.body {
            Body::Sealed(ct) => Some(hex::encode(ct)),
            Body::Clear(_) => None,
        },
        exposed: e
            .exposed
            .iter()
            .map(|(kind, value)| ExposedEntry {
                kind: *kind,
                value: value.clone(),
            })
            .collect(),
    }
}

pub fn encode_event(e: &TraceEvent) -> String {
    serde_json::to_string(&to_record(e)).expect("trace records always serialize")
}

pub fn encode_trace(trace: &Trace) -> String {
    let mut out = String::new();
    for e in &trace.events {
        out.push_str(&encode_event(e));
        out.push('\n');
    }
    out
}

fn decode_line(line: &str, lineno: usize) -> Result<TraceEvent, TraceError> {
    let err = |reason: String, kind: Option<String>| TraceError {
        line: lineno,
        reason,
        kind,
    };
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| err(format!("not a JSON object: {e}"), None))?;
    if let Some(kind) = value.get("kind").and_then(|k| k.as_str()) {
        if !is_known_kind(kind) {
            return Err(err(format!("unknown message kind {kind:?}"), Some(kind.to_owned())));
        }
    }
    let r: Record = serde_json::from_value(value).map_err(|e| err(e.to_string(), None))?;
    let message = Message::from_kind_fields(&r.kind, r.fields)
        .map_err(|e| err(format!("bad fields for {}: {e}", r.kind), None))?;
    let body = match r.sealed {
        Some(h) => Body::Sealed(hex::decode(h).map_err(|e| err(format!("sealed payload: {e}"), None))?),
        None => Body::Clear(message.clone()),
    };
    Ok(TraceEvent {
        seq: r.seq,
        sim_time: r.sim_time,
        direction: r.direction,
        delivery: r.delivery,
        ue: r.ue,
        envelope: SecurityEnvelope {
            layer: r.layer,
            integrity_protected: r.integrity,
            ciphered: r.ciphered,
            nea: r.nea,
            mac: r.mac,
            count: r.count,
            crnti: r.crnti,
            body,
        },
        message,
        exposed: r.exposed.into_iter().map(|x| (x.kind, x.value)).collect(),
    })
}

pub fn decode_trace(text: &str) -> Result<Trace, TraceError> {
    let mut trace = Trace::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e = decode_line(line, i + 1)?;
        if let Some(prev) = trace.events.last() {
            if e.seq <= prev.seq {
                return Err(TraceError {
                    line: i + 1,
                    reason: format!("seq {} does not follow {}", e.seq, prev.seq),
                    kind: None,
                });
            }
        }
        trace.events.push(e);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proto::message::{NasMessage, RrcMessage};

    fn sample() -> Trace {
        let mut t = Trace::new();
        let m: Message = RrcMessage::RrcSetup {
            crnti: Crnti::new(0x77).unwrap(),
        }
        .into();
        t.events.push(TraceEvent::new(
            0,
            5,
            Direction::Downlink,
            Delivery::Delivered,
            Some(0),
            SecurityEnvelope::clear(m.clone(), None),
            m,
        ));
        let m: Message = NasMessage::RegistrationComplete {}.into();
        let mut env = SecurityEnvelope::clear(m.clone(), Some(Crnti::new(0x77).unwrap()));
        env.ciphered = true;
        env.nea = CipherAlg::NEA2;
        env.body = Body::Sealed(vec![1, 2, 3]);
        t.events
            .push(TraceEvent::new(3, 5, Direction::Uplink, Delivery::Modified, Some(0), env, m));
        t
    }

    #[test]
    fn round_trip() {
        assert_eq!(encode_trace(&Trace::new()), "");
        let t = sample();
        let text = encode_trace(&t);
        assert_eq!(text.lines().count(), 2);
        assert_eq!(decode_trace(&text).unwrap(), t);
    }

    #[test]
    fn field_order_is_fixed() {
        let line = encode_event(&sample().events[0]);
        let keys = [
            "seq", "sim_time", "direction", "delivery", "ue", "layer", "integrity", "ciphered", "nea",
            "count", "mac", "crnti", "kind", "fields", "sealed", "exposed",
        ];
        let positions: Vec<usize> = keys
            .iter()
            .map(|k| line.find(&format!("\"{k}\":")).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{line}");
    }

    #[test]
    fn unknown_kind_is_named() {
        let text = encode_trace(&sample()).replace("RrcSetup\"", "Teleport\"");
        let e = decode_trace(&text).unwrap_err();
        assert_eq!(e.line, 1);
        assert_eq!(e.kind.as_deref(), Some("Teleport"));
        assert!(e.to_string().contains("Teleport"));
    }

    #[test]
    fn non_increasing_seq_rejected() {
        let text = encode_trace(&sample()).replace("\"seq\":3", "\"seq\":0");
        assert_eq!(decode_trace(&text).unwrap_err().line, 2);
        assert_eq!(decode_trace("{oops").unwrap_err().line, 1);
    }
}
