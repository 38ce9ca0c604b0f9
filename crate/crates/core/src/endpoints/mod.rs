//! UE and network state machines and the driver that runs them over a channel.
//!
//! The gNB and core are merged into one [`Network`]; the NAS/RRC split is kept
//! in each envelope's layer. Links are keyed by the UE's simulator index.

mod fake;
mod network;
mod ue;
mod world;

use thiserror::Error;

use crate::adversary::CapabilityViolation;
use crate::proto::{Message, SecurityEnvelope};

pub use fake::FakeBaseStation;
pub use network::{Network, NetworkStats, UeRecord};
pub use ue::{AcceptancePolicy, CellMode, Ue, UeConfig, UePhase};
pub use world::{World, WorldBuilder};

/// An envelope plus the plaintext it carries, as known to the sender.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmission {
    pub envelope: SecurityEnvelope,
    pub message: Message,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dest {
    Ue(u32),
    Broadcast,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outbound {
    pub dest: Dest,
    pub tx: Transmission,
}

/// Anything a UE can camp on: the genuine network or a fake base station.
pub trait NetworkSide {
    fn receive(&mut self, ue: u32, env: &SecurityEnvelope, now: u64) -> Vec<Outbound>;

    /// Identity handling the cell announces to UEs camping on it.
    fn cell_mode(&self) -> CellMode;

    fn next_timer(&self) -> Option<u64> {
        None
    }

    fn fire_timers(&mut self, _now: u64) -> Vec<Outbound> {
        Vec::new()
    }

    /// False when the adversary is the one transmitting.
    fn genuine(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("protocol stalled: UE {ue} stuck in phase {phase}")]
    ProtocolStall { ue: u32, phase: UePhase },
    #[error("simulation did not settle after {0} transmissions")]
    Livelock(usize),
    #[error("no registered UE {0} to page")]
    UnknownTarget(u32),
    #[error(transparent)]
    Capability(#[from] CapabilityViolation),
}

/// Opaque challenge–response standing in for 5G-AKA: the proof and the
/// resulting master key are both keyed by the subscriber's long-term secret.
pub(crate) mod auth {
    use hmac::{Hmac, Mac};
    use sha2::Sha256;

    use crate::secctx::MasterKey;

    fn prf(k: &[u8; 32], label: &[u8], nonce: &[u8]) -> [u8; 32] {
        let mut mac = Hmac::<Sha256>::new_from_slice(k).expect("HMAC accepts any key length");
        mac.update(label);
        mac.update(nonce);
        mac.finalize().into_bytes().into()
    }

    pub fn proof(k: &[u8; 32], nonce: &[u8]) -> Vec<u8> {
        prf(k, b"res", nonce).to_vec()
    }

    pub fn master_key(k: &[u8; 32], nonce: &[u8]) -> MasterKey {
        prf(k, b"kamf", nonce)
    }
}
