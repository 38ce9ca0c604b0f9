use std::collections::BTreeMap;

use super::{CellMode, Dest, NetworkSide, Outbound, Transmission};
use crate::identity::Crnti;
use crate::proto::{IdentityKind, Message, MobileIdentity, NasMessage, RrcMessage, SecurityEnvelope};

/// Rogue cell that solicits an identity in clear and then releases the UE.
///
/// It holds no subscriber keys, so it can never reach a security mode.
#[derive(Debug, Clone)]
pub struct FakeBaseStation {
    pub requested: IdentityKind,
    pub mode: CellMode,
    /// Identities volunteered by UEs, in arrival order.
    pub captured: Vec<(u32, MobileIdentity)>,
    links: BTreeMap<u32, Crnti>,
}

impl FakeBaseStation {
    pub fn new(requested: IdentityKind, mode: CellMode) -> Self {
        Self {
            requested,
            mode,
            captured: Vec::new(),
            links: BTreeMap::new(),
        }
    }

    fn send(&self, ue: u32, msg: impl Into<Message>) -> Outbound {
        let message = msg.into();
        Outbound {
            dest: Dest::Ue(ue),
            tx: Transmission {
                envelope: SecurityEnvelope::clear(message.clone(), self.links.get(&ue).copied()),
                message,
            },
        }
    }
}

impl NetworkSide for FakeBaseStation {
    fn receive(&mut self, ue: u32, env: &SecurityEnvelope, _now: u64) -> Vec<Outbound> {
        let Some(msg) = env.clear_message() else {
            return Vec::new();
        };
        match msg {
            Message::Rrc(RrcMessage::RrcSetupRequest {}) => {
                let crnti = Crnti::new(0x4601 + ue as u16).expect("small offsets are valid");
                self.links.insert(ue, crnti);
                vec![self.send(ue, RrcMessage::RrcSetup { crnti })]
            }
            Message::Nas(NasMessage::RegistrationRequest { .. } | NasMessage::ServiceRequest { .. }) => {
                vec![self.send(
                    ue,
                    NasMessage::IdentityRequest {
                        requested: self.requested,
                    },
                )]
            }
            Message::Nas(NasMessage::IdentityResponse { identity }) => {
                self.captured.push((ue, identity.clone()));
                let out = vec![self.send(ue, RrcMessage::RrcRelease {})];
                self.links.remove(&ue);
                out
            }
            _ => Vec::new(),
        }
    }

    fn cell_mode(&self) -> CellMode {
        self.mode
    }

    fn genuine(&self) -> bool {
        false
    }
}
