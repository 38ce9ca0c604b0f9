use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::identity::{Crnti, Guti, Pei, STmsi, Suci, Supi};
use crate::secctx::{AlgorithmPair, SecurityCapabilities};

/// Identity carried in registration and identity-exchange messages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value")]
pub enum MobileIdentity {
    #[serde(rename = "SUPI")]
    Supi(Supi),
    #[serde(rename = "SUCI")]
    Suci(Suci),
    #[serde(rename = "GUTI")]
    Guti(Guti),
    #[serde(rename = "PEI")]
    Pei(Pei),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IdentityKind {
    SUCI,
    IMSI,
    IMEI,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegistrationType {
    Initial,
    Mobility,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value")]
pub enum PagingIdentity {
    #[serde(rename = "STMSI")]
    STmsi(STmsi),
    #[serde(rename = "SUPI")]
    Supi(Supi),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Generation {
    #[serde(rename = "2G")]
    G2,
    #[serde(rename = "3G")]
    G3,
    #[serde(rename = "4G")]
    G4,
    #[serde(rename = "5G")]
    G5,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadioCapabilities {
    pub supported_bands: BTreeSet<u16>,
    pub supported_generations: BTreeSet<Generation>,
}

impl RadioCapabilities {
    pub fn typical() -> Self {
        Self {
            supported_bands: [1, 3, 7, 20, 28, 78].into_iter().collect(),
            supported_generations: [Generation::G2, Generation::G3, Generation::G4, Generation::G5]
                .into_iter()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborCell {
    pub cell_id: u32,
    pub signal_dbm: i16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "fields")]
pub enum NasMessage {
    RegistrationRequest {
        identity: MobileIdentity,
        ue_caps: SecurityCapabilities,
        reg_type: RegistrationType,
    },
    RegistrationAccept {
        guti: Option<Guti>,
    },
    RegistrationComplete {},
    RegistrationReject {
        cause: String,
    },
    IdentityRequest {
        requested: IdentityKind,
    },
    IdentityResponse {
        identity: MobileIdentity,
    },
    AuthChallenge {
        #[serde(with = "crate::hexbytes")]
        nonce: Vec<u8>,
    },
    AuthResponse {
        #[serde(with = "crate::hexbytes")]
        proof: Vec<u8>,
    },
    SecurityModeCommand {
        replayed_caps: SecurityCapabilities,
        selected: AlgorithmPair,
        request_pei: bool,
    },
    SecurityModeComplete {
        pei: Option<Pei>,
    },
    SecurityModeReject {
        cause: String,
    },
    ConfigurationUpdateCommand {
        new_guti: Option<Guti>,
        ack_requested: bool,
    },
    ConfigurationUpdateComplete {},
    ServiceRequest {
        stmsi: STmsi,
    },
    ServiceAccept {},
    ServiceReject {
        cause: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "fields")]
pub enum RrcMessage {
    RrcSetupRequest {},
    RrcSetup {
        crnti: Crnti,
    },
    RrcSecurityModeCommand {
        selected: AlgorithmPair,
    },
    RrcSecurityModeComplete {},
    UeCapabilityEnquiry {},
    UeCapabilityInformation {
        radio_caps: RadioCapabilities,
    },
    MeasurementReport {
        neighbor_cells: Vec<NeighborCell>,
    },
    RrcReconfiguration {
        up_security: bool,
    },
    RrcRelease {},
    Paging {
        id: PagingIdentity,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Message {
    Nas(NasMessage),
    Rrc(RrcMessage),
}

pub const NAS_KINDS: &[&str] = &[
    "RegistrationRequest",
    "RegistrationAccept",
    "RegistrationComplete",
    "RegistrationReject",
    "IdentityRequest",
    "IdentityResponse",
    "AuthChallenge",
    "AuthResponse",
    "SecurityModeCommand",
    "SecurityModeComplete",
    "SecurityModeReject",
    "ConfigurationUpdateCommand",
    "ConfigurationUpdateComplete",
    "ServiceRequest",
    "ServiceAccept",
    "ServiceReject",
];

pub const RRC_KINDS: &[&str] = &[
    "RrcSetupRequest",
    "RrcSetup",
    "RrcSecurityModeCommand",
    "RrcSecurityModeComplete",
    "UeCapabilityEnquiry",
    "UeCapabilityInformation",
    "MeasurementReport",
    "RrcReconfiguration",
    "RrcRelease",
    "Paging",
];

pub fn is_known_kind(kind: &str) -> bool {
    NAS_KINDS.contains(&kind) || RRC_KINDS.contains(&kind)
}

/// Identifier categories tracked by exposure accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IdentifierKind {
    SUPI,
    SUCI,
    PEI,
    GUTI,
    STMSI,
    CRNTI,
    /// Neighbour-cell measurements, which locate the UE.
    MEAS,
}

impl fmt::Display for IdentifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub type Exposure = (IdentifierKind, String);

fn identity_entries(id: &MobileIdentity, out: &mut Vec<Exposure>) {
    match id {
        MobileIdentity::Supi(s) => out.push((IdentifierKind::SUPI, s.to_string())),
        MobileIdentity::Suci(s) => {
            out.push((IdentifierKind::SUCI, s.to_string()));
            if let Some(msin) = s.null_scheme_msin() {
                if let Ok(supi) = Supi::new(&s.mcc, &s.mnc, msin) {
                    out.push((IdentifierKind::SUPI, supi.to_string()));
                }
            }
        }
        MobileIdentity::Guti(g) => out.push((IdentifierKind::GUTI, g.to_string())),
        MobileIdentity::Pei(p) => out.push((IdentifierKind::PEI, p.to_string())),
    }
}

impl Message {
    pub fn kind(&self) -> &'static str {
        use NasMessage as N;
        use RrcMessage as R;
        match self {
            Message::Nas(m) => match m {
                N::RegistrationRequest { .. } => "RegistrationRequest",
                N::RegistrationAccept { .. } => "RegistrationAccept",
                N::RegistrationComplete {} => "RegistrationComplete",
                N::RegistrationReject { .. } => "RegistrationReject",
                N::IdentityRequest { .. } => "IdentityRequest",
                N::IdentityResponse { .. } => "IdentityResponse",
                N::AuthChallenge { .. } => "AuthChallenge",
                N::AuthResponse { .. } => "AuthResponse",
                N::SecurityModeCommand { .. } => "SecurityModeCommand",
                N::SecurityModeComplete { .. } => "SecurityModeComplete",
                N::SecurityModeReject { .. } => "SecurityModeReject",
                N::ConfigurationUpdateCommand { .. } => "ConfigurationUpdateCommand",
                N::ConfigurationUpdateComplete {} => "ConfigurationUpdateComplete",
                N::ServiceRequest { .. } => "ServiceRequest",
                N::ServiceAccept {} => "ServiceAccept",
                N::ServiceReject { .. } => "ServiceReject",
            },
            Message::Rrc(m) => match m {
                R::RrcSetupRequest {} => "RrcSetupRequest",
                R::RrcSetup { .. } => "RrcSetup",
                R::RrcSecurityModeCommand { .. } => "RrcSecurityModeCommand",
                R::RrcSecurityModeComplete {} => "RrcSecurityModeComplete",
                R::UeCapabilityEnquiry {} => "UeCapabilityEnquiry",
                R::UeCapabilityInformation { .. } => "UeCapabilityInformation",
                R::MeasurementReport { .. } => "MeasurementReport",
                R::RrcReconfiguration { .. } => "RrcReconfiguration",
                R::RrcRelease {} => "RrcRelease",
                R::Paging { .. } => "Paging",
            },
        }
    }

    pub fn is_nas(&self) -> bool {
        matches!(self, Message::Nas(_))
    }

    pub fn as_nas(&self) -> Option<&NasMessage> {
        match self {
            Message::Nas(m) => Some(m),
            Message::Rrc(_) => None,
        }
    }

    pub fn as_rrc(&self) -> Option<&RrcMessage> {
        match self {
            Message::Rrc(m) => Some(m),
            Message::Nas(_) => None,
        }
    }

    /// Canonical byte form that integrity tags and ciphering operate on.
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("messages always serialize")
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let value: serde_json::Value = serde_json::from_slice(bytes).ok()?;
        let kind = value.get("kind")?.as_str()?.to_owned();
        let fields = value.get("fields").cloned().unwrap_or_else(|| serde_json::json!({}));
        Self::from_kind_fields(&kind, fields).ok()
    }

    /// Rebuilds a message from its kind name and field object.
    pub fn from_kind_fields(kind: &str, fields: serde_json::Value) -> Result<Self, String> {
        let tagged = serde_json::json!({ "kind": kind, "fields": fields });
        if NAS_KINDS.contains(&kind) {
            serde_json::from_value(tagged).map(Message::Nas).map_err(|e| e.to_string())
        } else if RRC_KINDS.contains(&kind) {
            serde_json::from_value(tagged).map(Message::Rrc).map_err(|e| e.to_string())
        } else {
            Err(format!("unknown message kind {kind:?}"))
        }
    }

    /// The message's field object as it appears in traces.
    pub fn fields(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("messages always serialize");
        v.get_mut("fields")
            .map(serde_json::Value::take)
            .unwrap_or_else(|| serde_json::json!({}))
    }

    /// Every identifier present in the payload.
    pub fn identifiers(&self) -> Vec<Exposure> {
        use NasMessage as N;
        use RrcMessage as R;
        let mut out = Vec::new();
        match self {
            Message::Nas(N::RegistrationRequest { identity, .. })
            | Message::Nas(N::IdentityResponse { identity }) => identity_entries(identity, &mut out),
            Message::Nas(N::RegistrationAccept { guti: Some(g) })
            | Message::Nas(N::ConfigurationUpdateCommand { new_guti: Some(g), .. }) => {
                out.push((IdentifierKind::GUTI, g.to_string()))
            }
            Message::Nas(N::SecurityModeComplete { pei: Some(p) }) => {
                out.push((IdentifierKind::PEI, p.to_string()))
            }
            Message::Nas(N::ServiceRequest { stmsi }) => out.push((IdentifierKind::STMSI, stmsi.to_string())),
            Message::Rrc(R::RrcSetup { crnti }) => out.push((IdentifierKind::CRNTI, crnti.to_string())),
            Message::Rrc(R::MeasurementReport { neighbor_cells }) => {
                let text = neighbor_cells
                    .iter()
                    .map(|c| format!("{}:{}", c.cell_id, c.signal_dbm))
                    .collect::<Vec<_>>()
                    .join(",");
                out.push((IdentifierKind::MEAS, text));
            }
            Message::Rrc(R::Paging { id }) => match id {
                PagingIdentity::STmsi(s) => out.push((IdentifierKind::STMSI, s.to_string())),
                PagingIdentity::Supi(s) => out.push((IdentifierKind::SUPI, s.to_string())),
            },
            _ => {}
        }
        out
    }
}

impl From<NasMessage> for Message {
    fn from(m: NasMessage) -> Self {
        Message::Nas(m)
    }
}

impl From<RrcMessage> for Message {
    fn from(m: RrcMessage) -> Self {
        Message::Rrc(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_lists_match_variants() {
        let samples: Vec<Message> = vec![
            NasMessage::RegistrationComplete {}.into(),
            RrcMessage::UeCapabilityEnquiry {}.into(),
        ];
        for m in samples {
            assert!(is_known_kind(m.kind()));
            assert_eq!(Message::from_bytes(&m.to_bytes()), Some(m.clone()));
            assert_eq!(Message::from_kind_fields(m.kind(), m.fields()).unwrap(), m);
        }
        assert!(Message::from_kind_fields("Bogus", serde_json::json!({})).is_err());
    }

    #[test]
    fn null_suci_exposes_supi() {
        let supi = Supi::new("001", "01", "123456789").unwrap();
        let suci = crate::identity::null_scheme_suci(&supi, &Default::default());
        let m: Message = NasMessage::IdentityResponse {
            identity: MobileIdentity::Suci(suci),
        }
        .into();
        let ids = m.identifiers();
        assert!(ids.contains(&(IdentifierKind::SUPI, supi.to_string())));
    }
}
