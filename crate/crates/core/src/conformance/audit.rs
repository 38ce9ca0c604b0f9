use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::identity::{unpredictability_score, Guti, UNPREDICTABILITY_THRESHOLD};
use crate::profiles::Enhancement;
use crate::proto::{decode_trace, IdentifierKind, Message, NasMessage, RrcMessage, Trace, TraceError, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
    R9,
}

impl RuleId {
    pub const ALL: [RuleId; 9] = [
        Self::R1,
        Self::R2,
        Self::R3,
        Self::R4,
        Self::R5,
        Self::R6,
        Self::R7,
        Self::R8,
        Self::R9,
    ];

    pub fn all() -> BTreeSet<RuleId> {
        Self::ALL.into_iter().collect()
    }

    pub fn summary(self) -> &'static str {
        match self {
            Self::R1 => "SUPI readable on the air",
            Self::R2 => "PEI sent outside a secure channel",
            Self::R3 => "paging addressed by SUPI",
            Self::R4 => "null ciphering negotiated",
            Self::R5 => "NAS Security Mode Command without MAC",
            Self::R6 => "UE capability enquiry before RRC security",
            Self::R7 => "Configuration Update Command not fully protected",
            Self::R8 => "same temporary identity paged in several epochs",
            Self::R9 => "predictable 5G-GUTI reallocation",
        }
    }

    pub fn enhancement(self) -> Enhancement {
        match self {
            Self::R1 => Enhancement::E1,
            Self::R2 => Enhancement::E3,
            Self::R3 => Enhancement::E2,
            Self::R4 => Enhancement::E5,
            Self::R5 => Enhancement::E7,
            Self::R6 => Enhancement::E6,
            Self::R7 | Self::R8 | Self::R9 => Enhancement::E4,
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            Self::R1 | Self::R3 | Self::R5 => Severity::High,
            Self::R2 | Self::R7 | Self::R8 | Self::R9 => Severity::Medium,
            Self::R4 | Self::R6 => Severity::Low,
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for RuleId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown rule {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditFinding {
    pub rule: RuleId,
    pub severity: Severity,
    /// Seq numbers of the offending events; never empty.
    pub events: Vec<u64>,
    pub explanation: String,
}

fn finding(rule: RuleId, events: Vec<u64>, detail: String) -> Option<AuditFinding> {
    if events.is_empty() {
        return None;
    }
    let e = rule.enhancement();
    Some(AuditFinding {
        rule,
        severity: rule.severity(),
        events,
        explanation: format!("{}: {detail} (violates {e}, {})", rule.summary(), e.mechanism()),
    })
}

fn matching(trace: &Trace, p: impl Fn(&TraceEvent) -> bool) -> Vec<u64> {
    trace.events.iter().filter(|e| p(e)).map(|e| e.seq).collect()
}

fn r6(trace: &Trace) -> Vec<u64> {
    let mut secured: BTreeMap<u32, bool> = BTreeMap::new();
    let mut out = Vec::new();
    for e in &trace.events {
        let Some(ue) = e.ue else { continue };
        match e.kind() {
            "RrcSetup" | "RrcRelease" => {
                secured.insert(ue, false);
            }
            "RrcSecurityModeComplete" if e.arrived() => {
                secured.insert(ue, true);
            }
            "UeCapabilityEnquiry" if !secured.get(&ue).copied().unwrap_or(false) => out.push(e.seq),
            _ => {}
        }
    }
    out
}

fn r8(trace: &Trace) -> Vec<u64> {
    let mut seen: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for e in trace.of_kind("Paging") {
        for v in e.exposed_values(IdentifierKind::STMSI) {
            seen.entry(v).or_default().push(e.seq);
        }
    }
    let mut out: Vec<u64> = seen.into_values().filter(|s| s.len() >= 2).flatten().collect();
    out.sort_unstable();
    out
}

fn r9(trace: &Trace) -> (Vec<u64>, String) {
    let mut per_ue: BTreeMap<u32, Vec<(u64, Guti)>> = BTreeMap::new();
    for e in &trace.events {
        let guti = match &e.message {
            Message::Nas(NasMessage::RegistrationAccept { guti: Some(g) })
            | Message::Nas(NasMessage::ConfigurationUpdateCommand { new_guti: Some(g), .. }) => g,
            _ => continue,
        };
        let Some(ue) = e.ue else { continue };
        let list = per_ue.entry(ue).or_default();
        // Retransmissions carry the same value.
        if list.last().map(|(_, g)| g) != Some(guti) {
            list.push((e.seq, guti.clone()));
        }
    }
    let mut out = Vec::new();
    let mut details = Vec::new();
    for (ue, list) in per_ue {
        let history: Vec<Guti> = list.iter().map(|(_, g)| g.clone()).collect();
        if let Ok(score) = unpredictability_score(&history) {
            if score < UNPREDICTABILITY_THRESHOLD {
                out.extend(list.iter().map(|(s, _)| *s));
                details.push(format!("UE {ue} scores {score:.3} over {} values", history.len()));
            }
        }
    }
    out.sort_unstable();
    (out, details.join("; "))
}

/// Applies the selected rules to a trace; one finding per rule that fires.
pub fn audit_trace(trace: &Trace, rules: &BTreeSet<RuleId>) -> Vec<AuditFinding> {
    let mut out = Vec::new();
    for &rule in rules {
        let f = match rule {
            RuleId::R1 => finding(
                rule,
                matching(trace, |e| e.kind() != "Paging" && e.exposes(IdentifierKind::SUPI)),
                "permanent identity sent in clear".into(),
            ),
            RuleId::R2 => finding(
                rule,
                // A readable PEI under an established (null-cipher) context is R4's concern.
                matching(trace, |e| e.exposes(IdentifierKind::PEI) && !e.envelope.integrity_protected),
                "equipment identity sent before security activation".into(),
            ),
            RuleId::R3 => finding(
                rule,
                matching(trace, |e| e.kind() == "Paging" && e.exposes(IdentifierKind::SUPI)),
                "paging record carries the permanent identity".into(),
            ),
            RuleId::R4 => finding(
                rule,
                matching(trace, |e| match &e.message {
                    Message::Nas(NasMessage::SecurityModeCommand { selected, .. })
                    | Message::Rrc(RrcMessage::RrcSecurityModeCommand { selected }) => selected.nea.is_null(),
                    _ => false,
                }),
                "NEA0 selected in a Security Mode Command".into(),
            ),
            RuleId::R5 => finding(
                rule,
                matching(trace, |e| e.kind() == "SecurityModeCommand" && !e.envelope.integrity_protected),
                "replayed capabilities can be rewritten undetected".into(),
            ),
            RuleId::R6 => finding(rule, r6(trace), "radio capabilities exchanged unprotected".into()),
            RuleId::R7 => finding(
                rule,
                matching(trace, |e| {
                    e.kind() == "ConfigurationUpdateCommand"
                        && !(e.envelope.integrity_protected && e.envelope.effectively_ciphered())
                }),
                "new 5G-GUTI can be read or altered in flight".into(),
            ),
            RuleId::R8 => finding(rule, r8(trace), "temporary identity not refreshed between pages".into()),
            RuleId::R9 => {
                let (events, detail) = r9(trace);
                finding(rule, events, detail)
            }
        };
        out.extend(f);
    }
    out
}

/// Decodes a JSON Lines trace and audits it.
pub fn audit_text(text: &str, rules: &BTreeSet<RuleId>) -> Result<Vec<AuditFinding>, TraceError> {
    Ok(audit_trace(&decode_trace(text)?, rules))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trace_is_clean() {
        assert!(audit_trace(&Trace::new(), &RuleId::all()).is_empty());
        assert!(audit_text("", &RuleId::all()).unwrap().is_empty());
    }

    #[test]
    fn rule_ids_parse() {
        assert_eq!("r5".parse::<RuleId>().unwrap(), RuleId::R5);
        assert!("R10".parse::<RuleId>().is_err());
    }
}
