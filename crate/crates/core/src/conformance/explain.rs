use thiserror::Error;

use super::audit::RuleId;
use crate::adversary::AttackId;
use crate::profiles::Enhancement;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("nothing to explain for {0:?}; try `list` topics: attack ids, R1-R9, E1-E7 or a mechanism name")]
pub struct UnknownTopic(pub String);

const MECHANISMS: [(&str, &str); 9] = [
    (
        "suci",
        "SUCI: the SUPI's MSIN is concealed with the home network's public key before it leaves the UE \
         (ephemeral X25519, keystream encryption and a truncated MAC tag). Only the home network can \
         recover it, and a fresh ephemeral key makes every SUCI different. Mitigation: SUPI concealment (SUCI). \
         Reference: 3GPP TS 33.501, subscription identifier privacy.",
    ),
    (
        "guti",
        "5G-GUTI reallocation: the core should hand out a fresh, unpredictable 5G-TMSI after initial and \
         mobility registration, periodic registration and a service request answering paging. Sticky or \
         counter-like allocators and skipped refreshes let an observer follow one temporary identity. \
         Mitigation: strict and unpredictable 5G-GUTI reallocation. Reference: 3GPP TS 33.501.",
    ),
    (
        "pei",
        "PEI protection: the equipment identity is requested inside the NAS Security Mode Command and \
         returned ciphered in the Security Mode Complete, never in a plain Identity Response. \
         Mitigation: PEI only over a secure channel. Reference: 3GPP TS 24.501.",
    ),
    (
        "paging",
        "Paging identity: idle UEs are paged by 5G-S-TMSI, never by SUPI, so sniffing the paging channel \
         yields only a temporary value. Mitigation: paging with 5G-S-TMSI only. Reference: 3GPP TS 38.331.",
    ),
    (
        "rrc-ciphering",
        "RRC ciphering: after the RRC Security Mode Command, RRC messages can be ciphered. With NEA0 the \
         C-RNTI in every header can be tied to readable content such as measurement reports. \
         Mitigation: RRC ciphering. Reference: 3GPP TS 33.501, RRC security.",
    ),
    (
        "smc-mac",
        "NAS Security Mode Command MAC: the network replays the UE security capabilities it received so the UE \
         can detect tampering, and integrity-protects the command with the new NAS key. Without the MAC an \
         in-flight attacker rewrites both copies consistently. Mitigation: MAC on the enhanced NAS Security \
         Mode Command. Reference: 3GPP TS 33.501.",
    ),
    (
        "caps-replay",
        "Capability replay: the UE compares the capabilities echoed in the Security Mode Command with what it \
         sent and rejects on mismatch. This alone stops only the original bidding-down attack. \
         Mitigation: MAC on the enhanced NAS Security Mode Command. Reference: 3GPP TS 33.501.",
    ),
    (
        "radio-caps",
        "Radio capability transfer: UE Capability Enquiry is sent only after the RRC Security Mode Complete, \
         so the capability report is integrity-protected and cannot be trimmed in flight. \
         Mitigation: radio capabilities after RRC security. Reference: 3GPP TS 38.331.",
    ),
    (
        "config-update",
        "Configuration Update Command: the new 5G-GUTI must be integrity-protected and ciphered, and the \
         network should request an acknowledgement so a suppressed command is noticed and retransmitted \
         (timer T3555). Mitigation: strict and unpredictable 5G-GUTI reallocation. Reference: 3GPP TS 24.501.",
    ),
];

fn mechanism_key(e: Enhancement) -> &'static str {
    match e {
        Enhancement::E1 => "suci",
        Enhancement::E2 => "paging",
        Enhancement::E3 => "pei",
        Enhancement::E4 => "guti",
        Enhancement::E5 => "rrc-ciphering",
        Enhancement::E6 => "radio-caps",
        Enhancement::E7 => "smc-mac",
    }
}

fn mechanism(key: &str) -> &'static str {
    MECHANISMS
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, t)| *t)
        .expect("keys are internal")
}

fn attack_text(a: AttackId) -> (&'static str, &'static str) {
    match a {
        AttackId::ImsiCatching => (
            "A fake base station answers the UE's connection and sends an Identity Request for the IMSI; \
             a UE on a legacy core replies with its SUPI in clear.",
            "suci",
        ),
        AttackId::ImsiPagingProbe => (
            "The attacker triggers paging (e.g. a silent call) and sniffs the paging channel for a SUPI.",
            "paging",
        ),
        AttackId::ImeiCatching => (
            "A fake base station asks for the IMEI before any security is established.",
            "pei",
        ),
        AttackId::TmsiLinkability => (
            "Silent pages spread over several days reveal whether the paged 5G-S-TMSI ever changes.",
            "guti",
        ),
        AttackId::CrntiTracking => (
            "A passive sniffer ties the C-RNTI in RRC headers to readable RRC content and triggered traffic.",
            "rrc-ciphering",
        ),
        AttackId::UeMeasurementReports => (
            "A passive sniffer reads neighbour-cell signal strengths from measurement reports to localize the UE.",
            "rrc-ciphering",
        ),
        AttackId::SecurityCapsBiddingDown => (
            "A man in the middle rewrites the capabilities in the Registration Request to null algorithms. \
             Graded Weak when the replay check stops this but the extended variant still succeeds.",
            "caps-replay",
        ),
        AttackId::SecurityCapsBiddingDownExtended => (
            "As the original bidding-down, but the attacker also rewrites the capabilities replayed in the \
             Security Mode Command so the UE's comparison passes.",
            "smc-mac",
        ),
        AttackId::RadioCapsBiddingDown => (
            "A man in the middle strips 5G from the UE Capability Information so the network serves a lesser RAT.",
            "radio-caps",
        ),
        AttackId::GutiReallocDos => (
            "A man in the middle flips bits in an unprotected new 5G-GUTI; the UE adopts a value the network \
             does not know and its next service request is rejected.",
            "config-update",
        ),
        AttackId::GutiReallocTracking => (
            "After a silent page, the readable new 5G-GUTI in the ensuing Configuration Update Command links the \
             old and new temporary identities.",
            "config-update",
        ),
        AttackId::GutiRefreshNeutralization => (
            "A man in the middle drops the Configuration Update Command; without an acknowledgement request the \
             network never notices and the UE keeps its stale 5G-GUTI.",
            "config-update",
        ),
    }
}

/// Every id `explain` accepts.
pub fn topics() -> Vec<String> {
    let mut t: Vec<String> = AttackId::ALL.iter().map(|a| a.as_str().to_owned()).collect();
    t.extend(RuleId::ALL.iter().map(|r| r.to_string()));
    t.extend(Enhancement::ALL.iter().map(|e| e.to_string()));
    t.extend(MECHANISMS.iter().map(|(k, _)| (*k).to_owned()));
    t
}

pub fn explain(id: &str) -> Result<String, UnknownTopic> {
    if let Ok(a) = id.parse::<AttackId>() {
        let (what, key) = attack_text(a);
        return Ok(format!(
            "{a} (needs: {}; property: {:?})\n{what}\n{}\n",
            a.required().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", "),
            a.property(),
            mechanism(key)
        ));
    }
    if let Ok(r) = id.parse::<RuleId>() {
        let e = r.enhancement();
        return Ok(format!(
            "{r} ({:?}): flags {}.\n{}\n",
            r.severity(),
            r.summary(),
            mechanism(mechanism_key(e))
        ));
    }
    if let Some(e) = Enhancement::ALL.into_iter().find(|e| e.to_string().eq_ignore_ascii_case(id)) {
        return Ok(format!("{e}: {}\n{}\n", e.mechanism(), mechanism(mechanism_key(e))));
    }
    let key = id.to_ascii_lowercase();
    MECHANISMS
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, t)| format!("{t}\n"))
        .ok_or_else(|| UnknownTopic(id.to_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_topic_explains() {
        for t in topics() {
            assert!(explain(&t).unwrap().contains("Mitigation:"), "{t}");
        }
        assert!(explain("suci").unwrap().contains("concealed"));
        assert!(explain("R5").unwrap().contains("MAC on the enhanced NAS Security Mode Command"));
        assert!(explain("nope").is_err());
    }
}
