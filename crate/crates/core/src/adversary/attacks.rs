use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::channel::{interpose, AdversaryClass, AirFrame, Capability, FnHooks, HookAction, Observer};
use crate::endpoints::{AcceptancePolicy, Network, SimError, World, WorldBuilder};
use crate::identity::{Guti, Plmn};
use crate::profiles::NetworkProfile;
use crate::proto::{
    Body, Delivery, Generation, IdentifierKind, IdentityKind, Layer, Message, NasMessage, RrcMessage, Trace,
    TraceEvent,
};
use crate::secctx::{select_algorithms, Direction, SecurityCapabilities};

/// Simulator index of the victim UE in every attack world.
pub const TARGET: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackId {
    ImsiCatching,
    ImsiPagingProbe,
    ImeiCatching,
    TmsiLinkability,
    CrntiTracking,
    UeMeasurementReports,
    SecurityCapsBiddingDown,
    SecurityCapsBiddingDownExtended,
    RadioCapsBiddingDown,
    GutiReallocDos,
    GutiReallocTracking,
    GutiRefreshNeutralization,
}

impl AttackId {
    pub const ALL: [AttackId; 12] = [
        Self::ImsiCatching,
        Self::ImsiPagingProbe,
        Self::ImeiCatching,
        Self::TmsiLinkability,
        Self::CrntiTracking,
        Self::UeMeasurementReports,
        Self::SecurityCapsBiddingDown,
        Self::SecurityCapsBiddingDownExtended,
        Self::RadioCapsBiddingDown,
        Self::GutiReallocDos,
        Self::GutiReallocTracking,
        Self::GutiRefreshNeutralization,
    ];

    /// The pre-5G attacks, in matrix row order.
    pub const LEGACY: [AttackId; 8] = [
        Self::ImsiCatching,
        Self::ImsiPagingProbe,
        Self::ImeiCatching,
        Self::TmsiLinkability,
        Self::CrntiTracking,
        Self::UeMeasurementReports,
        Self::SecurityCapsBiddingDown,
        Self::RadioCapsBiddingDown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ImsiCatching => "imsi_catching",
            Self::ImsiPagingProbe => "imsi_paging_probe",
            Self::ImeiCatching => "imei_catching",
            Self::TmsiLinkability => "tmsi_linkability",
            Self::CrntiTracking => "crnti_tracking",
            Self::UeMeasurementReports => "ue_measurement_reports",
            Self::SecurityCapsBiddingDown => "security_caps_bidding_down",
            Self::SecurityCapsBiddingDownExtended => "security_caps_bidding_down_extended",
            Self::RadioCapsBiddingDown => "radio_caps_bidding_down",
            Self::GutiReallocDos => "guti_realloc_dos",
            Self::GutiReallocTracking => "guti_realloc_tracking",
            Self::GutiRefreshNeutralization => "guti_refresh_neutralization",
        }
    }

    /// Capabilities the procedure cannot run without.
    pub fn required(self) -> BTreeSet<Capability> {
        use Capability::*;
        let caps: &[Capability] = match self {
            Self::ImsiCatching | Self::ImeiCatching => &[Observe, InjectAsNetwork],
            Self::ImsiPagingProbe
            | Self::TmsiLinkability
            | Self::CrntiTracking
            | Self::UeMeasurementReports
            | Self::GutiReallocTracking => &[Observe],
            Self::SecurityCapsBiddingDown
            | Self::SecurityCapsBiddingDownExtended
            | Self::RadioCapsBiddingDown
            | Self::GutiReallocDos => &[Observe, ModifyInFlight],
            Self::GutiRefreshNeutralization => &[Observe, Drop],
        };
        caps.iter().copied().collect()
    }

    /// Weakest preset class that has the required capabilities.
    pub fn default_class(self) -> AdversaryClass {
        let req = self.required();
        [AdversaryClass::passive(), AdversaryClass::fake_bs(), AdversaryClass::mitm()]
            .into_iter()
            .find(|c| req.is_subset(&c.capabilities))
            .expect("MiTM has every capability")
    }

    pub fn property(self) -> PrivacyProperty {
        match self {
            Self::ImsiCatching
            | Self::ImsiPagingProbe
            | Self::ImeiCatching
            | Self::SecurityCapsBiddingDown
            | Self::SecurityCapsBiddingDownExtended => PrivacyProperty::IdentityPrivacy,
            Self::UeMeasurementReports => PrivacyProperty::LocationPrivacy,
            _ => PrivacyProperty::Untraceability,
        }
    }
}

impl fmt::Display for AttackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown attack id {0:?}")]
pub struct UnknownAttack(pub String);

impl FromStr for AttackId {
    type Err = UnknownAttack;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| UnknownAttack(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrivacyProperty {
    IdentityPrivacy,
    LocationPrivacy,
    Untraceability,
}

/// Ordered from worst to best, so `max` picks the best result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Vulnerable,
    PartiallyMitigated,
    Mitigated,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackVerdict {
    pub attack: AttackId,
    pub profile: String,
    pub outcome: Outcome,
    /// Trace seq numbers supporting the outcome.
    pub evidence: Vec<u64>,
    pub property_violated: PrivacyProperty,
}

#[derive(Debug, Clone)]
pub struct AttackParams {
    pub policy: AcceptancePolicy,
    /// Adversary to run as; defaults to the attack's weakest sufficient class.
    pub class: Option<AdversaryClass>,
    /// Silent pages sent by the linkability procedure.
    pub epochs: u32,
    /// Simulated seconds between those pages.
    pub epoch_spacing: u64,
    pub bystanders: u32,
}

impl Default for AttackParams {
    fn default() -> Self {
        Self {
            policy: AcceptancePolicy::Permissive,
            class: None,
            epochs: 3,
            epoch_spacing: 24 * 3600,
            bystanders: 2,
        }
    }
}

fn verdict(id: AttackId, profile: &NetworkProfile, evidence: Vec<u64>) -> AttackVerdict {
    let outcome = if evidence.is_empty() {
        Outcome::Mitigated
    } else {
        Outcome::Vulnerable
    };
    AttackVerdict {
        attack: id,
        profile: profile.name.clone(),
        outcome,
        evidence,
        property_violated: id.property(),
    }
}

/// Disruptions of the victim's procedure are part of an attack, not a failure of the run.
fn tolerate<T>(r: Result<T, SimError>) -> Result<(), SimError> {
    match r {
        Err(e @ SimError::Capability(_)) => Err(e),
        Err(e @ SimError::Livelock(_)) => Err(e),
        _ => Ok(()),
    }
}

fn seqs<'a>(it: impl Iterator<Item = &'a TraceEvent>) -> Vec<u64> {
    it.map(|e| e.seq).collect()
}

fn target_events(t: &Trace) -> impl Iterator<Item = &TraceEvent> {
    t.events.iter().filter(|e| e.ue == Some(TARGET))
}

/// Replaces a readable payload; sealed payloads get a flipped byte instead.
fn tamper(frame: &mut AirFrame<'_>, edit: impl FnOnce(&mut Message)) {
    match &mut frame.envelope.body {
        Body::Clear(m) => edit(m),
        Body::Sealed(ct) => {
            if let Some(b) = ct.last_mut() {
                *b ^= 0x01;
            }
        }
    }
}

/// Ciphertext offset, counted from the end, of the last decimal digit of
/// the TMSI in a Configuration Update Command. Everything after that digit
/// is fixed by the message layout, which the attacker knows; the ack flag is
/// learned from earlier exchanges on the same network.
fn cuc_tmsi_digit_from_end(ack_requested: bool) -> usize {
    const MARK: &[u8] = b"\"tmsi5g\":0";
    let plmn = Plmn::new("001", "01").expect("valid");
    let template = Message::Nas(NasMessage::ConfigurationUpdateCommand {
        new_guti: Some(Guti::new(plmn, 0, 0, 0, 0).expect("valid")),
        ack_requested,
    })
    .to_bytes();
    let at = template.windows(MARK.len()).position(|w| w == MARK).expect("layout has a TMSI");
    template.len() - (at + MARK.len() - 1)
}

struct Run<'a> {
    id: AttackId,
    profile: &'a NetworkProfile,
    params: &'a AttackParams,
    seed: u64,
    class: AdversaryClass,
}

impl Run<'_> {
    fn builder(&self) -> WorldBuilder {
        WorldBuilder::new(self.profile.clone(), self.seed)
            .policy(self.params.policy)
            .bystanders(self.params.bystanders)
    }

    fn observed(&self) -> Result<World<Network>, SimError> {
        let ch = interpose(self.class.clone(), Box::new(Observer))?;
        Ok(self.builder().channel(ch).build())
    }

    fn hooked<F>(&self, caps: &[Capability], f: F) -> Result<World<Network>, SimError>
    where
        F: FnMut(&mut AirFrame<'_>) -> HookAction + 'static,
    {
        let ch = interpose(self.class.clone(), Box::new(FnHooks::new(caps.iter().copied(), f)))?;
        Ok(self.builder().channel(ch).build())
    }

    /// Register, go idle, then get silently paged.
    fn register_and_page(&self, w: &mut World<Network>) -> Result<(), SimError> {
        tolerate(w.run_registration(TARGET))?;
        tolerate(w.release_ue(TARGET))?;
        tolerate(w.run_paging_cycle(TARGET))
    }

    fn imsi_or_imei_catching(&self, requested: IdentityKind, kind: IdentifierKind) -> Result<(Vec<u64>, Trace), SimError> {
        let ch = interpose(self.class.clone(), Box::new(Observer))?;
        let mut w = self.builder().channel(ch).build_fake(requested);
        tolerate(w.run_registration(TARGET))?;
        let ev = seqs(target_events(&w.trace).filter(|e| e.direction == Direction::Uplink && e.exposes(kind)));
        Ok((ev, w.trace))
    }

    fn imsi_paging_probe(&self) -> Result<(Vec<u64>, Trace), SimError> {
        let mut w = self.observed()?;
        self.register_and_page(&mut w)?;
        let ev = seqs(
            w.trace
                .of_kind("Paging")
                .filter(|e| e.exposes(IdentifierKind::SUPI)),
        );
        Ok((ev, w.trace))
    }

    fn tmsi_linkability(&self) -> Result<(Vec<u64>, Trace), SimError> {
        let mut w = self.observed()?;
        tolerate(w.run_registration(TARGET))?;
        tolerate(w.release_ue(TARGET))?;
        for _ in 0..self.params.epochs {
            w.advance(self.params.epoch_spacing);
            tolerate(w.run_paging_cycle(TARGET))?;
            tolerate(w.release_ue(TARGET))?;
        }
        Ok((recurring_paging_ids(&w.trace), w.trace))
    }

    fn crnti_tracking(&self) -> Result<(Vec<u64>, Trace), SimError> {
        let mut w = self.observed()?;
        tolerate(w.run_registration(TARGET))?;
        tolerate(w.release_ue(TARGET))?;
        let mut secured = false;
        let mut ev = Vec::new();
        for e in target_events(&w.trace) {
            if e.kind() == "RrcSecurityModeComplete" {
                secured = true;
            } else if secured && is_linkable_rrc(e) {
                ev.push(e.seq);
            }
        }
        Ok((ev, w.trace))
    }

    fn measurement_reports(&self) -> Result<(Vec<u64>, Trace), SimError> {
        let mut w = self.observed()?;
        tolerate(w.run_registration(TARGET))?;
        let ev = seqs(target_events(&w.trace).filter(|e| e.exposes(IdentifierKind::MEAS)));
        Ok((ev, w.trace))
    }

    fn bidding_down(&self, extended: bool) -> Result<(Vec<u64>, Trace), SimError> {
        let mut genuine: Option<SecurityCapabilities> = None;
        let mut w = self.hooked(&[Capability::Observe, Capability::ModifyInFlight], move |f| {
            if f.ue != Some(TARGET) {
                return HookAction::Pass;
            }
            if let Some(Message::Nas(NasMessage::RegistrationRequest { ue_caps, .. })) = f.envelope.clear_message() {
                genuine = Some(ue_caps.clone());
                tamper(f, |m| {
                    if let Message::Nas(NasMessage::RegistrationRequest { ue_caps, .. }) = m {
                        *ue_caps = SecurityCapabilities::null_only();
                    }
                });
            } else if extended && f.direction == Direction::Downlink && f.kind == "SecurityModeCommand" {
                if let Some(caps) = genuine.clone() {
                    tamper(f, |m| {
                        if let Message::Nas(NasMessage::SecurityModeCommand { replayed_caps, .. }) = m {
                            *replayed_caps = caps;
                        }
                    });
                }
            }
            HookAction::Pass
        })?;
        tolerate(w.run_registration(TARGET))?;
        let baseline = select_algorithms(&w.ue(TARGET).cfg.caps, &self.profile.nas_preference()).ok();
        Ok((downgraded_smc(&w.trace, baseline), w.trace))
    }

    fn radio_caps_bidding_down(&self) -> Result<(Vec<u64>, Trace), SimError> {
        let mut w = self.hooked(&[Capability::Observe, Capability::ModifyInFlight], |f| {
            if f.ue == Some(TARGET) && f.kind == "UeCapabilityInformation" {
                tamper(f, |m| {
                    if let Message::Rrc(RrcMessage::UeCapabilityInformation { radio_caps }) = m {
                        radio_caps.supported_generations.remove(&Generation::G5);
                    }
                });
            }
            HookAction::Pass
        })?;
        tolerate(w.run_registration(TARGET))?;
        let supi = w.ue(TARGET).cfg.supi.clone();
        let accepted = w
            .network
            .record(&supi)
            .and_then(|r| r.radio_caps.as_ref())
            .is_some_and(|c| !c.supported_generations.contains(&Generation::G5));
        let ev = if accepted {
            seqs(
                w.trace
                    .of_kind("UeCapabilityInformation")
                    .filter(|e| e.delivery == Delivery::Modified),
            )
        } else {
            Vec::new()
        };
        Ok((ev, w.trace))
    }

    fn guti_realloc_dos(&self) -> Result<(Vec<u64>, Trace), SimError> {
        let from_end = cuc_tmsi_digit_from_end(self.profile.config_update_ack);
        let mut w = self.hooked(&[Capability::Observe, Capability::ModifyInFlight], move |f| {
            if f.ue != Some(TARGET) || f.kind != "ConfigurationUpdateCommand" {
                return HookAction::Pass;
            }
            match &mut f.envelope.body {
                Body::Clear(Message::Nas(NasMessage::ConfigurationUpdateCommand { new_guti: Some(g), .. })) => {
                    *g = g.with_tmsi(g.tmsi5g() ^ 0x0000_0101);
                }
                Body::Clear(_) => {}
                // Counter-mode ciphering is malleable: flipping the low bit of a
                // digit's ciphertext turns it into a neighbouring digit.
                Body::Sealed(ct) => {
                    if let Some(i) = ct.len().checked_sub(from_end) {
                        ct[i] ^= 0x01;
                    }
                }
            }
            HookAction::Pass
        })?;
        self.register_and_page(&mut w)?;
        tolerate(w.release_ue(TARGET))?;
        tolerate(w.run_service_request(TARGET))?;
        let desynced = w
            .ue(TARGET)
            .stored_guti
            .as_ref()
            .is_some_and(|g| !w.network.knows_guti(g));
        let mut ev = Vec::new();
        if desynced {
            ev.extend(seqs(
                w.trace
                    .of_kind("ConfigurationUpdateCommand")
                    .filter(|e| e.delivery == Delivery::Modified),
            ));
            ev.extend(seqs(w.trace.of_kind("ServiceReject")));
        }
        Ok((ev, w.trace))
    }

    fn guti_realloc_tracking(&self) -> Result<(Vec<u64>, Trace), SimError> {
        let mut w = self.observed()?;
        self.register_and_page(&mut w)?;
        let leaks = seqs(
            target_events(&w.trace)
                .filter(|e| e.kind() == "ConfigurationUpdateCommand" && e.exposes(IdentifierKind::GUTI)),
        );
        let mut ev = Vec::new();
        if !leaks.is_empty() {
            ev.extend(seqs(w.trace.of_kind("Paging")));
            ev.extend(leaks);
        }
        Ok((ev, w.trace))
    }

    fn guti_refresh_neutralization(&self) -> Result<(Vec<u64>, Trace), SimError> {
        let mut w = self.hooked(&[Capability::Observe, Capability::Drop], |f| {
            if f.ue == Some(TARGET) && f.kind == "ConfigurationUpdateCommand" {
                HookAction::Drop
            } else {
                HookAction::Pass
            }
        })?;
        self.register_and_page(&mut w)?;
        let ev = seqs(w.trace.of_kind("ConfigurationUpdateCommand").filter(|e| is_silent_drop(e)));
        Ok((ev, w.trace))
    }

    fn execute(&self) -> Result<(AttackVerdict, Trace), SimError> {
        let (ev, trace) = match self.id {
            AttackId::ImsiCatching => self.imsi_or_imei_catching(IdentityKind::IMSI, IdentifierKind::SUPI)?,
            AttackId::ImeiCatching => self.imsi_or_imei_catching(IdentityKind::IMEI, IdentifierKind::PEI)?,
            AttackId::ImsiPagingProbe => self.imsi_paging_probe()?,
            AttackId::TmsiLinkability => self.tmsi_linkability()?,
            AttackId::CrntiTracking => self.crnti_tracking()?,
            AttackId::UeMeasurementReports => self.measurement_reports()?,
            AttackId::SecurityCapsBiddingDown => return self.graded_bidding_down(),
            AttackId::SecurityCapsBiddingDownExtended => self.bidding_down(true)?,
            AttackId::RadioCapsBiddingDown => self.radio_caps_bidding_down()?,
            AttackId::GutiReallocDos => self.guti_realloc_dos()?,
            AttackId::GutiReallocTracking => self.guti_realloc_tracking()?,
            AttackId::GutiRefreshNeutralization => self.guti_refresh_neutralization()?,
        };
        Ok((verdict(self.id, self.profile, ev), trace))
    }

    /// Runs the original tampering, then the variant that also rewrites the
    /// replayed capabilities. Replay checking alone stopping only the first
    /// grades as partial mitigation.
    fn graded_bidding_down(&self) -> Result<(AttackVerdict, Trace), SimError> {
        let (orig, mut trace) = self.bidding_down(false)?;
        let (ext, ext_trace) = self.bidding_down(true)?;
        let offset = trace.next_seq();
        trace.append(ext_trace);
        let ext: Vec<u64> = ext.into_iter().map(|s| s + offset).collect();
        let (outcome, evidence) = match (orig.is_empty(), ext.is_empty()) {
            (false, _) => (Outcome::Vulnerable, orig),
            (true, false) => (Outcome::PartiallyMitigated, ext),
            (true, true) => (Outcome::Mitigated, Vec::new()),
        };
        let v = AttackVerdict {
            outcome,
            evidence,
            ..verdict(self.id, self.profile, Vec::new())
        };
        Ok((v, trace))
    }
}

fn recurring_paging_ids(trace: &Trace) -> Vec<u64> {
    let mut seen: BTreeMap<(IdentifierKind, &str), Vec<u64>> = BTreeMap::new();
    for e in trace.of_kind("Paging") {
        for kind in [IdentifierKind::STMSI, IdentifierKind::SUPI] {
            for v in e.exposed_values(kind) {
                seen.entry((kind, v)).or_default().push(e.seq);
            }
        }
    }
    let mut ev: Vec<u64> = seen.into_values().filter(|s| s.len() >= 2).flatten().collect();
    ev.sort_unstable();
    ev
}

/// RRC traffic whose content a passive observer can tie to the header C-RNTI.
fn is_linkable_rrc(e: &TraceEvent) -> bool {
    e.envelope.layer == Layer::RRC && !e.envelope.effectively_ciphered() && e.exposes(IdentifierKind::CRNTI)
}

/// A NAS SMC selecting something other than the untampered negotiation,
/// which the UE then completed.
fn downgraded_smc(trace: &Trace, baseline: Option<crate::secctx::AlgorithmPair>) -> Vec<u64> {
    let nas: Vec<&TraceEvent> = target_events(trace)
        .filter(|e| e.envelope.layer == Layer::NAS && e.arrived())
        .collect();
    let mut ev = Vec::new();
    for (i, e) in nas.iter().enumerate() {
        let Message::Nas(NasMessage::SecurityModeCommand { selected, .. }) = &e.message else {
            continue;
        };
        if Some(*selected) == baseline {
            continue;
        }
        let completed = nas[i + 1..]
            .iter()
            .find(|n| n.direction == Direction::Uplink)
            .filter(|n| n.kind() == "SecurityModeComplete");
        if let Some(c) = completed {
            ev.extend(
                target_events(trace)
                    .filter(|r| r.kind() == "RegistrationRequest" && r.delivery == Delivery::Modified)
                    .map(|r| r.seq),
            );
            ev.push(e.seq);
            ev.push(c.seq);
        }
    }
    ev.sort_unstable();
    ev.dedup();
    ev
}

fn is_silent_drop(e: &TraceEvent) -> bool {
    e.delivery == Delivery::Dropped
        && matches!(
            e.message,
            Message::Nas(NasMessage::ConfigurationUpdateCommand {
                ack_requested: false,
                ..
            })
        )
}

/// Executes one attack procedure and judges the resulting trace.
///
/// An adversary lacking the capabilities the procedure needs cannot mount it:
/// the result is `Mitigated` with an empty trace.
pub fn run_attack(
    id: AttackId,
    profile: &NetworkProfile,
    params: &AttackParams,
    seed: u64,
) -> Result<(AttackVerdict, Trace), SimError> {
    let class = params.class.clone().unwrap_or_else(|| id.default_class());
    if !id.required().is_subset(&class.capabilities) {
        return Ok((verdict(id, profile, Vec::new()), Trace::new()));
    }
    Run {
        id,
        profile,
        params,
        seed,
        class,
    }
    .execute()
}

/// Re-checks a verdict's evidence against the trace alone.
///
/// Returns whether every claim holds: a non-`Mitigated` verdict must cite
/// events that, re-read, actually show the violation.
pub fn verify_evidence(v: &AttackVerdict, trace: &Trace) -> bool {
    if v.outcome == Outcome::Mitigated {
        return true;
    }
    let Some(events) = v.evidence.iter().map(|s| trace.get(*s)).collect::<Option<Vec<_>>>() else {
        return false;
    };
    if events.is_empty() {
        return false;
    }
    let any = |p: &dyn Fn(&TraceEvent) -> bool| events.iter().any(|e| p(e));
    match v.attack {
        AttackId::ImsiCatching => any(&|e| e.direction == Direction::Uplink && e.exposes(IdentifierKind::SUPI)),
        AttackId::ImeiCatching => any(&|e| e.direction == Direction::Uplink && e.exposes(IdentifierKind::PEI)),
        AttackId::ImsiPagingProbe => any(&|e| e.kind() == "Paging" && e.exposes(IdentifierKind::SUPI)),
        AttackId::TmsiLinkability => {
            let sub = Trace {
                events: events.into_iter().cloned().collect(),
            };
            !recurring_paging_ids(&sub).is_empty()
        }
        AttackId::CrntiTracking => events.iter().all(|e| is_linkable_rrc(e)),
        AttackId::UeMeasurementReports => events.iter().all(|e| e.exposes(IdentifierKind::MEAS)),
        AttackId::SecurityCapsBiddingDown | AttackId::SecurityCapsBiddingDownExtended => {
            any(&|e| {
                matches!(
                    &e.message,
                    Message::Nas(NasMessage::SecurityModeCommand { selected, .. }) if selected.nia.is_null() || selected.nea.is_null()
                )
            }) && any(&|e| e.kind() == "SecurityModeComplete" && e.arrived())
        }
        AttackId::RadioCapsBiddingDown => any(&|e| {
            e.delivery == Delivery::Modified
                && !e.envelope.integrity_protected
                && matches!(
                    e.envelope.clear_message(),
                    Some(Message::Rrc(RrcMessage::UeCapabilityInformation { radio_caps }))
                        if !radio_caps.supported_generations.contains(&Generation::G5)
                )
        }),
        AttackId::GutiReallocDos => {
            any(&|e| e.kind() == "ConfigurationUpdateCommand" && e.delivery == Delivery::Modified && !e.envelope.integrity_protected)
                && any(&|e| e.kind() == "ServiceReject" && e.arrived())
        }
        AttackId::GutiReallocTracking => {
            any(&|e| e.kind() == "ConfigurationUpdateCommand" && e.exposes(IdentifierKind::GUTI))
        }
        AttackId::GutiRefreshNeutralization => any(&is_silent_drop),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{preset, NetworkProfile};

    fn outcome(id: AttackId, p: &NetworkProfile) -> Outcome {
        let (v, t) = run_attack(id, p, &AttackParams::default(), 11).unwrap();
        assert!(verify_evidence(&v, &t), "{id} on {}: {v:?}", p.name);
        v.outcome
    }

    #[test]
    fn ids_round_trip() {
        for id in AttackId::ALL {
            assert_eq!(id.as_str().parse::<AttackId>().unwrap(), id);
            assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{id}\""));
        }
        assert!("teleport".parse::<AttackId>().is_err());
    }

    #[test]
    fn default_classes() {
        assert_eq!(AttackId::ImsiCatching.default_class(), AdversaryClass::fake_bs());
        assert_eq!(AttackId::CrntiTracking.default_class(), AdversaryClass::passive());
        assert_eq!(AttackId::GutiReallocDos.default_class(), AdversaryClass::mitm());
    }

    #[test]
    fn spot_checks() {
        let nsa = preset("operator-nsa").unwrap();
        let sa_a = preset("operator-sa-a").unwrap();
        let sa_b = preset("operator-sa-b").unwrap();
        let oai = preset("oai").unwrap();
        assert_eq!(outcome(AttackId::ImsiCatching, &nsa), Outcome::Vulnerable);
        assert_eq!(outcome(AttackId::ImsiCatching, &sa_a), Outcome::Mitigated);
        assert_eq!(outcome(AttackId::SecurityCapsBiddingDownExtended, &sa_a), Outcome::Vulnerable);
        assert_eq!(outcome(AttackId::SecurityCapsBiddingDownExtended, &oai), Outcome::Mitigated);
        assert_eq!(outcome(AttackId::GutiReallocTracking, &sa_b), Outcome::Vulnerable);
        assert_eq!(outcome(AttackId::GutiRefreshNeutralization, &sa_b), Outcome::Mitigated);
    }

    #[test]
    fn insufficient_class_cannot_mount() {
        let params = AttackParams {
            class: Some(AdversaryClass::passive()),
            ..AttackParams::default()
        };
        let (v, t) = run_attack(AttackId::ImsiCatching, &preset("operator-nsa").unwrap(), &params, 1).unwrap();
        assert_eq!(v.outcome, Outcome::Mitigated);
        assert!(t.is_empty());
    }

    #[test]
    fn hardened_profile_mitigates_everything() {
        let p = NetworkProfile::hardened();
        for id in AttackId::ALL {
            assert_eq!(outcome(id, &p), Outcome::Mitigated, "{id}");
        }
    }
}
