use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{auth, CellMode, Dest, NetworkSide, Outbound, SimError, Transmission};
use crate::identity::{
    allocate_crnti, deconceal_suci, guti_update_due, s_tmsi_of, Crnti, Guti, GutiEvent, GutiRegistry,
    HomeNetworkKey, Pei, STmsi, Supi,
};
use crate::profiles::NetworkProfile;
use crate::proto::{
    open, protect, protect_command, IdentityKind, Layer, Message, MobileIdentity, NasMessage, PagingIdentity,
    ProtoError, RadioCapabilities, RegistrationType, RrcMessage, SecurityEnvelope,
};
use crate::secctx::{
    derive_context, select_algorithms, Direction, KeyScope, MasterKey, SecurityCapabilities, SecurityContext,
};

/// Retransmission period of the Configuration Update Command.
pub const T3555_SECS: u64 = 6;
/// Retransmissions before the procedure is abandoned.
pub const T3555_MAX_RETRANSMISSIONS: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Purpose {
    Registration(RegistrationType),
    Service { paged: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    AwaitInitial,
    AwaitIdentity,
    AwaitAuth,
    AwaitPei,
    AwaitSmc,
    AwaitRrcSmc,
    AwaitCaps,
    AwaitComplete,
    Connected,
}

#[derive(Debug, Clone)]
struct Link {
    crnti: Crnti,
    supi: Option<Supi>,
    stage: Stage,
    purpose: Purpose,
    rrc_ctx: Option<SecurityContext>,
    caps: Option<SecurityCapabilities>,
    nonce: Vec<u8>,
    pending_guti: Option<Guti>,
}

#[derive(Debug, Clone)]
struct PendingCuc {
    ue: u32,
    new: Guti,
    old: Option<Guti>,
    expiries: u32,
    deadline: u64,
}

/// Core-side state for one subscriber.
#[derive(Debug, Clone)]
pub struct UeRecord {
    pub supi: Supi,
    pub guti: Option<Guti>,
    pub guti_assigned_at: u64,
    pub nas_ctx: Option<SecurityContext>,
    pub ue_caps: Option<SecurityCapabilities>,
    pub radio_caps: Option<RadioCapabilities>,
    pub pei: Option<Pei>,
    /// Paged and not yet answered.
    pub paged: bool,
    /// Every GUTI handed out, in order.
    pub assigned: Vec<Guti>,
    master: Option<MasterKey>,
    pending_cuc: Option<PendingCuc>,
}

impl UeRecord {
    fn new(supi: Supi) -> Self {
        Self {
            supi,
            guti: None,
            guti_assigned_at: 0,
            nas_ctx: None,
            ue_caps: None,
            radio_caps: None,
            pei: None,
            paged: false,
            assigned: Vec::new(),
            master: None,
            pending_cuc: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NetworkStats {
    pub integrity_failures: u32,
    pub smc_rejects: u32,
    pub registration_rejects: u32,
    pub service_rejects: u32,
    pub config_update_retransmissions: u32,
    /// Reallocations abandoned because the UE never confirmed them.
    pub config_update_failures: u32,
}

enum Rejected {
    Ignore,
    Integrity,
}

#[derive(Debug)]
pub struct Network {
    pub profile: NetworkProfile,
    pub hn_key: HomeNetworkKey,
    pub registry: GutiRegistry,
    pub records: BTreeMap<Supi, UeRecord>,
    pub stats: NetworkStats,
    subscribers: BTreeMap<Supi, [u8; 32]>,
    guti_index: BTreeMap<Guti, Supi>,
    links: BTreeMap<u32, Link>,
    rng: ChaCha8Rng,
}

impl Network {
    pub fn new(profile: NetworkProfile, hn_key: HomeNetworkKey, registry: GutiRegistry, seed: u64) -> Self {
        Self {
            profile,
            hn_key,
            registry,
            records: BTreeMap::new(),
            stats: NetworkStats::default(),
            subscribers: BTreeMap::new(),
            guti_index: BTreeMap::new(),
            links: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn add_subscriber(&mut self, supi: Supi, k: [u8; 32]) {
        self.subscribers.insert(supi, k);
    }

    pub fn record(&self, supi: &Supi) -> Option<&UeRecord> {
        self.records.get(supi)
    }

    pub fn is_connected(&self, ue: u32) -> bool {
        self.links.contains_key(&ue)
    }

    /// Whether a GUTI currently resolves to a subscriber.
    pub fn knows_guti(&self, guti: &Guti) -> bool {
        self.guti_index.contains_key(guti)
    }

    fn supi_for_stmsi(&self, s: &STmsi) -> Option<Supi> {
        self.guti_index
            .iter()
            .find(|(g, _)| s_tmsi_of(g) == *s)
            .map(|(_, supi)| supi.clone())
    }

    fn crnti(&self, ue: u32) -> Option<Crnti> {
        self.links.get(&ue).map(|l| l.crnti)
    }

    fn clear(&self, ue: u32, msg: impl Into<Message>) -> Outbound {
        let message = msg.into();
        Outbound {
            dest: Dest::Ue(ue),
            tx: Transmission {
                envelope: SecurityEnvelope::clear(message.clone(), self.crnti(ue)),
                message,
            },
        }
    }

    /// NAS downlink under the subscriber's context, or in clear without one.
    fn nas(&mut self, ue: u32, supi: &Supi, msg: NasMessage, integrity: bool, cipher: bool) -> Outbound {
        let crnti = self.crnti(ue);
        let message = Message::Nas(msg);
        let ctx = self.records.get_mut(supi).and_then(|r| r.nas_ctx.as_mut());
        let has_ctx = ctx.is_some();
        let envelope = protect(
            message.clone(),
            ctx,
            Direction::Downlink,
            integrity && has_ctx,
            cipher && has_ctx,
            crnti,
        )
        .expect("context presence checked");
        Outbound {
            dest: Dest::Ue(ue),
            tx: Transmission { envelope, message },
        }
    }

    fn rrc(&mut self, ue: u32, msg: RrcMessage, cipher: bool) -> Outbound {
        let message = Message::Rrc(msg);
        let link = self.links.get_mut(&ue).expect("RRC downlink needs a link");
        let crnti = Some(link.crnti);
        let has_ctx = link.rrc_ctx.is_some();
        let envelope = protect(
            message.clone(),
            link.rrc_ctx.as_mut(),
            Direction::Downlink,
            has_ctx,
            cipher && has_ctx,
            crnti,
        )
        .expect("context presence checked");
        Outbound {
            dest: Dest::Ue(ue),
            tx: Transmission { envelope, message },
        }
    }

    fn link_supi(&self, ue: u32) -> Option<Supi> {
        self.links.get(&ue).and_then(|l| l.supi.clone())
    }

    fn open_uplink(&mut self, ue: u32, env: &SecurityEnvelope) -> Result<Message, Rejected> {
        let plain_service_request = matches!(
            env.clear_message(),
            Some(Message::Nas(NasMessage::ServiceRequest { .. }))
        );
        match env.layer {
            Layer::PAGING => Err(Rejected::Ignore),
            Layer::RRC => {
                let ctx = self.links.get_mut(&ue).and_then(|l| l.rrc_ctx.as_mut());
                open(env, ctx, Direction::Uplink).map_err(|e| match e {
                    ProtoError::IntegrityFailure => Rejected::Integrity,
                    _ => Rejected::Ignore,
                })
            }
            Layer::NAS if plain_service_request => {
                // Resolved and verified by the service-request handler.
                Ok(env.clear_message().cloned().expect("checked clear"))
            }
            Layer::NAS => {
                let supi = self.link_supi(ue);
                let ctx = supi
                    .as_ref()
                    .and_then(|s| self.records.get_mut(s))
                    .and_then(|r| r.nas_ctx.as_mut());
                open(env, ctx, Direction::Uplink).map_err(|e| match e {
                    ProtoError::IntegrityFailure => Rejected::Integrity,
                    _ => Rejected::Ignore,
                })
            }
        }
    }

    fn drop_link(&mut self, ue: u32) -> Option<Link> {
        let link = self.links.remove(&ue)?;
        if let Some(supi) = &link.supi {
            if !self.profile.context_survives_idle {
                if let Some(r) = self.records.get_mut(supi) {
                    r.nas_ctx = None;
                    r.master = None;
                }
            }
            let current = self.records.get(supi).and_then(|r| r.guti.as_ref());
            if let Some(g) = link.pending_guti.as_ref().filter(|g| current != Some(*g)) {
                self.registry.release(g);
                self.guti_index.remove(g);
            }
        }
        Some(link)
    }

    /// Network-initiated RRC release (e.g. end of activity).
    pub fn release(&mut self, ue: u32) -> Vec<Outbound> {
        if !self.links.contains_key(&ue) {
            return Vec::new();
        }
        let out = self.rrc(ue, RrcMessage::RrcRelease {}, true);
        self.drop_link(ue);
        vec![out]
    }

    fn abort(&mut self, ue: u32, reject: NasMessage) -> Vec<Outbound> {
        let mut out = vec![self.clear(ue, reject)];
        out.push(self.clear(ue, RrcMessage::RrcRelease {}));
        self.drop_link(ue);
        out
    }

    fn reject_registration(&mut self, ue: u32, cause: &str) -> Vec<Outbound> {
        self.stats.registration_rejects += 1;
        self.abort(ue, NasMessage::RegistrationReject { cause: cause.into() })
    }

    fn reject_service(&mut self, ue: u32, cause: &str) -> Vec<Outbound> {
        self.stats.service_rejects += 1;
        self.abort(ue, NasMessage::ServiceReject { cause: cause.into() })
    }

    fn reject(&mut self, ue: u32, cause: &str) -> Vec<Outbound> {
        match self.links.get(&ue).map(|l| l.purpose) {
            Some(Purpose::Service { .. }) => self.reject_service(ue, cause),
            _ => self.reject_registration(ue, cause),
        }
    }

    /// Pages a registered subscriber on every cell.
    pub fn page(&mut self, supi: &Supi) -> Result<Vec<Outbound>, SimError> {
        let paging_with_supi = self.profile.paging_with_supi;
        let record = self.records.get_mut(supi).ok_or(SimError::UnknownTarget(u32::MAX))?;
        let guti = record.guti.as_ref().ok_or(SimError::UnknownTarget(u32::MAX))?;
        let id = if paging_with_supi {
            PagingIdentity::Supi(supi.clone())
        } else {
            PagingIdentity::STmsi(s_tmsi_of(guti))
        };
        record.paged = true;
        let message = Message::Rrc(RrcMessage::Paging { id });
        Ok(vec![Outbound {
            dest: Dest::Broadcast,
            tx: Transmission {
                envelope: SecurityEnvelope::clear(message.clone(), None),
                message,
            },
        }])
    }

    fn on_setup_request(&mut self, ue: u32) -> Vec<Outbound> {
        self.drop_link(ue);
        let in_use = self.links.values().map(|l| l.crnti).collect();
        let Some(crnti) = allocate_crnti(&in_use, &mut self.rng) else {
            return Vec::new();
        };
        self.links.insert(
            ue,
            Link {
                crnti,
                supi: None,
                stage: Stage::AwaitInitial,
                purpose: Purpose::Registration(RegistrationType::Initial),
                rrc_ctx: None,
                caps: None,
                nonce: Vec::new(),
                pending_guti: None,
            },
        );
        vec![self.clear(ue, RrcMessage::RrcSetup { crnti })]
    }

    fn on_registration_request(
        &mut self,
        ue: u32,
        identity: MobileIdentity,
        caps: SecurityCapabilities,
        reg_type: RegistrationType,
    ) -> Vec<Outbound> {
        let link = self.links.get_mut(&ue).expect("caller checked link");
        link.purpose = Purpose::Registration(reg_type);
        link.caps = Some(caps);
        match identity {
            MobileIdentity::Guti(g) => match self.guti_index.get(&g).cloned() {
                Some(supi) => self.resolved(ue, supi),
                None => self.request_identity(ue),
            },
            MobileIdentity::Suci(suci) => match deconceal_suci(&suci, &self.hn_key) {
                Ok(supi) => self.resolved(ue, supi),
                Err(_) => self.reject_registration(ue, "SUCI could not be resolved"),
            },
            MobileIdentity::Supi(supi) => self.resolved(ue, supi),
            MobileIdentity::Pei(_) => self.reject_registration(ue, "invalid identity"),
        }
    }

    fn request_identity(&mut self, ue: u32) -> Vec<Outbound> {
        self.links.get_mut(&ue).expect("caller checked link").stage = Stage::AwaitIdentity;
        let requested = if self.profile.supports_suci {
            IdentityKind::SUCI
        } else {
            IdentityKind::IMSI
        };
        vec![self.clear(ue, NasMessage::IdentityRequest { requested })]
    }

    fn resolved(&mut self, ue: u32, supi: Supi) -> Vec<Outbound> {
        if !self.subscribers.contains_key(&supi) {
            return self.reject_registration(ue, "unknown subscriber");
        }
        let link = self.links.get_mut(&ue).expect("caller checked link");
        link.supi = Some(supi.clone());
        let caps = link.caps.clone();
        self.records
            .entry(supi.clone())
            .or_insert_with(|| UeRecord::new(supi))
            .ue_caps = caps;
        self.start_auth(ue)
    }

    fn start_auth(&mut self, ue: u32) -> Vec<Outbound> {
        let mut nonce = vec![0u8; 16];
        self.rng.fill_bytes(&mut nonce);
        let link = self.links.get_mut(&ue).expect("caller checked link");
        link.stage = Stage::AwaitAuth;
        link.nonce = nonce.clone();
        vec![self.clear(ue, NasMessage::AuthChallenge { nonce })]
    }

    fn on_auth_response(&mut self, ue: u32, proof: Vec<u8>) -> Vec<Outbound> {
        let link = &self.links[&ue];
        let supi = link.supi.clone().expect("auth follows identity resolution");
        let k = self.subscribers[&supi];
        if auth::proof(&k, &link.nonce) != proof {
            return self.reject(ue, "authentication failure");
        }
        let master = auth::master_key(&k, &link.nonce);
        let purpose = link.purpose;
        self.records.get_mut(&supi).expect("resolved subscriber").master = Some(master);
        if !self.profile.pei_only_in_secure && matches!(purpose, Purpose::Registration(_)) {
            self.links.get_mut(&ue).expect("checked").stage = Stage::AwaitPei;
            return vec![self.clear(
                ue,
                NasMessage::IdentityRequest {
                    requested: IdentityKind::IMEI,
                },
            )];
        }
        self.start_nas_smc(ue)
    }

    fn start_nas_smc(&mut self, ue: u32) -> Vec<Outbound> {
        let link = &self.links[&ue];
        let supi = link.supi.clone().expect("SMC follows identity resolution");
        let registration = matches!(link.purpose, Purpose::Registration(_));
        let crnti = Some(link.crnti);
        let record = &self.records[&supi];
        let Some(caps) = record.ue_caps.clone() else {
            return self.reject(ue, "missing UE security capabilities");
        };
        let Ok(selected) = select_algorithms(&caps, &self.profile.nas_preference()) else {
            return self.reject(ue, "UE security capabilities mismatch");
        };
        let master = record.master.expect("SMC follows authentication");
        let mut ctx = derive_context(&master, KeyScope::Nas, selected);
        let message = Message::Nas(NasMessage::SecurityModeCommand {
            replayed_caps: caps,
            selected,
            request_pei: self.profile.pei_only_in_secure && registration,
        });
        let envelope = if self.profile.include_mac_in_smc {
            protect_command(message.clone(), &mut ctx, Direction::Downlink, crnti).expect("context present")
        } else {
            SecurityEnvelope::clear(message.clone(), crnti)
        };
        self.records.get_mut(&supi).expect("checked").nas_ctx = Some(ctx);
        self.links.get_mut(&ue).expect("checked").stage = Stage::AwaitSmc;
        vec![Outbound {
            dest: Dest::Ue(ue),
            tx: Transmission { envelope, message },
        }]
    }

    fn start_rrc_smc(&mut self, ue: u32) -> Vec<Outbound> {
        let supi = self.link_supi(ue).expect("RRC security follows NAS security");
        let record = &self.records[&supi];
        let caps = record.ue_caps.clone().expect("checked at NAS SMC");
        let Ok(selected) = select_algorithms(&caps, &self.profile.rrc_preference()) else {
            return self.reject(ue, "no common RRC algorithm");
        };
        let Some(master) = record.master else {
            return self.reject(ue, "security context lost");
        };
        let link = self.links.get_mut(&ue).expect("checked");
        link.rrc_ctx = Some(derive_context(&master, KeyScope::Rrc, selected));
        link.stage = Stage::AwaitRrcSmc;
        vec![self.rrc(ue, RrcMessage::RrcSecurityModeCommand { selected }, false)]
    }

    fn after_nas_security(&mut self, ue: u32) -> Vec<Outbound> {
        let link = &self.links[&ue];
        match link.purpose {
            Purpose::Registration(_) if self.profile.radio_caps_after_rrc_security => self.start_rrc_smc(ue),
            Purpose::Registration(_) => {
                self.links.get_mut(&ue).expect("checked").stage = Stage::AwaitCaps;
                vec![self.rrc(ue, RrcMessage::UeCapabilityEnquiry {}, true)]
            }
            Purpose::Service { .. } => {
                let supi = link.supi.clone().expect("service resolved subscriber");
                let mut out = vec![self.nas(ue, &supi, NasMessage::ServiceAccept {}, true, true)];
                out.extend(self.start_rrc_smc(ue));
                out
            }
        }
    }

    fn timer_refresh_due(&self, record: &UeRecord, now: u64) -> bool {
        guti_update_due(
            GutiEvent::TimerExpiry {
                elapsed: now.saturating_sub(record.guti_assigned_at),
            },
            &self.profile.guti_policy,
        )
    }

    fn send_registration_accept(&mut self, ue: u32, now: u64) -> Vec<Outbound> {
        let link = &self.links[&ue];
        let supi = link.supi.clone().expect("accept follows identity resolution");
        let event = match link.purpose {
            Purpose::Registration(RegistrationType::Mobility) => GutiEvent::MobilityRegistration,
            Purpose::Registration(RegistrationType::Periodic) => GutiEvent::PeriodicRegistration,
            _ => GutiEvent::InitialRegistration,
        };
        let record = &self.records[&supi];
        let due = record.guti.is_none()
            || guti_update_due(event, &self.profile.guti_policy)
            || self.timer_refresh_due(record, now);
        let mut assigned = None;
        if due {
            let fresh = match &record.guti {
                Some(old) => self.registry.reallocate(old, &mut self.rng),
                None => self.registry.allocate(&mut self.rng),
            };
            let Ok(g) = fresh else {
                return self.reject_registration(ue, "no 5G-GUTI available");
            };
            self.guti_index.insert(g.clone(), supi.clone());
            self.links.get_mut(&ue).expect("checked").pending_guti = Some(g.clone());
            assigned = Some(g);
        }
        self.links.get_mut(&ue).expect("checked").stage = Stage::AwaitComplete;
        vec![self.nas(ue, &supi, NasMessage::RegistrationAccept { guti: assigned }, true, true)]
    }

    fn install_guti(&mut self, supi: &Supi, new: Guti, now: u64, release_old: bool) {
        let record = self.records.get_mut(supi).expect("known subscriber");
        let old = record.guti.replace(new.clone());
        record.guti_assigned_at = now;
        if record.assigned.last() != Some(&new) {
            record.assigned.push(new.clone());
        }
        if let Some(old) = old.filter(|o| release_old && *o != new) {
            self.registry.release(&old);
            self.guti_index.remove(&old);
        }
    }

    fn on_registration_complete(&mut self, ue: u32, now: u64) -> Vec<Outbound> {
        let link = self.links.get_mut(&ue).expect("checked");
        let supi = link.supi.clone().expect("resolved");
        if let Some(g) = link.pending_guti.take() {
            self.install_guti(&supi, g, now, true);
        }
        self.links.get_mut(&ue).expect("checked").stage = Stage::Connected;
        vec![self.rrc(ue, RrcMessage::RrcReconfiguration { up_security: true }, true)]
    }

    fn on_service_request(&mut self, ue: u32, env: &SecurityEnvelope, stmsi: STmsi) -> Vec<Outbound> {
        let Some(supi) = self.supi_for_stmsi(&stmsi) else {
            return self.reject_service(ue, "UE identity cannot be derived by the network");
        };
        let record = self.records.get_mut(&supi).expect("indexed subscriber");
        let paged = std::mem::take(&mut record.paged);
        let caps = record.ue_caps.clone();
        let verified = match record.nas_ctx.as_mut() {
            Some(ctx) if env.integrity_protected => open(env, Some(ctx), Direction::Uplink).is_ok(),
            Some(_) => false,
            None => true,
        };
        let has_ctx = record.nas_ctx.is_some();
        let link = self.links.get_mut(&ue).expect("caller checked link");
        link.supi = Some(supi.clone());
        link.purpose = Purpose::Service { paged };
        link.caps = caps;
        if !verified {
            self.stats.integrity_failures += 1;
            return self.reject_service(ue, "integrity check failed");
        }
        if !has_ctx {
            // Keys were discarded at release: authenticate and rekey first.
            return self.start_auth(ue);
        }
        self.after_nas_security(ue)
    }

    fn maybe_reallocate(&mut self, ue: u32, supi: &Supi, paged: bool, now: u64) -> Vec<Outbound> {
        let record = &self.records[supi];
        let Some(old) = record.guti.clone() else {
            return Vec::new();
        };
        let due = (paged
            && guti_update_due(GutiEvent::ServiceRequestAfterPaging, &self.profile.guti_policy))
            || self.timer_refresh_due(record, now);
        if !due || record.pending_cuc.is_some() {
            return Vec::new();
        }
        let Ok(new) = self.registry.reallocate(&old, &mut self.rng) else {
            return Vec::new();
        };
        self.guti_index.insert(new.clone(), supi.clone());
        let out = self.send_cuc(ue, supi, &new);
        if self.profile.config_update_ack {
            self.records.get_mut(supi).expect("checked").pending_cuc = Some(PendingCuc {
                ue,
                new,
                old: Some(old),
                expiries: 0,
                deadline: now + T3555_SECS,
            });
        } else {
            // Without an acknowledgement both values stay valid.
            self.install_guti(supi, new, now, false);
        }
        vec![out]
    }

    fn send_cuc(&mut self, ue: u32, supi: &Supi, new: &Guti) -> Outbound {
        let p = self.profile.protect_config_update;
        let msg = NasMessage::ConfigurationUpdateCommand {
            new_guti: Some(new.clone()),
            ack_requested: self.profile.config_update_ack,
        };
        self.nas(ue, supi, msg, p.integrity, p.cipher)
    }

    fn on_config_update_complete(&mut self, ue: u32, now: u64) {
        let Some(supi) = self.link_supi(ue) else {
            return;
        };
        let record = self.records.get_mut(&supi).expect("resolved");
        let Some(pending) = record.pending_cuc.take() else {
            return;
        };
        let _ = pending.old;
        self.install_guti(&supi, pending.new, now, true);
    }
}

impl NetworkSide for Network {
    fn cell_mode(&self) -> CellMode {
        CellMode::of(&self.profile)
    }

    fn receive(&mut self, ue: u32, env: &SecurityEnvelope, now: u64) -> Vec<Outbound> {
        if let Some(Message::Rrc(RrcMessage::RrcSetupRequest {})) = env.clear_message() {
            return self.on_setup_request(ue);
        }
        if !self.links.contains_key(&ue) {
            return Vec::new();
        }
        let msg = match self.open_uplink(ue, env) {
            Ok(m) => m,
            Err(Rejected::Ignore) => return Vec::new(),
            Err(Rejected::Integrity) => {
                self.stats.integrity_failures += 1;
                if env.layer == Layer::RRC {
                    return self.release(ue);
                }
                return Vec::new();
            }
        };
        let stage = self.links[&ue].stage;
        match (stage, msg) {
            (
                Stage::AwaitInitial,
                Message::Nas(NasMessage::RegistrationRequest {
                    identity,
                    ue_caps,
                    reg_type,
                }),
            ) => self.on_registration_request(ue, identity, ue_caps, reg_type),
            (Stage::AwaitInitial, Message::Nas(NasMessage::ServiceRequest { stmsi })) => {
                self.on_service_request(ue, env, stmsi)
            }
            (Stage::AwaitIdentity, Message::Nas(NasMessage::IdentityResponse { identity })) => match identity {
                MobileIdentity::Supi(supi) => self.resolved(ue, supi),
                MobileIdentity::Suci(suci) => match deconceal_suci(&suci, &self.hn_key) {
                    Ok(supi) => self.resolved(ue, supi),
                    Err(_) => self.reject_registration(ue, "SUCI could not be resolved"),
                },
                _ => self.reject_registration(ue, "identity type mismatch"),
            },
            (Stage::AwaitAuth, Message::Nas(NasMessage::AuthResponse { proof })) => self.on_auth_response(ue, proof),
            (Stage::AwaitPei, Message::Nas(NasMessage::IdentityResponse { identity })) => {
                if let (MobileIdentity::Pei(pei), Some(supi)) = (identity, self.link_supi(ue)) {
                    self.records.get_mut(&supi).expect("resolved").pei = Some(pei);
                }
                self.start_nas_smc(ue)
            }
            (Stage::AwaitSmc, Message::Nas(NasMessage::SecurityModeComplete { pei })) => {
                if let (Some(pei), Some(supi)) = (pei, self.link_supi(ue)) {
                    self.records.get_mut(&supi).expect("resolved").pei = Some(pei);
                }
                self.after_nas_security(ue)
            }
            (Stage::AwaitSmc, Message::Nas(NasMessage::SecurityModeReject { .. })) => {
                self.stats.smc_rejects += 1;
                if let Some(supi) = self.link_supi(ue) {
                    self.records.get_mut(&supi).expect("resolved").nas_ctx = None;
                }
                let out = vec![self.clear(ue, RrcMessage::RrcRelease {})];
                self.drop_link(ue);
                out
            }
            (Stage::AwaitRrcSmc, Message::Rrc(RrcMessage::RrcSecurityModeComplete {})) => {
                let link = &self.links[&ue];
                match link.purpose {
                    Purpose::Registration(_) if self.profile.radio_caps_after_rrc_security => {
                        self.links.get_mut(&ue).expect("checked").stage = Stage::AwaitCaps;
                        vec![self.rrc(ue, RrcMessage::UeCapabilityEnquiry {}, true)]
                    }
                    Purpose::Registration(_) => self.send_registration_accept(ue, now),
                    Purpose::Service { paged } => {
                        let supi = link.supi.clone().expect("resolved");
                        self.links.get_mut(&ue).expect("checked").stage = Stage::Connected;
                        let mut out = vec![self.rrc(ue, RrcMessage::RrcReconfiguration { up_security: true }, true)];
                        out.extend(self.maybe_reallocate(ue, &supi, paged, now));
                        out
                    }
                }
            }
            (Stage::AwaitCaps, Message::Rrc(RrcMessage::UeCapabilityInformation { radio_caps })) => {
                if let Some(supi) = self.link_supi(ue) {
                    self.records.get_mut(&supi).expect("resolved").radio_caps = Some(radio_caps);
                }
                if self.profile.radio_caps_after_rrc_security {
                    self.send_registration_accept(ue, now)
                } else {
                    self.start_rrc_smc(ue)
                }
            }
            (Stage::AwaitComplete, Message::Nas(NasMessage::RegistrationComplete {})) => {
                self.on_registration_complete(ue, now)
            }
            (_, Message::Nas(NasMessage::ConfigurationUpdateComplete {})) => {
                self.on_config_update_complete(ue, now);
                Vec::new()
            }
            _ => Vec::new(),
        }
    }

    fn next_timer(&self) -> Option<u64> {
        self.records
            .values()
            .filter_map(|r| r.pending_cuc.as_ref().map(|p| p.deadline))
            .min()
    }

    fn fire_timers(&mut self, now: u64) -> Vec<Outbound> {
        let due: Vec<Supi> = self
            .records
            .iter()
            .filter(|(_, r)| r.pending_cuc.as_ref().is_some_and(|p| p.deadline <= now))
            .map(|(s, _)| s.clone())
            .collect();
        let mut out = Vec::new();
        for supi in due {
            let record = self.records.get_mut(&supi).expect("listed above");
            let pending = record.pending_cuc.as_mut().expect("filtered");
            pending.expiries += 1;
            let (ue, new, expiries) = (pending.ue, pending.new.clone(), pending.expiries);
            if expiries > T3555_MAX_RETRANSMISSIONS || !self.links.contains_key(&ue) {
                record.pending_cuc = None;
                // A sticky allocator may have re-issued the value still in use.
                if record.guti.as_ref() != Some(&new) {
                    self.registry.release(&new);
                    self.guti_index.remove(&new);
                }
                self.stats.config_update_failures += 1;
                continue;
            }
            pending.deadline = now + T3555_SECS;
            self.stats.config_update_retransmissions += 1;
            out.push(self.send_cuc(ue, &supi, &new));
        }
        out
    }
}

