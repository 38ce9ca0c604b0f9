use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{auth, Transmission};
use crate::identity::{conceal_supi, s_tmsi_of, Crnti, Guti, HnPublicKey, Pei, RoutingIndicator, Supi};
use crate::profiles::NetworkProfile;
use crate::proto::{
    open, open_command, protect, Body, IdentityKind, Layer, Message, MobileIdentity, NasMessage, NeighborCell,
    PagingIdentity, RadioCapabilities, RegistrationType, RrcMessage, SecurityEnvelope,
};
use crate::secctx::{derive_context, Direction, KeyScope, MasterKey, SecurityCapabilities, SecurityContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UePhase {
    /// Powered off or deregistered.
    Idle,
    Registering,
    Authenticated,
    NasSecure,
    RrcSecure,
    Connected,
    /// Registered, RRC released, NAS context kept.
    RegisteredIdle,
    /// Idle UE re-establishing a connection (paging response or uplink data).
    Resuming,
    Rejected,
    /// Procedure abandoned by either side.
    Aborted,
}

impl UePhase {
    pub fn is_terminal(self) -> bool {
        matches!(self, UePhase::Connected | UePhase::Rejected | UePhase::Aborted)
    }

    fn in_procedure(self) -> bool {
        matches!(
            self,
            UePhase::Registering | UePhase::Authenticated | UePhase::NasSecure | UePhase::RrcSecure | UePhase::Resuming
        )
    }
}

impl fmt::Display for UePhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// How the UE treats commands it cannot fully authenticate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptancePolicy {
    /// Rejects a Security Mode Command without MAC, refuses to send the SUPI
    /// in clear, and drops unprotected NAS once security is on.
    Strict,
    /// Mirrors observed handset behavior: accepts what the network sends.
    #[default]
    Permissive,
}

/// Identity behavior of the cell the UE camps on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CellMode {
    /// Legacy core: identity requests for the IMSI are answered with the SUPI.
    pub legacy_identity: bool,
    /// The cell may ask for the equipment identity before security.
    pub legacy_pei: bool,
}

impl CellMode {
    pub fn of(profile: &NetworkProfile) -> Self {
        Self {
            legacy_identity: !profile.supports_suci,
            legacy_pei: !profile.pei_only_in_secure,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UeConfig {
    pub supi: Supi,
    pub pei: Pei,
    pub k: [u8; 32],
    pub hn_public: HnPublicKey,
    pub routing_indicator: RoutingIndicator,
    pub caps: SecurityCapabilities,
    pub radio_caps: RadioCapabilities,
    pub neighbors: Vec<NeighborCell>,
    pub policy: AcceptancePolicy,
}

#[derive(Debug, Clone)]
pub struct Ue {
    pub index: u32,
    pub cfg: UeConfig,
    pub phase: UePhase,
    pub stored_guti: Option<Guti>,
    /// Capabilities sent in the last Registration Request.
    pub sent_caps: SecurityCapabilities,
    pub nas_ctx: Option<SecurityContext>,
    pub rrc_ctx: Option<SecurityContext>,
    pub crnti: Option<Crnti>,
    pub cell: CellMode,
    /// Every GUTI adopted, in order.
    pub guti_history: Vec<Guti>,
    pub smc_rejects: u32,
    pub service_rejects: u32,
    master: Option<MasterKey>,
    pending_master: Option<MasterKey>,
    pending_nas: Option<NasMessage>,
    rng: ChaCha8Rng,
}

impl Ue {
    pub fn new(index: u32, cfg: UeConfig, stored_guti: Option<Guti>, seed: u64) -> Self {
        Self {
            index,
            sent_caps: cfg.caps.clone(),
            cfg,
            phase: UePhase::Idle,
            stored_guti,
            nas_ctx: None,
            rrc_ctx: None,
            crnti: None,
            cell: CellMode::default(),
            guti_history: Vec::new(),
            smc_rejects: 0,
            service_rejects: 0,
            master: None,
            pending_master: None,
            pending_nas: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn strict(&self) -> bool {
        self.cfg.policy == AcceptancePolicy::Strict
    }

    fn clear(&self, msg: impl Into<Message>) -> Transmission {
        let message = msg.into();
        Transmission {
            envelope: SecurityEnvelope::clear(message.clone(), self.crnti),
            message,
        }
    }

    /// NAS uplink, integrity-protected and ciphered once a context exists.
    fn nas(&mut self, msg: NasMessage) -> Transmission {
        let message = Message::Nas(msg);
        let has_ctx = self.nas_ctx.is_some();
        let envelope = protect(message.clone(), self.nas_ctx.as_mut(), Direction::Uplink, has_ctx, has_ctx, self.crnti)
            .expect("context presence checked");
        Transmission { envelope, message }
    }

    fn rrc(&mut self, msg: RrcMessage, cipher: bool) -> Transmission {
        let message = Message::Rrc(msg);
        let has_ctx = self.rrc_ctx.is_some();
        let envelope = protect(
            message.clone(),
            self.rrc_ctx.as_mut(),
            Direction::Uplink,
            has_ctx,
            has_ctx && cipher,
            self.crnti,
        )
        .expect("context presence checked");
        Transmission { envelope, message }
    }

    fn initial_identity(&mut self) -> MobileIdentity {
        if let Some(g) = &self.stored_guti {
            return MobileIdentity::Guti(g.clone());
        }
        if self.cell.legacy_identity {
            return MobileIdentity::Supi(self.cfg.supi.clone());
        }
        self.conceal()
    }

    fn conceal(&mut self) -> MobileIdentity {
        let suci = conceal_supi(&self.cfg.supi, &self.cfg.routing_indicator, &self.cfg.hn_public, &mut self.rng)
            .expect("provisioned home-network key is valid");
        MobileIdentity::Suci(suci)
    }

    /// Starts initial registration on a cell.
    pub fn power_on(&mut self, cell: CellMode) -> Vec<Transmission> {
        self.power_off();
        self.cell = cell;
        self.phase = UePhase::Registering;
        self.sent_caps = self.cfg.caps.clone();
        let identity = self.initial_identity();
        self.pending_nas = Some(NasMessage::RegistrationRequest {
            identity,
            ue_caps: self.sent_caps.clone(),
            reg_type: RegistrationType::Initial,
        });
        vec![self.clear(RrcMessage::RrcSetupRequest {})]
    }

    /// Leaves an idle registration to send uplink data or answer paging.
    pub fn start_service(&mut self) -> Vec<Transmission> {
        let Some(guti) = &self.stored_guti else {
            return Vec::new();
        };
        if self.phase != UePhase::RegisteredIdle {
            return Vec::new();
        }
        self.phase = UePhase::Resuming;
        self.pending_nas = Some(NasMessage::ServiceRequest { stmsi: s_tmsi_of(guti) });
        vec![self.clear(RrcMessage::RrcSetupRequest {})]
    }

    /// Airplane mode: volatile state is lost, the stored GUTI is kept.
    pub fn power_off(&mut self) {
        self.phase = UePhase::Idle;
        self.nas_ctx = None;
        self.rrc_ctx = None;
        self.crnti = None;
        self.master = None;
        self.pending_master = None;
        self.pending_nas = None;
    }

    pub fn receive(&mut self, env: &SecurityEnvelope) -> Vec<Transmission> {
        if let Body::Clear(m) = &env.body {
            match m {
                Message::Nas(NasMessage::SecurityModeCommand { .. }) => return self.on_nas_smc(env, m),
                Message::Rrc(RrcMessage::RrcSecurityModeCommand { selected }) => {
                    return self.on_rrc_smc(env, *selected)
                }
                _ => {}
            }
        }
        let msg = match env.layer {
            Layer::PAGING => env.clear_message().cloned(),
            Layer::RRC => open(env, self.rrc_ctx.as_mut(), Direction::Downlink).ok(),
            Layer::NAS => {
                if !env.integrity_protected && self.strict() && self.nas_ctx.is_some() && !Self::exempt(env) {
                    None
                } else {
                    open(env, self.nas_ctx.as_mut(), Direction::Downlink).ok()
                }
            }
        };
        match msg {
            Some(Message::Nas(m)) => self.on_nas(m),
            Some(Message::Rrc(m)) => self.on_rrc(m),
            None => Vec::new(),
        }
    }

    /// NAS messages a UE must process even without integrity protection.
    fn exempt(env: &SecurityEnvelope) -> bool {
        matches!(
            env.clear_message(),
            Some(Message::Nas(
                NasMessage::IdentityRequest { .. }
                    | NasMessage::AuthChallenge { .. }
                    | NasMessage::RegistrationReject { .. }
                    | NasMessage::ServiceReject { .. }
            ))
        )
    }

    fn reject_smc(&mut self, cause: &str) -> Vec<Transmission> {
        self.smc_rejects += 1;
        self.pending_master = None;
        vec![self.clear(NasMessage::SecurityModeReject { cause: cause.into() })]
    }

    fn on_nas_smc(&mut self, env: &SecurityEnvelope, msg: &Message) -> Vec<Transmission> {
        let Message::Nas(NasMessage::SecurityModeCommand {
            replayed_caps,
            selected,
            request_pei,
        }) = msg
        else {
            return Vec::new();
        };
        let Some(master) = self.pending_master.or(self.master) else {
            return Vec::new();
        };
        let mut candidate = derive_context(&master, KeyScope::Nas, *selected);
        if env.integrity_protected {
            if open_command(env, &mut candidate, Direction::Downlink).is_err() {
                return self.reject_smc("MAC verification failed");
            }
        } else if self.strict() {
            return self.reject_smc("Security Mode Command without MAC");
        }
        if *replayed_caps != self.sent_caps {
            return self.reject_smc("replayed UE security capabilities mismatch");
        }
        self.nas_ctx = Some(candidate);
        self.master = Some(master);
        self.pending_master = None;
        if self.phase < UePhase::NasSecure {
            self.phase = UePhase::NasSecure;
        }
        let pei = request_pei.then(|| self.cfg.pei.clone());
        vec![self.nas(NasMessage::SecurityModeComplete { pei })]
    }

    fn on_rrc_smc(&mut self, env: &SecurityEnvelope, selected: crate::secctx::AlgorithmPair) -> Vec<Transmission> {
        let Some(master) = self.master else {
            return Vec::new();
        };
        let mut candidate = derive_context(&master, KeyScope::Rrc, selected);
        if open(env, Some(&mut candidate), Direction::Downlink).is_err() {
            return Vec::new();
        }
        self.rrc_ctx = Some(candidate);
        if self.phase < UePhase::RrcSecure {
            self.phase = UePhase::RrcSecure;
        }
        vec![self.rrc(RrcMessage::RrcSecurityModeComplete {}, false)]
    }

    fn on_nas(&mut self, msg: NasMessage) -> Vec<Transmission> {
        match msg {
            NasMessage::IdentityRequest { requested } => self.on_identity_request(requested),
            NasMessage::AuthChallenge { nonce } => {
                if !self.phase.in_procedure() {
                    return Vec::new();
                }
                self.pending_master = Some(auth::master_key(&self.cfg.k, &nonce));
                if self.phase < UePhase::Authenticated {
                    self.phase = UePhase::Authenticated;
                }
                let proof = auth::proof(&self.cfg.k, &nonce);
                vec![self.clear(NasMessage::AuthResponse { proof })]
            }
            NasMessage::RegistrationAccept { guti } => {
                if let Some(g) = guti {
                    self.adopt(g);
                }
                vec![self.nas(NasMessage::RegistrationComplete {})]
            }
            NasMessage::RegistrationReject { .. } => {
                self.phase = UePhase::Rejected;
                Vec::new()
            }
            NasMessage::ServiceReject { .. } => {
                self.service_rejects += 1;
                self.phase = UePhase::Rejected;
                Vec::new()
            }
            NasMessage::ConfigurationUpdateCommand { new_guti, ack_requested } => {
                if let Some(g) = new_guti {
                    self.adopt(g);
                }
                if ack_requested {
                    vec![self.nas(NasMessage::ConfigurationUpdateComplete {})]
                } else {
                    Vec::new()
                }
            }
            _ => Vec::new(),
        }
    }

    fn adopt(&mut self, g: Guti) {
        self.guti_history.push(g.clone());
        self.stored_guti = Some(g);
    }

    fn on_identity_request(&mut self, requested: IdentityKind) -> Vec<Transmission> {
        let identity = match requested {
            IdentityKind::SUCI => self.conceal(),
            IdentityKind::IMSI if !self.cell.legacy_identity => self.conceal(),
            IdentityKind::IMSI if self.strict() => {
                self.phase = UePhase::Aborted;
                return Vec::new();
            }
            IdentityKind::IMSI => MobileIdentity::Supi(self.cfg.supi.clone()),
            IdentityKind::IMEI if self.nas_ctx.is_some() || self.cell.legacy_pei => {
                MobileIdentity::Pei(self.cfg.pei.clone())
            }
            IdentityKind::IMEI => return Vec::new(),
        };
        vec![self.nas(NasMessage::IdentityResponse { identity })]
    }

    fn on_rrc(&mut self, msg: RrcMessage) -> Vec<Transmission> {
        match msg {
            RrcMessage::RrcSetup { crnti } => {
                if self.crnti.is_some() {
                    return Vec::new();
                }
                self.crnti = Some(crnti);
                match self.pending_nas.take() {
                    Some(m @ NasMessage::RegistrationRequest { .. }) => vec![self.clear(m)],
                    Some(m) => {
                        // Service requests are integrity-protected but sent in clear.
                        let message = Message::Nas(m);
                        let has_ctx = self.nas_ctx.is_some();
                        let envelope = protect(
                            message.clone(),
                            self.nas_ctx.as_mut(),
                            Direction::Uplink,
                            has_ctx,
                            false,
                            self.crnti,
                        )
                        .expect("context presence checked");
                        vec![Transmission { envelope, message }]
                    }
                    None => Vec::new(),
                }
            }
            RrcMessage::UeCapabilityEnquiry {} => {
                let radio_caps = self.cfg.radio_caps.clone();
                vec![self.rrc(RrcMessage::UeCapabilityInformation { radio_caps }, true)]
            }
            RrcMessage::RrcReconfiguration { .. } => {
                if self.phase.in_procedure() {
                    self.phase = UePhase::Connected;
                }
                let neighbor_cells = self.cfg.neighbors.clone();
                vec![self.rrc(RrcMessage::MeasurementReport { neighbor_cells }, true)]
            }
            RrcMessage::RrcRelease {} => {
                self.phase = match self.phase {
                    UePhase::Connected => UePhase::RegisteredIdle,
                    p if p.in_procedure() => UePhase::Aborted,
                    p => p,
                };
                self.rrc_ctx = None;
                self.crnti = None;
                self.pending_nas = None;
                Vec::new()
            }
            RrcMessage::Paging { id } => {
                let mine = match &id {
                    PagingIdentity::STmsi(s) => self.stored_guti.as_ref().is_some_and(|g| s_tmsi_of(g) == *s),
                    PagingIdentity::Supi(s) => *s == self.cfg.supi,
                };
                if mine {
                    self.start_service()
                } else {
                    Vec::new()
                }
            }
            _ => Vec::new(),
        }
    }
}
