use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::message::{Exposure, IdentifierKind, Message, RrcMessage};
use crate::identity::Crnti;
use crate::secctx::{
    self, cipher, compute_mac_with, decipher, CipherAlg, Direction, IntegrityAlg, MacTag, SecurityContext,
    SecurityError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layer {
    NAS,
    RRC,
    PAGING,
}

impl Layer {
    pub fn of(msg: &Message) -> Layer {
        match msg {
            Message::Nas(_) => Layer::NAS,
            Message::Rrc(RrcMessage::Paging { .. }) => Layer::PAGING,
            Message::Rrc(_) => Layer::RRC,
        }
    }
}

/// What travels over the air: a readable message or ciphertext.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Clear(Message),
    Sealed(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecurityEnvelope {
    pub layer: Layer,
    pub integrity_protected: bool,
    pub ciphered: bool,
    /// Ciphering algorithm in force when `ciphered`; NEA0 otherwise.
    pub nea: CipherAlg,
    pub mac: Option<MacTag>,
    pub count: u32,
    /// MAC-layer header; never ciphered.
    pub crnti: Option<Crnti>,
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtoError {
    #[error("protection requested but no security context is established")]
    NoContext,
    #[error(transparent)]
    Security(#[from] SecurityError),
    #[error("integrity check failed")]
    IntegrityFailure,
    #[error("payload did not decode")]
    Malformed,
}

impl SecurityEnvelope {
    pub fn clear(msg: Message, crnti: Option<Crnti>) -> Self {
        Self {
            layer: Layer::of(&msg),
            integrity_protected: false,
            ciphered: false,
            nea: CipherAlg::NEA0,
            mac: None,
            count: 0,
            crnti,
            body: Body::Clear(msg),
        }
    }

    /// Ciphered with a non-null algorithm, i.e. unreadable on the air.
    pub fn effectively_ciphered(&self) -> bool {
        self.ciphered && !self.nea.is_null()
    }

    pub fn clear_message(&self) -> Option<&Message> {
        match &self.body {
            Body::Clear(m) => Some(m),
            Body::Sealed(_) => None,
        }
    }
}

fn seal(
    msg: Message,
    ctx: Option<&mut SecurityContext>,
    dir: Direction,
    mac_alg: Option<IntegrityAlg>,
    cipher_on: bool,
    crnti: Option<Crnti>,
) -> Result<SecurityEnvelope, ProtoError> {
    if mac_alg.is_none() && !cipher_on {
        return Ok(SecurityEnvelope::clear(msg, crnti));
    }
    let ctx = ctx.ok_or(ProtoError::NoContext)?;
    let count = ctx.next_count(dir)?;
    let bytes = msg.to_bytes();
    let mac = mac_alg.map(|alg| compute_mac_with(ctx, alg, dir, count, &bytes));
    let nea = if cipher_on { ctx.selected.nea } else { CipherAlg::NEA0 };
    let body = if cipher_on && !nea.is_null() {
        Body::Sealed(cipher(ctx, dir, count, &bytes))
    } else {
        Body::Clear(msg.clone())
    };
    Ok(SecurityEnvelope {
        layer: Layer::of(&msg),
        integrity_protected: mac.is_some(),
        ciphered: cipher_on,
        nea,
        mac,
        count,
        crnti,
        body,
    })
}

/// Wraps `msg`, consuming one count in `dir` when any protection is applied.
pub fn protect(
    msg: Message,
    ctx: Option<&mut SecurityContext>,
    dir: Direction,
    integrity: bool,
    cipher_on: bool,
    crnti: Option<Crnti>,
) -> Result<SecurityEnvelope, ProtoError> {
    let mac_alg = match (&ctx, integrity) {
        (Some(c), true) => Some(c.selected.nia),
        (None, true) => return Err(ProtoError::NoContext),
        _ => None,
    };
    seal(msg, ctx, dir, mac_alg, cipher_on, crnti)
}

/// Integrity-protects a security mode command under the keyed algorithm
/// mandated for such commands (see [`secctx::smc_integrity_algorithm`]).
pub fn protect_command(
    msg: Message,
    ctx: &mut SecurityContext,
    dir: Direction,
    crnti: Option<Crnti>,
) -> Result<SecurityEnvelope, ProtoError> {
    let alg = secctx::smc_integrity_algorithm(ctx.selected);
    seal(msg, Some(ctx), dir, Some(alg), false, crnti)
}

fn open_inner(
    env: &SecurityEnvelope,
    mut ctx: Option<&mut SecurityContext>,
    dir: Direction,
    mac_alg: Option<IntegrityAlg>,
) -> Result<Message, ProtoError> {
    let msg = match &env.body {
        Body::Clear(m) => m.clone(),
        Body::Sealed(ct) => {
            let c = ctx.as_deref().ok_or(ProtoError::NoContext)?;
            Message::from_bytes(&decipher(c, dir, env.count, ct)).ok_or(ProtoError::Malformed)?
        }
    };
    if env.integrity_protected {
        let c = ctx.as_mut().ok_or(ProtoError::NoContext)?;
        let alg = mac_alg.unwrap_or(c.selected.nia);
        let expected = compute_mac_with(c, alg, dir, env.count, &msg.to_bytes());
        if env.mac != Some(expected) {
            return Err(ProtoError::IntegrityFailure);
        }
        c.accept_count(dir, env.count)?;
    }
    Ok(msg)
}

/// Recovers the message, checking the tag and replay counter if present.
pub fn open(
    env: &SecurityEnvelope,
    ctx: Option<&mut SecurityContext>,
    dir: Direction,
) -> Result<Message, ProtoError> {
    open_inner(env, ctx, dir, None)
}

/// Receive-side counterpart of [`protect_command`].
pub fn open_command(
    env: &SecurityEnvelope,
    ctx: &mut SecurityContext,
    dir: Direction,
) -> Result<Message, ProtoError> {
    let alg = secctx::smc_integrity_algorithm(ctx.selected);
    open_inner(env, Some(ctx), dir, Some(alg))
}

/// Identifiers a passive observer can read from the envelope: the header
/// C-RNTI always, the payload unless it is effectively ciphered.
pub fn exposed_fields(env: &SecurityEnvelope) -> BTreeSet<Exposure> {
    let mut out = BTreeSet::new();
    if let Some(c) = env.crnti {
        out.insert((IdentifierKind::CRNTI, c.to_string()));
    }
    if let Body::Clear(m) = &env.body {
        out.extend(m.identifiers());
    }
    out
}
