//! Algorithm negotiation, key derivation, integrity tags and ciphering for
//! NAS and RRC protection.
//!
//! The concrete primitives are stand-ins with the right contracts: every
//! non-null integrity algorithm is a truncated HMAC-SHA-256 and every non-null
//! ciphering algorithm an AES-128-CTR keystream, with the algorithm id mixed
//! into the input so the identities stay distinguishable.

use std::collections::BTreeSet;
use std::fmt;

use aes::cipher::{KeyIvInit, StreamCipher};
use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

type Aes128Ctr = ctr::Ctr128BE<aes::Aes128>;
type HmacSha256 = Hmac<Sha256>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SecurityError {
    #[error("no mutually supported {0} algorithm")]
    NegotiationFailure(&'static str),
    #[error("{0:?} count exhausted")]
    CountOverflow(Direction),
    #[error("{direction:?} count {got} replayed; expected at least {expected}")]
    Replay { direction: Direction, expected: u32, got: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CipherAlg {
    NEA0,
    NEA1,
    NEA2,
    NEA3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntegrityAlg {
    NIA0,
    NIA1,
    NIA2,
    NIA3,
}

impl CipherAlg {
    pub const ALL: [CipherAlg; 4] = [Self::NEA0, Self::NEA1, Self::NEA2, Self::NEA3];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn is_null(self) -> bool {
        self == Self::NEA0
    }
}

impl IntegrityAlg {
    pub const ALL: [IntegrityAlg; 4] = [Self::NIA0, Self::NIA1, Self::NIA2, Self::NIA3];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn is_null(self) -> bool {
        self == Self::NIA0
    }
}

impl fmt::Display for CipherAlg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for IntegrityAlg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SecurityCapabilities {
    pub ciphering: BTreeSet<CipherAlg>,
    pub integrity: BTreeSet<IntegrityAlg>,
}

impl SecurityCapabilities {
    pub fn new(
        ciphering: impl IntoIterator<Item = CipherAlg>,
        integrity: impl IntoIterator<Item = IntegrityAlg>,
    ) -> Self {
        Self {
            ciphering: ciphering.into_iter().collect(),
            integrity: integrity.into_iter().collect(),
        }
    }

    /// What a typical handset advertises.
    pub fn standard_ue() -> Self {
        use CipherAlg::*;
        use IntegrityAlg::*;
        Self::new([NEA0, NEA1, NEA2], [NIA0, NIA1, NIA2])
    }

    /// Null algorithms only: what a bidding-down attacker rewrites caps to.
    pub fn null_only() -> Self {
        Self::new([CipherAlg::NEA0], [IntegrityAlg::NIA0])
    }

    pub fn is_compliant(&self) -> bool {
        Self::standard_ue().ciphering.is_subset(&self.ciphering)
            && Self::standard_ue().integrity.is_subset(&self.integrity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlgorithmPair {
    pub nea: CipherAlg,
    pub nia: IntegrityAlg,
}

impl AlgorithmPair {
    pub fn null() -> Self {
        Self {
            nea: CipherAlg::NEA0,
            nia: IntegrityAlg::NIA0,
        }
    }
}

impl fmt::Display for AlgorithmPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.nea, self.nia)
    }
}

/// Network-side algorithm lists, most preferred first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgorithmPreference {
    pub ciphering: Vec<CipherAlg>,
    pub integrity: Vec<IntegrityAlg>,
}

pub fn select_algorithms(
    ue_caps: &SecurityCapabilities,
    preference: &AlgorithmPreference,
) -> Result<AlgorithmPair, SecurityError> {
    let nea = preference
        .ciphering
        .iter()
        .copied()
        .find(|a| ue_caps.ciphering.contains(a))
        .ok_or(SecurityError::NegotiationFailure("ciphering"))?;
    let nia = preference
        .integrity
        .iter()
        .copied()
        .find(|a| ue_caps.integrity.contains(a))
        .ok_or(SecurityError::NegotiationFailure("integrity"))?;
    Ok(AlgorithmPair { nea, nia })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "UE->NET")]
    Uplink,
    #[serde(rename = "NET->UE")]
    Downlink,
}

impl Direction {
    fn bit(self) -> u8 {
        match self {
            Direction::Uplink => 0,
            Direction::Downlink => 1,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Uplink => "UE->NET",
            Direction::Downlink => "NET->UE",
        })
    }
}

/// Which protocol layer a context protects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeyScope {
    Nas,
    Rrc,
}

/// 32-bit integrity tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MacTag(pub u32);

impl MacTag {
    pub const ZERO: MacTag = MacTag(0);
}

impl fmt::Display for MacTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08x}", self.0)
    }
}

pub type Key128 = [u8; 16];
pub type MasterKey = [u8; 32];

/// Keys, selected algorithms and counters for one protected layer.
#[derive(Clone, PartialEq, Eq)]
pub struct SecurityContext {
    pub scope: KeyScope,
    pub selected: AlgorithmPair,
    master_key: MasterKey,
    pub nas_int_key: Key128,
    pub nas_enc_key: Key128,
    pub rrc_int_key: Key128,
    pub rrc_enc_key: Key128,
    pub ul_count: u32,
    pub dl_count: u32,
}

impl fmt::Debug for SecurityContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecurityContext")
            .field("scope", &self.scope)
            .field("selected", &self.selected)
            .field("ul_count", &self.ul_count)
            .field("dl_count", &self.dl_count)
            .finish_non_exhaustive()
    }
}

fn kdf(master: &MasterKey, label: &str, alg_id: u8) -> Key128 {
    let mut mac = HmacSha256::new_from_slice(master).expect("HMAC accepts any key length");
    mac.update(label.as_bytes());
    mac.update(&[alg_id]);
    let out = mac.finalize().into_bytes();
    let mut key = [0u8; 16];
    key.copy_from_slice(&out[..16]);
    key
}

pub fn derive_context(master_key: &MasterKey, scope: KeyScope, selected: AlgorithmPair) -> SecurityContext {
    SecurityContext {
        scope,
        selected,
        master_key: *master_key,
        nas_int_key: kdf(master_key, "nas-int", selected.nia.id()),
        nas_enc_key: kdf(master_key, "nas-enc", selected.nea.id()),
        rrc_int_key: kdf(master_key, "rrc-int", selected.nia.id()),
        rrc_enc_key: kdf(master_key, "rrc-enc", selected.nea.id()),
        ul_count: 0,
        dl_count: 0,
    }
}

impl SecurityContext {
    pub fn master_key(&self) -> &MasterKey {
        &self.master_key
    }

    pub fn int_key(&self) -> &Key128 {
        match self.scope {
            KeyScope::Nas => &self.nas_int_key,
            KeyScope::Rrc => &self.rrc_int_key,
        }
    }

    pub fn enc_key(&self) -> &Key128 {
        match self.scope {
            KeyScope::Nas => &self.nas_enc_key,
            KeyScope::Rrc => &self.rrc_enc_key,
        }
    }

    fn counter(&mut self, dir: Direction) -> &mut u32 {
        match dir {
            Direction::Uplink => &mut self.ul_count,
            Direction::Downlink => &mut self.dl_count,
        }
    }

    /// Consumes one count in `dir` for an outgoing protected message.
    pub fn next_count(&mut self, dir: Direction) -> Result<u32, SecurityError> {
        let c = self.counter(dir);
        let current = *c;
        *c = current.checked_add(1).ok_or(SecurityError::CountOverflow(dir))?;
        Ok(current)
    }

    /// Receive-side replay check: counts must strictly increase.
    pub fn accept_count(&mut self, dir: Direction, count: u32) -> Result<(), SecurityError> {
        let c = self.counter(dir);
        if count < *c {
            return Err(SecurityError::Replay {
                direction: dir,
                expected: *c,
                got: count,
            });
        }
        *c = count.checked_add(1).ok_or(SecurityError::CountOverflow(dir))?;
        Ok(())
    }
}

fn scope_bit(scope: KeyScope) -> u8 {
    match scope {
        KeyScope::Nas => 0,
        KeyScope::Rrc => 1,
    }
}

/// Tag computed with an explicit algorithm, keyed by the context's integrity key.
pub fn compute_mac_with(
    ctx: &SecurityContext,
    nia: IntegrityAlg,
    dir: Direction,
    count: u32,
    message: &[u8],
) -> MacTag {
    if nia.is_null() {
        return MacTag::ZERO;
    }
    let mut mac = HmacSha256::new_from_slice(ctx.int_key()).expect("HMAC accepts any key length");
    mac.update(&[nia.id(), dir.bit(), scope_bit(ctx.scope)]);
    mac.update(&count.to_be_bytes());
    mac.update(message);
    let out = mac.finalize().into_bytes();
    MacTag(u32::from_be_bytes([out[0], out[1], out[2], out[3]]))
}

pub fn compute_mac(ctx: &SecurityContext, dir: Direction, count: u32, message: &[u8]) -> MacTag {
    compute_mac_with(ctx, ctx.selected.nia, dir, count, message)
}

pub fn verify_mac(ctx: &SecurityContext, dir: Direction, count: u32, message: &[u8], tag: MacTag) -> bool {
    compute_mac(ctx, dir, count, message) == tag
}

/// Algorithm that keys the integrity tag of a Security Mode Command.
///
/// The command is always checked with a real algorithm, even when the
/// negotiated one is null; otherwise a tampered request for NIA0 would make
/// the tag on the very command that confirms it forgeable.
pub fn smc_integrity_algorithm(selected: AlgorithmPair) -> IntegrityAlg {
    match selected.nia {
        IntegrityAlg::NIA0 => IntegrityAlg::NIA2,
        other => other,
    }
}

fn keystream_iv(ctx: &SecurityContext, dir: Direction, count: u32) -> [u8; 16] {
    let mut iv = [0u8; 16];
    iv[..4].copy_from_slice(&count.to_be_bytes());
    iv[4] = ctx.selected.nea.id();
    iv[5] = dir.bit();
    iv[6] = scope_bit(ctx.scope);
    iv
}

pub fn cipher(ctx: &SecurityContext, dir: Direction, count: u32, plaintext: &[u8]) -> Vec<u8> {
    let mut out = plaintext.to_vec();
    if !ctx.selected.nea.is_null() {
        let iv = keystream_iv(ctx, dir, count);
        Aes128Ctr::new(ctx.enc_key().into(), &iv.into()).apply_keystream(&mut out);
    }
    out
}

pub fn decipher(ctx: &SecurityContext, dir: Direction, count: u32, ciphertext: &[u8]) -> Vec<u8> {
    // CTR mode is an involution.
    cipher(ctx, dir, count, ciphertext)
}

#[cfg(test)]
mod tests {
    use super::*;
    use CipherAlg::*;
    use IntegrityAlg::*;

    fn ctx(nea: CipherAlg, nia: IntegrityAlg) -> SecurityContext {
        derive_context(&[0x42; 32], KeyScope::Nas, AlgorithmPair { nea, nia })
    }

    #[test]
    fn selects_highest_preference() {
        let pref = AlgorithmPreference {
            ciphering: vec![NEA2, NEA1, NEA0],
            integrity: vec![NIA2, NIA1],
        };
        let pair = select_algorithms(&SecurityCapabilities::standard_ue(), &pref).unwrap();
        assert_eq!(pair, AlgorithmPair { nea: NEA2, nia: NIA2 });
        assert_eq!(
            select_algorithms(&SecurityCapabilities::null_only(), &pref),
            Err(SecurityError::NegotiationFailure("integrity"))
        );
    }

    #[test]
    fn derived_keys_are_purpose_separated() {
        let c = ctx(NEA2, NIA2);
        let keys = [c.nas_int_key, c.nas_enc_key, c.rrc_int_key, c.rrc_enc_key];
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(keys[i], keys[j]);
            }
        }
        assert_eq!(c, ctx(NEA2, NIA2));
    }

    #[test]
    fn null_integrity_yields_zero_tag() {
        let c = ctx(NEA0, NIA0);
        assert_eq!(compute_mac(&c, Direction::Downlink, 7, b"anything"), MacTag::ZERO);
        assert!(verify_mac(&c, Direction::Uplink, 0, b"x", MacTag::ZERO));
        assert_ne!(
            compute_mac_with(&c, smc_integrity_algorithm(c.selected), Direction::Downlink, 0, b"x"),
            MacTag::ZERO
        );
    }

    #[test]
    fn mac_binds_direction_and_count() {
        let c = ctx(NEA2, NIA2);
        let t = compute_mac(&c, Direction::Downlink, 1, b"msg");
        assert!(verify_mac(&c, Direction::Downlink, 1, b"msg", t));
        assert!(!verify_mac(&c, Direction::Uplink, 1, b"msg", t));
        assert!(!verify_mac(&c, Direction::Downlink, 2, b"msg", t));
    }

    #[test]
    fn null_cipher_is_identity_and_counts_vary_keystream() {
        assert_eq!(cipher(&ctx(NEA0, NIA2), Direction::Uplink, 3, b"plain"), b"plain");
        let c = ctx(NEA2, NIA2);
        let a = cipher(&c, Direction::Uplink, 3, b"plain");
        let b = cipher(&c, Direction::Uplink, 4, b"plain");
        assert_ne!(a, b);
        assert_ne!(a, b"plain");
        assert_eq!(decipher(&c, Direction::Uplink, 3, &a), b"plain");
    }

    #[test]
    fn counters_are_monotone() {
        let mut c = ctx(NEA2, NIA2);
        assert_eq!(c.next_count(Direction::Uplink).unwrap(), 0);
        assert_eq!(c.next_count(Direction::Uplink).unwrap(), 1);
        assert_eq!(c.dl_count, 0);
        c.accept_count(Direction::Downlink, 5).unwrap();
        assert!(matches!(
            c.accept_count(Direction::Downlink, 5),
            Err(SecurityError::Replay { .. })
        ));
        c.ul_count = u32::MAX;
        assert_eq!(c.next_count(Direction::Uplink), Err(SecurityError::CountOverflow(Direction::Uplink)));
    }
}
