//! Subscriber and equipment identifiers.
//!
//! Covers the permanent identifiers (SUPI, PEI), the concealed form of the
//! SUPI (SUCI), the temporary identifiers handed out by the core (5G-GUTI and
//! its short form 5G-S-TMSI) and the per-cell C-RNTI. GUTI allocation and the
//! refresh policy live here too, since both are properties of the identifier
//! lifecycle rather than of a particular protocol exchange.

use std::collections::BTreeSet;
use std::fmt;

use aes::cipher::{KeyIvInit, StreamCipher};
use hmac::{Hmac, Mac};
use rand::{CryptoRng, Rng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use x25519_dalek::{PublicKey, StaticSecret};

type Aes128Ctr = ctr::Ctr128BE<aes::Aes128>;
type HmacSha256 = Hmac<Sha256>;

const X25519_LEN: usize = 32;
const SUCI_TAG_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("invalid {field}: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("SUPI concealment failed: {0}")]
    ConcealmentFailure(String),
    #[error("SUCI integrity check failed")]
    IntegrityFailure,
    #[error("SUCI was concealed for home-network key {found}, but key {expected} was supplied")]
    KeyMismatch { expected: u8, found: u8 },
    #[error("no free 5G-TMSI values left in this AMF")]
    AllocationExhausted,
    #[error("unpredictability score needs at least 2 identifiers, got {0}")]
    InsufficientData(usize),
}

pub type Result<T> = std::result::Result<T, IdentityError>;

fn check_digits(field: &'static str, value: &str, min: usize, max: usize) -> Result<()> {
    if !value.bytes().all(|b| b.is_ascii_digit()) {
        return Err(IdentityError::InvalidField {
            field,
            reason: format!("{value:?} contains non-digit characters"),
        });
    }
    if value.len() < min || value.len() > max {
        let expected = if min == max {
            format!("{min}")
        } else {
            format!("{min}-{max}")
        };
        return Err(IdentityError::InvalidField {
            field,
            reason: format!("{value:?} has {} digits, expected {expected}", value.len()),
        });
    }
    Ok(())
}

fn random_digits<R: Rng + ?Sized>(rng: &mut R, len: usize) -> String {
    (0..len)
        .map(|_| char::from(b'0' + rng.gen_range(0..10u8)))
        .collect()
}

/// Mobile country code plus mobile network code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "PlmnFields")]
pub struct Plmn {
    mcc: String,
    mnc: String,
}

#[derive(Deserialize)]
struct PlmnFields {
    mcc: String,
    mnc: String,
}

impl TryFrom<PlmnFields> for Plmn {
    type Error = IdentityError;
    fn try_from(f: PlmnFields) -> Result<Self> {
        Plmn::new(&f.mcc, &f.mnc)
    }
}

impl Plmn {
    pub fn new(mcc: &str, mnc: &str) -> Result<Self> {
        check_digits("mcc", mcc, 3, 3)?;
        check_digits("mnc", mnc, 2, 3)?;
        Ok(Self {
            mcc: mcc.to_owned(),
            mnc: mnc.to_owned(),
        })
    }

    pub fn mcc(&self) -> &str {
        &self.mcc
    }

    pub fn mnc(&self) -> &str {
        &self.mnc
    }
}

/// Subscription Permanent Identifier in IMSI form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "SupiFields")]
pub struct Supi {
    mcc: String,
    mnc: String,
    msin: String,
}

#[derive(Deserialize)]
struct SupiFields {
    mcc: String,
    mnc: String,
    msin: String,
}

impl TryFrom<SupiFields> for Supi {
    type Error = IdentityError;
    fn try_from(f: SupiFields) -> Result<Self> {
        Supi::new(&f.mcc, &f.mnc, &f.msin)
    }
}

impl Supi {
    pub fn new(mcc: &str, mnc: &str, msin: &str) -> Result<Self> {
        let plmn = Plmn::new(mcc, mnc)?;
        check_digits("msin", msin, 9, 10)?;
        Ok(Self {
            mcc: plmn.mcc,
            mnc: plmn.mnc,
            msin: msin.to_owned(),
        })
    }

    /// Random SUPI in the given PLMN with an MSIN of `msin_len` digits (9 or 10).
    pub fn random<R: Rng + ?Sized>(plmn: &Plmn, msin_len: usize, rng: &mut R) -> Self {
        let msin = random_digits(rng, msin_len.clamp(9, 10));
        Self {
            mcc: plmn.mcc.clone(),
            mnc: plmn.mnc.clone(),
            msin,
        }
    }

    pub fn mcc(&self) -> &str {
        &self.mcc
    }

    pub fn mnc(&self) -> &str {
        &self.mnc
    }

    pub fn msin(&self) -> &str {
        &self.msin
    }

    pub fn plmn(&self) -> Plmn {
        Plmn {
            mcc: self.mcc.clone(),
            mnc: self.mnc.clone(),
        }
    }
}

impl fmt::Display for Supi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "imsi-{}{}{}", self.mcc, self.mnc, self.msin)
    }
}

/// Home-network routing indicator carried in clear inside every SUCI.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RoutingIndicator(String);

impl RoutingIndicator {
    pub fn new(digits: &str) -> Result<Self> {
        check_digits("routing_indicator", digits, 1, 4)?;
        Ok(Self(digits.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Default for RoutingIndicator {
    fn default() -> Self {
        Self("0".to_owned())
    }
}

impl TryFrom<String> for RoutingIndicator {
    type Error = IdentityError;
    fn try_from(s: String) -> Result<Self> {
        Self::new(&s)
    }
}

impl From<RoutingIndicator> for String {
    fn from(r: RoutingIndicator) -> String {
        r.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeId {
    #[serde(rename = "NULL")]
    Null,
    #[serde(rename = "SIM_ECIES")]
    SimEcies,
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeId::Null => "NULL",
            SchemeId::SimEcies => "SIM_ECIES",
        })
    }
}

/// Subscription Concealed Identifier.
///
/// `scheme_output` is `ephemeral public key || encrypted msin || tag` for
/// [`SchemeId::SimEcies`] and the ASCII msin digits for [`SchemeId::Null`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Suci {
    pub mcc: String,
    pub mnc: String,
    pub routing_indicator: RoutingIndicator,
    pub scheme_id: SchemeId,
    pub hn_key_id: u8,
    #[serde(with = "crate::hexbytes")]
    pub scheme_output: Vec<u8>,
}

impl Suci {
    /// The msin in clear, when the null scheme was used.
    pub fn null_scheme_msin(&self) -> Option<&str> {
        match self.scheme_id {
            SchemeId::Null => std::str::from_utf8(&self.scheme_output).ok(),
            SchemeId::SimEcies => None,
        }
    }
}

impl fmt::Display for Suci {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "suci[mcc={};mnc={};ri={};scheme={};key={};out=",
            self.mcc,
            self.mnc,
            self.routing_indicator.as_str(),
            self.scheme_id,
            self.hn_key_id
        )?;
        match self.null_scheme_msin() {
            Some(msin) => f.write_str(msin)?,
            None => f.write_str(&hex::encode(&self.scheme_output))?,
        }
        f.write_str("]")
    }
}

/// Public half of a home-network concealment key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HnPublicKey {
    id: u8,
    bytes: [u8; X25519_LEN],
}

impl HnPublicKey {
    pub fn from_bytes(id: u8, bytes: &[u8]) -> Result<Self> {
        let bytes: [u8; X25519_LEN] = bytes.try_into().map_err(|_| {
            IdentityError::ConcealmentFailure(format!(
                "home-network public key must be {X25519_LEN} bytes, got {}",
                bytes.len()
            ))
        })?;
        Ok(Self { id, bytes })
    }

    pub fn id(&self) -> u8 {
        self.id
    }

    pub fn as_bytes(&self) -> &[u8; X25519_LEN] {
        &self.bytes
    }
}

/// Home-network key pair, held by the core to resolve SUCIs.
#[derive(Clone)]
pub struct HomeNetworkKey {
    secret: StaticSecret,
    public: HnPublicKey,
}

impl fmt::Debug for HomeNetworkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HomeNetworkKey")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl HomeNetworkKey {
    pub fn generate<R: RngCore + CryptoRng>(id: u8, rng: &mut R) -> Self {
        let mut seed = [0u8; X25519_LEN];
        rng.fill_bytes(&mut seed);
        Self::from_secret_bytes(id, seed)
    }

    pub fn from_secret_bytes(id: u8, secret: [u8; X25519_LEN]) -> Self {
        let secret = StaticSecret::from(secret);
        let public = PublicKey::from(&secret);
        Self {
            secret,
            public: HnPublicKey {
                id,
                bytes: public.to_bytes(),
            },
        }
    }

    pub fn public(&self) -> &HnPublicKey {
        &self.public
    }
}

struct SuciKeys {
    enc_key: [u8; 16],
    icb: [u8; 16],
    mac_key: [u8; 32],
}

/// ANSI X9.63 KDF over SHA-256, with the ephemeral public key as shared info.
fn suci_kdf(shared: &[u8; X25519_LEN], ephemeral: &[u8; X25519_LEN]) -> SuciKeys {
    let mut out = Vec::with_capacity(64);
    for counter in 1u32..=2 {
        let mut h = Sha256::new();
        h.update(shared);
        h.update(counter.to_be_bytes());
        h.update(ephemeral);
        out.extend_from_slice(&h.finalize());
    }
    let mut keys = SuciKeys {
        enc_key: [0; 16],
        icb: [0; 16],
        mac_key: [0; 32],
    };
    keys.enc_key.copy_from_slice(&out[..16]);
    keys.icb.copy_from_slice(&out[16..32]);
    keys.mac_key.copy_from_slice(&out[32..64]);
    keys
}

fn suci_tag(mac_key: &[u8; 32], ciphertext: &[u8]) -> HmacSha256 {
    let mut mac = HmacSha256::new_from_slice(mac_key).expect("HMAC accepts any key length");
    mac.update(ciphertext);
    mac
}

/// Packs decimal digits two per byte, low nibble first, 0xF filler.
fn bcd_pack(digits: &str) -> Vec<u8> {
    digits
        .as_bytes()
        .chunks(2)
        .map(|pair| {
            let lo = pair[0] - b'0';
            let hi = pair.get(1).map_or(0x0f, |d| d - b'0');
            (hi << 4) | lo
        })
        .collect()
}

fn bcd_unpack(bytes: &[u8]) -> Option<String> {
    let mut out = String::with_capacity(bytes.len() * 2);
    for (i, b) in bytes.iter().enumerate() {
        let (lo, hi) = (b & 0x0f, b >> 4);
        if lo > 9 {
            return None;
        }
        out.push(char::from(b'0' + lo));
        match hi {
            0..=9 => out.push(char::from(b'0' + hi)),
            0x0f if i + 1 == bytes.len() => {}
            _ => return None,
        }
    }
    Some(out)
}

/// Conceals a SUPI with an ephemeral X25519 agreement against the home
/// network key, AES-128-CTR and a truncated HMAC-SHA-256 tag.
pub fn conceal_supi<R: RngCore + CryptoRng>(
    supi: &Supi,
    routing_indicator: &RoutingIndicator,
    hn_key: &HnPublicKey,
    rng: &mut R,
) -> Result<Suci> {
    let mut seed = [0u8; X25519_LEN];
    rng.fill_bytes(&mut seed);
    let ephemeral = StaticSecret::from(seed);
    let ephemeral_public = PublicKey::from(&ephemeral).to_bytes();
    let shared = ephemeral.diffie_hellman(&PublicKey::from(hn_key.bytes));
    if !shared.was_contributory() {
        return Err(IdentityError::ConcealmentFailure(
            "home-network public key is a low-order point".into(),
        ));
    }
    let keys = suci_kdf(shared.as_bytes(), &ephemeral_public);

    let mut concealed = bcd_pack(&supi.msin);
    Aes128Ctr::new(&keys.enc_key.into(), &keys.icb.into()).apply_keystream(&mut concealed);
    let tag = suci_tag(&keys.mac_key, &concealed).finalize().into_bytes();

    let mut scheme_output = Vec::with_capacity(X25519_LEN + concealed.len() + SUCI_TAG_LEN);
    scheme_output.extend_from_slice(&ephemeral_public);
    scheme_output.extend_from_slice(&concealed);
    scheme_output.extend_from_slice(&tag[..SUCI_TAG_LEN]);

    Ok(Suci {
        mcc: supi.mcc.clone(),
        mnc: supi.mnc.clone(),
        routing_indicator: routing_indicator.clone(),
        scheme_id: SchemeId::SimEcies,
        hn_key_id: hn_key.id,
        scheme_output,
    })
}

/// SUCI under the null protection scheme: the msin travels verbatim.
pub fn null_scheme_suci(supi: &Supi, routing_indicator: &RoutingIndicator) -> Suci {
    Suci {
        mcc: supi.mcc.clone(),
        mnc: supi.mnc.clone(),
        routing_indicator: routing_indicator.clone(),
        scheme_id: SchemeId::Null,
        hn_key_id: 0,
        scheme_output: supi.msin.as_bytes().to_vec(),
    }
}

/// Recovers the SUPI from a SUCI. Never returns a SUPI other than the one
/// that was concealed: any tampering surfaces as [`IdentityError::IntegrityFailure`].
pub fn deconceal_suci(suci: &Suci, hn_key: &HomeNetworkKey) -> Result<Supi> {
    match suci.scheme_id {
        SchemeId::Null => {
            let msin = suci
                .null_scheme_msin()
                .ok_or(IdentityError::IntegrityFailure)?;
            Supi::new(&suci.mcc, &suci.mnc, msin)
        }
        SchemeId::SimEcies => {
            if suci.hn_key_id != hn_key.public.id {
                return Err(IdentityError::KeyMismatch {
                    expected: hn_key.public.id,
                    found: suci.hn_key_id,
                });
            }
            let out = &suci.scheme_output;
            if out.len() <= X25519_LEN + SUCI_TAG_LEN {
                return Err(IdentityError::IntegrityFailure);
            }
            let (ephemeral, rest) = out.split_at(X25519_LEN);
            let (concealed, tag) = rest.split_at(rest.len() - SUCI_TAG_LEN);
            let ephemeral: [u8; X25519_LEN] = ephemeral.try_into().expect("split length");
            let shared = hn_key.secret.diffie_hellman(&PublicKey::from(ephemeral));
            if !shared.was_contributory() {
                return Err(IdentityError::IntegrityFailure);
            }
            let keys = suci_kdf(shared.as_bytes(), &ephemeral);
            suci_tag(&keys.mac_key, concealed)
                .verify_truncated_left(tag)
                .map_err(|_| IdentityError::IntegrityFailure)?;
            let mut plain = concealed.to_vec();
            Aes128Ctr::new(&keys.enc_key.into(), &keys.icb.into()).apply_keystream(&mut plain);
            let msin = bcd_unpack(&plain).ok_or(IdentityError::IntegrityFailure)?;
            Supi::new(&suci.mcc, &suci.mnc, &msin)
        }
    }
}

/// Permanent Equipment Identity in IMEI layout (TAC, serial, Luhn check digit).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Pei {
    tac: String,
    snr: String,
    check_digit: u8,
}

fn luhn_check_digit(digits: &str) -> u8 {
    let sum: u32 = digits
        .bytes()
        .rev()
        .enumerate()
        .map(|(i, b)| {
            let d = u32::from(b - b'0');
            if i % 2 == 0 {
                let doubled = d * 2;
                if doubled > 9 {
                    doubled - 9
                } else {
                    doubled
                }
            } else {
                d
            }
        })
        .sum();
    ((10 - sum % 10) % 10) as u8
}

impl Pei {
    pub fn new(tac: &str, snr: &str) -> Result<Self> {
        check_digits("tac", tac, 8, 8)?;
        check_digits("snr", snr, 6, 6)?;
        let check_digit = luhn_check_digit(&format!("{tac}{snr}"));
        Ok(Self {
            tac: tac.to_owned(),
            snr: snr.to_owned(),
            check_digit,
        })
    }

    /// Parses the 15-digit form, rejecting a wrong check digit.
    pub fn parse(digits: &str) -> Result<Self> {
        let digits = digits.strip_prefix("imei-").unwrap_or(digits);
        check_digits("pei", digits, 15, 15)?;
        let pei = Self::new(&digits[..8], &digits[8..14])?;
        let given = digits.as_bytes()[14] - b'0';
        if given != pei.check_digit {
            return Err(IdentityError::InvalidField {
                field: "check_digit",
                reason: format!("expected {}, got {given}", pei.check_digit),
            });
        }
        Ok(pei)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::new(&random_digits(rng, 8), &random_digits(rng, 6)).expect("generated digits")
    }

    pub fn tac(&self) -> &str {
        &self.tac
    }

    pub fn snr(&self) -> &str {
        &self.snr
    }

    pub fn check_digit(&self) -> u8 {
        self.check_digit
    }
}

impl fmt::Display for Pei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "imei-{}{}{}", self.tac, self.snr, self.check_digit)
    }
}

impl TryFrom<String> for Pei {
    type Error = IdentityError;
    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<Pei> for String {
    fn from(p: Pei) -> String {
        p.to_string()
    }
}

pub const AMF_SET_MAX: u16 = (1 << 10) - 1;
pub const AMF_POINTER_MAX: u8 = (1 << 6) - 1;

/// 5G Globally Unique Temporary Identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "GutiFields")]
pub struct Guti {
    plmn: Plmn,
    amf_region: u8,
    amf_set: u16,
    amf_pointer: u8,
    tmsi5g: u32,
}

#[derive(Deserialize)]
struct GutiFields {
    plmn: Plmn,
    amf_region: u8,
    amf_set: u16,
    amf_pointer: u8,
    tmsi5g: u32,
}

impl TryFrom<GutiFields> for Guti {
    type Error = IdentityError;
    fn try_from(f: GutiFields) -> Result<Self> {
        Guti::new(f.plmn, f.amf_region, f.amf_set, f.amf_pointer, f.tmsi5g)
    }
}

fn check_amf_fields(amf_set: u16, amf_pointer: u8) -> Result<()> {
    if amf_set > AMF_SET_MAX {
        return Err(IdentityError::InvalidField {
            field: "amf_set",
            reason: format!("{amf_set} does not fit in 10 bits"),
        });
    }
    if amf_pointer > AMF_POINTER_MAX {
        return Err(IdentityError::InvalidField {
            field: "amf_pointer",
            reason: format!("{amf_pointer} does not fit in 6 bits"),
        });
    }
    Ok(())
}

impl Guti {
    pub fn new(plmn: Plmn, amf_region: u8, amf_set: u16, amf_pointer: u8, tmsi5g: u32) -> Result<Self> {
        check_amf_fields(amf_set, amf_pointer)?;
        Ok(Self {
            plmn,
            amf_region,
            amf_set,
            amf_pointer,
            tmsi5g,
        })
    }

    pub fn plmn(&self) -> &Plmn {
        &self.plmn
    }

    pub fn amf_region(&self) -> u8 {
        self.amf_region
    }

    pub fn amf_set(&self) -> u16 {
        self.amf_set
    }

    pub fn amf_pointer(&self) -> u8 {
        self.amf_pointer
    }

    pub fn tmsi5g(&self) -> u32 {
        self.tmsi5g
    }

    pub fn with_tmsi(&self, tmsi5g: u32) -> Self {
        Self {
            tmsi5g,
            ..self.clone()
        }
    }
}

/// 14 hex digits: region (8 bits), set (10), pointer (6), 5G-TMSI (32).
impl fmt::Display for Guti {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let amf = (u32::from(self.amf_region) << 16)
            | (u32::from(self.amf_set) << 6)
            | u32::from(self.amf_pointer);
        write!(f, "{amf:06x}{:08x}", self.tmsi5g)
    }
}

/// 5G-S-TMSI: the paging form of a GUTI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "STmsiFields")]
pub struct STmsi {
    amf_set: u16,
    amf_pointer: u8,
    tmsi5g: u32,
}

#[derive(Deserialize)]
struct STmsiFields {
    amf_set: u16,
    amf_pointer: u8,
    tmsi5g: u32,
}

impl TryFrom<STmsiFields> for STmsi {
    type Error = IdentityError;
    fn try_from(f: STmsiFields) -> Result<Self> {
        STmsi::new(f.amf_set, f.amf_pointer, f.tmsi5g)
    }
}

impl STmsi {
    pub fn new(amf_set: u16, amf_pointer: u8, tmsi5g: u32) -> Result<Self> {
        check_amf_fields(amf_set, amf_pointer)?;
        Ok(Self {
            amf_set,
            amf_pointer,
            tmsi5g,
        })
    }

    pub fn amf_set(&self) -> u16 {
        self.amf_set
    }

    pub fn amf_pointer(&self) -> u8 {
        self.amf_pointer
    }

    pub fn tmsi5g(&self) -> u32 {
        self.tmsi5g
    }
}

/// 12 hex digits: set (10 bits), pointer (6), 5G-TMSI (32).
impl fmt::Display for STmsi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let amf = (self.amf_set << 6) | u16::from(self.amf_pointer);
        write!(f, "{amf:04x}{:08x}", self.tmsi5g)
    }
}

pub fn s_tmsi_of(guti: &Guti) -> STmsi {
    STmsi {
        amf_set: guti.amf_set,
        amf_pointer: guti.amf_pointer,
        tmsi5g: guti.tmsi5g,
    }
}

/// Cell Radio Network Temporary Identity. 0x0000 and 0xFFFF are reserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct Crnti(u16);

impl Crnti {
    pub fn new(value: u16) -> Result<Self> {
        if value == 0 || value == 0xffff {
            return Err(IdentityError::InvalidField {
                field: "crnti",
                reason: format!("{value:#06x} is reserved"),
            });
        }
        Ok(Self(value))
    }

    pub fn value(self) -> u16 {
        self.0
    }
}

impl TryFrom<u16> for Crnti {
    type Error = IdentityError;
    fn try_from(v: u16) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Crnti> for u16 {
    fn from(c: Crnti) -> u16 {
        c.0
    }
}

impl fmt::Display for Crnti {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04x}", self.0)
    }
}

/// Picks a C-RNTI not held by any connected UE in the cell.
pub fn allocate_crnti<R: Rng + ?Sized>(in_use: &BTreeSet<Crnti>, rng: &mut R) -> Option<Crnti> {
    if in_use.len() >= 0xfffe {
        return None;
    }
    loop {
        let c = Crnti(rng.gen_range(1..0xffff));
        if !in_use.contains(&c) {
            return Some(c);
        }
    }
}

/// When the core refreshes a UE's GUTI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GutiUpdatePolicy {
    pub on_initial_registration: bool,
    pub on_mobility_registration: bool,
    pub on_service_request_after_paging: bool,
    pub on_periodic_registration: bool,
    /// Simulated seconds after which the GUTI is refreshed at the next contact.
    pub periodic_refresh_interval: Option<u64>,
}

impl GutiUpdatePolicy {
    pub fn compliant() -> Self {
        Self {
            on_initial_registration: true,
            on_mobility_registration: true,
            on_service_request_after_paging: true,
            on_periodic_registration: true,
            periodic_refresh_interval: None,
        }
    }

    /// All four events mandated for GUTI reallocation are covered.
    pub fn is_compliant(&self) -> bool {
        self.on_initial_registration
            && self.on_mobility_registration
            && self.on_service_request_after_paging
            && self.on_periodic_registration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GutiEvent {
    InitialRegistration,
    MobilityRegistration,
    ServiceRequestAfterPaging,
    PeriodicRegistration,
    /// `elapsed` simulated seconds since the current GUTI was assigned.
    TimerExpiry { elapsed: u64 },
}

pub fn guti_update_due(event: GutiEvent, policy: &GutiUpdatePolicy) -> bool {
    match event {
        GutiEvent::InitialRegistration => policy.on_initial_registration,
        GutiEvent::MobilityRegistration => policy.on_mobility_registration,
        GutiEvent::ServiceRequestAfterPaging => policy.on_service_request_after_paging,
        GutiEvent::PeriodicRegistration => policy.on_periodic_registration,
        GutiEvent::TimerExpiry { elapsed } => policy
            .periodic_refresh_interval
            .is_some_and(|interval| elapsed >= interval),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GutiAllocator {
    /// Fresh uniform 5G-TMSI, distinct from every live and the replaced value.
    UniformRandom,
    /// Reuses the previous 5G-TMSI or nudges it by a small step.
    StickyOrNearEqual,
}

/// Per-AMF GUTI space and the set of values currently handed out.
#[derive(Debug, Clone)]
pub struct GutiRegistry {
    plmn: Plmn,
    amf_region: u8,
    amf_set: u16,
    amf_pointer: u8,
    allocator: GutiAllocator,
    tmsi_space: u64,
    live: BTreeSet<u32>,
}

impl GutiRegistry {
    pub fn new(plmn: Plmn, amf_region: u8, amf_set: u16, amf_pointer: u8, allocator: GutiAllocator) -> Result<Self> {
        check_amf_fields(amf_set, amf_pointer)?;
        Ok(Self {
            plmn,
            amf_region,
            amf_set,
            amf_pointer,
            allocator,
            tmsi_space: 1 << 32,
            live: BTreeSet::new(),
        })
    }

    /// Restricts 5G-TMSI values to `0..space`; useful to exercise exhaustion.
    pub fn with_tmsi_space(mut self, space: u32) -> Self {
        self.tmsi_space = u64::from(space.max(1));
        self
    }

    pub fn allocator(&self) -> GutiAllocator {
        self.allocator
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    pub fn is_live(&self, guti: &Guti) -> bool {
        self.owns(guti) && self.live.contains(&guti.tmsi5g)
    }

    fn owns(&self, guti: &Guti) -> bool {
        guti.plmn == self.plmn
            && guti.amf_region == self.amf_region
            && guti.amf_set == self.amf_set
            && guti.amf_pointer == self.amf_pointer
    }

    fn make(&self, tmsi5g: u32) -> Guti {
        Guti {
            plmn: self.plmn.clone(),
            amf_region: self.amf_region,
            amf_set: self.amf_set,
            amf_pointer: self.amf_pointer,
            tmsi5g,
        }
    }

    fn draw_uniform<R: Rng + ?Sized>(&self, exclude: Option<u32>, rng: &mut R) -> Result<u32> {
        let excluded_extra = exclude.is_some_and(|t| !self.live.contains(&t)) as u64;
        if self.live.len() as u64 + excluded_extra >= self.tmsi_space {
            return Err(IdentityError::AllocationExhausted);
        }
        loop {
            let t = rng.gen_range(0..self.tmsi_space) as u32;
            if !self.live.contains(&t) && Some(t) != exclude {
                return Ok(t);
            }
        }
    }

    pub fn release(&mut self, guti: &Guti) {
        if self.owns(guti) {
            self.live.remove(&guti.tmsi5g);
        }
    }

    /// Marks an existing GUTI as held, e.g. when both old and new values must
    /// stay valid until the UE confirms a reallocation.
    pub fn retain(&mut self, guti: &Guti) {
        if self.owns(guti) {
            self.live.insert(guti.tmsi5g);
        }
    }

    /// Allocates a new GUTI for a UE that holds none in this AMF.
    pub fn allocate<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Guti> {
        let t = self.draw_uniform(None, rng)?;
        self.live.insert(t);
        Ok(self.make(t))
    }

    /// Allocates the successor of `previous`. The previous value stays live;
    /// callers release it once the UE has confirmed the new one.
    pub fn reallocate<R: Rng + ?Sized>(&mut self, previous: &Guti, rng: &mut R) -> Result<Guti> {
        if !self.owns(previous) {
            return self.allocate(rng);
        }
        let t = match self.allocator {
            GutiAllocator::UniformRandom => self.draw_uniform(Some(previous.tmsi5g), rng)?,
            GutiAllocator::StickyOrNearEqual => {
                let step = rng.gen_range(0..=2u32);
                if step == 0 {
                    previous.tmsi5g
                } else {
                    let mut t = previous.tmsi5g.wrapping_add(step);
                    let mut tries = 0u64;
                    while self.live.contains(&t) || u64::from(t) >= self.tmsi_space {
                        t = t.wrapping_add(1);
                        tries += 1;
                        if tries > self.tmsi_space {
                            return Err(IdentityError::AllocationExhausted);
                        }
                    }
                    t
                }
            }
        };
        self.live.insert(t);
        Ok(self.make(t))
    }
}

/// Free-standing form of [`GutiRegistry::allocate`].
pub fn allocate_guti<R: Rng + ?Sized>(core: &mut GutiRegistry, rng: &mut R) -> Result<Guti> {
    core.allocate(rng)
}

/// Mean fraction of 5G-TMSI bits that flip between consecutive GUTIs.
/// Uniform allocation scores about 0.5, a counter about 0.06, a constant 0.
pub fn unpredictability_score(history: &[Guti]) -> Result<f64> {
    let tmsis: Vec<u32> = history.iter().map(Guti::tmsi5g).collect();
    tmsi_unpredictability(&tmsis)
}

pub fn tmsi_unpredictability(tmsis: &[u32]) -> Result<f64> {
    if tmsis.len() < 2 {
        return Err(IdentityError::InsufficientData(tmsis.len()));
    }
    let flips: u64 = tmsis
        .windows(2)
        .map(|w| u64::from((w[0] ^ w[1]).count_ones()))
        .sum();
    let pairs = (tmsis.len() - 1) as f64;
    Ok(flips as f64 / (pairs * 32.0))
}

/// Default unpredictability threshold below which an allocator is flagged.
pub const UNPREDICTABILITY_THRESHOLD: f64 = 0.3;
