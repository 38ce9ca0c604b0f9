//! Per-deployment feature flags and the presets for the measured networks.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::{GutiAllocator, GutiUpdatePolicy};
use crate::secctx::{AlgorithmPreference, CipherAlg, IntegrityAlg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigUpdateProtection {
    pub integrity: bool,
    pub cipher: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkProfile {
    pub name: String,
    pub supports_suci: bool,
    pub guti_policy: GutiUpdatePolicy,
    pub guti_allocator: GutiAllocator,
    pub nas_ciphering: CipherAlg,
    pub rrc_ciphering: CipherAlg,
    pub include_mac_in_smc: bool,
    pub protect_config_update: ConfigUpdateProtection,
    pub config_update_ack: bool,
    pub pei_only_in_secure: bool,
    pub radio_caps_after_rrc_security: bool,
    pub context_survives_idle: bool,
    /// Page with the permanent identity instead of the 5G-S-TMSI.
    #[serde(default)]
    pub paging_with_supi: bool,
}

pub const PRESET_NAMES: [&str; 5] = ["operator-nsa", "operator-sa-a", "operator-sa-b", "operator-sa-c", "oai"];

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("unknown profile {name:?}; valid presets: {}", PRESET_NAMES.join(", "))]
    UnknownPreset { name: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid profile at `{path}`: {message}")]
    Parse { path: String, message: String },
}

fn descending_from(top: CipherAlg) -> Vec<CipherAlg> {
    let mut algs: Vec<CipherAlg> = CipherAlg::ALL.iter().copied().filter(|a| *a <= top).collect();
    algs.reverse();
    algs
}

impl NetworkProfile {
    pub fn nas_preference(&self) -> AlgorithmPreference {
        AlgorithmPreference {
            ciphering: descending_from(self.nas_ciphering),
            integrity: vec![IntegrityAlg::NIA2, IntegrityAlg::NIA1, IntegrityAlg::NIA0],
        }
    }

    pub fn rrc_preference(&self) -> AlgorithmPreference {
        AlgorithmPreference {
            ciphering: descending_from(self.rrc_ciphering),
            integrity: vec![IntegrityAlg::NIA2, IntegrityAlg::NIA1, IntegrityAlg::NIA0],
        }
    }

    /// Every privacy mechanism switched on.
    pub fn hardened() -> Self {
        Self {
            name: "hardened".into(),
            supports_suci: true,
            guti_policy: GutiUpdatePolicy {
                periodic_refresh_interval: Some(3600),
                ..GutiUpdatePolicy::compliant()
            },
            guti_allocator: GutiAllocator::UniformRandom,
            nas_ciphering: CipherAlg::NEA2,
            rrc_ciphering: CipherAlg::NEA2,
            include_mac_in_smc: true,
            protect_config_update: ConfigUpdateProtection {
                integrity: true,
                cipher: true,
            },
            config_update_ack: true,
            pei_only_in_secure: true,
            radio_caps_after_rrc_security: true,
            context_survives_idle: true,
            paging_with_supi: false,
        }
    }
}

fn operator_sa(name: &str, paging_update: bool, refresh: Option<u64>) -> NetworkProfile {
    NetworkProfile {
        name: name.into(),
        supports_suci: true,
        guti_policy: GutiUpdatePolicy {
            on_service_request_after_paging: paging_update,
            periodic_refresh_interval: refresh,
            ..GutiUpdatePolicy::compliant()
        },
        guti_allocator: GutiAllocator::UniformRandom,
        nas_ciphering: CipherAlg::NEA2,
        rrc_ciphering: CipherAlg::NEA0,
        include_mac_in_smc: false,
        protect_config_update: ConfigUpdateProtection {
            integrity: false,
            cipher: false,
        },
        config_update_ack: true,
        pei_only_in_secure: true,
        radio_caps_after_rrc_security: true,
        context_survives_idle: false,
        paging_with_supi: false,
    }
}

pub fn preset(name: &str) -> Result<NetworkProfile, ProfileError> {
    let p = match name {
        "operator-nsa" => NetworkProfile {
            name: name.into(),
            supports_suci: false,
            guti_policy: GutiUpdatePolicy {
                on_service_request_after_paging: false,
                ..GutiUpdatePolicy::compliant()
            },
            nas_ciphering: CipherAlg::NEA0,
            ..operator_sa(name, false, None)
        },
        "operator-sa-a" => operator_sa(name, false, None),
        "operator-sa-b" => operator_sa(name, true, Some(90 * 60)),
        "operator-sa-c" => operator_sa(name, true, Some(120 * 60)),
        "oai" => NetworkProfile {
            name: name.into(),
            supports_suci: true,
            guti_policy: GutiUpdatePolicy {
                on_initial_registration: true,
                on_mobility_registration: true,
                on_service_request_after_paging: false,
                on_periodic_registration: false,
                periodic_refresh_interval: None,
            },
            guti_allocator: GutiAllocator::StickyOrNearEqual,
            nas_ciphering: CipherAlg::NEA2,
            rrc_ciphering: CipherAlg::NEA0,
            include_mac_in_smc: true,
            protect_config_update: ConfigUpdateProtection {
                integrity: true,
                cipher: true,
            },
            config_update_ack: true,
            pei_only_in_secure: true,
            radio_caps_after_rrc_security: true,
            context_survives_idle: true,
            paging_with_supi: false,
        },
        _ => return Err(ProfileError::UnknownPreset { name: name.into() }),
    };
    Ok(p)
}

pub fn all_presets() -> Vec<NetworkProfile> {
    PRESET_NAMES.iter().map(|n| preset(n).expect("preset names are valid")).collect()
}

pub fn parse_profile(text: &str) -> Result<NetworkProfile, ProfileError> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| ProfileError::Parse {
        path: e.path().to_string(),
        message: e.inner().message().to_string(),
    })
}

/// Reads a TOML profile whose keys mirror [`NetworkProfile`] one-to-one.
pub fn load_profile(path: &Path) -> Result<NetworkProfile, ProfileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ProfileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_profile(&text)
}

pub fn to_toml(profile: &NetworkProfile) -> String {
    toml::to_string(profile).expect("profiles always serialize")
}

/// A profile given either as a preset name or a path to a TOML file.
pub fn resolve_profile(spec: &str) -> Result<NetworkProfile, ProfileError> {
    match preset(spec) {
        Ok(p) => Ok(p),
        Err(e) if !Path::new(spec).is_file() => Err(e),
        Err(_) => load_profile(Path::new(spec)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Enhancement {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    E7,
}

impl Enhancement {
    pub const ALL: [Enhancement; 7] = [Self::E1, Self::E2, Self::E3, Self::E4, Self::E5, Self::E6, Self::E7];

    pub fn mechanism(self) -> &'static str {
        match self {
            Self::E1 => "SUPI concealment (SUCI)",
            Self::E2 => "paging with 5G-S-TMSI only",
            Self::E3 => "PEI only over a secure channel",
            Self::E4 => "strict and unpredictable 5G-GUTI reallocation",
            Self::E5 => "RRC ciphering",
            Self::E6 => "radio capabilities after RRC security",
            Self::E7 => "MAC on the enhanced NAS Security Mode Command",
        }
    }
}

impl fmt::Display for Enhancement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComplianceFinding {
    pub enhancement: Enhancement,
    pub mechanism: &'static str,
    pub detail: String,
}

pub fn satisfies(profile: &NetworkProfile, e: Enhancement) -> bool {
    match e {
        Enhancement::E1 => profile.supports_suci,
        Enhancement::E2 => !profile.paging_with_supi,
        Enhancement::E3 => profile.pei_only_in_secure,
        Enhancement::E4 => {
            profile.guti_policy.is_compliant() && profile.guti_allocator == GutiAllocator::UniformRandom
        }
        Enhancement::E5 => !profile.rrc_ciphering.is_null(),
        Enhancement::E6 => profile.radio_caps_after_rrc_security,
        Enhancement::E7 => profile.include_mac_in_smc,
    }
}

pub fn validate(profile: &NetworkProfile) -> Vec<ComplianceFinding> {
    Enhancement::ALL
        .into_iter()
        .filter(|e| !satisfies(profile, *e))
        .map(|e| {
            let detail = match e {
                Enhancement::E1 => "identity requests ask for the IMSI in clear".to_owned(),
                Enhancement::E2 => "paging carries the SUPI".to_owned(),
                Enhancement::E3 => "PEI may be requested before NAS security".to_owned(),
                Enhancement::E4 => {
                    let p = &profile.guti_policy;
                    let mut gaps = Vec::new();
                    for (on, what) in [
                        (p.on_initial_registration, "initial registration"),
                        (p.on_mobility_registration, "mobility registration"),
                        (p.on_service_request_after_paging, "service request after paging"),
                        (p.on_periodic_registration, "periodic registration"),
                    ] {
                        if !on {
                            gaps.push(format!("no reallocation on {what}"));
                        }
                    }
                    if profile.guti_allocator != GutiAllocator::UniformRandom {
                        gaps.push("predictable allocator".to_owned());
                    }
                    gaps.join("; ")
                }
                Enhancement::E5 => format!("RRC ciphering is {}", profile.rrc_ciphering),
                Enhancement::E6 => "UE capability enquiry precedes RRC security".to_owned(),
                Enhancement::E7 => "NAS Security Mode Command carries no MAC".to_owned(),
            };
            ComplianceFinding {
                enhancement: e,
                mechanism: e.mechanism(),
                detail,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::{guti_update_due, GutiEvent};

    fn enhancements(p: &NetworkProfile) -> Vec<Enhancement> {
        validate(p).into_iter().map(|f| f.enhancement).collect()
    }

    #[test]
    fn preset_facts() {
        assert!(!preset("operator-nsa").unwrap().supports_suci);
        assert!(preset("oai").unwrap().include_mac_in_smc);
        assert_eq!(
            preset("operator-sa-b").unwrap().protect_config_update,
            ConfigUpdateProtection {
                integrity: false,
                cipher: false
            }
        );
        let err = preset("operator-sa-z").unwrap_err().to_string();
        for n in PRESET_NAMES {
            assert!(err.contains(n));
        }
    }

    #[test]
    fn paging_update_per_preset() {
        let due = |n: &str, e| guti_update_due(e, &preset(n).unwrap().guti_policy);
        assert!(due("operator-sa-b", GutiEvent::ServiceRequestAfterPaging));
        assert!(!due("operator-nsa", GutiEvent::ServiceRequestAfterPaging));
        assert!(due("operator-sa-b", GutiEvent::TimerExpiry { elapsed: 90 * 60 }));
        assert!(!due("operator-sa-c", GutiEvent::TimerExpiry { elapsed: 90 * 60 }));
        // The sticky SA network never refreshes on a timer.
        assert!(!due("operator-sa-a", GutiEvent::TimerExpiry { elapsed: 90 * 60 }));
    }

    #[test]
    fn findings() {
        assert!(validate(&NetworkProfile::hardened()).is_empty());
        use Enhancement::*;
        assert_eq!(enhancements(&preset("operator-nsa").unwrap()), vec![E1, E4, E5, E7]);
        assert_eq!(enhancements(&preset("oai").unwrap()), vec![E4, E5]);
    }

    #[test]
    fn toml_round_trip_and_errors() {
        for p in all_presets() {
            assert_eq!(parse_profile(&to_toml(&p)).unwrap(), p);
        }
        let text = to_toml(&preset("oai").unwrap()).replace("include_mac_in_smc = true\n", "");
        let err = parse_profile(&text).unwrap_err().to_string();
        assert!(err.contains("include_mac_in_smc"), "{err}");
        let text = to_toml(&preset("oai").unwrap()).replace("on_periodic_registration = false", "on_periodic_registration = 3");
        let err = parse_profile(&text).unwrap_err().to_string();
        assert!(err.contains("guti_policy.on_periodic_registration"), "{err}");
    }
}
