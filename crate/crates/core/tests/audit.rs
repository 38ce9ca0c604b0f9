use std::collections::BTreeSet;

use privsim::conformance::{audit_text, audit_trace, paging_scenario, registration_scenario, RuleId};
use privsim::profiles::{preset, NetworkProfile, PRESET_NAMES};
use privsim::proto::{encode_trace, Trace};

const DAY: u64 = 24 * 3600;

fn fired(trace: &Trace) -> BTreeSet<RuleId> {
    let findings = audit_trace(trace, &RuleId::all());
    for f in &findings {
        assert!(!f.events.is_empty(), "{f:?}");
        for s in &f.events {
            assert!(trace.get(*s).is_some(), "{f:?} cites missing event {s}");
        }
    }
    findings.iter().map(|f| f.rule).collect()
}

/// Registration cycles plus a multi-day paging run.
fn lifecycle(p: &NetworkProfile) -> BTreeSet<RuleId> {
    let mut all = fired(&registration_scenario(p, 5, 5).unwrap());
    all.extend(fired(&paging_scenario(p, 5, 3, DAY).unwrap()));
    all
}

fn set(rules: &[RuleId]) -> BTreeSet<RuleId> {
    rules.iter().copied().collect()
}

#[test]
fn nsa_registration_findings() {
    let t = registration_scenario(&preset("operator-nsa").unwrap(), 1, 5).unwrap();
    assert_eq!(fired(&t), set(&[RuleId::R1, RuleId::R4, RuleId::R5]));
}

#[test]
fn oai_registration_findings() {
    let t = registration_scenario(&preset("oai").unwrap(), 1, 5).unwrap();
    let rules = fired(&t);
    assert_eq!(rules, set(&[RuleId::R4, RuleId::R9]));
    assert!(!rules.contains(&RuleId::R5));
}

#[test]
fn audit_survives_encoding() {
    let t = registration_scenario(&preset("operator-nsa").unwrap(), 2, 2).unwrap();
    let direct = audit_trace(&t, &RuleId::all());
    let decoded = audit_text(&encode_trace(&t), &RuleId::all()).unwrap();
    assert_eq!(direct, decoded);
}

#[test]
fn undecodable_trace_is_an_error() {
    let err = audit_text("{\"seq\":0}\nnot json\n", &RuleId::all()).unwrap_err();
    assert_eq!(err.line, 1);
}

#[test]
fn ruleset_restricts_output() {
    let t = registration_scenario(&preset("operator-nsa").unwrap(), 1, 2).unwrap();
    let only = set(&[RuleId::R5]);
    let f = audit_trace(&t, &only);
    assert_eq!(f.len(), 1);
    assert_eq!(f[0].rule, RuleId::R5);
    assert!(f[0].explanation.contains("E7"));
}

#[test]
fn hardened_profile_is_clean() {
    assert!(lifecycle(&NetworkProfile::hardened()).is_empty());
}

/// Every rule fires somewhere. R2, R3 and R6 guard behaviors no preset
/// exhibits, so single-flag variants of a preset stand in for them.
#[test]
fn every_rule_fires_somewhere() {
    let mut seen = BTreeSet::new();
    for name in PRESET_NAMES {
        seen.extend(lifecycle(&preset(name).unwrap()));
    }
    let base = preset("operator-sa-a").unwrap();
    let variants = [
        (
            RuleId::R2,
            NetworkProfile {
                pei_only_in_secure: false,
                ..base.clone()
            },
        ),
        (
            RuleId::R3,
            NetworkProfile {
                paging_with_supi: true,
                ..base.clone()
            },
        ),
        (
            RuleId::R6,
            NetworkProfile {
                radio_caps_after_rrc_security: false,
                ..base.clone()
            },
        ),
    ];
    for (rule, p) in variants {
        assert!(!seen.contains(&rule), "{rule} already fires on a preset; drop the variant");
        let got = lifecycle(&p);
        assert!(got.contains(&rule), "{rule} silent on its variant: {got:?}");
        seen.extend(got);
    }
    assert_eq!(seen, RuleId::all());
}
