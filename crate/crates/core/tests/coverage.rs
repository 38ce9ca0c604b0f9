mod common;

use std::collections::BTreeSet;

use privsim::adversary::{interpose, run_attack, AdversaryClass, AttackId, AttackParams, Capability, FnHooks, HookAction};
use privsim::conformance::{conformance_matrix, paging_scenario, registration_scenario};
use privsim::endpoints::{AcceptancePolicy, WorldBuilder};
use privsim::profiles::{all_presets, NetworkProfile};
use privsim::proto::{encode_trace, Body, Message, MobileIdentity, NasMessage, Trace, NAS_KINDS, RRC_KINDS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corpus() -> Vec<Trace> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut profiles = all_presets();
    profiles.push(NetworkProfile::hardened());
    profiles.extend((0..20).map(|i| common::random_profile(&mut rng, &format!("fuzz-{i}"))));
    let mut out = Vec::new();
    for p in &profiles {
        out.push(registration_scenario(p, 1, 2).unwrap());
        out.push(paging_scenario(p, 1, 2, 86_400).unwrap());
        for policy in [AcceptancePolicy::Permissive, AcceptancePolicy::Strict] {
            let params = AttackParams {
                policy,
                ..AttackParams::default()
            };
            for id in AttackId::ALL {
                out.push(run_attack(id, p, &params, 1).unwrap().1);
            }
        }
    }
    out.push(corrupted_suci());
    out
}

/// A SUCI damaged in flight cannot be resolved, so registration is rejected.
fn corrupted_suci() -> Trace {
    let hooks = FnHooks::new([Capability::ModifyInFlight], |f| {
        if let Body::Clear(Message::Nas(NasMessage::IdentityResponse {
            identity: MobileIdentity::Suci(s),
        })) = &mut f.envelope.body
        {
            s.scheme_output[0] ^= 0x80;
        }
        HookAction::Pass
    });
    let ch = interpose(AdversaryClass::mitm(), Box::new(hooks)).unwrap();
    let mut w = WorldBuilder::new(all_presets()[1].clone(), 3).channel(ch).build();
    let _ = w.run_registration(0);
    assert!(w.trace.of_kind("RegistrationReject").next().is_some());
    w.trace
}

#[test]
fn every_message_kind_is_exercised() {
    let seen: BTreeSet<&str> = corpus().iter().flat_map(|t| t.events.iter().map(|e| e.kind())).collect();
    let missing: Vec<&&str> = NAS_KINDS.iter().chain(RRC_KINDS).filter(|k| !seen.contains(**k)).collect();
    assert!(missing.is_empty(), "never produced: {missing:?}");
}

#[test]
fn runs_are_reproducible() {
    let a: Vec<String> = corpus().iter().map(encode_trace).collect();
    let b: Vec<String> = corpus().iter().map(encode_trace).collect();
    assert_eq!(a, b);
    let m = |seed| {
        conformance_matrix(&all_presets(), &AttackId::ALL, seed, &AttackParams::default())
            .unwrap()
            .to_json()
    };
    assert_eq!(m(1), m(1));
}

#[test]
fn seeds_change_traces_but_not_verdicts_on_presets() {
    for p in all_presets() {
        for id in AttackId::ALL {
            let (v1, t1) = run_attack(id, &p, &AttackParams::default(), 1).unwrap();
            let (v2, t2) = run_attack(id, &p, &AttackParams::default(), 2).unwrap();
            assert_eq!(v1.outcome, v2.outcome, "{id} on {}", p.name);
            if !t1.is_empty() {
                assert_ne!(encode_trace(&t1), encode_trace(&t2), "{id} on {}", p.name);
            }
        }
    }
}
