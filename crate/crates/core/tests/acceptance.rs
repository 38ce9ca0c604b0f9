//! Acceptance gate: each criterion runs at its stated size and tolerance and
//! prints one PASS/FAIL line. The test fails if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use hmac::{Hmac, Mac};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::Sha256;

use privsim::adversary::{run_attack, AttackId, AttackParams, Outcome};
use privsim::cli;
use privsim::conformance::{audit_trace, conformance_matrix, registration_scenario, RuleId};
use privsim::endpoints::{AcceptancePolicy, UePhase, WorldBuilder};
use privsim::identity::{
    conceal_supi, deconceal_suci, tmsi_unpredictability, unpredictability_score, GutiAllocator, GutiRegistry,
    HomeNetworkKey, Plmn, RoutingIndicator, Supi, UNPREDICTABILITY_THRESHOLD,
};
use privsim::profiles::{all_presets, preset, ConfigUpdateProtection, NetworkProfile, PRESET_NAMES};
use privsim::proto::{
    decode_trace, encode_trace, open_command, protect_command, Body, Message, NasMessage, SecurityEnvelope,
};
use privsim::secctx::{
    compute_mac_with, derive_context, smc_integrity_algorithm, AlgorithmPair, CipherAlg, Direction, IntegrityAlg, KeyScope, MacTag,
    SecurityCapabilities,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// --- 1 ---------------------------------------------------------------------

fn expected_grid(attack: AttackId, profile: &str) -> Outcome {
    use Outcome::*;
    let nsa = profile == "operator-nsa";
    let oai = profile == "oai";
    match attack {
        AttackId::ImsiCatching if nsa => Vulnerable,
        AttackId::ImsiCatching | AttackId::ImsiPagingProbe | AttackId::ImeiCatching => Mitigated,
        AttackId::TmsiLinkability => match profile {
            "operator-sa-b" | "operator-sa-c" => Mitigated,
            _ => Vulnerable,
        },
        AttackId::CrntiTracking | AttackId::UeMeasurementReports => Vulnerable,
        AttackId::SecurityCapsBiddingDown if oai => Mitigated,
        AttackId::SecurityCapsBiddingDown => PartiallyMitigated,
        AttackId::RadioCapsBiddingDown => Mitigated,
        other => panic!("{other} is not a matrix row"),
    }
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let report = conformance_matrix(&all_presets(), &AttackId::LEGACY, privsim::DEFAULT_SEED, &AttackParams::default())
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut mismatches = Vec::new();
    for attack in AttackId::LEGACY {
        for name in PRESET_NAMES {
            let got = report.outcome(attack, name);
            let want = expected_grid(attack, name);
            if got != Some(want) {
                mismatches.push(format!("{attack}/{name}: got {got:?}, want {want}"));
            }
        }
    }
    ensure(mismatches.is_empty(), || mismatches.join("; "))?;
    ensure(elapsed.as_secs_f64() < 10.0, || format!("took {elapsed:?}"))?;
    Ok(format!("40/40 cells match, {:.2}s", elapsed.as_secs_f64()))
}

// --- 2 ---------------------------------------------------------------------

fn outcome(id: AttackId, p: &NetworkProfile, policy: AcceptancePolicy, seed: u64) -> Result<Outcome, String> {
    let params = AttackParams {
        policy,
        ..AttackParams::default()
    };
    run_attack(id, p, &params, seed)
        .map(|(v, _)| v.outcome)
        .map_err(|e| format!("{id} on {}: {e}", p.name))
}

fn criterion_2() -> Check {
    let mut checked = 0;
    for name in ["operator-sa-b", "operator-sa-c"] {
        let p = preset(name).unwrap();
        let protected = NetworkProfile {
            protect_config_update: ConfigUpdateProtection {
                integrity: true,
                cipher: true,
            },
            ..p.clone()
        };
        for id in [AttackId::GutiReallocDos, AttackId::GutiReallocTracking] {
            let got = outcome(id, &p, AcceptancePolicy::Permissive, 21)?;
            ensure(got == Outcome::Vulnerable, || format!("{id} on {name}: {got}"))?;
            let got = outcome(id, &protected, AcceptancePolicy::Permissive, 21)?;
            ensure(got == Outcome::Mitigated, || format!("{id} on protected {name}: {got}"))?;
            checked += 2;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut acked: Vec<NetworkProfile> = all_presets().into_iter().filter(|p| p.config_update_ack).collect();
    acked.push(NetworkProfile::hardened());
    acked.extend((0..30).map(|i| NetworkProfile {
        config_update_ack: true,
        ..common::random_profile(&mut rng, &format!("fuzz-{i}"))
    }));
    for p in &acked {
        let got = outcome(AttackId::GutiRefreshNeutralization, p, AcceptancePolicy::Permissive, 22)?;
        ensure(got == Outcome::Mitigated, || format!("neutralization on {}: {got}", p.name))?;
        checked += 1;
    }
    Ok(format!("{checked} verdicts exact"))
}

// --- 3 ---------------------------------------------------------------------

fn criterion_3() -> Check {
    let id = AttackId::SecurityCapsBiddingDownExtended;
    let mut checked = 0;
    for p in all_presets() {
        if !p.include_mac_in_smc {
            let got = outcome(id, &p, AcceptancePolicy::Permissive, 31)?;
            ensure(got == Outcome::Vulnerable, || format!("{} permissive: {got}", p.name))?;
            checked += 1;
        }
        let with_mac = NetworkProfile {
            include_mac_in_smc: true,
            ..p.clone()
        };
        let got = outcome(id, &with_mac, AcceptancePolicy::Strict, 32)?;
        ensure(got == Outcome::Mitigated, || format!("{} strict+MAC: {got}", p.name))?;
        checked += 1;
    }
    let got = outcome(id, &preset("oai").unwrap(), AcceptancePolicy::Permissive, 33)?;
    ensure(got == Outcome::Mitigated, || format!("oai: {got}"))?;
    Ok(format!("{} verdicts exact", checked + 1))
}

// --- 4 ---------------------------------------------------------------------

fn criterion_4() -> Check {
    const N: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let hn = HomeNetworkKey::generate(1, &mut rng);
    let plmn = Plmn::new("001", "01").unwrap();
    let ri = RoutingIndicator::default();
    let mut outputs = BTreeSet::new();
    let mut corruptions = 0usize;
    for i in 0..N {
        let supi = Supi::random(&plmn, if i % 2 == 0 { 10 } else { 9 }, &mut rng);
        let suci = conceal_supi(&supi, &ri, hn.public(), &mut rng).map_err(|e| e.to_string())?;
        let back = deconceal_suci(&suci, &hn).map_err(|e| format!("round trip {i}: {e}"))?;
        ensure(back == supi, || format!("round trip {i} returned {back}"))?;
        let again = conceal_supi(&supi, &ri, hn.public(), &mut rng).map_err(|e| e.to_string())?;
        ensure(again.scheme_output != suci.scheme_output, || format!("repeat concealment {i} identical"))?;
        outputs.insert(suci.scheme_output.clone());
        for text in [serde_json::to_string(&suci).unwrap(), suci.to_string()] {
            ensure(!text.contains(supi.msin()), || format!("msin visible in {text}"))?;
        }
        for pos in 0..suci.scheme_output.len() {
            let mut bad = suci.clone();
            bad.scheme_output[pos] ^= rng.gen_range(1..=255u8);
            ensure(deconceal_suci(&bad, &hn).is_err(), || format!("corruption at byte {pos} accepted"))?;
            corruptions += 1;
        }
    }
    ensure(outputs.len() == N, || format!("{} distinct of {N}", outputs.len()))?;
    Ok(format!("{N} round trips, {N} distinct, {corruptions} corruptions rejected"))
}

// --- 5 ---------------------------------------------------------------------

/// Independent recomputation of a Security Mode Command tag from the master
/// key. The key is derived for the negotiated algorithm; a negotiated NIA0
/// is replaced by NIA2 in the tag computation itself.
fn oracle_tag(master: &[u8; 32], negotiated: IntegrityAlg, dir: Direction, count: u32, bytes: &[u8]) -> MacTag {
    let id = |a: IntegrityAlg| IntegrityAlg::ALL.iter().position(|x| *x == a).unwrap() as u8;
    let keyed_with = if negotiated == IntegrityAlg::NIA0 { IntegrityAlg::NIA2 } else { negotiated };
    let mut kdf = Hmac::<Sha256>::new_from_slice(master).unwrap();
    kdf.update(b"nas-int");
    kdf.update(&[id(negotiated)]);
    let key = kdf.finalize().into_bytes();
    let mut mac = Hmac::<Sha256>::new_from_slice(&key[..16]).unwrap();
    let dir_bit = u8::from(dir == Direction::Downlink);
    mac.update(&[id(keyed_with), dir_bit, 0]);
    mac.update(&count.to_be_bytes());
    mac.update(bytes);
    let out = mac.finalize().into_bytes();
    MacTag(u32::from_be_bytes([out[0], out[1], out[2], out[3]]))
}

fn random_caps<R: Rng>(rng: &mut R) -> SecurityCapabilities {
    let nea: Vec<_> = CipherAlg::ALL.into_iter().filter(|_| rng.gen()).collect();
    let nia: Vec<_> = IntegrityAlg::ALL.into_iter().filter(|_| rng.gen()).collect();
    SecurityCapabilities::new(nea, nia)
}

fn criterion_5() -> Check {
    const TRIALS: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut accepted, mut reparsed) = (0usize, 0usize);
    for trial in 0..TRIALS {
        let mut master = [0u8; 32];
        rng.fill_bytes(&mut master);
        let selected = AlgorithmPair {
            nea: CipherAlg::ALL[rng.gen_range(0..CipherAlg::ALL.len())],
            nia: IntegrityAlg::ALL[rng.gen_range(0..IntegrityAlg::ALL.len())],
        };
        let msg = Message::Nas(NasMessage::SecurityModeCommand {
            replayed_caps: random_caps(&mut rng),
            selected,
            request_pei: rng.gen(),
        });
        let mut net = derive_context(&master, KeyScope::Nas, selected);
        for _ in 0..rng.gen_range(0..3) {
            net.next_count(Direction::Downlink).unwrap();
        }
        let env = protect_command(msg.clone(), &mut net, Direction::Downlink, None).map_err(|e| e.to_string())?;
        let tag = env.mac.expect("command carries a tag");
        let bytes = msg.to_bytes();
        ensure(tag == oracle_tag(&master, selected.nia, Direction::Downlink, env.count, &bytes), || {
            format!("trial {trial}: tag differs from oracle")
        })?;

        // One bit anywhere in payload ‖ tag ‖ count.
        let (mut b, mut t, mut c) = (bytes.clone(), tag.0, env.count);
        let bit = rng.gen_range(0..b.len() * 8 + 64);
        match bit {
            x if x < b.len() * 8 => b[x / 8] ^= 1 << (x % 8),
            x if x < b.len() * 8 + 32 => t ^= 1 << (x - b.len() * 8),
            x => c ^= 1 << (x - b.len() * 8 - 32),
        }
        let ue = derive_context(&master, KeyScope::Nas, selected);
        let smc_alg = smc_integrity_algorithm(selected);
        if compute_mac_with(&ue, smc_alg, Direction::Downlink, c, &b) == MacTag(t) {
            accepted += 1;
        }
        // Receiver route: a tampered payload that still decodes must fail the check.
        if let Some(m) = Message::from_bytes(&b) {
            reparsed += 1;
            let mut tampered = SecurityEnvelope {
                body: Body::Clear(m),
                mac: Some(MacTag(t)),
                count: c,
                ..env.clone()
            };
            tampered.integrity_protected = true;
            if open_command(&tampered, &mut ue.clone(), Direction::Downlink).is_ok() {
                accepted += 1;
            }
        }
    }
    ensure(accepted == 0, || format!("{accepted} of {TRIALS} tampered commands accepted"))?;
    Ok(format!("0/{TRIALS} accepted ({reparsed} tampered payloads still decoded)"))
}

// --- 6 ---------------------------------------------------------------------

fn chain_score(allocator: GutiAllocator, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reg = GutiRegistry::new(Plmn::new("001", "01").unwrap(), 1, 4, 1, allocator).unwrap();
    let mut g = reg.allocate(&mut rng).unwrap();
    let mut hist = vec![g.clone()];
    for _ in 0..pairs {
        let next = reg.reallocate(&g, &mut rng).unwrap();
        reg.release(&g);
        g = next;
        hist.push(g.clone());
    }
    unpredictability_score(&hist).unwrap()
}

fn criterion_6() -> Check {
    const PAIRS: usize = 10_000;
    let uniform = chain_score(GutiAllocator::UniformRandom, PAIRS, 6);
    ensure((uniform - 0.5).abs() <= 0.02, || format!("uniform scores {uniform}"))?;
    let constant = tmsi_unpredictability(&vec![0x1234_5678; PAIRS + 1]).unwrap();
    ensure(constant == 0.0, || format!("constant scores {constant}"))?;
    let sticky = chain_score(GutiAllocator::StickyOrNearEqual, PAIRS, 6);
    ensure(sticky < UNPREDICTABILITY_THRESHOLD, || format!("sticky scores {sticky}"))?;
    let t = registration_scenario(&preset("oai").unwrap(), 6, 5).map_err(|e| e.to_string())?;
    let r9 = audit_trace(&t, &[RuleId::R9].into());
    ensure(!r9.is_empty(), || "R9 silent on the OAI trace".into())?;
    Ok(format!("uniform {uniform:.4}, constant {constant}, sticky {sticky:.4}, R9 fires"))
}

// --- 7 ---------------------------------------------------------------------

fn criterion_7() -> Check {
    const PROFILES: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut completed, mut weak) = (0, 0);
    for i in 0..PROFILES {
        let p = common::random_profile(&mut rng, &format!("fuzz-{i}"));
        let seed = rng.next_u64();
        let mut w = WorldBuilder::new(p.clone(), seed).bystanders(0).build();
        let phase = w.run_registration(0).map_err(|e| format!("{}: {e}", p.name))?;
        if phase == UePhase::Connected {
            completed += 1;
            let pos = |k: &str| w.trace.events.iter().position(|e| e.kind() == k);
            let (smc, enq) = (pos("RrcSecurityModeComplete"), pos("UeCapabilityEnquiry"));
            if p.radio_caps_after_rrc_security {
                ensure(matches!((smc, enq), (Some(s), Some(e)) if e > s), || {
                    format!("{}: enquiry at {enq:?}, RRC SMC complete at {smc:?}", p.name)
                })?;
            }
        }
        if !p.radio_caps_after_rrc_security {
            weak += 1;
            let got = outcome(AttackId::RadioCapsBiddingDown, &p, AcceptancePolicy::Permissive, seed)?;
            ensure(got == Outcome::Vulnerable, || format!("{}: radio caps bidding-down {got}", p.name))?;
        }
    }
    ensure(completed > PROFILES / 2, || format!("only {completed} registrations completed"))?;
    Ok(format!(
        "{completed}/{PROFILES} completed, ordering holds where required; {weak} pre-security profiles Vulnerable"
    ))
}

// --- 8 ---------------------------------------------------------------------

fn cli_outputs(dir: &std::path::Path) -> Vec<Vec<u8>> {
    let d = dir.display();
    let commands: Vec<Vec<String>> = [
        format!("simulate --profile operator-sa-b --seed 8 --trace {d}/base.jsonl"),
        format!("simulate --profile operator-sa-a --attack security_caps_bidding_down_extended --seed 8 --trace {d}/a.jsonl --format structured"),
        format!("matrix --seed 8 --out {d}/m.json --format structured --attacks all --combined"),
        "matrix --seed 8".to_owned(),
        format!("audit --trace {d}/base.jsonl"),
        "list-profiles".to_owned(),
        "explain smc-mac".to_owned(),
    ]
    .iter()
    .map(|c| c.split(' ').map(str::to_owned).collect())
    .collect();
    let mut outs = Vec::new();
    for args in commands {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = cli::run(std::iter::once("privsim".to_owned()).chain(args), &mut o, &mut e);
        outs.push(format!("exit {code}").into_bytes());
        outs.push(o);
        outs.push(e);
    }
    for f in ["base.jsonl", "a.jsonl", "m.json"] {
        outs.push(std::fs::read(dir.join(f)).unwrap_or_default());
    }
    outs
}

fn criterion_8() -> Check {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (oa, ob) = (cli_outputs(a.path()), cli_outputs(b.path()));
    ensure(oa == ob, || "CLI outputs differ between identical runs".into())?;
    // Layout per command: exit code, stdout, stderr; then the written files.
    ensure(oa[..21].iter().step_by(3).all(|o| o == b"exit 0"), || "a command failed".into())?;

    const TRACES: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut events = 0;
    for i in 0..TRACES {
        let p = common::random_profile(&mut rng, &format!("fuzz-{i}"));
        let id = AttackId::ALL[rng.gen_range(0..AttackId::ALL.len())];
        let params = AttackParams {
            bystanders: rng.gen_range(0..2),
            ..AttackParams::default()
        };
        let (_, t) = run_attack(id, &p, &params, rng.next_u64()).map_err(|e| format!("{id}: {e}"))?;
        let text = encode_trace(&t);
        let back = decode_trace(&text).map_err(|e| format!("trace {i}: {e}"))?;
        ensure(back == t, || format!("trace {i} ({id} on fuzzed profile) changed in round trip"))?;
        ensure(encode_trace(&back) == text, || format!("trace {i} re-encodes differently"))?;
        events += t.len();
    }
    Ok(format!("7 commands byte-identical; {TRACES} traces ({events} events) round-trip"))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        ("matrix reproduction", criterion_1),
        ("new GUTI reallocation vulnerabilities", criterion_2),
        ("extended bidding-down", criterion_3),
        ("SUCI properties", criterion_4),
        ("MAC tamper suite", criterion_5),
        ("GUTI statistics", criterion_6),
        ("capability ordering", criterion_7),
        ("determinism", criterion_8),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
