mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use privsim::adversary::{run_attack, AttackId, AttackParams};
use privsim::identity::{
    conceal_supi, deconceal_suci, tmsi_unpredictability, HomeNetworkKey, RoutingIndicator, Supi,
};
use privsim::profiles::{parse_profile, to_toml};
use privsim::proto::{decode_trace, encode_trace};
use privsim::secctx::{
    cipher, compute_mac, decipher, derive_context, select_algorithms, verify_mac, AlgorithmPair,
    AlgorithmPreference, CipherAlg, Direction, IntegrityAlg, KeyScope, SecurityCapabilities,
};

fn alg_pair() -> impl Strategy<Value = AlgorithmPair> {
    (0..CipherAlg::ALL.len(), 0..IntegrityAlg::ALL.len()).prop_map(|(c, i)| AlgorithmPair {
        nea: CipherAlg::ALL[c],
        nia: IntegrityAlg::ALL[i],
    })
}

fn direction() -> impl Strategy<Value = Direction> {
    prop_oneof![Just(Direction::Uplink), Just(Direction::Downlink)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn profiles_survive_toml(seed in any::<u64>()) {
        let p = common::random_profile(&mut ChaCha8Rng::seed_from_u64(seed), "p");
        prop_assert_eq!(parse_profile(&to_toml(&p)).unwrap(), p);
    }

    #[test]
    fn traces_survive_jsonl(seed in any::<u64>(), attack in 0..AttackId::ALL.len()) {
        let p = common::random_profile(&mut ChaCha8Rng::seed_from_u64(seed), "p");
        let (_, t) = run_attack(AttackId::ALL[attack], &p, &AttackParams::default(), seed).unwrap();
        let text = encode_trace(&t);
        prop_assert_eq!(text.lines().count(), t.len());
        prop_assert_eq!(decode_trace(&text).unwrap(), t);
    }

    #[test]
    fn suci_round_trips(msin in "[0-9]{9,10}", key_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(key_seed);
        let hn = HomeNetworkKey::generate(3, &mut rng);
        let supi = Supi::new("262", "01", &msin).unwrap();
        let suci = conceal_supi(&supi, &RoutingIndicator::default(), hn.public(), &mut rng).unwrap();
        prop_assert_eq!(deconceal_suci(&suci, &hn).unwrap(), supi);
        let other = HomeNetworkKey::generate(3, &mut rng);
        prop_assert!(deconceal_suci(&suci, &other).is_err());
    }

    #[test]
    fn mac_binds_key_direction_and_count(
        master in any::<[u8; 32]>(),
        pair in alg_pair(),
        dir in direction(),
        count in any::<u32>(),
        msg in proptest::collection::vec(any::<u8>(), 0..64),
    ) {
        let ctx = derive_context(&master, KeyScope::Nas, pair);
        let tag = compute_mac(&ctx, dir, count, &msg);
        prop_assert!(verify_mac(&ctx, dir, count, &msg, tag));
        if !pair.nia.is_null() {
            let other_dir = match dir { Direction::Uplink => Direction::Downlink, Direction::Downlink => Direction::Uplink };
            prop_assert!(!verify_mac(&ctx, other_dir, count, &msg, tag));
            prop_assert!(!verify_mac(&ctx, dir, count.wrapping_add(1), &msg, tag));
            let rrc = derive_context(&master, KeyScope::Rrc, pair);
            prop_assert!(!verify_mac(&rrc, dir, count, &msg, tag));
        }
    }

    #[test]
    fn ciphering_round_trips(
        master in any::<[u8; 32]>(),
        pair in alg_pair(),
        dir in direction(),
        count in any::<u32>(),
        msg in proptest::collection::vec(any::<u8>(), 1..64),
    ) {
        let ctx = derive_context(&master, KeyScope::Nas, pair);
        let ct = cipher(&ctx, dir, count, &msg);
        prop_assert_eq!(ct.len(), msg.len());
        prop_assert_eq!(ct == msg, pair.nea.is_null());
        prop_assert_eq!(decipher(&ctx, dir, count, &ct), msg);
    }

    /// Selection returns the first preferred algorithm the UE supports.
    #[test]
    fn selection_follows_preference(
        caps in (any::<[bool; 4]>(), any::<[bool; 3]>()),
        order in Just(CipherAlg::ALL.to_vec()).prop_shuffle(),
    ) {
        let ue = SecurityCapabilities::new(
            CipherAlg::ALL.into_iter().zip(caps.0).filter(|(_, b)| *b).map(|(a, _)| a),
            IntegrityAlg::ALL.into_iter().zip(caps.1).filter(|(_, b)| *b).map(|(a, _)| a),
        );
        let pref = AlgorithmPreference { ciphering: order.clone(), integrity: IntegrityAlg::ALL.to_vec() };
        let expected_nea = order.iter().find(|a| ue.ciphering.contains(a));
        let expected_nia = IntegrityAlg::ALL.iter().find(|a| ue.integrity.contains(a));
        match (select_algorithms(&ue, &pref), expected_nea, expected_nia) {
            (Ok(p), Some(c), Some(i)) => prop_assert_eq!((p.nea, p.nia), (*c, *i)),
            (Err(_), c, i) => prop_assert!(c.is_none() || i.is_none()),
            (Ok(p), _, _) => prop_assert!(false, "selected {:?} from {:?}", p, ue),
        }
    }

    #[test]
    fn score_is_mean_bit_flip_fraction(tmsis in proptest::collection::vec(any::<u32>(), 2..50)) {
        let score = tmsi_unpredictability(&tmsis).unwrap();
        let mut bits = 0u32;
        for w in tmsis.windows(2) {
            for b in 0..32 {
                bits += u32::from((w[0] >> b) & 1 != (w[1] >> b) & 1);
            }
        }
        let oracle = f64::from(bits) / (32.0 * (tmsis.len() - 1) as f64);
        prop_assert!((score - oracle).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&score));
    }
}
