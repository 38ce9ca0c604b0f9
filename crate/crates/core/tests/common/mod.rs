#![allow(dead_code)]

use privsim::identity::{GutiAllocator, GutiUpdatePolicy};
use privsim::profiles::{ConfigUpdateProtection, NetworkProfile};
use privsim::secctx::CipherAlg;
use rand::Rng;

/// Profile with every flag drawn independently.
pub fn random_profile<R: Rng>(rng: &mut R, name: &str) -> NetworkProfile {
    let alg = |rng: &mut R| CipherAlg::ALL[rng.gen_range(0..CipherAlg::ALL.len())];
    NetworkProfile {
        name: name.to_owned(),
        supports_suci: rng.gen(),
        guti_policy: GutiUpdatePolicy {
            on_initial_registration: rng.gen(),
            on_mobility_registration: rng.gen(),
            on_service_request_after_paging: rng.gen(),
            on_periodic_registration: rng.gen(),
            periodic_refresh_interval: rng.gen_bool(0.5).then(|| rng.gen_range(60..200_000)),
        },
        guti_allocator: if rng.gen() {
            GutiAllocator::UniformRandom
        } else {
            GutiAllocator::StickyOrNearEqual
        },
        nas_ciphering: alg(rng),
        rrc_ciphering: alg(rng),
        include_mac_in_smc: rng.gen(),
        protect_config_update: ConfigUpdateProtection {
            integrity: rng.gen(),
            cipher: rng.gen(),
        },
        config_update_ack: rng.gen(),
        pei_only_in_secure: rng.gen(),
        radio_caps_after_rrc_security: rng.gen(),
        context_survives_idle: rng.gen(),
        paging_with_supi: rng.gen(),
    }
}
