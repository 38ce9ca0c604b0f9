use crate::endpoints::{SimError, WorldBuilder};
use crate::profiles::NetworkProfile;
use crate::proto::Trace;

const TARGET: u32 = 0;

/// `cycles` rounds of register → release → power off, one minute apart.
pub fn registration_scenario(profile: &NetworkProfile, seed: u64, cycles: u32) -> Result<Trace, SimError> {
    let mut w = WorldBuilder::new(profile.clone(), seed).build();
    for _ in 0..cycles {
        w.run_registration(TARGET)?;
        w.release_ue(TARGET)?;
        w.power_off(TARGET)?;
        w.advance(60);
    }
    Ok(w.trace)
}

/// One registration, then `epochs` silent pages `spacing` seconds apart,
/// each answered and released.
pub fn paging_scenario(profile: &NetworkProfile, seed: u64, epochs: u32, spacing: u64) -> Result<Trace, SimError> {
    let mut w = WorldBuilder::new(profile.clone(), seed).build();
    w.run_registration(TARGET)?;
    w.release_ue(TARGET)?;
    for _ in 0..epochs {
        w.advance(spacing);
        w.run_paging_cycle(TARGET)?;
        w.release_ue(TARGET)?;
    }
    Ok(w.trace)
}
