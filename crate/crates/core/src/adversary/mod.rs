//! Channel interposition and the attack procedures run on top of it.
//!
//! Adversaries only ever see envelopes on the air; verdicts are judged from
//! the resulting trace plus network state a real attacker could probe
//! (e.g. whether a service request gets rejected).

mod attacks;
mod channel;

pub use attacks::{
    run_attack, verify_evidence, AttackId, AttackParams, AttackVerdict, Outcome, PrivacyProperty, UnknownAttack,
    TARGET,
};
pub use channel::{
    interpose, AdversaryClass, AirFrame, Capability, CapabilityViolation, Channel, DropAll, FnHooks, HookAction,
    Hooks, Observer,
};
