use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proto::SecurityEnvelope;
use crate::secctx::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Observe,
    /// Transmit downlink as if it were the network (fake base station).
    InjectAsNetwork,
    /// Alter frames between the legitimate parties (MiTM / overshadowing).
    ModifyInFlight,
    Drop,
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Capability::Observe => "observe",
            Capability::InjectAsNetwork => "inject_as_network",
            Capability::ModifyInFlight => "modify_in_flight",
            Capability::Drop => "drop",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryClass {
    pub capabilities: BTreeSet<Capability>,
}

impl AdversaryClass {
    pub fn new(caps: impl IntoIterator<Item = Capability>) -> Self {
        Self {
            capabilities: caps.into_iter().collect(),
        }
    }

    pub fn passive() -> Self {
        Self::new([Capability::Observe])
    }

    pub fn fake_bs() -> Self {
        Self::new([Capability::Observe, Capability::InjectAsNetwork])
    }

    pub fn mitm() -> Self {
        Self::new([
            Capability::Observe,
            Capability::InjectAsNetwork,
            Capability::ModifyInFlight,
            Capability::Drop,
        ])
    }

    pub fn has(&self, c: Capability) -> bool {
        self.capabilities.contains(&c)
    }

    pub fn is_subclass_of(&self, other: &AdversaryClass) -> bool {
        self.capabilities.is_subset(&other.capabilities)
    }

    /// Every subset of this class's capabilities, including the empty one.
    pub fn subclasses(&self) -> Vec<AdversaryClass> {
        let caps: Vec<Capability> = self.capabilities.iter().copied().collect();
        (0u32..1 << caps.len())
            .map(|mask| Self::new(caps.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, c)| *c)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("adversary hook needs {needed} but the class only has {{{}}}", fmt_caps(.class))]
pub struct CapabilityViolation {
    pub needed: Capability,
    pub class: BTreeSet<Capability>,
}

fn fmt_caps(caps: &BTreeSet<Capability>) -> String {
    caps.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
}

/// One frame on the air, as the adversary sees it.
///
/// `kind` is offered as a hint even for sealed payloads: message type is
/// inferable from size and position in the procedure, content is not.
pub struct AirFrame<'a> {
    pub seq: u64,
    pub sim_time: u64,
    pub direction: Direction,
    pub ue: Option<u32>,
    pub kind: &'static str,
    pub envelope: &'a mut SecurityEnvelope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HookAction {
    Pass,
    Drop,
}

pub trait Hooks {
    /// Capabilities the hook intends to exercise.
    fn capabilities(&self) -> BTreeSet<Capability>;

    fn on_air(&mut self, frame: &mut AirFrame<'_>) -> HookAction;
}

/// Radio channel between endpoints, optionally instrumented by an adversary.
#[derive(Default)]
pub struct Channel {
    class: Option<AdversaryClass>,
    hooks: Option<Box<dyn Hooks>>,
}

impl fmt::Debug for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Channel")
            .field("class", &self.class)
            .field("hooked", &self.hooks.is_some())
            .finish()
    }
}

impl Channel {
    pub fn transparent() -> Self {
        Self::default()
    }

    pub fn class(&self) -> Option<&AdversaryClass> {
        self.class.as_ref()
    }

    /// Runs the hook on a frame and checks what it actually did.
    pub(crate) fn pass(&mut self, frame: &mut AirFrame<'_>) -> Result<HookAction, CapabilityViolation> {
        let (Some(class), Some(hooks)) = (&self.class, self.hooks.as_mut()) else {
            return Ok(HookAction::Pass);
        };
        let before = frame.envelope.clone();
        let action = hooks.on_air(frame);
        let need = |c: Capability| {
            if class.has(c) {
                Ok(())
            } else {
                Err(CapabilityViolation {
                    needed: c,
                    class: class.capabilities.clone(),
                })
            }
        };
        if *frame.envelope != before {
            need(Capability::ModifyInFlight)?;
        }
        if action == HookAction::Drop {
            need(Capability::Drop)?;
        }
        Ok(action)
    }
}

/// Attaches hooks to a channel on behalf of an adversary class.
pub fn interpose(class: AdversaryClass, hooks: Box<dyn Hooks>) -> Result<Channel, CapabilityViolation> {
    let mut wanted = hooks.capabilities();
    wanted.insert(Capability::Observe);
    if let Some(&needed) = wanted.iter().find(|c| !class.has(**c)) {
        return Err(CapabilityViolation {
            needed,
            class: class.capabilities,
        });
    }
    Ok(Channel {
        class: Some(class),
        hooks: Some(hooks),
    })
}

/// Hook that only watches.
#[derive(Debug, Default, Clone, Copy)]
pub struct Observer;

impl Hooks for Observer {
    fn capabilities(&self) -> BTreeSet<Capability> {
        [Capability::Observe].into()
    }

    fn on_air(&mut self, _frame: &mut AirFrame<'_>) -> HookAction {
        HookAction::Pass
    }
}

/// Hook that suppresses every frame.
#[derive(Debug, Default, Clone, Copy)]
pub struct DropAll;

impl Hooks for DropAll {
    fn capabilities(&self) -> BTreeSet<Capability> {
        [Capability::Observe, Capability::Drop].into()
    }

    fn on_air(&mut self, _frame: &mut AirFrame<'_>) -> HookAction {
        HookAction::Drop
    }
}

/// Closure-backed hook for one-off tampering.
pub struct FnHooks<F> {
    caps: BTreeSet<Capability>,
    f: F,
}

impl<F: FnMut(&mut AirFrame<'_>) -> HookAction> FnHooks<F> {
    pub fn new(caps: impl IntoIterator<Item = Capability>, f: F) -> Self {
        Self {
            caps: caps.into_iter().collect(),
            f,
        }
    }
}

impl<F: FnMut(&mut AirFrame<'_>) -> HookAction> Hooks for FnHooks<F> {
    fn capabilities(&self) -> BTreeSet<Capability> {
        self.caps.clone()
    }

    fn on_air(&mut self, frame: &mut AirFrame<'_>) -> HookAction {
        (self.f)(frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_nest() {
        assert!(AdversaryClass::passive().is_subclass_of(&AdversaryClass::fake_bs()));
        assert!(AdversaryClass::fake_bs().is_subclass_of(&AdversaryClass::mitm()));
        assert_eq!(AdversaryClass::mitm().subclasses().len(), 16);
    }

    #[test]
    fn passive_cannot_take_modifying_hook() {
        let hooks = FnHooks::new([Capability::ModifyInFlight], |_: &mut AirFrame<'_>| HookAction::Pass);
        let err = interpose(AdversaryClass::passive(), Box::new(hooks)).unwrap_err();
        assert_eq!(err.needed, Capability::ModifyInFlight);
        assert!(interpose(AdversaryClass::passive(), Box::new(DropAll)).is_err());
        assert!(interpose(AdversaryClass::passive(), Box::new(Observer)).is_ok());
    }
}
