use std::collections::VecDeque;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    AcceptancePolicy, Dest, FakeBaseStation, Network, NetworkSide, Outbound, SimError, Transmission, Ue, UeConfig,
    UePhase,
};
use crate::adversary::{AirFrame, Channel, HookAction};
use crate::identity::{Guti, GutiRegistry, HomeNetworkKey, Pei, Plmn, RoutingIndicator, Supi};
use crate::profiles::NetworkProfile;
use crate::proto::{Body, Delivery, IdentityKind, NeighborCell, RadioCapabilities, Trace, TraceEvent};
use crate::secctx::{Direction, SecurityCapabilities};

/// Transmissions processed by one `pump` before the run is declared a livelock.
pub const MAX_STEPS: usize = 10_000;

#[derive(Debug)]
enum Pending {
    Up(u32, Transmission),
    Down(Outbound),
}

/// A network side, its UEs and the channel between them.
#[derive(Debug)]
pub struct World<N: NetworkSide> {
    pub network: N,
    pub ues: Vec<Ue>,
    pub trace: Trace,
    /// Simulated seconds.
    pub now: u64,
    channel: Channel,
    queue: VecDeque<Pending>,
}

impl<N: NetworkSide> World<N> {
    pub fn new(network: N, ues: Vec<Ue>, channel: Channel) -> Self {
        Self {
            network,
            ues,
            trace: Trace::new(),
            now: 0,
            channel,
            queue: VecDeque::new(),
        }
    }

    pub fn ue(&self, index: u32) -> &Ue {
        &self.ues[index as usize]
    }

    pub fn advance(&mut self, secs: u64) {
        self.now += secs;
    }

    fn check_ue(&self, ue: u32) -> Result<(), SimError> {
        if (ue as usize) < self.ues.len() {
            Ok(())
        } else {
            Err(SimError::UnknownTarget(ue))
        }
    }

    fn enqueue_up(&mut self, ue: u32, txs: Vec<Transmission>) {
        self.queue.extend(txs.into_iter().map(|tx| Pending::Up(ue, tx)));
    }

    pub(crate) fn enqueue_down(&mut self, outs: Vec<Outbound>) {
        self.queue.extend(outs.into_iter().map(Pending::Down));
    }

    /// Sends one frame over the channel; returns it as delivered, if at all.
    fn transmit(
        &mut self,
        direction: Direction,
        ue: Option<u32>,
        mut tx: Transmission,
    ) -> Result<Option<Transmission>, SimError> {
        let seq = self.trace.next_seq();
        let original = tx.envelope.clone();
        let mut frame = AirFrame {
            seq,
            sim_time: self.now,
            direction,
            ue,
            kind: tx.message.kind(),
            envelope: &mut tx.envelope,
        };
        let action = self.channel.pass(&mut frame)?;
        let modified = tx.envelope != original;
        if modified {
            if let Body::Clear(m) = &tx.envelope.body {
                tx.message = m.clone();
            }
        }
        let delivery = if action == HookAction::Drop {
            Delivery::Dropped
        } else if direction == Direction::Downlink && !self.network.genuine() {
            Delivery::Injected
        } else if modified {
            Delivery::Modified
        } else {
            Delivery::Delivered
        };
        self.trace.events.push(TraceEvent::new(
            seq,
            self.now,
            direction,
            delivery,
            ue,
            tx.envelope.clone(),
            tx.message.clone(),
        ));
        Ok((delivery != Delivery::Dropped).then_some(tx))
    }

    fn step(&mut self, p: Pending) -> Result<(), SimError> {
        match p {
            Pending::Up(ue, tx) => {
                if let Some(tx) = self.transmit(Direction::Uplink, Some(ue), tx)? {
                    let outs = self.network.receive(ue, &tx.envelope, self.now);
                    self.enqueue_down(outs);
                }
            }
            Pending::Down(Outbound { dest: Dest::Ue(ue), tx }) => {
                if let Some(tx) = self.transmit(Direction::Downlink, Some(ue), tx)? {
                    if let Some(u) = self.ues.get_mut(ue as usize) {
                        let replies = u.receive(&tx.envelope);
                        self.enqueue_up(ue, replies);
                    }
                }
            }
            Pending::Down(Outbound {
                dest: Dest::Broadcast,
                tx,
            }) => {
                if let Some(tx) = self.transmit(Direction::Downlink, None, tx)? {
                    for i in 0..self.ues.len() {
                        let replies = self.ues[i].receive(&tx.envelope);
                        self.enqueue_up(i as u32, replies);
                    }
                }
            }
        }
        Ok(())
    }

    /// Runs until nothing is in flight and no network timer is pending.
    pub fn pump(&mut self) -> Result<(), SimError> {
        let mut steps = 0;
        loop {
            while let Some(p) = self.queue.pop_front() {
                steps += 1;
                if steps > MAX_STEPS {
                    return Err(SimError::Livelock(steps));
                }
                self.step(p)?;
            }
            let Some(deadline) = self.network.next_timer() else {
                return Ok(());
            };
            self.now = self.now.max(deadline);
            let outs = self.network.fire_timers(self.now);
            self.enqueue_down(outs);
        }
    }

    fn settle(&mut self, ue: u32) -> Result<(), SimError> {
        self.pump()?;
        let phase = self.ues[ue as usize].phase;
        if phase.is_terminal() {
            Ok(())
        } else {
            Err(SimError::ProtocolStall { ue, phase })
        }
    }

    /// Powers the UE on and runs initial registration to completion.
    pub fn run_registration(&mut self, ue: u32) -> Result<UePhase, SimError> {
        self.check_ue(ue)?;
        let cell = self.network.cell_mode();
        let txs = self.ues[ue as usize].power_on(cell);
        self.enqueue_up(ue, txs);
        self.settle(ue)?;
        Ok(self.ues[ue as usize].phase)
    }

    /// Mobile-originated service request from an idle registered UE.
    pub fn run_service_request(&mut self, ue: u32) -> Result<UePhase, SimError> {
        self.check_ue(ue)?;
        let txs = self.ues[ue as usize].start_service();
        self.enqueue_up(ue, txs);
        self.settle(ue)?;
        Ok(self.ues[ue as usize].phase)
    }

    pub fn power_off(&mut self, ue: u32) -> Result<(), SimError> {
        self.check_ue(ue)?;
        self.ues[ue as usize].power_off();
        Ok(())
    }
}

impl World<Network> {
    /// Releases the UE's RRC connection from the network side.
    pub fn release_ue(&mut self, ue: u32) -> Result<(), SimError> {
        self.check_ue(ue)?;
        let outs = self.network.release(ue);
        self.enqueue_down(outs);
        self.pump()
    }

    /// Pages an idle UE (a silent call) and lets it answer.
    pub fn run_paging_cycle(&mut self, ue: u32) -> Result<UePhase, SimError> {
        self.check_ue(ue)?;
        let supi = self.ues[ue as usize].cfg.supi.clone();
        let outs = self.network.page(&supi).map_err(|_| SimError::UnknownTarget(ue))?;
        self.enqueue_down(outs);
        self.settle(ue)?;
        Ok(self.ues[ue as usize].phase)
    }
}

/// Deterministic construction of a network with one target UE (index 0)
/// and a few bystanders.
pub struct WorldBuilder {
    profile: NetworkProfile,
    seed: u64,
    policy: AcceptancePolicy,
    bystanders: u32,
    channel: Channel,
}

struct Population {
    hn_key: HomeNetworkKey,
    ues: Vec<Ue>,
    keys: Vec<(Supi, [u8; 32])>,
    net_seed: u64,
}

impl WorldBuilder {
    pub fn new(profile: NetworkProfile, seed: u64) -> Self {
        Self {
            profile,
            seed,
            policy: AcceptancePolicy::default(),
            bystanders: 2,
            channel: Channel::transparent(),
        }
    }

    pub fn policy(mut self, policy: AcceptancePolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn bystanders(mut self, n: u32) -> Self {
        self.bystanders = n;
        self
    }

    pub fn channel(mut self, channel: Channel) -> Self {
        self.channel = channel;
        self
    }

    pub fn home_plmn() -> Plmn {
        Plmn::new("001", "01").expect("static PLMN")
    }

    fn populate(&self) -> Population {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let hn_key = HomeNetworkKey::generate(1, &mut rng);
        let plmn = Self::home_plmn();
        let foreign = Plmn::new("999", "99").expect("static PLMN");
        let mut ues = Vec::new();
        let mut keys = Vec::new();
        for index in 0..=self.bystanders {
            let supi = Supi::random(&plmn, 10, &mut rng);
            let mut k = [0u8; 32];
            rng.fill_bytes(&mut k);
            let neighbors = (0..3)
                .map(|_| NeighborCell {
                    cell_id: rng.gen_range(1..1 << 28),
                    signal_dbm: rng.gen_range(-120..-60),
                })
                .collect();
            let cfg = UeConfig {
                supi: supi.clone(),
                pei: Pei::random(&mut rng),
                k,
                hn_public: hn_key.public().clone(),
                routing_indicator: RoutingIndicator::default(),
                caps: SecurityCapabilities::standard_ue(),
                radio_caps: RadioCapabilities::typical(),
                neighbors,
                policy: self.policy,
            };
            // Left over from another network, so first contact falls back to an identity request.
            let stale = Guti::new(foreign.clone(), 7, 2, 3, rng.gen()).expect("in-range fields");
            ues.push(Ue::new(index, cfg, Some(stale), rng.next_u64()));
            keys.push((supi, k));
        }
        Population {
            hn_key,
            ues,
            keys,
            net_seed: rng.next_u64(),
        }
    }

    pub fn build(self) -> World<Network> {
        let pop = self.populate();
        let registry =
            GutiRegistry::new(Self::home_plmn(), 1, 4, 1, self.profile.guti_allocator).expect("static AMF id");
        let mut network = Network::new(self.profile, pop.hn_key, registry, pop.net_seed);
        for (supi, k) in pop.keys {
            network.add_subscriber(supi, k);
        }
        World::new(network, pop.ues, self.channel)
    }

    /// Same population camped on a rogue cell instead of the genuine network.
    pub fn build_fake(self, requested: IdentityKind) -> World<FakeBaseStation> {
        let pop = self.populate();
        let mode = super::CellMode::of(&self.profile);
        World::new(FakeBaseStation::new(requested, mode), pop.ues, self.channel)
    }
}
