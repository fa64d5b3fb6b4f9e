//! Discrete-event simulation loop on a virtual slot clock: one slot is one
//! learning iteration (the constant per-iteration training latency T).
//! Within a slot every node learns against the previous slot's immutable
//! mailbox snapshot, arrived messages are delivered, and transmission epochs
//! are rebuilt when the received-state gate opens.

pub mod baselines;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{self, AnalysisError};
use crate::learning::{
    self, LearningError, LocalTask, LossKind, ParameterVector, SmoothnessConstants,
};
use crate::protocol::{
    self, Delivery, NodeId, NodeState, ProtocolError, StampedParameter,
};
use crate::trace::{DumpEvent, RunDump, TraceRecord};
use crate::wireless::{self, RadioEnvironment, ScheduleOutcome, WirelessError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Wireless(#[from] WirelessError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(
        "staleness bound violated at slot {slot}: node {node} holds a stamp older than Γ = {gamma_max} \
         (rerun with observe mode to record the realized bound instead)"
    )]
    StalenessViolation {
        slot: u64,
        node: NodeId,
        gamma_max: u64,
    },
    #[error("message accounting mismatch: enqueued {enqueued} != delivered {delivered} + dropped {dropped} + superseded {superseded} + in flight {in_flight}")]
    Conservation {
        enqueued: u64,
        delivered: u64,
        dropped: u64,
        superseded: u64,
        in_flight: u64,
    },
    #[error("replay diverged: {0}")]
    Replay(String),
    #[error("invalid simulation setup: {0}")]
    Setup(String),
}

/// Algorithm selector, including the simplified comparison baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    AsyncDfl,
    FedAvg,
    FedAvgPartial,
    FedSemiAsync,
    UniformBw,
    RandomBw,
}

impl Algorithm {
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::AsyncDfl => "async_dfl",
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedAvgPartial => "fedavg_partial",
            Algorithm::FedSemiAsync => "fed_semi_async",
            Algorithm::UniformBw => "uniform_bw",
            Algorithm::RandomBw => "random_bw",
        }
    }

    pub fn is_decentralized(&self) -> bool {
        matches!(
            self,
            Algorithm::AsyncDfl | Algorithm::UniformBw | Algorithm::RandomBw
        )
    }
}

/// How scheduled bandwidth is split across the scheduled set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationPolicy {
    /// Inverse-rate optimal split.
    Optimal,
    /// `B / |Ī|` for every scheduled node.
    Uniform,
    /// A seeded random point of the bandwidth simplex per epoch.
    Random,
}

/// Wireless channel runtime parameters (radio model plus the scalars the
/// duration formula needs).
#[derive(Debug, Clone)]
pub struct WirelessRuntime {
    pub env: RadioEnvironment,
    /// SINR threshold, linear scale.
    pub gamma_linear: f64,
    pub total_bandwidth: f64,
    /// Sparsity ratio q (1.0 = dense payloads).
    pub sparsity: f64,
    /// Total quantized parameter size S in bits.
    pub bits: f64,
    /// Per-iteration training latency T in seconds (= one slot).
    pub train_latency: f64,
    /// Per-unscheduled-node waiting reservation w₀.
    pub w0_slots: u64,
}

/// Message transport model.
#[derive(Debug, Clone)]
pub enum Channel {
    /// Controlled staleness: every node transmits every slot and each
    /// message takes `max(Γ, 1)` slots, so every read is exactly `Γ − 1`
    /// iterations old (0 for Γ <= 1, the synchronous limit).
    Ideal { gamma: u64 },
    /// Full radio model with threshold scheduling and bandwidth allocation.
    Wireless(Box<WirelessRuntime>),
    /// Deliveries and epoch markers fed from a recorded dump.
    Replay(RunDump),
}

/// What to do when Assumption-style staleness is violated after warm-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StalenessPolicy {
    /// Abort the run with a diagnostic.
    Strict,
    /// Record the realized staleness and keep going.
    Observe,
}

/// Fully-resolved runtime configuration for one run.
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub seed: u64,
    pub budget: u64,
    pub eta: f64,
    pub gamma_max: u64,
    pub staleness_policy: StalenessPolicy,
    pub stop_epsilon: f64,
    pub algorithm: Algorithm,
    pub channel: Channel,
    pub tasks: Vec<LocalTask>,
    pub initial: Vec<ParameterVector>,
    /// When present, the running bound column is filled in online.
    pub constants: Option<SmoothnessConstants>,
    /// Allocation policy for wireless epochs.
    pub allocation: AllocationPolicy,
    /// Baseline knobs (fraction of nodes for partial averaging, arrivals for
    /// semi-asynchronous rounds, local steps per round).
    pub partial_fraction: f64,
    pub semi_async_arrivals: usize,
    pub local_steps: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MessageStats {
    pub enqueued: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub superseded: u64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<TraceRecord>,
    pub dump: RunDump,
    pub stats: MessageStats,
    /// Largest `t − τ` observed at any read.
    pub realized_staleness_max: u64,
    /// Mean realized aggregated duration `Γ = Γ_W + Γ_T` over epochs
    /// (wireless mode only).
    pub mean_gamma_realized: f64,
    pub epochs: Vec<ScheduleOutcome>,
    /// Aggregated parameter `w(t) = Σ α_i w_i(t)` per recorded iteration.
    pub trajectory: Vec<ParameterVector>,
}

pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs one simulation to completion (budget exhausted or every local loss
/// under the stop threshold).
pub fn run(setup: &SimSetup) -> Result<RunResult, EngineError> {
    validate(setup)?;
    match setup.algorithm {
        Algorithm::AsyncDfl | Algorithm::UniformBw | Algorithm::RandomBw => {
            Simulation::new(setup)?.run()
        }
        Algorithm::FedAvg | Algorithm::FedAvgPartial | Algorithm::FedSemiAsync => {
            baselines::run_centralized(setup)
        }
    }
}

fn validate(setup: &SimSetup) -> Result<(), EngineError> {
    let n = setup.tasks.len();
    if setup.algorithm.is_decentralized() && n < 2 {
        return Err(EngineError::Setup(format!(
            "decentralized algorithms need at least 2 nodes, got {n}"
        )));
    }
    if n == 0 || setup.initial.len() != n {
        return Err(EngineError::Setup(
            "tasks and initial parameters must be non-empty and aligned".into(),
        ));
    }
    if setup.eta <= 0.0 {
        return Err(EngineError::Setup(format!(
            "learning rate must be positive, got {}",
            setup.eta
        )));
    }
    if setup.budget == 0 {
        return Err(EngineError::Setup("iteration budget must be positive".into()));
    }
    learning::validate_tasks(&setup.tasks).map_err(|e| EngineError::Setup(e.to_string()))?;
    if matches!(
        setup.algorithm,
        Algorithm::UniformBw | Algorithm::RandomBw
    ) && !matches!(setup.channel, Channel::Wireless(_))
    {
        return Err(EngineError::Setup(
            "bandwidth-allocation variants require the wireless channel".into(),
        ));
    }
    Ok(())
}

struct InFlight {
    receiver: NodeId,
    message: StampedParameter,
    #[allow(dead_code)]
    departure_slot: u64,
}

struct Simulation<'a> {
    setup: &'a SimSetup,
    fractions: Vec<f64>,
    nodes: Vec<NodeState>,
    /// In-flight messages keyed by arrival slot, enqueue order preserved.
    inflight: BTreeMap<u64, Vec<InFlight>>,
    stats: MessageStats,
    wireless: Option<WirelessRuntime>,
    alloc_rng: ChaCha8Rng,
    replay: Option<ReplayFeed>,
    next_epoch_slot: u64,
    current_gamma: u64,
    current_bandwidth_min: f64,
    current_scheduled: u64,
    u_eta: f64,
    bound: f64,
    epochs: Vec<ScheduleOutcome>,
    realized_staleness_max: u64,
    gamma_sum: f64,
    gamma_events: u64,
    classification: bool,
}

struct ReplayFeed {
    deliveries: BTreeMap<u64, Vec<(NodeId, StampedParameter)>>,
    schedules: BTreeMap<u64, (u64, u64, f64, u32)>,
    expected_stats: Option<MessageStats>,
}

impl ReplayFeed {
    fn from_dump(dump: &RunDump) -> Self {
        let mut deliveries: BTreeMap<u64, Vec<(NodeId, StampedParameter)>> = BTreeMap::new();
        let mut schedules = BTreeMap::new();
        let mut expected_stats = None;
        for event in &dump.events {
            match event {
                DumpEvent::Delivery {
                    receiver,
                    arrival_slot,
                    message,
                } => deliveries
                    .entry(*arrival_slot)
                    .or_default()
                    .push((*receiver, message.clone())),
                DumpEvent::Schedule {
                    slot,
                    gamma_w,
                    gamma_t,
                    bandwidth_min,
                    scheduled_count,
                } => {
                    schedules.insert(*slot, (*gamma_w, *gamma_t, *bandwidth_min, *scheduled_count));
                }
                DumpEvent::End {
                    enqueued,
                    delivered,
                    dropped,
                    superseded,
                } => {
                    expected_stats = Some(MessageStats {
                        enqueued: *enqueued,
                        delivered: *delivered,
                        dropped: *dropped,
                        superseded: *superseded,
                    });
                }
            }
        }
        Self {
            deliveries,
            schedules,
            expected_stats,
        }
    }
}

impl<'a> Simulation<'a> {
    fn new(setup: &'a SimSetup) -> Result<Self, EngineError> {
        let n = setup.tasks.len();
        let fractions: Vec<f64> = setup.tasks.iter().map(|t| t.fraction).collect();
        let mut nodes: Vec<NodeState> = (0..n)
            .map(|i| NodeState::new(i, setup.initial[i].clone()))
            .collect();
        // Initial broadcast: every node holds every w_j(0) with stamp 0, so
        // aggregation is defined from the first slot.
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    protocol::deliver(
                        &mut nodes[i],
                        StampedParameter {
                            sender: j,
                            stamp: 0,
                            payload: setup.initial[j].clone(),
                        },
                    );
                }
            }
        }
        let (wireless, replay, current_gamma) = match &setup.channel {
            Channel::Ideal { gamma } => (None, None, *gamma),
            Channel::Wireless(rt) => (Some((**rt).clone()), None, 0),
            Channel::Replay(dump) => (None, Some(ReplayFeed::from_dump(dump)), 0),
        };
        let constants = setup.constants;
        let u_eta = constants
            .map(|c| analysis::u_of_eta(&c, n, setup.eta, setup.gamma_max))
            .unwrap_or(f64::NAN);
        let classification = setup
            .tasks
            .iter()
            .all(|t| !matches!(t.loss, LossKind::Quadratic { .. }));
        Ok(Self {
            setup,
            fractions,
            nodes,
            inflight: BTreeMap::new(),
            stats: MessageStats::default(),
            wireless,
            alloc_rng: rng_stream(setup.seed, 4),
            replay,
            next_epoch_slot: 0,
            current_gamma,
            current_bandwidth_min: f64::NAN,
            current_scheduled: n as u64,
            u_eta,
            bound: f64::NAN,
            epochs: Vec::new(),
            realized_staleness_max: 0,
            gamma_sum: 0.0,
            gamma_events: 0,
            classification,
        })
    }

    fn run(mut self) -> Result<RunResult, EngineError> {
        let n = self.nodes.len();
        let mut records = Vec::new();
        let mut trajectory = Vec::new();
        let mut dump_events = Vec::new();
        let dim = self.setup.initial[0].dim() as u32;

        for slot in 0..self.setup.budget {
            self.deliver_arrivals(slot, &mut dump_events);

            // Learning phase against the post-delivery snapshot.
            let aggregated: Vec<ParameterVector> = self
                .nodes
                .iter()
                .map(|node| protocol::aggregate(node, &self.fractions))
                .collect::<Result<_, _>>()?;
            let w_bar = learning::params::weighted_sum(
                &self
                    .fractions
                    .iter()
                    .zip(&self.nodes)
                    .map(|(&a, node)| (a, &node.w))
                    .collect::<Vec<_>>(),
            )?;
            let global_loss = analysis::global_loss(&self.setup.tasks, &w_bar)?;
            trajectory.push(w_bar.clone());
            if slot == 0 {
                self.bound = global_loss;
            }
            let consensus_max = aggregated
                .iter()
                .map(|v| w_bar.distance(v))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .fold(0.0_f64, f64::max);
            let peer_staleness_max = self.peer_staleness()?;
            self.check_staleness(slot)?;

            let accuracy = if self.classification {
                self.accuracy(&w_bar)?
            } else {
                f64::NAN
            };

            // Stop rule: every local loss at its aggregated point under ε.
            let stop = if self.setup.stop_epsilon > 0.0 {
                let mut all_under = true;
                for (task, v) in self.setup.tasks.iter().zip(&aggregated) {
                    if learning::local_loss(task, v)? > self.setup.stop_epsilon {
                        all_under = false;
                        break;
                    }
                }
                all_under
            } else {
                false
            };

            // Update phase: projected-gradient step at every node.
            let mut grad_norm_sq = 0.0;
            for i in 0..n {
                let outcome = protocol::local_update(
                    &mut self.nodes[i],
                    &self.setup.tasks[i],
                    &self.fractions,
                    self.setup.eta,
                )?;
                grad_norm_sq += outcome.descent.norm_sq();
            }

            records.push(TraceRecord {
                slot,
                iteration: slot,
                algorithm: self.setup.algorithm.label().to_string(),
                global_loss,
                bound_u: self.bound,
                u_eta: self.u_eta,
                grad_norm_sq,
                consensus_max,
                accuracy,
                gamma_realized: self.current_gamma,
                bandwidth_min: self.current_bandwidth_min,
                scheduled_count: self.current_scheduled,
                peer_staleness_max,
            });
            if self.u_eta.is_finite() {
                self.bound -= self.setup.eta * self.u_eta * grad_norm_sq;
            }
            if stop {
                break;
            }

            self.transport(slot, &mut dump_events)?;
        }

        let in_flight: u64 = self.inflight.values().map(|v| v.len() as u64).sum();
        if self.replay.is_none()
            && self.stats.enqueued
                != self.stats.delivered + self.stats.dropped + self.stats.superseded + in_flight
        {
            return Err(EngineError::Conservation {
                enqueued: self.stats.enqueued,
                delivered: self.stats.delivered,
                dropped: self.stats.dropped,
                superseded: self.stats.superseded,
                in_flight,
            });
        }
        if let Some(feed) = &self.replay {
            if let Some(expected) = feed.expected_stats {
                let mut replayed = self.stats;
                replayed.enqueued = expected.enqueued;
                replayed.superseded = expected.superseded;
                if replayed.delivered != expected.delivered
                    || replayed.dropped != expected.dropped
                {
                    return Err(EngineError::Replay(format!(
                        "delivery counts differ: dump {expected:?} vs replay {:?}",
                        self.stats
                    )));
                }
                self.stats = expected;
            }
        }
        dump_events.push(DumpEvent::End {
            enqueued: self.stats.enqueued,
            delivered: self.stats.delivered,
            dropped: self.stats.dropped,
            superseded: self.stats.superseded,
        });

        let mean_gamma = if self.gamma_events > 0 {
            self.gamma_sum / self.gamma_events as f64
        } else {
            self.current_gamma as f64
        };
        Ok(RunResult {
            records,
            dump: RunDump {
                seed: self.setup.seed,
                node_count: n as u32,
                dim,
                events: dump_events,
            },
            stats: self.stats,
            realized_staleness_max: self.realized_staleness_max,
            mean_gamma_realized: mean_gamma,
            epochs: self.epochs,
            trajectory,
        })
    }

    fn deliver_arrivals(&mut self, slot: u64, dump_events: &mut Vec<DumpEvent>) {
        if let Some(feed) = &mut self.replay {
            if let Some(batch) = feed.deliveries.remove(&slot) {
                for (receiver, message) in batch {
                    dump_events.push(DumpEvent::Delivery {
                        receiver,
                        arrival_slot: slot,
                        message: message.clone(),
                    });
                    match protocol::deliver(&mut self.nodes[receiver], message) {
                        Delivery::Accepted => self.stats.delivered += 1,
                        Delivery::DroppedStale => self.stats.dropped += 1,
                    }
                }
            }
            if let Some((gamma_w, gamma_t, bw_min, count)) = feed.schedules.remove(&slot) {
                self.current_gamma = gamma_w + gamma_t;
                self.current_bandwidth_min = bw_min;
                self.current_scheduled = count as u64;
                self.gamma_sum += self.current_gamma as f64;
                self.gamma_events += 1;
                dump_events.push(DumpEvent::Schedule {
                    slot,
                    gamma_w,
                    gamma_t,
                    bandwidth_min: bw_min,
                    scheduled_count: count,
                });
            }
            return;
        }
        if let Some(batch) = self.inflight.remove(&slot) {
            for msg in batch {
                dump_events.push(DumpEvent::Delivery {
                    receiver: msg.receiver,
                    arrival_slot: slot,
                    message: msg.message.clone(),
                });
                match protocol::deliver(&mut self.nodes[msg.receiver], msg.message) {
                    Delivery::Accepted => self.stats.delivered += 1,
                    Delivery::DroppedStale => self.stats.dropped += 1,
                }
            }
        }
    }

    /// Largest `t − τ` over every mailbox entry; also records the run-level
    /// maximum and enforces the strict policy after warm-up.
    fn check_staleness(&mut self, slot: u64) -> Result<(), EngineError> {
        let gamma_check = self.setup.gamma_max.max(1);
        for node in &self.nodes {
            for msg in node.latest.values() {
                let age = node.iteration.saturating_sub(msg.stamp);
                self.realized_staleness_max = self.realized_staleness_max.max(age);
            }
            if slot > gamma_check
                && !protocol::check_staleness(node, gamma_check)
                && self.setup.staleness_policy == StalenessPolicy::Strict
            {
                return Err(EngineError::StalenessViolation {
                    slot,
                    node: node.node_id,
                    gamma_max: self.setup.gamma_max,
                });
            }
        }
        Ok(())
    }

    /// `max_{i,j} ‖w_i(t) − w_i(τ_{j,i}(t))‖`: current sender parameter vs
    /// the copy each receiver holds.
    fn peer_staleness(&self) -> Result<f64, EngineError> {
        let mut worst = 0.0_f64;
        for receiver in &self.nodes {
            for (sender, held) in &receiver.latest {
                worst = worst.max(self.nodes[*sender].w.distance(&held.payload)?);
            }
        }
        Ok(worst)
    }

    fn accuracy(&self, w: &ParameterVector) -> Result<f64, EngineError> {
        let mut correct = 0usize;
        let mut total = 0usize;
        for task in &self.setup.tasks {
            for sample in &task.dataset {
                total += 1;
                if predicts(task, w, sample)? {
                    correct += 1;
                }
            }
        }
        Ok(if total == 0 {
            f64::NAN
        } else {
            correct as f64 / total as f64
        })
    }

    fn transport(&mut self, slot: u64, dump_events: &mut Vec<DumpEvent>) -> Result<(), EngineError> {
        if self.replay.is_some() {
            return Ok(());
        }
        if self.wireless.is_some() {
            if slot == self.next_epoch_slot {
                self.wireless_epoch(slot, dump_events)?;
            }
            return Ok(());
        }
        // Ideal channel: everyone transmits every slot; a message departing
        // at slot t carries w(t+1) and becomes readable max(Γ, 1) slots
        // later, so every read is exactly Γ − 1 iterations old.
        let delay = match &self.setup.channel {
            Channel::Ideal { gamma } => (*gamma).max(1),
            _ => unreachable!("transport mode checked above"),
        };
        if self.setup.staleness_policy == StalenessPolicy::Strict
            && delay > self.setup.gamma_max.max(1)
        {
            return Err(EngineError::StalenessViolation {
                slot,
                node: 0,
                gamma_max: self.setup.gamma_max,
            });
        }
        let n = self.nodes.len();
        for sender in 0..n {
            let stamp = self.nodes[sender].iteration;
            for receiver in 0..n {
                if receiver != sender {
                    self.enqueue(sender, receiver, stamp, slot, slot + delay);
                }
            }
        }
        Ok(())
    }

    fn enqueue(
        &mut self,
        sender: NodeId,
        receiver: NodeId,
        stamp: u64,
        departure: u64,
        arrival: u64,
    ) {
        // Epoch transports never overlap transmissions on a pair, so a
        // fresher snapshot supersedes one still in flight. The ideal channel
        // pipelines by design and is exempt.
        if self.wireless.is_some() {
            for batch in self.inflight.values_mut() {
                let before = batch.len();
                batch.retain(|m| !(m.receiver == receiver && m.message.sender == sender));
                self.stats.superseded += (before - batch.len()) as u64;
            }
        }
        self.inflight.entry(arrival).or_default().push(InFlight {
            receiver,
            message: StampedParameter {
                sender,
                stamp,
                payload: self.nodes[sender].w.clone(),
            },
            departure_slot: departure,
        });
        self.stats.enqueued += 1;
    }

    /// One parameter-transmission epoch: redraw block fading, rebuild the
    /// threshold schedule, exchange Q/Y flags, allocate bandwidth, enqueue
    /// the scheduled transmissions, and reserve the waiting window.
    fn wireless_epoch(
        &mut self,
        slot: u64,
        dump_events: &mut Vec<DumpEvent>,
    ) -> Result<(), EngineError> {
        let n = self.nodes.len();
        let rt = self.wireless.as_mut().expect("wireless transport");
        rt.env.redraw_fading();
        let sinr = rt.env.sinr_matrix();
        let schedule = wireless::build_schedule(&sinr, rt.gamma_linear);
        let rates = wireless::min_rates(&schedule, &sinr);

        let outcome = if schedule.scheduled.is_empty() {
            ScheduleOutcome {
                schedule: schedule.clone(),
                rates,
                bandwidths: BTreeMap::new(),
                durations: wireless::Durations {
                    raw: BTreeMap::new(),
                    slots: BTreeMap::new(),
                    gamma_t: 0,
                },
                gamma_w: wireless::waiting_duration(&schedule, n, rt.w0_slots),
                gamma_t: 0,
                gamma: wireless::waiting_duration(&schedule, n, rt.w0_slots),
            }
        } else {
            let bandwidths = match self.setup.allocation {
                AllocationPolicy::Optimal => {
                    wireless::allocate_bandwidth(&schedule, &rates, rt.total_bandwidth)?
                }
                AllocationPolicy::Uniform => {
                    let share = rt.total_bandwidth / schedule.scheduled.len() as f64;
                    schedule.scheduled.iter().map(|&i| (i, share)).collect()
                }
                AllocationPolicy::Random => {
                    let draws: Vec<(NodeId, f64)> = schedule
                        .scheduled
                        .iter()
                        .map(|&i| {
                            let u: f64 = self.alloc_rng.random_range(0.0..1.0_f64);
                            (i, -(1.0 - u).max(f64::MIN_POSITIVE).ln())
                        })
                        .collect();
                    let total: f64 = draws.iter().map(|(_, e)| e).sum();
                    draws
                        .into_iter()
                        .map(|(i, e)| (i, rt.total_bandwidth * e / total))
                        .collect()
                }
            };
            let durations = wireless::transmission_durations(
                &schedule,
                &bandwidths,
                &sinr,
                rt.sparsity,
                rt.bits,
                rt.train_latency,
            )?;
            let gamma_w = wireless::waiting_duration(&schedule, n, rt.w0_slots);
            let gamma_t = durations.gamma_t;
            ScheduleOutcome {
                schedule: schedule.clone(),
                rates,
                bandwidths,
                durations,
                gamma_w,
                gamma_t,
                gamma: gamma_w + gamma_t,
            }
        };

        // Mirror the per-node protocol flags: epoch index, scheduled-once
        // state, receiver-side Q flags, and cleared J flags pending fresh
        // deliveries.
        for i in 0..n {
            self.nodes[i].epoch_start = slot + 1;
            self.nodes[i].scheduled_once = outcome.schedule.scheduled.contains(&i);
        }
        for tx in 0..n {
            let receivers = outcome.schedule.receiver_sets[tx].clone();
            for rx in receivers {
                self.nodes[rx].scheduled_flags.insert(tx, true);
                self.nodes[rx].received_flags.insert(tx, false);
            }
        }

        let epoch_len = outcome.gamma.max(1);
        if self.setup.staleness_policy == StalenessPolicy::Strict
            && outcome.gamma > self.setup.gamma_max.max(1)
        {
            return Err(EngineError::StalenessViolation {
                slot,
                node: 0,
                gamma_max: self.setup.gamma_max,
            });
        }
        for &tx in &outcome.schedule.scheduled {
            if !outcome.bandwidths.contains_key(&tx) {
                continue; // excluded for a zero min rate
            }
            let stamp = self.nodes[tx].iteration;
            let receivers = outcome.schedule.receiver_sets[tx].clone();
            for rx in receivers {
                let flight = outcome.gamma_w + outcome.durations.slots[&(rx, tx)];
                self.enqueue(tx, rx, stamp, slot, slot + flight.max(1));
            }
        }

        self.current_gamma = outcome.gamma;
        self.current_bandwidth_min = outcome.min_bandwidth().unwrap_or(f64::NAN);
        self.current_scheduled = outcome.schedule.scheduled.len() as u64;
        self.gamma_sum += outcome.gamma as f64;
        self.gamma_events += 1;
        dump_events.push(DumpEvent::Schedule {
            slot,
            gamma_w: outcome.gamma_w,
            gamma_t: outcome.gamma_t,
            bandwidth_min: self.current_bandwidth_min,
            scheduled_count: self.current_scheduled as u32,
        });
        self.epochs.push(outcome);
        self.next_epoch_slot = slot + epoch_len;
        Ok(())
    }
}

/// Whether the aggregated model classifies one sample correctly.
pub(crate) fn predicts(
    task: &LocalTask,
    w: &ParameterVector,
    sample: &learning::Sample,
) -> Result<bool, EngineError> {
    match task.loss {
        LossKind::Quadratic { .. } => Ok(false),
        LossKind::Logistic => {
            let margin: f64 = w
                .as_slice()
                .iter()
                .zip(&sample.features)
                .map(|(w, x)| w * x)
                .sum();
            Ok((margin > 0.0) == (sample.label > 0))
        }
        LossKind::CrossEntropyMlp { classes, .. } => {
            // Cross-entropy is -ln p(class), so the argmax class is the one
            // with the smallest single-sample loss.
            let mut best_class = 0i64;
            let mut best_loss = f64::INFINITY;
            for class in 0..classes as i64 {
                let mut probe = sample.clone();
                probe.label = class;
                let loss = task.loss.loss(&[probe], w.as_slice())?;
                if loss < best_loss {
                    best_loss = loss;
                    best_class = class;
                }
            }
            Ok(best_class == sample.label)
        }
    }
}
