//! Stochastic-geometry radio model: node placement, block fading, SINR,
//! threshold scheduling, max-min bandwidth allocation, and transmission and
//! aggregation durations.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::NodeId;

#[derive(Debug, Error)]
pub enum WirelessError {
    #[error("at least two nodes are required, got {0}")]
    TooFewNodes(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("SINR is undefined for a node transmitting to itself ({0})")]
    SelfLink(NodeId),
    #[error("scheduled node {0} has zero bandwidth")]
    ZeroBandwidth(NodeId),
    #[error("no node is scheduled; bandwidth allocation is undefined")]
    EmptySchedule,
}

/// Converts dB to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Places a fixed number of nodes i.i.d. uniformly on the disk of the given
/// radius (the conditioned form of a homogeneous Poisson point process).
pub fn place_nodes(count: usize, cell_radius: f64, seed: u64) -> Result<Vec<[f64; 2]>, WirelessError> {
    if count < 2 {
        return Err(WirelessError::TooFewNodes(count));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(uniform_disk(&mut rng, count, cell_radius, [0.0, 0.0]))
}

/// Places a Poisson-distributed number of nodes with the given spatial
/// density (nodes per square meter) on the disk.
pub fn place_nodes_density(
    density: f64,
    cell_radius: f64,
    seed: u64,
) -> Result<Vec<[f64; 2]>, WirelessError> {
    if density <= 0.0 {
        return Err(WirelessError::Config(format!(
            "density must be positive, got {density}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = density * std::f64::consts::PI * cell_radius * cell_radius;
    let poisson = Poisson::new(mean)
        .map_err(|e| WirelessError::Config(format!("invalid Poisson mean {mean}: {e}")))?;
    let count = poisson.sample(&mut rng) as usize;
    if count < 2 {
        return Err(WirelessError::TooFewNodes(count));
    }
    Ok(uniform_disk(&mut rng, count, cell_radius, [0.0, 0.0]))
}

fn uniform_disk(
    rng: &mut ChaCha8Rng,
    count: usize,
    radius: f64,
    center: [f64; 2],
) -> Vec<[f64; 2]> {
    (0..count)
        .map(|_| {
            let r = radius * rng.random_range(0.0..1.0_f64).sqrt();
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            [center[0] + r * theta.cos(), center[1] + r * theta.sin()]
        })
        .collect()
}

/// Interference layout. The default single cell has no out-of-cell nodes, so
/// the model is SNR-only; the hex-ring mode places six co-channel
/// transmitters, one per interfering cell on a ring around the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CellLayout {
    #[default]
    Single,
    HexRing,
}

/// Immutable-within-an-epoch radio state. Fading entries are `Exp(1)` draws
/// regenerated once per parameter-transmission epoch (block fading).
#[derive(Debug, Clone)]
pub struct RadioEnvironment {
    pub positions: Vec<[f64; 2]>,
    pub cell_radius: f64,
    /// Path loss exponent, must exceed 2.
    pub path_loss_exponent: f64,
    /// Transmit power in watts, common to all nodes.
    pub tx_power: f64,
    /// Noise power in watts.
    pub noise: f64,
    /// Out-of-cell interferer positions (empty in single-cell mode).
    pub interferers: Vec<[f64; 2]>,
    /// fading[rx][tx] for in-cell links; direction matters, no reciprocity.
    fading: Vec<Vec<f64>>,
    /// interferer_fading[rx][k] toward out-of-cell transmitter `k`.
    interferer_fading: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
}

impl RadioEnvironment {
    pub fn new(
        positions: Vec<[f64; 2]>,
        cell_radius: f64,
        path_loss_exponent: f64,
        tx_power: f64,
        noise: f64,
        layout: CellLayout,
        seed: u64,
    ) -> Result<Self, WirelessError> {
        if positions.len() < 2 {
            return Err(WirelessError::TooFewNodes(positions.len()));
        }
        if path_loss_exponent <= 2.0 {
            return Err(WirelessError::Config(format!(
                "path loss exponent must exceed 2, got {path_loss_exponent}"
            )));
        }
        for (i, a) in positions.iter().enumerate() {
            for b in positions.iter().skip(i + 1) {
                if distance(*a, *b) <= 0.0 {
                    return Err(WirelessError::Config(
                        "coincident node positions give an undefined path loss".into(),
                    ));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let interferers = match layout {
            CellLayout::Single => Vec::new(),
            CellLayout::HexRing => {
                // One active co-channel transmitter per interfering cell,
                // drawn uniformly inside each of six cells at distance 2R.
                (0..6)
                    .flat_map(|k| {
                        let angle = std::f64::consts::TAU * k as f64 / 6.0;
                        let center = [
                            2.0 * cell_radius * angle.cos(),
                            2.0 * cell_radius * angle.sin(),
                        ];
                        uniform_disk(&mut rng, 1, cell_radius, center)
                    })
                    .collect()
            }
        };
        let mut env = Self {
            positions,
            cell_radius,
            path_loss_exponent,
            tx_power,
            noise,
            interferers,
            fading: Vec::new(),
            interferer_fading: Vec::new(),
            rng,
        };
        env.redraw_fading();
        Ok(env)
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    /// Redraws every fading coefficient; called once per transmission epoch.
    pub fn redraw_fading(&mut self) {
        let n = self.positions.len();
        self.fading = (0..n)
            .map(|_| (0..n).map(|_| exp1(&mut self.rng)).collect())
            .collect();
        let k = self.interferers.len();
        self.interferer_fading = (0..n)
            .map(|_| (0..k).map(|_| exp1(&mut self.rng)).collect())
            .collect();
    }

    fn received_power(&self, rx: NodeId, tx: NodeId) -> f64 {
        let d = distance(self.positions[rx], self.positions[tx]);
        self.tx_power * self.fading[rx][tx] * d.powf(-self.path_loss_exponent)
    }

    fn interference(&self, rx: NodeId) -> f64 {
        self.interferers
            .iter()
            .enumerate()
            .map(|(k, pos)| {
                let d = distance(self.positions[rx], *pos);
                self.tx_power * self.interferer_fading[rx][k] * d.powf(-self.path_loss_exponent)
            })
            .sum()
    }

    /// `SINR_{rx,tx} = P h d^{−α} / (Σ_{x∈Φ_rx} P h_x d_x^{−α} + σ²)`.
    pub fn sinr(&self, tx: NodeId, rx: NodeId) -> Result<f64, WirelessError> {
        if tx == rx {
            return Err(WirelessError::SelfLink(tx));
        }
        Ok(self.received_power(rx, tx) / (self.interference(rx) + self.noise))
    }

    /// Full matrix indexed `[rx][tx]`; the diagonal is NaN.
    pub fn sinr_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.node_count();
        (0..n)
            .map(|rx| {
                (0..n)
                    .map(|tx| {
                        if tx == rx {
                            f64::NAN
                        } else {
                            self.sinr(tx, rx).expect("off-diagonal link")
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn exp1(rng: &mut ChaCha8Rng) -> f64 {
    // Exp(1) via inversion; guarded away from ln(0).
    -(1.0 - rng.random_range(0.0..1.0_f64)).max(f64::MIN_POSITIVE).ln()
}

/// Threshold schedule: receiver sets and the scheduled-node set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    /// `𝒴_i`: receivers whose SINR from node `i` clears the threshold.
    pub receiver_sets: Vec<BTreeSet<NodeId>>,
    /// `Ī`: nodes with at least one receiver.
    pub scheduled: BTreeSet<NodeId>,
}

/// Builds the schedule from an SINR matrix (`[rx][tx]`) and a linear-scale
/// threshold: `𝒴_i = { j ≠ i : SINR_{j,i} > γ }`, `Ī = { i : 𝒴_i ≠ ∅ }`.
/// An empty schedule is a legal outcome.
pub fn build_schedule(sinr: &[Vec<f64>], gamma_linear: f64) -> Schedule {
    let n = sinr.len();
    let receiver_sets: Vec<BTreeSet<NodeId>> = (0..n)
        .map(|tx| {
            (0..n)
                .filter(|&rx| rx != tx && sinr[rx][tx] > gamma_linear)
                .collect()
        })
        .collect();
    let scheduled = (0..n)
        .filter(|&tx| !receiver_sets[tx].is_empty())
        .collect();
    Schedule {
        receiver_sets,
        scheduled,
    }
}

/// Per-node min rate `R_i = min_{j∈𝒴_i} log₂(1 + SINR_{j,i})` for scheduled
/// nodes.
pub fn min_rates(schedule: &Schedule, sinr: &[Vec<f64>]) -> BTreeMap<NodeId, f64> {
    schedule
        .scheduled
        .iter()
        .map(|&tx| {
            let r = schedule.receiver_sets[tx]
                .iter()
                .map(|&rx| (1.0 + sinr[rx][tx]).log2())
                .fold(f64::INFINITY, f64::min);
            (tx, r)
        })
        .collect()
}

/// Optimal max-min bandwidth split `B_i* = (B/R_i) / Σ_{i'∈Ī} (1/R_{i'})`.
///
/// Nodes whose min rate underflows to zero are excluded from the scheduled
/// set with a warning before allocation; unscheduled nodes get zero. The
/// returned split sums to `B` and equalizes all `B_i·R_i`.
pub fn allocate_bandwidth(
    schedule: &Schedule,
    rates: &BTreeMap<NodeId, f64>,
    total_bandwidth: f64,
) -> Result<BTreeMap<NodeId, f64>, WirelessError> {
    let mut usable: Vec<(NodeId, f64)> = Vec::new();
    for &i in &schedule.scheduled {
        let r = rates.get(&i).copied().unwrap_or(0.0);
        if r > 0.0 {
            usable.push((i, r));
        } else {
            log::warn!("node {i} has zero min rate; excluded from allocation");
        }
    }
    if usable.is_empty() {
        return Err(WirelessError::EmptySchedule);
    }
    let inverse_sum: f64 = usable.iter().map(|(_, r)| 1.0 / r).sum();
    Ok(usable
        .into_iter()
        .map(|(i, r)| (i, total_bandwidth / (r * inverse_sum)))
        .collect())
}

/// Transmission durations in slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Durations {
    /// Raw `Γ_{j,i} = q S / (T B_i log₂(1+SINR_{j,i}))` per (receiver,
    /// transmitter) pair, before ceiling.
    pub raw: BTreeMap<(NodeId, NodeId), f64>,
    /// Ceiled to whole slots for the discrete clock.
    pub slots: BTreeMap<(NodeId, NodeId), u64>,
    /// `Γ_T`: max ceiled duration over all scheduled pairs (0 when nothing
    /// is scheduled).
    pub gamma_t: u64,
}

/// Computes per-pair transmission durations and the maximal transmission
/// duration. `sparsity` is the transmitted fraction of parameters (q), `bits`
/// the total quantized parameter size S in bits, and `train_latency` the
/// per-iteration training time T in seconds (one slot).
pub fn transmission_durations(
    schedule: &Schedule,
    bandwidths: &BTreeMap<NodeId, f64>,
    sinr: &[Vec<f64>],
    sparsity: f64,
    bits: f64,
    train_latency: f64,
) -> Result<Durations, WirelessError> {
    if train_latency <= 0.0 || bits <= 0.0 {
        return Err(WirelessError::Config(
            "bits and training latency must be positive".into(),
        ));
    }
    let mut raw = BTreeMap::new();
    let mut slots = BTreeMap::new();
    let mut gamma_t = 0u64;
    for (&tx, &bw) in bandwidths {
        if bw <= 0.0 {
            return Err(WirelessError::ZeroBandwidth(tx));
        }
        for &rx in &schedule.receiver_sets[tx] {
            let rate = (1.0 + sinr[rx][tx]).log2();
            let duration = sparsity * bits / (train_latency * bw * rate);
            let ceiled = duration.ceil() as u64;
            gamma_t = gamma_t.max(ceiled);
            raw.insert((rx, tx), duration);
            slots.insert((rx, tx), ceiled);
        }
    }
    Ok(Durations {
        raw,
        slots,
        gamma_t,
    })
}

/// Waiting duration reserved for unscheduled nodes: `Γ_W = w₀·|𝒥 \ Ī|`.
pub fn waiting_duration(schedule: &Schedule, node_count: usize, w0_slots: u64) -> u64 {
    w0_slots * (node_count - schedule.scheduled.len()) as u64
}

/// Everything one scheduling epoch produced.
#[derive(Debug, Clone)]
pub struct ScheduleOutcome {
    pub schedule: Schedule,
    pub rates: BTreeMap<NodeId, f64>,
    pub bandwidths: BTreeMap<NodeId, f64>,
    pub durations: Durations,
    pub gamma_w: u64,
    pub gamma_t: u64,
    /// Aggregated duration `Γ = Γ_W + Γ_T`.
    pub gamma: u64,
}

impl ScheduleOutcome {
    pub fn min_bandwidth(&self) -> Option<f64> {
        self.bandwidths
            .values()
            .fold(None, |acc, &b| Some(acc.map_or(b, |m: f64| m.min(b))))
    }
}
