//! Asynchronous parameter-sharing state machine: stamped mailboxes, bounded
//! staleness, shared/aggregated parameter construction, and the local update
//! rule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learning::{
    self, params::weighted_sum, LearningError, LocalTask, ParameterVector,
};

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("no mailbox entry for sender {sender} at node {node}")]
    MissingSender { node: NodeId, sender: NodeId },
    #[error("node {node} holds the whole dataset; sharing is undefined")]
    DegenerateTopology { node: NodeId },
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error("malformed message record: {0}")]
    Wire(String),
}

/// A parameter snapshot in flight or at rest in a mailbox: who sent it and at
/// which iteration it was taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StampedParameter {
    pub sender: NodeId,
    pub stamp: u64,
    pub payload: ParameterVector,
}

/// Outcome of a delivery attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    Accepted,
    /// The incoming stamp regressed behind the stored one; message dropped.
    DroppedStale,
}

/// One node's full protocol state.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub node_id: NodeId,
    pub w: ParameterVector,
    /// Freshest received parameter per sender (self entry is implicit:
    /// `τ_{i,i}(t) = t` always, realized by using `w` directly).
    pub latest: BTreeMap<NodeId, StampedParameter>,
    /// `J_{i,j}`: whether a parameter from `j` arrived in the current epoch.
    pub received_flags: BTreeMap<NodeId, bool>,
    /// `Q_{i,j}`: whether node `j` scheduled this node as a receiver.
    pub scheduled_flags: BTreeMap<NodeId, bool>,
    /// `Y_i`: whether this node is scheduled at least once in the network.
    pub scheduled_once: bool,
    /// Local iteration counter `t`.
    pub iteration: u64,
    /// Iteration at which the current transmission epoch started (`t_S`).
    pub epoch_start: u64,
}

impl NodeState {
    /// Fresh state with the given initial parameter. The mailbox starts
    /// empty; the engine broadcasts all `w_j(0)` with stamp 0 before the
    /// first update so sharing is defined from iteration 1.
    pub fn new(node_id: NodeId, w: ParameterVector) -> Self {
        Self {
            node_id,
            w,
            latest: BTreeMap::new(),
            received_flags: BTreeMap::new(),
            scheduled_flags: BTreeMap::new(),
            scheduled_once: true,
            iteration: 0,
            epoch_start: 0,
        }
    }

    fn entry(&self, sender: NodeId) -> Result<&StampedParameter, ProtocolError> {
        self.latest.get(&sender).ok_or(ProtocolError::MissingSender {
            node: self.node_id,
            sender,
        })
    }
}

/// Shared parameter `w_{i|sh}(t) = (1/(1−α_i)) Σ_{j≠i} α_j w_j(τ_{i,j}(t))`.
pub fn shared_parameter(
    state: &NodeState,
    fractions: &[f64],
) -> Result<ParameterVector, ProtocolError> {
    let own = fractions[state.node_id];
    if own >= 1.0 {
        return Err(ProtocolError::DegenerateTopology {
            node: state.node_id,
        });
    }
    let mut terms = Vec::with_capacity(fractions.len() - 1);
    for (j, &alpha) in fractions.iter().enumerate() {
        if j == state.node_id {
            continue;
        }
        terms.push((alpha / (1.0 - own), &state.entry(j)?.payload));
    }
    Ok(weighted_sum(&terms).map_err(LearningError::from)?)
}

/// Aggregated parameter `v_i(t) = Σ_j α_j w_j(τ_{i,j}(t))`, with the self
/// entry current. In debug builds the equivalent form
/// `α_i w_i + (1−α_i) w_{i|sh}` is checked to 1e-12.
pub fn aggregate(state: &NodeState, fractions: &[f64]) -> Result<ParameterVector, ProtocolError> {
    let mut terms = Vec::with_capacity(fractions.len());
    for (j, &alpha) in fractions.iter().enumerate() {
        if j == state.node_id {
            terms.push((alpha, &state.w));
        } else {
            terms.push((alpha, &state.entry(j)?.payload));
        }
    }
    let v = weighted_sum(&terms).map_err(LearningError::from)?;
    #[cfg(debug_assertions)]
    if fractions[state.node_id] < 1.0 {
        let shared = shared_parameter(state, fractions)?;
        let own = fractions[state.node_id];
        let alt = state
            .w
            .scaled(own)
            .and_then(|half| half.add_scaled(1.0 - own, &shared))
            .map_err(ProtocolError::Learning)?;
        debug_assert!(
            v.distance(&alt).map_err(ProtocolError::Learning)? <= 1e-12 * (1.0 + v.norm()),
            "the two forms of the aggregation rule disagree"
        );
    }
    Ok(v)
}

/// Result of one local update step.
#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    /// Aggregated point `v_i(t)` the gradient was taken at.
    pub aggregated: ParameterVector,
    /// Descent gradient `s_i(t)`.
    pub descent: ParameterVector,
}

/// Applies `w_i(t+1) = [w_i(t) − η ∇_i F_i(v_i(t))]^+` and increments the
/// iteration counter. The projected-gradient form and the `w + η s` form
/// agree to 1e-12 by construction; the descent direction is returned for
/// bound bookkeeping.
pub fn local_update(
    state: &mut NodeState,
    task: &LocalTask,
    fractions: &[f64],
    eta: f64,
) -> Result<UpdateOutcome, ProtocolError> {
    let v = aggregate(state, fractions)?;
    let grad = learning::local_gradient(task, &v).map_err(ProtocolError::Learning)?;
    let candidate = state
        .w
        .add_scaled(-eta, &grad)
        .map_err(ProtocolError::Learning)?;
    let next = learning::project(&task.regularizer, &candidate);
    let descent = next
        .add_scaled(-1.0, &state.w)
        .and_then(|d| d.scaled(1.0 / eta))
        .map_err(ProtocolError::Learning)?;
    #[cfg(debug_assertions)]
    {
        let via_descent = state
            .w
            .add_scaled(eta, &descent)
            .map_err(ProtocolError::Learning)?;
        debug_assert!(
            next.distance(&via_descent).map_err(ProtocolError::Learning)?
                <= 1e-12 * (1.0 + next.norm()),
            "projected-gradient and descent forms of the update disagree"
        );
    }
    state.w = next;
    state.iteration += 1;
    Ok(UpdateOutcome {
        aggregated: v,
        descent,
    })
}

/// Stores an incoming stamped parameter, keeping mailbox stamps
/// non-decreasing per sender. A regressing stamp is dropped with a warning
/// rather than treated as an error: asynchronous networks reorder, and the
/// staleness assumption only constrains the value actually used.
pub fn deliver(state: &mut NodeState, msg: StampedParameter) -> Delivery {
    if let Some(existing) = state.latest.get(&msg.sender) {
        if msg.stamp < existing.stamp {
            log::warn!(
                "node {}: dropped stale message from {} (stamp {} < {})",
                state.node_id,
                msg.sender,
                msg.stamp,
                existing.stamp
            );
            return Delivery::DroppedStale;
        }
    }
    state.received_flags.insert(msg.sender, true);
    state.latest.insert(msg.sender, msg);
    Delivery::Accepted
}

/// Bounded-staleness predicate: every mailbox stamp `τ` satisfies
/// `max{t − Γ, 0} < τ <= t` (strict on the left). The self entry is current
/// by construction.
pub fn check_staleness(state: &NodeState, gamma: u64) -> bool {
    let t = state.iteration;
    let floor = t.saturating_sub(gamma);
    state
        .latest
        .values()
        .all(|m| m.stamp > floor && m.stamp <= t)
}

// ---------------------------------------------------------------------------
// Message wire format: little-endian framed records, used by trace dumps and
// replay. One record is `sender u32 | stamp u64 | dim u32 | payload f64×dim`.
// ---------------------------------------------------------------------------

pub fn encode_message(msg: &StampedParameter, out: &mut Vec<u8>) {
    out.extend_from_slice(&(msg.sender as u32).to_le_bytes());
    out.extend_from_slice(&msg.stamp.to_le_bytes());
    out.extend_from_slice(&(msg.payload.dim() as u32).to_le_bytes());
    for v in msg.payload.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn decode_message(input: &mut &[u8]) -> Result<StampedParameter, ProtocolError> {
    let sender = take_u32(input)? as NodeId;
    let stamp = take_u64(input)?;
    let dim = take_u32(input)? as usize;
    let mut values = Vec::with_capacity(dim);
    for _ in 0..dim {
        values.push(f64::from_le_bytes(take_array(input)?));
    }
    let payload = ParameterVector::new(values)
        .map_err(|e| ProtocolError::Wire(format!("non-finite payload: {e}")))?;
    Ok(StampedParameter {
        sender,
        stamp,
        payload,
    })
}

pub(crate) fn take_array<const N: usize>(input: &mut &[u8]) -> Result<[u8; N], ProtocolError> {
    if input.len() < N {
        return Err(ProtocolError::Wire("truncated record".into()));
    }
    let (head, rest) = input.split_at(N);
    *input = rest;
    Ok(head.try_into().expect("split length"))
}

pub(crate) fn take_u32(input: &mut &[u8]) -> Result<u32, ProtocolError> {
    Ok(u32::from_le_bytes(take_array(input)?))
}

pub(crate) fn take_u64(input: &mut &[u8]) -> Result<u64, ProtocolError> {
    Ok(u64::from_le_bytes(take_array(input)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::{dataset::Sample, LossKind, Regularizer};

    fn pv(values: &[f64]) -> ParameterVector {
        ParameterVector::new(values.to_vec()).unwrap()
    }

    fn msg(sender: NodeId, stamp: u64, value: f64) -> StampedParameter {
        StampedParameter {
            sender,
            stamp,
            payload: pv(&[value]),
        }
    }

    fn node_with_mailbox(id: NodeId, w: f64, entries: &[(NodeId, u64, f64)]) -> NodeState {
        let mut state = NodeState::new(id, pv(&[w]));
        for &(sender, stamp, value) in entries {
            deliver(&mut state, msg(sender, stamp, value));
        }
        state
    }

    #[test]
    fn shared_parameter_two_nodes_is_the_neighbor() {
        let state = node_with_mailbox(0, 7.0, &[(1, 0, 3.5)]);
        let sh = shared_parameter(&state, &[0.5, 0.5]).unwrap();
        assert_eq!(sh.as_slice(), &[3.5]);
    }

    #[test]
    fn shared_parameter_hand_value_three_nodes() {
        // α = (0.2, 0.3, 0.5), payloads w2 = 1, w3 = 2 at node 1:
        // (0.3·1 + 0.5·2) / 0.8 = 1.625
        let state = node_with_mailbox(0, 0.0, &[(1, 0, 1.0), (2, 0, 2.0)]);
        let sh = shared_parameter(&state, &[0.2, 0.3, 0.5]).unwrap();
        assert!((sh.as_slice()[0] - 1.625).abs() < 1e-12);
    }

    #[test]
    fn shared_parameter_identical_payloads_is_that_point() {
        let state = node_with_mailbox(1, 0.0, &[(0, 0, 4.25), (2, 0, 4.25)]);
        let sh = shared_parameter(&state, &[0.1, 0.6, 0.3]).unwrap();
        assert!((sh.as_slice()[0] - 4.25).abs() < 1e-12);
    }

    #[test]
    fn shared_parameter_errors() {
        let state = node_with_mailbox(0, 0.0, &[(1, 0, 1.0)]);
        assert!(matches!(
            shared_parameter(&state, &[0.2, 0.3, 0.5]),
            Err(ProtocolError::MissingSender { sender: 2, .. })
        ));
        let lonely = node_with_mailbox(0, 0.0, &[]);
        assert!(matches!(
            shared_parameter(&lonely, &[1.0]),
            Err(ProtocolError::DegenerateTopology { .. })
        ));
    }

    #[test]
    fn aggregate_hand_value() {
        // α = (0.2, 0.3, 0.5), w1 = 0 (self), w2 = 1, w3 = 2 -> v = 1.3
        let state = node_with_mailbox(0, 0.0, &[(1, 3, 1.0), (2, 3, 2.0)]);
        let v = aggregate(&state, &[0.2, 0.3, 0.5]).unwrap();
        assert!((v.as_slice()[0] - 1.3).abs() < 1e-12);
    }

    #[test]
    fn aggregate_of_identical_payloads_is_that_point() {
        let state = node_with_mailbox(0, 5.5, &[(1, 0, 5.5), (2, 0, 5.5)]);
        let v = aggregate(&state, &[0.4, 0.3, 0.3]).unwrap();
        assert!((v.as_slice()[0] - 5.5).abs() < 1e-12);
    }

    #[test]
    fn aggregate_agrees_with_shared_form_on_random_states() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(2..6);
            let mut fractions: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = fractions.iter().sum();
            fractions.iter_mut().for_each(|f| *f /= total);
            let me = rng.random_range(0..n);
            let mut state = NodeState::new(me, pv(&[rng.random_range(-3.0..3.0)]));
            for j in 0..n {
                if j != me {
                    deliver(&mut state, msg(j, 0, rng.random_range(-3.0..3.0)));
                }
            }
            let v = aggregate(&state, &fractions).unwrap();
            let sh = shared_parameter(&state, &fractions).unwrap();
            let alt = state.w.as_slice()[0] * fractions[me]
                + (1.0 - fractions[me]) * sh.as_slice()[0];
            assert!((v.as_slice()[0] - alt).abs() <= 1e-12 * (1.0 + alt.abs()));
        }
    }

    fn quadratic_task(center: f64, fraction: f64, bound: f64) -> LocalTask {
        LocalTask::new(
            vec![Sample {
                features: vec![center],
                label: 0,
            }],
            fraction,
            Regularizer::L2 { bound },
            LossKind::Quadratic { curvature: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn local_update_hand_value() {
        // ξ = 0, α = 1 (single-node view), w = v = 2, η = 0.1 -> w' = 1.8
        let task = quadratic_task(0.0, 1.0, 1e9);
        let mut state = NodeState::new(0, pv(&[2.0]));
        let out = local_update(&mut state, &task, &[1.0], 0.1).unwrap();
        assert!((state.w.as_slice()[0] - 1.8).abs() < 1e-12);
        assert!((out.descent.as_slice()[0] + 2.0).abs() < 1e-12);
        assert_eq!(state.iteration, 1);
    }

    #[test]
    fn local_update_zero_gradient_is_fixed_point() {
        let task = quadratic_task(0.0, 1.0, 1e9);
        let mut state = NodeState::new(0, pv(&[0.0]));
        local_update(&mut state, &task, &[1.0], 0.1).unwrap();
        assert_eq!(state.w.as_slice()[0], 0.0);
    }

    #[test]
    fn local_update_projects_onto_active_ball() {
        // Candidate lands outside the unit ball; expect radial scaling.
        let task = LocalTask::new(
            vec![Sample {
                features: vec![30.0, 40.0],
                label: 0,
            }],
            1.0,
            Regularizer::L2 { bound: 0.5 },
            LossKind::Quadratic { curvature: 1.0 },
        )
        .unwrap();
        let mut state = NodeState::new(0, pv(&[0.0, 0.0]));
        // gradient at v = 0 is (0,0) - (30,40) = -(30,40); w - 0.1*grad = (3,4)
        local_update(&mut state, &task, &[1.0], 0.1).unwrap();
        let w = state.w.as_slice();
        assert!((w[0] - 0.6).abs() < 1e-12);
        assert!((w[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn delivery_is_idempotent_and_monotone() {
        let mut state = node_with_mailbox(0, 0.0, &[(1, 7, 1.0)]);
        let before = state.latest.clone();

        // Duplicate stamp: accepted, state unchanged.
        assert_eq!(deliver(&mut state, msg(1, 7, 1.0)), Delivery::Accepted);
        assert_eq!(state.latest, before);

        // Regressed stamp: dropped, state identical.
        assert_eq!(deliver(&mut state, msg(1, 5, 9.0)), Delivery::DroppedStale);
        assert_eq!(state.latest, before);

        // Fresh stamp: visible to the next read.
        assert_eq!(deliver(&mut state, msg(1, 9, 2.5)), Delivery::Accepted);
        let sh = shared_parameter(&state, &[0.5, 0.5]).unwrap();
        assert_eq!(sh.as_slice(), &[2.5]);
    }

    #[test]
    fn shuffled_replay_keeps_freshest_payload() {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut stamps: Vec<u64> = (0..20).collect();
        stamps.shuffle(&mut rng);
        let mut state = NodeState::new(0, pv(&[0.0]));
        for &s in &stamps {
            deliver(&mut state, msg(1, s, s as f64));
        }
        assert_eq!(state.latest[&1].stamp, 19);
        assert_eq!(state.latest[&1].payload.as_slice(), &[19.0]);
    }

    #[test]
    fn staleness_bound_is_strict() {
        let mut state = node_with_mailbox(0, 0.0, &[(1, 6, 0.0)]);
        state.iteration = 10;
        assert!(check_staleness(&state, 5)); // stamps in {6..10} pass
        state.latest.get_mut(&1).unwrap().stamp = 5;
        assert!(!check_staleness(&state, 5)); // boundary stamp fails
    }

    #[test]
    fn staleness_enumeration_small_t() {
        // t = 3, Γ = 5: floor is 0, so stamp 0 fails and stamps 1..3 pass.
        for (stamp, expected) in [(0, false), (1, true), (2, true), (3, true)] {
            let mut state = node_with_mailbox(0, 0.0, &[(1, stamp, 0.0)]);
            state.iteration = 3;
            assert_eq!(check_staleness(&state, 5), expected, "stamp {stamp}");
        }
    }

    #[test]
    fn wire_round_trip() {
        let original = msg(3, 42, -1.25);
        let mut bytes = Vec::new();
        encode_message(&original, &mut bytes);
        // sender u32 + stamp u64 + dim u32 + one f64
        assert_eq!(bytes.len(), 4 + 8 + 4 + 8);
        assert_eq!(&bytes[0..4], &3u32.to_le_bytes());
        let mut slice = bytes.as_slice();
        let decoded = decode_message(&mut slice).unwrap();
        assert_eq!(decoded, original);
        assert!(slice.is_empty());
    }
}
