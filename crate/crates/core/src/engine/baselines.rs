//! Simplified centralized baselines for comparison curves: federated
//! averaging, partial-participation averaging, and semi-asynchronous
//! aggregation by arrival order. All three are labeled simplified in output
//! metadata because only their aggregation rules are modeled.

use rand::Rng;

use crate::analysis;
use crate::learning::{self, ParameterVector};
use crate::trace::{DumpEvent, RunDump, TraceRecord};

use super::{predicts, rng_stream, Algorithm, EngineError, MessageStats, RunResult, SimSetup};

pub(super) fn run_centralized(setup: &SimSetup) -> Result<RunResult, EngineError> {
    let n = setup.tasks.len();
    let mut global = weighted_average(
        &setup
            .tasks
            .iter()
            .map(|t| t.fraction)
            .zip(setup.initial.iter().cloned())
            .collect::<Vec<_>>(),
    )?;
    let mut selector = rng_stream(setup.seed, 5);
    let mut records = Vec::new();
    let mut trajectory = Vec::new();
    let classification = setup
        .tasks
        .iter()
        .all(|t| !matches!(t.loss, learning::LossKind::Quadratic { .. }));

    for round in 0..setup.budget {
        let global_loss = analysis::global_loss(&setup.tasks, &global)?;
        trajectory.push(global.clone());
        let accuracy = if classification {
            accuracy(setup, &global)?
        } else {
            f64::NAN
        };

        // Local training: every node starts from the current global model.
        let mut locals = Vec::with_capacity(n);
        for task in &setup.tasks {
            let mut w = global.clone();
            for _ in 0..setup.local_steps.max(1) {
                let grad = learning::loss_gradient(task, &w)?;
                let candidate = w.add_scaled(-setup.eta, &grad)?;
                w = learning::project(&task.regularizer, &candidate);
            }
            locals.push(w);
        }

        // Aggregation rule per variant.
        let participants: Vec<usize> = match setup.algorithm {
            Algorithm::FedAvg => (0..n).collect(),
            Algorithm::FedAvgPartial => {
                let take = ((setup.partial_fraction * n as f64).ceil() as usize).clamp(1, n);
                pick(&mut selector, n, take)
            }
            Algorithm::FedSemiAsync => {
                // Arrival order: seeded exponential delays, earliest first.
                let take = setup.semi_async_arrivals.clamp(1, n);
                let mut delays: Vec<(f64, usize)> = (0..n)
                    .map(|i| {
                        let u: f64 = selector.random_range(0.0..1.0_f64);
                        (-(1.0 - u).max(f64::MIN_POSITIVE).ln(), i)
                    })
                    .collect();
                delays.sort_by(|a, b| a.partial_cmp(b).expect("finite delays"));
                let mut chosen: Vec<usize> = delays.into_iter().take(take).map(|(_, i)| i).collect();
                chosen.sort_unstable();
                chosen
            }
            _ => unreachable!("centralized runner only handles averaging variants"),
        };

        let weight_total: f64 = participants.iter().map(|&i| setup.tasks[i].fraction).sum();
        let next = weighted_average(
            &participants
                .iter()
                .map(|&i| (setup.tasks[i].fraction / weight_total, locals[i].clone()))
                .collect::<Vec<_>>(),
        )?;

        let consensus_max = locals
            .iter()
            .map(|w| next.distance(w))
            .collect::<Result<Vec<_>, _>>()
            .map_err(EngineError::Learning)?
            .into_iter()
            .fold(0.0_f64, f64::max);
        let grad_norm_sq = locals
            .iter()
            .map(|w| {
                w.add_scaled(-1.0, &global)
                    .map(|d| d.norm_sq() / (setup.eta * setup.eta))
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(EngineError::Learning)?
            .into_iter()
            .sum();

        records.push(TraceRecord {
            slot: round,
            iteration: round,
            algorithm: setup.algorithm.label().to_string(),
            global_loss,
            bound_u: f64::NAN,
            u_eta: f64::NAN,
            grad_norm_sq,
            consensus_max,
            accuracy,
            gamma_realized: 1,
            bandwidth_min: f64::NAN,
            scheduled_count: participants.len() as u64,
            peer_staleness_max: 0.0,
        });
        global = next;

        if setup.stop_epsilon > 0.0 && global_loss <= setup.stop_epsilon {
            break;
        }
    }

    Ok(RunResult {
        records,
        dump: RunDump {
            seed: setup.seed,
            node_count: n as u32,
            dim: setup.initial[0].dim() as u32,
            events: vec![DumpEvent::End {
                enqueued: 0,
                delivered: 0,
                dropped: 0,
                superseded: 0,
            }],
        },
        stats: MessageStats::default(),
        realized_staleness_max: 0,
        mean_gamma_realized: 1.0,
        epochs: Vec::new(),
        trajectory,
    })
}

fn weighted_average(terms: &[(f64, ParameterVector)]) -> Result<ParameterVector, EngineError> {
    let refs: Vec<(f64, &ParameterVector)> = terms.iter().map(|(a, w)| (*a, w)).collect();
    learning::params::weighted_sum(&refs).map_err(EngineError::Learning)
}

fn pick(rng: &mut rand_chacha::ChaCha8Rng, n: usize, take: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut chosen: Vec<usize> = order.into_iter().take(take).collect();
    chosen.sort_unstable();
    chosen
}

fn accuracy(setup: &SimSetup, w: &ParameterVector) -> Result<f64, EngineError> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for task in &setup.tasks {
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
