//! Per-iteration trace records, their CSV schema, and the binary dump format
//! used for bit-exact replay.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{self, NodeId, ProtocolError, StampedParameter};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("bad dump header")]
    BadHeader,
    #[error("unknown record tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error(transparent)]
    Wire(#[from] ProtocolError),
}

/// One simulated iteration's metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub slot: u64,
    pub iteration: u64,
    pub algorithm: String,
    /// Global loss `F̄(w(t))` at the aggregated point.
    pub global_loss: f64,
    /// Running convergence bound `U(Γ)` including gradients through `t−1`
    /// (NaN when constants are unavailable).
    pub bound_u: f64,
    pub u_eta: f64,
    /// `‖g(t)‖₂²`, the stacked descent-gradient norm for this iteration.
    pub grad_norm_sq: f64,
    /// `max_i ‖w(t) − v_i(t)‖₂`.
    pub consensus_max: f64,
    /// Classification accuracy at `w(t)` (NaN for regression tasks).
    pub accuracy: f64,
    /// Realized aggregated duration `Γ = Γ_W + Γ_T` of the current epoch.
    pub gamma_realized: u64,
    /// Smallest allocated bandwidth this epoch (NaN outside wireless mode).
    pub bandwidth_min: f64,
    /// `|Ī|` for the current epoch.
    pub scheduled_count: u64,
    /// `max_{i,j} ‖w_i(t) − w_i(τ_{j,i}(t))‖₂` — kept on the record for the
    /// analysis layer but not part of the pinned CSV schema.
    #[serde(default)]
    pub peer_staleness_max: f64,
}

pub const CSV_HEADER: &str = "slot,iteration,algorithm,global_loss,bound_U,u_eta,grad_norm_sq,consensus_max,accuracy,gamma_realized,bandwidth_min,scheduled_count";

impl TraceRecord {
    pub fn csv_row(&self) -> String {
        let mut row = String::new();
        write!(
            row,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.slot,
            self.iteration,
            self.algorithm,
            fmt_f64(self.global_loss),
            fmt_f64(self.bound_u),
            fmt_f64(self.u_eta),
            fmt_f64(self.grad_norm_sq),
            fmt_f64(self.consensus_max),
            fmt_f64(self.accuracy),
            self.gamma_realized,
            fmt_f64(self.bandwidth_min),
            self.scheduled_count
        )
        .expect("write to string");
        row
    }
}

/// Canonical float formatting for trace artifacts: shortest round-trippable
/// form, `NaN` spelled out.
fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

pub fn write_csv(records: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 96 + CSV_HEADER.len() + 1);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Reads back the pinned columns of a trace CSV.
pub fn read_csv(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => return Err(TraceError::BadHeader),
    }
    let mut records = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(TraceError::BadHeader);
        }
        let f = |s: &str| -> f64 {
            if s == "NaN" {
                f64::NAN
            } else {
                s.parse().unwrap_or(f64::NAN)
            }
        };
        records.push(TraceRecord {
            slot: fields[0].parse().map_err(|_| TraceError::BadHeader)?,
            iteration: fields[1].parse().map_err(|_| TraceError::BadHeader)?,
            algorithm: fields[2].to_string(),
            global_loss: f(fields[3]),
            bound_u: f(fields[4]),
            u_eta: f(fields[5]),
            grad_norm_sq: f(fields[6]),
            consensus_max: f(fields[7]),
            accuracy: f(fields[8]),
            gamma_realized: fields[9].parse().map_err(|_| TraceError::BadHeader)?,
            bandwidth_min: f(fields[10]),
            scheduled_count: fields[11].parse().map_err(|_| TraceError::BadHeader)?,
            peer_staleness_max: f64::NAN,
        });
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Binary run dump. Little-endian framed records behind a fixed header:
//
//   magic "DFLD" | version u16 | seed u64 | node_count u32 | dim u32
//   tag 0x01 (delivery): receiver u32 | arrival_slot u64 | message record
//                        (sender u32 | stamp u64 | dim u32 | payload f64×dim)
//   tag 0x02 (schedule): slot u64 | gamma_w u64 | gamma_t u64 |
//                        bandwidth_min f64 | scheduled_count u32
//   tag 0x03 (end):      enqueued u64 | delivered u64 | dropped u64 |
//                        superseded u64
// ---------------------------------------------------------------------------

const DUMP_MAGIC: &[u8; 4] = b"DFLD";
const DUMP_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum DumpEvent {
    Delivery {
        receiver: NodeId,
        arrival_slot: u64,
        message: StampedParameter,
    },
    Schedule {
        slot: u64,
        gamma_w: u64,
        gamma_t: u64,
        bandwidth_min: f64,
        scheduled_count: u32,
    },
    End {
        enqueued: u64,
        delivered: u64,
        dropped: u64,
        superseded: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunDump {
    pub seed: u64,
    pub node_count: u32,
    pub dim: u32,
    pub events: Vec<DumpEvent>,
}

impl RunDump {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(DUMP_MAGIC);
        out.extend_from_slice(&DUMP_VERSION.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.node_count.to_le_bytes());
        out.extend_from_slice(&self.dim.to_le_bytes());
        for event in &self.events {
            match event {
                DumpEvent::Delivery {
                    receiver,
                    arrival_slot,
                    message,
                } => {
                    out.push(0x01);
                    out.extend_from_slice(&(*receiver as u32).to_le_bytes());
                    out.extend_from_slice(&arrival_slot.to_le_bytes());
                    protocol::encode_message(message, &mut out);
                }
                DumpEvent::Schedule {
                    slot,
                    gamma_w,
                    gamma_t,
                    bandwidth_min,
                    scheduled_count,
                } => {
                    out.push(0x02);
                    out.extend_from_slice(&slot.to_le_bytes());
                    out.extend_from_slice(&gamma_w.to_le_bytes());
                    out.extend_from_slice(&gamma_t.to_le_bytes());
                    out.extend_from_slice(&bandwidth_min.to_le_bytes());
                    out.extend_from_slice(&scheduled_count.to_le_bytes());
                }
                DumpEvent::End {
                    enqueued,
                    delivered,
                    dropped,
                    superseded,
                } => {
                    out.push(0x03);
                    out.extend_from_slice(&enqueued.to_le_bytes());
                    out.extend_from_slice(&delivered.to_le_bytes());
                    out.extend_from_slice(&dropped.to_le_bytes());
                    out.extend_from_slice(&superseded.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TraceError> {
        let mut input = bytes;
        let magic: [u8; 4] = protocol::take_array(&mut input)?;
        if &magic != DUMP_MAGIC {
            return Err(TraceError::BadHeader);
        }
        let version = u16::from_le_bytes(protocol::take_array(&mut input)?);
        if version != DUMP_VERSION {
            return Err(TraceError::BadHeader);
        }
        let seed = protocol::take_u64(&mut input)?;
        let node_count = protocol::take_u32(&mut input)?;
        let dim = protocol::take_u32(&mut input)?;
        let mut events = Vec::new();
        while !input.is_empty() {
            let tag: [u8; 1] = protocol::take_array(&mut input)?;
            match tag[0] {
                0x01 => {
                    let receiver = protocol::take_u32(&mut input)? as NodeId;
                    let arrival_slot = protocol::take_u64(&mut input)?;
                    let message = protocol::decode_message(&mut input)?;
                    events.push(DumpEvent::Delivery {
                        receiver,
                        arrival_slot,
                        message,
                    });
                }
                0x02 => {
                    let slot = protocol::take_u64(&mut input)?;
                    let gamma_w = protocol::take_u64(&mut input)?;
                    let gamma_t = protocol::take_u64(&mut input)?;
                    let bandwidth_min = f64::from_le_bytes(protocol::take_array(&mut input)?);
                    let scheduled_count = protocol::take_u32(&mut input)?;
                    events.push(DumpEvent::Schedule {
                        slot,
                        gamma_w,
                        gamma_t,
                        bandwidth_min,
                        scheduled_count,
                    });
                }
                0x03 => {
                    let enqueued = protocol::take_u64(&mut input)?;
                    let delivered = protocol::take_u64(&mut input)?;
                    let dropped = protocol::take_u64(&mut input)?;
                    let superseded = protocol::take_u64(&mut input)?;
                    events.push(DumpEvent::End {
                        enqueued,
                        delivered,
                        dropped,
                        superseded,
                    });
                }
                other => return Err(TraceError::UnknownTag(other)),
            }
        }
        Ok(RunDump {
            seed,
            node_count,
            dim,
            events,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::ParameterVector;

    fn record(slot: u64) -> TraceRecord {
        TraceRecord {
            slot,
            iteration: slot,
            algorithm: "async_dfl".into(),
            global_loss: 0.125,
            bound_u: 1.5,
            u_eta: 4.1,
            grad_norm_sq: 1e-3,
            consensus_max: 1e-6,
            accuracy: f64::NAN,
            gamma_realized: 5,
            bandwidth_min: f64::NAN,
            scheduled_count: 4,
            peer_staleness_max: 0.0,
        }
    }

    #[test]
    fn csv_round_trip_preserves_pinned_columns() {
        let records = vec![record(0), record(1)];
        let text = write_csv(&records);
        assert!(text.starts_with(CSV_HEADER));
        let back = read_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].slot, 0);
        assert_eq!(back[0].global_loss, 0.125);
        assert!(back[0].accuracy.is_nan());
        assert_eq!(back[1].gamma_realized, 5);
    }

    #[test]
    fn dump_round_trip_is_bit_exact() {
        let dump = RunDump {
            seed: 42,
            node_count: 3,
            dim: 2,
            events: vec![
                DumpEvent::Schedule {
                    slot: 0,
                    gamma_w: 1,
                    gamma_t: 3,
                    bandwidth_min: 2.5e6,
                    scheduled_count: 3,
                },
                DumpEvent::Delivery {
                    receiver: 1,
                    arrival_slot: 4,
                    message: StampedParameter {
                        sender: 0,
                        stamp: 1,
                        payload: ParameterVector::new(vec![0.5, -0.25]).unwrap(),
                    },
                },
                DumpEvent::End {
                    enqueued: 1,
                    delivered: 1,
                    dropped: 0,
                    superseded: 0,
                },
            ],
        };
        let bytes = dump.encode();
        let again = RunDump::decode(&bytes).unwrap();
        assert_eq!(again, dump);
        assert_eq!(again.encode(), bytes);
    }
}
