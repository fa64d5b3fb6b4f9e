//! Experiment suites: sweep expansion, per-run artifact emission, and tidy
//! plot-data export.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{build_setup, ConfigError, RunConfig, SuiteConfig};
use crate::engine::{self, EngineError};
use crate::trace::{self, TraceError, TraceRecord};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("no trace files given")]
    EmptyTraceList,
    #[error("trace schema mismatch in {0}")]
    SchemaMismatch(String),
}

fn io_err(path: &Path, e: std::io::Error) -> ExperimentError {
    ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// One expanded sweep point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    pub replication: u64,
    pub seed: u64,
}

/// Per-run outcome recorded in the suite summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub label: String,
    pub replication: u64,
    pub seed: u64,
    pub ok: bool,
    pub error: Option<String>,
    pub final_loss: f64,
    pub final_accuracy: f64,
    pub mean_gamma_realized: f64,
    pub realized_staleness_max: u64,
    pub trace_path: String,
}

/// Suite-level summary serialized as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub name: String,
    pub runs: Vec<RunOutcome>,
    pub points: Vec<PointSummary>,
    pub all_ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointSummary {
    pub label: String,
    pub final_loss_mean: f64,
    pub final_loss_min: f64,
    pub final_loss_max: f64,
    pub final_accuracy_mean: f64,
}

/// Expands the sweep axes into concrete run configs; empty axes keep the
/// base value.
pub fn expand_suite(suite: &SuiteConfig) -> Vec<(String, RunConfig)> {
    let nodes = non_empty(&suite.sweep.nodes, suite.base.nodes);
    let gammas = non_empty(&suite.sweep.gamma_slots, suite.base.channel.gamma_slots);
    let gamma_dbs = non_empty(&suite.sweep.gamma_db, suite.base.wireless.gamma_db);
    let algorithms = non_empty(&suite.sweep.algorithms, suite.base.algorithm.clone());

    let mut points = Vec::new();
    for alg in &algorithms {
        for &n in &nodes {
            for &g in &gammas {
                for &gdb in &gamma_dbs {
                    let mut cfg = suite.base.clone();
                    cfg.algorithm = alg.clone();
                    cfg.nodes = n;
                    cfg.channel.gamma_slots = g;
                    cfg.wireless.gamma_db = gdb;
                    let label = format!(
                        "{alg}_I{n}_G{g}_gdb{}",
                        format_db(gdb)
                    );
                    points.push((label, cfg));
                }
            }
        }
    }
    points
}

fn format_db(db: f64) -> String {
    if db < 0.0 {
        format!("m{}", -db)
    } else {
        format!("{db}")
    }
}

fn non_empty<T: Clone>(values: &[T], fallback: T) -> Vec<T> {
    if values.is_empty() {
        vec![fallback]
    } else {
        values.to_vec()
    }
}

/// Runs every sweep point × replication, writing one trace CSV and one dump
/// per run plus a summary JSON. Individual run failures are recorded and the
/// suite continues.
pub fn run_suite(suite: &SuiteConfig, out_dir: &Path) -> Result<SuiteSummary, ExperimentError> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut outcomes = Vec::new();
    for (label, cfg) in expand_suite(suite) {
        for rep in 0..suite.replications {
            let mut run_cfg = cfg.clone();
            run_cfg.seed = cfg.seed.wrapping_add(rep);
            let trace_path = out_dir.join(format!("{label}_rep{rep}.csv"));
            let dump_path = out_dir.join(format!("{label}_rep{rep}.dump"));
            let outcome = match execute(&run_cfg, &trace_path, &dump_path) {
                Ok((final_loss, final_accuracy, mean_gamma, staleness)) => RunOutcome {
                    label: label.clone(),
                    replication: rep,
                    seed: run_cfg.seed,
                    ok: true,
                    error: None,
                    final_loss,
                    final_accuracy,
                    mean_gamma_realized: mean_gamma,
                    realized_staleness_max: staleness,
                    trace_path: trace_path.display().to_string(),
                },
                Err(e) => RunOutcome {
                    label: label.clone(),
                    replication: rep,
                    seed: run_cfg.seed,
                    ok: false,
                    error: Some(e.to_string()),
                    final_loss: f64::NAN,
                    final_accuracy: f64::NAN,
                    mean_gamma_realized: f64::NAN,
                    realized_staleness_max: 0,
                    trace_path: trace_path.display().to_string(),
                },
            };
            outcomes.push(outcome);
        }
    }

    let mut points: BTreeMap<String, Vec<&RunOutcome>> = BTreeMap::new();
    for run in outcomes.iter().filter(|r| r.ok) {
        points.entry(run.label.clone()).or_default().push(run);
    }
    let point_summaries = points
        .into_iter()
        .map(|(label, runs)| {
            let losses: Vec<f64> = runs.iter().map(|r| r.final_loss).collect();
            let accs: Vec<f64> = runs.iter().map(|r| r.final_accuracy).collect();
            PointSummary {
                label,
                final_loss_mean: mean(&losses),
                final_loss_min: losses.iter().cloned().fold(f64::INFINITY, f64::min),
                final_loss_max: losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                final_accuracy_mean: mean(&accs),
            }
        })
        .collect();

    let summary = SuiteSummary {
        name: suite.name.clone(),
        all_ok: outcomes.iter().all(|r| r.ok),
        runs: outcomes,
        points: point_summaries,
    };
    let summary_path = out_dir.join(format!("{}_summary.json", suite.name));
    fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )
    .map_err(|e| io_err(&summary_path, e))?;
    Ok(summary)
}

fn execute(
    cfg: &RunConfig,
    trace_path: &Path,
    dump_path: &Path,
) -> Result<(f64, f64, f64, u64), ExperimentError> {
    let resolved = build_setup(cfg)?;
    let result = engine::run(&resolved.setup)?;
    fs::write(trace_path, trace::write_csv(&result.records))
        .map_err(|e| io_err(trace_path, e))?;
    fs::write(dump_path, result.dump.encode()).map_err(|e| io_err(dump_path, e))?;
    let last = result.records.last();
    Ok((
        last.map(|r| r.global_loss).unwrap_or(f64::NAN),
        last.map(|r| r.accuracy).unwrap_or(f64::NAN),
        result.mean_gamma_realized,
        result.realized_staleness_max,
    ))
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Which metric column to export against which x column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FigureSpec {
    pub metric: String,
    #[serde(default = "default_x")]
    pub x: String,
}

fn default_x() -> String {
    "iteration".into()
}

fn metric_value(record: &TraceRecord, metric: &str) -> Option<f64> {
    Some(match metric {
        "global_loss" => record.global_loss,
        "bound_U" => record.bound_u,
        "u_eta" => record.u_eta,
        "grad_norm_sq" => record.grad_norm_sq,
        "consensus_max" => record.consensus_max,
        "accuracy" => record.accuracy,
        "gamma_realized" => record.gamma_realized as f64,
        "bandwidth_min" => record.bandwidth_min,
        "scheduled_count" => record.scheduled_count as f64,
        _ => return None,
    })
}

/// Reshapes trace CSVs into a tidy long-format table
/// `series,x,y,y_min,y_max`: one series per sweep point, replications
/// aggregated into a mean line with a min/max envelope.
pub fn emit_plotdata(paths: &[PathBuf], spec: &FigureSpec) -> Result<String, ExperimentError> {
    if paths.is_empty() {
        return Err(ExperimentError::EmptyTraceList);
    }
    // series name = file stem with any _repN suffix stripped
    let mut groups: BTreeMap<String, Vec<Vec<TraceRecord>>> = BTreeMap::new();
    for path in paths {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let records = trace::read_csv(&text)
            .map_err(|_| ExperimentError::SchemaMismatch(path.display().to_string()))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| path.display().to_string());
        let series = match stem.rfind("_rep") {
            Some(idx) if stem[idx + 4..].chars().all(|c| c.is_ascii_digit()) => {
                stem[..idx].to_string()
            }
            _ => stem,
        };
        groups.entry(series).or_default().push(records);
    }

    let mut out = String::from("series,x,y,y_min,y_max\n");
    for (series, replications) in groups {
        // x -> values across replications
        let mut by_x: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for records in &replications {
            for r in records {
                let x = match spec.x.as_str() {
                    "slot" => r.slot,
                    _ => r.iteration,
                };
                if let Some(y) = metric_value(r, &spec.metric) {
                    by_x.entry(x).or_default().push(y);
                }
            }
        }
        if by_x.is_empty() {
            return Err(ExperimentError::SchemaMismatch(format!(
                "metric '{}' not present in series '{series}'",
                spec.metric
            )));
        }
        for (x, ys) in by_x {
            let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            out.push_str(&format!(
                "{series},{x},{},{},{}\n",
                mean(&ys),
                lo,
                hi
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_suite(nodes: Vec<usize>, reps: u64) -> SuiteConfig {
        let base: RunConfig = toml::from_str(
            "nodes = 3\nbudget = 20\nseed = 11\neta = 0.05\n[task]\nsamples = 24\n[channel]\ngamma_slots = 2\n",
        )
        .unwrap();
        SuiteConfig {
            name: "tiny".into(),
            replications: reps,
            base,
            sweep: crate::config::SweepConfig {
                nodes,
                ..Default::default()
            },
        }
    }

    #[test]
    fn sweep_expansion_counts() {
        let suite = tiny_suite(vec![3, 5], 2);
        let points = expand_suite(&suite);
        assert_eq!(points.len(), 2);
        assert!(points[0].0.contains("I3"));
        assert!(points[1].0.contains("I5"));
    }

    #[test]
    fn suite_runs_and_summarizes() {
        let dir = tempfile::tempdir().unwrap();
        let suite = tiny_suite(vec![3], 2);
        let summary = run_suite(&suite, dir.path()).unwrap();
        assert!(summary.all_ok, "{:?}", summary.runs);
        assert_eq!(summary.runs.len(), 2);
        assert_eq!(summary.points.len(), 1);
        assert!(dir.path().join("tiny_summary.json").exists());
        // identical suite reruns produce identical artifacts
        let dir2 = tempfile::tempdir().unwrap();
        let summary2 = run_suite(&suite, dir2.path()).unwrap();
        for (a, b) in summary.runs.iter().zip(&summary2.runs) {
            let ta = fs::read_to_string(&a.trace_path).unwrap();
            let tb = fs::read_to_string(&b.trace_path).unwrap();
            assert_eq!(ta, tb);
        }
    }

    #[test]
    fn plotdata_envelopes_replications() {
        let dir = tempfile::tempdir().unwrap();
        let suite = tiny_suite(vec![3], 3);
        let summary = run_suite(&suite, dir.path()).unwrap();
        let paths: Vec<PathBuf> = summary
            .runs
            .iter()
            .map(|r| PathBuf::from(&r.trace_path))
            .collect();
        let csv = emit_plotdata(
            &paths,
            &FigureSpec {
                metric: "global_loss".into(),
                x: "iteration".into(),
            },
        )
        .unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "series,x,y,y_min,y_max");
        let first = lines.next().unwrap();
        let fields: Vec<&str> = first.split(',').collect();
        assert_eq!(fields.len(), 5);
        let y: f64 = fields[2].parse().unwrap();
        let lo: f64 = fields[3].parse().unwrap();
        let hi: f64 = fields[4].parse().unwrap();
        assert!(lo <= y && y <= hi);
    }

    #[test]
    fn plotdata_rejects_empty_input() {
        let spec = FigureSpec {
            metric: "global_loss".into(),
            x: "iteration".into(),
        };
        assert!(matches!(
            emit_plotdata(&[], &spec),
            Err(ExperimentError::EmptyTraceList)
        ));
    }
}
