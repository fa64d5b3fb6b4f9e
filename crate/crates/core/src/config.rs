//! Structured run/suite configuration: a single documented TOML format with
//! all wireless defaults kept in one place.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis;
use crate::engine::{
    Algorithm, AllocationPolicy, Channel, SimSetup, StalenessPolicy, WirelessRuntime,
};
use crate::learning::{
    self, dataset, LocalTask, LossKind, ParameterVector, PartitionMode, ProbeSpec,
    Regularizer, SmoothnessConstants,
};
use crate::wireless::{self, CellLayout, RadioEnvironment};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("building tasks failed: {0}")]
    Tasks(String),
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

/// One simulation run. Unknown keys are rejected so typos surface as errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    pub nodes: usize,
    pub budget: u64,
    #[serde(default)]
    pub seed: u64,
    /// Learning rate. When omitted, synthetic convex tasks default to the
    /// midpoint of the admissible window from estimated constants, and
    /// MLP tasks to 0.016.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Staleness bound the run is checked against. Defaults to the ideal
    /// channel's Γ, or 64 for wireless runs.
    #[serde(default)]
    pub gamma_max: Option<u64>,
    /// Record realized staleness instead of aborting on a violation.
    #[serde(default)]
    pub observe_gamma: bool,
    /// Enforce that η lies inside the admissible window.
    #[serde(default)]
    pub strict_eta: bool,
    #[serde(default)]
    pub stop_epsilon: f64,
    #[serde(default = "default_one_u64")]
    pub local_steps: u64,
    #[serde(default = "default_partial_fraction")]
    pub partial_fraction: f64,
    #[serde(default = "default_semi_async_arrivals")]
    pub semi_async_arrivals: usize,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub wireless: WirelessConfig,
    #[serde(default)]
    pub task: TaskConfig,
    /// Optional override of the estimated smoothness constants.
    #[serde(default)]
    pub constants: Option<ConstantsConfig>,
}

fn default_algorithm() -> String {
    "async_dfl".into()
}

fn default_one_u64() -> u64 {
    1
}

fn default_partial_fraction() -> f64 {
    0.5
}

fn default_semi_async_arrivals() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default = "default_channel_mode")]
    pub mode: String,
    /// Controlled staleness for the ideal channel (0 = synchronous).
    #[serde(default = "default_gamma_slots")]
    pub gamma_slots: u64,
}

fn default_channel_mode() -> String {
    "ideal".into()
}

fn default_gamma_slots() -> u64 {
    5
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            mode: default_channel_mode(),
            gamma_slots: default_gamma_slots(),
        }
    }
}

/// Wireless parameters; defaults mirror the reference table (cell radius
/// 500 m, path loss exponent 4, bandwidth 10 MHz, transmit power 30 dBm,
/// noise density −174 dBm/Hz, 16 quantization bits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WirelessConfig {
    #[serde(default = "default_cell_radius")]
    pub cell_radius_m: f64,
    #[serde(default = "default_path_loss_exponent")]
    pub path_loss_exponent: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    #[serde(default = "default_tx_power_dbm")]
    pub tx_power_dbm: f64,
    #[serde(default = "default_noise_density")]
    pub noise_dbm_per_hz: f64,
    #[serde(default = "default_quant_bits")]
    pub quant_bits_per_param: u32,
    /// SINR threshold in dB; converted as `γ = 10^(dB/10)`.
    #[serde(default)]
    pub gamma_db: f64,
    #[serde(default = "default_one_u64")]
    pub w0_slots: u64,
    /// Per-iteration training latency T in seconds (one slot).
    #[serde(default = "default_train_latency")]
    pub train_latency_s: f64,
    /// Sparsity ratio q (1 = dense).
    #[serde(default = "default_sparsity")]
    pub sparsity: f64,
    #[serde(default)]
    pub layout: CellLayout,
}

fn default_cell_radius() -> f64 {
    500.0
}

fn default_path_loss_exponent() -> f64 {
    4.0
}

fn default_bandwidth() -> f64 {
    1e7
}

fn default_tx_power_dbm() -> f64 {
    30.0
}

fn default_noise_density() -> f64 {
    -174.0
}

fn default_quant_bits() -> u32 {
    16
}

fn default_train_latency() -> f64 {
    1.0
}

fn default_sparsity() -> f64 {
    1.0
}

impl Default for WirelessConfig {
    fn default() -> Self {
        Self {
            cell_radius_m: default_cell_radius(),
            path_loss_exponent: default_path_loss_exponent(),
            bandwidth_hz: default_bandwidth(),
            tx_power_dbm: default_tx_power_dbm(),
            noise_dbm_per_hz: default_noise_density(),
            quant_bits_per_param: default_quant_bits(),
            gamma_db: 0.0,
            w0_slots: 1,
            train_latency_s: default_train_latency(),
            sparsity: default_sparsity(),
            layout: CellLayout::Single,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    #[serde(default = "default_loss")]
    pub loss: String,
    #[serde(default = "default_partition")]
    pub partition: String,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Quadratic curvature scale (the gradient Lipschitz constant).
    #[serde(default = "default_curvature")]
    pub curvature: f64,
    /// Relative per-node curvature jitter in [0, 1).
    #[serde(default)]
    pub curvature_jitter: f64,
    /// Per-node quadratic center offsets (task heterogeneity).
    #[serde(default)]
    pub center_spread: f64,
    /// Sample spread around each quadratic center.
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Class separation for synthetic logistic blobs.
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_regularizer")]
    pub regularizer: String,
    #[serde(default = "default_bound")]
    pub bound: f64,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    /// Give every node the same initial parameter.
    #[serde(default)]
    pub equal_init: bool,
    /// External data instead of synthesis: CSV with feature columns and a
    /// trailing integer label column.
    #[serde(default)]
    pub data_csv: Option<String>,
    /// External data instead of synthesis: IDX image/label pair.
    #[serde(default)]
    pub idx_images: Option<String>,
    #[serde(default)]
    pub idx_labels: Option<String>,
}

fn default_loss() -> String {
    "quadratic".into()
}

fn default_partition() -> String {
    "uniform_iid".into()
}

fn default_samples() -> usize {
    128
}

fn default_dim() -> usize {
    2
}

fn default_curvature() -> f64 {
    0.1
}

fn default_noise() -> f64 {
    0.25
}

fn default_separation() -> f64 {
    1.5
}

fn default_hidden() -> usize {
    32
}

fn default_classes() -> usize {
    2
}

fn default_regularizer() -> String {
    "l2".into()
}

fn default_bound() -> f64 {
    1e9
}

fn default_init_scale() -> f64 {
    1.0
}

impl Default for TaskConfig {
    fn default() -> Self {
        toml::from_str("").expect("all task fields have defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub delta: f64,
}

/// A parsed config file: either one run or an experiment suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigFile {
    Suite(SuiteConfig),
    Run(RunConfig),
}

/// Experiment suite: a base run plus sweep axes; every sweep point maps to
/// exactly one run config and replications differ only in seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub name: String,
    #[serde(default = "default_replications")]
    pub replications: u64,
    pub base: RunConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_replications() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub nodes: Vec<usize>,
    #[serde(default)]
    pub gamma_slots: Vec<u64>,
    #[serde(default)]
    pub gamma_db: Vec<f64>,
    #[serde(default)]
    pub algorithms: Vec<String>,
}

pub fn load_config(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ConfigFile, ConfigError> {
    // Try the suite shape first for a precise error message, then the run.
    if text.contains("[base]") || text.contains("[sweep]") {
        let suite: SuiteConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        validate_run(&suite.base)?;
        return Ok(ConfigFile::Suite(suite));
    }
    let run: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    validate_run(&run)?;
    Ok(ConfigFile::Run(run))
}

pub fn dump_run(config: &RunConfig) -> String {
    toml::to_string(config).expect("run config serializes")
}

pub fn parse_algorithm(name: &str) -> Result<Algorithm, ConfigError> {
    Ok(match name {
        "async_dfl" => Algorithm::AsyncDfl,
        "fedavg" => Algorithm::FedAvg,
        "fedavg_partial" => Algorithm::FedAvgPartial,
        "fed_semi_async" => Algorithm::FedSemiAsync,
        "uniform_bw" => Algorithm::UniformBw,
        "random_bw" => Algorithm::RandomBw,
        other => {
            return Err(invalid(
                "algorithm",
                format!("unknown algorithm '{other}'"),
            ))
        }
    })
}

pub fn validate_run(config: &RunConfig) -> Result<(), ConfigError> {
    let algorithm = parse_algorithm(&config.algorithm)?;
    if algorithm.is_decentralized() && config.nodes < 2 {
        return Err(invalid(
            "nodes",
            format!(
                "decentralized algorithms need at least 2 nodes, got {}",
                config.nodes
            ),
        ));
    }
    if config.nodes == 0 {
        return Err(invalid("nodes", "at least one node is required"));
    }
    if config.budget == 0 {
        return Err(invalid("budget", "iteration budget must be positive"));
    }
    if let Some(eta) = config.eta {
        if eta <= 0.0 {
            return Err(invalid("eta", "learning rate must be positive"));
        }
    }
    match config.channel.mode.as_str() {
        "ideal" | "wireless" => {}
        other => {
            return Err(invalid(
                "channel.mode",
                format!("expected 'ideal' or 'wireless', got '{other}'"),
            ))
        }
    }
    if matches!(algorithm, Algorithm::UniformBw | Algorithm::RandomBw)
        && config.channel.mode != "wireless"
    {
        return Err(invalid(
            "channel.mode",
            "bandwidth-allocation variants require the wireless channel",
        ));
    }
    if config.wireless.path_loss_exponent <= 2.0 {
        return Err(invalid(
            "wireless.path_loss_exponent",
            "path loss exponent must exceed 2",
        ));
    }
    if config.task.bound <= 0.0 {
        return Err(invalid("task.bound", "constraint bound must be positive"));
    }
    if !(config.task.curvature > 0.0) {
        return Err(invalid("task.curvature", "curvature must be positive"));
    }
    if !(0.0..1.0).contains(&config.task.curvature_jitter) {
        return Err(invalid(
            "task.curvature_jitter",
            "jitter must lie in [0, 1)",
        ));
    }
    match config.task.loss.as_str() {
        "quadratic" | "logistic" | "mlp" => {}
        other => {
            return Err(invalid(
                "task.loss",
                format!("expected quadratic|logistic|mlp, got '{other}'"),
            ))
        }
    }
    match config.task.partition.as_str() {
        "uniform_iid" | "label_sharded" => {}
        other => {
            return Err(invalid(
                "task.partition",
                format!("expected uniform_iid|label_sharded, got '{other}'"),
            ))
        }
    }
    match config.task.regularizer.as_str() {
        "l1" | "l2" => {}
        other => {
            return Err(invalid(
                "task.regularizer",
                format!("expected l1|l2, got '{other}'"),
            ))
        }
    }
    Ok(())
}

/// Everything `build_setup` resolved, including derived quantities worth
/// reporting.
pub struct ResolvedRun {
    pub setup: SimSetup,
    pub constants: SmoothnessConstants,
    /// Constants are heuristic for non-quadratic tasks.
    pub constants_heuristic: bool,
    pub eta_window: analysis::EtaWindow,
}

/// Builds the runtime setup from a validated config: synthesizes or loads
/// data, resolves the learning rate, estimates constants, and assembles the
/// channel model.
pub fn build_setup(config: &RunConfig) -> Result<ResolvedRun, ConfigError> {
    validate_run(config)?;
    let algorithm = parse_algorithm(&config.algorithm)?;
    let tasks = build_tasks(config)?;
    let model_dim = tasks[0].model_dim();
    let initial = build_initial(config, &tasks);

    let quadratic = tasks
        .iter()
        .all(|t| matches!(t.loss, LossKind::Quadratic { .. }));
    let probe = ProbeSpec {
        seed: config.seed ^ 0x9e3779b97f4a7c15,
        ..ProbeSpec::default()
    };
    let constants = learning::estimate_constants(&tasks, &probe)
        .map_err(|e| ConfigError::Tasks(e.to_string()))?;
    let window = analysis::eta_window(&constants, config.nodes);

    let eta = match config.eta {
        Some(eta) => eta,
        None => match config.task.loss.as_str() {
            "mlp" => 0.016,
            _ => window.midpoint().unwrap_or_else(|| {
                log::warn!(
                    "admissible learning-rate window is empty; falling back to η = 0.016"
                );
                0.016
            }),
        },
    };
    if config.strict_eta && !window.contains(eta) {
        return Err(invalid(
            "eta",
            format!(
                "strict mode: η = {eta} outside the admissible window ({}, {})",
                window.lower, window.upper
            ),
        ));
    }

    let channel = match config.channel.mode.as_str() {
        "ideal" => Channel::Ideal {
            gamma: config.channel.gamma_slots,
        },
        "wireless" => {
            let w = &config.wireless;
            let positions = wireless::place_nodes(
                config.nodes,
                w.cell_radius_m,
                config.seed.wrapping_add(2),
            )
            .map_err(|e| ConfigError::Tasks(e.to_string()))?;
            let env = RadioEnvironment::new(
                positions,
                w.cell_radius_m,
                w.path_loss_exponent,
                wireless::dbm_to_watts(w.tx_power_dbm),
                wireless::dbm_to_watts(w.noise_dbm_per_hz) * w.bandwidth_hz,
                w.layout,
                config.seed.wrapping_add(3),
            )
            .map_err(|e| ConfigError::Tasks(e.to_string()))?;
            Channel::Wireless(Box::new(WirelessRuntime {
                env,
                gamma_linear: wireless::db_to_linear(w.gamma_db),
                total_bandwidth: w.bandwidth_hz,
                sparsity: w.sparsity,
                bits: model_dim as f64 * w.quant_bits_per_param as f64,
                train_latency: w.train_latency_s,
                w0_slots: w.w0_slots,
            }))
        }
        _ => unreachable!("validated above"),
    };

    let gamma_max = config.gamma_max.unwrap_or(match &channel {
        Channel::Ideal { gamma } => *gamma,
        _ => 64,
    });
    let u = analysis::u_of_eta(&constants, config.nodes, eta, gamma_max);
    log::debug!(
        "resolved η = {eta}, window = ({}, {}), u(η) = {u}",
        window.lower,
        window.upper
    );

    let setup = SimSetup {
        seed: config.seed,
        budget: config.budget,
        eta,
        gamma_max,
        staleness_policy: if config.observe_gamma {
            StalenessPolicy::Observe
        } else {
            StalenessPolicy::Strict
        },
        stop_epsilon: config.stop_epsilon,
        algorithm,
        channel,
        tasks,
        initial,
        constants: Some(constants),
        allocation: match algorithm {
            Algorithm::UniformBw => AllocationPolicy::Uniform,
            Algorithm::RandomBw => AllocationPolicy::Random,
            _ => AllocationPolicy::Optimal,
        },
        partial_fraction: config.partial_fraction,
        semi_async_arrivals: config.semi_async_arrivals,
        local_steps: config.local_steps,
    };
    Ok(ResolvedRun {
        setup,
        constants,
        constants_heuristic: !quadratic,
        eta_window: window,
    })
}

fn regularizer(config: &TaskConfig) -> Regularizer {
    match config.regularizer.as_str() {
        "l1" => Regularizer::L1 {
            bound: config.bound,
        },
        _ => Regularizer::L2 {
            bound: config.bound,
        },
    }
}

fn build_tasks(config: &RunConfig) -> Result<Vec<LocalTask>, ConfigError> {
    let n = config.nodes;
    let task = &config.task;
    let mut rng = crate::engine::rng_stream(config.seed, 0);
    let reg = regularizer(task);

    // External data takes priority over synthesis.
    let external: Option<Vec<dataset::Sample>> = if let Some(csv) = &task.data_csv {
        Some(
            dataset::read_csv(Path::new(csv))
                .map_err(|e| ConfigError::Tasks(e.to_string()))?,
        )
    } else if let (Some(images), Some(labels)) = (&task.idx_images, &task.idx_labels) {
        Some(
            dataset::read_idx_pair(Path::new(images), Path::new(labels))
                .map_err(|e| ConfigError::Tasks(e.to_string()))?,
        )
    } else {
        None
    };

    let partition_mode = match task.partition.as_str() {
        "label_sharded" => PartitionMode::LabelSharded,
        _ => PartitionMode::UniformIid,
    };

    let loss_for = |node: usize| -> LossKind {
        match task.loss.as_str() {
            "logistic" => LossKind::Logistic,
            "mlp" => LossKind::CrossEntropyMlp {
                hidden: task.hidden,
                classes: task.classes,
            },
            _ => {
                // Deterministic per-node curvature jitter: evenly spread in
                // [-jitter, +jitter] around the configured curvature.
                let spread = if n > 1 {
                    2.0 * node as f64 / (n - 1) as f64 - 1.0
                } else {
                    0.0
                };
                LossKind::Quadratic {
                    curvature: task.curvature * (1.0 + task.curvature_jitter * spread),
                }
            }
        }
    };

    let shards: Vec<Vec<dataset::Sample>> = if let Some(all) = external {
        dataset::partition(&mut rng, &all, n, partition_mode)
    } else {
        match task.loss.as_str() {
            "quadratic" => (0..n)
                .map(|node| {
                    let spread = if n > 1 {
                        2.0 * node as f64 / (n - 1) as f64 - 1.0
                    } else {
                        0.0
                    };
                    let center: Vec<f64> =
                        (0..task.dim).map(|_| task.center_spread * spread).collect();
                    dataset::synth_quadratic(
                        &mut rng,
                        (task.samples / n).max(1),
                        task.dim,
                        &center,
                        task.noise,
                    )
                })
                .collect(),
            _ => {
                let all = dataset::synth_logistic(&mut rng, task.samples, task.dim, task.separation);
                dataset::partition(&mut rng, &all, n, partition_mode)
            }
        }
    };

    let total: usize = shards.iter().map(Vec::len).sum();
    if shards.iter().any(Vec::is_empty) {
        return Err(ConfigError::Tasks(format!(
            "{total} samples cannot cover {n} nodes; raise task.samples"
        )));
    }
    // α_i = |D_i| / |D| so fractions sum to one exactly up to rounding.
    let mut tasks = Vec::with_capacity(n);
    for (node, shard) in shards.into_iter().enumerate() {
        let fraction = shard.len() as f64 / total as f64;
        tasks.push(
            LocalTask::new(shard, fraction, reg, loss_for(node))
                .map_err(|e| ConfigError::Tasks(e.to_string()))?,
        );
    }
    // Absorb rounding drift into the last node so Σα = 1 within 1e-12.
    let drift: f64 = 1.0 - tasks.iter().map(|t| t.fraction).sum::<f64>();
    if let Some(last) = tasks.last_mut() {
        last.fraction += drift;
    }
    Ok(tasks)
}

fn build_initial(config: &RunConfig, tasks: &[LocalTask]) -> Vec<ParameterVector> {
    let mut rng = crate::engine::rng_stream(config.seed, 1);
    let dim = tasks[0].model_dim();
    let scale = config.task.init_scale;
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> ParameterVector {
        use rand::Rng;
        ParameterVector::new((0..dim).map(|_| rng.random_range(-scale..scale)).collect())
            .expect("finite init")
    };
    if config.task.equal_init {
        let shared = draw(&mut rng);
        vec![shared; tasks.len()]
    } else {
        (0..tasks.len()).map(|_| draw(&mut rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_the_wireless_table() {
        let cfg: RunConfig = toml::from_str(
            "nodes = 5\nbudget = 100\n",
        )
        .unwrap();
        assert_eq!(cfg.wireless.cell_radius_m, 500.0);
        assert_eq!(cfg.wireless.path_loss_exponent, 4.0);
        assert_eq!(cfg.wireless.bandwidth_hz, 1e7);
        assert_eq!(cfg.wireless.tx_power_dbm, 30.0);
        assert_eq!(cfg.wireless.noise_dbm_per_hz, -174.0);
        assert_eq!(cfg.wireless.quant_bits_per_param, 16);
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        let err = parse_config("nodes = 5\nbudget = 10\nbogus_key = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    #[test]
    fn single_node_async_dfl_rejected() {
        let err = parse_config("nodes = 1\nbudget = 10\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { field, .. } if field == "nodes"));
    }

    #[test]
    fn gamma_db_converts_to_linear() {
        assert!((wireless::db_to_linear(0.0) - 1.0).abs() < 1e-15);
        assert!((wireless::db_to_linear(-15.0) - 0.031622776601683794).abs() < 1e-15);
        assert!((wireless::db_to_linear(15.0) - 31.622776601683793).abs() < 1e-12);
    }

    #[test]
    fn run_config_round_trips_through_dump() {
        let cfg: RunConfig = toml::from_str(
            "nodes = 5\nbudget = 200\nseed = 7\neta = 0.05\n[task]\nloss = \"logistic\"\nsamples = 64\n",
        )
        .unwrap();
        let dumped = dump_run(&cfg);
        let back = match parse_config(&dumped).unwrap() {
            ConfigFile::Run(r) => r,
            _ => panic!("expected run config"),
        };
        assert_eq!(cfg, back);
    }

    #[test]
    fn build_setup_produces_consistent_tasks() {
        let cfg: RunConfig = toml::from_str(
            "nodes = 4\nbudget = 50\nseed = 3\neta = 0.05\n[task]\nsamples = 40\ncenter_spread = 0.1\n",
        )
        .unwrap();
        let resolved = build_setup(&cfg).unwrap();
        assert_eq!(resolved.setup.tasks.len(), 4);
        let total: f64 = resolved.setup.tasks.iter().map(|t| t.fraction).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(!resolved.constants_heuristic);
        assert!(resolved.constants.l1 > 0.0);
    }
}
