// Scratch harness for calibrating acceptance-test configurations.

use dfl_core::analysis;
use dfl_core::config::{build_setup, RunConfig};
use dfl_core::engine;

fn run_cfg(text: &str, seed: u64) -> (dfl_core::engine::RunResult, dfl_core::config::ResolvedRun) {
    let mut cfg: RunConfig = toml::from_str(text).unwrap();
    cfg.seed = seed;
    let resolved = build_setup(&cfg).unwrap();
    let result = engine::run(&resolved.setup).unwrap();
    (result, resolved)
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "bound".into());
    match which.as_str() {
        "bound" => bound_experiment(),
        "trend_i" => trend_i(),
        "trend_gamma" => trend_gamma(),
        "wireless" => wireless_gamma(),
        "alloc" => alloc_trend(),
        other => eprintln!("unknown experiment {other}"),
    }
}

fn bound_experiment() {
    // Criterion 2/3 candidate config: scalar quadratics, curvature jitter
    // for δ > 0, common centers. Curvature per Γ keeps u(η) in (0, ~0.9].
    for (gamma, curvature) in [(0u64, 0.00793f64), (5, 0.000408)] {
        let mut worst_consensus = 0.0f64;
        let mut total_violations = 0usize;
        for seed in 0..20u64 {
            let text = format!(
                r#"
nodes = 5
budget = 5000
eta = 0.0
seed = 0
[channel]
gamma_slots = {gamma}
[task]
loss = "quadratic"
samples = 40
dim = 1
curvature = {curvature}
curvature_jitter = 0.33331
center_spread = 0.0
noise = 0.3
init_scale = 0.25
"#
            );
            let mut cfg: RunConfig = toml::from_str(&text).unwrap();
            cfg.seed = seed;
            cfg.eta = None;
            let resolved = build_setup(&cfg).unwrap();
            let result = engine::run(&resolved.setup).unwrap();
            let bt = analysis::bound_trace(
                &result.records,
                &resolved.constants,
                5,
                resolved.setup.eta,
                gamma,
            );
            total_violations += bt.violations;
            // Worst slack: how close F̄ comes to U anywhere on the run.
            let slack = bt
                .rows
                .iter()
                .skip(1)
                .map(|r| (r.bound - r.global_loss) / r.bound.abs().max(1e-300))
                .fold(f64::INFINITY, f64::min);
            let last = result.records.last().unwrap();
            worst_consensus = worst_consensus.max(last.consensus_max);
            if seed < 3 {
                println!(
                    "gamma={gamma} seed={seed}: eta={:.6} window=({:.6},{:.6}) delta={:.6} u={:.4} vacuous={} violations={} min_rel_slack={:.3e} final_loss={:.3e} consensus={:.3e}",
                    resolved.setup.eta,
                    resolved.eta_window.lower,
                    resolved.eta_window.upper,
                    resolved.constants.delta,
                    bt.u_eta,
                    bt.vacuous,
                    bt.violations,
                    slack,
                    last.global_loss,
                    last.consensus_max,
                );
            }
        }
        println!(
            "gamma={gamma}: total violations {total_violations}, worst consensus {worst_consensus:.3e}\n"
        );
    }
}

fn trend_i() {
    // Criterion 6: logistic task, fixed total dataset, loss non-increasing in I.
    for (eta, samples, budget) in [
        (20.0f64, 200usize, 3000u64),
        (30.0, 200, 3000),
        (50.0, 200, 3000),
        (40.0, 120, 3000),
    ] {
        let mut good = 0;
        for seed in 0..5u64 {
            let mut finals = Vec::new();
            for nodes in [5usize, 10, 15] {
                let text = format!(
                    r#"
nodes = {nodes}
budget = {budget}
eta = {eta}
seed = 0
[channel]
gamma_slots = 5
[task]
loss = "logistic"
samples = {samples}
dim = 5
separation = 1.2
init_scale = 1.0
"#
                );
                let (result, _) = run_cfg(&text, seed);
                finals.push(result.records.last().unwrap().global_loss);
            }
            let monotone = finals[0] >= finals[1] && finals[1] >= finals[2];
            good += monotone as u32;
            println!(
                "eta={eta} n={samples} seed={seed}: I=5 -> {:.6}, I=10 -> {:.6}, I=15 -> {:.6}  monotone={monotone}",
                finals[0], finals[1], finals[2],
            );
        }
        println!("eta={eta} n={samples} budget={budget}: {good}/5 monotone\n");
    }
}

fn trend_gamma() {
    // Criterion 7: loss non-decreasing in Γ.
    for (eta, samples, budget) in [
        (20.0f64, 200usize, 3000u64),
        (30.0, 200, 3000),
        (50.0, 200, 3000),
    ] {
        let mut good = 0;
        for seed in 0..5u64 {
            let mut finals = Vec::new();
            for gamma in [5u64, 10, 15] {
                let text = format!(
                    r#"
nodes = 5
budget = {budget}
eta = {eta}
seed = 0
[channel]
gamma_slots = {gamma}
[task]
loss = "logistic"
samples = {samples}
dim = 5
separation = 1.2
init_scale = 1.0
"#
                );
                let (result, _) = run_cfg(&text, seed);
                finals.push(result.records.last().unwrap().global_loss);
            }
            let monotone = finals[0] <= finals[1] && finals[1] <= finals[2];
            good += monotone as u32;
            println!(
                "eta={eta} seed={seed}: G=5 -> {:.6}, G=10 -> {:.6}, G=15 -> {:.6}  monotone={monotone}",
                finals[0], finals[1], finals[2],
            );
        }
        println!("eta={eta} n={samples}: {good}/5 monotone\n");
    }
}

fn wireless_gamma() {
    // Criterion 8: realized Γ at γ = 0 dB below both extremes.
    for nodes in [3usize] {
        for (t_latency, dim, w0) in [
            (5e-5f64, 64usize, 10u64),
            (5e-5, 64, 6),
            (7e-5, 64, 10),
            (5e-5, 48, 10),
        ] {
            let mut means = Vec::new();
            for gamma_db in [-15.0f64, 0.0, 15.0] {
                let mut total = 0.0;
                for seed in 0..10u64 {
                    let text = format!(
                        r#"
nodes = {nodes}
budget = 1500
eta = 0.05
seed = 0
observe_gamma = true
[channel]
mode = "wireless"
[wireless]
gamma_db = {gamma_db}
train_latency_s = {t_latency}
w0_slots = {w0}
[task]
loss = "quadratic"
samples = 40
dim = {dim}
curvature = 0.1
noise = 0.3
"#
                    );
                    let (result, _) = run_cfg(&text, seed);
                    total += result.mean_gamma_realized;
                }
                means.push(total / 10.0);
            }
            println!(
                "I={nodes} T={t_latency} dim={dim} w0={w0}: mean Γ at -15dB={:.3}, 0dB={:.3}, +15dB={:.3}   ushape={}",
                means[0],
                means[1],
                means[2],
                means[1] < means[0] && means[1] < means[2]
            );
        }
    }
}

fn alloc_trend() {
    // Criterion 9: optimal <= uniform <= random final loss.
    for (eta, t_latency, budget) in [
        (20.0f64, 5e-6f64, 2000u64),
        (12.0, 5e-6, 2000),
        (20.0, 1e-5, 2000),
    ] {
        let mut good = 0;
        for seed in 0..5u64 {
            let mut finals = Vec::new();
            let mut gammas = Vec::new();
            for alg in ["async_dfl", "uniform_bw", "random_bw"] {
                let text = format!(
                    r#"
algorithm = "{alg}"
nodes = 5
budget = {budget}
eta = {eta}
seed = 0
observe_gamma = true
[channel]
mode = "wireless"
[wireless]
gamma_db = 0.0
train_latency_s = {t_latency}
[task]
loss = "logistic"
samples = 200
dim = 5
separation = 1.2
"#
                );
                let (result, _) = run_cfg(&text, seed);
                finals.push(result.records.last().unwrap().global_loss);
                gammas.push(result.mean_gamma_realized);
            }
            let ordered = finals[0] <= finals[1] && finals[1] <= finals[2];
            good += ordered as u32;
            println!(
                "eta={eta} T={t_latency} seed={seed}: optimal={:.4} (Γ̄={:.1}) uniform={:.4} (Γ̄={:.1}) random={:.4} (Γ̄={:.1})  ordered={ordered}",
                finals[0], gammas[0], finals[1], gammas[1], finals[2], gammas[2],
            );
        }
        println!("eta={eta} T={t_latency}: {good}/5 ordered\n");
    }
}
