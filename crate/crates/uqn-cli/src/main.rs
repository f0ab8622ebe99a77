//! Experiment runner: loads a scenario config, runs the selected policies
//! (or the trade-off sweep), and writes per-slot CSVs plus a summary JSON.

use clap::Parser;
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;
use uqn::config::{ConfigError, WorldConfig};
use uqn::output::{write_slot_csv, write_summary_json, format_sig, CSV_HEADER};
use uqn::runner::{pareto_sweep, run_experiment, PolicyKind, PolicySpec, RunError};

#[derive(Parser, Debug)]
#[command(
    name = "uqn",
    about = "QoE-driven multi-UAV network simulator and optimizer"
)]
struct Cli {
    /// Scenario config file (flat key = value TOML); defaults apply if omitted
    #[arg(long)]
    config: Option<PathBuf>,

    /// Policy to run, or "all"
    #[arg(long, default_value = "all")]
    algorithm: String,

    /// Number of paired seeds per policy
    #[arg(long, default_value_t = 10)]
    runs: usize,

    /// Base RNG seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Comma-separated latency-weight values; with --sweep-rho2 runs the
    /// trade-off sweep instead of the policy experiment
    #[arg(long)]
    sweep_rho1: Option<String>,

    /// Comma-separated power-weight values
    #[arg(long)]
    sweep_rho2: Option<String>,

    /// Override the number of UAVs
    #[arg(long)]
    uavs: Option<usize>,

    /// Override the number of subscribers
    #[arg(long)]
    subscribers: Option<usize>,

    /// Also write conic-program debug dumps for the first slot
    #[arg(long, default_value_t = false)]
    dump_conic: bool,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("UQN_LOG", "error"),
    )
    .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(AppError::Run(RunError::Placement(msg))) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(AppError::Run(e)) => {
            eprintln!("solver error: {e}");
            ExitCode::from(EXIT_SOLVER)
        }
        Err(AppError::Io(e)) => {
            eprintln!("output error: {e}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}

enum AppError {
    Config(String),
    Run(RunError),
    Io(String),
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<RunError> for AppError {
    fn from(e: RunError) -> Self {
        AppError::Run(e)
    }
}

impl From<uqn::output::WriteError> for AppError {
    fn from(e: uqn::output::WriteError) -> Self {
        AppError::Io(e.to_string())
    }
}

fn parse_float_list(name: &str, text: &str) -> Result<Vec<f64>, AppError> {
    let values: Result<Vec<f64>, _> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect();
    match values {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(AppError::Config(format!(
            "{name} must be a nonempty comma-separated list of numbers, got \"{text}\""
        ))),
    }
}

fn run(cli: &Cli) -> Result<(), AppError> {
    let mut cfg = match &cli.config {
        Some(path) => WorldConfig::from_file(path)?,
        None => WorldConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.rng_seed = seed;
    }
    if let Some(n) = cli.uavs {
        cfg.n_uavs = n;
    }
    if let Some(m) = cli.subscribers {
        cfg.n_subscribers = m;
    }
    cfg.validate()?;
    if cli.runs == 0 {
        return Err(AppError::Config("--runs must be >= 1".into()));
    }

    let kinds: Vec<PolicyKind> = if cli.algorithm.eq_ignore_ascii_case("all") {
        PolicyKind::all().to_vec()
    } else {
        match PolicyKind::parse(&cli.algorithm) {
            Some(k) => vec![k],
            None => {
                return Err(AppError::Config(format!(
                    "unknown algorithm \"{}\" (expected emuo|nnas|sude|sumtp|cutr|cumtp|all)",
                    cli.algorithm
                )))
            }
        }
    };

    std::fs::create_dir_all(&cli.out)
        .map_err(|e| AppError::Io(format!("cannot create {}: {e}", cli.out.display())))?;

    let echo = serde_json::Value::Object(cfg.echo().into_iter().collect());
    let mut summary = json!({ "config": echo });

    let sweeping = cli.sweep_rho1.is_some() || cli.sweep_rho2.is_some();
    if sweeping {
        let rho1 = match &cli.sweep_rho1 {
            Some(text) => parse_float_list("--sweep-rho1", text)?,
            None => vec![cfg.rho1],
        };
        let rho2 = match &cli.sweep_rho2 {
            Some(text) => parse_float_list("--sweep-rho2", text)?,
            None => vec![cfg.rho2],
        };
        let points = pareto_sweep(&cfg, &rho1, &rho2, cfg.rng_seed)?;
        let pareto_path = cli.out.join("pareto.csv");
        let mut text = String::from(
            "rho1,rho2,network_profit,total_latency_s,total_power_mw\n",
        );
        for p in &points {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                format_sig(p.rho1),
                format_sig(p.rho2),
                format_sig(p.network_profit),
                format_sig(p.total_latency_s),
                format_sig(p.total_power_mw),
            ));
        }
        std::fs::write(&pareto_path, text)
            .map_err(|e| AppError::Io(format!("cannot write {}: {e}", pareto_path.display())))?;
        summary["pareto"] = serde_json::to_value(&points).expect("json");
        write_summary_json(&summary, &cli.out.join("summary.json"))?;
        println!("wrote {} sweep points to {}", points.len(), pareto_path.display());
        return Ok(());
    }

    let specs: Vec<PolicySpec> = kinds.iter().map(|&k| PolicySpec::new(k, &cfg)).collect();
    let outcomes = run_experiment(&specs, &cfg, cli.runs, cfg.rng_seed)?;

    let mut algo_entries = Vec::new();
    for outcome in &outcomes {
        let name = outcome.spec.kind.name();
        let mut seeds = Vec::new();
        for (seed, records, _) in &outcome.runs {
            let path = cli.out.join(format!("slots_{name}_seed{seed}.csv"));
            write_slot_csv(records, name, *seed, &path)?;
            seeds.push(*seed);
        }
        algo_entries.push(json!({
            "algorithm": name,
            "seeds": seeds,
            "mean": serde_json::to_value(&outcome.mean).expect("json"),
            "runs": outcome
                .runs
                .iter()
                .map(|(_, _, s)| serde_json::to_value(s).expect("json"))
                .collect::<Vec<_>>(),
        }));
    }
    summary["algorithms"] = algo_entries.into();

    // energy-efficiency improvement of the optimizer over each benchmark
    if let Some(emuo) = outcomes
        .iter()
        .find(|o| o.spec.kind == PolicyKind::Emuo)
    {
        let mut improvements = serde_json::Map::new();
        for other in &outcomes {
            if other.spec.kind == PolicyKind::Emuo {
                continue;
            }
            let gain = emuo.mean.energy_efficiency - other.mean.energy_efficiency;
            let pct = 100.0 * gain / other.mean.energy_efficiency.abs().max(f64::MIN_POSITIVE);
            improvements.insert(other.spec.kind.name().to_string(), json!(pct));
        }
        if !improvements.is_empty() {
            summary["ee_improvement_pct"] = improvements.into();
        }
    }

    if cli.dump_conic {
        write_conic_dumps(&cfg, &cli.out)?;
        summary["conic_dumps"] = json!("conic");
    }

    write_summary_json(&summary, &cli.out.join("summary.json"))?;
    println!(
        "wrote {} run file(s) and summary.json to {} (schema: {})",
        outcomes.iter().map(|o| o.runs.len()).sum::<usize>(),
        cli.out.display(),
        CSV_HEADER.split(',').count(),
    );
    Ok(())
}

/// Dumps the first slot's power and trajectory programs for the initial
/// state, for external cross-checking of the conic formulations.
fn write_conic_dumps(cfg: &WorldConfig, out: &std::path::Path) -> Result<(), AppError> {
    use uqn::lyapunov::VirtualQueues;
    use uqn::resource as res;
    use uqn::runner::initial_state;
    use uqn::scenario as scn;

    let dir = out.join("conic");
    std::fs::create_dir_all(&dir)
        .map_err(|e| AppError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let (subs, positions, powers) = initial_state(cfg, cfg.rng_seed)?;
    let queues = VirtualQueues::new(cfg.n_subscribers, cfg.n_uavs, cfg.queue_init);
    let uavs: Vec<scn::UavState> = positions
        .iter()
        .zip(&powers)
        .enumerate()
        .map(|(id, (p, pw))| scn::UavState {
            id,
            position: *p,
            power_mw: *pw,
        })
        .collect();
    let assoc = res::solve_selection(&res::selection_weights(&queues, &uavs, &subs, cfg));
    let power_prog = res::build_power_program(&queues, &assoc, &positions, &powers, &subs, cfg)
        .map_err(|e| AppError::Io(e.to_string()))?;
    std::fs::write(dir.join("power_t1.txt"), power_prog.dump())
        .map_err(|e| AppError::Io(e.to_string()))?;
    let traj_prog = res::build_trajectory_program(
        &queues, &assoc, &powers, &positions, &positions, &subs, cfg,
    )
    .map_err(|e| AppError::Io(e.to_string()))?;
    std::fs::write(dir.join("trajectory_t1.txt"), traj_prog.dump())
        .map_err(|e| AppError::Io(e.to_string()))?;
    Ok(())
}
