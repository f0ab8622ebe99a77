//! Minimal library usage: run one policy for a short horizon and print the
//! headline metrics.

use uqn::config::WorldConfig;
use uqn::runner::{run_policy, PolicyKind, PolicySpec};

fn main() {
    let mut cfg = WorldConfig::default();
    cfg.horizon_slots = 50;
    let spec = PolicySpec::new(PolicyKind::Emuo, &cfg);
    let (records, summary) = run_policy(&spec, &cfg, cfg.rng_seed).expect("run");
    println!(
        "{} slots | NP {:.3} | TL {:.3} s | QoE {:.3} | TP {:.1} mW | EE {:.3} | fairness {:.3}",
        records.len(),
        summary.network_profit,
        summary.total_latency_s,
        summary.qoe,
        summary.total_power_mw,
        summary.energy_efficiency,
        summary.rate_fairness,
    );
}
