use uqn::config::WorldConfig;
use uqn::runner::{circle_layout, initial_state, run_experiment, PolicyKind, PolicySpec};

fn main() {
    let cfg = WorldConfig::default();
    let n_seeds: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let specs: Vec<PolicySpec> = PolicyKind::all().iter().map(|&k| PolicySpec::new(k, &cfg)).collect();
    let t0 = std::time::Instant::now();
    let outcomes = run_experiment(&specs, &cfg, n_seeds, 1).unwrap();
    println!("experiment took {:.1}s", t0.elapsed().as_secs_f64());

    for out in &outcomes {
        let kind = out.spec.kind;
        let circular = matches!(kind, PolicyKind::Cutr | PolicyKind::Cumtp);
        let mut worst_col = (0.0f64, 0, 0usize);
        let mut worst_speed = (0.0f64, 0, 0usize);
        let mut worst_rate = 0.0f64;
        let mut worst_los = 0.0f64;
        let mut fallbacks = 0usize;
        for (seed, records, _) in &out.runs {
            let start = if circular { circle_layout(&out.spec, &cfg).2 } else { initial_state(&cfg, *seed).unwrap().1 };
            let mut prev = start;
            for rec in records {
                fallbacks += rec.solver_fallback as usize;
                worst_rate = worst_rate.max(rec.restriction_violation);
                let pos = &rec.uav_positions;
                for k in 0..pos.len() {
                    for j in (k + 1)..pos.len() {
                        let short = cfg.d_min_m - pos[k].dist(pos[j]);
                        if short > worst_col.0 { worst_col = (short, *seed as i64 as i32, rec.t); }
                    }
                    let over = pos[k].dist(prev[k]) - cfg.s_max_m;
                    if over > worst_speed.0 { worst_speed = (over, *seed as i32, rec.t); }
                }
                prev = pos.clone();
            }
        }
        println!(
            "{:6}: QoE {:9.3} EE {:9.3} NP {:7.3} TL {:7.3} TP {:8.2} RF {:5.3} | col {:.3e}@s{}t{} spd {:.3e}@s{}t{} rate {:.2e} los {:.1e} fb {}",
            kind.name(), out.mean.qoe, out.mean.energy_efficiency, out.mean.network_profit,
            out.mean.total_latency_s, out.mean.total_power_mw, out.mean.rate_fairness,
            worst_col.0, worst_col.1, worst_col.2,
            worst_speed.0, worst_speed.1, worst_speed.2,
            worst_rate, worst_los, fallbacks
        );
    }
    // stability ratios for emuo
    let emuo = outcomes.iter().find(|o| o.spec.kind == PolicyKind::Emuo).unwrap();
    for (seed, _, s) in &emuo.runs {
        let tf = cfg.horizon_slots - 1;
        let te = cfg.horizon_slots / 10 - 1;
        println!(
            "  emuo seed {}: S_X {:.4}->{:.4}  S_Z {:.4}->{:.4}  S_Y {:.4}->{:.4}",
            seed, s.stability_x[te], s.stability_x[tf], s.stability_z[te], s.stability_z[tf], s.stability_y[te], s.stability_y[tf]
        );
    }
}
