//! The per-run main loop, the benchmark policies, multi-seed experiments,
//! and the trade-off-weight sweep.
//!
//! Per seed, subscriber placement/mobility and the initial UAV state are
//! drawn from streams independent of the policy, so runs of different
//! policies under the same seed face identical worlds (paired comparison).

use crate::config::WorldConfig;
use crate::lyapunov::{solve_auxiliary, update_queues, VirtualQueues};
use crate::qoe::{latency, run_metrics, total_power, RunSummary, SlotRecord};
use crate::resource::{algorithm1, ConicStep, RestartInit, SelectionStep, StepPlan};
pub use crate::resource::nearest_neighbor_association;
use crate::scenario::{
    achievable_rate, rate_upper_bound, sample_subscribers, sample_uav_positions,
    step_subscriber_mobility, SubscriberState, UavState, Vec2,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("scenario setup failed: {0}")]
    Placement(String),
    #[error(transparent)]
    Metrics(#[from] crate::qoe::QoeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Emuo,
    Nnas,
    Sude,
    Sumtp,
    Cutr,
    Cumtp,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Emuo => "emuo",
            PolicyKind::Nnas => "nnas",
            PolicyKind::Sude => "sude",
            PolicyKind::Sumtp => "sumtp",
            PolicyKind::Cutr => "cutr",
            PolicyKind::Cumtp => "cumtp",
        }
    }

    pub fn parse(s: &str) -> Option<PolicyKind> {
        match s.to_ascii_lowercase().as_str() {
            "emuo" => Some(PolicyKind::Emuo),
            "nnas" => Some(PolicyKind::Nnas),
            "sude" => Some(PolicyKind::Sude),
            "sumtp" => Some(PolicyKind::Sumtp),
            "cutr" => Some(PolicyKind::Cutr),
            "cumtp" => Some(PolicyKind::Cumtp),
            _ => None,
        }
    }

    pub fn all() -> [PolicyKind; 6] {
        [
            PolicyKind::Emuo,
            PolicyKind::Nnas,
            PolicyKind::Sude,
            PolicyKind::Sumtp,
            PolicyKind::Cutr,
            PolicyKind::Cumtp,
        ]
    }
}

/// A policy plus its benchmark-specific parameters.
#[derive(Debug, Clone, Serialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub circle_speed_mps: f64,
    pub circle_spacing_m: f64,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, cfg: &WorldConfig) -> Self {
        Self {
            kind,
            circle_speed_mps: cfg.circle_speed_mps,
            circle_spacing_m: cfg.circle_chord_m(),
        }
    }
}

/// Advances a position along the circle by `arc` meters of arc length.
pub fn circular_step(position: Vec2, center: Vec2, radius: f64, arc: f64) -> Vec2 {
    assert!(radius > 0.0);
    let rel = position.sub(center);
    let angle = rel.y.atan2(rel.x) + arc / radius;
    Vec2::new(
        center.x + radius * angle.cos(),
        center.y + radius * angle.sin(),
    )
}

/// Circle geometry of the circular-trajectory benchmarks: UAVs evenly
/// spaced so that neighbors sit one chord apart.
pub fn circle_layout(spec: &PolicySpec, cfg: &WorldConfig) -> (Vec2, f64, Vec<Vec2>) {
    let n = cfg.n_uavs;
    let center = Vec2::new(cfg.area_width_m / 2.0, cfg.area_height_m / 2.0);
    let radius = if n > 1 {
        spec.circle_spacing_m / (2.0 * (std::f64::consts::PI / n as f64).sin())
    } else {
        spec.circle_spacing_m
    };
    let positions = (0..n)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / n as f64;
            Vec2::new(
                center.x + radius * angle.cos(),
                center.y + radius * angle.sin(),
            )
        })
        .collect();
    (center, radius, positions)
}

fn make_uavs(positions: &[Vec2], powers: &[f64]) -> Vec<UavState> {
    positions
        .iter()
        .zip(powers)
        .enumerate()
        .map(|(id, (pos, p))| UavState {
            id,
            position: *pos,
            power_mw: *p,
        })
        .collect()
}

const UAV_INIT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;
/// Random re-initializations of the per-slot iterative solver.
const RESTARTS_PER_SLOT: usize = 2;

struct SeedState {
    subs: Vec<SubscriberState>,
    positions: Vec<Vec2>,
    powers: Vec<f64>,
    world_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
}

fn seed_state(cfg: &WorldConfig, seed: u64) -> Result<SeedState, RunError> {
    // world stream: subscriber placement and mobility, shared by all policies
    let mut world_rng = ChaCha8Rng::seed_from_u64(seed);
    let subs = sample_subscribers(cfg, &mut world_rng);
    // policy stream: initial UAV placement and powers (shared draw order
    // across policies), then per-slot restart points
    let mut policy_rng = ChaCha8Rng::seed_from_u64(seed ^ UAV_INIT_STREAM);
    let positions = sample_uav_positions(cfg, &mut policy_rng).map_err(RunError::Placement)?;
    let powers: Vec<f64> = (0..cfg.n_uavs)
        .map(|_| policy_rng.gen_range(cfg.p_min_mw..=cfg.p_tx_max_mw()))
        .collect();
    Ok(SeedState {
        subs,
        positions,
        powers,
        world_rng,
        policy_rng,
    })
}

/// The world and UAV state every policy starts from under a given seed:
/// subscriber placement, initial UAV positions, and initial powers.
pub fn initial_state(
    cfg: &WorldConfig,
    seed: u64,
) -> Result<(Vec<SubscriberState>, Vec<Vec2>, Vec<f64>), RunError> {
    let s = seed_state(cfg, seed)?;
    Ok((s.subs, s.positions, s.powers))
}

/// Draws restart positions inside each UAV's reachable disc, keeping the
/// set pairwise `d_min`-separated and inside the area. Early proposals aim
/// at randomly chosen subscribers (projected into the disc) so restarts
/// explore serving configurations; later attempts fall back to uniform.
fn draw_restart_positions<R: Rng>(
    prev: &[Vec2],
    subs: &[crate::scenario::SubscriberState],
    targets: &[usize],
    cfg: &WorldConfig,
    rng: &mut R,
) -> Vec<Vec2> {
    use crate::resource::KINEMATIC_MARGIN_M;
    let reach = (cfg.s_max_m - 2.0 * KINEMATIC_MARGIN_M).max(0.0);
    let mut drawn: Vec<Vec2> = Vec::with_capacity(prev.len());
    for anchor in prev {
        let mut pick = *anchor;
        for attempt in 0..1000 {
            let cand = if attempt < 50 && !targets.is_empty() {
                let target = subs[targets[rng.gen_range(0..targets.len())]].position;
                let radius = 0.8 * cfg.los_radius_m() * rng.gen_range(0.0f64..1.0).sqrt();
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                let near = Vec2::new(
                    target.x + radius * angle.cos(),
                    target.y + radius * angle.sin(),
                );
                let offset = near.sub(*anchor);
                let dist = offset.norm();
                if dist <= reach {
                    near
                } else {
                    Vec2::new(
                        anchor.x + offset.x * reach / dist,
                        anchor.y + offset.y * reach / dist,
                    )
                }
            } else {
                let radius = reach * rng.gen_range(0.0f64..1.0).sqrt();
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                Vec2::new(
                    anchor.x + radius * angle.cos(),
                    anchor.y + radius * angle.sin(),
                )
            };
            let in_area = cand.x >= 0.0
                && cand.x <= cfg.area_width_m
                && cand.y >= 0.0
                && cand.y <= cfg.area_height_m;
            if in_area && drawn.iter().all(|p| p.dist(cand) >= cfg.d_min_m) {
                pick = cand;
                break;
            }
        }
        drawn.push(pick);
    }
    // anchors mixed in on attempt exhaustion could sit closer than d_min to
    // a drawn point; in that case skip exploration for the slot
    for k in 0..drawn.len() {
        for j in (k + 1)..drawn.len() {
            if drawn[k].dist(drawn[j]) < cfg.d_min_m {
                return prev.to_vec();
            }
        }
    }
    drawn
}

/// Runs one policy for the configured horizon under one seed.
pub fn run_policy(
    spec: &PolicySpec,
    cfg: &WorldConfig,
    seed: u64,
) -> Result<(Vec<SlotRecord>, RunSummary), RunError> {
    let n = cfg.n_uavs;
    let m = cfg.n_subscribers;

    let SeedState {
        mut subs,
        positions: sampled_positions,
        powers: sampled_powers,
        mut world_rng,
        mut policy_rng,
    } = seed_state(cfg, seed)?;

    let (center, radius, circle_positions) = circle_layout(spec, cfg);
    let circular = matches!(spec.kind, PolicyKind::Cutr | PolicyKind::Cumtp);
    let max_power = matches!(spec.kind, PolicyKind::Sumtp | PolicyKind::Cumtp);
    let arc_per_slot = spec.circle_speed_mps * cfg.slot_duration_s;

    let mut positions = if circular {
        circle_positions
    } else {
        sampled_positions
    };
    let mut powers = if max_power {
        vec![cfg.p_tx_max_mw(); n]
    } else {
        sampled_powers
    };

    let mut queues = VirtualQueues::new(m, n, cfg.queue_init);
    let thresholds: Vec<f64> = subs.iter().map(|s| s.bitrate_threshold).collect();
    let aux_cap = rate_upper_bound(cfg);
    let mut records = Vec::with_capacity(cfg.horizon_slots);
    let all_subs: Vec<usize> = (0..m).collect();
    let mut prev_unserved: Vec<usize> = Vec::new();

    for t in 1..=cfg.horizon_slots {
        if circular && t > 1 {
            positions = positions
                .iter()
                .map(|p| circular_step(*p, center, radius, arc_per_slot))
                .collect();
        }

        let aux = solve_auxiliary(&queues, &subs, aux_cap, cfg);

        let plan = match spec.kind {
            PolicyKind::Emuo => StepPlan::full(),
            PolicyKind::Nnas => StepPlan {
                selection: SelectionStep::NearestNeighbor,
                power: ConicStep::Optimize,
                trajectory: ConicStep::Optimize,
            },
            PolicyKind::Sude | PolicyKind::Cutr => StepPlan {
                selection: SelectionStep::Optimize,
                power: ConicStep::Optimize,
                trajectory: ConicStep::Hold,
            },
            PolicyKind::Sumtp | PolicyKind::Cumtp => StepPlan {
                selection: SelectionStep::Optimize,
                power: ConicStep::Hold,
                trajectory: ConicStep::Hold,
            },
        };

        // per-slot re-initializations of the iterative solver (drawn even
        // when unused so the stream advances deterministically every slot);
        // position proposals lean toward subscribers the previous slot left
        // unserved, giving the restart branch something the incumbent lacks
        let targets: &[usize] = if prev_unserved.is_empty() {
            &all_subs
        } else {
            &prev_unserved
        };
        let restart_draws: Vec<(Vec<f64>, Vec<Vec2>)> = (0..RESTARTS_PER_SLOT)
            .map(|_| {
                let powers: Vec<f64> = (0..n)
                    .map(|_| policy_rng.gen_range(cfg.p_min_mw..=cfg.p_tx_max_mw()))
                    .collect();
                let positions =
                    draw_restart_positions(&positions, &subs, targets, cfg, &mut policy_rng);
                (powers, positions)
            })
            .collect();
        let restarts: Vec<RestartInit> = match spec.kind {
            PolicyKind::Emuo | PolicyKind::Nnas => restart_draws
                .into_iter()
                .map(|(powers, positions)| RestartInit {
                    powers: Some(powers),
                    positions: Some(positions),
                })
                .collect(),
            PolicyKind::Sude | PolicyKind::Cutr => restart_draws
                .into_iter()
                .take(1)
                .map(|(powers, _)| RestartInit {
                    powers: Some(powers),
                    positions: None,
                })
                .collect(),
            PolicyKind::Sumtp | PolicyKind::Cumtp => Vec::new(),
        };

        let decision = algorithm1(&queues, &subs, &positions, &powers, &plan, &restarts, cfg);
        powers = decision.powers;
        positions = decision.positions;

        let uavs = make_uavs(&positions, &powers);
        let rates: Vec<f64> = (0..m)
            .map(|i| achievable_rate(i, &decision.assoc, &uavs, &subs, cfg))
            .collect();
        let latencies: Vec<f64> = (0..m)
            .map(|i| latency(i, &decision.assoc, &uavs, &subs, cfg))
            .collect();
        let powers_tot: Vec<f64> = powers.iter().map(|p| p + cfg.p_circuit_mw).collect();
        debug_assert!((powers_tot.iter().sum::<f64>() - total_power(&uavs, cfg)).abs() < 1e-9);

        records.push(SlotRecord {
            t,
            rates: rates.clone(),
            latencies,
            powers_mw: powers.clone(),
            powers_tot_mw: powers_tot.clone(),
            uav_positions: positions.clone(),
            assoc: decision.assoc,
            queues: queues.clone(),
            aux_lambda: aux.clone(),
            phi_objective: *decision.sca.trace.last().unwrap(),
            sca_trace: decision.sca.trace.clone(),
            sca_iterations: decision.sca.iterations,
            restriction_violation: decision.restriction_violation,
            solver_fallback: decision.fallback,
        });

        prev_unserved = (0..m)
            .filter(|&i| records.last().unwrap().assoc.uav_of(i).is_none())
            .collect();
        queues = update_queues(&queues, &rates, &aux, &powers_tot, &thresholds, cfg);
        step_subscriber_mobility(&mut subs, cfg, &mut world_rng);
    }

    let summary = run_metrics(&records, &subs, cfg)?;
    Ok((records, summary))
}

/// Componentwise mean of the headline metrics over a policy's runs.
#[derive(Debug, Clone, Serialize)]
pub struct MeanMetrics {
    pub network_profit: f64,
    pub total_latency_s: f64,
    pub qoe: f64,
    pub total_power_mw: f64,
    pub energy_efficiency: f64,
    pub rate_fairness: f64,
}

impl MeanMetrics {
    pub fn of(runs: &[RunSummary]) -> Self {
        let n = runs.len() as f64;
        Self {
            network_profit: runs.iter().map(|r| r.network_profit).sum::<f64>() / n,
            total_latency_s: runs.iter().map(|r| r.total_latency_s).sum::<f64>() / n,
            qoe: runs.iter().map(|r| r.qoe).sum::<f64>() / n,
            total_power_mw: runs.iter().map(|r| r.total_power_mw).sum::<f64>() / n,
            energy_efficiency: runs.iter().map(|r| r.energy_efficiency).sum::<f64>() / n,
            rate_fairness: runs.iter().map(|r| r.rate_fairness).sum::<f64>() / n,
        }
    }
}

/// One policy's complete experiment outcome.
pub struct PolicyOutcome {
    pub spec: PolicySpec,
    /// `(seed, slot records, summary)` per run, in seed order.
    pub runs: Vec<(u64, Vec<SlotRecord>, RunSummary)>,
    pub mean: MeanMetrics,
}

/// Runs every policy for `n_runs` paired seeds (`base_seed..base_seed+n_runs`)
/// and averages the summaries. Independent runs execute in parallel;
/// results are merged in deterministic seed order.
pub fn run_experiment(
    specs: &[PolicySpec],
    cfg: &WorldConfig,
    n_runs: usize,
    base_seed: u64,
) -> Result<Vec<PolicyOutcome>, RunError> {
    assert!(n_runs >= 1);
    let jobs: Vec<(usize, u64)> = specs
        .iter()
        .enumerate()
        .flat_map(|(si, _)| (0..n_runs).map(move |r| (si, base_seed + r as u64)))
        .collect();
    let results: Vec<Result<(usize, u64, Vec<SlotRecord>, RunSummary), RunError>> = jobs
        .par_iter()
        .map(|&(si, seed)| {
            let (records, summary) = run_policy(&specs[si], cfg, seed)?;
            Ok((si, seed, records, summary))
        })
        .collect();

    let mut per_policy: Vec<Vec<(u64, Vec<SlotRecord>, RunSummary)>> =
        specs.iter().map(|_| Vec::new()).collect();
    for res in results {
        let (si, seed, records, summary) = res?;
        per_policy[si].push((seed, records, summary));
    }
    Ok(specs
        .iter()
        .zip(per_policy)
        .map(|(spec, mut runs)| {
            runs.sort_by_key(|(seed, _, _)| *seed);
            let summaries: Vec<RunSummary> = runs.iter().map(|(_, _, s)| s.clone()).collect();
            PolicyOutcome {
                spec: spec.clone(),
                mean: MeanMetrics::of(&summaries),
                runs,
            }
        })
        .collect())
}

/// One point of the objective-weight sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ParetoPoint {
    pub rho1: f64,
    pub rho2: f64,
    pub network_profit: f64,
    pub total_latency_s: f64,
    pub total_power_mw: f64,
}

/// Runs the full optimizer once per `(ρ1, ρ2)` pair under one seed and
/// reports the objective triple for frontier plotting.
pub fn pareto_sweep(
    cfg: &WorldConfig,
    rho1_values: &[f64],
    rho2_values: &[f64],
    seed: u64,
) -> Result<Vec<ParetoPoint>, RunError> {
    assert!(!rho1_values.is_empty() && !rho2_values.is_empty());
    let grid: Vec<(f64, f64)> = rho1_values
        .iter()
        .flat_map(|&r1| rho2_values.iter().map(move |&r2| (r1, r2)))
        .collect();
    let points: Vec<Result<ParetoPoint, RunError>> = grid
        .par_iter()
        .map(|&(rho1, rho2)| {
            let mut swept = cfg.clone();
            swept.rho1 = rho1;
            swept.rho2 = rho2;
            let spec = PolicySpec::new(PolicyKind::Emuo, &swept);
            let (_, summary) = run_policy(&spec, &swept, seed)?;
            Ok(ParetoPoint {
                rho1,
                rho2,
                network_profit: summary.network_profit,
                total_latency_s: summary.total_latency_s,
                total_power_mw: summary.total_power_mw,
            })
        })
        .collect();
    points.into_iter().collect()
}
