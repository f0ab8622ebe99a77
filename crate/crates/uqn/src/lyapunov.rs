//! Virtual queues, drift-plus-penalty machinery, stability metrics, and the
//! closed-form auxiliary-variable layer.
//!
//! Queues are stored unclamped; the `[·]⁺` projection is applied at read
//! sites only (the Lyapunov function, the optimization weights, and the
//! auxiliary closed form).

use crate::config::WorldConfig;
use crate::qoe::{required_bitrate_term, utility_phi};
use crate::scenario::SubscriberState;
use serde::Serialize;

/// The three families of virtual queues: X tracks the bitrate-threshold
/// constraint, Z the auxiliary-variable coupling, Y the time-averaged power
/// budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VirtualQueues {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

fn clamp_pos(v: f64) -> f64 {
    v.max(0.0)
}

impl VirtualQueues {
    pub fn new(n_subscribers: usize, n_uavs: usize, init: f64) -> Self {
        Self {
            x: vec![init; n_subscribers],
            z: vec![init; n_subscribers],
            y: vec![init; n_uavs],
        }
    }

    /// `[X_i]⁺` as used by the optimization weights.
    pub fn x_pos(&self, i: usize) -> f64 {
        clamp_pos(self.x[i])
    }

    pub fn z_pos(&self, i: usize) -> f64 {
        clamp_pos(self.z[i])
    }

    pub fn y_pos(&self, k: usize) -> f64 {
        clamp_pos(self.y[k])
    }
}

/// Applies the end-of-slot queue recurrences and returns the next state:
/// `X += r_th − r`, `Z += λ − r`, `Y += p_tot − p̃`. No clamping in storage.
pub fn update_queues(
    q: &VirtualQueues,
    rates: &[f64],
    aux: &[f64],
    powers_tot: &[f64],
    thresholds: &[f64],
    cfg: &WorldConfig,
) -> VirtualQueues {
    assert_eq!(q.x.len(), rates.len());
    assert_eq!(q.z.len(), aux.len());
    assert_eq!(q.y.len(), powers_tot.len());
    let x = q
        .x
        .iter()
        .zip(thresholds.iter().zip(rates))
        .map(|(x, (th, r))| x + th - r)
        .collect();
    let z = q
        .z
        .iter()
        .zip(aux.iter().zip(rates))
        .map(|(z, (l, r))| z + l - r)
        .collect();
    let y = q
        .y
        .iter()
        .zip(powers_tot)
        .map(|(y, p)| y + p - cfg.p_tilde_mw)
        .collect();
    VirtualQueues { x, z, y }
}

/// Mean-rate stability metrics at slot `t`:
/// `S = max over the family of [queue]⁺ / t`.
pub fn stability_metrics(q: &VirtualQueues, t: usize) -> (f64, f64, f64) {
    assert!(t >= 1);
    let max_pos = |v: &[f64]| {
        v.iter()
            .map(|&q| clamp_pos(q))
            .fold(0.0f64, f64::max)
    };
    let t = t as f64;
    (
        max_pos(&q.x) / t,
        max_pos(&q.z) / t,
        max_pos(&q.y) / t,
    )
}

/// Clamped sum-of-squares Lyapunov function
/// `L = ½ Σ ([X]⁺)² + ½ Σ ([Z]⁺)² + ½ Σ ([Y]⁺)²`.
pub fn lyapunov_value(q: &VirtualQueues) -> f64 {
    let sq = |v: &[f64]| -> f64 { v.iter().map(|&q| clamp_pos(q).powi(2)).sum() };
    0.5 * (sq(&q.x) + sq(&q.z) + sq(&q.y))
}

/// Closed-form minimizer of the auxiliary-variable layer, per subscriber:
/// `λ_i = r_max` when `[Z_i]⁺ = 0`, otherwise the projected stationary point
/// `min{ [Vα/([Z_i]⁺ β ln2) − R_i/B]⁺, r_max }`.
pub fn solve_auxiliary(
    q: &VirtualQueues,
    subs: &[SubscriberState],
    rate_max: f64,
    cfg: &WorldConfig,
) -> Vec<f64> {
    subs.iter()
        .enumerate()
        .map(|(i, s)| {
            let z = q.z_pos(i);
            if z == 0.0 {
                rate_max
            } else {
                let stationary = cfg.lyapunov_v * cfg.alpha / (z * cfg.beta * std::f64::consts::LN_2)
                    - required_bitrate_term(s.required_bitrate, cfg);
                clamp_pos(stationary).min(rate_max)
            }
        })
        .collect()
}

/// Right-hand side of the drift-plus-penalty upper bound, evaluated
/// term-by-term. Test oracle only; the control loop never calls this.
#[allow(clippy::too_many_arguments)]
pub fn dpp_bound_rhs(
    q: &VirtualQueues,
    rates: &[f64],
    aux: &[f64],
    powers_tot: &[f64],
    latencies: &[f64],
    rate_maxes: &[f64],
    subs: &[SubscriberState],
    cfg: &WorldConfig,
) -> f64 {
    let v = cfg.lyapunov_v;
    let constant: f64 = rate_maxes.iter().map(|r| r * r).sum::<f64>()
        + powers_tot.len() as f64 * cfg.p_hat_mw.powi(2) / 2.0;
    let x_term: f64 = (0..subs.len())
        .map(|i| q.x_pos(i) * subs[i].bitrate_threshold)
        .sum();
    let y_term: f64 = (0..powers_tot.len())
        .map(|k| q.y_pos(k) * (cfg.p_tilde_mw - cfg.p_circuit_mw))
        .sum();
    let circuit_term = v * cfg.rho2 * powers_tot.len() as f64 * cfg.p_circuit_mw;
    let aux_utility = utility_phi(aux, subs, cfg).expect("utility domain");
    let z_term: f64 = (0..subs.len()).map(|i| q.z_pos(i) * aux[i]).sum();
    let power_term: f64 = powers_tot
        .iter()
        .enumerate()
        .map(|(k, p_tot)| (v * cfg.rho2 + q.y_pos(k)) * (p_tot - cfg.p_circuit_mw))
        .sum();
    let rate_term: f64 = rates
        .iter()
        .enumerate()
        .map(|(i, r)| (q.x_pos(i) + q.z_pos(i)) * r)
        .sum();
    let latency_term: f64 = v * cfg.rho1 * latencies.iter().sum::<f64>();

    constant + x_term - y_term + circuit_term - v * aux_utility + z_term + power_term
        - rate_term
        + latency_term
}

/// Left-hand side of the same bound: one-slot Lyapunov drift minus `V` times
/// the penalty. Test oracle companion to [`dpp_bound_rhs`].
#[allow(clippy::too_many_arguments)]
pub fn dpp_bound_lhs(
    q: &VirtualQueues,
    rates: &[f64],
    aux: &[f64],
    powers_tot: &[f64],
    latencies: &[f64],
    subs: &[SubscriberState],
    cfg: &WorldConfig,
) -> f64 {
    let thresholds: Vec<f64> = subs.iter().map(|s| s.bitrate_threshold).collect();
    let next = update_queues(q, rates, aux, powers_tot, &thresholds, cfg);
    let drift = lyapunov_value(&next) - lyapunov_value(q);
    let a = utility_phi(aux, subs, cfg).expect("utility domain");
    let penalty = a
        - cfg.rho1 * latencies.iter().sum::<f64>()
        - cfg.rho2 * powers_tot.iter().sum::<f64>();
    drift - cfg.lyapunov_v * penalty
}
