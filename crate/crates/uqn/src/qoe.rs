//! QoE-side quantities: streaming utility, startup/rebuffering latency,
//! power accounting, and the end-of-run evaluation metrics.

use crate::config::{BitrateUnitMode, WorldConfig};
use crate::lyapunov::VirtualQueues;
use crate::scenario::{pair_rate, Association, SubscriberState, UavState};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum QoeError {
    #[error("utility argument beta(1 + x) = {0} is outside the log domain")]
    UtilityDomain(f64),
    #[error("run_metrics requires a non-empty record list")]
    EmptyRun,
}

/// Ratio fed into the utility model for one subscriber, resolved per the
/// configured bitrate unit mode.
pub fn bitrate_ratio(rate: f64, required_bitrate: f64, cfg: &WorldConfig) -> f64 {
    match cfg.bitrate_unit_mode {
        BitrateUnitMode::SpectralNormalized => rate / required_bitrate,
        BitrateUnitMode::Literal => cfg.bandwidth_hz * rate / required_bitrate,
    }
}

/// Required bitrate expressed in the units of the spectral efficiencies the
/// optimizer works with (the `R_i/B` term of the auxiliary closed form).
pub fn required_bitrate_term(required_bitrate: f64, cfg: &WorldConfig) -> f64 {
    match cfg.bitrate_unit_mode {
        BitrateUnitMode::SpectralNormalized => required_bitrate,
        BitrateUnitMode::Literal => required_bitrate / cfg.bandwidth_hz,
    }
}

/// Video streaming utility `α Σ_i log2(β (1 + B r̄_i / R_i))`.
pub fn utility_phi(
    mean_rates: &[f64],
    subs: &[SubscriberState],
    cfg: &WorldConfig,
) -> Result<f64, QoeError> {
    assert_eq!(mean_rates.len(), subs.len());
    let mut total = 0.0;
    for (r, s) in mean_rates.iter().zip(subs) {
        let arg = cfg.beta * (1.0 + bitrate_ratio(*r, s.required_bitrate, cfg));
        if arg <= 0.0 {
            return Err(QoeError::UtilityDomain(arg));
        }
        total += arg.log2();
    }
    Ok(cfg.alpha * total)
}

/// Startup-plus-rebuffering latency of subscriber `i`, seconds. Served
/// subscribers wait `L / (B log2(1+sinr))`, capped at the slot duration;
/// unassociated subscribers wait out the slot.
pub fn latency(
    sub_i: usize,
    assoc: &Association,
    uavs: &[UavState],
    subs: &[SubscriberState],
    cfg: &WorldConfig,
) -> f64 {
    match assoc.uav_of(sub_i) {
        None => cfg.slot_duration_s,
        Some(k) => {
            let rate = pair_rate(sub_i, k, uavs, subs, cfg);
            if rate <= 0.0 {
                return cfg.slot_duration_s;
            }
            (cfg.chunk_time_s() / rate).min(cfg.slot_duration_s)
        }
    }
}

/// Total communication power of the network, `Σ_k (p_k + p_c)` mW.
pub fn total_power(uavs: &[UavState], cfg: &WorldConfig) -> f64 {
    uavs.iter()
        .map(|u| u.power_mw + cfg.p_circuit_mw)
        .sum()
}

/// Everything recorded about one completed time slot.
#[derive(Debug, Clone, Serialize)]
pub struct SlotRecord {
    /// 1-based slot index.
    pub t: usize,
    /// Achievable bitrate per subscriber, bps/Hz.
    pub rates: Vec<f64>,
    /// Latency per subscriber, seconds, in (0, slot duration].
    pub latencies: Vec<f64>,
    /// Transmit power per UAV, mW.
    pub powers_mw: Vec<f64>,
    /// Total (transmit + circuit) power per UAV, mW.
    pub powers_tot_mw: Vec<f64>,
    /// UAV positions the slot's decisions were executed at.
    pub uav_positions: Vec<crate::scenario::Vec2>,
    pub assoc: Association,
    /// Virtual queues as observed at the start of the slot.
    pub queues: VirtualQueues,
    /// Auxiliary bitrate targets chosen at the start of the slot.
    pub aux_lambda: Vec<f64>,
    /// Resource-layer objective value reached by the iterative solver.
    pub phi_objective: f64,
    /// Objective value after the initial selection and after each accepted
    /// iteration.
    pub sca_trace: Vec<f64>,
    /// Number of resource-layer iterations run this slot.
    pub sca_iterations: usize,
    /// Worst shortfall of the true rates against any accepted conic
    /// solution's promised rates this slot.
    pub restriction_violation: f64,
    /// Whether the slot fell back to the previous slot's decisions after a
    /// solver failure.
    pub solver_fallback: bool,
}

/// Per-run aggregate metrics.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    /// Time-averaged achievable bitrate per subscriber, bps/Hz.
    pub mean_rates: Vec<f64>,
    /// Time-averaged total power per UAV, mW.
    pub mean_powers_tot_mw: Vec<f64>,
    /// Network profit: utility of the mean rates.
    pub network_profit: f64,
    /// Total latency: per-subscriber time-averaged latency, summed.
    pub total_latency_s: f64,
    /// `NP − ρ1·TL`.
    pub qoe: f64,
    /// Total time-averaged power, mW.
    pub total_power_mw: f64,
    /// `QoE − ρ2·TP`.
    pub energy_efficiency: f64,
    /// Jain fairness index of the normalized mean rates.
    pub rate_fairness: f64,
    /// Queue stability series, one value per slot.
    pub stability_x: Vec<f64>,
    pub stability_z: Vec<f64>,
    pub stability_y: Vec<f64>,
    /// Slots that fell back to the previous decision after solver failure.
    pub fallback_slots: usize,
}

/// Jain's fairness index `(Σ u)² / (M Σ u²)` over nonnegative ratios.
pub fn jain_index(ratios: &[f64]) -> f64 {
    let m = ratios.len() as f64;
    let sum: f64 = ratios.iter().sum();
    let sum_sq: f64 = ratios.iter().map(|u| u * u).sum();
    if sum_sq == 0.0 {
        return 1.0; // all-zero allocation is trivially even
    }
    sum * sum / (m * sum_sq)
}

/// Aggregates a completed run into its summary metrics.
pub fn run_metrics(
    records: &[SlotRecord],
    subs: &[SubscriberState],
    cfg: &WorldConfig,
) -> Result<RunSummary, QoeError> {
    if records.is_empty() {
        return Err(QoeError::EmptyRun);
    }
    let t_count = records.len() as f64;
    let m = subs.len();
    let n = records[0].powers_mw.len();

    let mut mean_rates = vec![0.0; m];
    let mut mean_lat = vec![0.0; m];
    let mut mean_powers_tot = vec![0.0; n];
    for rec in records {
        for i in 0..m {
            mean_rates[i] += rec.rates[i];
            mean_lat[i] += rec.latencies[i];
        }
        for k in 0..n {
            mean_powers_tot[k] += rec.powers_tot_mw[k];
        }
    }
    for v in mean_rates.iter_mut().chain(mean_lat.iter_mut()) {
        *v /= t_count;
    }
    for v in mean_powers_tot.iter_mut() {
        *v /= t_count;
    }

    let network_profit = utility_phi(&mean_rates, subs, cfg)?;
    let total_latency_s: f64 = mean_lat.iter().sum();
    let qoe = network_profit - cfg.rho1 * total_latency_s;
    let total_power_mw: f64 = mean_powers_tot.iter().sum();
    let energy_efficiency = qoe - cfg.rho2 * total_power_mw;

    let ratios: Vec<f64> = mean_rates
        .iter()
        .zip(subs)
        .map(|(r, s)| r / s.required_bitrate)
        .collect();
    let rate_fairness = jain_index(&ratios);

    let mut stability_x = Vec::with_capacity(records.len());
    let mut stability_z = Vec::with_capacity(records.len());
    let mut stability_y = Vec::with_capacity(records.len());
    for rec in records {
        let (sx, sz, sy) = crate::lyapunov::stability_metrics(&rec.queues, rec.t);
        stability_x.push(sx);
        stability_z.push(sz);
        stability_y.push(sy);
    }

    Ok(RunSummary {
        mean_rates,
        mean_powers_tot_mw: mean_powers_tot,
        network_profit,
        total_latency_s,
        qoe,
        total_power_mw,
        energy_efficiency,
        rate_fairness,
        stability_x,
        stability_z,
        stability_y,
        fallback_slots: records.iter().filter(|r| r.solver_fallback).count(),
    })
}
