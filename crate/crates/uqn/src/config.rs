//! Scenario and algorithm configuration.
//!
//! All physical quantities are carried internally in linear units (mW, Hz,
//! meters, seconds). dBm appears only at config ingestion: a config file may
//! specify the noise floor either as `noise_power_dbm` or directly as
//! `noise_power_mw`, and the echoed config always stores mW.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// How the bitrate ratio in the utility model and the auxiliary closed form
/// is evaluated.
///
/// The required playback bitrates are quoted in bps/Hz while the utility
/// forms `B·r̄_i/R_i`; the two readings of that expression differ by a factor
/// of the bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitrateUnitMode {
    /// Treat `R_i` as a spectral efficiency and evaluate the ratio as
    /// `r̄_i/R_i` (default).
    #[serde(rename = "spectral-normalized")]
    SpectralNormalized,
    /// Evaluate `B·r̄_i/R_i` with `R_i` taken literally in bps/Hz.
    #[serde(rename = "literal")]
    Literal,
}

impl BitrateUnitMode {
    fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "spectral-normalized" => Ok(Self::SpectralNormalized),
            "literal" => Ok(Self::Literal),
            other => Err(ConfigError::Invalid(format!(
                "bitrate_unit_mode must be \"spectral-normalized\" or \"literal\", got \"{other}\""
            ))),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::SpectralNormalized => "spectral-normalized",
            Self::Literal => "literal",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown config key \"{0}\"")]
    UnknownKey(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Immutable scenario plus algorithm parameters.
///
/// Defaults carry the reference mountainous-suburb setup: a 500x500 m area,
/// 4 UAVs at 500 m altitude relaying to 10 walking subscribers over a
/// 4.9 GHz / 100 MHz free-space channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldConfig {
    pub area_width_m: f64,
    pub area_height_m: f64,
    pub n_uavs: usize,
    pub n_subscribers: usize,
    /// Fixed flight altitude H.
    pub altitude_m: f64,
    pub carrier_freq_hz: f64,
    pub light_speed_mps: f64,
    /// Far-field reference distance D0.
    pub ref_dist_m: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    /// Noise power, linear mW.
    pub noise_power_mw: f64,
    pub bandwidth_hz: f64,
    /// Slot duration, seconds.
    pub slot_duration_s: f64,
    /// Video data transmitted per slot, bits.
    pub video_chunk_bits: f64,
    /// Elevation-angle threshold for LoS, degrees.
    pub elevation_threshold_deg: f64,
    /// Minimum pairwise UAV safety distance.
    pub d_min_m: f64,
    /// Maximum UAV flight distance per slot.
    pub s_max_m: f64,
    /// Maximum instantaneous total power consumption per UAV.
    pub p_hat_mw: f64,
    /// Maximum time-averaged total power consumption per UAV.
    pub p_tilde_mw: f64,
    /// Onboard circuit power per UAV.
    pub p_circuit_mw: f64,
    /// Minimum transmit power per UAV.
    pub p_min_mw: f64,
    /// Utility model scale.
    pub alpha: f64,
    /// Utility model offset factor.
    pub beta: f64,
    /// Drift-plus-penalty trade-off weight V.
    pub lyapunov_v: f64,
    /// Latency weight in the objective.
    pub rho1: f64,
    /// Power weight in the objective.
    pub rho2: f64,
    /// Number of time slots T.
    pub horizon_slots: usize,
    /// Maximum resource-layer iterations per slot.
    pub sca_max_iter: usize,
    pub rng_seed: u64,
    /// Subscriber random-walk step length per slot.
    pub subscriber_step_m: f64,
    pub bitrate_unit_mode: BitrateUnitMode,
    /// Initial value of every virtual queue.
    pub queue_init: f64,
    /// Circular-trajectory benchmark speed.
    pub circle_speed_mps: f64,
    /// Initial neighbor spacing on the benchmark circle; default 1/(4N) km.
    pub circle_spacing_m: Option<f64>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            area_width_m: 500.0,
            area_height_m: 500.0,
            n_uavs: 4,
            n_subscribers: 10,
            altitude_m: 500.0,
            carrier_freq_hz: 4.9e9,
            light_speed_mps: 3.0e8,
            ref_dist_m: 1.0,
            tx_gain: 1.0,
            rx_gain: 1.0,
            noise_power_mw: dbm_to_mw(-174.0),
            bandwidth_hz: 1.0e8,
            slot_duration_s: 2.0,
            video_chunk_bits: 1.0e7,
            elevation_threshold_deg: 77.0,
            d_min_m: 50.0,
            s_max_m: 250.0,
            p_hat_mw: 500.0,
            p_tilde_mw: 450.0,
            p_circuit_mw: 20.0,
            p_min_mw: 0.0,
            alpha: 1.0,
            beta: 1.0,
            lyapunov_v: 10.0,
            rho1: 15.0,
            rho2: 0.05,
            horizon_slots: 200,
            sca_max_iter: 60,
            rng_seed: 1,
            subscriber_step_m: 1.0,
            bitrate_unit_mode: BitrateUnitMode::SpectralNormalized,
            queue_init: 1.0,
            circle_speed_mps: 2.0,
            circle_spacing_m: None,
        }
    }
}

/// Converts a dBm value to linear mW.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

impl WorldConfig {
    /// Free-space channel constant `ω = g^T g^R c² D0² / (4π f_c)²`.
    pub fn omega(&self) -> f64 {
        let denom = 4.0 * std::f64::consts::PI * self.carrier_freq_hz;
        self.tx_gain * self.rx_gain * self.light_speed_mps.powi(2) * self.ref_dist_m.powi(2)
            / denom.powi(2)
    }

    /// LoS coverage radius `H / tan θ` around a UAV's nadir.
    pub fn los_radius_m(&self) -> f64 {
        self.altitude_m / self.elevation_threshold_deg.to_radians().tan()
    }

    /// Maximum transmit power `p̂ − p_c` available after circuit consumption.
    pub fn p_tx_max_mw(&self) -> f64 {
        self.p_hat_mw - self.p_circuit_mw
    }

    /// Chunk transmission time per unit spectral efficiency, `L/B` seconds.
    pub fn chunk_time_s(&self) -> f64 {
        self.video_chunk_bits / self.bandwidth_hz
    }

    /// Neighbor spacing for the circular-trajectory benchmarks.
    pub fn circle_chord_m(&self) -> f64 {
        self.circle_spacing_m
            .unwrap_or(1000.0 / (4.0 * self.n_uavs as f64))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive: [(&str, f64); 18] = [
            ("area_width_m", self.area_width_m),
            ("area_height_m", self.area_height_m),
            ("altitude_m", self.altitude_m),
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("light_speed_mps", self.light_speed_mps),
            ("ref_dist_m", self.ref_dist_m),
            ("tx_gain", self.tx_gain),
            ("rx_gain", self.rx_gain),
            ("noise_power_mw", self.noise_power_mw),
            ("bandwidth_hz", self.bandwidth_hz),
            ("slot_duration_s", self.slot_duration_s),
            ("video_chunk_bits", self.video_chunk_bits),
            ("d_min_m", self.d_min_m),
            ("s_max_m", self.s_max_m),
            ("p_hat_mw", self.p_hat_mw),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("subscriber_step_m", self.subscriber_step_m + 1.0), // step 0 allowed
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::Invalid(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if self.subscriber_step_m < 0.0 {
            return Err(ConfigError::Invalid(
                "subscriber_step_m must be nonnegative".into(),
            ));
        }
        if self.p_min_mw < 0.0 {
            return Err(ConfigError::Invalid("p_min_mw must be >= 0".into()));
        }
        if self.p_circuit_mw < 0.0 {
            return Err(ConfigError::Invalid("p_circuit_mw must be >= 0".into()));
        }
        if self.p_circuit_mw + self.p_min_mw > self.p_tilde_mw {
            return Err(ConfigError::Invalid(format!(
                "p_circuit_mw + p_min_mw = {} exceeds p_tilde_mw = {}",
                self.p_circuit_mw + self.p_min_mw,
                self.p_tilde_mw
            )));
        }
        if self.p_tilde_mw > self.p_hat_mw {
            return Err(ConfigError::Invalid(format!(
                "p_tilde_mw = {} exceeds p_hat_mw = {}",
                self.p_tilde_mw, self.p_hat_mw
            )));
        }
        if !(self.elevation_threshold_deg > 0.0 && self.elevation_threshold_deg < 90.0) {
            return Err(ConfigError::Invalid(format!(
                "elevation_threshold_deg must lie in (0, 90), got {}",
                self.elevation_threshold_deg
            )));
        }
        if self.n_uavs == 0 || self.n_subscribers == 0 {
            return Err(ConfigError::Invalid(
                "n_uavs and n_subscribers must be >= 1".into(),
            ));
        }
        if self.horizon_slots == 0 || self.sca_max_iter == 0 {
            return Err(ConfigError::Invalid(
                "horizon_slots and sca_max_iter must be >= 1".into(),
            ));
        }
        if self.lyapunov_v < 0.0 || self.rho1 < 0.0 || self.rho2 < 0.0 {
            return Err(ConfigError::Invalid(
                "lyapunov_v, rho1, rho2 must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Loads a flat key/value config file, applying defaults for absent keys.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str(&text)
    }

    /// Parses the flat key/value document. Unknown keys are errors.
    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let mut cfg = Self::default();
        let mut saw_dbm = false;
        let mut saw_mw = false;

        fn num(key: &str, v: &toml::Value) -> Result<f64, ConfigError> {
            match v {
                toml::Value::Float(f) => Ok(*f),
                toml::Value::Integer(i) => Ok(*i as f64),
                _ => Err(ConfigError::Invalid(format!("{key} must be a number"))),
            }
        }
        fn count(key: &str, v: &toml::Value) -> Result<usize, ConfigError> {
            match v {
                toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                _ => Err(ConfigError::Invalid(format!(
                    "{key} must be a nonnegative integer"
                ))),
            }
        }

        for (key, value) in &table {
            match key.as_str() {
                "area_width_m" => cfg.area_width_m = num(key, value)?,
                "area_height_m" => cfg.area_height_m = num(key, value)?,
                "n_uavs" => cfg.n_uavs = count(key, value)?,
                "n_subscribers" => cfg.n_subscribers = count(key, value)?,
                "altitude_m" => cfg.altitude_m = num(key, value)?,
                "carrier_freq_hz" => cfg.carrier_freq_hz = num(key, value)?,
                "light_speed_mps" => cfg.light_speed_mps = num(key, value)?,
                "ref_dist_m" => cfg.ref_dist_m = num(key, value)?,
                "tx_gain" => cfg.tx_gain = num(key, value)?,
                "rx_gain" => cfg.rx_gain = num(key, value)?,
                "noise_power_dbm" => {
                    cfg.noise_power_mw = dbm_to_mw(num(key, value)?);
                    saw_dbm = true;
                }
                "noise_power_mw" => {
                    cfg.noise_power_mw = num(key, value)?;
                    saw_mw = true;
                }
                "bandwidth_hz" => cfg.bandwidth_hz = num(key, value)?,
                "slot_duration_s" => cfg.slot_duration_s = num(key, value)?,
                "video_chunk_bits" => cfg.video_chunk_bits = num(key, value)?,
                "elevation_threshold_deg" => cfg.elevation_threshold_deg = num(key, value)?,
                "d_min_m" => cfg.d_min_m = num(key, value)?,
                "s_max_m" => cfg.s_max_m = num(key, value)?,
                "p_hat_mw" => cfg.p_hat_mw = num(key, value)?,
                "p_tilde_mw" => cfg.p_tilde_mw = num(key, value)?,
                "p_circuit_mw" => cfg.p_circuit_mw = num(key, value)?,
                "p_min_mw" => cfg.p_min_mw = num(key, value)?,
                "alpha" => cfg.alpha = num(key, value)?,
                "beta" => cfg.beta = num(key, value)?,
                "lyapunov_v" => cfg.lyapunov_v = num(key, value)?,
                "rho1" => cfg.rho1 = num(key, value)?,
                "rho2" => cfg.rho2 = num(key, value)?,
                "horizon_slots" => cfg.horizon_slots = count(key, value)?,
                "sca_max_iter" => cfg.sca_max_iter = count(key, value)?,
                "rng_seed" => {
                    cfg.rng_seed = match value {
                        toml::Value::Integer(i) if *i >= 0 => *i as u64,
                        _ => {
                            return Err(ConfigError::Invalid(
                                "rng_seed must be a nonnegative integer".into(),
                            ))
                        }
                    }
                }
                "subscriber_step_m" => cfg.subscriber_step_m = num(key, value)?,
                "bitrate_unit_mode" => {
                    cfg.bitrate_unit_mode = match value {
                        toml::Value::String(s) => BitrateUnitMode::parse(s)?,
                        _ => {
                            return Err(ConfigError::Invalid(
                                "bitrate_unit_mode must be a string".into(),
                            ))
                        }
                    }
                }
                "queue_init" => cfg.queue_init = num(key, value)?,
                "circle_speed_mps" => cfg.circle_speed_mps = num(key, value)?,
                "circle_spacing_m" => cfg.circle_spacing_m = Some(num(key, value)?),
                unknown => return Err(ConfigError::UnknownKey(unknown.to_string())),
            }
        }
        if saw_dbm && saw_mw {
            return Err(ConfigError::Invalid(
                "specify noise_power_dbm or noise_power_mw, not both".into(),
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Flat key/value echo of the resolved config, mW form. Feeding these
    /// keys back through `from_str` reproduces this config exactly.
    pub fn echo(&self) -> BTreeMap<String, serde_json::Value> {
        use serde_json::json;
        let mut m = BTreeMap::new();
        m.insert("area_width_m".into(), json!(self.area_width_m));
        m.insert("area_height_m".into(), json!(self.area_height_m));
        m.insert("n_uavs".into(), json!(self.n_uavs));
        m.insert("n_subscribers".into(), json!(self.n_subscribers));
        m.insert("altitude_m".into(), json!(self.altitude_m));
        m.insert("carrier_freq_hz".into(), json!(self.carrier_freq_hz));
        m.insert("light_speed_mps".into(), json!(self.light_speed_mps));
        m.insert("ref_dist_m".into(), json!(self.ref_dist_m));
        m.insert("tx_gain".into(), json!(self.tx_gain));
        m.insert("rx_gain".into(), json!(self.rx_gain));
        m.insert("noise_power_mw".into(), json!(self.noise_power_mw));
        m.insert("bandwidth_hz".into(), json!(self.bandwidth_hz));
        m.insert("slot_duration_s".into(), json!(self.slot_duration_s));
        m.insert("video_chunk_bits".into(), json!(self.video_chunk_bits));
        m.insert(
            "elevation_threshold_deg".into(),
            json!(self.elevation_threshold_deg),
        );
        m.insert("d_min_m".into(), json!(self.d_min_m));
        m.insert("s_max_m".into(), json!(self.s_max_m));
        m.insert("p_hat_mw".into(), json!(self.p_hat_mw));
        m.insert("p_tilde_mw".into(), json!(self.p_tilde_mw));
        m.insert("p_circuit_mw".into(), json!(self.p_circuit_mw));
        m.insert("p_min_mw".into(), json!(self.p_min_mw));
        m.insert("alpha".into(), json!(self.alpha));
        m.insert("beta".into(), json!(self.beta));
        m.insert("lyapunov_v".into(), json!(self.lyapunov_v));
        m.insert("rho1".into(), json!(self.rho1));
        m.insert("rho2".into(), json!(self.rho2));
        m.insert("horizon_slots".into(), json!(self.horizon_slots));
        m.insert("sca_max_iter".into(), json!(self.sca_max_iter));
        m.insert("rng_seed".into(), json!(self.rng_seed));
        m.insert("subscriber_step_m".into(), json!(self.subscriber_step_m));
        m.insert(
            "bitrate_unit_mode".into(),
            json!(self.bitrate_unit_mode.as_str()),
        );
        m.insert("queue_init".into(), json!(self.queue_init));
        m.insert("circle_speed_mps".into(), json!(self.circle_speed_mps));
        if let Some(s) = self.circle_spacing_m {
            m.insert("circle_spacing_m".into(), json!(s));
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        WorldConfig::default().validate().unwrap();
    }

    #[test]
    fn default_noise_matches_minus_174_dbm() {
        let cfg = WorldConfig::default();
        assert!((cfg.noise_power_mw - 3.981071705534985e-18).abs() < 1e-30);
    }

    #[test]
    fn omega_matches_reference_constants() {
        let cfg = WorldConfig::default();
        assert!((cfg.omega() - 2.3737261890385256e-5).abs() < 1e-15);
    }

    #[test]
    fn los_radius_matches_reference() {
        let cfg = WorldConfig::default();
        assert!((cfg.los_radius_m() - 115.43409556278151).abs() < 1e-9);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = WorldConfig::from_str("carier_freq_hz = 4.9e9").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey(k) if k == "carier_freq_hz"));
    }

    #[test]
    fn dbm_key_converts_once() {
        let cfg = WorldConfig::from_str("noise_power_dbm = -100").unwrap();
        assert!((cfg.noise_power_mw - 1e-10).abs() < 1e-22);
    }

    #[test]
    fn both_noise_keys_rejected() {
        let err =
            WorldConfig::from_str("noise_power_dbm = -174\nnoise_power_mw = 1e-18").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
    }

    #[test]
    fn power_budget_ordering_enforced() {
        let mut cfg = WorldConfig::default();
        cfg.p_tilde_mw = 600.0;
        assert!(cfg.validate().is_err());
        cfg.p_tilde_mw = 450.0;
        cfg.p_min_mw = 440.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = WorldConfig::default();
        cfg.rho1 = 7.5;
        cfg.n_uavs = 3;
        let echo = cfg.echo();
        let text: String = echo
            .iter()
            .map(|(k, v)| {
                if v.is_string() {
                    format!("{k} = {v}\n")
                } else {
                    format!("{k} = {v}\n")
                }
            })
            .collect();
        let back = WorldConfig::from_str(&text).unwrap();
        assert_eq!(back.rho1, cfg.rho1);
        assert_eq!(back.n_uavs, cfg.n_uavs);
        assert_eq!(back.noise_power_mw, cfg.noise_power_mw);
    }

    #[test]
    fn default_circle_chord_is_quarter_km_over_n() {
        let cfg = WorldConfig::default();
        assert!((cfg.circle_chord_m() - 62.5).abs() < 1e-12);
    }
}
