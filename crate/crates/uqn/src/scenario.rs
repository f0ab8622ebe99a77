//! World state: air-to-ground channel, SINR/bitrate evaluation, subscriber
//! mobility, and kinematic feasibility checks.

use crate::config::WorldConfig;
use rand::Rng;
use serde::Serialize;

/// 2D point/vector in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn dist(self, o: Vec2) -> f64 {
        self.sub(o).norm()
    }

    pub fn dist2(self, o: Vec2) -> f64 {
        self.sub(o).norm2()
    }
}

/// One relay UAV: horizontal position and current transmit power.
#[derive(Debug, Clone, Serialize)]
pub struct UavState {
    pub id: usize,
    pub position: Vec2,
    pub power_mw: f64,
}

/// One ground subscriber.
#[derive(Debug, Clone, Serialize)]
pub struct SubscriberState {
    pub id: usize,
    pub position: Vec2,
    /// Required playback bitrate R_i, bps/Hz.
    pub required_bitrate: f64,
    /// Threshold on the time-averaged achievable bitrate, bps/Hz.
    pub bitrate_threshold: f64,
}

/// Candidate required playback bitrates assigned per subscriber at setup.
pub const REQUIRED_BITRATE_CHOICES: [f64; 2] = [0.0316, 0.0154];

/// Serving relation between subscribers and UAVs: every subscriber selects
/// at most one UAV and every UAV serves at most one subscriber.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Association {
    serving: Vec<Option<usize>>,
    n_uavs: usize,
}

impl Association {
    pub fn empty(n_subscribers: usize, n_uavs: usize) -> Self {
        Self {
            serving: vec![None; n_subscribers],
            n_uavs,
        }
    }

    /// Marks subscriber `i` as served by UAV `k`. Panics if either side is
    /// already taken, which would break the at-most-one matching.
    pub fn serve(&mut self, i: usize, k: usize) {
        assert!(k < self.n_uavs, "uav index out of range");
        assert!(self.serving[i].is_none(), "subscriber already served");
        assert!(
            self.subscriber_of(k).is_none(),
            "uav already serves a subscriber"
        );
        self.serving[i] = Some(k);
    }

    pub fn uav_of(&self, i: usize) -> Option<usize> {
        self.serving[i]
    }

    pub fn subscriber_of(&self, k: usize) -> Option<usize> {
        self.serving.iter().position(|&s| s == Some(k))
    }

    pub fn n_subscribers(&self) -> usize {
        self.serving.len()
    }

    pub fn n_uavs(&self) -> usize {
        self.n_uavs
    }

    pub fn served_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.serving
            .iter()
            .enumerate()
            .filter_map(|(i, k)| k.map(|k| (i, k)))
    }

    pub fn n_served(&self) -> usize {
        self.serving.iter().filter(|s| s.is_some()).count()
    }

    /// Binary matrix view, subscribers as rows.
    pub fn matrix(&self) -> Vec<Vec<u8>> {
        let mut m = vec![vec![0u8; self.n_uavs]; self.serving.len()];
        for (i, k) in self.served_pairs() {
            m[i][k] = 1;
        }
        m
    }

    /// Checks that every served pair satisfies the LoS condition.
    pub fn los_valid(&self, uavs: &[UavState], subs: &[SubscriberState], cfg: &WorldConfig) -> bool {
        self.served_pairs()
            .all(|(i, k)| los_feasible(uavs[k].position, subs[i].position, cfg))
    }
}

/// Free-space channel gain `ω / (H² + ‖q − s‖²)`.
pub fn channel_gain(uav_pos: Vec2, sub_pos: Vec2, cfg: &WorldConfig) -> f64 {
    cfg.omega() / (cfg.altitude_m.powi(2) + uav_pos.dist2(sub_pos))
}

/// Whether the horizontal distance lies inside the LoS disc `H / tan θ`.
pub fn los_feasible(uav_pos: Vec2, sub_pos: Vec2, cfg: &WorldConfig) -> bool {
    uav_pos.dist(sub_pos) <= cfg.los_radius_m()
}

/// SINR experienced by subscriber `sub_i` when listening to UAV `uav_k`,
/// with every other UAV contributing interference.
pub fn sinr(
    sub_i: usize,
    uav_k: usize,
    uavs: &[UavState],
    subs: &[SubscriberState],
    cfg: &WorldConfig,
) -> f64 {
    let s = subs[sub_i].position;
    let signal = uavs[uav_k].power_mw * channel_gain(uavs[uav_k].position, s, cfg);
    let interference: f64 = uavs
        .iter()
        .filter(|u| u.id != uavs[uav_k].id)
        .map(|u| u.power_mw * channel_gain(u.position, s, cfg))
        .sum();
    signal / (cfg.noise_power_mw + interference)
}

/// Spectral efficiency of the (i, k) link, `log2(1 + sinr_ik)`.
pub fn pair_rate(
    sub_i: usize,
    uav_k: usize,
    uavs: &[UavState],
    subs: &[SubscriberState],
    cfg: &WorldConfig,
) -> f64 {
    (1.0 + sinr(sub_i, uav_k, uavs, subs, cfg)).log2()
}

/// Achievable bitrate of subscriber `i` under the given association;
/// zero when unassociated.
pub fn achievable_rate(
    sub_i: usize,
    assoc: &Association,
    uavs: &[UavState],
    subs: &[SubscriberState],
    cfg: &WorldConfig,
) -> f64 {
    match assoc.uav_of(sub_i) {
        Some(k) => pair_rate(sub_i, k, uavs, subs, cfg),
        None => 0.0,
    }
}

/// Interference-free rate at nadir under maximum instantaneous power: an
/// upper bound on any achievable rate, used as the auxiliary-variable cap.
pub fn rate_upper_bound(cfg: &WorldConfig) -> f64 {
    let gain0 = cfg.omega() / cfg.altitude_m.powi(2);
    (1.0 + cfg.p_hat_mw * gain0 / cfg.noise_power_mw).log2()
}

fn reflect_into(mut v: f64, hi: f64) -> f64 {
    // One reflection per pass; loops only for steps longer than the area.
    loop {
        if v < 0.0 {
            v = -v;
        } else if v > hi {
            v = 2.0 * hi - v;
        } else {
            return v;
        }
    }
}

/// Displaces every subscriber by an independent uniform-direction step of
/// `subscriber_step_m`, reflecting at the area boundary.
pub fn step_subscriber_mobility<R: Rng>(
    subs: &mut [SubscriberState],
    cfg: &WorldConfig,
    rng: &mut R,
) {
    for sub in subs.iter_mut() {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let step = cfg.subscriber_step_m;
        let next = sub
            .position
            .add(Vec2::new(step * angle.cos(), step * angle.sin()));
        sub.position = Vec2::new(
            reflect_into(next.x, cfg.area_width_m),
            reflect_into(next.y, cfg.area_height_m),
        );
    }
}

/// A violated kinematic constraint, reported rather than thrown.
#[derive(Debug, Clone, PartialEq)]
pub enum KinematicViolation {
    /// UAVs `k` and `j` are closer than the safety distance.
    Collision { k: usize, j: usize, distance_m: f64 },
    /// UAV `k` moved farther than allowed in one slot.
    Speed { k: usize, displacement_m: f64 },
}

pub const KINEMATIC_TOL_M: f64 = 1e-6;

/// Checks pairwise safety distances of `next` and per-UAV displacements from
/// `prev`, each within a 1e-6 m tolerance.
pub fn validate_kinematics(
    prev: &[UavState],
    next: &[UavState],
    cfg: &WorldConfig,
) -> Vec<KinematicViolation> {
    assert_eq!(prev.len(), next.len(), "uav list lengths differ");
    let mut violations = Vec::new();
    for k in 0..next.len() {
        for j in (k + 1)..next.len() {
            let d = next[k].position.dist(next[j].position);
            if d < cfg.d_min_m - KINEMATIC_TOL_M {
                violations.push(KinematicViolation::Collision {
                    k,
                    j,
                    distance_m: d,
                });
            }
        }
        let moved = next[k].position.dist(prev[k].position);
        if moved > cfg.s_max_m + KINEMATIC_TOL_M {
            violations.push(KinematicViolation::Speed {
                k,
                displacement_m: moved,
            });
        }
    }
    violations
}

/// Samples initial subscriber positions uniformly in the area and assigns
/// each a required bitrate drawn from the candidate set.
pub fn sample_subscribers<R: Rng>(cfg: &WorldConfig, rng: &mut R) -> Vec<SubscriberState> {
    (0..cfg.n_subscribers)
        .map(|id| {
            let position = Vec2::new(
                rng.gen_range(0.0..=cfg.area_width_m),
                rng.gen_range(0.0..=cfg.area_height_m),
            );
            let required = REQUIRED_BITRATE_CHOICES[rng.gen_range(0..REQUIRED_BITRATE_CHOICES.len())];
            SubscriberState {
                id,
                position,
                required_bitrate: required,
                bitrate_threshold: required,
            }
        })
        .collect()
}

/// Samples UAV positions uniformly in the area, rejecting draws that come
/// closer than `d_min` to an already placed UAV (at most 1000 attempts each).
pub fn sample_uav_positions<R: Rng>(cfg: &WorldConfig, rng: &mut R) -> Result<Vec<Vec2>, String> {
    let mut placed: Vec<Vec2> = Vec::with_capacity(cfg.n_uavs);
    for _ in 0..cfg.n_uavs {
        let mut ok = None;
        for _attempt in 0..1000 {
            let cand = Vec2::new(
                rng.gen_range(0.0..=cfg.area_width_m),
                rng.gen_range(0.0..=cfg.area_height_m),
            );
            if placed.iter().all(|p| p.dist(cand) >= cfg.d_min_m) {
                ok = Some(cand);
                break;
            }
        }
        match ok {
            Some(p) => placed.push(p),
            None => {
                return Err(format!(
                    "could not place {} UAVs at pairwise distance {} m in a {}x{} m area",
                    cfg.n_uavs, cfg.d_min_m, cfg.area_width_m, cfg.area_height_m
                ))
            }
        }
    }
    Ok(placed)
}
