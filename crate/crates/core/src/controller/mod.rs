//! Vehicle speed controller that plays Sequential Chicken against a tracked
//! pedestrian.
//!
//! Each step predicts the pedestrian's straight-line motion, intersects it
//! with the vehicle's planned path and compares FAST-speed arrival times. When
//! the gap is below the clearance time the state is *interesting*: both
//! distances are quantized into boxes, the vehicle samples its equilibrium
//! action and a SLOW action halves the commanded speed. The path itself is
//! never modified.

mod geometry;

pub use geometry::{ScenarioGeometry, Vec2};

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{Action, Equilibrium, GameState, Solver, MIN_POSITION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("need at least 2 track points, got {0}")]
    InsufficientData(usize),
    #[error("track spans zero time")]
    DegenerateTrack,
    #[error("track timestamps are not strictly increasing")]
    NonMonotonicTrack,
    #[error("pedestrian is not moving")]
    ZeroSpeed,
    #[error("paths overlap collinearly; no unique intersection")]
    NoUniqueIntersection,
    #[error("invalid scenario geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub t: f64,
    pub position: Vec2,
}

impl TrackPoint {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self {
            t,
            position: Vec2::new(x, y),
        }
    }
}

/// Straight-line motion `origin + velocity * (t - t0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantVelocityModel {
    pub origin: Vec2,
    pub velocity: Vec2,
    pub t0: f64,
}

impl ConstantVelocityModel {
    pub fn position_at(&self, t: f64) -> Vec2 {
        self.origin + self.velocity * (t - self.t0)
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

/// Least-squares line through the last `window` track points. The model is
/// anchored at the time of the newest point.
pub fn fit_constant_velocity(
    track: &[TrackPoint],
    window: usize,
) -> Result<ConstantVelocityModel, ControllerError> {
    let pts = &track[track.len().saturating_sub(window.max(2))..];
    if pts.len() < 2 {
        return Err(ControllerError::InsufficientData(pts.len()));
    }
    let t_first = pts[0].t;
    let t_last = pts[pts.len() - 1].t;
    if pts.iter().all(|p| p.t == t_first) {
        return Err(ControllerError::DegenerateTrack);
    }
    if pts.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(ControllerError::NonMonotonicTrack);
    }
    let n = pts.len() as f64;
    let t_mean = pts.iter().map(|p| p.t).sum::<f64>() / n;
    let p_mean = pts.iter().fold(Vec2::ZERO, |acc, p| acc + p.position) * (1.0 / n);
    let mut stt = 0.0;
    let mut stp = Vec2::ZERO;
    for p in pts {
        let dt = p.t - t_mean;
        stt += dt * dt;
        stp = stp + (p.position - p_mean) * dt;
    }
    let velocity = stp * (1.0 / stt);
    Ok(ConstantVelocityModel {
        origin: p_mean + velocity * (t_last - t_mean),
        velocity,
        t0: t_last,
    })
}

/// Where the predicted pedestrian line first meets the vehicle path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathIntersection {
    pub point: Vec2,
    /// Pedestrian travel distance from the model origin.
    pub pedestrian_distance: f64,
    /// Arc length along the vehicle path from its first vertex.
    pub vehicle_arc: f64,
}

const GEOM_EPS: f64 = 1e-12;

/// Intersect the pedestrian's forward ray with the vehicle polyline.
///
/// Returns the crossing with the smallest pedestrian travel distance, `None`
/// if the ray misses the path, and an error when the ray runs along a
/// segment.
pub fn intersect_paths(
    ped: &ConstantVelocityModel,
    geom: &ScenarioGeometry,
) -> Result<Option<PathIntersection>, ControllerError> {
    let speed = ped.speed();
    if speed.is_nan() || speed <= 0.0 {
        return Err(ControllerError::ZeroSpeed);
    }
    let dir = ped.velocity * (1.0 / speed);
    let o = ped.origin;
    let mut best: Option<PathIntersection> = None;
    let mut arc = 0.0;
    for w in geom.vehicle_path.windows(2) {
        let (a, b) = (w[0], w[1]);
        let e = b - a;
        let len = e.norm();
        let denom = dir.cross(e);
        let ao = a - o;
        if denom.abs() <= GEOM_EPS * len.max(1.0) {
            // Parallel: only a problem when collinear and ahead of the ray.
            if ao.cross(dir).abs() <= 1e-9 * len.max(1.0)
                && (ao.dot(dir) >= 0.0 || (b - o).dot(dir) >= 0.0)
            {
                return Err(ControllerError::NoUniqueIntersection);
            }
        } else {
            let t = ao.cross(e) / denom;
            let u = ao.cross(dir) / denom;
            if t >= 0.0 && (-GEOM_EPS..=1.0 + GEOM_EPS).contains(&u) {
                let u = u.clamp(0.0, 1.0);
                if best.is_none_or(|b| t < b.pedestrian_distance) {
                    best = Some(PathIntersection {
                        point: a + e * u,
                        pedestrian_distance: t,
                        vehicle_arc: arc + u * len,
                    });
                }
            }
        }
        arc += len;
    }
    Ok(best)
}

pub fn time_to_point(distance: f64, fast_speed: f64) -> Result<f64, ControllerError> {
    if fast_speed.is_nan() || fast_speed <= 0.0 {
        return Err(ControllerError::InvalidArgument(format!(
            "speed must be positive, got {fast_speed}"
        )));
    }
    if distance.is_nan() || distance < 0.0 {
        return Err(ControllerError::InvalidArgument(format!(
            "distance must be non-negative, got {distance}"
        )));
    }
    Ok(distance / fast_speed)
}

/// A game is needed when the agents' arrival times differ by less than the
/// time one takes to clear the other.
pub fn is_interesting(t_vehicle: f64, t_pedestrian: f64, t_pass: f64) -> bool {
    (t_vehicle - t_pedestrian).abs() < t_pass
}

/// Box index of a distance to the collision point, clamped at the
/// lowest representable position.
pub fn quantize_distance(d: f64, box_size: f64) -> i32 {
    // The nudge keeps exact multiples such as 0.6 / 0.2 in the upper box.
    let k = (d / box_size + 1e-9).floor();
    if k < f64::from(MIN_POSITION) {
        MIN_POSITION
    } else if k > f64::from(i32::MAX) {
        i32::MAX
    } else {
        k as i32
    }
}

/// Latest sensor state at a controller update.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub t: f64,
    /// One track per detected pedestrian; only the first is used.
    pub tracks: &'a [Vec<TrackPoint>],
    /// Distance travelled along the planned path, m.
    pub vehicle_arc: f64,
    /// Speed command before modulation, m/s.
    pub commanded_speed: f64,
}

/// Everything the controller decided at one step, kept as a log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameInfo {
    pub t: f64,
    pub interesting: bool,
    pub state: Option<GameState>,
    pub vehicle_distance: Option<f64>,
    pub pedestrian_distance: Option<f64>,
    pub equilibrium: Option<Equilibrium>,
    pub vehicle_action: Option<Action>,
    pub speed_multiplier: f64,
    pub warning: Option<String>,
}

impl GameInfo {
    fn idle(t: f64) -> Self {
        Self {
            t,
            interesting: false,
            state: None,
            vehicle_distance: None,
            pedestrian_distance: None,
            equilibrium: None,
            vehicle_action: None,
            speed_multiplier: 1.0,
            warning: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub speed_command: f64,
    pub info: GameInfo,
}

/// One controller update.
///
/// Solver failures never stop the loop: the vehicle falls back to the SLOW
/// multiplier and the failure is recorded as a warning.
pub fn controller_step<R: Rng + ?Sized>(
    snapshot: &Snapshot<'_>,
    geom: &ScenarioGeometry,
    solver: &Solver,
    rng: &mut R,
) -> StepOutput {
    let mut info = GameInfo::idle(snapshot.t);
    let finish = |info: GameInfo| StepOutput {
        speed_command: snapshot.commanded_speed * info.speed_multiplier,
        info,
    };

    let Some(track) = snapshot.tracks.first() else {
        return finish(info);
    };
    if snapshot.tracks.len() > 1 {
        warn!(
            "{} pedestrian tracks at t={}; using the first",
            snapshot.tracks.len(),
            snapshot.t
        );
        info.warning = Some(format!(
            "ignored {} extra tracks",
            snapshot.tracks.len() - 1
        ));
    }

    let model = match fit_constant_velocity(track, geom.track_window) {
        Ok(m) => m,
        Err(e) => {
            info.warning = Some(e.to_string());
            return finish(info);
        }
    };
    // Re-anchor the prediction at the snapshot time.
    let ped = ConstantVelocityModel {
        origin: model.position_at(snapshot.t),
        t0: snapshot.t,
        ..model
    };
    let hit = match intersect_paths(&ped, geom) {
        Ok(Some(hit)) => hit,
        Ok(None) => return finish(info),
        Err(e) => {
            warn!("t={}: {e}", snapshot.t);
            info.warning = Some(e.to_string());
            return finish(info);
        }
    };

    let d_vehicle = hit.vehicle_arc - snapshot.vehicle_arc;
    let d_ped = hit.pedestrian_distance;
    info.vehicle_distance = Some(d_vehicle);
    info.pedestrian_distance = Some(d_ped);
    if d_vehicle < 0.0 {
        return finish(info);
    }
    let t_vehicle = d_vehicle / geom.vehicle_fast_speed;
    let t_ped = d_ped / geom.pedestrian_fast_speed;
    if !is_interesting(t_vehicle, t_ped, geom.t_pass()) {
        return finish(info);
    }

    info.interesting = true;
    let state = GameState::new(
        quantize_distance(d_vehicle, geom.car_box),
        quantize_distance(d_ped, geom.ped_box),
    );
    info.state = Some(state);
    match solver.policy(state) {
        Ok(eq) => {
            let action = Action::sample(eq.p_vehicle_slow, rng);
            info.equilibrium = Some(eq);
            info.vehicle_action = Some(action);
            info.speed_multiplier = action.speed_multiplier();
        }
        Err(e) => {
            warn!(
                "t={}: solver failed at {state}: {e}; slowing down",
                snapshot.t
            );
            info.warning = Some(e.to_string());
            info.speed_multiplier = Action::Slow.speed_multiplier();
        }
    }
    finish(info)
}
