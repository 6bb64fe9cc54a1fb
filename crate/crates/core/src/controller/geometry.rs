use std::ops::{Add, Mul, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ControllerError;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector at `deg` degrees from the +x axis.
    pub fn from_heading_deg(deg: f64) -> Self {
        let r = deg.to_radians();
        Self::new(r.cos(), r.sin())
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

fn default_vehicle_path() -> Vec<Vec2> {
    vec![Vec2::new(-10.0, 0.0), Vec2::new(10.0, 0.0)]
}

/// Scenario layout and agent constants, shared by the controller, the
/// simulator and the session service.
///
/// Loaded from a TOML key-value file; every key is optional and falls back to
/// the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioGeometry {
    /// Planned vehicle path, map-frame meters.
    pub vehicle_path: Vec<Vec2>,
    /// Vehicle FAST speed, m/s.
    pub vehicle_fast_speed: f64,
    /// Pedestrian FAST speed, m/s.
    pub pedestrian_fast_speed: f64,
    /// Pedestrian box length, m.
    pub ped_box: f64,
    /// Vehicle box length, m.
    pub car_box: f64,
    /// Arrival-time gap below which the state is interesting. Derived from
    /// the footprints when absent.
    pub pass_clearance_time: Option<f64>,
    pub vehicle_length: f64,
    pub pedestrian_diameter: f64,
    /// Number of recent track samples used for the trajectory fit.
    pub track_window: usize,
    /// Controller update period, s.
    pub controller_period: f64,
    /// Arc length along `vehicle_path` where the pedestrian's line crosses it.
    pub crossing_arc: f64,
    /// Direction of pedestrian travel, degrees from +x.
    pub pedestrian_heading_deg: f64,
}

impl Default for ScenarioGeometry {
    fn default() -> Self {
        Self {
            vehicle_path: default_vehicle_path(),
            vehicle_fast_speed: 0.2,
            pedestrian_fast_speed: 0.4,
            ped_box: 0.2,
            car_box: 0.08,
            pass_clearance_time: None,
            vehicle_length: 1.6,
            pedestrian_diameter: 0.5,
            track_window: 10,
            controller_period: 0.5,
            crossing_arc: 10.0,
            pedestrian_heading_deg: 90.0,
        }
    }
}

impl ScenarioGeometry {
    pub fn from_toml_str(text: &str) -> Result<Self, ControllerError> {
        let geom: Self =
            toml::from_str(text).map_err(|e| ControllerError::InvalidGeometry(e.to_string()))?;
        geom.validate()?;
        Ok(geom)
    }

    pub fn load(path: &Path) -> Result<Self, ControllerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ControllerError::InvalidGeometry(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("geometry serializes")
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |msg: String| Err(ControllerError::InvalidGeometry(msg));
        if self.vehicle_path.len() < 2 {
            return bad("vehicle_path needs at least 2 vertices".into());
        }
        if !self.vehicle_path.iter().all(|p| p.is_finite()) {
            return bad("vehicle_path has non-finite vertices".into());
        }
        for (name, v) in [
            ("vehicle_fast_speed", self.vehicle_fast_speed),
            ("pedestrian_fast_speed", self.pedestrian_fast_speed),
            ("ped_box", self.ped_box),
            ("car_box", self.car_box),
            ("vehicle_length", self.vehicle_length),
            ("pedestrian_diameter", self.pedestrian_diameter),
            ("controller_period", self.controller_period),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if let Some(t) = self.pass_clearance_time {
            if !(t.is_finite() && t > 0.0) {
                return bad(format!("pass_clearance_time must be positive, got {t}"));
            }
        }
        if self.track_window < 2 {
            return bad(format!(
                "track_window must be at least 2, got {}",
                self.track_window
            ));
        }
        let len = self.path_length();
        if !(0.0..=len).contains(&self.crossing_arc) {
            return bad(format!(
                "crossing_arc {} outside path of length {len}",
                self.crossing_arc
            ));
        }
        Ok(())
    }

    /// Time for one agent to completely clear the other.
    pub fn t_pass(&self) -> f64 {
        self.pass_clearance_time.unwrap_or_else(|| {
            (self.vehicle_length + self.pedestrian_diameter)
                / self.vehicle_fast_speed.min(self.pedestrian_fast_speed)
        })
    }

    pub fn path_length(&self) -> f64 {
        self.vehicle_path
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .sum()
    }

    /// Point on the vehicle path at arc length `s`, extrapolated linearly
    /// beyond either end.
    pub fn point_at_arc(&self, s: f64) -> Vec2 {
        let path = &self.vehicle_path;
        let mut acc = 0.0;
        for (i, w) in path.windows(2).enumerate() {
            let seg = w[1] - w[0];
            let len = seg.norm();
            if s <= acc + len || i + 2 == path.len() {
                if len == 0.0 {
                    return w[0];
                }
                return w[0] + seg * ((s - acc) / len);
            }
            acc += len;
        }
        path[0]
    }

    pub fn collision_point(&self) -> Vec2 {
        self.point_at_arc(self.crossing_arc)
    }

    pub fn pedestrian_heading(&self) -> Vec2 {
        Vec2::from_heading_deg(self.pedestrian_heading_deg)
    }

    /// Pedestrian position given its distance to the collision point.
    pub fn pedestrian_position(&self, distance_to_collision: f64) -> Vec2 {
        self.collision_point() - self.pedestrian_heading() * distance_to_collision
    }

    /// Vehicle arc position given its distance to the collision point.
    pub fn vehicle_arc(&self, distance_to_collision: f64) -> f64 {
        self.crossing_arc - distance_to_collision
    }
}
