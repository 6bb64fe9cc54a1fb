use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{
    experimenter_feedback_update, run_crossing, CrossingStarts, FieldIssue, PedestrianDecider,
    SimError,
};
use crate::controller::ScenarioGeometry;
use crate::game::{GameParams, Solver};
use crate::records::{CrossingRecord, Outcome};

/// Shape of a crossing session: game constants, layout, start distances and
/// the experimenter feedback rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Crash penalty, s.
    pub crash_cost: f64,
    /// Cost per turn, s.
    pub turn_cost: f64,
    pub geometry: ScenarioGeometry,
    pub crossings_total: u32,
    /// Pedestrian start distances are drawn uniformly from this range, m.
    pub ped_start_min: f64,
    pub ped_start_max: f64,
    /// Vehicle start distance for the first crossing, m.
    pub car_start: f64,
    pub feedback_delta: f64,
    pub feedback_min: f64,
    pub feedback_max: f64,
    /// Seconds a live client may take per turn before the pedestrian is
    /// auto-played FAST. Untimed when absent.
    pub turn_timeout_s: Option<f64>,
    /// Session seed; drawn at creation when absent.
    pub seed: Option<u64>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            crash_cost: 3.0,
            turn_cost: 1.0,
            geometry: ScenarioGeometry::default(),
            crossings_total: 20,
            ped_start_min: 6.0,
            ped_start_max: 8.0,
            car_start: 4.3,
            feedback_delta: 0.25,
            feedback_min: 2.0,
            feedback_max: 8.0,
            turn_timeout_s: None,
            seed: None,
        }
    }
}

impl SessionConfig {
    /// Every problem with the configuration, by field.
    pub fn issues(&self) -> Vec<FieldIssue> {
        let mut out = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                out.push(FieldIssue::new(name, format!("must be positive, got {v}")));
            }
        };
        positive("crash_cost", self.crash_cost);
        positive("turn_cost", self.turn_cost);
        positive("ped_start_min", self.ped_start_min);
        positive("ped_start_max", self.ped_start_max);
        positive("car_start", self.car_start);
        positive("feedback_delta", self.feedback_delta);
        positive("feedback_min", self.feedback_min);
        positive("feedback_max", self.feedback_max);
        if let Some(t) = self.turn_timeout_s {
            positive("turn_timeout_s", t);
        }
        if let Err(e) = self.geometry.validate() {
            out.push(FieldIssue::new("geometry", e.to_string()));
        }
        if self.crossings_total == 0 {
            out.push(FieldIssue::new("crossings_total", "must be at least 1"));
        }
        if self.ped_start_min > self.ped_start_max {
            out.push(FieldIssue::new("ped_start_min", "exceeds ped_start_max"));
        }
        if self.feedback_min > self.feedback_max {
            out.push(FieldIssue::new("feedback_min", "exceeds feedback_max"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(SimError::InvalidConfig(issues))
        }
    }

    /// Game parameters with board bounds wide enough for every start this
    /// session can produce.
    pub fn game_params(&self) -> Result<GameParams, SimError> {
        self.validate()?;
        let g = &self.geometry;
        let far_car = self.car_start.max(self.feedback_max);
        let max_y = (far_car / g.car_box).ceil() as i32 + 2;
        let max_x = (self.ped_start_max / g.ped_box).ceil() as i32 + 2;
        let params = GameParams::new(self.crash_cost)?
            .with_turn_cost(self.turn_cost)
            .with_bounds(max_y.max(2), max_x.max(2));
        params.validate()?;
        Ok(params)
    }

    pub fn solver(&self) -> Result<Arc<Solver>, SimError> {
        Ok(Arc::new(Solver::new(self.game_params()?)?))
    }

    pub fn draw_ped_start<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.ped_start_min == self.ped_start_max {
            self.ped_start_min
        } else {
            rng.gen_range(self.ped_start_min..=self.ped_start_max)
        }
    }

    pub fn next_car_start(&self, current: f64, outcome: Outcome) -> Result<f64, SimError> {
        experimenter_feedback_update(
            current,
            outcome,
            self.feedback_delta,
            (self.feedback_min, self.feedback_max),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingSummary {
    pub crossing_id: u32,
    pub ped_start: f64,
    pub car_start: f64,
    pub outcome: Outcome,
    pub steps: usize,
    pub interesting_steps: usize,
}

impl CrossingSummary {
    pub fn interesting_fraction(&self) -> f64 {
        self.interesting_steps as f64 / self.steps.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfPlayRun {
    pub records: Vec<CrossingRecord>,
    pub crossings: Vec<CrossingSummary>,
}

impl SelfPlayRun {
    pub fn interesting_fraction(&self) -> f64 {
        let n = self.records.iter().filter(|r| r.interesting).count();
        n as f64 / self.records.len().max(1) as f64
    }

    pub fn pedestrian_wins(&self) -> usize {
        self.crossings
            .iter()
            .filter(|c| c.outcome == Outcome::PedestrianFirst)
            .count()
    }
}

/// A whole session against a scripted pedestrian, with the vehicle start
/// moved by the feedback rule after every crossing.
pub fn run_self_play(
    config: &SessionConfig,
    session_id: &str,
    policy: &mut dyn PedestrianDecider,
    rng: &mut dyn RngCore,
) -> Result<SelfPlayRun, SimError> {
    let solver = config.solver()?;
    let mut car_start = config.car_start;
    let mut records = Vec::new();
    let mut crossings = Vec::new();
    for crossing_id in 1..=config.crossings_total {
        let ped_start = config.draw_ped_start(rng);
        let starts = CrossingStarts {
            ped_m: ped_start,
            car_m: Some(car_start),
        };
        let run = run_crossing(
            session_id,
            crossing_id,
            &config.geometry,
            Arc::clone(&solver),
            policy,
            starts,
            rng,
        )?;
        crossings.push(CrossingSummary {
            crossing_id,
            ped_start,
            car_start,
            outcome: run.outcome,
            steps: run.records.len(),
            interesting_steps: run.interesting_steps(),
        });
        car_start = config.next_car_start(car_start, run.outcome)?;
        records.extend(run.records);
    }
    Ok(SelfPlayRun { records, crossings })
}

/// Least-squares trend of a per-crossing series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub n: usize,
    /// Change per crossing.
    pub slope: f64,
    pub first_half_mean: f64,
    pub second_half_mean: f64,
}

pub fn interesting_trend(series: &[f64]) -> Trend {
    let n = series.len();
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let xbar = (n as f64 - 1.0) / 2.0;
    let ybar = mean(series);
    let (sxy, sxx) = series
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(sxy, sxx), (i, y)| {
            let dx = i as f64 - xbar;
            (sxy + dx * (y - ybar), sxx + dx * dx)
        });
    Trend {
        n,
        slope: if sxx > 0.0 { sxy / sxx } else { 0.0 },
        first_half_mean: mean(&series[..n / 2]),
        second_half_mean: mean(&series[n / 2..]),
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::sim::PedestrianPolicy;

    #[test]
    fn default_config_is_valid_and_covers_starts() {
        let c = SessionConfig::default();
        assert!(c.issues().is_empty());
        let p = c.game_params().unwrap();
        assert_eq!(p.max_y, 102);
        assert_eq!(p.max_x, 42);
    }

    #[test]
    fn config_field_diagnostics() {
        let c = SessionConfig {
            crossings_total: 0,
            car_start: -1.0,
            geometry: ScenarioGeometry {
                vehicle_fast_speed: -0.2,
                ..Default::default()
            },
            ..Default::default()
        };
        let fields: Vec<String> = c.issues().into_iter().map(|i| i.field).collect();
        assert_eq!(fields, vec!["car_start", "geometry", "crossings_total"]);
    }

    #[test]
    fn config_json_partial() {
        let c: SessionConfig =
            serde_json::from_str(r#"{"crossings_total": 1, "geometry": {"car_box": 0.1}}"#)
                .unwrap();
        assert_eq!(c.crossings_total, 1);
        assert_eq!(c.geometry.car_box, 0.1);
        assert!(serde_json::from_str::<SessionConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn self_play_session_shape() {
        let config = SessionConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let run = run_self_play(&config, "self", &mut PedestrianPolicy::Optimal, &mut rng).unwrap();
        assert_eq!(run.crossings.len(), 20);
        let ids: Vec<u32> = crate::records::group_by_crossing(&run.records)
            .iter()
            .map(|g| g[0].crossing_id)
            .collect();
        assert_eq!(ids, (1..=20).collect::<Vec<_>>());
        let frac = run.interesting_fraction();
        assert!((0.01..=1.0).contains(&frac), "interesting fraction {frac}");
        for w in run.crossings.windows(2) {
            let expect = config.next_car_start(w[0].car_start, w[0].outcome).unwrap();
            assert_eq!(w[1].car_start, expect);
        }
    }

    #[test]
    fn trend_of_line() {
        let t = interesting_trend(&[0.1, 0.2, 0.3, 0.4]);
        assert!((t.slope - 0.1).abs() < 1e-12);
        assert!((t.first_half_mean - 0.15).abs() < 1e-12);
        assert_eq!(interesting_trend(&[]).slope, 0.0);
    }
}
