use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::controller::{
    controller_step, quantize_distance, ScenarioGeometry, Snapshot, TrackPoint,
};
use crate::game::{Action, GameState, Solver};
use crate::records::{CrossingRecord, Outcome, Winner};

/// Start distances to the collision point, m. `car_m = None` runs the
/// crossing with no vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingStarts {
    pub ped_m: f64,
    pub car_m: Option<f64>,
}

/// What the pedestrian may see before choosing: everything except the
/// vehicle's committed action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingView {
    pub crossing_id: u32,
    pub step: u32,
    pub t: f64,
    pub ped_pos_m: f64,
    pub car_pos_m: Option<f64>,
    pub ped_box: i32,
    pub car_box: Option<i32>,
    /// Set once the vehicle has committed for this step.
    pub interesting: Option<bool>,
    pub state: Option<GameState>,
    pub pedestrian_passed: bool,
    pub vehicle_passed: bool,
    pub finished: bool,
    pub outcome: Option<Outcome>,
}

/// Vehicle decision for the current step, held until the pedestrian acts.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingTurn {
    pub interesting: bool,
    pub state: Option<GameState>,
    pub vehicle_action: Option<Action>,
    pub speed_multiplier: f64,
    pub warning: Option<String>,
}

/// One continuous crossing, advanced in controller periods.
///
/// Each step is split in two so the vehicle can commit before the pedestrian
/// acts: [`Crossing::commit_vehicle`] runs the controller, then
/// [`Crossing::resolve`] applies the pedestrian action, moves both agents
/// and appends a record.
#[derive(Debug, Clone)]
pub struct Crossing {
    session_id: String,
    crossing_id: u32,
    geom: ScenarioGeometry,
    solver: Arc<Solver>,
    step: u32,
    ped_d: f64,
    car_d: Option<f64>,
    track: Vec<TrackPoint>,
    pending: Option<PendingTurn>,
    records: Vec<CrossingRecord>,
    first_passer: Option<Outcome>,
    outcome: Option<Outcome>,
}

fn in_crash_window(d: f64, box_size: f64) -> bool {
    d >= -box_size && d < 2.0 * box_size
}

impl Crossing {
    pub fn new(
        session_id: impl Into<String>,
        crossing_id: u32,
        geom: ScenarioGeometry,
        solver: Arc<Solver>,
        starts: CrossingStarts,
    ) -> Result<Self, SimError> {
        geom.validate()?;
        let positive = |d: f64| d.is_finite() && d > 0.0;
        if !positive(starts.ped_m) {
            return Err(SimError::InvalidStart(format!(
                "pedestrian start {}",
                starts.ped_m
            )));
        }
        if let Some(c) = starts.car_m {
            if !positive(c) {
                return Err(SimError::InvalidStart(format!("vehicle start {c}")));
            }
            let state = GameState::new(
                quantize_distance(c, geom.car_box),
                quantize_distance(starts.ped_m, geom.ped_box),
            );
            let params = solver.params();
            if !params.contains(state) {
                return Err(SimError::InvalidStart(format!(
                    "start {state} outside solver bounds {}x{}",
                    params.max_y, params.max_x
                )));
            }
            if in_crash_window(c, geom.car_box) && in_crash_window(starts.ped_m, geom.ped_box) {
                return Err(SimError::InvalidStart(
                    "both agents start in the crash region".into(),
                ));
            }
        }

        // Pretend the pedestrian walked in at full speed so the first
        // trajectory fit has data.
        let step_len = geom.pedestrian_fast_speed * geom.controller_period;
        let track = (1..=2)
            .rev()
            .map(|n| {
                let p = geom.pedestrian_position(starts.ped_m + step_len * f64::from(n));
                TrackPoint {
                    t: -geom.controller_period * f64::from(n),
                    position: p,
                }
            })
            .collect();

        let mut crossing = Self {
            session_id: session_id.into(),
            crossing_id,
            geom,
            solver,
            step: 0,
            ped_d: starts.ped_m,
            car_d: starts.car_m,
            track,
            pending: None,
            records: Vec::new(),
            first_passer: None,
            outcome: None,
        };
        crossing.push_track_point();
        Ok(crossing)
    }

    fn t(&self) -> f64 {
        f64::from(self.step) * self.geom.controller_period
    }

    fn push_track_point(&mut self) {
        self.track.push(TrackPoint {
            t: self.t(),
            position: self.geom.pedestrian_position(self.ped_d),
        });
        let excess = self.track.len().saturating_sub(self.geom.track_window);
        self.track.drain(..excess);
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn crossing_id(&self) -> u32 {
        self.crossing_id
    }

    pub fn geometry(&self) -> &ScenarioGeometry {
        &self.geom
    }

    pub fn solver(&self) -> &Solver {
        &self.solver
    }

    pub fn pedestrian_passed(&self) -> bool {
        self.ped_d < -self.geom.ped_box
    }

    pub fn vehicle_passed(&self) -> bool {
        self.car_d.is_none_or(|d| d < -self.geom.car_box)
    }

    pub fn is_finished(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn records(&self) -> &[CrossingRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<CrossingRecord> {
        self.records
    }

    pub fn pending(&self) -> Option<&PendingTurn> {
        self.pending.as_ref()
    }

    pub fn view(&self) -> CrossingView {
        CrossingView {
            crossing_id: self.crossing_id,
            step: self.step,
            t: self.t(),
            ped_pos_m: self.ped_d,
            car_pos_m: self.car_d,
            ped_box: quantize_distance(self.ped_d, self.geom.ped_box),
            car_box: self.car_d.map(|d| quantize_distance(d, self.geom.car_box)),
            interesting: self.pending.as_ref().map(|p| p.interesting),
            state: self.pending.as_ref().and_then(|p| p.state),
            pedestrian_passed: self.pedestrian_passed(),
            vehicle_passed: self.vehicle_passed(),
            finished: self.is_finished(),
            outcome: self.outcome,
        }
    }

    /// Run the controller for the current step and hold its action. Calling
    /// again before [`Crossing::resolve`] returns the same commitment.
    pub fn commit_vehicle(&mut self, rng: &mut dyn RngCore) -> Result<&PendingTurn, SimError> {
        if self.is_finished() {
            return Err(SimError::Finished);
        }
        if self.pending.is_none() {
            let pending = match self.car_d {
                None => PendingTurn {
                    interesting: false,
                    state: None,
                    vehicle_action: None,
                    speed_multiplier: 1.0,
                    warning: None,
                },
                Some(car_d) => {
                    let snapshot = Snapshot {
                        t: self.t(),
                        tracks: std::slice::from_ref(&self.track),
                        vehicle_arc: self.geom.vehicle_arc(car_d),
                        commanded_speed: self.geom.vehicle_fast_speed,
                    };
                    let out = controller_step(&snapshot, &self.geom, &self.solver, rng);
                    PendingTurn {
                        interesting: out.info.interesting,
                        state: out.info.state,
                        vehicle_action: out.info.vehicle_action,
                        speed_multiplier: out.info.speed_multiplier,
                        warning: out.info.warning,
                    }
                }
            };
            self.pending = Some(pending);
        }
        Ok(self.pending.as_ref().expect("pending set above"))
    }

    /// Apply the pedestrian action to the committed step.
    ///
    /// `None` is only meaningful once the pedestrian has passed and has no
    /// decision left; it moves at full speed. `auto` marks an action filled in
    /// on the pedestrian's behalf.
    pub fn resolve(
        &mut self,
        ped_action: Option<Action>,
        auto: bool,
    ) -> Result<&CrossingRecord, SimError> {
        if self.is_finished() {
            return Err(SimError::Finished);
        }
        let pending = self.pending.take().ok_or(SimError::NoPendingTurn)?;
        let ped_action = if self.pedestrian_passed() {
            None
        } else {
            ped_action
        };
        let g = &self.geom;

        let mut record = CrossingRecord {
            session_id: self.session_id.clone(),
            crossing_id: self.crossing_id,
            t: self.t(),
            ped_pos_m: self.ped_d,
            car_pos_m: self.car_d,
            ped_box: quantize_distance(self.ped_d, g.ped_box),
            car_box: self.car_d.map(|d| quantize_distance(d, g.car_box)),
            interesting: pending.interesting,
            ped_action,
            car_action: pending.vehicle_action,
            speed_multiplier: pending.speed_multiplier,
            winner: Winner::Pending,
            ped_auto: auto && ped_action.is_some(),
        };

        let ped_mult = ped_action.map_or(1.0, Action::speed_multiplier);
        self.ped_d -= g.pedestrian_fast_speed * ped_mult * g.controller_period;
        if let Some(d) = self.car_d.as_mut() {
            *d -= g.vehicle_fast_speed * pending.speed_multiplier * g.controller_period;
        }
        self.step += 1;
        self.push_track_point();

        let crash = self.car_d.is_some_and(|c| {
            in_crash_window(c, self.geom.car_box) && in_crash_window(self.ped_d, self.geom.ped_box)
        });
        if self.first_passer.is_none() {
            let ped = self.pedestrian_passed();
            let car = self.car_d.is_some_and(|d| d < -self.geom.car_box);
            self.first_passer = match (ped, car) {
                (true, false) => Some(Outcome::PedestrianFirst),
                (false, true) => Some(Outcome::VehicleFirst),
                (true, true) => Some(self.simultaneous_pass_winner()),
                (false, false) => None,
            };
        }
        if crash {
            self.outcome = Some(Outcome::Crash);
        } else if self.pedestrian_passed() && self.vehicle_passed() {
            self.outcome = self.first_passer;
        }
        if let Some(o) = self.outcome {
            record.winner = o.into();
        }
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }

    /// Both cleared in the same step: the one further past, in its own
    /// boxes, went first.
    fn simultaneous_pass_winner(&self) -> Outcome {
        let ped = self.ped_d / self.geom.ped_box;
        let car = self
            .car_d
            .map_or(f64::NEG_INFINITY, |d| d / self.geom.car_box);
        if ped < car {
            Outcome::PedestrianFirst
        } else {
            Outcome::VehicleFirst
        }
    }
}

/// Chooses the pedestrian action at each step of a simulated crossing.
pub trait PedestrianDecider {
    fn decide(
        &mut self,
        view: &CrossingView,
        solver: &Solver,
        rng: &mut dyn RngCore,
    ) -> Result<Action, SimError>;
}

/// Scripted pedestrians. Outside interesting steps every policy walks FAST.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PedestrianPolicy {
    AlwaysFast,
    SlowWhenInteresting,
    /// Sample the equilibrium pedestrian strategy at the game state.
    Optimal,
    /// Like `Optimal`, but with probability `epsilon` pick uniformly at random.
    NoisyOptimal {
        epsilon: f64,
    },
}

impl PedestrianDecider for PedestrianPolicy {
    fn decide(
        &mut self,
        view: &CrossingView,
        solver: &Solver,
        rng: &mut dyn RngCore,
    ) -> Result<Action, SimError> {
        let state = match (view.interesting, view.state) {
            (Some(true), Some(s)) => s,
            _ => return Ok(Action::Fast),
        };
        let optimal = |rng: &mut dyn RngCore| -> Result<Action, SimError> {
            let eq = solver.policy(state)?;
            Ok(Action::sample(eq.p_pedestrian_slow, rng))
        };
        match *self {
            PedestrianPolicy::AlwaysFast => Ok(Action::Fast),
            PedestrianPolicy::SlowWhenInteresting => Ok(Action::Slow),
            PedestrianPolicy::Optimal => optimal(rng),
            PedestrianPolicy::NoisyOptimal { epsilon } => {
                if !(0.0..=1.0).contains(&epsilon) {
                    return Err(SimError::InvalidProbability { p: epsilon, state });
                }
                if Action::sample(epsilon, rng) == Action::Slow {
                    Ok(Action::sample(0.5, rng))
                } else {
                    optimal(rng)
                }
            }
        }
    }
}

/// Adapts a closure, such as a human prompt, into a pedestrian policy.
pub struct Interactive<F>(pub F);

impl<F: FnMut(&CrossingView) -> Action> PedestrianDecider for Interactive<F> {
    fn decide(
        &mut self,
        view: &CrossingView,
        _: &Solver,
        _: &mut dyn RngCore,
    ) -> Result<Action, SimError> {
        Ok((self.0)(view))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossingRun {
    pub records: Vec<CrossingRecord>,
    pub outcome: Outcome,
}

impl CrossingRun {
    pub fn interesting_steps(&self) -> usize {
        self.records.iter().filter(|r| r.interesting).count()
    }
}

/// Simulate one crossing to completion.
pub fn run_crossing(
    session_id: &str,
    crossing_id: u32,
    geom: &ScenarioGeometry,
    solver: Arc<Solver>,
    policy: &mut dyn PedestrianDecider,
    starts: CrossingStarts,
    rng: &mut dyn RngCore,
) -> Result<CrossingRun, SimError> {
    let mut crossing = Crossing::new(session_id, crossing_id, geom.clone(), solver, starts)?;
    while !crossing.is_finished() {
        crossing.commit_vehicle(rng)?;
        let action = if crossing.pedestrian_passed() {
            None
        } else {
            Some(policy.decide(&crossing.view(), crossing.solver(), rng)?)
        };
        crossing.resolve(action, false)?;
    }
    let outcome = crossing
        .outcome()
        .expect("finished crossing has an outcome");
    Ok(CrossingRun {
        records: crossing.into_records(),
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::game::GameParams;

    fn solver(c: f64) -> Arc<Solver> {
        Arc::new(Solver::new(GameParams::new(c).unwrap().with_bounds(120, 60)).unwrap())
    }

    #[test]
    fn unopposed_pedestrian_passes() {
        let geom = ScenarioGeometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let run = run_crossing(
            "s",
            1,
            &geom,
            solver(3.0),
            &mut PedestrianPolicy::AlwaysFast,
            CrossingStarts {
                ped_m: 6.0,
                car_m: None,
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(run.outcome, Outcome::PedestrianFirst);
        // 6.2 m at 0.2 m per step
        assert_eq!(run.records.len(), 31);
        let duration = run.records.len() as f64 * geom.controller_period;
        assert!((duration - 15.5).abs() < 1e-9);
        assert!(run
            .records
            .iter()
            .all(|r| !r.interesting && r.car_action.is_none()));
        assert_eq!(run.records.last().unwrap().winner, Winner::PedestrianFirst);
        assert!(run.records[..30]
            .iter()
            .all(|r| r.winner == Winner::Pending));
    }

    #[test]
    fn default_geometry_plays_games() {
        let geom = ScenarioGeometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let run = run_crossing(
            "s",
            1,
            &geom,
            solver(3.0),
            &mut PedestrianPolicy::Optimal,
            CrossingStarts {
                ped_m: 7.0,
                car_m: Some(4.3),
            },
            &mut rng,
        )
        .unwrap();
        assert!(run.interesting_steps() > 0);
        for w in run.records.windows(2) {
            assert!(w[1].t > w[0].t);
        }
        for r in &run.records {
            assert_eq!(r.ped_box, quantize_distance(r.ped_pos_m, geom.ped_box));
            assert_eq!(
                r.car_box,
                r.car_pos_m.map(|d| quantize_distance(d, geom.car_box))
            );
            assert_eq!(r.interesting, r.car_action.is_some());
        }
    }

    #[test]
    fn head_on_fast_crashes() {
        // Equal arrival times, neither side ever slows.
        let geom = ScenarioGeometry::default();
        let mut crossing = Crossing::new(
            "s",
            1,
            geom,
            solver(3.0),
            CrossingStarts {
                ped_m: 2.0,
                car_m: Some(1.0),
            },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        while !crossing.is_finished() {
            crossing.commit_vehicle(&mut rng).unwrap();
            crossing.pending.as_mut().unwrap().speed_multiplier = 1.0;
            crossing.resolve(Some(Action::Fast), false).unwrap();
        }
        assert_eq!(crossing.outcome(), Some(Outcome::Crash));
        assert_eq!(crossing.records().last().unwrap().winner, Winner::Crash);
    }

    #[test]
    fn commitment_is_stable_and_sequenced() {
        let mut crossing = Crossing::new(
            "s",
            1,
            ScenarioGeometry::default(),
            solver(10.0),
            CrossingStarts {
                ped_m: 7.0,
                car_m: Some(4.3),
            },
        )
        .unwrap();
        assert!(matches!(
            crossing.resolve(Some(Action::Fast), false),
            Err(SimError::NoPendingTurn)
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let first = crossing.commit_vehicle(&mut rng).unwrap().clone();
        let again = crossing.commit_vehicle(&mut rng).unwrap().clone();
        assert_eq!(first, again);
        let rec = crossing.resolve(Some(Action::Slow), true).unwrap();
        assert!(rec.ped_auto);
        assert_eq!(rec.car_action, first.vehicle_action);
    }

    #[test]
    fn rejects_bad_starts() {
        let geom = ScenarioGeometry::default();
        let bad = |ped_m, car_m| {
            Crossing::new(
                "s",
                1,
                geom.clone(),
                solver(3.0),
                CrossingStarts { ped_m, car_m },
            )
            .is_err()
        };
        assert!(bad(-1.0, None));
        assert!(bad(5.0, Some(0.0)));
        assert!(bad(5.0, Some(50.0)));
        assert!(bad(0.1, Some(0.1)));
    }

    #[test]
    fn interactive_closure() {
        let mut calls = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let run = run_crossing(
            "s",
            1,
            &ScenarioGeometry::default(),
            solver(3.0),
            &mut Interactive(|_: &CrossingView| {
                calls += 1;
                Action::Fast
            }),
            CrossingStarts {
                ped_m: 1.0,
                car_m: None,
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(run.outcome, Outcome::PedestrianFirst);
        assert_eq!(calls, run.records.len());
    }
}
