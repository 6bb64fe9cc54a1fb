//! Sequential Chicken game model.
//!
//! Two agents approach a shared collision point on a grid of boxes. On every
//! turn both pick [`Action::Slow`] (one box) or [`Action::Fast`] (two boxes)
//! simultaneously. Utilities are measured in seconds: each turn costs
//! `turn_cost` to every agent that has not yet passed the collision point, and
//! both agents occupying boxes `{0, 1}` at once is a crash worth `-crash_cost`.
//!
//! The value of a state is the expected utility pair under the Nash
//! equilibrium of the 2x2 stage game whose entries are the successor values.

mod curves;
mod solver;
mod stage;

pub use curves::{cumulative_no_yield, yield_curve_model, CurvePoint, SurvivalPoint};
pub use solver::{build_stage_matrix, game_value, policy, terminal_value, Solver};
pub use stage::{deviation_regret, select_prefer_fast, solve_stage_game, TIE_TOLERANCE};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default board bound in boxes along each path.
pub const DEFAULT_MAX_BOXES: i32 = 64;

/// Lowest representable position: a FAST move from box 0.
pub const MIN_POSITION: i32 = -2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Slow,
    Fast,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Slow, Action::Fast];

    /// Boxes covered in one turn.
    pub fn displacement(self) -> i32 {
        match self {
            Action::Slow => 1,
            Action::Fast => 2,
        }
    }

    /// Row/column index in a [`PayoffMatrix`].
    pub fn index(self) -> usize {
        match self {
            Action::Slow => 0,
            Action::Fast => 1,
        }
    }

    /// Speed multiplier applied by a controller acting on this decision.
    pub fn speed_multiplier(self) -> f64 {
        match self {
            Action::Slow => 0.5,
            Action::Fast => 1.0,
        }
    }

    /// Draw an action that is SLOW with probability `p_slow`.
    pub fn sample<R: rand::Rng + ?Sized>(p_slow: f64, rng: &mut R) -> Action {
        if rng.gen::<f64>() < p_slow {
            Action::Slow
        } else {
            Action::Fast
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Slow => f.write_str("SLOW"),
            Action::Fast => f.write_str("FAST"),
        }
    }
}

/// Box distances to the collision point: `y` for the vehicle, `x` for the
/// pedestrian. Positions count down; `<= -1` means the agent has passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GameState {
    pub y: i32,
    pub x: i32,
}

impl GameState {
    pub fn new(y: i32, x: i32) -> Self {
        Self { y, x }
    }

    pub fn symmetric(k: i32) -> Self {
        Self { y: k, x: k }
    }

    pub fn is_crash(self) -> bool {
        (0..=1).contains(&self.y) && (0..=1).contains(&self.x)
    }

    pub fn vehicle_passed(self) -> bool {
        self.y <= -1
    }

    pub fn pedestrian_passed(self) -> bool {
        self.x <= -1
    }

    /// Crash, or at least one agent past the collision point.
    pub fn is_terminal(self) -> bool {
        self.is_crash() || self.vehicle_passed() || self.pedestrian_passed()
    }

    pub fn successor(self, vehicle: Action, pedestrian: Action) -> Self {
        Self {
            y: self.y - vehicle.displacement(),
            x: self.x - pedestrian.displacement(),
        }
    }

    /// Exchange the roles of the two agents.
    pub fn swapped(self) -> Self {
        Self {
            y: self.x,
            x: self.y,
        }
    }
}

impl fmt::Display for GameState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(y={}, x={})", self.y, self.x)
    }
}

/// How the recursive solver resolves stage games whose equilibrium is not
/// unique in the generic sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Ties are broken by an infinitesimal preference for FAST, and a stage
    /// from which every joint action crashes is played uniformly.
    #[default]
    PreferFast,
    /// Any degenerate stage game is an error carrying the offending state.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    /// Magnitude of the crash penalty in seconds; the applied utility is negative.
    pub crash_cost: f64,
    /// Seconds charged per turn to each agent still approaching.
    pub turn_cost: f64,
    pub max_y: i32,
    pub max_x: i32,
    #[serde(default)]
    pub selection: Selection,
}

impl GameParams {
    pub fn new(crash_cost: f64) -> Result<Self, GameError> {
        let params = Self {
            crash_cost,
            ..Self::default()
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_turn_cost(mut self, turn_cost: f64) -> Self {
        self.turn_cost = turn_cost;
        self
    }

    pub fn with_bounds(mut self, max_y: i32, max_x: i32) -> Self {
        self.max_y = max_y;
        self.max_x = max_x;
        self
    }

    pub fn with_selection(mut self, selection: Selection) -> Self {
        self.selection = selection;
        self
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if !(self.crash_cost.is_finite() && self.crash_cost > 0.0) {
            return Err(GameError::InvalidParams(format!(
                "crash_cost must be positive and finite, got {}",
                self.crash_cost
            )));
        }
        if !(self.turn_cost.is_finite() && self.turn_cost > 0.0) {
            return Err(GameError::InvalidParams(format!(
                "turn_cost must be positive and finite, got {}",
                self.turn_cost
            )));
        }
        if self.max_y < 2 || self.max_x < 2 {
            return Err(GameError::InvalidParams(format!(
                "board bounds must be at least 2, got {}x{}",
                self.max_y, self.max_x
            )));
        }
        Ok(())
    }

    pub fn contains(&self, state: GameState) -> bool {
        (MIN_POSITION..=self.max_y).contains(&state.y)
            && (MIN_POSITION..=self.max_x).contains(&state.x)
    }
}

impl Default for GameParams {
    fn default() -> Self {
        Self {
            crash_cost: 3.0,
            turn_cost: 1.0,
            max_y: DEFAULT_MAX_BOXES,
            max_x: DEFAULT_MAX_BOXES,
            selection: Selection::PreferFast,
        }
    }
}

/// Expected utilities in seconds, `(vehicle, pedestrian)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UtilityPair {
    pub vehicle: f64,
    pub pedestrian: f64,
}

impl UtilityPair {
    pub const ZERO: UtilityPair = UtilityPair {
        vehicle: 0.0,
        pedestrian: 0.0,
    };

    pub fn new(vehicle: f64, pedestrian: f64) -> Self {
        Self {
            vehicle,
            pedestrian,
        }
    }

    pub fn swapped(self) -> Self {
        Self {
            vehicle: self.pedestrian,
            pedestrian: self.vehicle,
        }
    }

    pub fn is_finite(self) -> bool {
        self.vehicle.is_finite() && self.pedestrian.is_finite()
    }
}

impl std::ops::Add for UtilityPair {
    type Output = UtilityPair;

    fn add(self, rhs: UtilityPair) -> UtilityPair {
        UtilityPair::new(self.vehicle + rhs.vehicle, self.pedestrian + rhs.pedestrian)
    }
}

impl fmt::Display for UtilityPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6})", self.vehicle, self.pedestrian)
    }
}

/// Stage game payoffs indexed `[vehicle action][pedestrian action]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    pub entries: [[UtilityPair; 2]; 2],
}

impl PayoffMatrix {
    pub fn new(entries: [[UtilityPair; 2]; 2]) -> Self {
        Self { entries }
    }

    /// Build from `(vehicle, pedestrian)` tuples, rows = vehicle SLOW/FAST.
    pub fn from_pairs(pairs: [[(f64, f64); 2]; 2]) -> Self {
        let e = |i: usize, j: usize| UtilityPair::new(pairs[i][j].0, pairs[i][j].1);
        Self::new([[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]])
    }

    pub fn get(&self, vehicle: Action, pedestrian: Action) -> UtilityPair {
        self.entries[vehicle.index()][pedestrian.index()]
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().flatten().all(|u| u.is_finite())
    }

    /// Expected payoffs when the vehicle plays SLOW with `p` and the
    /// pedestrian plays SLOW with `q`.
    pub fn expected(&self, p: f64, q: f64) -> UtilityPair {
        let weights = [
            [p * q, p * (1.0 - q)],
            [(1.0 - p) * q, (1.0 - p) * (1.0 - q)],
        ];
        let mut out = UtilityPair::ZERO;
        for (w_row, e_row) in weights.iter().zip(&self.entries) {
            for (w, e) in w_row.iter().zip(e_row) {
                out.vehicle += w * e.vehicle;
                out.pedestrian += w * e.pedestrian;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EquilibriumKind {
    Mixed,
    Pure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub p_vehicle_slow: f64,
    pub p_pedestrian_slow: f64,
    pub value: UtilityPair,
    pub kind: EquilibriumKind,
}

impl Equilibrium {
    pub fn p_vehicle_fast(&self) -> f64 {
        1.0 - self.p_vehicle_slow
    }

    pub fn p_pedestrian_fast(&self) -> f64 {
        1.0 - self.p_pedestrian_slow
    }

    pub fn is_fast_fast(&self) -> bool {
        self.p_vehicle_slow == 0.0 && self.p_pedestrian_slow == 0.0
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid game parameters: {0}")]
    InvalidParams(String),
    #[error("state {state} outside board bounds {max_y}x{max_x}")]
    OutOfRange {
        state: GameState,
        max_y: i32,
        max_x: i32,
    },
    #[error("payoff matrix has non-finite entries")]
    NonFinite,
    #[error(
        "degenerate stage game (vehicle indifferent: {vehicle_indifferent}, \
         pedestrian indifferent: {pedestrian_indifferent})"
    )]
    Degenerate {
        vehicle_indifferent: bool,
        pedestrian_indifferent: bool,
    },
    #[error("at state {state}: {source}")]
    AtState {
        state: GameState,
        #[source]
        source: Box<GameError>,
    },
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
}

impl GameError {
    pub(crate) fn at(self, state: GameState) -> GameError {
        match self {
            e @ GameError::AtState { .. } => e,
            e @ GameError::OutOfRange { .. } => e,
            other => GameError::AtState {
                state,
                source: Box::new(other),
            },
        }
    }

    /// Strip any state annotation.
    pub fn root(&self) -> &GameError {
        match self {
            GameError::AtState { source, .. } => source.root(),
            other => other,
        }
    }
}
