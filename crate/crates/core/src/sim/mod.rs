//! Discrete-turn episodes, continuous crossings under the controller, Monte
//! Carlo statistics and the experimenter feedback protocol.

mod crossing;
mod discrete;
mod session;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::ControllerError;
use crate::game::{GameError, GameState};
use crate::records::Outcome;

pub use crossing::{
    run_crossing, Crossing, CrossingRun, CrossingStarts, CrossingView, Interactive,
    PedestrianDecider, PedestrianPolicy, PendingTurn,
};
pub use discrete::{
    monte_carlo_stats, no_yield_survival_mc, play_discrete_episode, AlwaysFast, AlwaysSlow,
    DiscretePolicy, Episode, FixedSlow, OptimalPolicy, OutcomeStats, Role, SurvivalEstimate,
    SymmetricVisits, Turn,
};
pub use session::{
    interesting_trend, run_self_play, CrossingSummary, SelfPlayRun, SessionConfig, Trend,
};

/// A rejected configuration field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldIssue {
    pub field: String,
    pub message: String,
}

impl FieldIssue {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join_issues(issues: &[FieldIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("policy returned probability {p} at {state}")]
    InvalidProbability { p: f64, state: GameState },
    #[error("invalid start: {0}")]
    InvalidStart(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {}", join_issues(.0))]
    InvalidConfig(Vec<FieldIssue>),
    #[error("no vehicle action committed for this turn")]
    NoPendingTurn,
    #[error("crossing already finished")]
    Finished,
}

/// Start distance for the next crossing after `outcome`.
///
/// A pedestrian win moves the start in by `delta`, a loss moves it out, and a
/// crash leaves it unchanged. The result is clamped to `bounds`.
pub fn experimenter_feedback_update(
    current_start: f64,
    outcome: Outcome,
    delta: f64,
    bounds: (f64, f64),
) -> Result<f64, SimError> {
    let (lo, hi) = bounds;
    if !(delta.is_finite() && delta > 0.0) {
        return Err(SimError::InvalidArgument(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(SimError::InvalidArgument(format!(
            "bad bounds [{lo}, {hi}]"
        )));
    }
    let next = match outcome {
        Outcome::PedestrianFirst => current_start - delta,
        Outcome::VehicleFirst => current_start + delta,
        Outcome::Crash => current_start,
    };
    Ok(next.clamp(lo, hi))
}
