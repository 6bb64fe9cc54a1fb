use std::collections::HashMap;
use std::sync::RwLock;

use super::curves::CurvePoint;
use super::stage::{select_prefer_fast, solve_stage_game};
use super::{
    Action, Equilibrium, EquilibriumKind, GameError, GameParams, GameState, PayoffMatrix,
    Selection, UtilityPair,
};

/// Value of a terminal state, or `None` if a decision remains.
///
/// A crash ends the game at `-crash_cost` for both. Once one agent has passed
/// it stops paying; the other finishes at full speed.
pub fn terminal_value(s: GameState, params: &GameParams) -> Option<UtilityPair> {
    let remaining = |pos: i32| -params.turn_cost * f64::from((pos + 2) / 2);
    if s.is_crash() {
        Some(UtilityPair::new(-params.crash_cost, -params.crash_cost))
    } else if s.vehicle_passed() && s.pedestrian_passed() {
        Some(UtilityPair::ZERO)
    } else if s.vehicle_passed() {
        Some(UtilityPair::new(0.0, remaining(s.x)))
    } else if s.pedestrian_passed() {
        Some(UtilityPair::new(remaining(s.y), 0.0))
    } else {
        None
    }
}

fn terminal_equilibrium(value: UtilityPair) -> Equilibrium {
    Equilibrium {
        p_vehicle_slow: 0.0,
        p_pedestrian_slow: 0.0,
        value,
        kind: EquilibriumKind::Pure,
    }
}

/// Memoized solver for one parameter set.
///
/// Values do not depend on the turn index, so the memo is keyed on the state
/// alone. The table is behind a lock and the solver can be shared between
/// threads.
#[derive(Debug)]
pub struct Solver {
    params: GameParams,
    memo: RwLock<HashMap<GameState, Equilibrium>>,
}

impl Solver {
    pub fn new(params: GameParams) -> Result<Self, GameError> {
        params.validate()?;
        Ok(Self {
            params,
            memo: RwLock::new(HashMap::new()),
        })
    }

    pub fn params(&self) -> &GameParams {
        &self.params
    }

    /// Number of memoized non-terminal states.
    pub fn memo_len(&self) -> usize {
        self.memo.read().expect("memo lock poisoned").len()
    }

    fn check_bounds(&self, s: GameState) -> Result<(), GameError> {
        if self.params.contains(s) {
            Ok(())
        } else {
            Err(GameError::OutOfRange {
                state: s,
                max_y: self.params.max_y,
                max_x: self.params.max_x,
            })
        }
    }

    pub fn value(&self, s: GameState) -> Result<UtilityPair, GameError> {
        self.check_bounds(s)?;
        match terminal_value(s, &self.params) {
            Some(v) => Ok(v),
            None => Ok(self.policy(s)?.value),
        }
    }

    /// Stage payoffs at a non-terminal state: one turn of time for both
    /// agents plus the successor value.
    pub fn stage_matrix(&self, s: GameState) -> Result<PayoffMatrix, GameError> {
        self.check_bounds(s)?;
        if s.is_terminal() {
            return Err(GameError::InvalidParams(format!(
                "no stage game at terminal state {s}"
            )));
        }
        let step = UtilityPair::new(-self.params.turn_cost, -self.params.turn_cost);
        let mut entries = [[UtilityPair::ZERO; 2]; 2];
        for av in Action::ALL {
            for ap in Action::ALL {
                entries[av.index()][ap.index()] = step + self.value(s.successor(av, ap))?;
            }
        }
        Ok(PayoffMatrix::new(entries))
    }

    /// Equilibrium played at `s`. Terminal states report FAST for both.
    pub fn policy(&self, s: GameState) -> Result<Equilibrium, GameError> {
        self.check_bounds(s)?;
        if let Some(v) = terminal_value(s, &self.params) {
            return Ok(terminal_equilibrium(v));
        }
        if let Some(eq) = self.memo.read().expect("memo lock poisoned").get(&s) {
            return Ok(*eq);
        }
        let m = self.stage_matrix(s)?;
        let eq = match self.params.selection {
            Selection::Strict => solve_stage_game(&m),
            Selection::PreferFast if crash_unavoidable(s) => {
                // Every joint action crashes: the stage carries no choice.
                Ok(Equilibrium {
                    p_vehicle_slow: 0.5,
                    p_pedestrian_slow: 0.5,
                    value: m.expected(0.5, 0.5),
                    kind: EquilibriumKind::Mixed,
                })
            }
            Selection::PreferFast => select_prefer_fast(&m),
        }
        .map_err(|e| e.at(s))?;
        self.memo.write().expect("memo lock poisoned").insert(s, eq);
        Ok(eq)
    }

    /// Pedestrian P(SLOW) at symmetric states `(k, k)` for `k = 2..=k_max`.
    pub fn yield_curve(&self, k_max: i32) -> Result<Vec<CurvePoint>, GameError> {
        if k_max < 2 {
            return Err(GameError::InvalidCurve(format!(
                "k_max must be at least 2, got {k_max}"
            )));
        }
        (2..=k_max)
            .map(|k| {
                let eq = self.policy(GameState::symmetric(k))?;
                Ok(CurvePoint {
                    k,
                    p_yield: eq.p_pedestrian_slow,
                })
            })
            .collect()
    }
}

fn crash_unavoidable(s: GameState) -> bool {
    Action::ALL
        .iter()
        .all(|&av| Action::ALL.iter().all(|&ap| s.successor(av, ap).is_crash()))
}

pub fn build_stage_matrix(s: GameState, params: &GameParams) -> Result<PayoffMatrix, GameError> {
    Solver::new(*params)?.stage_matrix(s)
}

pub fn game_value(s: GameState, params: &GameParams) -> Result<UtilityPair, GameError> {
    Solver::new(*params)?.value(s)
}

pub fn policy(s: GameState, params: &GameParams) -> Result<Equilibrium, GameError> {
    Solver::new(*params)?.policy(s)
}
