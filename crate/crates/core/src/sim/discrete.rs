use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::game::{
    Action, CurvePoint, EquilibriumKind, GameParams, GameState, Solver, UtilityPair,
};
use crate::records::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Vehicle,
    Pedestrian,
}

/// Source of SLOW probabilities for one agent in discrete play.
pub trait DiscretePolicy: Sync {
    fn p_slow(&self, state: GameState, role: Role) -> Result<f64, SimError>;
}

/// Equilibrium play from a solver.
pub struct OptimalPolicy<'a>(pub &'a Solver);

impl DiscretePolicy for OptimalPolicy<'_> {
    fn p_slow(&self, state: GameState, role: Role) -> Result<f64, SimError> {
        let eq = self.0.policy(state)?;
        Ok(match role {
            Role::Vehicle => eq.p_vehicle_slow,
            Role::Pedestrian => eq.p_pedestrian_slow,
        })
    }
}

pub struct AlwaysFast;

impl DiscretePolicy for AlwaysFast {
    fn p_slow(&self, _: GameState, _: Role) -> Result<f64, SimError> {
        Ok(0.0)
    }
}

pub struct AlwaysSlow;

impl DiscretePolicy for AlwaysSlow {
    fn p_slow(&self, _: GameState, _: Role) -> Result<f64, SimError> {
        Ok(1.0)
    }
}

/// SLOW with a fixed probability everywhere.
pub struct FixedSlow(pub f64);

impl DiscretePolicy for FixedSlow {
    fn p_slow(&self, _: GameState, _: Role) -> Result<f64, SimError> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub t: u32,
    pub state: GameState,
    pub vehicle: Action,
    pub pedestrian: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub start: GameState,
    pub turns: Vec<Turn>,
    pub final_state: GameState,
    pub outcome: Outcome,
    pub realized_utilities: UtilityPair,
}

fn draw<R: Rng + ?Sized>(
    policy: &dyn DiscretePolicy,
    state: GameState,
    role: Role,
    rng: &mut R,
) -> Result<Action, SimError> {
    let p = policy.p_slow(state, role)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(SimError::InvalidProbability { p, state });
    }
    Ok(Action::sample(p, rng))
}

/// Play one discrete episode with simultaneous action draws.
///
/// An agent that has passed stops moving and stops paying. Both agents draw
/// every turn, so the number of random draws depends only on the turn count.
pub fn play_discrete_episode<R: Rng + ?Sized>(
    params: &GameParams,
    start: GameState,
    vehicle_policy: &dyn DiscretePolicy,
    pedestrian_policy: &dyn DiscretePolicy,
    rng: &mut R,
) -> Result<Episode, SimError> {
    params.validate()?;
    if !params.contains(start) {
        return Err(SimError::InvalidStart(format!("{start} outside board")));
    }
    let mut state = start;
    let mut turns = Vec::new();
    let mut realized = UtilityPair::ZERO;
    let mut first_passer = None;
    if start.vehicle_passed() && !start.pedestrian_passed() {
        first_passer = Some(Outcome::VehicleFirst);
    } else if start.pedestrian_passed() && !start.vehicle_passed() {
        first_passer = Some(Outcome::PedestrianFirst);
    }

    let outcome = loop {
        if state.is_crash() {
            realized = realized + UtilityPair::new(-params.crash_cost, -params.crash_cost);
            break Outcome::Crash;
        }
        if state.vehicle_passed() && state.pedestrian_passed() {
            break first_passer.unwrap_or(Outcome::VehicleFirst);
        }
        let av = draw(vehicle_policy, state, Role::Vehicle, rng)?;
        let ap = draw(pedestrian_policy, state, Role::Pedestrian, rng)?;
        turns.push(Turn {
            t: turns.len() as u32,
            state,
            vehicle: av,
            pedestrian: ap,
        });
        let mut next = state;
        if !state.vehicle_passed() {
            realized.vehicle -= params.turn_cost;
            next.y -= av.displacement();
        }
        if !state.pedestrian_passed() {
            realized.pedestrian -= params.turn_cost;
            next.x -= ap.displacement();
        }
        if first_passer.is_none() {
            if next.vehicle_passed() {
                first_passer = Some(Outcome::VehicleFirst);
            } else if next.pedestrian_passed() {
                first_passer = Some(Outcome::PedestrianFirst);
            }
        }
        state = next;
    };

    Ok(Episode {
        start,
        turns,
        final_state: state,
        outcome,
        realized_utilities: realized,
    })
}

/// Visits to a symmetric state `(k, k)` during Monte Carlo play.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SymmetricVisits {
    pub k: i32,
    pub visits: u64,
    pub pedestrian_slow: u64,
    pub vehicle_slow: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeStats {
    pub n: u64,
    pub crash_rate: f64,
    pub pedestrian_win_rate: f64,
    pub vehicle_win_rate: f64,
    pub crash_rate_se: f64,
    pub pedestrian_win_rate_se: f64,
    pub mean_utilities: UtilityPair,
    pub utilities_se: UtilityPair,
    pub mean_turns: f64,
    pub symmetric_visits: Vec<SymmetricVisits>,
    /// Episodes in which one agent yielded alone at a symmetric state.
    pub symmetry_breaks: u64,
    /// Of those, episodes whose remaining play was FAST/FAST wherever a
    /// choice still mattered.
    pub symmetry_breaks_resolved: u64,
    /// Of those, episodes whose remaining play was pure and won by the agent
    /// that did not yield.
    pub symmetry_breaks_deterministic: u64,
}

impl OutcomeStats {
    pub fn symmetry_break_pass_rate(&self) -> Option<f64> {
        (self.symmetry_breaks > 0)
            .then(|| self.symmetry_breaks_resolved as f64 / self.symmetry_breaks as f64)
    }

    pub fn symmetry_break_deterministic_rate(&self) -> Option<f64> {
        (self.symmetry_breaks > 0)
            .then(|| self.symmetry_breaks_deterministic as f64 / self.symmetry_breaks as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct BreakCheck {
    fast_fast: bool,
    deterministic: bool,
}

/// After a one-sided yield at a symmetric state, checks whether the rest of
/// the path is FAST/FAST, and whether it is pure with the non-yielder passing
/// first. Stages where no action changes any payoff count as both.
fn check_break(solver: &Solver, episode: &Episode) -> Option<BreakCheck> {
    let idx = episode
        .turns
        .iter()
        .position(|t| t.state.x == t.state.y && t.vehicle != t.pedestrian)?;
    let non_yielder = if episode.turns[idx].vehicle == Action::Fast {
        Outcome::VehicleFirst
    } else {
        Outcome::PedestrianFirst
    };
    let mut check = BreakCheck {
        fast_fast: true,
        deterministic: episode.outcome == non_yielder,
    };
    for t in &episode.turns[idx + 1..] {
        if t.state.is_terminal() {
            continue;
        }
        let Ok(eq) = solver.policy(t.state) else {
            return Some(BreakCheck {
                fast_fast: false,
                deterministic: false,
            });
        };
        let flat = || {
            solver
                .stage_matrix(t.state)
                .is_ok_and(|m| m.entries.iter().flatten().all(|e| *e == m.entries[0][0]))
        };
        if !eq.is_fast_fast() && !flat() {
            check.fast_fast = false;
        }
        if eq.kind != EquilibriumKind::Pure && !flat() {
            check.deterministic = false;
        }
    }
    Some(check)
}

fn mean_se(xs: impl Iterator<Item = f64> + Clone, n: f64) -> (f64, f64) {
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Run `n` independent optimal-play episodes from `start`.
///
/// Each episode gets its own ChaCha stream derived from one base seed drawn
/// from `rng`, so results do not depend on thread scheduling.
pub fn monte_carlo_stats<R: Rng + ?Sized>(
    solver: &Solver,
    start: GameState,
    n: u64,
    rng: &mut R,
) -> Result<OutcomeStats, SimError> {
    if n == 0 {
        return Err(SimError::InvalidArgument("n must be at least 1".into()));
    }
    let base_seed: u64 = rng.gen();
    let policy = OptimalPolicy(solver);
    let episodes: Vec<Episode> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut erng = ChaCha8Rng::seed_from_u64(base_seed);
            erng.set_stream(i);
            play_discrete_episode(solver.params(), start, &policy, &policy, &mut erng)
        })
        .collect::<Result<_, _>>()?;

    let nf = n as f64;
    let rate = |o: Outcome| episodes.iter().filter(|e| e.outcome == o).count() as f64 / nf;
    let rate_se = |p: f64| (p * (1.0 - p) / nf).sqrt();
    let (mv, sv) = mean_se(episodes.iter().map(|e| e.realized_utilities.vehicle), nf);
    let (mp, sp) = mean_se(episodes.iter().map(|e| e.realized_utilities.pedestrian), nf);
    let crash_rate = rate(Outcome::Crash);
    let pedestrian_win_rate = rate(Outcome::PedestrianFirst);

    let mut visits: BTreeMap<i32, SymmetricVisits> = BTreeMap::new();
    for e in &episodes {
        for t in e.turns.iter().filter(|t| t.state.x == t.state.y) {
            let v = visits.entry(t.state.x).or_insert(SymmetricVisits {
                k: t.state.x,
                ..Default::default()
            });
            v.visits += 1;
            v.pedestrian_slow += u64::from(t.pedestrian == Action::Slow);
            v.vehicle_slow += u64::from(t.vehicle == Action::Slow);
        }
    }

    let (mut breaks, mut resolved, mut deterministic) = (0, 0, 0);
    for check in episodes.iter().filter_map(|e| check_break(solver, e)) {
        breaks += 1;
        resolved += u64::from(check.fast_fast);
        deterministic += u64::from(check.deterministic);
    }

    Ok(OutcomeStats {
        n,
        crash_rate,
        pedestrian_win_rate,
        vehicle_win_rate: rate(Outcome::VehicleFirst),
        crash_rate_se: rate_se(crash_rate),
        pedestrian_win_rate_se: rate_se(pedestrian_win_rate),
        mean_utilities: UtilityPair::new(mv, mp),
        utilities_se: UtilityPair::new(sv, sp),
        mean_turns: episodes.iter().map(|e| e.turns.len() as f64).sum::<f64>() / nf,
        symmetric_visits: visits.into_values().collect(),
        symmetry_breaks: breaks,
        symmetry_breaks_resolved: resolved,
        symmetry_breaks_deterministic: deterministic,
    })
}

/// Monte Carlo estimate of reaching each distance without yielding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub k: i32,
    pub reached: u64,
    pub frequency: f64,
}

/// Walk a pedestrian inward one bin at a time, yielding at bin `k` with the
/// curve's probability, while the vehicle never yields. Counts how many of
/// `n` walkers reach each bin with no earlier yield.
///
/// `curve` must be sorted by descending `k`.
pub fn no_yield_survival_mc<R: Rng + ?Sized>(
    curve: &[CurvePoint],
    n: u64,
    rng: &mut R,
) -> Result<Vec<SurvivalEstimate>, SimError> {
    if curve.windows(2).any(|w| w[1].k >= w[0].k) {
        return Err(SimError::InvalidArgument(
            "curve must be sorted by descending k".into(),
        ));
    }
    let mut reached = vec![0u64; curve.len()];
    for _ in 0..n {
        for (i, point) in curve.iter().enumerate() {
            reached[i] += 1;
            if Action::sample(point.p_yield, rng) == Action::Slow {
                break;
            }
        }
    }
    Ok(curve
        .iter()
        .zip(reached)
        .map(|(p, r)| SurvivalEstimate {
            k: p.k,
            reached: r,
            frequency: r as f64 / n as f64,
        })
        .collect())
}
