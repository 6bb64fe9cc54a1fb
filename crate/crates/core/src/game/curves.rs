use serde::{Deserialize, Serialize};

use super::{GameError, GameParams, Solver};

/// Pedestrian yield (SLOW) probability at symmetric distance `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: i32,
    pub p_yield: f64,
}

/// Probability of reaching distance `k` without having yielded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub k: i32,
    pub survival: f64,
}

/// Model yield curve for `k = 2..=k_max`, ascending in `k`.
///
/// Board bounds are widened to cover `k_max` if needed.
pub fn yield_curve_model(params: &GameParams, k_max: i32) -> Result<Vec<CurvePoint>, GameError> {
    let params = params.with_bounds(params.max_y.max(k_max), params.max_x.max(k_max));
    Solver::new(params)?.yield_curve(k_max)
}

/// Cumulative probability of not having yielded yet, walking the curve from
/// its farthest point toward the collision point.
///
/// `curve` must be sorted by strictly descending `k`. The first point has
/// survival 1 and each later point multiplies in the chance of not yielding
/// at the previous one.
pub fn cumulative_no_yield(curve: &[CurvePoint]) -> Result<Vec<SurvivalPoint>, GameError> {
    for pair in curve.windows(2) {
        if pair[1].k >= pair[0].k {
            return Err(GameError::InvalidCurve(format!(
                "curve must be sorted by descending k (found {} then {})",
                pair[0].k, pair[1].k
            )));
        }
    }
    if let Some(bad) = curve.iter().find(|c| !(0.0..=1.0).contains(&c.p_yield)) {
        return Err(GameError::InvalidCurve(format!(
            "p_yield {} at k={} is outside [0, 1]",
            bad.p_yield, bad.k
        )));
    }
    let mut survival = 1.0;
    let mut prev_yield = 0.0;
    Ok(curve
        .iter()
        .map(|c| {
            survival *= 1.0 - prev_yield;
            prev_yield = c.p_yield;
            SurvivalPoint { k: c.k, survival }
        })
        .collect())
}
