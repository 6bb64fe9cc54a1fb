//! Behavioral fitting: filter crossing logs to pedestrian decisions, build
//! Beta-posterior yield curves and scan crash costs by likelihood.

mod filter;
mod report;

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{
    cumulative_no_yield, yield_curve_model, Action, CurvePoint, GameError, GameParams,
    SurvivalPoint,
};

pub use filter::{
    dedup_final_box, drop_first_travel, filter_records, keep_interesting, FilterOptions,
    FilterOutput, Funnel,
};
pub use report::{curve_table, fit_summary, win_share, FitSummary, WinShare};

/// Crash-cost grid used when none is given.
pub const DEFAULT_GRID: [f64; 7] = [2.0, 3.0, 10.0, 100.0, 1e3, 1e4, 1e6];

/// Model probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]`
/// before taking logs.
pub const PROB_FLOOR: f64 = 1e-9;

/// Smallest pedestrian box the model makes predictions for.
pub const MIN_MODEL_BIN: i32 = 2;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("candidate grid is empty")]
    EmptyGrid,
    #[error("bin {k} is below the smallest modelled bin {MIN_MODEL_BIN}")]
    BinBelowModel { k: i32 },
    #[error("every candidate failed: {}", .0.join("; "))]
    AllCandidatesFailed(Vec<String>),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One pedestrian decision at symmetric distance `k` boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub k: i32,
    pub action: Action,
}

/// Beta posterior over the yield probability in one bin, from a flat prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YieldBin {
    pub k: i32,
    pub slow: u64,
    pub fast: u64,
    pub alpha: f64,
    pub beta: f64,
    pub mean: f64,
    pub sd: f64,
}

impl YieldBin {
    pub fn from_counts(k: i32, slow: u64, fast: u64) -> Self {
        let alpha = 1.0 + slow as f64;
        let beta = 1.0 + fast as f64;
        let s = alpha + beta;
        Self {
            k,
            slow,
            fast,
            alpha,
            beta,
            mean: alpha / s,
            sd: (alpha * beta / (s * s * (s + 1.0))).sqrt(),
        }
    }

    pub fn count(&self) -> u64 {
        self.slow + self.fast
    }
}

/// Empirical yield curve, ascending in `k`, with one bin per box between
/// the smallest and largest observed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct YieldCurve {
    pub bins: Vec<YieldBin>,
}

impl YieldCurve {
    /// The posterior at `k`; unobserved bins give the flat prior.
    pub fn bin(&self, k: i32) -> YieldBin {
        self.bins
            .iter()
            .find(|b| b.k == k)
            .copied()
            .unwrap_or_else(|| YieldBin::from_counts(k, 0, 0))
    }

    pub fn k_range(&self) -> Option<(i32, i32)> {
        Some((self.bins.first()?.k, self.bins.last()?.k))
    }

    /// Posterior means as curve points, descending in `k`.
    pub fn means_descending(&self) -> Vec<CurvePoint> {
        self.bins
            .iter()
            .rev()
            .map(|b| CurvePoint {
                k: b.k,
                p_yield: b.mean,
            })
            .collect()
    }
}

pub fn empirical_yield_curve(points: &[DecisionPoint]) -> YieldCurve {
    let mut counts: BTreeMap<i32, (u64, u64)> = BTreeMap::new();
    for p in points {
        let c = counts.entry(p.k).or_default();
        match p.action {
            Action::Slow => c.0 += 1,
            Action::Fast => c.1 += 1,
        }
    }
    let (Some(&lo), Some(&hi)) = (counts.keys().next(), counts.keys().next_back()) else {
        return YieldCurve::default();
    };
    YieldCurve {
        bins: (lo..=hi)
            .map(|k| {
                let (s, f) = counts.get(&k).copied().unwrap_or_default();
                YieldBin::from_counts(k, s, f)
            })
            .collect(),
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Model yield probability by bin for crash cost `c`, covering `k_max`.
pub fn model_yield_map(
    c: f64,
    params: &GameParams,
    k_max: i32,
) -> Result<BTreeMap<i32, f64>, GameError> {
    let params = GameParams {
        crash_cost: c,
        ..*params
    };
    params.validate()?;
    let curve = yield_curve_model(&params, k_max.max(MIN_MODEL_BIN))?;
    Ok(curve.into_iter().map(|p| (p.k, p.p_yield)).collect())
}

/// Bernoulli log-likelihood of the decisions under crash cost `c`.
pub fn log_likelihood(
    points: &[DecisionPoint],
    c: f64,
    params: &GameParams,
) -> Result<f64, FitError> {
    if let Some(p) = points.iter().find(|p| p.k < MIN_MODEL_BIN) {
        return Err(FitError::BinBelowModel { k: p.k });
    }
    let k_max = points.iter().map(|p| p.k).max().unwrap_or(MIN_MODEL_BIN);
    let model = model_yield_map(c, params, k_max)?;
    Ok(ll_with_model(points, &model))
}

fn ll_with_model(points: &[DecisionPoint], model: &BTreeMap<i32, f64>) -> f64 {
    points
        .iter()
        .map(|p| {
            let q = clamp_prob(model[&p.k]);
            match p.action {
                Action::Slow => q.ln(),
                Action::Fast => (1.0 - q).ln(),
            }
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub crash_cost: f64,
    pub log_likelihood: Option<f64>,
    /// Root-mean-square gap between empirical and model cumulative no-yield
    /// curves. Reported only, never used for selection.
    pub survival_rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCurve {
    pub crash_cost: f64,
    /// Ascending in `k`.
    pub points: Vec<CurvePoint>,
    /// Descending in `k`.
    pub survival: Vec<SurvivalPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub candidates: Vec<Candidate>,
    pub best_crash_cost: f64,
    pub best_log_likelihood: f64,
    /// Other candidates whose likelihood tied with the best.
    pub tied_with_best: Vec<f64>,
    pub points_used: usize,
    /// Points below the smallest modelled bin, excluded from the likelihood.
    pub points_below_model: usize,
    pub empirical: YieldCurve,
    /// Descending in `k`.
    pub empirical_survival: Vec<SurvivalPoint>,
    pub model_curves: Vec<ModelCurve>,
}

fn ll_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn survival_rmse(empirical: &[SurvivalPoint], model: &[SurvivalPoint]) -> Option<f64> {
    let model: BTreeMap<i32, f64> = model.iter().map(|s| (s.k, s.survival)).collect();
    let diffs: Vec<f64> = empirical
        .iter()
        .filter_map(|e| model.get(&e.k).map(|m| (e.survival - m).powi(2)))
        .collect();
    (!diffs.is_empty()).then(|| (diffs.iter().sum::<f64>() / diffs.len() as f64).sqrt())
}

/// Scan the grid, pick the maximum-likelihood crash cost (smallest on ties),
/// and attach model and empirical curves.
///
/// Decisions below the smallest modelled bin appear in the empirical curve
/// but not in the likelihood. A candidate whose solve fails is marked and
/// skipped.
pub fn fit_ucrash(
    points: &[DecisionPoint],
    grid: &[f64],
    params: &GameParams,
) -> Result<FitResult, FitError> {
    if grid.is_empty() {
        return Err(FitError::EmptyGrid);
    }
    let modelled: Vec<DecisionPoint> = points
        .iter()
        .copied()
        .filter(|p| p.k >= MIN_MODEL_BIN)
        .collect();
    let empirical = empirical_yield_curve(points);
    let empirical_modelled = empirical_yield_curve(&modelled);
    let empirical_survival = cumulative_no_yield(&empirical.means_descending())?;
    let modelled_survival = cumulative_no_yield(&empirical_modelled.means_descending())?;
    let k_max = empirical
        .k_range()
        .map_or(MIN_MODEL_BIN, |(_, hi)| hi)
        .max(MIN_MODEL_BIN);

    let evaluated: Vec<(Candidate, Option<ModelCurve>)> = grid
        .par_iter()
        .map(|&c| {
            let result = model_yield_map(c, params, k_max).and_then(|model| {
                let curve: Vec<CurvePoint> = model
                    .iter()
                    .map(|(&k, &p_yield)| CurvePoint { k, p_yield })
                    .collect();
                let descending: Vec<CurvePoint> = curve
                    .iter()
                    .rev()
                    .filter(|p| {
                        empirical_modelled
                            .k_range()
                            .is_none_or(|(lo, hi)| (lo..=hi).contains(&p.k))
                    })
                    .copied()
                    .collect();
                let survival = cumulative_no_yield(&descending)?;
                Ok((ll_with_model(&modelled, &model), curve, survival))
            });
            match result {
                Ok((ll, points, survival)) => (
                    Candidate {
                        crash_cost: c,
                        log_likelihood: Some(ll),
                        survival_rmse: survival_rmse(&modelled_survival, &survival),
                        error: None,
                    },
                    Some(ModelCurve {
                        crash_cost: c,
                        points,
                        survival,
                    }),
                ),
                Err(e) => (
                    Candidate {
                        crash_cost: c,
                        log_likelihood: None,
                        survival_rmse: None,
                        error: Some(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();

    let (candidates, curves): (Vec<_>, Vec<_>) = evaluated.into_iter().unzip();
    let mut best: Option<(f64, f64)> = None;
    for cand in &candidates {
        let Some(ll) = cand.log_likelihood else {
            continue;
        };
        best = match best {
            None => Some((cand.crash_cost, ll)),
            Some((bc, bll)) if ll_tie(ll, bll) => Some((bc.min(cand.crash_cost), bll.max(ll))),
            Some((_, bll)) if ll > bll => Some((cand.crash_cost, ll)),
            keep => keep,
        };
    }
    let Some((best_crash_cost, best_log_likelihood)) = best else {
        return Err(FitError::AllCandidatesFailed(
            candidates.iter().filter_map(|c| c.error.clone()).collect(),
        ));
    };
    let tied_with_best: Vec<f64> = candidates
        .iter()
        .filter(|c| c.crash_cost != best_crash_cost)
        .filter(|c| {
            c.log_likelihood
                .is_some_and(|ll| ll_tie(ll, best_log_likelihood))
        })
        .map(|c| c.crash_cost)
        .collect();
    if !tied_with_best.is_empty() {
        log::info!(
            "likelihood tie at C={best_crash_cost} with {tied_with_best:?}; keeping the smallest"
        );
    }

    Ok(FitResult {
        candidates,
        best_crash_cost,
        best_log_likelihood,
        tied_with_best,
        points_used: modelled.len(),
        points_below_model: points.len() - modelled.len(),
        empirical,
        empirical_survival,
        model_curves: curves.into_iter().flatten().collect(),
    })
}

/// Draw `n` decisions with bins uniform over `k_lo..=k_hi` and actions from
/// the model curve at crash cost `params.crash_cost`.
pub fn synthetic_decisions<R: Rng + ?Sized>(
    params: &GameParams,
    k_lo: i32,
    k_hi: i32,
    n: usize,
    rng: &mut R,
) -> Result<Vec<DecisionPoint>, FitError> {
    if k_lo < MIN_MODEL_BIN || k_hi < k_lo {
        return Err(FitError::BinBelowModel { k: k_lo });
    }
    let model = model_yield_map(params.crash_cost, params, k_hi)?;
    Ok((0..n)
        .map(|_| {
            let k = rng.gen_range(k_lo..=k_hi);
            DecisionPoint {
                k,
                action: Action::sample(model[&k], rng),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn pts(k: i32, slow: usize, fast: usize) -> Vec<DecisionPoint> {
        let mut v = vec![
            DecisionPoint {
                k,
                action: Action::Slow
            };
            slow
        ];
        v.extend(vec![
            DecisionPoint {
                k,
                action: Action::Fast
            };
            fast
        ]);
        v
    }

    #[test]
    fn beta_moments() {
        let empty = YieldCurve::default().bin(7);
        assert_eq!((empty.alpha, empty.beta, empty.mean), (1.0, 1.0, 0.5));
        assert!((empty.sd - 0.288_675_134_594_812_9).abs() < 1e-12);

        let c = empirical_yield_curve(&pts(4, 3, 1));
        let b = c.bin(4);
        assert_eq!((b.alpha, b.beta), (4.0, 2.0));
        assert!((b.mean - 2.0 / 3.0).abs() < 1e-15);
        assert!((b.sd - (8.0f64 / (36.0 * 7.0)).sqrt()).abs() < 1e-15);

        let all = empirical_yield_curve(&pts(3, 10, 0)).bin(3);
        assert!((all.mean - 11.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn curve_fills_gaps() {
        let mut p = pts(2, 1, 0);
        p.extend(pts(5, 0, 1));
        let c = empirical_yield_curve(&p);
        assert_eq!(
            c.bins.iter().map(|b| b.k).collect::<Vec<_>>(),
            vec![2, 3, 4, 5]
        );
        assert_eq!(c.bins[1].count(), 0);
    }

    #[test]
    fn likelihood_basics() {
        let params = GameParams::default();
        let model = model_yield_map(3.0, &params, 5).unwrap();
        let one = log_likelihood(&pts(5, 1, 0), 3.0, &params).unwrap();
        assert!((one - clamp_prob(model[&5]).ln()).abs() < 1e-12);

        let mut data = pts(3, 2, 5);
        data.extend(pts(6, 1, 4));
        let single = log_likelihood(&data, 10.0, &params).unwrap();
        let doubled: Vec<_> = data.iter().chain(data.iter()).copied().collect();
        assert!((log_likelihood(&doubled, 10.0, &params).unwrap() - 2.0 * single).abs() < 1e-9);

        assert!(matches!(
            log_likelihood(&pts(1, 1, 0), 3.0, &params),
            Err(FitError::BinBelowModel { k: 1 })
        ));
    }

    #[test]
    fn single_candidate_and_empty_grid() {
        let params = GameParams::default();
        let data = pts(4, 1, 3);
        let r = fit_ucrash(&data, &[100.0], &params).unwrap();
        assert_eq!(r.best_crash_cost, 100.0);
        assert!(matches!(
            fit_ucrash(&data, &[], &params),
            Err(FitError::EmptyGrid)
        ));
    }

    #[test]
    fn invalid_candidates_are_marked() {
        let params = GameParams::default();
        let data = pts(4, 1, 3);
        let r = fit_ucrash(&data, &[-1.0, 3.0], &params).unwrap();
        assert_eq!(r.best_crash_cost, 3.0);
        assert!(r.candidates[0].error.is_some());
        assert!(matches!(
            fit_ucrash(&data, &[-1.0, f64::NAN], &params),
            Err(FitError::AllCandidatesFailed(_))
        ));
    }

    #[test]
    fn ties_go_to_smallest() {
        // Below the model bins nothing enters the likelihood, so all tie.
        let params = GameParams::default();
        let r = fit_ucrash(&pts(0, 1, 1), &[100.0, 10.0, 1e4], &params).unwrap();
        assert_eq!(r.best_crash_cost, 10.0);
        assert_eq!(r.tied_with_best, vec![100.0, 1e4]);
        assert_eq!(r.points_below_model, 2);
    }

    #[test]
    fn synthetic_recovery_smoke() {
        let params = GameParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = synthetic_decisions(&params, 2, 15, 2000, &mut rng).unwrap();
        let r = fit_ucrash(&data, &DEFAULT_GRID, &params).unwrap();
        assert_eq!(r.best_crash_cost, 3.0);
        assert_eq!(r.model_curves.len(), DEFAULT_GRID.len());
    }
}
