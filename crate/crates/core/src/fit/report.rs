use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{Candidate, FilterOutput, FitResult, Funnel};
use crate::game::Action;
use crate::records::Outcome;

/// Share of interesting decisions whose crossing the pedestrian won, overall
/// and spread across sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinShare {
    pub decisions: usize,
    pub pedestrian_wins: usize,
    pub vehicle_wins: usize,
    pub crashes: usize,
    pub pedestrian_share: f64,
    pub sessions: usize,
    /// Standard deviation of per-session shares.
    pub per_session_sd: f64,
    /// Standard error of the mean per-session share.
    pub per_session_se: f64,
    /// Share of decisions that were an immediate yield.
    pub slow_share: f64,
}

pub fn win_share(filtered: &FilterOutput) -> WinShare {
    let mut per_session: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let (mut ped, mut veh, mut crash) = (0, 0, 0);
    for (rec, outcome) in filtered.kept.iter().zip(&filtered.outcomes) {
        let entry = per_session.entry(rec.session_id.as_str()).or_default();
        entry.1 += 1;
        match outcome {
            Some(Outcome::PedestrianFirst) => {
                ped += 1;
                entry.0 += 1;
            }
            Some(Outcome::VehicleFirst) => veh += 1,
            Some(Outcome::Crash) => crash += 1,
            None => {}
        }
    }
    let n = filtered.kept.len();
    let shares: Vec<f64> = per_session
        .values()
        .map(|&(w, t)| w as f64 / t as f64)
        .collect();
    let m = shares.len() as f64;
    let mean = shares.iter().sum::<f64>() / m.max(1.0);
    let sd = if shares.len() > 1 {
        (shares.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    let slow = filtered
        .points
        .iter()
        .filter(|p| p.action == Action::Slow)
        .count();
    WinShare {
        decisions: n,
        pedestrian_wins: ped,
        vehicle_wins: veh,
        crashes: crash,
        pedestrian_share: ped as f64 / n.max(1) as f64,
        sessions: shares.len(),
        per_session_sd: sd,
        per_session_se: if shares.is_empty() {
            0.0
        } else {
            sd / m.sqrt()
        },
        slow_share: slow as f64 / filtered.points.len().max(1) as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub best_crash_cost: f64,
    pub best_log_likelihood: f64,
    pub tied_with_best: Vec<f64>,
    pub candidates: Vec<Candidate>,
    pub funnel: Funnel,
    pub points_used: usize,
    pub points_below_model: usize,
    pub win_share: WinShare,
}

pub fn fit_summary(fit: &FitResult, filtered: &FilterOutput) -> FitSummary {
    FitSummary {
        best_crash_cost: fit.best_crash_cost,
        best_log_likelihood: fit.best_log_likelihood,
        tied_with_best: fit.tied_with_best.clone(),
        candidates: fit.candidates.clone(),
        funnel: filtered.funnel,
        points_used: fit.points_used,
        points_below_model: fit.points_below_model,
        win_share: win_share(filtered),
    }
}

/// `(k, value)` pairs of one curve.
type Series = Vec<(i32, f64)>;

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Yield and no-yield curves as comma-separated text.
///
/// Columns: `k, distance_m, empirical_mean, empirical_sd`, one `C=<c>` yield
/// column per candidate, `empirical_survival`, then one `S(C=<c>)` column
/// per candidate. `distance_m` is the near edge of the box. Cells with no
/// value are empty.
pub fn curve_table(fit: &FitResult, ped_box: f64) -> String {
    let mut ks: Vec<i32> = fit.empirical.bins.iter().map(|b| b.k).collect();
    for m in &fit.model_curves {
        ks.extend(m.points.iter().map(|p| p.k));
    }
    ks.sort_unstable();
    ks.dedup();

    let lookup = |pts: &[(i32, f64)], k: i32| pts.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v);
    let emp_surv: Vec<(i32, f64)> = fit
        .empirical_survival
        .iter()
        .map(|s| (s.k, s.survival))
        .collect();
    let models: Vec<(Series, Series)> = fit
        .model_curves
        .iter()
        .map(|m| {
            (
                m.points.iter().map(|p| (p.k, p.p_yield)).collect(),
                m.survival.iter().map(|s| (s.k, s.survival)).collect(),
            )
        })
        .collect();

    let mut out = String::from("k,distance_m,empirical_mean,empirical_sd");
    for m in &fit.model_curves {
        write!(out, ",C={}", m.crash_cost).unwrap();
    }
    out.push_str(",empirical_survival");
    for m in &fit.model_curves {
        write!(out, ",S(C={})", m.crash_cost).unwrap();
    }
    out.push('\n');

    for k in ks {
        let emp = fit.empirical.bins.iter().find(|b| b.k == k);
        write!(
            out,
            "{k},{},{},{}",
            crate::output::bin_distance(k, ped_box),
            cell(emp.map(|b| b.mean)),
            cell(emp.map(|b| b.sd))
        )
        .unwrap();
        for (yield_pts, _) in &models {
            write!(out, ",{}", cell(lookup(yield_pts, k))).unwrap();
        }
        write!(out, ",{}", cell(lookup(&emp_surv, k))).unwrap();
        for (_, surv) in &models {
            write!(out, ",{}", cell(lookup(surv, k))).unwrap();
        }
        out.push('\n');
    }
    out
}
