use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::DecisionPoint;
use crate::controller::{quantize_distance, ScenarioGeometry};
use crate::records::{group_by_crossing, CrossingRecord, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterOptions {
    /// Steps before the pedestrian has covered this distance are dropped, m.
    pub min_travel_m: f64,
    /// Drop steps whose pedestrian action was filled in after a timeout.
    pub exclude_auto: bool,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            min_travel_m: 2.0,
            exclude_auto: true,
        }
    }
}

/// Record counts after each filter stage, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Funnel {
    /// Lines that failed to parse, when known.
    pub malformed: usize,
    pub total: usize,
    pub after_first_travel: usize,
    pub after_final_box: usize,
    pub after_interesting: usize,
    pub after_auto: usize,
    /// Survivors at a non-negative pedestrian box.
    pub decisions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub points: Vec<DecisionPoint>,
    /// The records behind `points`, in the same order.
    pub kept: Vec<CrossingRecord>,
    /// Crossing outcome for each kept record, when the crossing finished.
    pub outcomes: Vec<Option<Outcome>>,
    pub funnel: Funnel,
}

/// Drop steps taken before the pedestrian has moved `min_travel_m` from the
/// first position recorded in its crossing.
pub fn drop_first_travel(crossing: &[CrossingRecord], min_travel_m: f64) -> Vec<CrossingRecord> {
    let Some(first) = crossing.first() else {
        return Vec::new();
    };
    let start = first.ped_pos_m;
    crossing
        .iter()
        .filter(|r| start - r.ped_pos_m >= min_travel_m - 1e-9)
        .cloned()
        .collect()
}

/// Keep only the first step in the crossing's smallest pedestrian box.
pub fn dedup_final_box(
    crossing: &[CrossingRecord],
    geom: &ScenarioGeometry,
) -> Vec<CrossingRecord> {
    let k = |r: &CrossingRecord| quantize_distance(r.ped_pos_m, geom.ped_box);
    let Some(final_box) = crossing.iter().map(k).min() else {
        return Vec::new();
    };
    let mut seen = false;
    crossing
        .iter()
        .filter(|r| {
            if k(r) != final_box {
                return true;
            }
            !std::mem::replace(&mut seen, true)
        })
        .cloned()
        .collect()
}

/// Interesting steps with a recorded pedestrian action.
pub fn keep_interesting(crossing: &[CrossingRecord]) -> Vec<CrossingRecord> {
    crossing
        .iter()
        .filter(|r| r.interesting && r.ped_action.is_some())
        .cloned()
        .collect()
}

/// Reduce crossing logs to pedestrian decisions in interesting states.
///
/// Records must be grouped by crossing. Box indices are recomputed from
/// `ped_pos_m` with the geometry's pedestrian box size.
pub fn filter_records(
    records: &[CrossingRecord],
    geom: &ScenarioGeometry,
    options: &FilterOptions,
) -> FilterOutput {
    let mut funnel = Funnel {
        total: records.len(),
        ..Default::default()
    };
    let groups = group_by_crossing(records);
    let mut seen_ids: HashMap<(&str, u32), usize> = HashMap::new();
    for g in &groups {
        *seen_ids
            .entry((&g[0].session_id, g[0].crossing_id))
            .or_default() += 1;
    }
    if let Some(((s, c), _)) = seen_ids.iter().find(|(_, n)| **n > 1) {
        log::warn!("crossing {s}/{c} appears in more than one run of records");
    }

    let mut out = FilterOutput {
        points: Vec::new(),
        kept: Vec::new(),
        outcomes: Vec::new(),
        funnel,
    };
    for crossing in groups {
        let outcome = crossing.last().and_then(|r| r.winner.outcome());
        let stage1 = drop_first_travel(crossing, options.min_travel_m);
        let stage2 = dedup_final_box(&stage1, geom);
        let stage3 = keep_interesting(&stage2);
        let stage4: Vec<_> = stage3
            .into_iter()
            .filter(|r| !(options.exclude_auto && r.ped_auto))
            .collect();
        funnel.after_first_travel += stage1.len();
        funnel.after_final_box += stage2.len();
        funnel.after_interesting += keep_interesting(&stage2).len();
        funnel.after_auto += stage4.len();
        for r in stage4 {
            let k = quantize_distance(r.ped_pos_m, geom.ped_box);
            if k < 0 {
                continue;
            }
            let action = r.ped_action.expect("kept records have an action");
            out.points.push(DecisionPoint { k, action });
            out.kept.push(r);
            out.outcomes.push(outcome);
        }
    }
    funnel.decisions = out.points.len();
    out.funnel = funnel;
    out
}
