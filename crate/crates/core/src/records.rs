//! Crossing log: one JSON object per line, one line per controller step.
//!
//! Field names and order are fixed:
//!
//! | field              | type                     | meaning                                      |
//! |--------------------|--------------------------|----------------------------------------------|
//! | `session_id`       | string                   | session the crossing belongs to              |
//! | `crossing_id`      | integer                  | 1-based crossing index within the session    |
//! | `t`                | number, s                | step time since the crossing started         |
//! | `ped_pos_m`        | number, m                | pedestrian distance to the collision point   |
//! | `car_pos_m`        | number or null, m        | vehicle distance (null when no vehicle)      |
//! | `ped_box`          | integer                  | pedestrian box index                         |
//! | `car_box`          | integer or null          | vehicle box index                            |
//! | `interesting`      | bool                     | a game was played at this step               |
//! | `ped_action`       | `"SLOW"`/`"FAST"`/null   | pedestrian action for this step              |
//! | `car_action`       | `"SLOW"`/`"FAST"`/null   | sampled vehicle action (null if no game)     |
//! | `speed_multiplier` | number                   | vehicle speed multiplier, 0.5 or 1.0         |
//! | `winner`           | string                   | `PENDING`, or the outcome on the last step   |
//!
//! A record whose pedestrian action was filled in automatically after a turn
//! timeout carries an extra `"ped_auto": true`; the key is absent otherwise.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::game::Action;

/// How a crossing or discrete episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Crash,
    VehicleFirst,
    PedestrianFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Winner {
    #[default]
    Pending,
    Crash,
    VehicleFirst,
    PedestrianFirst,
}

impl From<Outcome> for Winner {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Crash => Winner::Crash,
            Outcome::VehicleFirst => Winner::VehicleFirst,
            Outcome::PedestrianFirst => Winner::PedestrianFirst,
        }
    }
}

impl Winner {
    pub fn outcome(self) -> Option<Outcome> {
        match self {
            Winner::Pending => None,
            Winner::Crash => Some(Outcome::Crash),
            Winner::VehicleFirst => Some(Outcome::VehicleFirst),
            Winner::PedestrianFirst => Some(Outcome::PedestrianFirst),
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingRecord {
    pub session_id: String,
    pub crossing_id: u32,
    pub t: f64,
    pub ped_pos_m: f64,
    pub car_pos_m: Option<f64>,
    pub ped_box: i32,
    pub car_box: Option<i32>,
    pub interesting: bool,
    pub ped_action: Option<Action>,
    pub car_action: Option<Action>,
    pub speed_multiplier: f64,
    pub winner: Winner,
    #[serde(default, skip_serializing_if = "is_false")]
    pub ped_auto: bool,
}

impl CrossingRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

/// A line that could not be parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct LineIssue {
    pub line: usize,
    pub message: String,
}

/// Parse a record stream, skipping blank lines. Malformed lines are returned
/// alongside the good records rather than aborting the read.
pub fn read_records<R: BufRead>(
    reader: R,
) -> std::io::Result<(Vec<CrossingRecord>, Vec<LineIssue>)> {
    let mut records = Vec::new();
    let mut issues = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match CrossingRecord::from_line(&line) {
            Ok(r) => records.push(r),
            Err(e) => issues.push(LineIssue {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    Ok((records, issues))
}

pub fn write_records<W: Write>(mut w: W, records: &[CrossingRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_line())?;
    }
    Ok(())
}

pub fn records_to_string(records: &[CrossingRecord]) -> String {
    let mut buf = Vec::new();
    write_records(&mut buf, records).expect("write to memory");
    String::from_utf8(buf).expect("records are utf-8")
}

/// Split records into consecutive runs sharing `(session_id, crossing_id)`.
pub fn group_by_crossing(records: &[CrossingRecord]) -> Vec<&[CrossingRecord]> {
    records
        .chunk_by(|a, b| a.session_id == b.session_id && a.crossing_id == b.crossing_id)
        .collect()
}
