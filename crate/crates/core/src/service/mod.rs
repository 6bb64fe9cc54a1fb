//! Live crossing sessions against the model vehicle.
//!
//! Every turn the vehicle commits its action before the pedestrian's action
//! is accepted, and the commitment stays server-side until it is revealed in
//! the turn result. Each turn draws from its own random stream, derived from
//! the session seed, the crossing and the step, so the vehicle action depends
//! only on the seed and the play so far.

pub mod http;

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock, TryLockError};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::ScenarioGeometry;
use crate::game::{Action, Solver};
use crate::records::{read_records, CrossingRecord, Outcome};
use crate::sim::{Crossing, CrossingStarts, FieldIssue, SessionConfig, SimError};

const INDEX_FILE: &str = "index.json";
const SESSION_DIR: &str = "sessions";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session {0} is already processing a turn")]
    Busy(String),
    #[error("session {0} is finished")]
    SessionFinished(String),
    #[error("session {0} is archived and cannot be played")]
    Archived(String),
    #[error("turn expired after {timeout_s} s and was played FAST automatically")]
    TurnExpired { timeout_s: f64 },
    #[error("invalid configuration")]
    InvalidConfig(Vec<FieldIssue>),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("storage error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt session index: {0}")]
    CorruptIndex(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Finished,
    /// Loaded from disk; exportable but not playable.
    Archived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tallies {
    pub pedestrian_first: u32,
    pub vehicle_first: u32,
    pub crash: u32,
}

impl Tallies {
    fn add(&mut self, o: Outcome) {
        match o {
            Outcome::PedestrianFirst => self.pedestrian_first += 1,
            Outcome::VehicleFirst => self.vehicle_first += 1,
            Outcome::Crash => self.crash += 1,
        }
    }

    pub fn total(&self) -> u32 {
        self.pedestrian_first + self.vehicle_first + self.crash
    }
}

/// Client-visible session state. Never carries the pending vehicle action
/// or the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub status: SessionStatus,
    pub crossing_id: u32,
    pub crossings_total: u32,
    pub crossings_completed: u32,
    pub step: u32,
    pub t: f64,
    pub ped_pos_m: f64,
    pub car_pos_m: Option<f64>,
    pub ped_box: i32,
    pub car_box: Option<i32>,
    pub interesting: bool,
    pub car_start_m: f64,
    pub tallies: Tallies,
    pub last_outcome: Option<Outcome>,
    pub turn_timeout_s: Option<f64>,
    pub geometry: ScenarioGeometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResult {
    /// The committed vehicle action, revealed. Absent when no game was played.
    pub vehicle_action: Option<Action>,
    pub pedestrian_action: Action,
    pub speed_multiplier: f64,
    pub interesting: bool,
    pub record: CrossingRecord,
    /// Steps played automatically after the pedestrian had passed.
    pub auto_steps: usize,
    /// Set when this turn ended the crossing.
    pub crossing_outcome: Option<Outcome>,
    pub state: SessionView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexEntry {
    session_id: String,
    seed: u64,
    config: SessionConfig,
    status: SessionStatus,
    tallies: Tallies,
}

struct Session {
    id: String,
    config: SessionConfig,
    seed: u64,
    solver: Arc<Solver>,
    status: SessionStatus,
    crossing: Option<Crossing>,
    car_start: f64,
    tallies: Tallies,
    last_outcome: Option<Outcome>,
    records: Vec<CrossingRecord>,
    pending_since: Instant,
    log: Option<File>,
}

fn turn_rng(seed: u64, crossing_id: u32, step: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(crossing_id) << 32) | u64::from(step));
    rng
}

fn start_rng(seed: u64, crossing_id: u32) -> ChaCha8Rng {
    turn_rng(seed, crossing_id, u32::MAX)
}

impl Session {
    fn start_crossing(&mut self, crossing_id: u32, now: Instant) -> Result<(), ServiceError> {
        let ped_m = self
            .config
            .draw_ped_start(&mut start_rng(self.seed, crossing_id));
        let starts = CrossingStarts {
            ped_m,
            car_m: Some(self.car_start),
        };
        let crossing = Crossing::new(
            self.id.clone(),
            crossing_id,
            self.config.geometry.clone(),
            Arc::clone(&self.solver),
            starts,
        )?;
        self.crossing = Some(crossing);
        self.commit(now)
    }

    fn commit(&mut self, now: Instant) -> Result<(), ServiceError> {
        let crossing = self
            .crossing
            .as_mut()
            .expect("active session has a crossing");
        let view = crossing.view();
        crossing.commit_vehicle(&mut turn_rng(self.seed, view.crossing_id, view.step))?;
        self.pending_since = now;
        Ok(())
    }

    fn persist(&mut self, record: &CrossingRecord) -> Result<(), ServiceError> {
        if let Some(f) = self.log.as_mut() {
            writeln!(f, "{}", record.to_line())?;
            f.flush()?;
        }
        self.records.push(record.clone());
        Ok(())
    }

    fn view(&self) -> SessionView {
        let crossing = self.crossing.as_ref();
        let cv = crossing.map(Crossing::view);
        SessionView {
            session_id: self.id.clone(),
            status: self.status,
            crossing_id: cv
                .as_ref()
                .map_or(self.config.crossings_total, |v| v.crossing_id),
            crossings_total: self.config.crossings_total,
            crossings_completed: self.tallies.total(),
            step: cv.as_ref().map_or(0, |v| v.step),
            t: cv.as_ref().map_or(0.0, |v| v.t),
            ped_pos_m: cv.as_ref().map_or(0.0, |v| v.ped_pos_m),
            car_pos_m: cv.as_ref().and_then(|v| v.car_pos_m),
            ped_box: cv.as_ref().map_or(0, |v| v.ped_box),
            car_box: cv.as_ref().and_then(|v| v.car_box),
            interesting: cv.as_ref().and_then(|v| v.interesting).unwrap_or(false),
            car_start_m: self.car_start,
            tallies: self.tallies,
            last_outcome: self.last_outcome,
            turn_timeout_s: self.config.turn_timeout_s,
            geometry: self.config.geometry.clone(),
        }
    }

    /// Resolve the pending turn, play out any steps where the pedestrian has
    /// no decision left, and move on to the next crossing when this one ends.
    fn play(
        &mut self,
        action: Action,
        auto: bool,
        now: Instant,
    ) -> Result<TurnResult, ServiceError> {
        match self.status {
            SessionStatus::Active => {}
            SessionStatus::Finished => return Err(ServiceError::SessionFinished(self.id.clone())),
            SessionStatus::Archived => return Err(ServiceError::Archived(self.id.clone())),
        }
        let crossing = self
            .crossing
            .as_mut()
            .expect("active session has a crossing");
        let pending = crossing.pending().cloned().ok_or(SimError::NoPendingTurn)?;
        let record = crossing.resolve(Some(action), auto)?.clone();
        self.persist(&record)?;

        let mut auto_steps = 0;
        loop {
            let crossing = self.crossing.as_mut().expect("crossing present");
            if crossing.is_finished() || !crossing.pedestrian_passed() {
                break;
            }
            let view = crossing.view();
            crossing.commit_vehicle(&mut turn_rng(self.seed, view.crossing_id, view.step))?;
            let r = crossing.resolve(None, false)?.clone();
            self.persist(&r)?;
            auto_steps += 1;
        }

        let crossing = self.crossing.as_ref().expect("crossing present");
        let outcome = crossing.outcome();
        if let Some(o) = outcome {
            let finished_id = crossing.crossing_id();
            self.tallies.add(o);
            self.last_outcome = Some(o);
            self.car_start = self.config.next_car_start(self.car_start, o)?;
            if finished_id >= self.config.crossings_total {
                self.status = SessionStatus::Finished;
            } else {
                self.start_crossing(finished_id + 1, now)?;
            }
        } else {
            self.commit(now)?;
        }

        Ok(TurnResult {
            vehicle_action: pending.vehicle_action,
            pedestrian_action: action,
            speed_multiplier: pending.speed_multiplier,
            interesting: pending.interesting,
            record,
            auto_steps,
            crossing_outcome: outcome,
            state: self.view(),
        })
    }

    /// Auto-play every turn whose deadline has passed. Returns how many.
    fn expire(&mut self, now: Instant) -> Result<usize, ServiceError> {
        let Some(timeout) = self.config.turn_timeout_s else {
            return Ok(0);
        };
        let timeout = Duration::from_secs_f64(timeout);
        let mut n = 0;
        while self.status == SessionStatus::Active
            && now.duration_since(self.pending_since) >= timeout
        {
            let deadline = self.pending_since + timeout;
            self.play(Action::Fast, true, deadline)?;
            n += 1;
        }
        Ok(n)
    }

    fn index_entry(&self) -> IndexEntry {
        IndexEntry {
            session_id: self.id.clone(),
            seed: self.seed,
            config: self.config.clone(),
            status: self.status,
            tallies: self.tallies,
        }
    }
}

/// Which sessions to export.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportFilter {
    pub session_id: Option<String>,
    #[serde(default)]
    pub finished_only: bool,
}

/// Sessions held in memory, optionally backed by a directory holding one
/// append-only record log per session and a JSON index.
pub struct SessionStore {
    dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    index: Mutex<BTreeMap<String, IndexEntry>>,
    next_id: Mutex<u64>,
}

impl Default for SessionStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            sessions: RwLock::new(HashMap::new()),
            index: Mutex::new(BTreeMap::new()),
            next_id: Mutex::new(1),
        }
    }

    /// Open or create a store in `dir`. Sessions already on disk are loaded
    /// as archived.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join(SESSION_DIR))?;
        let index_path = dir.join(INDEX_FILE);
        let entries: Vec<IndexEntry> = if index_path.exists() {
            serde_json::from_reader(BufReader::new(File::open(&index_path)?))?
        } else {
            Vec::new()
        };
        let mut sessions = HashMap::new();
        let mut index = BTreeMap::new();
        let mut next_id = 1;
        for mut entry in entries {
            let path = dir
                .join(SESSION_DIR)
                .join(format!("{}.jsonl", entry.session_id));
            let records = if path.exists() {
                let (records, issues) = read_records(BufReader::new(File::open(&path)?))?;
                for issue in issues {
                    log::warn!("{}:{}: {}", path.display(), issue.line, issue.message);
                }
                records
            } else {
                Vec::new()
            };
            if let Some(n) = entry
                .session_id
                .strip_prefix("s")
                .and_then(|n| n.parse::<u64>().ok())
            {
                next_id = next_id.max(n + 1);
            }
            if entry.status == SessionStatus::Active {
                entry.status = SessionStatus::Archived;
            }
            let session = Session {
                id: entry.session_id.clone(),
                config: entry.config.clone(),
                seed: entry.seed,
                solver: Arc::new(Solver::new(entry.config.game_params()?).map_err(SimError::from)?),
                status: entry.status,
                crossing: None,
                car_start: entry.config.car_start,
                tallies: entry.tallies,
                last_outcome: None,
                records,
                pending_since: Instant::now(),
                log: None,
            };
            sessions.insert(entry.session_id.clone(), Arc::new(Mutex::new(session)));
            index.insert(entry.session_id.clone(), entry);
        }
        Ok(Self {
            dir: Some(dir),
            sessions: RwLock::new(sessions),
            index: Mutex::new(index),
            next_id: Mutex::new(next_id),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn write_index(&self, entry: IndexEntry) -> Result<(), ServiceError> {
        let mut index = self.index.lock().expect("index lock");
        index.insert(entry.session_id.clone(), entry);
        if let Some(dir) = &self.dir {
            let entries: Vec<&IndexEntry> = index.values().collect();
            let tmp = dir.join(format!("{INDEX_FILE}.tmp"));
            fs::write(&tmp, serde_json::to_vec_pretty(&entries)?)?;
            fs::rename(tmp, dir.join(INDEX_FILE))?;
        }
        Ok(())
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_owned()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.index
            .lock()
            .expect("index lock")
            .keys()
            .cloned()
            .collect()
    }

    /// Validate `config`, issue an id, record the seed and commit the first
    /// vehicle action.
    pub fn create_session(&self, config: SessionConfig) -> Result<SessionView, ServiceError> {
        let issues = config.issues();
        if !issues.is_empty() {
            return Err(ServiceError::InvalidConfig(issues));
        }
        let seed = config.seed.unwrap_or_else(|| rand::thread_rng().gen());
        let solver = Arc::new(Solver::new(config.game_params()?).map_err(SimError::from)?);
        let id = {
            let mut next = self.next_id.lock().expect("id lock");
            let id = format!("s{:04}", *next);
            *next += 1;
            id
        };
        let log = match &self.dir {
            Some(dir) => Some(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(dir.join(SESSION_DIR).join(format!("{id}.jsonl")))?,
            ),
            None => None,
        };
        let mut session = Session {
            id: id.clone(),
            car_start: config.car_start,
            config,
            seed,
            solver,
            status: SessionStatus::Active,
            crossing: None,
            tallies: Tallies::default(),
            last_outcome: None,
            records: Vec::new(),
            pending_since: Instant::now(),
            log,
        };
        session.start_crossing(1, Instant::now())?;
        let view = session.view();
        self.write_index(session.index_entry())?;
        self.sessions
            .write()
            .expect("sessions lock")
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    pub fn submit_action(&self, id: &str, action: Action) -> Result<TurnResult, ServiceError> {
        self.submit_action_at(id, action, Instant::now())
    }

    /// Like [`SessionStore::submit_action`] with an explicit clock.
    ///
    /// A second submission while one is in flight is rejected. If the turn
    /// deadline has passed, the expired turns are auto-played and the
    /// submission is rejected so the client can re-read the state.
    pub fn submit_action_at(
        &self,
        id: &str,
        action: Action,
        now: Instant,
    ) -> Result<TurnResult, ServiceError> {
        let handle = self.get(id)?;
        let mut session = match handle.try_lock() {
            Ok(s) => s,
            Err(TryLockError::WouldBlock) => return Err(ServiceError::Busy(id.to_owned())),
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        let before = session.tallies.total();
        let expired = session.expire(now)?;
        let result = if expired > 0 {
            Err(ServiceError::TurnExpired {
                timeout_s: session.config.turn_timeout_s.unwrap_or_default(),
            })
        } else {
            session.play(action, false, now)
        };
        if session.tallies.total() != before {
            self.write_index(session.index_entry())?;
        }
        result
    }

    pub fn session_state(&self, id: &str) -> Result<SessionView, ServiceError> {
        self.session_state_at(id, Instant::now())
    }

    pub fn session_state_at(&self, id: &str, now: Instant) -> Result<SessionView, ServiceError> {
        let handle = self.get(id)?;
        let mut session = match handle.try_lock() {
            Ok(s) => s,
            Err(TryLockError::WouldBlock) => return Err(ServiceError::Busy(id.to_owned())),
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        let before = session.tallies.total();
        session.expire(now)?;
        if session.tallies.total() != before {
            self.write_index(session.index_entry())?;
        }
        Ok(session.view())
    }

    /// Records of the selected sessions, in session order, one per line.
    pub fn export(&self, filter: &ExportFilter) -> Result<String, ServiceError> {
        let ids = match &filter.session_id {
            Some(id) => {
                self.get(id)?;
                vec![id.clone()]
            }
            None => self.session_ids(),
        };
        let mut out = String::new();
        for id in ids {
            let handle = self.get(&id)?;
            let session = handle.lock().unwrap_or_else(|p| p.into_inner());
            if filter.finished_only && session.status != SessionStatus::Finished {
                continue;
            }
            for r in &session.records {
                out.push_str(&r.to_line());
                out.push('\n');
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(crossings: u32, seed: u64) -> SessionConfig {
        SessionConfig {
            crossings_total: crossings,
            seed: Some(seed),
            ..Default::default()
        }
    }

    #[test]
    fn fresh_session_view() {
        let store = SessionStore::in_memory();
        let v = store.create_session(SessionConfig::default()).unwrap();
        assert_eq!(v.crossing_id, 1);
        assert_eq!(v.crossings_total, 20);
        assert_eq!(v.step, 0);
        assert_eq!(v.car_pos_m, Some(4.3));
        assert!((6.0..=8.0).contains(&v.ped_pos_m));
        assert_eq!(v.status, SessionStatus::Active);
    }

    #[test]
    fn rejects_invalid_config() {
        let store = SessionStore::in_memory();
        let mut c = SessionConfig::default();
        c.geometry.pedestrian_fast_speed = -0.4;
        match store.create_session(c) {
            Err(ServiceError::InvalidConfig(issues)) => assert_eq!(issues[0].field, "geometry"),
            other => panic!("expected rejection, got {other:?}"),
        }
        assert!(store.session_ids().is_empty());
    }

    #[test]
    fn single_crossing_session_finishes() {
        let store = SessionStore::in_memory();
        let id = store.create_session(config(1, 3)).unwrap().session_id;
        let mut turns = 0;
        loop {
            let r = store.submit_action(&id, Action::Fast).unwrap();
            turns += 1;
            if r.state.status == SessionStatus::Finished {
                assert!(r.crossing_outcome.is_some());
                assert_eq!(r.state.tallies.total(), 1);
                break;
            }
            assert!(turns < 200);
        }
        assert!(matches!(
            store.submit_action(&id, Action::Fast),
            Err(ServiceError::SessionFinished(_))
        ));
        assert!(matches!(
            store.session_state("nope"),
            Err(ServiceError::UnknownSession(_))
        ));
    }

    #[test]
    fn committed_action_ignores_submission() {
        let store = SessionStore::in_memory();
        let id = store.create_session(config(1, 9)).unwrap().session_id;
        let mut actions = Vec::new();
        let mut revealed = Vec::new();
        for i in 0.. {
            let a = if i % 3 == 0 {
                Action::Slow
            } else {
                Action::Fast
            };
            let r = store.submit_action(&id, a).unwrap();
            actions.push(a);
            revealed.push(r.vehicle_action);
            if r.crossing_outcome.is_some() {
                break;
            }
        }
        for t in 0..actions.len() {
            let replay = store.create_session(config(1, 9)).unwrap().session_id;
            for &a in &actions[..t] {
                store.submit_action(&replay, a).unwrap();
            }
            let flipped = match actions[t] {
                Action::Slow => Action::Fast,
                Action::Fast => Action::Slow,
            };
            let r = store.submit_action(&replay, flipped).unwrap();
            assert_eq!(r.vehicle_action, revealed[t], "turn {t}");
        }
    }

    #[test]
    fn timeout_autoplays_fast() {
        let store = SessionStore::in_memory();
        let c = SessionConfig {
            turn_timeout_s: Some(1.0),
            ..config(1, 1)
        };
        let id = store.create_session(c).unwrap().session_id;
        let later = Instant::now() + Duration::from_millis(2500);
        let err = store
            .submit_action_at(&id, Action::Slow, later)
            .unwrap_err();
        assert!(matches!(err, ServiceError::TurnExpired { .. }));
        let out = store.export(&ExportFilter::default()).unwrap();
        let auto = out
            .lines()
            .filter(|l| l.contains("\"ped_auto\":true"))
            .count();
        assert_eq!(auto, 2);
        assert_eq!(store.session_state_at(&id, later).unwrap().step, 2);
    }

    #[test]
    fn busy_session_rejects_second_submit() {
        let store = SessionStore::in_memory();
        let id = store.create_session(config(1, 2)).unwrap().session_id;
        let handle = store.get(&id).unwrap();
        let _guard = handle.lock().unwrap();
        assert!(matches!(
            store.submit_action(&id, Action::Fast),
            Err(ServiceError::Busy(_))
        ));
    }

    #[test]
    fn persisted_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let id = {
            let store = SessionStore::open(dir.path()).unwrap();
            let id = store.create_session(config(1, 5)).unwrap().session_id;
            while store.session_state(&id).unwrap().status == SessionStatus::Active {
                store.submit_action(&id, Action::Fast).unwrap();
            }
            id
        };
        let reopened = SessionStore::open(dir.path()).unwrap();
        assert_eq!(reopened.session_ids(), vec![id.clone()]);
        let text = reopened.export(&ExportFilter::default()).unwrap();
        let file =
            fs::read_to_string(dir.path().join(SESSION_DIR).join(format!("{id}.jsonl"))).unwrap();
        assert_eq!(text, file);
        let next = reopened.create_session(config(1, 6)).unwrap().session_id;
        assert_ne!(next, id);
    }

    #[test]
    fn empty_export() {
        assert_eq!(
            SessionStore::in_memory()
                .export(&ExportFilter::default())
                .unwrap(),
            ""
        );
    }
}
