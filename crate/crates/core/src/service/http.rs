//! JSON-over-HTTP front end for [`SessionStore`].
//!
//! | method | path                      | body                 | reply                        |
//! |--------|---------------------------|----------------------|------------------------------|
//! | POST   | `/sessions`               | session config or {} | `201`, session state         |
//! | GET    | `/sessions`               |                      | list of session ids          |
//! | GET    | `/sessions/{id}`          |                      | session state                |
//! | POST   | `/sessions/{id}/actions`  | `{"action":"SLOW"}`  | turn result                  |
//! | GET    | `/export`                 |                      | crossing log, one per line   |
//!
//! `/export` accepts `session=<id>` and `finished=true` query parameters.
//! Errors reply with `{"error": "...", "issues": [...]}`.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use tiny_http::{Header, Method, Request, Response, Server};

use super::{ExportFilter, ServiceError, SessionStore};
use crate::game::Action;
use crate::sim::{FieldIssue, SessionConfig};

const JSON: &str = "application/json";
const NDJSON: &str = "application/x-ndjson";

/// A reply before it is put on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub content_type: &'static str,
    pub body: String,
}

impl Reply {
    fn json<T: Serialize>(status: u16, value: &T) -> Self {
        Self {
            status,
            content_type: JSON,
            body: serde_json::to_string(value).expect("reply serializes"),
        }
    }

    fn error(status: u16, message: impl Into<String>, issues: Vec<FieldIssue>) -> Self {
        #[derive(Serialize)]
        struct Body {
            error: String,
            #[serde(skip_serializing_if = "Vec::is_empty")]
            issues: Vec<FieldIssue>,
        }
        Self::json(
            status,
            &Body {
                error: message.into(),
                issues,
            },
        )
    }
}

impl From<ServiceError> for Reply {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::UnknownSession(_) => 404,
            ServiceError::Busy(_)
            | ServiceError::SessionFinished(_)
            | ServiceError::Archived(_)
            | ServiceError::TurnExpired { .. } => 409,
            ServiceError::InvalidConfig(_) => 400,
            ServiceError::Sim(
                crate::sim::SimError::NoPendingTurn | crate::sim::SimError::Finished,
            ) => 409,
            _ => 500,
        };
        let issues = match &e {
            ServiceError::InvalidConfig(issues) => issues.clone(),
            _ => Vec::new(),
        };
        Reply::error(status, e.to_string(), issues)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionBody {
    action: Action,
}

fn query_pairs(query: &str) -> impl Iterator<Item = (&str, &str)> {
    query
        .split('&')
        .filter(|s| !s.is_empty())
        .map(|kv| kv.split_once('=').unwrap_or((kv, "")))
}

/// Route one request.
pub fn handle(store: &SessionStore, method: &str, url: &str, body: &str) -> Reply {
    let (path, query) = url.split_once('?').unwrap_or((url, ""));
    let segments: Vec<&str> = path.split('/').filter(|s| !s.is_empty()).collect();
    let result = match (method, segments.as_slice()) {
        ("POST", ["sessions"]) => {
            let config = if body.trim().is_empty() {
                Ok(SessionConfig::default())
            } else {
                serde_json::from_str::<SessionConfig>(body)
            };
            match config {
                Ok(c) => store.create_session(c).map(|v| Reply::json(201, &v)),
                Err(e) => return Reply::error(400, format!("bad session config: {e}"), Vec::new()),
            }
        }
        ("GET", ["sessions"]) => Ok(Reply::json(200, &store.session_ids())),
        ("GET", ["sessions", id]) => store.session_state(id).map(|v| Reply::json(200, &v)),
        ("POST", ["sessions", id, "actions"]) => match serde_json::from_str::<ActionBody>(body) {
            Ok(b) => store
                .submit_action(id, b.action)
                .map(|r| Reply::json(200, &r)),
            Err(e) => return Reply::error(400, format!("bad action: {e}"), Vec::new()),
        },
        ("GET", ["export"]) => {
            let mut filter = ExportFilter::default();
            for (k, v) in query_pairs(query) {
                match k {
                    "session" => filter.session_id = Some(v.to_owned()),
                    "finished" => filter.finished_only = v == "true" || v == "1",
                    _ => {
                        return Reply::error(
                            400,
                            format!("unknown query parameter {k}"),
                            Vec::new(),
                        )
                    }
                }
            }
            store.export(&filter).map(|body| Reply {
                status: 200,
                content_type: NDJSON,
                body,
            })
        }
        ("OPTIONS", _) => Ok(Reply {
            status: 204,
            content_type: JSON,
            body: String::new(),
        }),
        (_, ["sessions"] | ["sessions", _] | ["sessions", _, "actions"] | ["export"]) => {
            return Reply::error(405, format!("{method} not allowed on {path}"), Vec::new())
        }
        _ => return Reply::error(404, format!("no route for {path}"), Vec::new()),
    };
    result.unwrap_or_else(Reply::from)
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("static header is valid")
}

fn respond(store: &SessionStore, mut request: Request) {
    let mut body = String::new();
    let reply = match request.as_reader().read_to_string(&mut body) {
        Ok(_) => {
            let method = match request.method() {
                Method::Get => "GET",
                Method::Post => "POST",
                Method::Options => "OPTIONS",
                other => other.as_str(),
            };
            handle(store, method, request.url(), &body)
        }
        Err(e) => Reply::error(400, format!("unreadable body: {e}"), Vec::new()),
    };
    log::info!("{} {} -> {}", request.method(), request.url(), reply.status);
    let response = Response::from_string(reply.body)
        .with_status_code(reply.status)
        .with_header(header("Content-Type", reply.content_type))
        .with_header(header("Access-Control-Allow-Origin", "*"))
        .with_header(header("Access-Control-Allow-Methods", "GET, POST, OPTIONS"))
        .with_header(header("Access-Control-Allow-Headers", "Content-Type"));
    if let Err(e) = request.respond(response) {
        log::warn!("failed to send reply: {e}");
    }
}

/// A running server. Dropping it without [`ServerHandle::shutdown`] leaves
/// the worker threads running.
pub struct ServerHandle {
    server: Arc<Server>,
    workers: Vec<JoinHandle<()>>,
    addr: SocketAddr,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Block until the workers exit.
    pub fn join(self) {
        for w in self.workers {
            let _ = w.join();
        }
    }

    pub fn shutdown(self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        self.join();
    }
}

/// Listen on `addr` with `workers` threads. Turns within one session are
/// still serialized by the store.
pub fn serve(store: Arc<SessionStore>, addr: &str, workers: usize) -> io::Result<ServerHandle> {
    let server = Arc::new(Server::http(addr).map_err(io::Error::other)?);
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| io::Error::other("server is not listening on an IP socket"))?;
    let workers = (0..workers.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let store = Arc::clone(&store);
            std::thread::spawn(move || {
                while let Ok(request) = server.recv() {
                    respond(&store, request);
                }
            })
        })
        .collect();
    Ok(ServerHandle {
        server,
        workers,
        addr,
    })
}
