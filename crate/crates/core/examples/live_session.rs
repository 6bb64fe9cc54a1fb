//! Drive the live-session HTTP API the way a browser client would: create a
//! session, play every turn, then export the log.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

use sequential_chicken::service::{http, SessionStore};

fn request(
    addr: std::net::SocketAddr,
    method: &str,
    path: &str,
    body: &str,
) -> std::io::Result<String> {
    let mut stream = TcpStream::connect(addr)?;
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    let mut reply = String::new();
    stream.read_to_string(&mut reply)?;
    Ok(reply
        .split_once("\r\n\r\n")
        .map(|(_, b)| b.to_owned())
        .unwrap_or_default())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let server = http::serve(Arc::new(SessionStore::in_memory()), "127.0.0.1:0", 2)?;
    let addr = server.addr();
    println!("serving on http://{addr}");

    let created: serde_json::Value = serde_json::from_str(&request(
        addr,
        "POST",
        "/sessions",
        r#"{"crossings_total":3,"seed":5}"#,
    )?)?;
    let id = created["session_id"]
        .as_str()
        .ok_or("no session id")?
        .to_owned();
    println!("session {id}");

    let mut turns = 0;
    loop {
        let action = if turns % 3 == 0 { "SLOW" } else { "FAST" };
        let reply = request(
            addr,
            "POST",
            &format!("/sessions/{id}/actions"),
            &format!(r#"{{"action":"{action}"}}"#),
        )?;
        let turn: serde_json::Value = serde_json::from_str(&reply)?;
        if turn.get("error").is_some() {
            println!("server: {}", turn["error"]);
            break;
        }
        turns += 1;
        if let Some(outcome) = turn["crossing_outcome"].as_str() {
            println!("crossing {} -> {outcome}", turn["record"]["crossing_id"]);
        }
        if turn["state"]["status"] == "finished" {
            break;
        }
    }
    let export = request(addr, "GET", &format!("/export?session={id}"), "")?;
    println!(
        "{turns} turns played, {} records exported",
        export.lines().count()
    );
    server.shutdown();
    Ok(())
}
