//! JSON wire protocol for out-of-process calculators.
//!
//! Request: `{"cell": [9 floats], "symbols": [...], "positions": [[x,y,z]...], "tags": [...]}`.
//! Response: `{"energy": float, "forces": [[fx,fy,fz]...]}`.
//! Carried over HTTP (`POST /calculate`) or a subprocess speaking one JSON
//! document per line on stdin/stdout.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{CalcError, Calculator, EnergyForces};
use crate::structures::{Structure, Vec3};

pub const DEFAULT_TIMEOUT_SECS: f64 = 300.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub cell: [f64; 9],
    pub symbols: Vec<String>,
    pub positions: Vec<[f64; 3]>,
    pub tags: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub energy: f64,
    pub forces: Vec<[f64; 3]>,
}

impl WireRequest {
    pub fn from_structure(s: &Structure) -> Self {
        let c = &s.lattice.cell;
        WireRequest {
            cell: [
                c[0][0], c[0][1], c[0][2], c[1][0], c[1][1], c[1][2], c[2][0], c[2][1], c[2][2],
            ],
            symbols: s.symbols().iter().map(|x| x.to_string()).collect(),
            positions: s
                .atoms
                .iter()
                .map(|a| [a.position.x, a.position.y, a.position.z])
                .collect(),
            tags: s.atoms.iter().map(|a| a.tag as u8).collect(),
        }
    }

    pub fn to_structure(&self) -> Result<Structure, String> {
        use crate::structures::{Atom, Lattice, Tag};
        let c = self.cell;
        let lattice = Lattice::new([[c[0], c[1], c[2]], [c[3], c[4], c[5]], [c[6], c[7], c[8]]], [true; 3])
            .map_err(|e| e.to_string())?;
        if self.symbols.len() != self.positions.len() || self.tags.len() != self.positions.len() {
            return Err("symbols, positions and tags differ in length".into());
        }
        let atoms = self
            .symbols
            .iter()
            .zip(&self.positions)
            .zip(&self.tags)
            .map(|((sym, p), &t)| {
                let tag = Tag::try_from(t)?;
                Atom::new(sym, Vec3::from(*p), tag).map_err(|e| e.to_string())
            })
            .collect::<Result<Vec<_>, String>>()?;
        Structure::new(lattice, atoms).map_err(|e| e.to_string())
    }
}

fn excerpt(body: &str) -> String {
    let mut s: String = body.chars().take(200).collect();
    if body.chars().count() > 200 {
        s.push('…');
    }
    s
}

/// Decodes and validates a response body for a structure of `n_atoms`.
pub fn decode_response(endpoint: &str, body: &str, n_atoms: usize) -> Result<EnergyForces, CalcError> {
    let r: WireResponse = serde_json::from_str(body.trim()).map_err(|e| CalcError::Malformed {
        endpoint: endpoint.to_string(),
        message: e.to_string(),
        excerpt: excerpt(body),
    })?;
    let ef = EnergyForces {
        energy: r.energy,
        forces: r.forces.into_iter().map(Vec3::from).collect(),
    };
    ef.check(n_atoms)?;
    Ok(ef)
}

pub fn encode_response(ef: &EnergyForces) -> String {
    serde_json::to_string(&WireResponse {
        energy: ef.energy,
        forces: ef.forces.iter().map(|f| [f.x, f.y, f.z]).collect(),
    })
    .expect("serialisable")
}

/// Answers one request line with `calc`; failures become `{"error": ...}`.
pub fn answer(calc: &dyn Calculator, line: &str) -> String {
    let result = serde_json::from_str::<WireRequest>(line)
        .map_err(|e| e.to_string())
        .and_then(|r| r.to_structure())
        .and_then(|s| calc.compute(&s).map_err(|e| e.to_string()));
    match result {
        Ok(ef) => encode_response(&ef),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

/// Client for `POST {url}/calculate`.
pub struct HttpCalculator {
    url: String,
    timeout: Duration,
    agent: ureq::Agent,
}

impl HttpCalculator {
    pub fn new(url: &str, timeout_secs: f64) -> Self {
        let base = url.trim_end_matches('/');
        let url = if base.ends_with("/calculate") {
            base.to_string()
        } else {
            format!("{base}/calculate")
        };
        let timeout = Duration::from_secs_f64(timeout_secs);
        HttpCalculator {
            url,
            timeout,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Calculator for HttpCalculator {
    fn compute(&self, s: &Structure) -> Result<EnergyForces, CalcError> {
        let req = WireRequest::from_structure(s);
        let resp = self.agent.post(&self.url).send_json(&req);
        let body = match resp {
            Ok(r) => r.into_string().map_err(|e| transport(&self.url, e))?,
            Err(ureq::Error::Status(code, r)) => {
                let body = r.into_string().unwrap_or_default();
                return Err(CalcError::Transport {
                    endpoint: self.url.clone(),
                    message: format!("HTTP {code}: {}", excerpt(&body)),
                });
            }
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") || msg.contains("Timeout") {
                    return Err(CalcError::Timeout {
                        endpoint: self.url.clone(),
                        seconds: self.timeout.as_secs_f64(),
                    });
                }
                return Err(transport(&self.url, msg));
            }
        };
        decode_response(&self.url, &body, s.len())
    }

    fn key(&self) -> String {
        format!("http:{}", self.url)
    }
}

fn transport(endpoint: &str, e: impl std::fmt::Display) -> CalcError {
    CalcError::Transport {
        endpoint: endpoint.to_string(),
        message: e.to_string(),
    }
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Client for a calculator subprocess. Each concurrent caller checks out its
/// own process from a pool, so no conversation state is shared.
pub struct SubprocessCalculator {
    command: Vec<String>,
    timeout: Duration,
    pool: Mutex<Vec<Worker>>,
}

impl SubprocessCalculator {
    pub fn new(command: Vec<String>, timeout_secs: f64) -> Result<Self, CalcError> {
        if command.is_empty() {
            return Err(CalcError::InvalidParams("empty calculator command".into()));
        }
        Ok(SubprocessCalculator {
            command,
            timeout: Duration::from_secs_f64(timeout_secs),
            pool: Mutex::new(Vec::new()),
        })
    }

    fn endpoint(&self) -> String {
        self.command.join(" ")
    }

    fn spawn(&self) -> Result<Worker, CalcError> {
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| transport(&self.endpoint(), format!("spawn failed: {e}")))?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Worker {
            child,
            stdin,
            lines: rx,
        })
    }

    fn exchange(&self, w: &mut Worker, line: &str) -> Result<String, CalcError> {
        writeln!(w.stdin, "{line}")
            .and_then(|_| w.stdin.flush())
            .map_err(|e| transport(&self.endpoint(), format!("write failed: {e}")))?;
        match w.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => Err(transport(&self.endpoint(), format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(CalcError::Timeout {
                endpoint: self.endpoint(),
                seconds: self.timeout.as_secs_f64(),
            }),
            Err(RecvTimeoutError::Disconnected) => Err(transport(&self.endpoint(), "process closed its output")),
        }
    }
}

impl Calculator for SubprocessCalculator {
    fn compute(&self, s: &Structure) -> Result<EnergyForces, CalcError> {
        let pooled = self.pool.lock().expect("pool lock").pop();
        let mut worker = match pooled {
            Some(w) => w,
            None => self.spawn()?,
        };
        let line = serde_json::to_string(&WireRequest::from_structure(s)).expect("serialisable");
        match self.exchange(&mut worker, &line) {
            Ok(reply) => {
                let out = decode_response(&self.endpoint(), &reply, s.len());
                self.pool.lock().expect("pool lock").push(worker);
                out
            }
            Err(e) => {
                worker.kill();
                Err(e)
            }
        }
    }

    fn key(&self) -> String {
        format!("subprocess:{}", self.endpoint())
    }
}

impl Drop for SubprocessCalculator {
    fn drop(&mut self) {
        if let Ok(mut pool) = self.pool.lock() {
            for w in pool.drain(..) {
                drop(w.stdin);
                let mut child = w.child;
                let _ = child.wait();
            }
        }
    }
}

/// Serves the line protocol until `input` closes.
pub fn serve_lines(calc: &dyn Calculator, input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(output, "{}", answer(calc, &line))?;
        output.flush()?;
    }
    Ok(())
}

/// A running HTTP calculator server.
pub struct HttpServer {
    server: Arc<tiny_http::Server>,
    thread: Option<JoinHandle<()>>,
    port: u16,
}

impl HttpServer {
    pub fn url(&self) -> String {
        format!("http://127.0.0.1:{}", self.port)
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    /// Blocks until the server stops.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for HttpServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Starts an HTTP server answering `POST /calculate` with `calc`.
pub fn serve_http(calc: Arc<dyn Calculator>, addr: &str) -> Result<HttpServer, CalcError> {
    let server = Arc::new(tiny_http::Server::http(addr).map_err(|e| transport(addr, e))?);
    let port = server
        .server_addr()
        .to_ip()
        .map(|a| a.port())
        .ok_or_else(|| transport(addr, "not an IP listener"))?;
    let srv = Arc::clone(&server);
    let thread = std::thread::spawn(move || {
        for mut req in srv.incoming_requests() {
            let mut body = String::new();
            let response = if req.url() != "/calculate" || *req.method() != tiny_http::Method::Post {
                tiny_http::Response::from_string("not found").with_status_code(404)
            } else if req.as_reader().read_to_string(&mut body).is_err() {
                tiny_http::Response::from_string("unreadable body").with_status_code(400)
            } else {
                let reply = answer(calc.as_ref(), &body);
                let code = if reply.starts_with("{\"error\"") { 422 } else { 200 };
                tiny_http::Response::from_string(reply).with_status_code(code)
            };
            let _ = req.respond(response);
        }
    });
    Ok(HttpServer {
        server,
        thread: Some(thread),
        port,
    })
}
