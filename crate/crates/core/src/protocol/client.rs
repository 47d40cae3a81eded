//! Engine-side clients and the busy-retry policy.

use super::codec::{write_message, CodecError, LineReader};
use super::message::{Command, Response, Status};
use super::server::ModuleServer;
use serde::{Deserialize, Serialize};
use std::io::{self, BufReader};
use std::net::{SocketAddr, TcpStream};
use std::sync::{Arc, Mutex};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("connection to {endpoint} failed: {source}")]
    Connect {
        endpoint: String,
        #[source]
        source: io::Error,
    },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Codec(CodecError),
    #[error("connection closed before a response arrived")]
    Closed,
    #[error("response id {got:?} does not match command id {expected:?}")]
    IdMismatch { expected: String, got: String },
}

/// Anything that can deliver a command to a module and return its response.
pub trait Transport: Send + Sync {
    fn request(&self, cmd: &Command) -> Result<Response, TransportError>;
}

/// Calls a module server directly, without sockets.
#[derive(Clone)]
pub struct InProcessClient {
    module: Arc<ModuleServer>,
}

impl InProcessClient {
    pub fn new(module: Arc<ModuleServer>) -> Self {
        Self { module }
    }
}

impl Transport for InProcessClient {
    fn request(&self, cmd: &Command) -> Result<Response, TransportError> {
        Ok(self.module.dispatch(cmd))
    }
}

type Connection = (LineReader<BufReader<TcpStream>>, TcpStream);

/// Newline-delimited JSON over one lazily opened TCP connection.
pub struct TcpClient {
    endpoint: String,
    conn: Mutex<Option<Connection>>,
}

impl TcpClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self { endpoint: endpoint.into(), conn: Mutex::new(None) }
    }

    pub fn from_addr(addr: SocketAddr) -> Self {
        Self::new(addr.to_string())
    }

    fn connect(&self) -> Result<Connection, TransportError> {
        let stream = TcpStream::connect(&self.endpoint)
            .map_err(|source| TransportError::Connect { endpoint: self.endpoint.clone(), source })?;
        stream.set_nodelay(true)?;
        let writer = stream.try_clone()?;
        Ok((LineReader::new(BufReader::new(stream)), writer))
    }

    fn exchange(conn: &mut Connection, cmd: &Command) -> Result<Response, TransportError> {
        write_message(&mut conn.1, cmd)?;
        match conn.0.next_message::<Response>() {
            None => Err(TransportError::Closed),
            Some(Err(CodecError::Io(e))) => Err(TransportError::Io(e)),
            Some(Err(e)) => Err(TransportError::Codec(e)),
            Some(Ok(resp)) if resp.id != cmd.id => {
                Err(TransportError::IdMismatch { expected: cmd.id.clone(), got: resp.id })
            }
            Some(Ok(resp)) => Ok(resp),
        }
    }
}

impl Transport for TcpClient {
    fn request(&self, cmd: &Command) -> Result<Response, TransportError> {
        let mut guard = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(self.connect()?);
        }
        let result = Self::exchange(guard.as_mut().expect("connected above"), cmd);
        if result.is_err() {
            // drop the connection so the next request reconnects
            *guard = None;
        }
        result
    }
}

/// How [`send_command`] treats `busy` replies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// Wait before the first retry, in seconds.
    pub backoff_s: f64,
    /// Growth factor of the wait between consecutive retries.
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 5, backoff_s: 5.0, multiplier: 2.0 }
    }
}

impl RetryPolicy {
    pub fn backoff_for(&self, retry: u32) -> f64 {
        self.backoff_s * self.multiplier.powi(retry as i32)
    }
}

/// Outcome of one delivery attempt.
#[derive(Debug, Clone, PartialEq)]
pub enum AttemptOutcome {
    Response(Response),
    TransportError(String),
}

impl AttemptOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            AttemptOutcome::Response(r) => r.status.as_str(),
            AttemptOutcome::TransportError(_) => "transport_error",
        }
    }
}

/// Observes attempts and performs the waits between retries.
pub trait AttemptSink {
    fn attempt(&mut self, cmd: &Command, attempt: u32, outcome: &AttemptOutcome);
    fn backoff(&mut self, seconds: f64);
}

/// Logs nothing and sleeps wall-clock time between retries.
pub struct WallClockSink;

impl AttemptSink for WallClockSink {
    fn attempt(&mut self, _: &Command, _: u32, _: &AttemptOutcome) {}
    fn backoff(&mut self, seconds: f64) {
        std::thread::sleep(Duration::from_secs_f64(seconds.max(0.0)));
    }
}

#[derive(Debug, Error)]
pub enum SendError {
    #[error("module still busy after {attempts} attempts")]
    RetriesExhausted { attempts: u32 },
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Delivers `cmd`, retrying while the module answers `busy`. Returns the first
/// terminal response; a `failed` response is returned as-is.
pub fn send_command(
    transport: &dyn Transport,
    cmd: &Command,
    policy: &RetryPolicy,
    sink: &mut dyn AttemptSink,
) -> Result<Response, SendError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        let response = match transport.request(cmd) {
            Ok(r) => r,
            Err(e) => {
                sink.attempt(cmd, attempt, &AttemptOutcome::TransportError(e.to_string()));
                return Err(e.into());
            }
        };
        let status = response.status;
        sink.attempt(cmd, attempt, &AttemptOutcome::Response(response.clone()));
        if status != Status::Busy {
            return Ok(response);
        }
        if attempt > policy.max_retries {
            return Err(SendError::RetriesExhausted { attempts: attempt });
        }
        sink.backoff(policy.backoff_for(attempt - 1));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    /// Replies from a script, then succeeds forever.
    struct Scripted {
        replies: Mutex<VecDeque<Status>>,
    }

    impl Scripted {
        fn new(s: &[Status]) -> Self {
            Self { replies: Mutex::new(s.iter().copied().collect()) }
        }
    }

    impl Transport for Scripted {
        fn request(&self, cmd: &Command) -> Result<Response, TransportError> {
            Ok(match self.replies.lock().unwrap().pop_front().unwrap_or(Status::Succeeded) {
                Status::Busy => Response::busy(&cmd.id),
                Status::Failed => Response::failed(&cmd.id, "no"),
                Status::Succeeded => Response::succeeded(&cmd.id, Default::default(), 1.0),
            })
        }
    }

    #[derive(Default)]
    struct Log {
        attempts: Vec<(u32, &'static str)>,
        waits: Vec<f64>,
    }

    impl AttemptSink for Log {
        fn attempt(&mut self, _: &Command, attempt: u32, outcome: &AttemptOutcome) {
            self.attempts.push((attempt, outcome.label()));
        }
        fn backoff(&mut self, seconds: f64) {
            self.waits.push(seconds);
        }
    }

    fn policy(max_retries: u32) -> RetryPolicy {
        RetryPolicy { max_retries, ..Default::default() }
    }

    #[test]
    fn busy_twice_then_idle_succeeds_on_the_third_attempt() {
        let t = Scripted::new(&[Status::Busy, Status::Busy]);
        let mut log = Log::default();
        let r = send_command(&t, &Command::new("c", "m", "a"), &policy(3), &mut log).unwrap();
        assert_eq!(r.status, Status::Succeeded);
        assert_eq!(log.attempts, vec![(1, "busy"), (2, "busy"), (3, "succeeded")]);
        assert_eq!(log.waits, vec![5.0, 10.0]);
    }

    #[test]
    fn always_busy_exhausts_retries() {
        let t = Scripted::new(&[Status::Busy; 10]);
        let mut log = Log::default();
        let err = send_command(&t, &Command::new("c", "m", "a"), &policy(2), &mut log).unwrap_err();
        assert!(matches!(err, SendError::RetriesExhausted { attempts: 3 }));
        assert_eq!(log.attempts.len(), 3);
        assert_eq!(log.waits.len(), 2);
    }

    #[test]
    fn failure_is_returned_without_retry() {
        let t = Scripted::new(&[Status::Failed]);
        let mut log = Log::default();
        let r = send_command(&t, &Command::new("c", "m", "a"), &policy(5), &mut log).unwrap();
        assert_eq!(r.status, Status::Failed);
        assert_eq!(log.attempts, vec![(1, "failed")]);
        assert!(log.waits.is_empty());
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error() {
        // bind then drop to get a port nobody listens on
        let addr = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
        let client = TcpClient::from_addr(addr);
        let mut log = Log::default();
        let err = send_command(&client, &Command::new("c", "m", "a"), &policy(1), &mut log).unwrap_err();
        assert!(matches!(err, SendError::Transport(TransportError::Connect { .. })));
        assert_eq!(log.attempts, vec![(1, "transport_error")]);
    }

    #[test]
    fn backoff_grows_geometrically() {
        let p = RetryPolicy::default();
        assert_eq!((0..5).map(|r| p.backoff_for(r)).collect::<Vec<_>>(), vec![5.0, 10.0, 20.0, 40.0, 80.0]);
    }
}
