//! Module servers: single-occupancy dispatch around a device handler, served
//! in-process or over TCP.

use super::codec::{write_message, LineReader};
use super::message::{meta, About, Args, Command, ModuleState, ModuleStatus, Response};
use serde_json::Value;
use std::io::{self, BufReader};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU8, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct ActionError(pub String);

impl ActionError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

/// Result of a completed device action.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outcome {
    pub data: Args,
    pub sim_duration_s: f64,
}

impl Outcome {
    pub fn new(sim_duration_s: f64) -> Self {
        Self { data: Args::new(), sim_duration_s }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.data.insert(key.to_string(), value.into());
        self
    }
}

/// An instrument driver as seen by its module server.
pub trait Device: Send + 'static {
    fn about(&self) -> About;
    fn handle(&mut self, action: &str, args: &Args) -> Result<Outcome, ActionError>;
    /// Device-specific snapshot reported by the `state` meta-action.
    fn snapshot(&self) -> Value {
        Value::Null
    }
}

/// What a fault hook may force in place of running the handler.
#[derive(Debug, Clone, PartialEq)]
pub enum InjectedFault {
    Busy,
    Fail(String),
}

/// Consulted once for every non-meta command a server receives.
pub trait FaultHook: Send + 'static {
    fn before(&mut self, cmd: &Command) -> Option<InjectedFault>;
}

const IDLE: u8 = 0;
const BUSY: u8 = 1;
const ERROR: u8 = 2;

/// Serializes handler execution for one device. Commands arriving while a
/// handler runs are rejected with `busy`; `state` and `about` are always
/// answered.
pub struct ModuleServer {
    about: About,
    device: Mutex<Box<dyn Device>>,
    occupied: AtomicBool,
    status: AtomicU8,
    faults: Mutex<Option<Box<dyn FaultHook>>>,
}

impl ModuleServer {
    pub fn new(device: Box<dyn Device>) -> Arc<Self> {
        Arc::new(Self {
            about: device.about(),
            device: Mutex::new(device),
            occupied: AtomicBool::new(false),
            status: AtomicU8::new(IDLE),
            faults: Mutex::new(None),
        })
    }

    pub fn with_faults(device: Box<dyn Device>, faults: Box<dyn FaultHook>) -> Arc<Self> {
        let server = Self::new(device);
        *server.faults.lock().unwrap() = Some(faults);
        server
    }

    pub fn about(&self) -> &About {
        &self.about
    }

    pub fn status(&self) -> ModuleStatus {
        match self.status.load(Ordering::SeqCst) {
            BUSY => ModuleStatus::Busy,
            ERROR => ModuleStatus::Error,
            _ => ModuleStatus::Idle,
        }
    }

    pub fn state(&self) -> ModuleState {
        ModuleState { status: self.status(), about: self.about.clone() }
    }

    pub fn dispatch(&self, cmd: &Command) -> Response {
        match cmd.action.as_str() {
            meta::ABOUT => return self.meta_response(cmd, false),
            meta::STATE => return self.meta_response(cmd, true),
            _ => {}
        }
        if self
            .occupied
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .is_err()
        {
            return Response::busy(&cmd.id);
        }
        let injected = self.faults.lock().unwrap().as_mut().and_then(|f| f.before(cmd));
        let response = match injected {
            Some(InjectedFault::Busy) => Response::busy(&cmd.id),
            Some(InjectedFault::Fail(msg)) => Response::failed(&cmd.id, msg),
            None => self.run_handler(cmd),
        };
        self.occupied.store(false, Ordering::SeqCst);
        response
    }

    fn run_handler(&self, cmd: &Command) -> Response {
        self.status.store(BUSY, Ordering::SeqCst);
        let mut device = self.device.lock().unwrap_or_else(|p| p.into_inner());
        let result = catch_unwind(AssertUnwindSafe(|| device.handle(&cmd.action, &cmd.args)));
        drop(device);
        let (response, status) = match result {
            Ok(Ok(outcome)) => (Response::succeeded(&cmd.id, outcome.data, outcome.sim_duration_s.max(0.0)), IDLE),
            Ok(Err(e)) => (Response::failed(&cmd.id, e.0), IDLE),
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "handler panicked".to_string());
                (Response::failed(&cmd.id, format!("handler panicked: {msg}")), ERROR)
            }
        };
        self.status.store(status, Ordering::SeqCst);
        response
    }

    fn meta_response(&self, cmd: &Command, with_state: bool) -> Response {
        let mut data = Args::new();
        data.insert("about".into(), serde_json::to_value(&self.about).expect("about serializes"));
        if with_state {
            data.insert("status".into(), serde_json::to_value(self.status()).expect("status serializes"));
            // the device lock is held for the whole action; skip the snapshot then
            if !self.occupied.load(Ordering::SeqCst) {
                if let Ok(device) = self.device.try_lock() {
                    data.insert("snapshot".into(), device.snapshot());
                }
            }
        }
        Response::succeeded(&cmd.id, data, 0.0)
    }
}

/// A module server listening on a TCP endpoint.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn is_stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    /// Stops accepting connections and waits for the accept loop to exit.
    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    /// Blocks until a `shutdown` meta-action stops the server.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop_and_join();
        }
    }
}

/// Binds `endpoint` and serves `module` until shut down. Each connection gets
/// its own thread; handler execution stays serialized by the module.
pub fn serve(module: Arc<ModuleServer>, endpoint: impl ToSocketAddrs) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(endpoint)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop_accept = Arc::clone(&stop);
    let accept = thread::Builder::new()
        .name(format!("module-{}", module.about().name))
        .spawn(move || {
            for stream in listener.incoming() {
                if stop_accept.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let module = Arc::clone(&module);
                let stop_conn = Arc::clone(&stop_accept);
                thread::spawn(move || {
                    let _ = handle_connection(stream, &module, &stop_conn, addr);
                });
            }
        })?;
    Ok(ServerHandle { addr, stop, accept: Some(accept) })
}

fn handle_connection(stream: TcpStream, module: &ModuleServer, stop: &AtomicBool, addr: SocketAddr) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let mut reader = LineReader::new(BufReader::new(stream));
    while let Some(msg) = reader.next_message::<Command>() {
        let response = match msg {
            Ok(cmd) if cmd.action == meta::SHUTDOWN => {
                write_message(&mut writer, &Response::succeeded(&cmd.id, Args::new(), 0.0))?;
                stop.store(true, Ordering::SeqCst);
                let _ = TcpStream::connect(addr);
                return Ok(());
            }
            Ok(cmd) => module.dispatch(&cmd),
            Err(super::codec::CodecError::Io(e)) => return Err(e),
            Err(e) => Response::failed("", e.to_string()),
        };
        write_message(&mut writer, &response)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{InProcessClient, Status, Transport};
    use std::sync::mpsc;
    use std::time::Duration;

    /// Blocks inside `hold` until released; `boom` fails, `panic` panics.
    struct Gate {
        entered: mpsc::Sender<()>,
        release: mpsc::Receiver<()>,
        calls: Arc<Mutex<u32>>,
    }

    impl Device for Gate {
        fn about(&self) -> About {
            About { name: "gate".into(), model: "test".into(), actions: vec!["hold".into(), "boom".into(), "panic".into()] }
        }
        fn handle(&mut self, action: &str, _: &Args) -> Result<Outcome, ActionError> {
            *self.calls.lock().unwrap() += 1;
            match action {
                "hold" => {
                    self.entered.send(()).unwrap();
                    self.release.recv().unwrap();
                    Ok(Outcome::new(3.0))
                }
                "boom" => Err(ActionError::new("gripper jammed")),
                "panic" => panic!("bad firmware"),
                _ => Ok(Outcome::new(0.0)),
            }
        }
    }

    fn gate() -> (Arc<ModuleServer>, mpsc::Receiver<()>, mpsc::Sender<()>, Arc<Mutex<u32>>) {
        let (etx, erx) = mpsc::channel();
        let (rtx, rrx) = mpsc::channel();
        let calls = Arc::new(Mutex::new(0));
        let server = ModuleServer::new(Box::new(Gate { entered: etx, release: rrx, calls: Arc::clone(&calls) }));
        (server, erx, rtx, calls)
    }

    #[test]
    fn overlapping_command_is_rejected_busy_and_state_still_answers() {
        let (server, entered, release, calls) = gate();
        let s2 = Arc::clone(&server);
        let first = thread::spawn(move || s2.dispatch(&Command::new("1", "gate", "hold")));
        entered.recv_timeout(Duration::from_secs(5)).unwrap();

        let second = server.dispatch(&Command::new("2", "gate", "hold"));
        assert_eq!(second.status, Status::Busy);
        let state = server.dispatch(&Command::new("3", "gate", meta::STATE));
        assert_eq!(state.status, Status::Succeeded);
        assert_eq!(state.data["status"], "BUSY");
        assert_eq!(server.dispatch(&Command::new("4", "gate", meta::ABOUT)).data["about"]["name"], "gate");

        release.send(()).unwrap();
        let first = first.join().unwrap();
        assert_eq!(first.status, Status::Succeeded);
        assert_eq!(first.sim_duration_s(), 3.0);
        assert_eq!(server.status(), ModuleStatus::Idle);
        // the busy reply never reached the handler
        assert_eq!(*calls.lock().unwrap(), 1);
    }

    #[test]
    fn handler_errors_become_failed_responses() {
        let (server, _entered, _release, _) = gate();
        let client = InProcessClient::new(Arc::clone(&server));
        let r = client.request(&Command::new("1", "gate", "boom")).unwrap();
        assert_eq!((r.status, r.error.as_deref()), (Status::Failed, Some("gripper jammed")));
        assert!(r.is_well_formed());
        let r = client.request(&Command::new("2", "gate", "panic")).unwrap();
        assert_eq!(r.status, Status::Failed);
        assert!(r.error.unwrap().contains("bad firmware"));
        assert_eq!(server.status(), ModuleStatus::Error);
        // still serving
        let r = client.request(&Command::new("3", "gate", "noop")).unwrap();
        assert_eq!(r.status, Status::Succeeded);
    }

    struct BusyOnce(bool);

    impl FaultHook for BusyOnce {
        fn before(&mut self, _: &Command) -> Option<InjectedFault> {
            std::mem::replace(&mut self.0, false).then_some(InjectedFault::Busy)
        }
    }

    #[test]
    fn injected_busy_skips_the_handler() {
        let (etx, _erx) = mpsc::channel();
        let (_rtx, rrx) = mpsc::channel();
        let calls = Arc::new(Mutex::new(0));
        let device = Gate { entered: etx, release: rrx, calls: Arc::clone(&calls) };
        let server = ModuleServer::with_faults(Box::new(device), Box::new(BusyOnce(true)));
        assert_eq!(server.dispatch(&Command::new("1", "gate", "noop")).status, Status::Busy);
        assert_eq!(*calls.lock().unwrap(), 0);
        assert_eq!(server.dispatch(&Command::new("2", "gate", "noop")).status, Status::Succeeded);
        assert_eq!(*calls.lock().unwrap(), 1);
    }
}
