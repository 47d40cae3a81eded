use colorpicker::protocol::{
    encode, meta, send_command, serve, About, ActionError, Args, AttemptOutcome, AttemptSink, Command, Device,
    LineReader, Outcome, Response, RetryPolicy, SendError, Status, TcpClient, Transport, ModuleServer,
};
use std::collections::BTreeSet;
use std::io::{BufReader, Write};
use std::net::TcpStream;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

/// Records the interval of every handler invocation.
struct Recorder {
    log: Arc<Mutex<Vec<(String, Instant, Instant)>>>,
    work: Duration,
}

impl Device for Recorder {
    fn about(&self) -> About {
        About { name: "rec".into(), model: "test".into(), actions: vec!["work".into()] }
    }
    fn handle(&mut self, _: &str, args: &Args) -> Result<Outcome, ActionError> {
        let start = Instant::now();
        thread::sleep(self.work);
        let tag = args.get("tag").and_then(|v| v.as_str()).unwrap_or_default().to_string();
        self.log.lock().unwrap().push((tag, start, Instant::now()));
        Ok(Outcome::new(1.0))
    }
}

/// Counts attempts and sleeps a short, fixed time between retries.
struct Tally {
    busy: usize,
}

impl AttemptSink for Tally {
    fn attempt(&mut self, _: &Command, _: u32, outcome: &AttemptOutcome) {
        if outcome.label() == "busy" {
            self.busy += 1;
        }
    }
    fn backoff(&mut self, _: f64) {
        thread::sleep(Duration::from_micros(300));
    }
}

#[test]
fn concurrent_clients_get_exactly_once_serialized_handling() {
    let log = Arc::new(Mutex::new(Vec::new()));
    let module = ModuleServer::new(Box::new(Recorder { log: Arc::clone(&log), work: Duration::from_millis(2) }));
    let server = serve(module, "127.0.0.1:0").unwrap();
    let addr = server.addr();
    let policy = RetryPolicy { max_retries: 10_000, backoff_s: 0.0, multiplier: 1.0 };

    let workers: Vec<_> = (0..6)
        .map(|w| {
            let policy = policy.clone();
            thread::spawn(move || {
                let client = TcpClient::from_addr(addr);
                let mut tally = Tally { busy: 0 };
                let mut ok = Vec::new();
                for i in 0..15 {
                    let tag = format!("w{w}-{i}");
                    let cmd = Command::new(tag.clone(), "rec", "work").arg("tag", tag.clone());
                    let r = send_command(&client, &cmd, &policy, &mut tally).unwrap();
                    assert_eq!(r.status, Status::Succeeded);
                    assert_eq!(r.id, tag);
                    ok.push(tag);
                }
                (ok, tally.busy)
            })
        })
        .collect();
    let mut succeeded = BTreeSet::new();
    let mut busy = 0;
    for w in workers {
        let (ok, b) = w.join().unwrap();
        succeeded.extend(ok);
        busy += b;
    }
    let log = log.lock().unwrap();
    // one handler run per successful command, none for busy replies
    assert_eq!(log.len(), 90);
    assert_eq!(log.iter().map(|(t, _, _)| t.clone()).collect::<BTreeSet<_>>(), succeeded);
    assert!(busy > 0, "six clients on one module should collide at least once");
    let mut spans: Vec<_> = log.iter().map(|(_, s, e)| (*s, *e)).collect();
    spans.sort();
    for pair in spans.windows(2) {
        assert!(pair[0].1 <= pair[1].0, "handler invocations overlapped");
    }
    server.shutdown();
}

#[test]
fn state_is_answered_during_a_long_action() {
    let log = Arc::new(Mutex::new(Vec::new()));
    let module = ModuleServer::new(Box::new(Recorder { log, work: Duration::from_millis(300) }));
    let server = serve(module, "127.0.0.1:0").unwrap();
    let addr = server.addr();
    let worker = thread::spawn(move || TcpClient::from_addr(addr).request(&Command::new("long", "rec", "work")).unwrap());
    thread::sleep(Duration::from_millis(100));
    let probe = TcpClient::from_addr(addr);
    let state = probe.request(&Command::new("s", "rec", meta::STATE)).unwrap();
    assert_eq!(state.data["status"], "BUSY");
    let busy = probe.request(&Command::new("x", "rec", "work")).unwrap();
    assert_eq!(busy.status, Status::Busy);
    assert_eq!(worker.join().unwrap().status, Status::Succeeded);
    let state = probe.request(&Command::new("s2", "rec", meta::STATE)).unwrap();
    assert_eq!(state.data["status"], "IDLE");
}

#[test]
fn malformed_line_gets_a_failure_and_the_connection_survives() {
    let log = Arc::new(Mutex::new(Vec::new()));
    let module = ModuleServer::new(Box::new(Recorder { log, work: Duration::ZERO }));
    let server = serve(module, "127.0.0.1:0").unwrap();
    let mut stream = TcpStream::connect(server.addr()).unwrap();
    stream.write_all(b"{\"id\":\"1\",\"modu\n").unwrap();
    stream.write_all(&encode(&Command::new("2", "rec", "work"))).unwrap();
    let mut reader = LineReader::new(BufReader::new(stream.try_clone().unwrap()));
    let first: Response = reader.next_message().unwrap().unwrap();
    assert_eq!(first.status, Status::Failed);
    assert!(first.error.unwrap().contains("malformed"));
    let second: Response = reader.next_message().unwrap().unwrap();
    assert_eq!((second.id.as_str(), second.status), ("2", Status::Succeeded));
}

#[test]
fn shutdown_meta_action_stops_the_server() {
    let log = Arc::new(Mutex::new(Vec::new()));
    let module = ModuleServer::new(Box::new(Recorder { log, work: Duration::ZERO }));
    let server = serve(module, "127.0.0.1:0").unwrap();
    let addr = server.addr();
    let r = TcpClient::from_addr(addr).request(&Command::new("bye", "rec", meta::SHUTDOWN)).unwrap();
    assert_eq!(r.status, Status::Succeeded);
    server.wait();
    let err = send_command(
        &TcpClient::from_addr(addr),
        &Command::new("late", "rec", "work"),
        &RetryPolicy::default(),
        &mut Tally { busy: 0 },
    )
    .unwrap_err();
    assert!(matches!(err, SendError::Transport(_)));
}
