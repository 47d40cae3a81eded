//! A module server over TCP and a client that retries busy replies.

use colorpicker::protocol::{
    meta, send_command, serve, About, ActionError, Args, Command, Device, ModuleServer, Outcome, RetryPolicy,
    TcpClient, Transport, WallClockSink,
};

/// Counts to the requested number and reports how long that "took".
struct Counter {
    total: u64,
}

impl Device for Counter {
    fn about(&self) -> About {
        About { name: "counter".into(), model: "demo".into(), actions: vec!["count".into()] }
    }

    fn handle(&mut self, action: &str, args: &Args) -> Result<Outcome, ActionError> {
        match action {
            "count" => {
                let n = args.get("to").and_then(|v| v.as_u64()).ok_or_else(|| ActionError::new("`to` is required"))?;
                self.total += n;
                Ok(Outcome::new(n as f64 * 0.5).with("total", self.total))
            }
            other => Err(ActionError::new(format!("unknown action {other}"))),
        }
    }
}

fn main() {
    let server = serve(ModuleServer::new(Box::new(Counter { total: 0 })), "127.0.0.1:0").expect("bind");
    let client = TcpClient::from_addr(server.addr());
    println!("listening on {}", server.addr());

    let about = client.request(&Command::new("a", "counter", meta::ABOUT)).unwrap();
    println!("about: {}", serde_json::to_string(&about.data).unwrap());

    let policy = RetryPolicy::default();
    for (i, n) in [3, 4, 5].into_iter().enumerate() {
        let cmd = Command::new(format!("c{i}"), "counter", "count").arg("to", n);
        let r = send_command(&client, &cmd, &policy, &mut WallClockSink).unwrap();
        println!("{} -> {:?} total={} sim {:.1}s", cmd.id, r.status, r.data["total"], r.sim_duration_s());
    }

    let bad = client.request(&Command::new("bad", "counter", "count")).unwrap();
    println!("missing argument -> {:?}: {}", bad.status, bad.error.unwrap_or_default());

    client.request(&Command::new("bye", "counter", meta::SHUTDOWN)).unwrap();
    server.wait();
    println!("server stopped");
}
