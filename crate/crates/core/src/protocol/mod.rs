//! Command/response protocol between the workflow engine and module servers.
//!
//! Wire format: one UTF-8 JSON object per `\n`-terminated line. Requests
//! carry `id, module, action, args`; responses carry `id, status, data,
//! error`. Successful responses report the simulated action duration under
//! `data.sim_duration_s`.

mod client;
pub mod codec;
mod message;
mod server;

pub use client::{
    send_command, AttemptOutcome, AttemptSink, InProcessClient, RetryPolicy, SendError, TcpClient, Transport,
    TransportError, WallClockSink,
};
pub use codec::{decode, encode, CodecError, LineReader};
pub use message::{meta, About, Args, Command, ModuleState, ModuleStatus, Response, Status, SIM_DURATION_KEY};
pub use server::{serve, ActionError, Device, FaultHook, InjectedFault, ModuleServer, Outcome, ServerHandle};
