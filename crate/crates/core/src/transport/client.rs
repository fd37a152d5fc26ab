//! Client side of the stream-socket transport: registration handshake, ping,
//! and single-in-flight task submission (the serial frame dependency makes
//! pipelining useless).

use std::net::TcpStream;
use std::time::{Duration, Instant};

use crate::config::{config_digest, geometry_digest};
use crate::error::{Error, Result};
use crate::worker::WorkerContext;

use super::codec::{encode, read_message, write_message, PROTOCOL_VERSION};
use super::{Message, RegisterInfo, StepRequest, StepResult};

/// A registered session against a remote executor.
#[derive(Debug)]
pub struct TcpRemote {
    stream: TcpStream,
    pub executor_id: u32,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    timeout: Duration,
}

/// Timing and size bookkeeping for one remote exchange.
#[derive(Debug, Clone, Copy)]
pub struct Exchange {
    pub wall_ms: f64,
    pub request_bytes: usize,
    pub response_bytes: usize,
}

impl TcpRemote {
    /// Connects, applies the read timeout, and performs the registration
    /// handshake for the given numeric contract.
    pub fn connect(addr: &str, ctx: &WorkerContext, timeout_ms: u64) -> Result<Self> {
        let stream = TcpStream::connect(addr)
            .map_err(|e| Error::Transport(format!("connect {addr} failed: {e}")))?;
        let timeout = Duration::from_millis(timeout_ms);
        stream
            .set_read_timeout(Some(timeout))
            .map_err(|e| Error::Transport(format!("set_read_timeout: {e}")))?;
        stream
            .set_nodelay(true)
            .map_err(|e| Error::Transport(format!("set_nodelay: {e}")))?;
        let mut remote = TcpRemote {
            stream,
            executor_id: 0,
            bytes_sent: 0,
            bytes_received: 0,
            timeout,
        };
        remote.register(ctx)?;
        Ok(remote)
    }

    fn register(&mut self, ctx: &WorkerContext) -> Result<()> {
        let info = RegisterInfo {
            protocol_version: PROTOCOL_VERSION,
            task_kinds: 0b11,
            geometry_digest: geometry_digest(&ctx.geometry, &ctx.camera),
            config_digest: config_digest(&ctx.objective, &ctx.pso),
        };
        self.send(&Message::Register(info))?;
        match self.recv()? {
            Message::RegisterAck { executor_id } => {
                self.executor_id = executor_id;
                Ok(())
            }
            Message::Error { message, .. } => {
                Err(Error::Protocol(format!("registration refused: {message}")))
            }
            other => Err(Error::Protocol(format!(
                "unexpected registration reply {other:?}"
            ))),
        }
    }

    /// Round-trip time of an empty frame, in milliseconds.
    pub fn ping_ms(&mut self) -> Result<f64> {
        let start = Instant::now();
        self.send(&Message::Ping)?;
        match self.recv()? {
            Message::Pong => Ok(start.elapsed().as_secs_f64() * 1000.0),
            other => Err(Error::Protocol(format!("unexpected ping reply {other:?}"))),
        }
    }

    /// Submits one task and blocks for its result (or the read timeout).
    pub fn step(&mut self, req: StepRequest) -> Result<(StepResult, Exchange)> {
        let frame = encode(&Message::StepRequest(Box::new(req)));
        let request_bytes = frame.len();
        let start = Instant::now();
        use std::io::Write;
        self.stream
            .write_all(&frame)
            .map_err(|e| Error::Transport(format!("write failed: {e}")))?;
        self.bytes_sent += request_bytes as u64;
        let (msg, response_bytes) = self.recv_counted()?;
        let wall_ms = start.elapsed().as_secs_f64() * 1000.0;
        match msg {
            Message::StepResult(res) => Ok((
                *res,
                Exchange {
                    wall_ms,
                    request_bytes,
                    response_bytes,
                },
            )),
            Message::Error { code, message } => Err(Error::Task(format!(
                "remote execution failed (code {code}): {message}"
            ))),
            other => Err(Error::Protocol(format!("unexpected step reply {other:?}"))),
        }
    }

    pub fn timeout_ms(&self) -> f64 {
        self.timeout.as_secs_f64() * 1000.0
    }

    fn send(&mut self, msg: &Message) -> Result<()> {
        let n = write_message(&mut self.stream, msg)?;
        self.bytes_sent += n as u64;
        Ok(())
    }

    fn recv(&mut self) -> Result<Message> {
        Ok(self.recv_counted()?.0)
    }

    fn recv_counted(&mut self) -> Result<(Message, usize)> {
        let msg = read_message(&mut self.stream)?;
        let n = encode(&msg).len();
        self.bytes_received += n as u64;
        Ok((msg, n))
    }
}
