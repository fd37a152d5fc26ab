//! Stream-socket server: one session handler per connection, requests served
//! strictly in arrival order per connection, sessions fully isolated.

use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::{info, warn};

use crate::config::{config_digest, geometry_digest};
use crate::error::{Error, Result};
use crate::worker::{execute_step, WorkerContext, UNIT_SCALE};

use super::codec::{read_message, write_message, PROTOCOL_VERSION};
use super::{error_code, Message};

/// Controls a running server; cloneable across threads.
#[derive(Debug, Clone)]
pub struct ServerHandle {
    shutdown: Arc<AtomicBool>,
    pub local_addr: std::net::SocketAddr,
}

impl ServerHandle {
    pub fn shutdown(&self) {
        self.shutdown.store(true, Ordering::SeqCst);
    }
}

/// Binds `addr` and returns a handle plus the accept-loop closure; callers
/// decide whether to run it on the current thread or a spawned one.
pub fn serve(addr: &str, ctx: WorkerContext) -> Result<(ServerHandle, impl FnOnce() -> Result<()>)> {
    let listener = TcpListener::bind(addr)
        .map_err(|e| Error::Transport(format!("bind {addr} failed: {e}")))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| Error::Transport(format!("set_nonblocking: {e}")))?;
    let local_addr = listener
        .local_addr()
        .map_err(|e| Error::Transport(format!("local_addr: {e}")))?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let handle = ServerHandle {
        shutdown: shutdown.clone(),
        local_addr,
    };
    let ctx = Arc::new(ctx);
    let next_id = Arc::new(AtomicU32::new(1));

    let run = move || -> Result<()> {
        info!("listening on {local_addr}");
        loop {
            if shutdown.load(Ordering::SeqCst) {
                info!("shutdown requested, closing listener");
                return Ok(());
            }
            match listener.accept() {
                Ok((stream, peer)) => {
                    let ctx = ctx.clone();
                    let id = next_id.fetch_add(1, Ordering::SeqCst);
                    std::thread::spawn(move || {
                        if let Err(e) = handle_connection(stream, &ctx, id) {
                            warn!("session {id} ({peer}): {e}");
                        }
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(25));
                }
                Err(e) => return Err(Error::Transport(format!("accept failed: {e}"))),
            }
        }
    };
    Ok((handle, run))
}

fn handle_connection(mut stream: TcpStream, ctx: &WorkerContext, session_id: u32) -> Result<()> {
    stream
        .set_nodelay(true)
        .map_err(|e| Error::Transport(format!("set_nodelay: {e}")))?;
    let mut registered = false;
    let expected_geometry = geometry_digest(&ctx.geometry, &ctx.camera);
    let expected_config = config_digest(&ctx.objective, &ctx.pso);

    loop {
        let msg = match read_message(&mut stream) {
            Ok(m) => m,
            Err(Error::Transport(ref reason)) if reason == "connection closed" => return Ok(()),
            Err(Error::Protocol(reason)) => {
                let _ = write_message(
                    &mut stream,
                    &Message::Error {
                        code: error_code::MALFORMED,
                        message: reason.clone(),
                    },
                );
                return Err(Error::Protocol(reason));
            }
            Err(e) => return Err(e),
        };
        match msg {
            Message::Ping => {
                write_message(&mut stream, &Message::Pong)?;
            }
            Message::Register(info) => {
                let refusal = if info.protocol_version != PROTOCOL_VERSION {
                    Some(format!(
                        "protocol version {} does not match {}",
                        info.protocol_version, PROTOCOL_VERSION
                    ))
                } else if info.geometry_digest != expected_geometry {
                    Some("geometry digest mismatch: results would diverge".into())
                } else if info.config_digest != expected_config {
                    Some("config digest mismatch: results would diverge".into())
                } else {
                    None
                };
                match refusal {
                    Some(message) => {
                        write_message(
                            &mut stream,
                            &Message::Error {
                                code: error_code::REGISTRATION_REFUSED,
                                message: message.clone(),
                            },
                        )?;
                        return Err(Error::Protocol(format!("registration refused: {message}")));
                    }
                    None => {
                        registered = true;
                        write_message(
                            &mut stream,
                            &Message::RegisterAck {
                                executor_id: session_id,
                            },
                        )?;
                    }
                }
            }
            Message::StepRequest(req) => {
                if !registered {
                    write_message(
                        &mut stream,
                        &Message::Error {
                            code: error_code::NOT_REGISTERED,
                            message: "register before submitting tasks".into(),
                        },
                    )?;
                    return Err(Error::Protocol("step request before registration".into()));
                }
                let started = Instant::now();
                match execute_step(&req, ctx, &UNIT_SCALE) {
                    Ok(mut res) => {
                        res.server_exec_us = started.elapsed().as_micros().min(u32::MAX as u128) as u32;
                        write_message(&mut stream, &Message::StepResult(Box::new(res)))?;
                    }
                    Err(e) => {
                        write_message(
                            &mut stream,
                            &Message::Error {
                                code: error_code::EXECUTION_FAILED,
                                message: e.to_string(),
                            },
                        )?;
                    }
                }
            }
            other => {
                write_message(
                    &mut stream,
                    &Message::Error {
                        code: error_code::MALFORMED,
                        message: format!("unexpected message {other:?} in session"),
                    },
                )?;
                return Err(Error::Protocol("unexpected message in session".into()));
            }
        }
    }
}
