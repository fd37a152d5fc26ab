//! Encoder/decoder for the frame layout. `decode(encode(m)) == m` bit-exactly
//! for every well-formed message; anything else is a protocol error.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::kinematics::{quantize_depth_mm, DepthMap, PoseVector, POSE_DIMS};
use crate::pso::SwarmState;

use super::{error_code, Message, RegisterInfo, StepRequest, StepResult, TaskKind};

pub const PROTOCOL_VERSION: u16 = 1;

const TYPE_REGISTER: u8 = 0x01;
const TYPE_REGISTER_ACK: u8 = 0x02;
const TYPE_STEP_REQUEST: u8 = 0x03;
const TYPE_STEP_RESULT: u8 = 0x04;
const TYPE_ERROR: u8 = 0x05;
const TYPE_PING: u8 = 0x06;
const TYPE_PONG: u8 = 0x07;

const HEADER_LEN: usize = 5;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Protocol(format!(
                "truncated buffer: need {} bytes at offset {}, have {}",
                n,
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Protocol(format!(
                "length mismatch: {} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Exact sizes, used by tests and completion-time prediction.
pub fn swarm_block_size(swarm_size: usize) -> usize {
    4 + 4                              // swarm_size, dims
        + 3 * swarm_size * POSE_DIMS * 8 // positions, velocities, pbest_positions
        + swarm_size * 8               // pbest_scores
        + POSE_DIMS * 8                // gbest_position
        + 8 + 8 + 1 + 4 // gbest_score, rng_counter, phase_index, generation_index
}

pub fn step_request_payload_size(width: u16, height: u16, swarm_size: Option<usize>) -> usize {
    4 + 1 + 1 + 8
        + POSE_DIMS * 4
        + 2
        + 2
        + width as usize * height as usize * 2
        + swarm_size.map_or(0, swarm_block_size)
}

pub fn step_result_payload_size(swarm_size: Option<usize>) -> usize {
    4 + 1 + POSE_DIMS * 8 + 8 + swarm_size.map_or(0, swarm_block_size) + 4
}

fn put_pose_f32(out: &mut Vec<u8>, pose: &PoseVector) {
    for v in pose.to_array() {
        out.extend_from_slice(&(v as f32).to_be_bytes());
    }
}

fn get_pose_f32(r: &mut Reader) -> Result<PoseVector> {
    let mut arr = [0.0; POSE_DIMS];
    for v in arr.iter_mut() {
        *v = r.f32()? as f64;
    }
    Ok(PoseVector::from_array(&arr))
}

fn put_pose_f64(out: &mut Vec<u8>, pose: &PoseVector) {
    for v in pose.to_array() {
        out.extend_from_slice(&v.to_be_bytes());
    }
}

fn get_pose_f64(r: &mut Reader) -> Result<PoseVector> {
    let mut arr = [0.0; POSE_DIMS];
    for v in arr.iter_mut() {
        *v = r.f64()?;
    }
    Ok(PoseVector::from_array(&arr))
}

fn put_depth(out: &mut Vec<u8>, map: &DepthMap) {
    out.extend_from_slice(&(map.width as u16).to_be_bytes());
    out.extend_from_slice(&(map.height as u16).to_be_bytes());
    for &d in &map.samples {
        out.extend_from_slice(&quantize_depth_mm(d).to_be_bytes());
    }
}

fn get_depth(r: &mut Reader) -> Result<DepthMap> {
    let width = r.u16()? as u32;
    let height = r.u16()? as u32;
    let n = width as usize * height as usize;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        samples.push(r.u16()? as f64 / 1000.0);
    }
    Ok(DepthMap {
        width,
        height,
        samples,
    })
}

/// Serializes swarm state in the normative field order, all reals as f64.
pub fn encode_swarm_state(s: &SwarmState) -> Vec<u8> {
    let mut out = Vec::with_capacity(swarm_block_size(s.positions.len()));
    out.extend_from_slice(&(s.positions.len() as u32).to_be_bytes());
    out.extend_from_slice(&(POSE_DIMS as u32).to_be_bytes());
    for arr in [&s.positions, &s.velocities, &s.pbest_positions] {
        for row in arr.iter() {
            for v in row {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
    }
    for v in &s.pbest_scores {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for v in &s.gbest_position {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&s.gbest_score.to_be_bytes());
    out.extend_from_slice(&s.rng_counter.to_be_bytes());
    out.push(s.phase_index);
    out.extend_from_slice(&s.generation_index.to_be_bytes());
    out
}

/// Inverse of [`encode_swarm_state`]; consumes from a shared reader slice.
pub fn decode_swarm_state(buf: &mut &[u8]) -> Result<SwarmState> {
    let mut r = Reader::new(buf);
    let state = read_swarm_state(&mut r)?;
    *buf = &buf[r.pos..];
    Ok(state)
}

fn read_swarm_state(r: &mut Reader) -> Result<SwarmState> {
    let n = r.u32()? as usize;
    let dims = r.u32()? as usize;
    if dims != POSE_DIMS {
        return Err(Error::Protocol(format!(
            "swarm state has {dims} dims, expected {POSE_DIMS}"
        )));
    }
    if n == 0 || n > 1 << 20 {
        return Err(Error::Protocol(format!("implausible swarm size {n}")));
    }
    let rows = |r: &mut Reader| -> Result<Vec<[f64; POSE_DIMS]>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut row = [0.0; POSE_DIMS];
            for v in row.iter_mut() {
                *v = r.f64()?;
            }
            out.push(row);
        }
        Ok(out)
    };
    let positions = rows(r)?;
    let velocities = rows(r)?;
    let pbest_positions = rows(r)?;
    let mut pbest_scores = Vec::with_capacity(n);
    for _ in 0..n {
        pbest_scores.push(r.f64()?);
    }
    let mut gbest_position = [0.0; POSE_DIMS];
    for v in gbest_position.iter_mut() {
        *v = r.f64()?;
    }
    Ok(SwarmState {
        positions,
        velocities,
        pbest_positions,
        pbest_scores,
        gbest_position,
        gbest_score: r.f64()?,
        rng_counter: r.u64()?,
        phase_index: r.u8()?,
        generation_index: r.u32()?,
    })
}

fn encode_payload(msg: &Message) -> Vec<u8> {
    match msg {
        Message::Register(info) => {
            let mut out = Vec::with_capacity(2 + 1 + 64);
            out.extend_from_slice(&info.protocol_version.to_be_bytes());
            out.push(info.task_kinds);
            out.extend_from_slice(&info.geometry_digest);
            out.extend_from_slice(&info.config_digest);
            out
        }
        Message::RegisterAck { executor_id } => executor_id.to_be_bytes().to_vec(),
        Message::StepRequest(req) => {
            let mut out = Vec::with_capacity(step_request_payload_size(
                req.observation.width as u16,
                req.observation.height as u16,
                req.swarm_state.as_ref().map(|s| s.positions.len()),
            ));
            out.extend_from_slice(&req.frame_index.to_be_bytes());
            out.push(req.kind.as_byte());
            out.push(req.phase_index);
            out.extend_from_slice(&req.seed.to_be_bytes());
            put_pose_f32(&mut out, &req.center);
            put_depth(&mut out, &req.observation);
            if let Some(state) = &req.swarm_state {
                out.extend_from_slice(&encode_swarm_state(state));
            }
            out
        }
        Message::StepResult(res) => {
            let mut out = Vec::with_capacity(step_result_payload_size(
                res.swarm_state.as_ref().map(|s| s.positions.len()),
            ));
            out.extend_from_slice(&res.frame_index.to_be_bytes());
            out.push(res.phase_index);
            put_pose_f64(&mut out, &res.gbest_pose);
            out.extend_from_slice(&res.gbest_score.to_be_bytes());
            if let Some(state) = &res.swarm_state {
                out.extend_from_slice(&encode_swarm_state(state));
            }
            out.extend_from_slice(&res.server_exec_us.to_be_bytes());
            out
        }
        Message::Error { code, message } => {
            let mut out = Vec::with_capacity(1 + message.len());
            out.push(*code);
            out.extend_from_slice(message.as_bytes());
            out
        }
        Message::Ping | Message::Pong => Vec::new(),
    }
}

fn type_byte(msg: &Message) -> u8 {
    match msg {
        Message::Register(_) => TYPE_REGISTER,
        Message::RegisterAck { .. } => TYPE_REGISTER_ACK,
        Message::StepRequest(_) => TYPE_STEP_REQUEST,
        Message::StepResult(_) => TYPE_STEP_RESULT,
        Message::Error { .. } => TYPE_ERROR,
        Message::Ping => TYPE_PING,
        Message::Pong => TYPE_PONG,
    }
}

/// Encodes a message into a complete frame (header + payload).
pub fn encode(msg: &Message) -> Vec<u8> {
    let payload = encode_payload(msg);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.push(type_byte(msg));
    out.extend_from_slice(&payload);
    out
}

/// Decodes exactly one complete frame.
pub fn decode(frame: &[u8]) -> Result<Message> {
    if frame.len() < HEADER_LEN {
        return Err(Error::Protocol(format!(
            "truncated header: {} bytes",
            frame.len()
        )));
    }
    let len = u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize;
    if frame.len() != HEADER_LEN + len {
        return Err(Error::Protocol(format!(
            "length mismatch: header says {}, frame has {} payload bytes",
            len,
            frame.len() - HEADER_LEN
        )));
    }
    let kind = frame[4];
    let mut r = Reader::new(&frame[HEADER_LEN..]);
    let msg = match kind {
        TYPE_REGISTER => {
            let protocol_version = r.u16()?;
            let task_kinds = r.u8()?;
            let geometry_digest: [u8; 32] = r.take(32)?.try_into().unwrap();
            let config_digest: [u8; 32] = r.take(32)?.try_into().unwrap();
            Message::Register(RegisterInfo {
                protocol_version,
                task_kinds,
                geometry_digest,
                config_digest,
            })
        }
        TYPE_REGISTER_ACK => Message::RegisterAck {
            executor_id: r.u32()?,
        },
        TYPE_STEP_REQUEST => {
            let frame_index = r.u32()?;
            let kind = match r.u8()? {
                0 => TaskKind::FusedFrame,
                1 => TaskKind::Phase,
                b => return Err(Error::Protocol(format!("unknown task kind {b:#04x}"))),
            };
            let phase_index = r.u8()?;
            let seed = r.u64()?;
            let center = get_pose_f32(&mut r)?;
            let observation = get_depth(&mut r)?;
            let swarm_state = if kind == TaskKind::Phase && phase_index > 0 {
                Some(read_swarm_state(&mut r)?)
            } else {
                None
            };
            Message::StepRequest(Box::new(StepRequest {
                frame_index,
                kind,
                phase_index,
                seed,
                center,
                observation,
                swarm_state,
            }))
        }
        TYPE_STEP_RESULT => {
            let frame_index = r.u32()?;
            let phase_index = r.u8()?;
            let gbest_pose = get_pose_f64(&mut r)?;
            let gbest_score = r.f64()?;
            let swarm_state = if phase_index < 3 {
                Some(read_swarm_state(&mut r)?)
            } else {
                None
            };
            Message::StepResult(Box::new(StepResult {
                frame_index,
                phase_index,
                gbest_pose,
                gbest_score,
                swarm_state,
                server_exec_us: r.u32()?,
            }))
        }
        TYPE_ERROR => {
            let code = r.u8()?;
            let rest = r.take(len - 1)?;
            let message = String::from_utf8(rest.to_vec())
                .map_err(|_| Error::Protocol("error message is not utf-8".into()))?;
            Message::Error { code, message }
        }
        TYPE_PING => Message::Ping,
        TYPE_PONG => Message::Pong,
        b => return Err(Error::Protocol(format!("unknown type byte {b:#04x}"))),
    };
    r.done()?;
    Ok(msg)
}

/// Reads one frame from a stream.
pub fn read_message<R: Read>(reader: &mut R) -> Result<Message> {
    let mut header = [0u8; HEADER_LEN];
    reader.read_exact(&mut header).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Transport("connection closed".into())
        } else if matches!(
            e.kind(),
            std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
        ) {
            Error::Transport("read timed out".into())
        } else {
            Error::Io(e)
        }
    })?;
    let len = u32::from_be_bytes(header[..4].try_into().unwrap()) as usize;
    if len > 1 << 28 {
        return Err(Error::Protocol(format!("implausible frame length {len}")));
    }
    let mut frame = header.to_vec();
    frame.resize(HEADER_LEN + len, 0);
    reader.read_exact(&mut frame[HEADER_LEN..]).map_err(|e| {
        if matches!(
            e.kind(),
            std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
        ) {
            Error::Transport("read timed out".into())
        } else {
            Error::Transport(format!("read failed: {e}"))
        }
    })?;
    decode(&frame)
}

/// Writes one frame to a stream; returns the encoded frame size.
pub fn write_message<W: Write>(writer: &mut W, msg: &Message) -> Result<usize> {
    let frame = encode(msg);
    writer
        .write_all(&frame)
        .map_err(|e| Error::Transport(format!("write failed: {e}")))?;
    Ok(frame.len())
}

impl Message {
    /// Error code accessor for session handling.
    pub fn error_code(&self) -> Option<u8> {
        match self {
            Message::Error { code, .. } => Some(*code),
            _ => None,
        }
    }
}

// keep the module-level constant referenced so the error-code table is the
// single source of truth
#[allow(dead_code)]
const _: u8 = error_code::MALFORMED;
