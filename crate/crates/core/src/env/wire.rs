//! Length-prefixed binary frames between the environment map and remote
//! agents. Layout is documented in `docs/protocol.md`.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::config::RunConfig;
use super::run::{local_mind, run_with, RunOptions, RunReport};
use super::EnvError;
use crate::agent::{
    agent_seed, AgentError, AgentMind, AgentOutput, AgentSpec, Attachment, LayeredAgent, Message, Outgoing, Policy,
    ResourceOp,
};
use crate::csm::Payload;
use crate::devices::{Reading, Readings, ScanEntry, ScanReport, Sighting};
use crate::geometry::{AgentId, Pose, ResourceId, Vec2, WheelSpeeds};

pub const REGISTER: u8 = 1;
pub const REGISTERED: u8 = 2;
pub const TICK_INPUTS: u8 = 3;
pub const TICK_OUTPUTS: u8 = 4;
pub const DISCONNECT: u8 = 5;

/// Frames larger than this are rejected.
pub const MAX_FRAME: u32 = 16 << 20;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unexpected frame kind {0}")]
    UnexpectedKind(u8),
    #[error("peer disconnected: {0}")]
    Disconnected(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Register {
        name: String,
    },
    Registered {
        id: AgentId,
        seed: u64,
        tick: u64,
    },
    TickInputs {
        tick: u64,
        readings: Readings,
        inbox: Vec<Message>,
    },
    TickOutputs {
        tick: u64,
        output: AgentOutput,
    },
    Disconnect {
        reason: String,
    },
}

struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u32(n as u32);
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn opt_f64(&mut self, v: Option<f64>) {
        match v {
            Some(v) => {
                self.u8(1);
                self.f64(v);
            }
            None => self.u8(0),
        }
    }
    fn payload(&mut self, p: &Option<Payload>) {
        match p {
            None => self.u8(0),
            Some(Payload::Scalar(v)) => {
                self.u8(1);
                self.f64(*v);
            }
            Some(Payload::Vector(v)) => {
                self.u8(2);
                self.f64(v.x);
                self.f64(v.y);
            }
        }
    }
    fn reading(&mut self, r: &Reading) {
        match r {
            Reading::Floor(v) => {
                self.u8(0);
                self.f64(*v);
            }
            Reading::Touch(b) => {
                self.u8(1);
                self.u8(u8::from(*b));
            }
            Reading::Proximity(d) => {
                self.u8(2);
                self.opt_f64(*d);
            }
            Reading::Odometry { left, right } => {
                self.u8(3);
                self.i64(*left);
                self.i64(*right);
            }
            Reading::Scan(s) => {
                self.u8(4);
                self.len(s.entries.len());
                for e in &s.entries {
                    self.str(&e.name);
                    self.f64(e.bearing);
                    self.opt_f64(e.distance);
                }
            }
            Reading::Vision(v) => {
                self.u8(5);
                self.len(v.len());
                for s in v {
                    self.u32(s.id.0);
                    self.f64(s.bearing);
                    self.f64(s.distance);
                }
            }
            Reading::Position(p) => {
                self.u8(6);
                self.f64(p.position.x);
                self.f64(p.position.y);
                self.f64(p.heading);
            }
            Reading::Gripper(c) => {
                self.u8(7);
                match c {
                    Some(id) => {
                        self.u8(1);
                        self.u32(id.0);
                    }
                    None => self.u8(0),
                }
            }
        }
    }
}

struct Dec<'a> {
    buf: &'a [u8],
}

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Malformed("truncated body".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn i64(&mut self) -> Result<i64, WireError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn len(&mut self) -> Result<usize, WireError> {
        let n = self.u32()? as usize;
        // every element takes at least one byte
        if n > self.buf.len() {
            return Err(WireError::Malformed(format!("count {n} exceeds frame")));
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String, WireError> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| WireError::Malformed("invalid UTF-8".into()))
    }
    fn flag(&mut self) -> Result<bool, WireError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(WireError::Malformed(format!("bad flag {v}"))),
        }
    }
    fn opt_f64(&mut self) -> Result<Option<f64>, WireError> {
        Ok(if self.flag()? { Some(self.f64()?) } else { None })
    }
    fn payload(&mut self) -> Result<Option<Payload>, WireError> {
        Ok(match self.u8()? {
            0 => None,
            1 => Some(Payload::Scalar(self.f64()?)),
            2 => Some(Payload::Vector(Vec2::new(self.f64()?, self.f64()?))),
            v => return Err(WireError::Malformed(format!("bad payload tag {v}"))),
        })
    }
    fn reading(&mut self) -> Result<Reading, WireError> {
        Ok(match self.u8()? {
            0 => Reading::Floor(self.f64()?),
            1 => Reading::Touch(self.flag()?),
            2 => Reading::Proximity(self.opt_f64()?),
            3 => Reading::Odometry {
                left: self.i64()?,
                right: self.i64()?,
            },
            4 => {
                let n = self.len()?;
                let mut entries = Vec::with_capacity(n);
                for _ in 0..n {
                    entries.push(ScanEntry {
                        name: self.str()?,
                        bearing: self.f64()?,
                        distance: self.opt_f64()?,
                    });
                }
                Reading::Scan(ScanReport { entries })
            }
            5 => {
                let n = self.len()?;
                let mut v = Vec::with_capacity(n);
                for _ in 0..n {
                    v.push(Sighting {
                        id: ResourceId(self.u32()?),
                        bearing: self.f64()?,
                        distance: self.f64()?,
                    });
                }
                Reading::Vision(v)
            }
            6 => Reading::Position(Pose::new(self.f64()?, self.f64()?, self.f64()?)),
            7 => Reading::Gripper(if self.flag()? {
                Some(ResourceId(self.u32()?))
            } else {
                None
            }),
            v => return Err(WireError::Malformed(format!("bad reading tag {v}"))),
        })
    }
}

impl Frame {
    pub fn kind(&self) -> u8 {
        match self {
            Frame::Register { .. } => REGISTER,
            Frame::Registered { .. } => REGISTERED,
            Frame::TickInputs { .. } => TICK_INPUTS,
            Frame::TickOutputs { .. } => TICK_OUTPUTS,
            Frame::Disconnect { .. } => DISCONNECT,
        }
    }

    /// Full frame bytes: u32 length of (kind + body), kind byte, body.
    pub fn encode(&self) -> Vec<u8> {
        let mut e = Enc(Vec::new());
        match self {
            Frame::Register { name } => e.str(name),
            Frame::Registered { id, seed, tick } => {
                e.u32(id.0);
                e.u64(*seed);
                e.u64(*tick);
            }
            Frame::TickInputs { tick, readings, inbox } => {
                e.u64(*tick);
                e.len(readings.values.len());
                for (name, r) in &readings.values {
                    e.str(name);
                    e.reading(r);
                }
                e.len(inbox.len());
                for m in inbox {
                    e.str(&m.from);
                    e.str(&m.to);
                    e.payload(&m.payload);
                    e.u64(m.sent_tick);
                }
            }
            Frame::TickOutputs { tick, output } => {
                e.u64(*tick);
                e.f64(output.drive.left);
                e.f64(output.drive.right);
                e.len(output.messages.len());
                for m in &output.messages {
                    e.str(&m.to);
                    e.payload(&m.payload);
                }
                e.len(output.ops.len());
                for op in &output.ops {
                    match op {
                        ResourceOp::Pick(id) => {
                            e.u8(0);
                            e.u32(id.0);
                        }
                        ResourceOp::Drop => e.u8(1),
                    }
                }
                e.len(output.notes.len());
                for n in &output.notes {
                    e.str(n);
                }
            }
            Frame::Disconnect { reason } => e.str(reason),
        }
        let mut out = Vec::with_capacity(e.0.len() + 5);
        out.extend_from_slice(&(e.0.len() as u32 + 1).to_le_bytes());
        out.push(self.kind());
        out.extend_from_slice(&e.0);
        out
    }

    /// Decode a kind byte and body (without the length prefix).
    pub fn decode(kind: u8, body: &[u8]) -> Result<Frame, WireError> {
        let mut d = Dec { buf: body };
        let frame = match kind {
            REGISTER => Frame::Register { name: d.str()? },
            REGISTERED => Frame::Registered {
                id: AgentId(d.u32()?),
                seed: d.u64()?,
                tick: d.u64()?,
            },
            TICK_INPUTS => {
                let tick = d.u64()?;
                let n = d.len()?;
                let mut values = Vec::with_capacity(n);
                for _ in 0..n {
                    values.push((d.str()?, d.reading()?));
                }
                let n = d.len()?;
                let mut inbox = Vec::with_capacity(n);
                for _ in 0..n {
                    inbox.push(Message {
                        from: d.str()?,
                        to: d.str()?,
                        payload: d.payload()?,
                        sent_tick: d.u64()?,
                    });
                }
                Frame::TickInputs {
                    tick,
                    readings: Readings { values },
                    inbox,
                }
            }
            TICK_OUTPUTS => {
                let tick = d.u64()?;
                let drive = WheelSpeeds::new(d.f64()?, d.f64()?);
                let n = d.len()?;
                let mut messages = Vec::with_capacity(n);
                for _ in 0..n {
                    messages.push(Outgoing {
                        to: d.str()?,
                        payload: d.payload()?,
                    });
                }
                let n = d.len()?;
                let mut ops = Vec::with_capacity(n);
                for _ in 0..n {
                    ops.push(match d.u8()? {
                        0 => ResourceOp::Pick(ResourceId(d.u32()?)),
                        1 => ResourceOp::Drop,
                        v => return Err(WireError::Malformed(format!("bad op tag {v}"))),
                    });
                }
                let n = d.len()?;
                let mut notes = Vec::with_capacity(n);
                for _ in 0..n {
                    notes.push(d.str()?);
                }
                Frame::TickOutputs {
                    tick,
                    output: AgentOutput {
                        drive,
                        messages,
                        ops,
                        notes,
                    },
                }
            }
            DISCONNECT => Frame::Disconnect { reason: d.str()? },
            other => return Err(WireError::UnexpectedKind(other)),
        };
        if !d.buf.is_empty() {
            return Err(WireError::Malformed(format!("{} trailing bytes", d.buf.len())));
        }
        Ok(frame)
    }
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> Result<(), WireError> {
    w.write_all(&frame.encode())?;
    w.flush()?;
    Ok(())
}

/// Buffered frame reader that survives read timeouts without losing bytes.
#[derive(Debug, Default)]
pub struct FrameReader {
    buf: Vec<u8>,
}

impl FrameReader {
    /// `Ok(None)` when the read timed out before a full frame arrived.
    pub fn read(&mut self, r: &mut impl Read) -> Result<Option<Frame>, WireError> {
        loop {
            if self.buf.len() >= 4 {
                let len = u32::from_le_bytes(self.buf[..4].try_into().expect("4 bytes"));
                if len == 0 || len > MAX_FRAME {
                    return Err(WireError::Malformed(format!("frame length {len}")));
                }
                let total = 4 + len as usize;
                if self.buf.len() >= total {
                    let frame = Frame::decode(self.buf[4], &self.buf[5..total]);
                    self.buf.drain(..total);
                    return frame.map(Some);
                }
            }
            let mut chunk = [0u8; 4096];
            match r.read(&mut chunk) {
                Ok(0) => return Err(WireError::Disconnected("connection closed".into())),
                Ok(n) => self.buf.extend_from_slice(&chunk[..n]),
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => return Ok(None),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
}

/// Server-side peer for an agent whose mind runs in another process.
pub struct RemoteMind {
    name: String,
    stream: TcpStream,
    reader: FrameReader,
    last: WheelSpeeds,
}

impl RemoteMind {
    /// Wrap a connection that has already sent REGISTER; answers REGISTERED.
    pub fn accept(
        name: &str,
        mut stream: TcpStream,
        reader: FrameReader,
        id: AgentId,
        seed: u64,
        tick: u64,
        timeout: Duration,
    ) -> Result<RemoteMind, WireError> {
        stream.set_read_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        write_frame(&mut stream, &Frame::Registered { id, seed, tick })?;
        Ok(RemoteMind {
            name: name.to_string(),
            stream,
            reader,
            last: WheelSpeeds::STOP,
        })
    }

    fn remote_err(&self, message: impl ToString) -> AgentError {
        AgentError::Remote {
            agent: self.name.clone(),
            message: message.to_string(),
        }
    }
}

impl AgentMind for RemoteMind {
    fn step(&mut self, tick: u64, readings: &Readings, inbox: &[Message]) -> Result<AgentOutput, AgentError> {
        let frame = Frame::TickInputs {
            tick,
            readings: readings.clone(),
            inbox: inbox.to_vec(),
        };
        write_frame(&mut self.stream, &frame).map_err(|e| self.remote_err(e))?;
        loop {
            match self.reader.read(&mut self.stream) {
                Ok(Some(Frame::TickOutputs { tick: t, output })) if t == tick => {
                    self.last = output.drive;
                    return Ok(output);
                }
                // a late answer to an earlier tick
                Ok(Some(Frame::TickOutputs { tick: t, .. })) if t < tick => continue,
                Ok(Some(Frame::Disconnect { reason })) => {
                    return Err(self.remote_err(format!("disconnected: {reason}")))
                }
                Ok(Some(other)) => return Err(self.remote_err(format!("unexpected frame kind {}", other.kind()))),
                Ok(None) => {
                    return Ok(AgentOutput {
                        drive: self.last,
                        notes: vec![format!("timeout at tick {tick}; repeating last command")],
                        ..AgentOutput::default()
                    })
                }
                Err(e) => return Err(self.remote_err(e)),
            }
        }
    }

    fn finish(&mut self, reason: &str) {
        let _ = write_frame(
            &mut self.stream,
            &Frame::Disconnect {
                reason: reason.to_string(),
            },
        );
    }
}

/// Wait for the REGISTER frame of a freshly accepted connection.
pub fn read_register(stream: &mut TcpStream, timeout: Duration) -> Result<(String, FrameReader), WireError> {
    stream.set_read_timeout(Some(timeout))?;
    let mut reader = FrameReader::default();
    match reader.read(stream)? {
        Some(Frame::Register { name }) => Ok((name, reader)),
        Some(other) => Err(WireError::UnexpectedKind(other.kind())),
        None => Err(WireError::Disconnected("no REGISTER before timeout".into())),
    }
}

/// Summary of a remote agent session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionEnd {
    pub id: AgentId,
    pub ticks: u64,
    pub reason: String,
}

/// The agent side: register, then answer TICK_INPUTS until DISCONNECT.
pub fn serve_agent(stream: &mut TcpStream, spec: &AgentSpec, policy: Box<dyn Policy>) -> Result<SessionEnd, WireError> {
    stream.set_nodelay(true)?;
    write_frame(
        stream,
        &Frame::Register {
            name: spec.name.clone(),
        },
    )?;
    let mut reader = FrameReader::default();
    let next = |reader: &mut FrameReader, stream: &mut TcpStream| loop {
        if let Some(f) = reader.read(stream)? {
            return Ok::<Frame, WireError>(f);
        }
    };
    let (id, seed) = match next(&mut reader, stream)? {
        Frame::Registered { id, seed, .. } => (id, seed),
        Frame::Disconnect { reason } => return Err(WireError::Disconnected(reason)),
        other => return Err(WireError::UnexpectedKind(other.kind())),
    };
    let mut mind = LayeredAgent::new(spec, policy, seed);
    let mut ticks = 0;
    loop {
        match next(&mut reader, stream)? {
            Frame::TickInputs { tick, readings, inbox } => {
                let output = match mind.step(tick, &readings, &inbox) {
                    Ok(o) => o,
                    Err(e) => {
                        let reason = e.to_string();
                        write_frame(stream, &Frame::Disconnect { reason: reason.clone() })?;
                        return Err(WireError::Disconnected(reason));
                    }
                };
                write_frame(stream, &Frame::TickOutputs { tick, output })?;
                ticks += 1;
            }
            Frame::Disconnect { reason } => return Ok(SessionEnd { id, ticks, reason }),
            other => return Err(WireError::UnexpectedKind(other.kind())),
        }
    }
}

impl From<WireError> for EnvError {
    fn from(e: WireError) -> Self {
        EnvError::Remote(e.to_string())
    }
}

/// Run with the agents named in `options.remote` attached over `listener`.
/// Blocks until every remote agent has registered, or fails once `timeout`
/// has passed without that happening.
pub fn run_with_remote(
    config: &RunConfig,
    options: &RunOptions,
    listener: &TcpListener,
    timeout: Duration,
) -> Result<(RunReport, String), EnvError> {
    for name in &options.remote {
        if !config.agents.iter().any(|a| a.name == *name) {
            return Err(EnvError::Remote(format!("no agent named `{name}` in the config")));
        }
    }
    let mut pending: BTreeMap<String, (TcpStream, FrameReader)> = BTreeMap::new();
    let deadline = Instant::now() + timeout;
    listener.set_nonblocking(true).map_err(WireError::from)?;
    while pending.len() < options.remote.len() {
        let mut stream = match listener.accept() {
            Ok((stream, _)) => stream,
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    let _ = listener.set_nonblocking(false);
                    let missing: Vec<&str> = options
                        .remote
                        .iter()
                        .filter(|n| !pending.contains_key(*n))
                        .map(String::as_str)
                        .collect();
                    return Err(EnvError::Remote(format!(
                        "timed out waiting for {} to register",
                        missing.join(", ")
                    )));
                }
                std::thread::sleep(Duration::from_millis(5));
                continue;
            }
            Err(e) => {
                let _ = listener.set_nonblocking(false);
                return Err(WireError::from(e).into());
            }
        };
        stream.set_nonblocking(false).map_err(WireError::from)?;
        let (name, reader) = match read_register(&mut stream, timeout) {
            Ok(r) => r,
            Err(_) => continue,
        };
        if !options.remote.contains(&name) || pending.contains_key(&name) {
            let reason = format!("`{name}` is not an expected remote agent");
            let _ = write_frame(&mut stream, &Frame::Disconnect { reason });
            continue;
        }
        pending.insert(name, (stream, reader));
    }
    listener.set_nonblocking(false).map_err(WireError::from)?;
    let seed = options.seed.unwrap_or(config.seed);
    run_with(config, options, |spec, id| match pending.remove(&spec.name) {
        Some((stream, reader)) => {
            let mind = RemoteMind::accept(&spec.name, stream, reader, id, agent_seed(seed, id.0), 0, timeout)?;
            Ok((Attachment::Remote, Box::new(mind) as Box<dyn AgentMind>))
        }
        None => Ok((Attachment::InProcess, local_mind(spec, seed, id)?)),
    })
}
