use std::fmt::Write;

use thiserror::Error;

use crate::csm::Payload;
use crate::geometry::Vec2;

pub const LOG_VERSION: &str = "v1";
pub const NO_AGENT: &str = "-";

/// 64-bit FNV-1a.
#[derive(Debug, Clone, Copy)]
pub struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv64 {
    pub fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }

    pub fn write_i64(&mut self, v: i64) {
        self.write(&v.to_le_bytes());
    }

    /// Fixed-point (×2^32) encoding, identical on every platform.
    pub fn write_fixed(&mut self, v: f64) {
        self.write_i64(to_fixed(v));
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

pub fn to_fixed(v: f64) -> i64 {
    (v * 4_294_967_296.0).round() as i64
}

pub fn escape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '|' => out.push_str("\\p"),
            '\n' => out.push_str("\\n"),
            other => out.push(other),
        }
    }
    out
}

pub fn unescape(field: &str) -> Result<String, LogError> {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('p') => out.push('|'),
            Some('n') => out.push('\n'),
            _ => return Err(LogError::Escape(field.to_string())),
        }
    }
    Ok(out)
}

#[derive(Debug, Error, PartialEq)]
pub enum LogError {
    #[error("missing or malformed log header")]
    Header,
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("bad escape sequence in `{0}`")]
    Escape(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogHeader {
    pub seed: u64,
    pub digest: u64,
    pub checkpoint_every: u64,
}

impl LogHeader {
    pub fn line(&self) -> String {
        format!(
            "#jade-log {LOG_VERSION} seed={} digest={:016x} checkpoint={}",
            self.seed, self.digest, self.checkpoint_every
        )
    }

    pub fn parse(line: &str) -> Result<LogHeader, LogError> {
        let mut parts = line.split(' ');
        if parts.next() != Some("#jade-log") || parts.next() != Some(LOG_VERSION) {
            return Err(LogError::Header);
        }
        let (mut seed, mut digest, mut checkpoint) = (None, None, None);
        for p in parts {
            match p.split_once('=') {
                Some(("seed", v)) => seed = v.parse().ok(),
                Some(("digest", v)) => digest = u64::from_str_radix(v, 16).ok(),
                Some(("checkpoint", v)) => checkpoint = v.parse().ok(),
                _ => return Err(LogError::Header),
            }
        }
        Ok(LogHeader {
            seed: seed.ok_or(LogError::Header)?,
            digest: digest.ok_or(LogError::Header)?,
            checkpoint_every: checkpoint.ok_or(LogError::Header)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub tick: u64,
    pub kind: String,
    pub agent: String,
    pub payload: String,
}

impl Record {
    pub fn line(&self) -> String {
        format_record(self.tick, &self.kind, &self.agent, &self.payload)
    }

    pub fn fields(&self) -> Vec<&str> {
        if self.payload.is_empty() {
            Vec::new()
        } else {
            self.payload.split(' ').collect()
        }
    }
}

pub fn format_record(tick: u64, kind: &str, agent: &str, payload: &str) -> String {
    format!("{tick}|{}|{}|{}", escape(kind), escape(agent), escape(payload))
}

/// Append-only log text.
#[derive(Debug, Clone, Default)]
pub struct LogWriter {
    text: String,
}

impl LogWriter {
    pub fn new(header: &LogHeader) -> Self {
        let mut text = header.line();
        text.push('\n');
        Self { text }
    }

    pub fn record(&mut self, tick: u64, kind: &str, agent: &str, payload: &str) {
        self.text.push_str(&format_record(tick, kind, agent, payload));
        self.text.push('\n');
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn into_text(self) -> String {
        self.text
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLog {
    pub header: LogHeader,
    pub records: Vec<Record>,
}

/// Parse a log. Stops at the first malformed line and reports where.
pub fn parse_log(text: &str) -> Result<ParsedLog, LogError> {
    let mut lines = text.lines();
    let header = LogHeader::parse(lines.next().ok_or(LogError::Header)?)?;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        records.push(parse_record(line).map_err(|message| LogError::Record { line: i + 2, message })?);
    }
    Ok(ParsedLog { header, records })
}

pub fn parse_record(line: &str) -> Result<Record, String> {
    let mut parts = line.splitn(4, '|');
    let tick = parts
        .next()
        .and_then(|t| t.parse::<u64>().ok())
        .ok_or_else(|| format!("bad tick in `{line}`"))?;
    let mut field = || -> Result<String, String> {
        let raw = parts.next().ok_or_else(|| format!("too few fields in `{line}`"))?;
        unescape(raw).map_err(|e| e.to_string())
    };
    Ok(Record {
        tick,
        kind: field()?,
        agent: field()?,
        payload: field()?,
    })
}

/// Leading tick of a line without full parsing; `None` for malformed lines.
pub fn line_tick(line: &str) -> Option<u64> {
    line.split('|').next()?.parse().ok()
}

pub fn payload_text(p: &Option<Payload>) -> String {
    match p {
        None => "-".into(),
        Some(Payload::Scalar(v)) => format!("s:{v}"),
        Some(Payload::Vector(v)) => format!("v:{},{}", v.x, v.y),
    }
}

pub fn parse_payload(s: &str) -> Result<Option<Payload>, String> {
    if s == "-" {
        return Ok(None);
    }
    if let Some(v) = s.strip_prefix("s:") {
        return v
            .parse()
            .map(|v| Some(Payload::Scalar(v)))
            .map_err(|_| format!("bad scalar payload `{s}`"));
    }
    if let Some(v) = s.strip_prefix("v:") {
        let (x, y) = v.split_once(',').ok_or_else(|| format!("bad vector payload `{s}`"))?;
        let x = x.parse().map_err(|_| format!("bad vector payload `{s}`"))?;
        let y = y.parse().map_err(|_| format!("bad vector payload `{s}`"))?;
        return Ok(Some(Payload::Vector(Vec2::new(x, y))));
    }
    Err(format!("bad payload `{s}`"))
}

pub fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("bad number `{s}`"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite number `{s}`"))
    }
}

/// Join numbers with single spaces using round-trip formatting.
pub fn nums(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}
