//! Binary wire format.
//!
//! Stream framing: `"RFTP" | version u8 | type u8 | length u32 LE | payload`.
//! Message-channel framing (WebSocket) drops the magic and length:
//! `version u8 | type u8 | payload`. Decoding is strict: every accepted
//! byte string re-encodes to itself.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"RFTP";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
/// Largest payload accepted by default.
pub const MAX_PAYLOAD: usize = 64 << 20;

pub const TYPE_HELLO: u8 = 0x01;
pub const TYPE_RENDER_REQUEST: u8 = 0x02;
pub const TYPE_RENDER_STAGE: u8 = 0x03;
pub const TYPE_CANCEL: u8 = 0x04;
pub const TYPE_STATS: u8 = 0x05;
pub const TYPE_FRAME_PUSH: u8 = 0x06;
pub const TYPE_ERROR: u8 = 0x07;

pub const FLAG_WANT_DEPTH: u8 = 1;
pub const FLAG_PROGRESSIVE: u8 = 2;
pub const FLAG_CONTINUOUS: u8 = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("truncated: need {needed} more bytes")]
    Truncated { needed: usize },
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("payload of {0} bytes exceeds limit")]
    TooLarge(usize),
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("invalid {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Error)]
pub enum ReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Viewer = 0,
    Sensor = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StageKind {
    S10 = 0,
    S50 = 1,
    S100 = 2,
}

impl StageKind {
    pub const ALL: [StageKind; 3] = [StageKind::S10, StageKind::S50, StageKind::S100];

    pub fn fraction(self) -> f64 {
        match self {
            StageKind::S10 => 0.1,
            StageKind::S50 => 0.5,
            StageKind::S100 => 1.0,
        }
    }

    fn from_u8(v: u8) -> Result<Self, ProtocolError> {
        Self::ALL.get(v as usize).copied().ok_or(ProtocolError::Invalid("stage"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hello {
    pub client_id: [u8; 16],
    pub role: Role,
}

/// Wire form of a render request. `backend` stays raw so that unknown
/// values reach the session layer and are rejected there.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderRequestMsg {
    pub request_id: u64,
    pub backend: u8,
    pub flags: u8,
    /// `qw, qx, qy, qz, tx, ty, tz`, world from camera.
    pub pose: [f64; 7],
    /// `fx, fy, cx, cy`.
    pub intrinsics: [f32; 4],
    pub width: u16,
    pub height: u16,
    /// `x0, y0, z0, x1, y1, z1`; the bytes are present only with the flag.
    pub crop: Option<[f32; 6]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderStageMsg {
    pub request_id: u64,
    pub stage: StageKind,
    pub width: u16,
    pub height: u16,
    pub render_time_us: u32,
    /// 8-bit RGB, row-major, `width * height * 3` bytes.
    pub rgb: Vec<u8>,
    /// Camera z in meters, `width * height` values.
    pub depth: Option<Vec<f32>>,
}

/// Server counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StatsMsg {
    pub requests_accepted: u64,
    pub requests_superseded: u64,
    pub requests_rejected: u64,
    pub stages_sent: u64,
    pub stages_dropped: u64,
    pub train_steps: u64,
    pub keyframes: u64,
    pub clients: u64,
}

impl StatsMsg {
    pub fn to_array(&self) -> [u64; 8] {
        [
            self.requests_accepted,
            self.requests_superseded,
            self.requests_rejected,
            self.stages_sent,
            self.stages_dropped,
            self.train_steps,
            self.keyframes,
            self.clients,
        ]
    }

    pub fn from_array(v: [u64; 8]) -> Self {
        Self {
            requests_accepted: v[0],
            requests_superseded: v[1],
            requests_rejected: v[2],
            stages_sent: v[3],
            stages_dropped: v[4],
            train_steps: v[5],
            keyframes: v[6],
            clients: v[7],
        }
    }
}

/// A posed camera frame from a sensor client.
///
/// Payload: `id_len u8 | id utf-8 | seq u64 | timestamp f64 | fx fy cx cy f64 |
/// width height u16 | distortion 4×f64 | pose 7×f64 | depth_scale f64 |
/// rgb_len u32 | rgb PNG | depth_present u8 | [depth_len u32 | 16-bit PNG]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePushMsg {
    pub camera_id: String,
    pub seq: u64,
    pub timestamp: f64,
    pub intrinsics: [f64; 4],
    pub width: u16,
    pub height: u16,
    pub distortion: [f64; 4],
    pub pose: [f64; 7],
    /// Meters per depth PNG unit.
    pub depth_scale: f64,
    pub rgb_png: Vec<u8>,
    pub depth_png: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    Protocol = 1,
    Stale = 2,
    Backend = 3,
    Invalid = 4,
    Render = 5,
    Busy = 6,
    Ingest = 7,
}

impl ErrorCode {
    const ALL: [ErrorCode; 7] = [
        ErrorCode::Protocol,
        ErrorCode::Stale,
        ErrorCode::Backend,
        ErrorCode::Invalid,
        ErrorCode::Render,
        ErrorCode::Busy,
        ErrorCode::Ingest,
    ];

    fn from_u8(v: u8) -> Result<Self, ProtocolError> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| *c as u8 == v)
            .ok_or(ProtocolError::Invalid("error code"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMsg {
    /// 0 when the error is not tied to a request.
    pub request_id: u64,
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello(Hello),
    RenderRequest(RenderRequestMsg),
    RenderStage(RenderStageMsg),
    Cancel { request_id: u64 },
    Stats(StatsMsg),
    FramePush(FramePushMsg),
    Error(ErrorMsg),
}

impl Message {
    pub fn type_code(&self) -> u8 {
        match self {
            Message::Hello(_) => TYPE_HELLO,
            Message::RenderRequest(_) => TYPE_RENDER_REQUEST,
            Message::RenderStage(_) => TYPE_RENDER_STAGE,
            Message::Cancel { .. } => TYPE_CANCEL,
            Message::Stats(_) => TYPE_STATS,
            Message::FramePush(_) => TYPE_FRAME_PUSH,
            Message::Error(_) => TYPE_ERROR,
        }
    }

    pub fn encode_payload(&self) -> Vec<u8> {
        let mut w = Vec::new();
        match self {
            Message::Hello(h) => {
                w.extend_from_slice(&h.client_id);
                w.push(h.role as u8);
            }
            Message::RenderRequest(r) => {
                put_u64(&mut w, r.request_id);
                w.push(r.backend);
                w.push(r.flags);
                r.pose.iter().for_each(|v| put_f64(&mut w, *v));
                r.intrinsics.iter().for_each(|v| put_f32(&mut w, *v));
                put_u16(&mut w, r.width);
                put_u16(&mut w, r.height);
                match &r.crop {
                    Some(c) => {
                        w.push(1);
                        c.iter().for_each(|v| put_f32(&mut w, *v));
                    }
                    None => w.push(0),
                }
            }
            Message::RenderStage(s) => {
                put_u64(&mut w, s.request_id);
                w.push(s.stage as u8);
                put_u16(&mut w, s.width);
                put_u16(&mut w, s.height);
                put_u32(&mut w, s.render_time_us);
                w.extend_from_slice(&s.rgb);
                match &s.depth {
                    Some(d) => {
                        w.push(1);
                        d.iter().for_each(|v| put_f32(&mut w, *v));
                    }
                    None => w.push(0),
                }
            }
            Message::Cancel { request_id } => put_u64(&mut w, *request_id),
            Message::Stats(s) => s.to_array().iter().for_each(|v| put_u64(&mut w, *v)),
            Message::FramePush(f) => {
                w.push(f.camera_id.len() as u8);
                w.extend_from_slice(f.camera_id.as_bytes());
                put_u64(&mut w, f.seq);
                put_f64(&mut w, f.timestamp);
                f.intrinsics.iter().for_each(|v| put_f64(&mut w, *v));
                put_u16(&mut w, f.width);
                put_u16(&mut w, f.height);
                f.distortion.iter().for_each(|v| put_f64(&mut w, *v));
                f.pose.iter().for_each(|v| put_f64(&mut w, *v));
                put_f64(&mut w, f.depth_scale);
                put_u32(&mut w, f.rgb_png.len() as u32);
                w.extend_from_slice(&f.rgb_png);
                match &f.depth_png {
                    Some(d) => {
                        w.push(1);
                        put_u32(&mut w, d.len() as u32);
                        w.extend_from_slice(d);
                    }
                    None => w.push(0),
                }
            }
            Message::Error(e) => {
                put_u64(&mut w, e.request_id);
                w.push(e.code as u8);
                w.extend_from_slice(e.message.as_bytes());
            }
        }
        w
    }

    pub fn decode_payload(type_code: u8, payload: &[u8]) -> Result<Message, ProtocolError> {
        let mut r = Cursor { buf: payload, pos: 0 };
        let msg = match type_code {
            TYPE_HELLO => {
                let client_id = r.array::<16>()?;
                let role = match r.u8()? {
                    0 => Role::Viewer,
                    1 => Role::Sensor,
                    _ => return Err(ProtocolError::Invalid("role")),
                };
                Message::Hello(Hello { client_id, role })
            }
            TYPE_RENDER_REQUEST => {
                let request_id = r.u64()?;
                let backend = r.u8()?;
                let flags = r.u8()?;
                if flags & !(FLAG_WANT_DEPTH | FLAG_PROGRESSIVE | FLAG_CONTINUOUS) != 0 {
                    return Err(ProtocolError::Invalid("flags"));
                }
                let pose = r.f64s::<7>()?;
                let intrinsics = r.f32s::<4>()?;
                let width = r.u16()?;
                let height = r.u16()?;
                let crop = match r.u8()? {
                    0 => None,
                    1 => Some(r.f32s::<6>()?),
                    _ => return Err(ProtocolError::Invalid("crop_present")),
                };
                Message::RenderRequest(RenderRequestMsg {
                    request_id,
                    backend,
                    flags,
                    pose,
                    intrinsics,
                    width,
                    height,
                    crop,
                })
            }
            TYPE_RENDER_STAGE => {
                let request_id = r.u64()?;
                let stage = StageKind::from_u8(r.u8()?)?;
                let width = r.u16()?;
                let height = r.u16()?;
                let render_time_us = r.u32()?;
                let pixels = width as usize * height as usize;
                let rgb = r.bytes(pixels * 3)?.to_vec();
                let depth = match r.u8()? {
                    0 => None,
                    1 => {
                        let raw = r.bytes(pixels * 4)?;
                        Some(raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
                    }
                    _ => return Err(ProtocolError::Invalid("depth_present")),
                };
                Message::RenderStage(RenderStageMsg {
                    request_id,
                    stage,
                    width,
                    height,
                    render_time_us,
                    rgb,
                    depth,
                })
            }
            TYPE_CANCEL => Message::Cancel { request_id: r.u64()? },
            TYPE_STATS => {
                let mut v = [0u64; 8];
                for x in &mut v {
                    *x = r.u64()?;
                }
                Message::Stats(StatsMsg::from_array(v))
            }
            TYPE_FRAME_PUSH => {
                let id_len = r.u8()? as usize;
                let camera_id = std::str::from_utf8(r.bytes(id_len)?)
                    .map_err(|_| ProtocolError::Invalid("camera id"))?
                    .to_string();
                let seq = r.u64()?;
                let timestamp = r.f64()?;
                let intrinsics = r.f64s::<4>()?;
                let width = r.u16()?;
                let height = r.u16()?;
                let distortion = r.f64s::<4>()?;
                let pose = r.f64s::<7>()?;
                let depth_scale = r.f64()?;
                let rgb_len = r.u32()? as usize;
                let rgb_png = r.bytes(rgb_len)?.to_vec();
                let depth_png = match r.u8()? {
                    0 => None,
                    1 => {
                        let n = r.u32()? as usize;
                        Some(r.bytes(n)?.to_vec())
                    }
                    _ => return Err(ProtocolError::Invalid("depth_present")),
                };
                Message::FramePush(FramePushMsg {
                    camera_id,
                    seq,
                    timestamp,
                    intrinsics,
                    width,
                    height,
                    distortion,
                    pose,
                    depth_scale,
                    rgb_png,
                    depth_png,
                })
            }
            TYPE_ERROR => {
                let request_id = r.u64()?;
                let code = ErrorCode::from_u8(r.u8()?)?;
                let message = std::str::from_utf8(r.rest())
                    .map_err(|_| ProtocolError::Invalid("utf-8 message"))?
                    .to_string();
                Message::Error(ErrorMsg { request_id, code, message })
            }
            other => return Err(ProtocolError::UnknownType(other)),
        };
        if r.remaining() != 0 {
            return Err(ProtocolError::Trailing(r.remaining()));
        }
        Ok(msg)
    }

    /// Checks that hold for encoding but are not expressible in the types.
    pub fn validate(&self) -> Result<(), ProtocolError> {
        match self {
            Message::RenderRequest(r) if r.flags & !(FLAG_WANT_DEPTH | FLAG_PROGRESSIVE | FLAG_CONTINUOUS) != 0 => {
                Err(ProtocolError::Invalid("flags"))
            }
            Message::RenderStage(s) => {
                let pixels = s.width as usize * s.height as usize;
                if s.rgb.len() != pixels * 3 {
                    return Err(ProtocolError::Invalid("rgb length"));
                }
                if s.depth.as_ref().is_some_and(|d| d.len() != pixels) {
                    return Err(ProtocolError::Invalid("depth length"));
                }
                Ok(())
            }
            Message::FramePush(f) if f.camera_id.len() > u8::MAX as usize => Err(ProtocolError::Invalid("camera id")),
            _ => Ok(()),
        }
    }

    /// Stream framing with magic and length.
    pub fn encode(&self) -> Vec<u8> {
        let payload = self.encode_payload();
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.type_code());
        put_u32(&mut out, payload.len() as u32);
        out.extend_from_slice(&payload);
        out
    }

    /// Decodes one stream-framed message from the front of `buf`, returning
    /// it with the number of bytes consumed.
    pub fn decode(buf: &[u8]) -> Result<(Message, usize), ProtocolError> {
        Self::decode_limited(buf, MAX_PAYLOAD)
    }

    pub fn decode_limited(buf: &[u8], max_payload: usize) -> Result<(Message, usize), ProtocolError> {
        let (type_code, len) = parse_header(buf, max_payload)?;
        let end = HEADER_LEN + len;
        if buf.len() < end {
            return Err(ProtocolError::Truncated { needed: end - buf.len() });
        }
        let msg = Self::decode_payload(type_code, &buf[HEADER_LEN..end])?;
        Ok((msg, end))
    }

    /// Message-channel framing: `version | type | payload`.
    pub fn encode_channel(&self) -> Vec<u8> {
        let payload = self.encode_payload();
        let mut out = Vec::with_capacity(2 + payload.len());
        out.push(VERSION);
        out.push(self.type_code());
        out.extend_from_slice(&payload);
        out
    }

    pub fn decode_channel(buf: &[u8]) -> Result<Message, ProtocolError> {
        if buf.len() < 2 {
            return Err(ProtocolError::Truncated { needed: 2 - buf.len() });
        }
        if buf[0] != VERSION {
            return Err(ProtocolError::BadVersion(buf[0]));
        }
        Self::decode_payload(buf[1], &buf[2..])
    }
}

/// Validates a stream header and returns `(type, payload length)`.
pub fn parse_header(buf: &[u8], max_payload: usize) -> Result<(u8, usize), ProtocolError> {
    if buf.len() < HEADER_LEN {
        return Err(ProtocolError::Truncated { needed: HEADER_LEN - buf.len() });
    }
    let magic = [buf[0], buf[1], buf[2], buf[3]];
    if magic != MAGIC {
        return Err(ProtocolError::BadMagic(magic));
    }
    if buf[4] != VERSION {
        return Err(ProtocolError::BadVersion(buf[4]));
    }
    let type_code = buf[5];
    if !(TYPE_HELLO..=TYPE_ERROR).contains(&type_code) {
        return Err(ProtocolError::UnknownType(type_code));
    }
    let len = u32::from_le_bytes([buf[6], buf[7], buf[8], buf[9]]) as usize;
    if len > max_payload {
        return Err(ProtocolError::TooLarge(len));
    }
    Ok((type_code, len))
}

/// Reads one stream-framed message. `Ok(None)` on end of stream at a
/// message boundary.
pub fn read_message<R: Read>(reader: &mut R, max_payload: usize) -> Result<Option<Message>, ReadError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match reader.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let (type_code, len) = parse_header(&header, max_payload)?;
    let mut payload = vec![0u8; len];
    reader.read_exact(&mut payload)?;
    Ok(Some(Message::decode_payload(type_code, &payload)?))
}

pub fn write_message<W: Write>(writer: &mut W, msg: &Message) -> io::Result<()> {
    writer.write_all(&msg.encode())
}

fn put_u16(w: &mut Vec<u8>, v: u16) {
    w.extend_from_slice(&v.to_le_bytes());
}
fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}
fn put_u64(w: &mut Vec<u8>, v: u64) {
    w.extend_from_slice(&v.to_le_bytes());
}
fn put_f32(w: &mut Vec<u8>, v: f32) {
    w.extend_from_slice(&v.to_le_bytes());
}
fn put_f64(w: &mut Vec<u8>, v: f64) {
    w.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if self.remaining() < n {
            return Err(ProtocolError::Truncated { needed: n - self.remaining() });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn rest(&mut self) -> &'a [u8] {
        let out = &self.buf[self.pos..];
        self.pos = self.buf.len();
        out
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ProtocolError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.bytes(N)?);
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.bytes(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ProtocolError> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, ProtocolError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn f64s<const N: usize>(&mut self) -> Result<[f64; N], ProtocolError> {
        let mut out = [0.0; N];
        for v in &mut out {
            *v = self.f64()?;
        }
        Ok(out)
    }

    fn f32s<const N: usize>(&mut self) -> Result<[f32; N], ProtocolError> {
        let mut out = [0.0; N];
        for v in &mut out {
            *v = f32::from_le_bytes(self.array()?);
        }
        Ok(out)
    }
}
