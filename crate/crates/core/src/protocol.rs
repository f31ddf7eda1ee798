//! Binary request/response protocol spoken with a feature sidecar.
//!
//! Every frame is `"SKOP" | version: u16 | msg_type: u16 | payload_len: u32 |
//! payload`, all little-endian. Requests are 1..=3, replies 101..=103, and
//! 500 carries a UTF-8 error message.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};

use crate::raster::RasterImage;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SKOP";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 12;
/// Frames larger than this are rejected before allocating.
pub const MAX_PAYLOAD: u32 = 1 << 30;

pub const REGISTER_TARGET: u16 = 1;
pub const EVAL_LOSS: u16 = 2;
pub const SHUTDOWN: u16 = 3;
pub const TARGET_REGISTERED: u16 = 101;
pub const LOSS: u16 = 102;
pub const SHUTDOWN_ACK: u16 = 103;
pub const ERROR: u16 = 500;

/// Bit set carried by `EVAL_LOSS`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalFlags(pub u32);

impl EvalFlags {
    pub const SEMANTIC: EvalFlags = EvalFlags(1);
    pub const GEOMETRIC: EvalFlags = EvalFlags(1 << 1);
    pub const L2_PARITY: EvalFlags = EvalFlags(1 << 2);

    pub fn contains(self, other: EvalFlags) -> bool {
        self.0 & other.0 == other.0
    }
}

impl std::ops::BitOr for EvalFlags {
    type Output = EvalFlags;
    fn bitor(self, rhs: EvalFlags) -> EvalFlags {
        EvalFlags(self.0 | rhs.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireImage {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub pixels: Vec<f32>,
}

impl WireImage {
    pub fn from_raster(image: &RasterImage) -> Self {
        Self {
            width: image.width(),
            height: image.height(),
            channels: image.channels(),
            pixels: image.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_raster(&self) -> Result<RasterImage> {
        RasterImage::new(self.width, self.height, self.channels, self.pixels.iter().map(|&v| v as f64).collect())
    }

    pub fn value_count(&self) -> usize {
        self.width as usize * self.height as usize * self.channels as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRequest {
    pub target_id: u32,
    pub augment_views: u32,
    pub seed: u64,
    pub flags: EvalFlags,
    pub image: WireImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReply {
    pub total: f64,
    pub semantic: f64,
    pub geometric: f64,
    pub grad: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    RegisterTarget(WireImage),
    EvalLoss(EvalRequest),
    Shutdown,
    TargetRegistered { target_id: u32, relevancy: Vec<f32> },
    Loss(LossReply),
    ShutdownAck,
    Error(String),
}

impl Message {
    pub fn msg_type(&self) -> u16 {
        match self {
            Message::RegisterTarget(_) => REGISTER_TARGET,
            Message::EvalLoss(_) => EVAL_LOSS,
            Message::Shutdown => SHUTDOWN,
            Message::TargetRegistered { .. } => TARGET_REGISTERED,
            Message::Loss(_) => LOSS,
            Message::ShutdownAck => SHUTDOWN_ACK,
            Message::Error(_) => ERROR,
        }
    }

    pub fn encode_payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Message::RegisterTarget(image) => put_image(&mut out, image),
            Message::EvalLoss(req) => {
                out.extend_from_slice(&req.target_id.to_le_bytes());
                out.extend_from_slice(&req.augment_views.to_le_bytes());
                out.extend_from_slice(&req.seed.to_le_bytes());
                out.extend_from_slice(&req.flags.0.to_le_bytes());
                put_image(&mut out, &req.image);
            }
            Message::Shutdown | Message::ShutdownAck => {}
            Message::TargetRegistered { target_id, relevancy } => {
                out.extend_from_slice(&target_id.to_le_bytes());
                put_f32s(&mut out, relevancy);
            }
            Message::Loss(reply) => {
                out.extend_from_slice(&reply.total.to_le_bytes());
                out.extend_from_slice(&reply.semantic.to_le_bytes());
                out.extend_from_slice(&reply.geometric.to_le_bytes());
                put_f32s(&mut out, &reply.grad);
            }
            Message::Error(msg) => out.extend_from_slice(msg.as_bytes()),
        }
        out
    }

    /// Encodes header and payload.
    pub fn to_frame(&self) -> Vec<u8> {
        let payload = self.encode_payload();
        let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
        frame.extend_from_slice(&MAGIC);
        frame.extend_from_slice(&VERSION.to_le_bytes());
        frame.extend_from_slice(&self.msg_type().to_le_bytes());
        frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        frame.extend_from_slice(&payload);
        frame
    }

    pub fn decode(msg_type: u16, payload: &[u8]) -> Result<Message> {
        let mut cur = Cursor { buf: payload, pos: 0 };
        let msg = match msg_type {
            REGISTER_TARGET => Message::RegisterTarget(cur.image()?),
            EVAL_LOSS => Message::EvalLoss(EvalRequest {
                target_id: cur.u32()?,
                augment_views: cur.u32()?,
                seed: cur.u64()?,
                flags: EvalFlags(cur.u32()?),
                image: cur.image()?,
            }),
            SHUTDOWN => Message::Shutdown,
            TARGET_REGISTERED => Message::TargetRegistered { target_id: cur.u32()?, relevancy: cur.rest_f32()? },
            LOSS => Message::Loss(LossReply {
                total: cur.f64()?,
                semantic: cur.f64()?,
                geometric: cur.f64()?,
                grad: cur.rest_f32()?,
            }),
            SHUTDOWN_ACK => Message::ShutdownAck,
            ERROR => Message::Error(
                String::from_utf8(cur.rest().to_vec())
                    .map_err(|_| Error::protocol("error message is not valid UTF-8"))?,
            ),
            other => return Err(Error::protocol(format!("unknown message type {other}"))),
        };
        if cur.pos != payload.len() {
            return Err(Error::protocol(format!(
                "{} trailing bytes after message type {msg_type}",
                payload.len() - cur.pos
            )));
        }
        Ok(msg)
    }

    /// Decodes one complete frame from the front of `bytes`, returning the
    /// message and the number of bytes consumed.
    pub fn decode_frame(bytes: &[u8]) -> Result<(Message, usize)> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::protocol(format!("truncated header ({} bytes)", bytes.len())));
        }
        let header = parse_header(bytes[..HEADER_LEN].try_into().unwrap())?;
        let end = HEADER_LEN + header.payload_len as usize;
        if bytes.len() < end {
            return Err(Error::protocol(format!(
                "truncated payload: header says {} bytes, {} present",
                header.payload_len,
                bytes.len() - HEADER_LEN
            )));
        }
        Ok((Message::decode(header.msg_type, &bytes[HEADER_LEN..end])?, end))
    }
}

struct Header {
    msg_type: u16,
    payload_len: u32,
}

fn parse_header(bytes: &[u8; HEADER_LEN]) -> Result<Header> {
    if bytes[..4] != MAGIC {
        return Err(Error::protocol(format!("bad magic {:02x?}", &bytes[..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::protocol(format!("unsupported protocol version {version}")));
    }
    let msg_type = u16::from_le_bytes([bytes[6], bytes[7]]);
    let payload_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]);
    if payload_len > MAX_PAYLOAD {
        return Err(Error::protocol(format!("payload of {payload_len} bytes exceeds limit")));
    }
    Ok(Header { msg_type, payload_len })
}

fn put_image(out: &mut Vec<u8>, image: &WireImage) {
    out.extend_from_slice(&image.width.to_le_bytes());
    out.extend_from_slice(&image.height.to_le_bytes());
    out.extend_from_slice(&image.channels.to_le_bytes());
    put_f32s(out, &image.pixels);
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::protocol(format!("payload too short: need {n} bytes at offset {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        let bytes = self.take(count.checked_mul(4).ok_or_else(|| Error::protocol("pixel count overflows"))?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }

    fn rest_f32(&mut self) -> Result<Vec<f32>> {
        let remaining = self.buf.len() - self.pos;
        if !remaining.is_multiple_of(4) {
            return Err(Error::protocol(format!("{remaining} trailing bytes are not a whole number of f32")));
        }
        self.f32s(remaining / 4)
    }

    fn image(&mut self) -> Result<WireImage> {
        let (width, height, channels) = (self.u32()?, self.u32()?, self.u32()?);
        let count = (width as usize)
            .checked_mul(height as usize)
            .and_then(|n| n.checked_mul(channels as usize))
            .ok_or_else(|| Error::protocol("image dimensions overflow"))?;
        Ok(WireImage { width, height, channels, pixels: self.f32s(count)? })
    }
}

fn transport(err: io::Error) -> Error {
    Error::Transport(err)
}

pub fn write_message(w: &mut impl Write, msg: &Message) -> Result<()> {
    w.write_all(&msg.to_frame()).map_err(transport)?;
    w.flush().map_err(transport)
}

/// Reads one frame. Stream failures are transport errors; anything that
/// arrives but breaks the framing rules is a protocol error.
pub fn read_message(r: &mut impl Read) -> Result<Message> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header).map_err(transport)?;
    let header = parse_header(&header)?;
    let mut payload = vec![0u8; header.payload_len as usize];
    r.read_exact(&mut payload).map_err(transport)?;
    Message::decode(header.msg_type, &payload)
}

/// Where a sidecar lives.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Endpoint {
    /// Shell command spawned with the protocol on its stdin/stdout.
    Command(String),
    /// `host:port` of a listening sidecar.
    Tcp(String),
}

impl std::str::FromStr for Endpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(cmd) = s.strip_prefix("cmd:") {
            let cmd = cmd.trim();
            if cmd.is_empty() {
                return Err(Error::Parse("empty sidecar command".into()));
            }
            Ok(Endpoint::Command(cmd.to_string()))
        } else if let Some(addr) = s.strip_prefix("tcp:") {
            if !addr.contains(':') {
                return Err(Error::Parse(format!("expected tcp:host:port, got {s}")));
            }
            Ok(Endpoint::Tcp(addr.to_string()))
        } else {
            Err(Error::Parse(format!("backend must start with cmd: or tcp:, got {s}")))
        }
    }
}

/// Target registered with a sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisteredTarget {
    pub id: u32,
    pub width: u32,
    pub height: u32,
    /// `width * height` relevancy values, row-major.
    pub relevancy: Vec<f32>,
}

/// One client connection. Requests are strictly one at a time.
///
/// Dropping an open session sends `SHUTDOWN` and reaps a spawned child.
pub struct Session {
    reader: Box<dyn Read + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
    open: bool,
}

impl Session {
    pub fn from_streams(reader: impl Read + Send + 'static, writer: impl Write + Send + 'static) -> Self {
        Self { reader: Box::new(reader), writer: Box::new(writer), child: None, open: true }
    }

    pub fn open(endpoint: &Endpoint) -> Result<Self> {
        match endpoint {
            Endpoint::Command(cmd) => Self::spawn(cmd),
            Endpoint::Tcp(addr) => Self::connect(addr),
        }
    }

    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(transport)?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut session = Self::from_streams(BufReader::new(stdout), BufWriter::new(stdin));
        session.child = Some(child);
        Ok(session)
    }

    pub fn connect(addr: &str) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(transport)?;
        stream.set_nodelay(true).map_err(transport)?;
        let reader = stream.try_clone().map_err(transport)?;
        Ok(Self::from_streams(BufReader::new(reader), BufWriter::new(stream)))
    }

    /// Sends `request` and reads its reply; error frames become [`Error::Remote`].
    pub fn call(&mut self, request: &Message) -> Result<Message> {
        if !self.open {
            return Err(Error::Transport(io::Error::new(io::ErrorKind::NotConnected, "session closed")));
        }
        let result = write_message(&mut self.writer, request).and_then(|_| read_message(&mut self.reader));
        match result {
            Ok(Message::Error(msg)) => Err(Error::Remote(msg)),
            Ok(reply) => Ok(reply),
            Err(e) => {
                if e.is_transport() {
                    self.open = false;
                }
                Err(e)
            }
        }
    }

    pub fn register_target(&mut self, image: &RasterImage) -> Result<RegisteredTarget> {
        let request = Message::RegisterTarget(WireImage::from_raster(image));
        match self.call(&request)? {
            Message::TargetRegistered { target_id, relevancy } => {
                let want = image.width() as usize * image.height() as usize;
                if relevancy.len() != want {
                    return Err(Error::protocol(format!(
                        "relevancy map has {} values, expected {want}",
                        relevancy.len()
                    )));
                }
                if relevancy.iter().any(|v| !v.is_finite()) {
                    return Err(Error::protocol("non-finite relevancy value"));
                }
                Ok(RegisteredTarget { id: target_id, width: image.width(), height: image.height(), relevancy })
            }
            other => Err(unexpected(TARGET_REGISTERED, &other)),
        }
    }

    /// Requests a loss evaluation and checks the reply against the request.
    pub fn eval_loss(&mut self, request: EvalRequest) -> Result<LossReply> {
        let want = request.image.value_count();
        match self.call(&Message::EvalLoss(request))? {
            Message::Loss(reply) => {
                if reply.grad.len() != want {
                    return Err(Error::protocol(format!("gradient has {} values, image has {want}", reply.grad.len())));
                }
                if ![reply.total, reply.semantic, reply.geometric].iter().all(|v| v.is_finite())
                    || reply.grad.iter().any(|v| !v.is_finite())
                {
                    return Err(Error::protocol("non-finite value in loss reply"));
                }
                Ok(reply)
            }
            other => Err(unexpected(LOSS, &other)),
        }
    }

    pub fn shutdown(&mut self) -> Result<()> {
        let reply = self.call(&Message::Shutdown);
        self.open = false;
        if let Some(mut child) = self.child.take() {
            let _ = child.wait();
        }
        match reply? {
            Message::ShutdownAck => Ok(()),
            other => Err(unexpected(SHUTDOWN_ACK, &other)),
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        if self.open {
            if let Err(e) = self.shutdown() {
                log::warn!("sidecar shutdown failed: {e}");
            }
        }
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn unexpected(want: u16, got: &Message) -> Error {
    Error::protocol(format!("expected reply type {want}, got {}", got.msg_type()))
}

/// Why [`serve`] returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServeEnd {
    Shutdown,
    EndOfStream,
}

/// Serves requests from `reader` until `SHUTDOWN` or end of stream.
///
/// `handler` maps each request to its reply; an `Err` is sent back as an
/// error frame. Malformed frames are answered with an error frame too, and
/// the loop stops since framing can no longer be trusted.
pub fn serve(
    reader: &mut impl Read,
    writer: &mut impl Write,
    mut handler: impl FnMut(Message) -> Result<Message>,
) -> Result<ServeEnd> {
    loop {
        let request = match read_message(reader) {
            Ok(msg) => msg,
            Err(Error::Transport(e)) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(ServeEnd::EndOfStream),
            Err(e @ Error::Protocol(_)) => {
                write_message(writer, &Message::Error(e.to_string()))?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        if request == Message::Shutdown {
            write_message(writer, &Message::ShutdownAck)?;
            return Ok(ServeEnd::Shutdown);
        }
        let reply = handler(request).unwrap_or_else(|e| Message::Error(e.to_string()));
        write_message(writer, &reply)?;
    }
}
