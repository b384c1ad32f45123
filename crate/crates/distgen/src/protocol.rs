//! Coordinator/worker wire protocol.
//!
//! Every message travels in one frame:
//!
//! ```text
//! magic "PCDG" | u8 version = 1 | u8 type | u32 payload length | payload
//! ```
//!
//! Integers are little-endian, floats IEEE-754 binary64 little-endian and
//! strings a u32 byte length followed by UTF-8. Payloads by type:
//!
//! ```text
//! 1 HELLO    string peer name
//! 2 ASSIGN   u32 worker id | u64 seed | u32 start | u32 end | 32 bytes digest
//!            | u8 direction (0 deficit, 1 excess) | f64 magnitude kW
//!            | u8 origin (0 DG loss, 1 load deviation, 2 islanding) | u32 bus
//!            | u32 job length | job bytes (length 0: job already sent)
//! 3 SAMPLES  u32 attribute count | u32 record count | u32 skipped
//!            | records in learning-set file layout
//! 4 DONE     u32 start | u32 end | u32 kept | u32 skipped | f64 seconds
//! 5 ERROR    string message
//! ```

use pcmg_core::lsgen::canonical::{self, Reader};
use pcmg_core::lsgen::{BalancingRequirement, Direction, LsRecord, Origin};
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

use crate::error::{Error, Result};
use crate::partition::WorkAssignment;

pub const MAGIC: &[u8; 4] = b"PCDG";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
/// Frames above this size are rejected as malformed.
pub const MAX_PAYLOAD: u32 = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    Hello = 1,
    Assign = 2,
    Samples = 3,
    Done = 4,
    Error = 5,
}

impl MessageType {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            1 => Self::Hello,
            2 => Self::Assign,
            3 => Self::Samples,
            4 => Self::Done,
            5 => Self::Error,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub work: WorkAssignment,
    pub digest: [u8; 32],
    pub requirement: BalancingRequirement,
    /// Canonical job bytes; `None` when the worker already holds the job.
    pub job: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoneReport {
    pub start: u32,
    pub end: u32,
    pub kept: u32,
    pub skipped: u32,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello { name: String },
    Assign(Assignment),
    Samples { attributes: u32, records: Vec<LsRecord>, skipped: u32 },
    Done(DoneReport),
    Error { message: String },
}

impl Message {
    pub fn kind(&self) -> MessageType {
        match self {
            Message::Hello { .. } => MessageType::Hello,
            Message::Assign(_) => MessageType::Assign,
            Message::Samples { .. } => MessageType::Samples,
            Message::Done(_) => MessageType::Done,
            Message::Error { .. } => MessageType::Error,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Message::Error { message: message.into() }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_string(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn put_requirement(out: &mut Vec<u8>, req: &BalancingRequirement) {
    out.push(match req.direction {
        Direction::Deficit => 0,
        Direction::Excess => 1,
    });
    out.extend_from_slice(&req.magnitude_kw.to_le_bytes());
    let (origin, bus) = match req.origin {
        Origin::DgLoss { bus } => (0, bus),
        Origin::LoadDeviation => (1, 0),
        Origin::Islanding => (2, 0),
    };
    out.push(origin);
    put_u32(out, bus);
}

fn get_requirement(r: &mut Reader<'_>) -> Result<BalancingRequirement> {
    let direction = match r.u8()? {
        0 => Direction::Deficit,
        1 => Direction::Excess,
        v => return Err(Error::Malformed(format!("direction byte {v}"))),
    };
    let magnitude_kw = r.f64()?;
    let origin = r.u8()?;
    let bus = r.u32()?;
    let origin = match origin {
        0 => Origin::DgLoss { bus },
        1 => Origin::LoadDeviation,
        2 => Origin::Islanding,
        v => return Err(Error::Malformed(format!("origin byte {v}"))),
    };
    Ok(BalancingRequirement {
        direction,
        magnitude_kw,
        origin,
    })
}

pub fn encode_payload(msg: &Message) -> Vec<u8> {
    let mut out = Vec::new();
    match msg {
        Message::Hello { name } => put_string(&mut out, name),
        Message::Assign(a) => {
            put_u32(&mut out, a.work.worker_id);
            out.extend_from_slice(&a.work.seed.to_le_bytes());
            put_u32(&mut out, a.work.start);
            put_u32(&mut out, a.work.end);
            out.extend_from_slice(&a.digest);
            put_requirement(&mut out, &a.requirement);
            let job = a.job.as_deref().unwrap_or_default();
            put_u32(&mut out, job.len() as u32);
            out.extend_from_slice(job);
        }
        Message::Samples {
            attributes,
            records,
            skipped,
        } => {
            put_u32(&mut out, *attributes);
            put_u32(&mut out, records.len() as u32);
            put_u32(&mut out, *skipped);
            for r in records {
                canonical::encode_record(&mut out, r);
            }
        }
        Message::Done(d) => {
            for v in [d.start, d.end, d.kept, d.skipped] {
                put_u32(&mut out, v);
            }
            out.extend_from_slice(&d.seconds.to_le_bytes());
        }
        Message::Error { message } => put_string(&mut out, message),
    }
    out
}

pub fn decode_payload(kind: MessageType, payload: &[u8]) -> Result<Message> {
    decode_fields(kind, payload).map_err(|e| match e {
        Error::Core(pcmg_core::Error::Format(m)) => Error::Malformed(m),
        e => e,
    })
}

fn decode_fields(kind: MessageType, payload: &[u8]) -> Result<Message> {
    let mut r = Reader::new(payload);
    let msg = match kind {
        MessageType::Hello => Message::Hello { name: r.string()? },
        MessageType::Assign => {
            let worker_id = r.u32()?;
            let seed = r.u64()?;
            let start = r.u32()?;
            let end = r.u32()?;
            if end < start {
                return Err(Error::Malformed(format!("range [{start}, {end}) is reversed")));
            }
            let digest: [u8; 32] = r.bytes(32)?.try_into().expect("32 bytes");
            let requirement = get_requirement(&mut r)?;
            let len = r.u32()? as usize;
            let job = r.bytes(len)?;
            Message::Assign(Assignment {
                work: WorkAssignment {
                    worker_id,
                    seed,
                    start,
                    end,
                },
                digest,
                requirement,
                job: (len > 0).then(|| job.to_vec()),
            })
        }
        MessageType::Samples => {
            let attributes = r.u32()?;
            let count = r.u32()?;
            let skipped = r.u32()?;
            let min_record = 4 + 8 * (attributes as usize + 1) + 2;
            if (count as usize).saturating_mul(min_record) > r.remaining() {
                return Err(Error::Malformed(format!("{count} records do not fit the payload")));
            }
            let records = (0..count)
                .map(|_| canonical::decode_record(&mut r, attributes as usize))
                .collect::<pcmg_core::Result<Vec<_>>>()?;
            Message::Samples {
                attributes,
                records,
                skipped,
            }
        }
        MessageType::Done => Message::Done(DoneReport {
            start: r.u32()?,
            end: r.u32()?,
            kept: r.u32()?,
            skipped: r.u32()?,
            seconds: r.f64()?,
        }),
        MessageType::Error => Message::Error { message: r.string()? },
    };
    if r.remaining() != 0 {
        return Err(Error::Malformed(format!("{} trailing payload bytes", r.remaining())));
    }
    Ok(msg)
}

pub fn encode_frame(msg: &Message) -> Vec<u8> {
    let payload = encode_payload(msg);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(msg.kind() as u8);
    put_u32(&mut out, payload.len() as u32);
    out.extend_from_slice(&payload);
    out
}

/// Parsed frame header: `(version, type byte, payload length)`.
pub fn decode_header(h: &[u8; HEADER_LEN]) -> Result<(u8, u8, u32)> {
    if &h[..4] != MAGIC {
        return Err(Error::Malformed("bad magic".into()));
    }
    let len = u32::from_le_bytes(h[6..10].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(Error::Malformed(format!("payload of {len} bytes exceeds limit")));
    }
    Ok((h[4], h[5], len))
}

/// Decodes one complete frame.
pub fn decode_frame(buf: &[u8]) -> Result<Message> {
    let header: &[u8; HEADER_LEN] = buf
        .get(..HEADER_LEN)
        .and_then(|h| h.try_into().ok())
        .ok_or_else(|| Error::Malformed("short header".into()))?;
    let (version, kind, len) = decode_header(header)?;
    let payload = &buf[HEADER_LEN..];
    if payload.len() != len as usize {
        return Err(Error::Malformed(format!("payload is {} bytes, header says {len}", payload.len())));
    }
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let kind = MessageType::from_byte(kind).ok_or_else(|| Error::Malformed(format!("message type {kind}")))?;
    decode_payload(kind, payload)
}

/// Reads the next message. `Ok(None)` on a clean end of stream between
/// frames. A frame of another version is consumed whole before
/// `UnsupportedVersion` is returned, so the stream stays usable.
pub async fn read_message<R: AsyncRead + Unpin>(r: &mut R) -> Result<Option<Message>> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        let n = r.read(&mut header[got..]).await?;
        if n == 0 {
            if got == 0 {
                return Ok(None);
            }
            return Err(Error::Malformed("stream ended inside a frame header".into()));
        }
        got += n;
    }
    let (version, kind, len) = decode_header(&header)?;
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Malformed("stream ended inside a frame".into()),
        _ => Error::Io(e),
    })?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let kind = MessageType::from_byte(kind).ok_or_else(|| Error::Malformed(format!("message type {kind}")))?;
    decode_payload(kind, &payload).map(Some)
}

pub async fn write_message<W: AsyncWrite + Unpin>(w: &mut W, msg: &Message) -> Result<()> {
    w.write_all(&encode_frame(msg)).await?;
    w.flush().await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_messages() -> Vec<Message> {
        vec![
            Message::Hello { name: "w1".into() },
            Message::Assign(Assignment {
                work: WorkAssignment {
                    worker_id: 3,
                    seed: u64::MAX - 1,
                    start: 250,
                    end: 500,
                },
                digest: [7; 32],
                requirement: BalancingRequirement {
                    direction: Direction::Excess,
                    magnitude_kw: 160.5,
                    origin: Origin::DgLoss { bus: 15 },
                },
                job: Some(b"{}".to_vec()),
            }),
            Message::Samples {
                attributes: 2,
                records: vec![LsRecord {
                    sample_index: 9,
                    attributes: vec![1.0, -0.0],
                    profit: 12.25,
                    feasible: false,
                    label: None,
                }],
                skipped: 1,
            },
            Message::Done(DoneReport {
                start: 0,
                end: 50,
                kept: 49,
                skipped: 1,
                seconds: 0.5,
            }),
            Message::error("scenario mismatch"),
        ]
    }

    #[test]
    fn frames_round_trip() {
        for m in sample_messages() {
            let bytes = encode_frame(&m);
            assert_eq!(&bytes[..4], MAGIC);
            assert_eq!(bytes[5], m.kind() as u8);
            assert_eq!(decode_frame(&bytes).unwrap(), m);
        }
    }

    #[test]
    fn hello_bytes() {
        let bytes = encode_frame(&Message::Hello { name: "ab".into() });
        assert_eq!(bytes, b"PCDG\x01\x01\x06\x00\x00\x00\x02\x00\x00\x00ab");
    }

    #[test]
    fn rejects_bad_frames() {
        let good = encode_frame(&Message::error("x"));
        let mut bad = good.clone();
        bad[0] = b'Q';
        assert!(matches!(decode_frame(&bad), Err(Error::Malformed(_))));
        let mut v2 = good.clone();
        v2[4] = 2;
        assert!(matches!(decode_frame(&v2), Err(Error::UnsupportedVersion(2))));
        let mut kind = good.clone();
        kind[5] = 9;
        assert!(matches!(decode_frame(&kind), Err(Error::Malformed(_))));
        assert!(decode_frame(&good[..good.len() - 1]).is_err());
        let mut trailing = good.clone();
        trailing.push(0);
        trailing[6] += 1;
        assert!(matches!(decode_frame(&trailing), Err(Error::Malformed(_))));
    }
}
