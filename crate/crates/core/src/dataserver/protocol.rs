//! Frame codec.
//!
//! ```text
//! frame = u32 payload_len | u8 msg_type | payload
//! ```
//!
//! Types 1, 2, 3 and 6 travel in both directions; their payload starts with
//! a role byte (0 request, 1 reply). Strings and directory entries use the
//! run-file record encodings.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::retrievers::binary::{DecodeError, Decoder, EncodeExt};
use crate::retrievers::{DatasetKind, DirectoryEntry, LoadSelection, RunFileDirectory};

pub const PROTOCOL_VERSION: u32 = 1;
/// Largest payload accepted or produced.
pub const MAX_FRAME: u32 = 64 << 20;
pub const HEADER_LEN: usize = 5;

const REQUEST: u8 = 0;
const REPLY: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Hello = 0,
    ListRuns = 1,
    RunInfo = 2,
    GetData = 3,
    Subscribe = 4,
    Delta = 5,
    Status = 6,
    Error = 7,
    Bye = 8,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Option<MsgType> {
        use MsgType::*;
        [
            Hello, ListRuns, RunInfo, GetData, Subscribe, Delta, Status, Error, Bye,
        ]
        .get(v as usize)
        .copied()
    }
}

/// Error codes carried by `ERROR` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    NotFound,
    BadRequest,
    Unsupported,
    VersionMismatch,
    /// Undecodable frame from the peer.
    Protocol,
    TooLarge,
    /// The requested file exists but could not be read.
    BadData,
    Internal,
    Other(u16),
}

impl ErrorCode {
    pub fn code(self) -> u16 {
        match self {
            ErrorCode::NotFound => 1,
            ErrorCode::BadRequest => 2,
            ErrorCode::Unsupported => 3,
            ErrorCode::VersionMismatch => 4,
            ErrorCode::Protocol => 5,
            ErrorCode::TooLarge => 6,
            ErrorCode::BadData => 7,
            ErrorCode::Internal => 8,
            ErrorCode::Other(c) => c,
        }
    }

    pub fn from_code(c: u16) -> ErrorCode {
        match c {
            1 => ErrorCode::NotFound,
            2 => ErrorCode::BadRequest,
            3 => ErrorCode::Unsupported,
            4 => ErrorCode::VersionMismatch,
            5 => ErrorCode::Protocol,
            6 => ErrorCode::TooLarge,
            7 => ErrorCode::BadData,
            8 => ErrorCode::Internal,
            c => ErrorCode::Other(c),
        }
    }
}

/// One line of a `LIST_RUNS` reply.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub instrument: String,
    pub run_number: u32,
    pub start_time: i64,
    pub n_datasets: u32,
    pub file_len: u64,
}

/// New absolute count of one bin. `spectrum` is a position in the live
/// dataset, not a spectrum id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinChange {
    pub spectrum: u32,
    pub bin: u32,
    pub count: f32,
}

/// Bins changed after the subscriber's last sequence, up to `sequence`.
#[derive(Debug, Clone, PartialEq)]
pub struct Delta {
    pub sequence: u64,
    pub elapsed_s: f64,
    /// More frames with the same sequence follow.
    pub more: bool,
    pub changes: Vec<BinChange>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiveStatus {
    pub sequence: u64,
    pub elapsed_s: f64,
    pub total_counts: f64,
    pub paused: bool,
    pub n_spectra: u32,
    pub n_bins: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello {
        version: u32,
        name: String,
    },
    ListRuns,
    RunList(Vec<RunSummary>),
    RunInfo {
        run: String,
    },
    RunDirectory {
        run: String,
        directory: RunFileDirectory,
    },
    GetData {
        run: String,
        selection: LoadSelection,
    },
    /// A piece of a data reply body; `more` is set on all but the last.
    Data {
        more: bool,
        chunk: Vec<u8>,
    },
    /// Stream deltas after `since`: one immediately, then up to
    /// `max_deltas` more as the source advances (0 = until disconnect).
    Subscribe {
        since: u64,
        max_deltas: u32,
    },
    Delta(Delta),
    StatusRequest,
    Status(LiveStatus),
    Error {
        code: ErrorCode,
        message: String,
    },
    Bye,
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::Hello { .. } => MsgType::Hello,
            Message::ListRuns | Message::RunList(_) => MsgType::ListRuns,
            Message::RunInfo { .. } | Message::RunDirectory { .. } => MsgType::RunInfo,
            Message::GetData { .. } | Message::Data { .. } => MsgType::GetData,
            Message::Subscribe { .. } => MsgType::Subscribe,
            Message::Delta(_) => MsgType::Delta,
            Message::StatusRequest | Message::Status(_) => MsgType::Status,
            Message::Error { .. } => MsgType::Error,
            Message::Bye => MsgType::Bye,
        }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Message {
        Message::Error {
            code,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    /// The buffer holds an incomplete frame; at least this many more bytes
    /// are needed.
    #[error("incomplete frame, {0} more bytes needed")]
    NeedMoreBytes(usize),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("frame length {0} exceeds the {MAX_FRAME}-byte limit")]
    Oversize(u32),
    #[error("malformed {msg_type:?} payload: {reason}")]
    Malformed { msg_type: MsgType, reason: String },
}

impl FrameError {
    /// Stable numeric code per variant.
    pub fn code(&self) -> u8 {
        match self {
            FrameError::NeedMoreBytes(_) => 1,
            FrameError::UnknownType(_) => 2,
            FrameError::Oversize(_) => 3,
            FrameError::Malformed { .. } => 4,
        }
    }
}

/// Serializes `msg` into one frame.
pub fn encode_frame(msg: &Message) -> Vec<u8> {
    let mut out = vec![0u8; HEADER_LEN];
    out[4] = msg.msg_type() as u8;
    encode_payload(&mut out, msg).expect("writing to a Vec cannot fail");
    let len = (out.len() - HEADER_LEN) as u32;
    out[..4].copy_from_slice(&len.to_le_bytes());
    out
}

fn encode_payload(w: &mut Vec<u8>, msg: &Message) -> io::Result<()> {
    match msg {
        Message::Hello { version, name } => {
            w.put_u32(*version)?;
            w.put_str(name)?;
        }
        Message::ListRuns => w.put_u8(REQUEST)?,
        Message::RunList(runs) => {
            w.put_u8(REPLY)?;
            w.put_u32(runs.len() as u32)?;
            for r in runs {
                w.put_str(&r.name)?;
                w.put_str(&r.instrument)?;
                w.put_u32(r.run_number)?;
                w.put_i64(r.start_time)?;
                w.put_u32(r.n_datasets)?;
                w.put_u64(r.file_len)?;
            }
        }
        Message::RunInfo { run } => {
            w.put_u8(REQUEST)?;
            w.put_str(run)?;
        }
        Message::RunDirectory { run, directory: d } => {
            w.put_u8(REPLY)?;
            w.put_str(run)?;
            w.put_str(&d.instrument)?;
            w.put_u32(d.run_number)?;
            w.put_i64(d.start_time)?;
            w.put_u64(d.header_len)?;
            w.put_u32(d.entries.len() as u32)?;
            for e in &d.entries {
                w.put_str(&e.name)?;
                w.put_u8(e.kind.code())?;
                w.put_u32(e.n_spectra)?;
                w.put_u32(e.n_bins)?;
                w.put_u64(e.offset)?;
                w.put_u64(e.length)?;
            }
        }
        Message::GetData { run, selection } => {
            w.put_u8(REQUEST)?;
            w.put_str(run)?;
            put_opt_u32s(w, selection.dataset_indices.as_deref())?;
            put_opt_u32s(w, selection.spectrum_ids.as_deref())?;
            match selection.bin_range {
                None => w.put_u8(0)?,
                Some((lo, hi)) => {
                    w.put_u8(1)?;
                    w.put_u32(lo)?;
                    w.put_u32(hi)?;
                }
            }
        }
        Message::Data { more, chunk } => {
            w.put_u8(REPLY)?;
            w.put_u8(*more as u8)?;
            w.write_all(chunk)?;
        }
        Message::Subscribe { since, max_deltas } => {
            w.put_u64(*since)?;
            w.put_u32(*max_deltas)?;
        }
        Message::Delta(d) => {
            w.put_u64(d.sequence)?;
            w.put_f64(d.elapsed_s)?;
            w.put_u8(d.more as u8)?;
            w.put_u32(d.changes.len() as u32)?;
            w.reserve(12 * d.changes.len());
            for c in &d.changes {
                w.put_u32(c.spectrum)?;
                w.put_u32(c.bin)?;
                w.write_all(&c.count.to_le_bytes())?;
            }
        }
        Message::StatusRequest => w.put_u8(REQUEST)?,
        Message::Status(s) => {
            w.put_u8(REPLY)?;
            w.put_u64(s.sequence)?;
            w.put_f64(s.elapsed_s)?;
            w.put_f64(s.total_counts)?;
            w.put_u8(s.paused as u8)?;
            w.put_u32(s.n_spectra)?;
            w.put_u64(s.n_bins)?;
        }
        Message::Error { code, message } => {
            w.put_u16(code.code())?;
            w.put_str(message)?;
        }
        Message::Bye => {}
    }
    Ok(())
}

fn put_opt_u32s(w: &mut Vec<u8>, v: Option<&[u32]>) -> io::Result<()> {
    match v {
        None => w.put_u8(0),
        Some(v) => {
            w.put_u8(1)?;
            w.put_u32(v.len() as u32)?;
            v.iter().try_for_each(|&x| w.put_u32(x))
        }
    }
}

/// Parses the frame at the start of `buf`, returning the message and the
/// number of bytes consumed.
pub fn decode_frame(buf: &[u8]) -> Result<(Message, usize), FrameError> {
    if buf.len() < HEADER_LEN {
        return Err(FrameError::NeedMoreBytes(HEADER_LEN - buf.len()));
    }
    let len = u32::from_le_bytes(buf[..4].try_into().expect("4 bytes"));
    if len > MAX_FRAME {
        return Err(FrameError::Oversize(len));
    }
    let total = HEADER_LEN + len as usize;
    if buf.len() < total {
        return Err(FrameError::NeedMoreBytes(total - buf.len()));
    }
    let msg = decode_payload(buf[4], &buf[HEADER_LEN..total])?;
    Ok((msg, total))
}

/// Decodes a complete payload of type `ty`.
pub fn decode_payload(ty: u8, payload: &[u8]) -> Result<Message, FrameError> {
    let msg_type = MsgType::from_u8(ty).ok_or(FrameError::UnknownType(ty))?;
    let malformed = |reason: String| FrameError::Malformed { msg_type, reason };
    let mut d = Decoder::new(payload, 0);
    let msg = parse(msg_type, &mut d, payload).map_err(|e| {
        malformed(match e {
            DecodeError::Truncated { offset, .. } => format!("truncated at byte {offset}"),
            DecodeError::Invalid { offset, reason } => format!("{reason} at byte {offset}"),
            DecodeError::Io(e) => e.to_string(),
        })
    })?;
    let used = d.position() as usize;
    if used != payload.len() {
        return Err(malformed(format!(
            "{} trailing bytes",
            payload.len() - used
        )));
    }
    Ok(msg)
}

fn invalid<T>(d: &Decoder<&[u8]>, reason: impl Into<String>) -> Result<T, DecodeError> {
    Err(DecodeError::Invalid {
        offset: d.position(),
        reason: reason.into(),
    })
}

fn role(d: &mut Decoder<&[u8]>) -> Result<u8, DecodeError> {
    match d.u8()? {
        r @ (REQUEST | REPLY) => Ok(r),
        r => invalid(d, format!("bad role byte {r}")),
    }
}

fn flag(d: &mut Decoder<&[u8]>) -> Result<bool, DecodeError> {
    match d.u8()? {
        0 => Ok(false),
        1 => Ok(true),
        f => invalid(d, format!("bad flag byte {f}")),
    }
}

/// Count prefix for `elem`-byte records, checked against what is left so a
/// corrupt count cannot drive a large allocation.
fn count(d: &mut Decoder<&[u8]>, total: usize, elem: usize) -> Result<usize, DecodeError> {
    let n = d.u32()? as usize;
    let left = total - d.position() as usize;
    if n.saturating_mul(elem) > left {
        return invalid(d, format!("count {n} exceeds the remaining {left} bytes"));
    }
    Ok(n)
}

fn opt_u32s(d: &mut Decoder<&[u8]>, total: usize) -> Result<Option<Vec<u32>>, DecodeError> {
    if !flag(d)? {
        return Ok(None);
    }
    let n = count(d, total, 4)?;
    (0..n).map(|_| d.u32()).collect::<Result<_, _>>().map(Some)
}

fn parse(ty: MsgType, d: &mut Decoder<&[u8]>, payload: &[u8]) -> Result<Message, DecodeError> {
    let total = payload.len();
    Ok(match ty {
        MsgType::Hello => Message::Hello {
            version: d.u32()?,
            name: d.string()?,
        },
        MsgType::ListRuns => match role(d)? {
            REQUEST => Message::ListRuns,
            _ => {
                let n = count(d, total, 28)?;
                let mut runs = Vec::with_capacity(n);
                for _ in 0..n {
                    runs.push(RunSummary {
                        name: d.string()?,
                        instrument: d.string()?,
                        run_number: d.u32()?,
                        start_time: d.i64()?,
                        n_datasets: d.u32()?,
                        file_len: d.u64()?,
                    });
                }
                Message::RunList(runs)
            }
        },
        MsgType::RunInfo => match role(d)? {
            REQUEST => Message::RunInfo { run: d.string()? },
            _ => {
                let run = d.string()?;
                let instrument = d.string()?;
                let run_number = d.u32()?;
                let start_time = d.i64()?;
                let header_len = d.u64()?;
                let n = count(d, total, 27)?;
                let mut entries = Vec::with_capacity(n);
                for _ in 0..n {
                    let name = d.string()?;
                    let code = d.u8()?;
                    let Some(kind) = DatasetKind::from_code(code) else {
                        return invalid(d, format!("unknown dataset kind {code}"));
                    };
                    entries.push(DirectoryEntry {
                        name,
                        kind,
                        n_spectra: d.u32()?,
                        n_bins: d.u32()?,
                        offset: d.u64()?,
                        length: d.u64()?,
                    });
                }
                Message::RunDirectory {
                    run,
                    directory: RunFileDirectory {
                        instrument,
                        run_number,
                        start_time,
                        entries,
                        header_len,
                    },
                }
            }
        },
        MsgType::GetData => match role(d)? {
            REQUEST => {
                let run = d.string()?;
                let dataset_indices = opt_u32s(d, total)?;
                let spectrum_ids = opt_u32s(d, total)?;
                let bin_range = if flag(d)? {
                    Some((d.u32()?, d.u32()?))
                } else {
                    None
                };
                Message::GetData {
                    run,
                    selection: LoadSelection {
                        dataset_indices,
                        spectrum_ids,
                        bin_range,
                    },
                }
            }
            _ => {
                let more = flag(d)?;
                let at = d.position() as usize;
                let chunk = d.bytes(total - at)?;
                Message::Data { more, chunk }
            }
        },
        MsgType::Subscribe => Message::Subscribe {
            since: d.u64()?,
            max_deltas: d.u32()?,
        },
        MsgType::Delta => {
            let sequence = d.u64()?;
            let elapsed_s = d.f64()?;
            let more = flag(d)?;
            let n = count(d, total, 12)?;
            let at = d.position() as usize;
            let body = d.bytes(12 * n)?;
            debug_assert_eq!(at + 12 * n, d.position() as usize);
            let word = |c: &[u8], i: usize| [c[i], c[i + 1], c[i + 2], c[i + 3]];
            let changes = body
                .chunks_exact(12)
                .map(|c| BinChange {
                    spectrum: u32::from_le_bytes(word(c, 0)),
                    bin: u32::from_le_bytes(word(c, 4)),
                    count: f32::from_le_bytes(word(c, 8)),
                })
                .collect();
            Message::Delta(Delta {
                sequence,
                elapsed_s,
                more,
                changes,
            })
        }
        MsgType::Status => match role(d)? {
            REQUEST => Message::StatusRequest,
            _ => Message::Status(LiveStatus {
                sequence: d.u64()?,
                elapsed_s: d.f64()?,
                total_counts: d.f64()?,
                paused: flag(d)?,
                n_spectra: d.u32()?,
                n_bins: d.u64()?,
            }),
        },
        MsgType::Error => Message::Error {
            code: ErrorCode::from_code(d.u16()?),
            message: d.string()?,
        },
        MsgType::Bye => Message::Bye,
    })
}

/// Failure reading a message from a stream.
#[derive(Debug, Error)]
pub enum WireError {
    /// The peer closed the connection at a frame boundary.
    #[error("connection closed")]
    Closed,
    #[error(transparent)]
    Io(#[from] io::Error),
    /// The frame was consumed whole but could not be decoded; the stream is
    /// still in sync unless the error is [`FrameError::Oversize`].
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Reads one frame. The payload buffer is allocated only after the length
/// has been checked against [`MAX_FRAME`].
pub fn read_message<R: Read>(r: &mut R) -> Result<Message, WireError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Err(WireError::Closed),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(header[..4].try_into().expect("4 bytes"));
    if len > MAX_FRAME {
        return Err(FrameError::Oversize(len).into());
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(decode_payload(header[4], &payload)?)
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> io::Result<()> {
    let frame = encode_frame(msg);
    if frame.len() - HEADER_LEN > MAX_FRAME as usize {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!(
                "{:?} payload of {} bytes exceeds the frame limit",
                msg.msg_type(),
                frame.len() - HEADER_LEN
            ),
        ));
    }
    w.write_all(&frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_layout() {
        let f = encode_frame(&Message::Hello {
            version: 1,
            name: "cli".into(),
        });
        assert_eq!(f.len(), HEADER_LEN + 4 + 2 + 3);
        assert_eq!(&f[..5], &[9, 0, 0, 0, 0]);
        assert_eq!(&f[5..9], &[1, 0, 0, 0]);
        let (m, used) = decode_frame(&f).unwrap();
        assert_eq!(used, f.len());
        assert_eq!(
            m,
            Message::Hello {
                version: 1,
                name: "cli".into()
            }
        );
    }

    #[test]
    fn incomplete_frames_ask_for_more() {
        let f = encode_frame(&Message::RunInfo {
            run: "a.trf".into(),
        });
        assert_eq!(decode_frame(&f[..3]), Err(FrameError::NeedMoreBytes(2)));
        assert_eq!(
            decode_frame(&f[..f.len() - 1]),
            Err(FrameError::NeedMoreBytes(1))
        );
        assert_eq!(decode_frame(&[]), Err(FrameError::NeedMoreBytes(5)));
    }

    #[test]
    fn distinct_errors() {
        assert_eq!(
            decode_frame(&[0, 0, 0, 0, 0xFF]),
            Err(FrameError::UnknownType(0xFF))
        );
        assert_eq!(
            decode_frame(&[0xFF, 0xFF, 0xFF, 0xFF, 0]),
            Err(FrameError::Oversize(u32::MAX))
        );
        let mut f = encode_frame(&Message::Bye);
        f[0] = 1;
        f.push(7);
        assert!(matches!(
            decode_frame(&f),
            Err(FrameError::Malformed {
                msg_type: MsgType::Bye,
                ..
            })
        ));
        // Role byte outside {0, 1}.
        assert!(matches!(
            decode_frame(&[1, 0, 0, 0, 1, 9]),
            Err(FrameError::Malformed { .. })
        ));
        let codes: std::collections::BTreeSet<_> = [
            FrameError::NeedMoreBytes(1),
            FrameError::UnknownType(9),
            FrameError::Oversize(0),
            FrameError::Malformed {
                msg_type: MsgType::Bye,
                reason: String::new(),
            },
        ]
        .iter()
        .map(FrameError::code)
        .collect();
        assert_eq!(codes.len(), 4);
    }

    #[test]
    fn huge_counts_are_rejected_without_allocating() {
        let mut f = encode_frame(&Message::RunList(vec![]));
        f[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            decode_frame(&f),
            Err(FrameError::Malformed { .. })
        ));
    }

    #[test]
    fn stream_reader_handles_boundaries() {
        let mut bytes = encode_frame(&Message::ListRuns);
        bytes.extend(encode_frame(&Message::Bye));
        let mut r = &bytes[..];
        assert_eq!(read_message(&mut r).unwrap(), Message::ListRuns);
        assert_eq!(read_message(&mut r).unwrap(), Message::Bye);
        assert!(matches!(read_message(&mut r), Err(WireError::Closed)));
        let mut r = &bytes[..3];
        assert!(matches!(read_message(&mut r), Err(WireError::Io(_))));
    }
}
