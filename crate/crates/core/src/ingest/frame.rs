//! Length-prefixed, checksummed record framing used by event files.
//!
//! Each frame on disk is laid out as:
//!
//! ```text
//! [length: u64 LE][masked_crc32c(length bytes): u32 LE][payload][masked_crc32c(payload): u32 LE]
//! ```

use std::fmt::{self, Debug, Display};
use std::io::{self, Read, Write};

use crc::{Crc, CRC_32_ISCSI};

const CASTAGNOLI: Crc<u32> = Crc::<u32>::new(&CRC_32_ISCSI);
const CRC_MASK_DELTA: u32 = 0xa282_ead8;

/// Bytes of framing overhead before the payload.
pub const HEADER_LEN: usize = 12;
/// Bytes of framing overhead after the payload.
pub const FOOTER_LEN: usize = 4;

/// A CRC-32C checksum after the masking rotation.
#[derive(Copy, Clone, PartialEq, Eq)]
pub struct MaskedCrc(pub u32);

impl MaskedCrc {
    pub fn compute(bytes: &[u8]) -> Self {
        let crc = CASTAGNOLI.checksum(bytes);
        MaskedCrc(crc.rotate_right(15).wrapping_add(CRC_MASK_DELTA))
    }
}

impl Debug for MaskedCrc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MaskedCrc({})", self)
    }
}

impl Display for MaskedCrc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#010x}", self.0)
    }
}

/// One validated record read from a framed stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordFrame {
    pub payload: Vec<u8>,
    /// Byte position of the frame's length field in the source.
    pub offset: u64,
}

impl RecordFrame {
    /// Total on-disk size of this frame.
    pub fn encoded_len(&self) -> u64 {
        (HEADER_LEN + self.payload.len() + FOOTER_LEN) as u64
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("CRC mismatch in {field} of frame at offset {offset}: expected {expected}, got {actual}")]
    CrcMismatch {
        offset: u64,
        field: &'static str,
        expected: MaskedCrc,
        actual: MaskedCrc,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl FrameError {
    pub fn code(&self) -> &'static str {
        match self {
            FrameError::CrcMismatch { .. } => "CRC_MISMATCH",
            FrameError::Io(_) => "IO_ERROR",
        }
    }
}

/// Writes `payload` as a single frame.
pub fn write_frame<W: Write>(mut w: W, payload: &[u8]) -> io::Result<()> {
    let len = (payload.len() as u64).to_le_bytes();
    w.write_all(&len)?;
    w.write_all(&MaskedCrc::compute(&len).0.to_le_bytes())?;
    w.write_all(payload)?;
    w.write_all(&MaskedCrc::compute(payload).0.to_le_bytes())?;
    Ok(())
}

/// Encodes `payload` as a frame into a fresh buffer.
pub fn encode_frame(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + FOOTER_LEN);
    write_frame(&mut out, payload).expect("writing to a Vec cannot fail");
    out
}

/// Outcome of attempting to read one frame.
enum Step {
    Frame(RecordFrame),
    /// Clean end of input, or a partially written trailing frame.
    Incomplete,
}

/// Incremental frame reader over any byte source.
///
/// A truncated trailing frame is not an error: reading stops and
/// [`FrameReader::offset`] stays at the start of that frame, so a caller can
/// reopen the (growing) file later and resume from there.
pub struct FrameReader<R> {
    inner: R,
    offset: u64,
    failed: bool,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        Self::resume(inner, 0)
    }

    /// Creates a reader whose source is already positioned at `offset`.
    pub fn resume(inner: R, offset: u64) -> Self {
        Self {
            inner,
            offset,
            failed: false,
        }
    }

    /// Offset just past the last fully validated frame.
    pub fn offset(&self) -> u64 {
        self.offset
    }

    fn step(&mut self) -> Result<Step, FrameError> {
        let start = self.offset;
        let mut header = [0u8; HEADER_LEN];
        if !read_full(&mut self.inner, &mut header)? {
            return Ok(Step::Incomplete);
        }
        let (len_bytes, len_crc) = header.split_at(8);
        let expected = MaskedCrc(u32::from_le_bytes(len_crc.try_into().unwrap()));
        let actual = MaskedCrc::compute(len_bytes);
        if expected != actual {
            return Err(FrameError::CrcMismatch {
                offset: start,
                field: "length",
                expected,
                actual,
            });
        }
        let len = u64::from_le_bytes(len_bytes.try_into().unwrap());
        let mut body = Vec::new();
        let want = len + FOOTER_LEN as u64;
        let got = (&mut self.inner).take(want).read_to_end(&mut body)? as u64;
        if got < want {
            return Ok(Step::Incomplete);
        }
        let crc_bytes = body.split_off(len as usize);
        let expected = MaskedCrc(u32::from_le_bytes(crc_bytes[..].try_into().unwrap()));
        let actual = MaskedCrc::compute(&body);
        if expected != actual {
            return Err(FrameError::CrcMismatch {
                offset: start,
                field: "payload",
                expected,
                actual,
            });
        }
        self.offset = start + HEADER_LEN as u64 + want;
        Ok(Step::Frame(RecordFrame {
            payload: body,
            offset: start,
        }))
    }
}

impl<R: Read> Iterator for FrameReader<R> {
    type Item = Result<RecordFrame, FrameError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.step() {
            Ok(Step::Frame(f)) => Some(Ok(f)),
            Ok(Step::Incomplete) => None,
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Reads every complete frame in `source`.
///
/// Stops cleanly at a truncated trailing frame; fails on the first checksum
/// mismatch without attempting to resynchronize.
pub fn read_record_stream<R: Read>(source: R) -> Result<Vec<RecordFrame>, FrameError> {
    FrameReader::new(source).collect()
}

/// Fills `buf` completely, returning `false` if EOF is hit first.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => return Ok(false),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}
