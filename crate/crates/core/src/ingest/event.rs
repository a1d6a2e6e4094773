//! Minimal protobuf wire-format handling for scalar `Event` records.
//!
//! Supported subset:
//!
//! ```text
//! Event         { 1: wall_time (double), 2: step (int64), 5: summary (Summary) }
//! Summary       { 1: value (repeated Summary.Value) }
//! Summary.Value { 1: tag (string), 2: simple_value (float) }
//! ```
//!
//! Every other field is skipped according to its wire type.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarEvent {
    pub wall_time: f64,
    pub step: u64,
    pub tag: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("malformed varint at byte {0}")]
    MalformedVarint(usize),
    #[error("field truncated at byte {0}")]
    TruncatedField(usize),
    #[error("unsupported wire type {wire_type} at byte {at}")]
    BadWireType { wire_type: u8, at: usize },
    #[error("tag is not valid UTF-8")]
    InvalidUtf8,
}

impl DecodeError {
    pub fn code(&self) -> &'static str {
        match self {
            DecodeError::MalformedVarint(_) => "MALFORMED_VARINT",
            DecodeError::TruncatedField(_) | DecodeError::BadWireType { .. } => "TRUNCATED_FIELD",
            DecodeError::InvalidUtf8 => "INVALID_UTF8",
        }
    }
}

/// Decoded contents of one event payload.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct DecodedEvent {
    pub scalars: Vec<ScalarEvent>,
    /// Simple values that were NaN or infinite and therefore not returned.
    pub non_finite: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WireType {
    Varint,
    Fixed64,
    Len,
    Fixed32,
}

#[derive(Debug)]
enum FieldValue<'a> {
    Varint(u64),
    Fixed64(u64),
    Len(&'a [u8]),
    Fixed32(u32),
}

/// Cursor over a protobuf-encoded message. `base` is the absolute offset of
/// `buf` within the outermost payload, for error reporting.
struct Fields<'a> {
    buf: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Fields<'a> {
    fn new(buf: &'a [u8], base: usize) -> Self {
        Self { buf, pos: 0, base }
    }

    fn varint(&mut self) -> Result<u64, DecodeError> {
        let start = self.base + self.pos;
        let mut out = 0u64;
        for i in 0..10 {
            let Some(&b) = self.buf.get(self.pos) else {
                return Err(DecodeError::MalformedVarint(start));
            };
            self.pos += 1;
            if i == 9 && b > 1 {
                return Err(DecodeError::MalformedVarint(start));
            }
            out |= u64::from(b & 0x7f) << (7 * i);
            if b & 0x80 == 0 {
                return Ok(out);
            }
        }
        Err(DecodeError::MalformedVarint(start))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let at = self.base + self.pos;
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(DecodeError::TruncatedField(at))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn next_field(&mut self) -> Option<Result<(u32, usize, FieldValue<'a>), DecodeError>> {
        if self.pos >= self.buf.len() {
            return None;
        }
        Some(self.read_field())
    }

    fn read_field(&mut self) -> Result<(u32, usize, FieldValue<'a>), DecodeError> {
        let at = self.base + self.pos;
        let key = self.varint()?;
        let wire_type = match key & 0x7 {
            0 => WireType::Varint,
            1 => WireType::Fixed64,
            2 => WireType::Len,
            5 => WireType::Fixed32,
            other => {
                return Err(DecodeError::BadWireType {
                    wire_type: other as u8,
                    at,
                })
            }
        };
        let number = (key >> 3) as u32;
        let value_at = self.base + self.pos;
        let value = match wire_type {
            WireType::Varint => FieldValue::Varint(self.varint()?),
            WireType::Fixed64 => FieldValue::Fixed64(u64::from_le_bytes(self.take(8)?.try_into().unwrap())),
            WireType::Fixed32 => FieldValue::Fixed32(u32::from_le_bytes(self.take(4)?.try_into().unwrap())),
            WireType::Len => {
                let len = self.varint()?;
                let len = usize::try_from(len).map_err(|_| DecodeError::TruncatedField(value_at))?;
                FieldValue::Len(self.take(len)?)
            }
        };
        Ok((number, value_at, value))
    }
}

/// Decodes an `Event` payload, returning one [`ScalarEvent`] per finite simple value.
pub fn decode_event(payload: &[u8]) -> Result<DecodedEvent, DecodeError> {
    let mut wall_time = 0.0;
    let mut step = 0i64;
    let mut values: Vec<(String, f32)> = Vec::new();

    let mut fields = Fields::new(payload, 0);
    while let Some(field) = fields.next_field() {
        match field? {
            (1, _, FieldValue::Fixed64(bits)) => wall_time = f64::from_bits(bits),
            (2, _, FieldValue::Varint(v)) => step = v as i64,
            (5, at, FieldValue::Len(summary)) => decode_summary(summary, at, &mut values)?,
            _ => {}
        }
    }

    let mut out = DecodedEvent::default();
    for (tag, value) in values {
        if !value.is_finite() {
            out.non_finite += 1;
            continue;
        }
        out.scalars.push(ScalarEvent {
            wall_time,
            step: step.max(0) as u64,
            tag,
            value: f64::from(value),
        });
    }
    Ok(out)
}

/// Convenience wrapper over [`decode_event`] discarding the non-finite count.
pub fn decode_scalar_event(payload: &[u8]) -> Result<Vec<ScalarEvent>, DecodeError> {
    decode_event(payload).map(|d| d.scalars)
}

fn decode_summary(buf: &[u8], base: usize, out: &mut Vec<(String, f32)>) -> Result<(), DecodeError> {
    let mut fields = Fields::new(buf, base);
    while let Some(field) = fields.next_field() {
        if let (1, at, FieldValue::Len(value)) = field? {
            let mut tag = None;
            let mut simple = None;
            let mut inner = Fields::new(value, at);
            while let Some(f) = inner.next_field() {
                match f? {
                    (1, _, FieldValue::Len(s)) => {
                        tag = Some(std::str::from_utf8(s).map_err(|_| DecodeError::InvalidUtf8)?.to_owned())
                    }
                    (2, _, FieldValue::Fixed32(bits)) => simple = Some(f32::from_bits(bits)),
                    _ => {}
                }
            }
            if let Some(v) = simple {
                out.push((tag.unwrap_or_default(), v));
            }
        }
    }
    Ok(())
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn put_key(out: &mut Vec<u8>, field: u32, wire: u8) {
    put_varint(out, (u64::from(field) << 3) | u64::from(wire));
}

fn put_len(out: &mut Vec<u8>, field: u32, bytes: &[u8]) {
    put_key(out, field, 2);
    put_varint(out, bytes.len() as u64);
    out.extend_from_slice(bytes);
}

/// Encodes an `Event` carrying one scalar summary per `(tag, value)`.
pub fn encode_scalar_event(wall_time: f64, step: u64, values: &[(&str, f32)]) -> Vec<u8> {
    let mut summary = Vec::new();
    for (tag, value) in values {
        let mut v = Vec::new();
        put_len(&mut v, 1, tag.as_bytes());
        put_key(&mut v, 2, 5);
        v.extend_from_slice(&value.to_bits().to_le_bytes());
        put_len(&mut summary, 1, &v);
    }
    let mut out = Vec::new();
    put_key(&mut out, 1, 1);
    out.extend_from_slice(&wall_time.to_bits().to_le_bytes());
    put_key(&mut out, 2, 0);
    put_varint(&mut out, step);
    put_len(&mut out, 5, &summary);
    out
}

/// Encodes the `file_version` header event that opens every event file.
pub fn encode_file_version(wall_time: f64) -> Vec<u8> {
    let mut out = Vec::new();
    put_key(&mut out, 1, 1);
    out.extend_from_slice(&wall_time.to_bits().to_le_bytes());
    put_len(&mut out, 3, b"brain.Event:2");
    out
}
