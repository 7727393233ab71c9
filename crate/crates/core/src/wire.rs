//! Binary codec for flakes, the atomic datum carried by the relay.
//!
//! A framed packet is laid out as
//!
//! ```text
//! magic "MB" (0x4D 0x42) | version 0x01 | body_len u32 BE | body | crc32 BE
//! ```
//!
//! and the body as
//!
//! ```text
//! scope | label | origin | class u8 | seq u32 BE | tag u8 | count u32 BE | data
//! ```
//!
//! where each string is a `u16` BE byte length followed by UTF-8 bytes, and
//! `data` holds `count` elements of the tag's element type, all big-endian.
//! The CRC is CRC-32/IEEE over the body bytes only. `docs/wire.md` has the
//! full table.

use std::fmt;

use thiserror::Error;

pub const MAGIC: [u8; 2] = [0x4D, 0x42];
pub const VERSION: u8 = 0x01;
/// Magic, version and body length.
pub const HEADER_LEN: usize = 7;
pub const CRC_LEN: usize = 4;
/// Upper bound on a body accepted by the stream splitter.
pub const MAX_BODY_LEN: usize = 16 * 1024 * 1024;
pub const MAX_STRING_LEN: usize = u16::MAX as usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("{field} is longer than 65535 bytes ({len})")]
    OversizeString { field: &'static str, len: usize },
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported protocol version {0:#04x}")]
    UnsupportedVersion(u8),
    #[error("length mismatch: header declares {expected} bytes, buffer holds {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("crc mismatch: packet {expected:#010x}, computed {actual:#010x}")]
    CrcMismatch { expected: u32, actual: u32 },
    #[error("malformed payload: {0}")]
    MalformedPayload(&'static str),
    #[error("frame body of {0} bytes exceeds the {MAX_BODY_LEN} byte limit")]
    FrameTooLarge(usize),
}

/// Delivery class of a flake.
///
/// `State` flakes are coalesced by the relay (latest value per tick wins);
/// `Event` flakes are queued and delivered exactly once each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeliveryClass {
    State,
    Event,
}

impl DeliveryClass {
    pub fn to_byte(self) -> u8 {
        match self {
            DeliveryClass::State => 0x00,
            DeliveryClass::Event => 0x01,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x00 => Some(DeliveryClass::State),
            0x01 => Some(DeliveryClass::Event),
            _ => None,
        }
    }
}

impl fmt::Display for DeliveryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeliveryClass::State => "STATE",
            DeliveryClass::Event => "EVENT",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum PayloadTag {
    Vec3 = 0x01,
    Vec4 = 0x02,
    Bytes = 0x03,
    Floats = 0x04,
    Ints = 0x05,
    Text = 0x06,
}

impl PayloadTag {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0x01 => PayloadTag::Vec3,
            0x02 => PayloadTag::Vec4,
            0x03 => PayloadTag::Bytes,
            0x04 => PayloadTag::Floats,
            0x05 => PayloadTag::Ints,
            0x06 => PayloadTag::Text,
            _ => return None,
        })
    }

    /// Encoded size of one element.
    pub fn element_size(self) -> usize {
        match self {
            PayloadTag::Vec3 => 12,
            PayloadTag::Vec4 => 16,
            PayloadTag::Floats | PayloadTag::Ints => 4,
            PayloadTag::Bytes | PayloadTag::Text => 1,
        }
    }
}

/// Typed, homogeneous payload. The element count is implied by the vector length.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Vec3(Vec<[f32; 3]>),
    Vec4(Vec<[f32; 4]>),
    Bytes(Vec<u8>),
    Floats(Vec<f32>),
    Ints(Vec<i32>),
    Text(String),
}

impl Payload {
    pub fn tag(&self) -> PayloadTag {
        match self {
            Payload::Vec3(_) => PayloadTag::Vec3,
            Payload::Vec4(_) => PayloadTag::Vec4,
            Payload::Bytes(_) => PayloadTag::Bytes,
            Payload::Floats(_) => PayloadTag::Floats,
            Payload::Ints(_) => PayloadTag::Ints,
            Payload::Text(_) => PayloadTag::Text,
        }
    }

    pub fn count(&self) -> usize {
        match self {
            Payload::Vec3(v) => v.len(),
            Payload::Vec4(v) => v.len(),
            Payload::Bytes(v) => v.len(),
            Payload::Floats(v) => v.len(),
            Payload::Ints(v) => v.len(),
            Payload::Text(s) => s.len(),
        }
    }
}

/// One labeled datum on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct Flake {
    pub scope: String,
    pub label: String,
    pub origin: String,
    pub class: DeliveryClass,
    pub seq: u32,
    pub payload: Payload,
}

impl Flake {
    pub fn new(
        scope: impl Into<String>,
        label: impl Into<String>,
        origin: impl Into<String>,
        class: DeliveryClass,
        seq: u32,
        payload: Payload,
    ) -> Self {
        Flake {
            scope: scope.into(),
            label: label.into(),
            origin: origin.into(),
            class,
            seq,
            payload,
        }
    }

    /// Checks the string invariants without encoding.
    pub fn validate(&self) -> Result<(), WireError> {
        check_str("scope", &self.scope)?;
        check_str("label", &self.label)?;
        check_str("origin", &self.origin)?;
        if self.payload.count() > u32::MAX as usize {
            return Err(WireError::MalformedPayload("element count exceeds u32"));
        }
        Ok(())
    }
}

fn check_str(field: &'static str, s: &str) -> Result<(), WireError> {
    if s.is_empty() {
        return Err(WireError::EmptyField(field));
    }
    if s.len() > MAX_STRING_LEN {
        return Err(WireError::OversizeString { field, len: s.len() });
    }
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_f32s(out: &mut Vec<u8>, vals: &[f32]) {
    for v in vals {
        out.extend_from_slice(&v.to_bits().to_be_bytes());
    }
}

/// Encodes the body (everything between the header and the CRC).
pub fn encode_body(f: &Flake) -> Result<Vec<u8>, WireError> {
    f.validate()?;
    let p = &f.payload;
    let mut out = Vec::with_capacity(
        6 + f.scope.len() + f.label.len() + f.origin.len() + 10 + p.count() * p.tag().element_size(),
    );
    put_str(&mut out, &f.scope);
    put_str(&mut out, &f.label);
    put_str(&mut out, &f.origin);
    out.push(f.class.to_byte());
    out.extend_from_slice(&f.seq.to_be_bytes());
    out.push(p.tag() as u8);
    out.extend_from_slice(&(p.count() as u32).to_be_bytes());
    match p {
        Payload::Vec3(v) => v.iter().for_each(|e| put_f32s(&mut out, e)),
        Payload::Vec4(v) => v.iter().for_each(|e| put_f32s(&mut out, e)),
        Payload::Floats(v) => put_f32s(&mut out, v),
        Payload::Ints(v) => v.iter().for_each(|i| out.extend_from_slice(&i.to_be_bytes())),
        Payload::Bytes(b) => out.extend_from_slice(b),
        Payload::Text(s) => out.extend_from_slice(s.as_bytes()),
    }
    Ok(out)
}

/// Wraps an encoded body in the packet frame.
pub fn frame_body(body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + body.len() + CRC_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    out.extend_from_slice(&crc32fast::hash(body).to_be_bytes());
    out
}

/// Encodes a flake as one framed packet. Deterministic.
pub fn encode_flake(f: &Flake) -> Result<Vec<u8>, WireError> {
    Ok(frame_body(&encode_body(f)?))
}

/// Decodes exactly one framed packet. Total over arbitrary input.
pub fn decode_flake(bytes: &[u8]) -> Result<Flake, WireError> {
    let magic_len = bytes.len().min(2);
    if bytes[..magic_len] != MAGIC[..magic_len] {
        return Err(WireError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(WireError::LengthMismatch {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if bytes[2] != VERSION {
        return Err(WireError::UnsupportedVersion(bytes[2]));
    }
    let body_len = u32::from_be_bytes([bytes[3], bytes[4], bytes[5], bytes[6]]) as usize;
    let expected = HEADER_LEN + body_len + CRC_LEN;
    if bytes.len() != expected {
        return Err(WireError::LengthMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let body = &bytes[HEADER_LEN..HEADER_LEN + body_len];
    let crc_bytes = &bytes[HEADER_LEN + body_len..];
    let stored = u32::from_be_bytes([crc_bytes[0], crc_bytes[1], crc_bytes[2], crc_bytes[3]]);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(WireError::CrcMismatch {
            expected: stored,
            actual: computed,
        });
    }
    decode_body(body)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(WireError::MalformedPayload("body truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String, WireError> {
        let len = self.u16()? as usize;
        if len == 0 {
            return Err(WireError::MalformedPayload("empty string field"));
        }
        let raw = self.take(len)?;
        std::str::from_utf8(raw)
            .map(str::to_owned)
            .map_err(|_| WireError::MalformedPayload("string field is not UTF-8"))
    }
}

fn f32_at(b: &[u8], i: usize) -> f32 {
    f32::from_bits(u32::from_be_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]))
}

/// Decodes a body without frame or CRC.
pub fn decode_body(body: &[u8]) -> Result<Flake, WireError> {
    let mut r = Reader { buf: body, pos: 0 };
    let scope = r.string()?;
    let label = r.string()?;
    let origin = r.string()?;
    let class = DeliveryClass::from_byte(r.u8()?).ok_or(WireError::MalformedPayload("unknown delivery class"))?;
    let seq = r.u32()?;
    let tag = PayloadTag::from_byte(r.u8()?).ok_or(WireError::MalformedPayload("unknown payload tag"))?;
    let count = r.u32()? as usize;
    let data_len = count
        .checked_mul(tag.element_size())
        .ok_or(WireError::MalformedPayload("element count overflows"))?;
    if body.len() - r.pos != data_len {
        return Err(WireError::MalformedPayload("data length does not match tag and count"));
    }
    let data = r.take(data_len)?;
    let payload = match tag {
        PayloadTag::Vec3 => Payload::Vec3(
            data.chunks_exact(12)
                .map(|c| [f32_at(c, 0), f32_at(c, 4), f32_at(c, 8)])
                .collect(),
        ),
        PayloadTag::Vec4 => Payload::Vec4(
            data.chunks_exact(16)
                .map(|c| [f32_at(c, 0), f32_at(c, 4), f32_at(c, 8), f32_at(c, 12)])
                .collect(),
        ),
        PayloadTag::Floats => Payload::Floats(data.chunks_exact(4).map(|c| f32_at(c, 0)).collect()),
        PayloadTag::Ints => Payload::Ints(
            data.chunks_exact(4)
                .map(|c| i32::from_be_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
        PayloadTag::Bytes => Payload::Bytes(data.to_vec()),
        PayloadTag::Text => Payload::Text(
            String::from_utf8(data.to_vec()).map_err(|_| WireError::MalformedPayload("TEXT payload is not UTF-8"))?,
        ),
    };
    Ok(Flake {
        scope,
        label,
        origin,
        class,
        seq,
        payload,
    })
}

/// Splits a byte stream into complete packets and the unconsumed remainder.
///
/// Packets are returned as undecoded slices; CRC and body checks happen in
/// [`decode_flake`]. A magic mismatch at a packet boundary means the stream
/// is out of sync and the connection must be dropped.
pub fn split_stream(buffer: &[u8]) -> Result<(Vec<&[u8]>, &[u8]), WireError> {
    let mut packets = Vec::new();
    let mut pos = 0;
    loop {
        let rest = &buffer[pos..];
        let head = rest.len().min(2);
        if rest[..head] != MAGIC[..head] {
            return Err(WireError::BadMagic);
        }
        if rest.len() < HEADER_LEN {
            return Ok((packets, rest));
        }
        let body_len = u32::from_be_bytes([rest[3], rest[4], rest[5], rest[6]]) as usize;
        if body_len > MAX_BODY_LEN {
            return Err(WireError::FrameTooLarge(body_len));
        }
        let total = HEADER_LEN + body_len + CRC_LEN;
        if rest.len() < total {
            return Ok((packets, rest));
        }
        packets.push(&rest[..total]);
        pos += total;
    }
}

/// Accumulates bytes from a stream transport and yields complete packets.
#[derive(Debug, Default)]
pub struct FrameBuffer {
    buf: Vec<u8>,
}

impl FrameBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `chunk` and returns every packet completed by it.
    pub fn push(&mut self, chunk: &[u8]) -> Result<Vec<Vec<u8>>, WireError> {
        self.buf.extend_from_slice(chunk);
        let (packets, rest) = split_stream(&self.buf)?;
        let out: Vec<Vec<u8>> = packets.into_iter().map(<[u8]>::to_vec).collect();
        let consumed = self.buf.len() - rest.len();
        self.buf.drain(..consumed);
        Ok(out)
    }

    pub fn pending(&self) -> usize {
        self.buf.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pose_flake() -> Flake {
        Flake::new(
            "demo",
            "pose.P",
            "P",
            DeliveryClass::State,
            1,
            Payload::Vec3(vec![[1.0, 2.0, 3.0]]),
        )
    }

    #[test]
    fn vec3_round_trip() {
        let f = pose_flake();
        let bytes = encode_flake(&f).unwrap();
        assert_eq!(&bytes[..3], &[0x4D, 0x42, 0x01]);
        assert_eq!(decode_flake(&bytes).unwrap(), f);
    }

    #[test]
    fn exact_layout() {
        let f = Flake::new("s", "l", "o", DeliveryClass::Event, 7, Payload::Ints(vec![-2]));
        let bytes = encode_flake(&f).unwrap();
        let body = [
            0, 1, b's', 0, 1, b'l', 0, 1, b'o', 0x01, 0, 0, 0, 7, 0x05, 0, 0, 0, 1, 0xFF, 0xFF, 0xFF, 0xFE,
        ];
        let mut expected = vec![0x4D, 0x42, 0x01, 0, 0, 0, body.len() as u8];
        expected.extend_from_slice(&body);
        expected.extend_from_slice(&crc32fast::hash(&body).to_be_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn empty_bytes_payload() {
        let f = Flake::new("demo", "x", "P", DeliveryClass::Event, 0, Payload::Bytes(vec![]));
        let bytes = encode_flake(&f).unwrap();
        assert_eq!(decode_flake(&bytes).unwrap(), f);
    }

    #[test]
    fn oversize_and_empty_strings_rejected() {
        let mut f = pose_flake();
        f.label = "x".repeat(65536);
        assert!(matches!(
            encode_flake(&f),
            Err(WireError::OversizeString {
                field: "label",
                len: 65536
            })
        ));
        f.label = "x".repeat(65535);
        assert!(encode_flake(&f).is_ok());
        f.origin.clear();
        assert_eq!(encode_flake(&f), Err(WireError::EmptyField("origin")));
    }

    #[test]
    fn flipped_payload_byte_is_crc_mismatch() {
        let mut bytes = encode_flake(&pose_flake()).unwrap();
        let i = bytes.len() - CRC_LEN - 1;
        bytes[i] ^= 0x40;
        assert!(matches!(decode_flake(&bytes), Err(WireError::CrcMismatch { .. })));
    }

    #[test]
    fn truncation_is_length_mismatch() {
        let bytes = encode_flake(&pose_flake()).unwrap();
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(decode_flake(cut), Err(WireError::LengthMismatch { .. })));
        assert!(matches!(
            decode_flake(&bytes[..1]),
            Err(WireError::LengthMismatch { .. })
        ));
        assert!(matches!(decode_flake(&[]), Err(WireError::LengthMismatch { .. })));
    }

    #[test]
    fn header_errors_are_distinct() {
        let mut bytes = encode_flake(&pose_flake()).unwrap();
        bytes[2] = 2;
        assert_eq!(decode_flake(&bytes), Err(WireError::UnsupportedVersion(2)));
        bytes[0] = b'X';
        assert_eq!(decode_flake(&bytes), Err(WireError::BadMagic));
    }

    #[test]
    fn malformed_bodies() {
        // count says 2 triples, data holds one
        let f = pose_flake();
        let mut body = encode_body(&f).unwrap();
        let count_at = body.len() - 12 - 4;
        body[count_at + 3] = 2;
        assert!(matches!(
            decode_flake(&frame_body(&body)),
            Err(WireError::MalformedPayload(_))
        ));

        let t = Flake::new("s", "l", "o", DeliveryClass::Event, 1, Payload::Text("ab".into()));
        let mut body = encode_body(&t).unwrap();
        let n = body.len();
        body[n - 1] = 0xFF;
        assert!(matches!(
            decode_flake(&frame_body(&body)),
            Err(WireError::MalformedPayload("TEXT payload is not UTF-8"))
        ));

        let mut body = encode_body(&t).unwrap();
        body[9] = 9; // class byte
        assert!(matches!(
            decode_flake(&frame_body(&body)),
            Err(WireError::MalformedPayload("unknown delivery class"))
        ));
    }

    #[test]
    fn split_two_and_a_half() {
        let a = encode_flake(&pose_flake()).unwrap();
        let mut stream = a.clone();
        stream.extend_from_slice(&a);
        let (pk, rest) = split_stream(&stream).unwrap();
        assert_eq!(pk.len(), 2);
        assert!(rest.is_empty());

        let half = a.len() / 2;
        let mut stream = a.clone();
        stream.extend_from_slice(&a[..half]);
        let (pk, rest) = split_stream(&stream).unwrap();
        assert_eq!(pk.len(), 1);
        assert_eq!(rest, &a[..half]);
    }

    #[test]
    fn split_detects_desync() {
        let mut stream = encode_flake(&pose_flake()).unwrap();
        stream.extend_from_slice(b"garbage");
        assert_eq!(split_stream(&stream), Err(WireError::BadMagic));
        assert_eq!(split_stream(b"M"), Ok((vec![], &b"M"[..])));
        assert_eq!(split_stream(b"Q"), Err(WireError::BadMagic));
    }

    #[test]
    fn split_rejects_huge_frames() {
        let hdr = [0x4D, 0x42, 0x01, 0xFF, 0xFF, 0xFF, 0xFF];
        assert!(matches!(split_stream(&hdr), Err(WireError::FrameTooLarge(_))));
    }

    #[test]
    fn frame_buffer_byte_at_a_time() {
        let a = encode_flake(&pose_flake()).unwrap();
        let mut fb = FrameBuffer::new();
        let mut got = Vec::new();
        for b in a.iter().chain(a.iter()) {
            got.extend(fb.push(std::slice::from_ref(b)).unwrap());
        }
        assert_eq!(got, vec![a.clone(), a]);
        assert_eq!(fb.pending(), 0);
    }

    proptest! {
        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_flake(&bytes);
            let _ = split_stream(&bytes);
        }

        #[test]
        fn packets_reencode_byte_exact(
            label in "[a-z.]{1,12}",
            seq in any::<u32>(),
            ints in proptest::collection::vec(any::<i32>(), 0..16),
        ) {
            let f = Flake::new("scope", label, "node", DeliveryClass::State, seq, Payload::Ints(ints));
            let bytes = encode_flake(&f).unwrap();
            let back = decode_flake(&bytes).unwrap();
            prop_assert_eq!(encode_flake(&back).unwrap(), bytes);
        }
    }
}
