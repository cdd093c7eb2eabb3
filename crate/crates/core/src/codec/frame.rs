//! MAVLink v2 framing: header, trailing-zero truncation, checksum.
//!
//! Layout (no signature):
//!
//! ```text
//! 0xFD | len | incompat | compat | seq | sysid | compid | msgid[3] | payload[len] | crc[2]
//! ```

use serde::Serialize;
use thiserror::Error;

use super::crc::{crc16_mcrf4xx, crc_accumulate, CRC_INIT};
use super::messages::{MavMessage, MessageKind};

pub const MAGIC_V2: u8 = 0xFD;
pub const HEADER_LEN: usize = 10;
pub const CHECKSUM_LEN: usize = 2;
pub const MAX_PAYLOAD_LEN: usize = 255;
/// Largest unsigned v2 frame.
pub const MAX_FRAME_LEN: usize = HEADER_LEN + MAX_PAYLOAD_LEN + CHECKSUM_LEN;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FrameHeader {
    pub payload_len: u8,
    pub incompat_flags: u8,
    pub compat_flags: u8,
    pub seq: u8,
    pub sysid: u8,
    pub compid: u8,
    pub msgid: u32,
}

impl FrameHeader {
    fn parse(h: &[u8]) -> Self {
        FrameHeader {
            payload_len: h[1],
            incompat_flags: h[2],
            compat_flags: h[3],
            seq: h[4],
            sysid: h[5],
            compid: h[6],
            msgid: u32::from_le_bytes([h[7], h[8], h[9], 0]),
        }
    }

    pub fn frame_len(&self) -> usize {
        HEADER_LEN + self.payload_len as usize + CHECKSUM_LEN
    }
}

/// A framed but not yet interpreted message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub header: FrameHeader,
    pub payload: Vec<u8>,
    pub checksum: u16,
}

impl Frame {
    /// Splits one complete frame off the front of `buf` without checking the
    /// checksum (which needs the message's crc_extra).
    pub fn split(buf: &[u8]) -> Result<(Frame, usize), DecodeError> {
        let Some(&first) = buf.first() else {
            return Err(DecodeError::NeedMoreData);
        };
        if first != MAGIC_V2 {
            let consumed = buf.iter().position(|&b| b == MAGIC_V2).unwrap_or(buf.len());
            return Err(DecodeError::Junk { consumed });
        }
        if buf.len() >= 3 && buf[2] != 0 {
            return Err(DecodeError::UnsupportedFlags { flags: buf[2], consumed: 1 });
        }
        if buf.len() < HEADER_LEN {
            return Err(DecodeError::NeedMoreData);
        }
        let header = FrameHeader::parse(&buf[..HEADER_LEN]);
        let len = header.frame_len();
        if buf.len() < len {
            return Err(DecodeError::NeedMoreData);
        }
        let payload = buf[HEADER_LEN..len - CHECKSUM_LEN].to_vec();
        let checksum = u16::from_le_bytes([buf[len - 2], buf[len - 1]]);
        Ok((Frame { header, payload, checksum }, len))
    }

    /// Checksum over header (minus magic) and payload, then crc_extra.
    pub fn compute_checksum(&self, crc_extra: u8) -> u16 {
        let h = &self.header;
        let id = h.msgid.to_le_bytes();
        let head = [h.payload_len, h.incompat_flags, h.compat_flags, h.seq, h.sysid, h.compid, id[0], id[1], id[2]];
        let crc = crc16_mcrf4xx(&head, CRC_INIT);
        let crc = crc16_mcrf4xx(&self.payload, crc);
        crc_accumulate(crc_extra, crc)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("incomplete frame")]
    NeedMoreData,
    #[error("{consumed} bytes before next frame marker")]
    Junk { consumed: usize },
    #[error("unsupported incompat flags {flags:#04x}")]
    UnsupportedFlags { flags: u8, consumed: usize },
    #[error("bad checksum (expected {expected:#06x}, found {found:#06x})")]
    BadChecksum { expected: u16, found: u16, consumed: usize },
    #[error("unknown message id {msgid}")]
    UnknownMsgId { msgid: u32, consumed: usize },
}

impl DecodeError {
    /// Bytes the caller may skip; zero for [`DecodeError::NeedMoreData`].
    pub fn consumed(&self) -> usize {
        match *self {
            DecodeError::NeedMoreData => 0,
            DecodeError::Junk { consumed }
            | DecodeError::UnsupportedFlags { consumed, .. }
            | DecodeError::BadChecksum { consumed, .. }
            | DecodeError::UnknownMsgId { consumed, .. } => consumed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub message: MavMessage,
    pub header: FrameHeader,
    pub consumed: usize,
}

/// Trailing-zero truncation; the first payload byte is always kept.
fn truncated_len(payload: &[u8]) -> usize {
    payload.iter().rposition(|&b| b != 0).map_or(1, |i| i + 1)
}

/// Appends one canonical frame for `msg` to `out`.
pub fn encode_into(msg: &MavMessage, seq: u8, sysid: u8, compid: u8, out: &mut Vec<u8>) {
    let kind = msg.kind();
    let start = out.len();
    out.extend_from_slice(&[MAGIC_V2, 0, 0, 0, seq, sysid, compid]);
    out.extend_from_slice(&kind.msgid().to_le_bytes()[..3]);
    msg.write_payload(out);
    let payload_len = truncated_len(&out[start + HEADER_LEN..]);
    out.truncate(start + HEADER_LEN + payload_len);
    out[start + 1] = payload_len as u8;
    let crc = crc16_mcrf4xx(&out[start + 1..], CRC_INIT);
    let crc = crc_accumulate(kind.crc_extra(), crc);
    out.extend_from_slice(&crc.to_le_bytes());
}

pub fn frame_encode(msg: &MavMessage, seq: u8, sysid: u8, compid: u8) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + msg.kind().payload_len() + CHECKSUM_LEN);
    encode_into(msg, seq, sysid, compid, &mut out);
    out
}

/// Decodes the frame at the start of `buf`.
///
/// A checksum failure reports the claimed frame length as `consumed`; callers
/// scanning untrusted input should resynchronise one byte past the marker
/// instead (see [`FrameScanner`]).
pub fn frame_decode(buf: &[u8]) -> Result<Decoded, DecodeError> {
    let (frame, consumed) = Frame::split(buf)?;
    let Some(kind) = MessageKind::from_msgid(frame.header.msgid) else {
        return Err(DecodeError::UnknownMsgId { msgid: frame.header.msgid, consumed });
    };
    let expected = frame.compute_checksum(kind.crc_extra());
    if expected != frame.checksum {
        return Err(DecodeError::BadChecksum { expected, found: frame.checksum, consumed });
    }
    Ok(Decoded { message: MavMessage::read_payload(kind, &frame.payload), header: frame.header, consumed })
}

// ---------------------------------------------------------------------------
// Scanning complete buffers (one UDP datagram)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum Scanned<'a> {
    /// Supported message with a verified checksum.
    Message { bytes: &'a [u8], header: FrameHeader, message: MavMessage },
    /// Well-framed message with an id outside the supported subset. Its
    /// checksum cannot be verified, so it is only accepted when it ends at
    /// the buffer end or at another frame marker.
    Opaque { bytes: &'a [u8], header: FrameHeader },
}

impl<'a> Scanned<'a> {
    pub fn bytes(&self) -> &'a [u8] {
        match self {
            Scanned::Message { bytes, .. } | Scanned::Opaque { bytes, .. } => bytes,
        }
    }

    pub fn header(&self) -> &FrameHeader {
        match self {
            Scanned::Message { header, .. } | Scanned::Opaque { header, .. } => header,
        }
    }
}

/// Iterates over the frames in a complete buffer, skipping junk.
pub struct FrameScanner<'a> {
    buf: &'a [u8],
    pos: usize,
    in_junk: bool,
    junk_runs: usize,
    junk_bytes: usize,
}

impl<'a> FrameScanner<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0, in_junk: false, junk_runs: 0, junk_bytes: 0 }
    }

    /// Number of maximal runs of discarded bytes seen so far.
    pub fn junk_runs(&self) -> usize {
        self.junk_runs
    }

    pub fn junk_bytes(&self) -> usize {
        self.junk_bytes
    }

    fn skip(&mut self, n: usize) {
        if !self.in_junk {
            self.junk_runs += 1;
            self.in_junk = true;
        }
        self.junk_bytes += n;
        self.pos += n;
    }

    fn take(&mut self, n: usize) -> &'a [u8] {
        self.in_junk = false;
        let bytes = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        bytes
    }
}

impl<'a> Iterator for FrameScanner<'a> {
    type Item = Scanned<'a>;

    fn next(&mut self) -> Option<Scanned<'a>> {
        while self.pos < self.buf.len() {
            let rest = &self.buf[self.pos..];
            match frame_decode(rest) {
                Ok(d) => {
                    let bytes = self.take(d.consumed);
                    return Some(Scanned::Message { bytes, header: d.header, message: d.message });
                }
                Err(DecodeError::UnknownMsgId { consumed, .. })
                    if consumed == rest.len() || rest[consumed] == MAGIC_V2 =>
                {
                    let header = FrameHeader::parse(rest);
                    let bytes = self.take(consumed);
                    return Some(Scanned::Opaque { bytes, header });
                }
                Err(DecodeError::Junk { consumed }) => self.skip(consumed),
                Err(_) => self.skip(1),
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::messages::*;

    fn hb() -> MavMessage {
        MavMessage::Heartbeat(Heartbeat::default())
    }

    #[test]
    fn zero_heartbeat_keeps_one_payload_byte() {
        let bytes = frame_encode(&hb(), 0, 255, 0);
        assert_eq!(bytes[1], 1);
        assert_eq!(bytes.len(), HEADER_LEN + 1 + CHECKSUM_LEN);
        let d = frame_decode(&bytes).unwrap();
        assert_eq!(d.message, hb());
        assert_eq!(d.consumed, bytes.len());
    }

    #[test]
    fn partial_header_needs_more_data() {
        let bytes = frame_encode(&hb(), 0, 255, 0);
        assert_eq!(frame_decode(&bytes[..3]), Err(DecodeError::NeedMoreData));
        assert_eq!(frame_decode(&bytes[..bytes.len() - 1]), Err(DecodeError::NeedMoreData));
        assert_eq!(frame_decode(&[]), Err(DecodeError::NeedMoreData));
        assert_eq!(DecodeError::NeedMoreData.consumed(), 0);
    }

    #[test]
    fn flipped_checksum_bit() {
        let mut bytes = frame_encode(&hb(), 4, 1, 1);
        let n = bytes.len();
        bytes[n - 1] ^= 0x10;
        match frame_decode(&bytes) {
            Err(DecodeError::BadChecksum { consumed, .. }) => assert_eq!(consumed, n),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn v1_and_signed_frames_rejected() {
        let mut bytes = frame_encode(&hb(), 0, 1, 1);
        bytes[0] = 0xFE;
        assert_eq!(frame_decode(&bytes), Err(DecodeError::Junk { consumed: bytes.len() }));
        let mut bytes = frame_encode(&hb(), 0, 1, 1);
        bytes[2] = 0x01;
        assert!(matches!(frame_decode(&bytes), Err(DecodeError::UnsupportedFlags { .. })));
    }

    #[test]
    fn unknown_msgid_reports_length() {
        let mut bytes = frame_encode(&hb(), 0, 1, 1);
        bytes[7] = 0x99;
        match frame_decode(&bytes) {
            Err(DecodeError::UnknownMsgId { msgid, consumed }) => {
                assert_eq!(msgid, 0x99);
                assert_eq!(consumed, bytes.len());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scanner_counts_junk_runs() {
        let a = frame_encode(&hb(), 1, 1, 1);
        let mut buf = vec![1, 2, 3];
        buf.extend_from_slice(&a);
        buf.extend_from_slice(&[0xFD, 0x00]);
        buf.extend_from_slice(&a);
        let mut sc = FrameScanner::new(&buf);
        let frames: Vec<_> = sc.by_ref().collect();
        assert_eq!(frames.len(), 2);
        assert_eq!(sc.junk_runs(), 2);
        assert_eq!(sc.junk_bytes(), 5);

        let junk = [9u8; 40];
        let mut sc = FrameScanner::new(&junk);
        assert_eq!(sc.by_ref().count(), 0);
        assert_eq!(sc.junk_runs(), 1);
    }

    #[test]
    fn scanner_passes_opaque_frames_at_boundaries() {
        let mut unknown = frame_encode(&hb(), 0, 1, 1);
        unknown[7] = 0x42;
        let known = frame_encode(&hb(), 1, 1, 1);
        let mut buf = unknown.clone();
        buf.extend_from_slice(&known);
        let items: Vec<_> = FrameScanner::new(&buf).collect();
        assert_eq!(items.len(), 2);
        assert!(matches!(items[0], Scanned::Opaque { .. }));
        assert_eq!(items[0].bytes(), &unknown[..]);
        assert_eq!(items[0].header().msgid, 0x42);
    }
}
