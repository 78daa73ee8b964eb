//! 14-byte serial frame: `AA 55 | seq u16 | payload [8] | crc u16`.
//!
//! Multi-byte fields are little-endian. The CRC is CRC-16/CCITT-FALSE
//! (poly 0x1021, init 0xFFFF, no reflection, no final xor) over the ten
//! bytes of `seq` and payload.

use crc::{Crc, CRC_16_IBM_3740};
use serde::{Deserialize, Serialize};

use super::packet::{decode_packet, encode_packet, DecodedPacket, TelemetryPacket, PACKET_LEN};
use super::ProtocolError;

pub const SYNC: [u8; 2] = [0xAA, 0x55];
pub const FRAME_LEN: usize = 2 + 2 + PACKET_LEN + 2;

const CRC16: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub fn crc16(bytes: &[u8]) -> u16 {
    CRC16.checksum(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub seq: u16,
    pub packet: TelemetryPacket,
}

impl Frame {
    pub fn encode(&self) -> Result<[u8; FRAME_LEN], ProtocolError> {
        encode_frame(self.seq, &self.packet)
    }
}

pub fn encode_frame(seq: u16, packet: &TelemetryPacket) -> Result<[u8; FRAME_LEN], ProtocolError> {
    let payload = encode_packet(packet)?;
    let mut out = [0u8; FRAME_LEN];
    out[0..2].copy_from_slice(&SYNC);
    out[2..4].copy_from_slice(&seq.to_le_bytes());
    out[4..12].copy_from_slice(&payload);
    let crc = crc16(&out[2..12]);
    out[12..14].copy_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// A CRC-valid frame pulled out of a byte stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParsedFrame {
    pub seq: u16,
    pub decoded: DecodedPacket,
}

impl ParsedFrame {
    pub fn packet(&self) -> TelemetryPacket {
        self.decoded.packet
    }
}

/// Link counters. On the receiving side `sent` is inferred from sequence
/// numbers (`received + dropped`), so trailing losses are invisible there.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    pub sent: u64,
    pub received: u64,
    pub dropped: u64,
    pub crc_failures: u64,
    pub observed_rate_hz: f64,
}

impl LinkStats {
    pub fn with_rate(mut self, elapsed_s: f64) -> Self {
        self.observed_rate_hz = if elapsed_s > 0.0 {
            self.received as f64 / elapsed_s
        } else {
            0.0
        };
        self
    }
}

/// Incremental, resynchronizing frame parser. Total over arbitrary input:
/// garbage is skipped, CRC failures are counted and never emitted.
#[derive(Debug, Clone, Default)]
pub struct FrameParser {
    buf: Vec<u8>,
    last_seq: Option<u16>,
    received: u64,
    dropped: u64,
    crc_failures: u64,
    discarded_bytes: u64,
}

impl FrameParser {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses a complete byte stream in one go.
    pub fn parse_all(bytes: &[u8]) -> (Vec<ParsedFrame>, LinkStats) {
        let mut p = Self::new();
        let frames = p.push(bytes);
        (frames, p.stats())
    }

    pub fn stats(&self) -> LinkStats {
        LinkStats {
            sent: self.received + self.dropped,
            received: self.received,
            dropped: self.dropped,
            crc_failures: self.crc_failures,
            observed_rate_hz: 0.0,
        }
    }

    /// Bytes skipped while hunting for a sync marker.
    pub fn discarded_bytes(&self) -> u64 {
        self.discarded_bytes
    }

    /// Bytes held back waiting for the rest of a candidate frame.
    pub fn pending_len(&self) -> usize {
        self.buf.len()
    }

    /// Feeds more bytes and returns every frame completed by them.
    pub fn push(&mut self, bytes: &[u8]) -> Vec<ParsedFrame> {
        self.buf.extend_from_slice(bytes);
        let mut out = Vec::new();
        let mut pos = 0;
        let len = self.buf.len();
        loop {
            let Some(start) = find_sync(&self.buf[pos..]).map(|off| pos + off) else {
                // Keep a trailing 0xAA: it may be the first half of a marker.
                let keep_from = if self.buf.last() == Some(&SYNC[0]) { len - 1 } else { len };
                self.discarded_bytes += keep_from.saturating_sub(pos) as u64;
                pos = keep_from.max(pos);
                break;
            };
            self.discarded_bytes += (start - pos) as u64;
            if start + FRAME_LEN > len {
                pos = start;
                break;
            }
            let frame = &self.buf[start..start + FRAME_LEN];
            let expected = u16::from_le_bytes([frame[12], frame[13]]);
            if crc16(&frame[2..12]) != expected {
                self.crc_failures += 1;
                pos = start + 1;
                continue;
            }
            let seq = u16::from_le_bytes([frame[2], frame[3]]);
            let decoded = decode_packet(&frame[4..12]).expect("slice is PACKET_LEN bytes");
            self.account(seq);
            out.push(ParsedFrame { seq, decoded });
            pos = start + FRAME_LEN;
        }
        self.buf.drain(..pos);
        out
    }

    fn account(&mut self, seq: u16) {
        if let Some(last) = self.last_seq {
            let gap = seq.wrapping_sub(last);
            if gap > 1 {
                self.dropped += u64::from(gap - 1);
            }
        }
        self.last_seq = Some(seq);
        self.received += 1;
    }
}

fn find_sync(bytes: &[u8]) -> Option<usize> {
    bytes.windows(2).position(|w| w == SYNC)
}
