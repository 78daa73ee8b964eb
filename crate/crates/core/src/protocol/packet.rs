use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::emg::ADC_MAX_COUNTS;

pub const PACKET_LEN: usize = 8;

/// Application payload: knee angle plus both EMG envelope readings.
///
/// Layout, all little-endian: `[0..4)` f32 angle, `[4..6)` channel 1
/// (vastus lateralis), `[6..8)` channel 2 (semitendinosus).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryPacket {
    pub knee_angle_deg: f32,
    pub emg1_counts: u16,
    pub emg2_counts: u16,
}

/// Why a decoded packet would not have come from a conforming device.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketValidity {
    pub angle_non_finite: bool,
    pub emg1_out_of_range: bool,
    pub emg2_out_of_range: bool,
}

impl PacketValidity {
    pub fn is_suspect(&self) -> bool {
        self.angle_non_finite || self.emg1_out_of_range || self.emg2_out_of_range
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedPacket {
    pub packet: TelemetryPacket,
    pub validity: PacketValidity,
}

impl TelemetryPacket {
    pub fn validity(&self) -> PacketValidity {
        PacketValidity {
            angle_non_finite: !self.knee_angle_deg.is_finite(),
            emg1_out_of_range: self.emg1_counts > ADC_MAX_COUNTS,
            emg2_out_of_range: self.emg2_counts > ADC_MAX_COUNTS,
        }
    }
}

pub fn encode_packet(p: &TelemetryPacket) -> Result<[u8; PACKET_LEN], ProtocolError> {
    if !p.knee_angle_deg.is_finite() {
        return Err(ProtocolError::NonFiniteAngle(p.knee_angle_deg));
    }
    let mut out = [0u8; PACKET_LEN];
    out[0..4].copy_from_slice(&p.knee_angle_deg.to_le_bytes());
    out[4..6].copy_from_slice(&p.emg1_counts.to_le_bytes());
    out[6..8].copy_from_slice(&p.emg2_counts.to_le_bytes());
    Ok(out)
}

/// Decodes any 8-byte payload. Nonconforming values are kept and flagged.
pub fn decode_packet(b: &[u8]) -> Result<DecodedPacket, ProtocolError> {
    let b: &[u8; PACKET_LEN] = b.try_into().map_err(|_| ProtocolError::Length {
        expected: PACKET_LEN,
        got: b.len(),
    })?;
    let packet = TelemetryPacket {
        knee_angle_deg: f32::from_le_bytes([b[0], b[1], b[2], b[3]]),
        emg1_counts: u16::from_le_bytes([b[4], b[5]]),
        emg2_counts: u16::from_le_bytes([b[6], b[7]]),
    };
    Ok(DecodedPacket {
        packet,
        validity: packet.validity(),
    })
}
