//! Wire formats and the emulated radio link.
//!
//! * [`packet`]: the 8-byte application payload.
//! * [`frame`]: the 14-byte framed record used on the serial hop and in
//!   dump files, plus a resynchronizing stream parser.
//! * [`transport`]: connectionless datagram links with configurable loss.

pub mod frame;
pub mod packet;
pub mod transport;

pub use frame::{encode_frame, Frame, FrameParser, LinkStats, ParsedFrame, FRAME_LEN, SYNC};
pub use packet::{decode_packet, encode_packet, DecodedPacket, PacketValidity, TelemetryPacket, PACKET_LEN};
pub use transport::{
    default_port, DatagramReceiver, DatagramSender, LossModel, MemoryLink, MemoryReceiver, MemorySender, SendStats,
    TransportError, UdpReceiver,
    UdpSender, DEFAULT_PORT, PORT_ENV,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("refusing to encode non-finite knee angle {0}")]
    NonFiniteAngle(f32),
    #[error("payload must be {expected} bytes, got {got}")]
    Length { expected: usize, got: usize },
}
