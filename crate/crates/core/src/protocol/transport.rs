//! Connectionless datagram links standing in for the device radio.
//!
//! Every datagram passes a [`LossModel`] gate on the sending side: it is
//! dropped with probability `drop_prob`, otherwise optionally delayed by up
//! to `jitter_max` and delivered. Delays are applied in send order, so the
//! link never reorders.

use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::mpsc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default datagram port.
pub const DEFAULT_PORT: u16 = 4747;
/// Environment variable overriding [`DEFAULT_PORT`].
pub const PORT_ENV: &str = "KNEELINK_PORT";

/// Datagram port from the environment, or [`DEFAULT_PORT`].
pub fn default_port() -> u16 {
    std::env::var(PORT_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_PORT)
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("transport closed")]
    Closed,
    #[error("invalid drop probability {0}")]
    InvalidDropProbability(f64),
    #[error("transport i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossModel {
    pub drop_prob: f64,
    pub jitter_max: Duration,
    pub seed: u64,
}

impl Default for LossModel {
    fn default() -> Self {
        Self {
            drop_prob: 0.0,
            jitter_max: Duration::ZERO,
            seed: 0,
        }
    }
}

impl LossModel {
    pub fn lossless() -> Self {
        Self::default()
    }

    pub fn with_drop_prob(drop_prob: f64, seed: u64) -> Self {
        Self {
            drop_prob,
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), TransportError> {
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(TransportError::InvalidDropProbability(self.drop_prob));
        }
        Ok(())
    }
}

#[derive(Debug)]
struct LossGate {
    model: LossModel,
    rng: ChaCha8Rng,
    sent: u64,
    dropped: u64,
    failed: u64,
}

impl LossGate {
    fn new(model: LossModel) -> Result<Self, TransportError> {
        model.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            model,
            sent: 0,
            dropped: 0,
            failed: 0,
        })
    }

    /// Decides one datagram's fate; sleeps for its jitter when delivered.
    fn admit(&mut self, apply_jitter: bool) -> bool {
        self.sent += 1;
        if self.rng.random_bool(self.model.drop_prob) {
            self.dropped += 1;
            return false;
        }
        if !self.model.jitter_max.is_zero() {
            let frac: f64 = self.rng.random();
            if apply_jitter {
                std::thread::sleep(self.model.jitter_max.mul_f64(frac));
            }
        }
        true
    }

    fn stats(&self) -> SendStats {
        SendStats {
            sent: self.sent,
            dropped: self.dropped,
            failed: self.failed,
        }
    }
}

/// Sender-side counters. `failed` counts datagrams the loss model let
/// through but the transport could not put on the wire.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SendStats {
    pub sent: u64,
    pub dropped: u64,
    pub failed: u64,
}

impl SendStats {
    pub fn delivered(&self) -> u64 {
        self.sent - self.dropped - self.failed
    }
}

pub trait DatagramSender {
    /// Offers one datagram to the link. `Ok(true)` when it was put on the
    /// wire, `Ok(false)` when the loss model dropped it.
    fn send(&mut self, datagram: &[u8]) -> Result<bool, TransportError>;

    fn stats(&self) -> SendStats;

    /// Enables or disables jitter sleeps; fast runs skip them but still
    /// draw from the RNG so outcomes match a real-time run.
    fn set_realtime(&mut self, realtime: bool);
}

pub trait DatagramReceiver {
    /// Waits up to `timeout` for the next datagram. `Ok(None)` on timeout.
    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>, TransportError>;
}

/// In-process link over a channel.
pub struct MemoryLink;

impl MemoryLink {
    pub fn pair(model: LossModel) -> Result<(MemorySender, MemoryReceiver), TransportError> {
        let (tx, rx) = mpsc::channel();
        Ok((
            MemorySender {
                tx: Some(tx),
                gate: LossGate::new(model)?,
                realtime: false,
            },
            MemoryReceiver { rx },
        ))
    }
}

pub struct MemorySender {
    tx: Option<mpsc::Sender<Vec<u8>>>,
    gate: LossGate,
    realtime: bool,
}

impl MemorySender {
    pub fn close(&mut self) {
        self.tx = None;
    }
}

impl DatagramSender for MemorySender {
    fn send(&mut self, datagram: &[u8]) -> Result<bool, TransportError> {
        let tx = self.tx.as_ref().ok_or(TransportError::Closed)?;
        if !self.gate.admit(self.realtime) {
            return Ok(false);
        }
        if tx.send(datagram.to_vec()).is_err() {
            self.gate.failed += 1;
            return Err(TransportError::Closed);
        }
        Ok(true)
    }

    fn stats(&self) -> SendStats {
        self.gate.stats()
    }

    fn set_realtime(&mut self, realtime: bool) {
        self.realtime = realtime;
    }
}

pub struct MemoryReceiver {
    rx: mpsc::Receiver<Vec<u8>>,
}

impl MemoryReceiver {
    /// Everything currently queued, without blocking.
    pub fn drain(&mut self) -> Vec<Vec<u8>> {
        self.rx.try_iter().collect()
    }
}

impl DatagramReceiver for MemoryReceiver {
    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>, TransportError> {
        match self.rx.recv_timeout(timeout) {
            Ok(d) => Ok(Some(d)),
            Err(mpsc::RecvTimeoutError::Timeout) => Ok(None),
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(TransportError::Closed),
        }
    }
}

/// UDP sender bound to an ephemeral local port.
pub struct UdpSender {
    socket: Option<UdpSocket>,
    gate: LossGate,
    realtime: bool,
}

impl UdpSender {
    pub fn connect<A: ToSocketAddrs>(dest: A, model: LossModel) -> Result<Self, TransportError> {
        let dest: SocketAddr = dest
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no address"))?;
        let bind: SocketAddr = if dest.is_ipv4() {
            "0.0.0.0:0".parse().expect("literal")
        } else {
            "[::]:0".parse().expect("literal")
        };
        let socket = UdpSocket::bind(bind)?;
        socket.connect(dest)?;
        Ok(Self {
            socket: Some(socket),
            gate: LossGate::new(model)?,
            realtime: false,
        })
    }

    pub fn close(&mut self) {
        self.socket = None;
    }
}

impl DatagramSender for UdpSender {
    fn send(&mut self, datagram: &[u8]) -> Result<bool, TransportError> {
        let socket = self.socket.as_ref().ok_or(TransportError::Closed)?;
        if !self.gate.admit(self.realtime) {
            return Ok(false);
        }
        if let Err(e) = socket.send(datagram) {
            self.gate.failed += 1;
            return Err(e.into());
        }
        Ok(true)
    }

    fn stats(&self) -> SendStats {
        self.gate.stats()
    }

    fn set_realtime(&mut self, realtime: bool) {
        self.realtime = realtime;
    }
}

pub struct UdpReceiver {
    socket: Option<UdpSocket>,
    buf: Vec<u8>,
}

impl UdpReceiver {
    pub fn bind<A: ToSocketAddrs>(addr: A) -> Result<Self, TransportError> {
        Ok(Self {
            socket: Some(UdpSocket::bind(addr)?),
            buf: vec![0; 2048],
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, TransportError> {
        Ok(self.socket.as_ref().ok_or(TransportError::Closed)?.local_addr()?)
    }

    pub fn close(&mut self) {
        self.socket = None;
    }
}

impl DatagramReceiver for UdpReceiver {
    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>, TransportError> {
        let socket = self.socket.as_ref().ok_or(TransportError::Closed)?;
        socket.set_read_timeout(Some(timeout.max(Duration::from_micros(1))))?;
        match socket.recv(&mut self.buf) {
            Ok(n) => Ok(Some(self.buf[..n].to_vec())),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn push_n(tx: &mut impl DatagramSender, n: usize) {
        for i in 0..n {
            tx.send(&(i as u32).to_le_bytes()).unwrap();
        }
    }

    #[test]
    fn lossless_memory_link_delivers_everything_in_order() {
        let (mut tx, mut rx) = MemoryLink::pair(LossModel::lossless()).unwrap();
        push_n(&mut tx, 667);
        let got = rx.drain();
        assert_eq!(got.len(), 667);
        for (i, d) in got.iter().enumerate() {
            assert_eq!(u32::from_le_bytes(d[..4].try_into().unwrap()), i as u32);
        }
        assert_eq!(tx.stats().delivered(), 667);
    }

    #[test]
    fn full_loss_delivers_nothing() {
        let (mut tx, mut rx) = MemoryLink::pair(LossModel::with_drop_prob(1.0, 3)).unwrap();
        push_n(&mut tx, 100);
        assert!(rx.drain().is_empty());
        assert_eq!(tx.stats().dropped, 100);
    }

    #[test]
    fn rejects_bad_probability() {
        assert!(matches!(
            MemoryLink::pair(LossModel::with_drop_prob(1.5, 0)),
            Err(TransportError::InvalidDropProbability(_))
        ));
    }

    #[test]
    fn closed_links_error() {
        let (mut tx, rx) = MemoryLink::pair(LossModel::lossless()).unwrap();
        drop(rx);
        assert!(matches!(tx.send(b"x"), Err(TransportError::Closed)));

        let (mut tx, mut rx) = MemoryLink::pair(LossModel::lossless()).unwrap();
        tx.close();
        assert!(matches!(tx.send(b"x"), Err(TransportError::Closed)));
        drop(tx);
        assert!(matches!(
            rx.recv_timeout(Duration::from_millis(1)),
            Err(TransportError::Closed)
        ));
    }

    #[test]
    fn jitter_keeps_fifo_order() {
        let model = LossModel {
            drop_prob: 0.0,
            jitter_max: Duration::from_micros(300),
            seed: 5,
        };
        let (mut tx, mut rx) = MemoryLink::pair(model).unwrap();
        tx.set_realtime(true);
        push_n(&mut tx, 20);
        let got: Vec<u32> = rx
            .drain()
            .iter()
            .map(|d| u32::from_le_bytes(d[..4].try_into().unwrap()))
            .collect();
        assert_eq!(got, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn udp_round_trip() {
        let mut rx = UdpReceiver::bind("127.0.0.1:0").unwrap();
        let addr = rx.local_addr().unwrap();
        let mut tx = UdpSender::connect(addr, LossModel::lossless()).unwrap();
        assert!(tx.send(&[1, 2, 3]).unwrap());
        let got = rx.recv_timeout(Duration::from_secs(2)).unwrap();
        assert_eq!(got, Some(vec![1, 2, 3]));
        assert_eq!(rx.recv_timeout(Duration::from_millis(5)).unwrap(), None);
        tx.close();
        assert!(matches!(tx.send(&[0]), Err(TransportError::Closed)));
    }
}
