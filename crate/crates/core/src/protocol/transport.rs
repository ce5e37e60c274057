//! Transports carrying frames between the master and one client.
//!
//! [`ChannelLink`] pairs are lossless FIFO channels for in-process runs;
//! [`TcpLink`] carries the same frames length-prefixed over a socket.

use std::io::{BufReader, BufWriter, ErrorKind};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::codec::{read_frame, write_frame, CodecError};
use super::{Frame, ProtocolError};

/// One end of a bidirectional frame channel. A handle may move between
/// threads but is never used by two at once.
pub trait Link: Send {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError>;
    /// Waits for the next frame, up to the link's timeout.
    fn recv(&mut self) -> Result<Frame, ProtocolError>;
    /// Human-readable name of the other end, for diagnostics.
    fn peer(&self) -> String;
}

impl<L: Link + ?Sized> Link for Box<L> {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        (**self).send(frame)
    }

    fn recv(&mut self) -> Result<Frame, ProtocolError> {
        (**self).recv()
    }

    fn peer(&self) -> String {
        (**self).peer()
    }
}

pub struct ChannelLink {
    tx: Sender<Frame>,
    rx: Receiver<Frame>,
    timeout: Duration,
    peer: String,
}

/// Two connected in-process ends: `(master side, client side)`.
pub fn channel_pair(timeout: Duration, client_name: &str) -> (ChannelLink, ChannelLink) {
    let (to_client, from_master) = mpsc::channel();
    let (to_master, from_client) = mpsc::channel();
    (
        ChannelLink {
            tx: to_client,
            rx: from_client,
            timeout,
            peer: client_name.to_owned(),
        },
        ChannelLink {
            tx: to_master,
            rx: from_master,
            timeout,
            peer: "master".to_owned(),
        },
    )
}

impl Link for ChannelLink {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        self.tx
            .send(frame.clone())
            .map_err(|_| ProtocolError::Disconnected { peer: self.peer() })
    }

    fn recv(&mut self) -> Result<Frame, ProtocolError> {
        self.rx.recv_timeout(self.timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => ProtocolError::Timeout { peer: self.peer() },
            RecvTimeoutError::Disconnected => ProtocolError::Disconnected { peer: self.peer() },
        })
    }

    fn peer(&self) -> String {
        self.peer.clone()
    }
}

pub struct TcpLink {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    peer: String,
}

impl TcpLink {
    /// Wraps an established stream; `timeout` bounds every receive.
    pub fn new(stream: TcpStream, timeout: Duration) -> Result<Self, ProtocolError> {
        stream.set_read_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        let peer = stream
            .peer_addr()
            .map(|a| a.to_string())
            .unwrap_or_else(|_| "unknown peer".into());
        Ok(TcpLink {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
            peer,
        })
    }

    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self, ProtocolError> {
        let stream = TcpStream::connect(addr)?;
        TcpLink::new(stream, timeout)
    }

    fn map_err(&self, e: CodecError) -> ProtocolError {
        match e {
            CodecError::Closed => ProtocolError::Disconnected { peer: self.peer.clone() },
            CodecError::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                ProtocolError::Timeout { peer: self.peer.clone() }
            }
            CodecError::Io(io)
                if matches!(
                    io.kind(),
                    ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted | ErrorKind::BrokenPipe | ErrorKind::UnexpectedEof
                ) =>
            {
                ProtocolError::Disconnected { peer: self.peer.clone() }
            }
            other => other.into(),
        }
    }
}

impl Link for TcpLink {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        write_frame(&mut self.writer, frame).map_err(|e| self.map_err(e))
    }

    fn recv(&mut self) -> Result<Frame, ProtocolError> {
        read_frame(&mut self.reader).map_err(|e| self.map_err(e))
    }

    fn peer(&self) -> String {
        self.peer.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ToClient,
    FromClient,
}

/// One frame observed on the master side of a link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub client: u32,
    pub direction: Direction,
    pub frame: Frame,
}

/// Wraps a master-side link and logs every frame that crosses it.
pub struct RecordingLink<L> {
    inner: L,
    client: u32,
    log: Option<Arc<Mutex<Vec<TranscriptEntry>>>>,
}

impl<L: Link> RecordingLink<L> {
    /// `log = None` passes frames through without recording.
    pub fn new(inner: L, client: u32, log: Option<Arc<Mutex<Vec<TranscriptEntry>>>>) -> Self {
        RecordingLink { inner, client, log }
    }

    fn record(&self, direction: Direction, frame: &Frame) {
        if let Some(log) = &self.log {
            log.lock().expect("transcript lock poisoned").push(TranscriptEntry {
                client: self.client,
                direction,
                frame: frame.clone(),
            });
        }
    }
}

impl<L: Link> Link for RecordingLink<L> {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        self.record(Direction::ToClient, frame);
        self.inner.send(frame)
    }

    fn recv(&mut self) -> Result<Frame, ProtocolError> {
        let frame = self.inner.recv()?;
        self.record(Direction::FromClient, &frame);
        Ok(frame)
    }

    fn peer(&self) -> String {
        self.inner.peer()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ProtocolMessage;
    use std::net::TcpListener;

    #[test]
    fn channel_pair_is_fifo_and_reports_hangup() {
        let (mut m, mut c) = channel_pair(Duration::from_millis(200), "client 0");
        for t in 0..3 {
            m.send(&Frame::new(9, ProtocolMessage::TreeBegin { tree: t })).unwrap();
        }
        for t in 0..3 {
            assert_eq!(c.recv().unwrap().message, ProtocolMessage::TreeBegin { tree: t });
        }
        assert!(matches!(c.recv(), Err(ProtocolError::Timeout { .. })));
        drop(m);
        assert!(matches!(c.recv(), Err(ProtocolError::Disconnected { .. })));
        assert!(matches!(
            c.send(&Frame::new(9, ProtocolMessage::SessionEnd)),
            Err(ProtocolError::Disconnected { .. })
        ));
    }

    #[test]
    fn tcp_round_trip_timeout_and_hangup() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut link = TcpLink::new(stream, Duration::from_secs(5)).unwrap();
            let f = link.recv().unwrap();
            link.send(&f).unwrap();
        });
        let mut client = TcpLink::connect(addr, Duration::from_millis(300)).unwrap();
        let frame = Frame::new(3, ProtocolMessage::TreeBegin { tree: 1 });
        client.send(&frame).unwrap();
        assert_eq!(client.recv().unwrap(), frame);
        server.join().unwrap();
        assert!(matches!(client.recv(), Err(ProtocolError::Disconnected { .. })));
    }

    #[test]
    fn tcp_timeout() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let mut client = TcpLink::connect(addr, Duration::from_millis(100)).unwrap();
        let _held = listener.accept().unwrap();
        assert!(matches!(client.recv(), Err(ProtocolError::Timeout { .. })));
    }

    #[test]
    fn recording_link_logs_both_directions() {
        let log = Arc::new(Mutex::new(Vec::new()));
        let (m, mut c) = channel_pair(Duration::from_secs(1), "client 0");
        let mut rec = RecordingLink::new(m, 0, Some(log.clone()));
        rec.send(&Frame::new(1, ProtocolMessage::TreeBegin { tree: 0 })).unwrap();
        c.recv().unwrap();
        c.send(&Frame::new(1, ProtocolMessage::SessionEnd)).unwrap();
        rec.recv().unwrap();
        let log = log.lock().unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log[0].direction, Direction::ToClient);
        assert_eq!(log[1].direction, Direction::FromClient);
    }
}
