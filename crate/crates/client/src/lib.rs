//! Clients for the relay service: [`RelayClient`] is a node on the framed
//! TCP endpoint, [`ApiClient`] wraps the HTTP/JSON API.

mod api;

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::time::Duration;

use mirrorboard_core::relay::{tick_frame, ErrorNotice, NodeRegistration, SYS_ACK, SYS_ERROR, SYS_SYNC};
use mirrorboard_core::wire::{decode_flake, encode_flake, DeliveryClass, Flake, FrameBuffer, Payload, WireError};
use thiserror::Error;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;

pub use api::{ApiClient, TickReport};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("relay refused: {} ({})", .0.message, .0.code)]
    Refused(ErrorNotice),
    #[error("relay closed the connection")]
    Closed,
    #[error("no reply from relay within {0:?}")]
    Timeout(Duration),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("http: {0}")]
    Http(String),
}

pub fn error_notice(f: &Flake) -> Option<ErrorNotice> {
    if f.label != SYS_ERROR {
        return None;
    }
    match &f.payload {
        Payload::Text(t) => serde_json::from_str(t).ok(),
        _ => None,
    }
}

/// A registered relay node over framed TCP. Reads and writes happen on the
/// caller's task; flakes that arrive while waiting for something else are
/// buffered in order.
pub struct RelayClient {
    name: String,
    scope: String,
    stream: TcpStream,
    frames: FrameBuffer,
    ready: VecDeque<Flake>,
    seq: u32,
    errors: Vec<ErrorNotice>,
    timeout: Duration,
}

impl RelayClient {
    /// Connects and registers; returns once the relay acknowledged.
    pub async fn connect(addr: SocketAddr, scope: &str, reg: NodeRegistration) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr).await?;
        stream.set_nodelay(true)?;
        let mut c = RelayClient {
            name: reg.name.clone(),
            scope: scope.to_owned(),
            stream,
            frames: FrameBuffer::new(),
            ready: VecDeque::new(),
            seq: 0,
            errors: Vec::new(),
            timeout: DEFAULT_TIMEOUT,
        };
        c.send(&reg.to_flake(scope)).await?;
        loop {
            let f = c.read_one().await?;
            if f.label == SYS_ACK {
                return Ok(c);
            }
            if let Some(e) = error_notice(&f) {
                return Err(ClientError::Refused(e));
            }
            c.ready.push_back(f);
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn scope(&self) -> &str {
        &self.scope
    }

    pub fn set_timeout(&mut self, t: Duration) {
        self.timeout = t;
    }

    /// Error notices received so far.
    pub fn errors(&self) -> &[ErrorNotice] {
        &self.errors
    }

    pub async fn send(&mut self, f: &Flake) -> Result<(), ClientError> {
        self.stream.write_all(&encode_flake(f)?).await?;
        Ok(())
    }

    fn next_seq(&mut self) -> u32 {
        self.seq += 1;
        self.seq
    }

    /// Publishes under this node's name and scope; returns the seq used.
    pub async fn publish(&mut self, label: &str, class: DeliveryClass, payload: Payload) -> Result<u32, ClientError> {
        let seq = self.next_seq();
        let f = Flake::new(self.scope.clone(), label, self.name.clone(), class, seq, payload);
        self.send(&f).await?;
        Ok(seq)
    }

    pub async fn publish_state(&mut self, label: &str, payload: Payload) -> Result<u32, ClientError> {
        self.publish(label, DeliveryClass::State, payload).await
    }

    pub async fn publish_event(&mut self, label: &str, payload: Payload) -> Result<u32, ClientError> {
        self.publish(label, DeliveryClass::Event, payload).await
    }

    async fn read_one(&mut self) -> Result<Flake, ClientError> {
        loop {
            if let Some(f) = self.ready.pop_front() {
                return Ok(f);
            }
            let mut buf = [0u8; 16 * 1024];
            let n = tokio::time::timeout(self.timeout, self.stream.read(&mut buf))
                .await
                .map_err(|_| ClientError::Timeout(self.timeout))??;
            if n == 0 {
                return Err(ClientError::Closed);
            }
            for p in self.frames.push(&buf[..n])? {
                self.ready.push_back(decode_flake(&p)?);
            }
        }
    }

    /// Next flake in arrival order. Error notices are also recorded.
    pub async fn recv(&mut self) -> Result<Flake, ClientError> {
        let f = self.read_one().await?;
        if let Some(e) = error_notice(&f) {
            self.errors.push(e);
        }
        Ok(f)
    }

    /// Waits until the relay has processed everything sent so far.
    pub async fn sync(&mut self) -> Result<(), ClientError> {
        let nonce = self.next_seq();
        let f = Flake::new(
            self.scope.clone(),
            SYS_SYNC,
            self.name.clone(),
            DeliveryClass::Event,
            nonce,
            Payload::Bytes(nonce.to_be_bytes().to_vec()),
        );
        self.send(&f).await?;
        let mut held = Vec::new();
        let want = Payload::Bytes(nonce.to_be_bytes().to_vec());
        loop {
            // Held flakes go back to the queue and are recorded when received.
            let f = self.read_one().await?;
            if f.label == SYS_SYNC && f.payload == want {
                break;
            }
            held.push(f);
        }
        for f in held.into_iter().rev() {
            self.ready.push_front(f);
        }
        Ok(())
    }

    /// Flakes delivered up to the `sys.tick` marker for `frame`, excluding
    /// control traffic.
    pub async fn until_tick(&mut self, frame: u64) -> Result<Vec<Flake>, ClientError> {
        let mut out = Vec::new();
        loop {
            let f = self.recv().await?;
            match tick_frame(&f) {
                Some(k) if k >= frame => return Ok(out),
                Some(_) => {}
                None if f.label.starts_with("sys.") => {}
                None => out.push(f),
            }
        }
    }

    /// Waits for the next tick marker; returns its frame and the flakes before it.
    pub async fn next_tick(&mut self) -> Result<(u64, Vec<Flake>), ClientError> {
        let mut out = Vec::new();
        loop {
            let f = self.recv().await?;
            match tick_frame(&f) {
                Some(k) => return Ok((k, out)),
                None if f.label.starts_with("sys.") => {}
                None => out.push(f),
            }
        }
    }

    pub async fn close(mut self) -> Result<(), ClientError> {
        self.stream.shutdown().await?;
        Ok(())
    }
}
