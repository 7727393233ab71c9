//! The single task that owns the [`Router`]. Connection handlers talk to it
//! over a channel; it is the only place routing state changes.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mirrorboard_core::relay::{
    DeliveryRecord, ErrorNotice, NodeRegistration, RelayError, RelayStats, Router, SYS_ACK, SYS_ERROR, SYS_REGISTER,
    SYS_SYNC,
};
use mirrorboard_core::wire::{encode_flake, DeliveryClass, Flake, Payload};
use serde::Serialize;
use tokio::sync::{broadcast, mpsc, oneshot};

pub type ConnId = u64;
/// Encoded packets on their way to one connection.
pub type PacketTx = mpsc::Sender<Arc<[u8]>>;

/// Per-connection writer channel depth; beyond it packets wait in the
/// router's bounded outbound queue.
pub const WRITER_DEPTH: usize = 256;
const FLUSH_RETRY: Duration = Duration::from_millis(2);

#[derive(Debug)]
pub enum Cmd {
    Open {
        conn: ConnId,
        tx: PacketTx,
    },
    Packet {
        conn: ConnId,
        flake: Flake,
    },
    /// Undecodable input; reported to the peer.
    Garbage {
        conn: ConnId,
        message: String,
    },
    Close {
        conn: ConnId,
    },
    Tick {
        reply: Option<oneshot::Sender<TickReport>>,
    },
    Stats {
        reply: oneshot::Sender<RelayStats>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TickReport {
    pub frame_no: u64,
    pub deliveries: usize,
}

/// Broadcast to tick subscribers.
#[derive(Debug, Clone, Copy)]
pub struct TickInfo {
    pub frame_no: u64,
    pub at: Instant,
}

/// Body of the `sys.ack` sent after registration.
#[derive(Debug, Serialize)]
struct RegisterAck<'a> {
    name: &'a str,
    frame_no: u64,
}

struct Conn {
    tx: PacketTx,
    node: Option<String>,
}

pub struct RouterTask {
    router: Router,
    conns: BTreeMap<ConnId, Conn>,
    log: Option<Box<dyn Write + Send>>,
    ticks: broadcast::Sender<TickInfo>,
}

impl RouterTask {
    pub fn new(log: Option<Box<dyn Write + Send>>, ticks: broadcast::Sender<TickInfo>) -> Self {
        RouterTask {
            router: Router::new(),
            conns: BTreeMap::new(),
            log,
            ticks,
        }
    }

    pub async fn run(mut self, mut rx: mpsc::Receiver<Cmd>) {
        loop {
            let backlog = self.has_backlog();
            let cmd = if backlog {
                match tokio::time::timeout(FLUSH_RETRY, rx.recv()).await {
                    Ok(c) => c,
                    Err(_) => {
                        self.flush();
                        continue;
                    }
                }
            } else {
                rx.recv().await
            };
            let Some(cmd) = cmd else { break };
            self.handle(cmd);
            self.flush();
        }
        if let Some(log) = self.log.as_mut() {
            let _ = log.flush();
        }
    }

    fn handle(&mut self, cmd: Cmd) {
        match cmd {
            Cmd::Open { conn, tx } => {
                self.conns.insert(conn, Conn { tx, node: None });
            }
            Cmd::Packet { conn, flake } => self.on_packet(conn, flake),
            Cmd::Garbage { conn, message } => {
                let notice = ErrorNotice {
                    code: "MalformedPacket".into(),
                    message,
                };
                self.send_error(conn, &notice);
            }
            Cmd::Close { conn } => {
                if let Some(Conn { node: Some(name), .. }) = self.conns.remove(&conn) {
                    tracing::info!(node = %name, "node disconnected");
                    self.router.unregister(&name);
                }
            }
            Cmd::Tick { reply } => {
                let records = self.router.tick();
                self.write_log(&records);
                let report = TickReport {
                    frame_no: self.router.frame_no() - 1,
                    deliveries: records.len(),
                };
                let _ = self.ticks.send(TickInfo {
                    frame_no: report.frame_no,
                    at: Instant::now(),
                });
                if let Some(r) = reply {
                    let _ = r.send(report);
                }
            }
            Cmd::Stats { reply } => {
                let _ = reply.send(self.router.stats());
            }
        }
    }

    fn on_packet(&mut self, conn: ConnId, flake: Flake) {
        let Some(c) = self.conns.get(&conn) else { return };
        let Some(name) = c.node.clone() else {
            self.on_register(conn, flake);
            return;
        };
        if flake.label == SYS_SYNC {
            let echo = self.router.control_flake(&flake.scope, SYS_SYNC, flake.payload);
            self.router.enqueue_control(&name, &echo);
            return;
        }
        if flake.label == SYS_REGISTER {
            let err = RelayError::BadRegistration("already registered".into());
            self.send_error(conn, &ErrorNotice::from(&err));
            return;
        }
        if let Err(e) = self.router.publish(&name, flake) {
            tracing::debug!(node = %name, error = %e, "publish rejected");
            self.send_error(conn, &ErrorNotice::from(&e));
        }
    }

    fn on_register(&mut self, conn: ConnId, flake: Flake) {
        let result = if flake.label != SYS_REGISTER || flake.class != DeliveryClass::Event {
            Err(RelayError::BadRegistration(format!(
                "first packet must be a {SYS_REGISTER} EVENT, got {:?}",
                flake.label
            )))
        } else {
            NodeRegistration::from_flake(&flake)
                .and_then(|reg| self.router.register(reg.clone(), &flake.scope).map(|_| reg))
        };
        match result {
            Ok(reg) => {
                tracing::info!(node = %reg.name, scope = %flake.scope, "node registered");
                let body = serde_json::to_string(&RegisterAck {
                    name: &reg.name,
                    frame_no: self.router.frame_no(),
                })
                .expect("ack serializes");
                let ack = self.router.control_flake(&flake.scope, SYS_ACK, Payload::Text(body));
                self.router.enqueue_control(&reg.name, &ack);
                if let Some(c) = self.conns.get_mut(&conn) {
                    c.node = Some(reg.name);
                }
            }
            Err(e) => {
                tracing::warn!(error = %e, "registration refused");
                self.send_error(conn, &ErrorNotice::from(&e));
                // Dropping the sender ends the writer, which closes the connection.
                self.conns.remove(&conn);
            }
        }
    }

    /// Errors bypass the outbound queue so they reach unregistered peers too.
    fn send_error(&mut self, conn: ConnId, notice: &ErrorNotice) {
        let Some(c) = self.conns.get(&conn) else { return };
        let scope = "relay";
        let body = serde_json::to_string(notice).expect("notice serializes");
        let f = self.router.control_flake(scope, SYS_ERROR, Payload::Text(body));
        let packet: Arc<[u8]> = encode_flake(&f).expect("control flakes encode").into();
        if c.tx.try_send(packet).is_err() {
            tracing::warn!(conn, "could not deliver error notice");
        }
    }

    fn has_backlog(&mut self) -> bool {
        let names: Vec<String> = self.conns.values().filter_map(|c| c.node.clone()).collect();
        names
            .iter()
            .any(|n| self.router.outbound_mut(n).is_some_and(|q| !q.is_empty()))
    }

    /// Moves queued packets into writer channels until they fill up.
    fn flush(&mut self) {
        for c in self.conns.values() {
            let Some(name) = &c.node else { continue };
            let Some(q) = self.router.outbound_mut(name) else {
                continue;
            };
            while let Some(item) = q.pop() {
                match c.tx.try_send(item.packet.clone()) {
                    Ok(()) => {}
                    Err(mpsc::error::TrySendError::Full(_)) => {
                        q.unpop(item);
                        break;
                    }
                    Err(mpsc::error::TrySendError::Closed(_)) => break,
                }
            }
        }
    }

    fn write_log(&mut self, records: &[DeliveryRecord]) {
        let Some(log) = self.log.as_mut() else { return };
        let result = records
            .iter()
            .try_for_each(|r| writeln!(log, "{r}"))
            .and_then(|_| log.flush());
        if let Err(e) = result {
            tracing::error!(error = %e, "delivery log write failed; disabling log");
            self.log = None;
        }
    }
}
