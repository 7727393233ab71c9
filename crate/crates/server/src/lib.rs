//! The relay service. One process-wide router task; framed TCP and WebSocket
//! connection handlers feed it packets; a tick loop (or manual ticks) flushes
//! deliveries. The WebSocket endpoint shares its HTTP server with a small
//! JSON API.

mod http;
mod router_task;
mod tcp;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use mirrorboard_core::relay::RelayStats;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::task::JoinHandle;

use router_task::{Cmd, RouterTask};
pub use router_task::{TickInfo, TickReport};

pub const DEFAULT_TCP_PORT: u16 = 9090;
pub const DEFAULT_WS_PORT: u16 = 9091;
pub const DEFAULT_TICK_HZ: f64 = 60.0;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("address {0} already in use")]
    AddressInUse(SocketAddr),
    #[error("a relay is already running on port {0} in this process")]
    SingleRelayViolation(u16),
    #[error("tick rate must be positive and finite, got {0}")]
    BadTickRate(f64),
    #[error("relay has stopped")]
    Stopped,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TickMode {
    Periodic {
        hz: f64,
    },
    /// Ticks only on [`RelayHandle::tick`] or `POST /api/tick`.
    Manual,
}

#[derive(Debug, Clone)]
pub struct RelayConfig {
    pub tcp_addr: SocketAddr,
    /// WebSocket and HTTP API; `None` disables both.
    pub ws_addr: Option<SocketAddr>,
    pub tick: TickMode,
    /// Delivery log, one line per routed flake.
    pub log_path: Option<PathBuf>,
}

impl Default for RelayConfig {
    fn default() -> Self {
        RelayConfig {
            tcp_addr: SocketAddr::from(([0, 0, 0, 0], DEFAULT_TCP_PORT)),
            ws_addr: Some(SocketAddr::from(([0, 0, 0, 0], DEFAULT_WS_PORT))),
            tick: TickMode::Periodic { hz: DEFAULT_TICK_HZ },
            log_path: None,
        }
    }
}

impl RelayConfig {
    /// Loopback, ephemeral ports, manual ticks.
    pub fn local_manual() -> Self {
        RelayConfig {
            tcp_addr: SocketAddr::from(([127, 0, 0, 1], 0)),
            ws_addr: Some(SocketAddr::from(([127, 0, 0, 1], 0))),
            tick: TickMode::Manual,
            log_path: None,
        }
    }
}

/// Ports held by relays in this process.
static BOUND_PORTS: Mutex<BTreeSet<u16>> = Mutex::new(BTreeSet::new());

struct PortGuard(Vec<u16>);

impl PortGuard {
    fn claim(&mut self, port: u16) -> Result<(), ServerError> {
        if port == 0 {
            return Ok(());
        }
        let mut held = BOUND_PORTS.lock().expect("port registry poisoned");
        if !held.insert(port) {
            return Err(ServerError::SingleRelayViolation(port));
        }
        self.0.push(port);
        Ok(())
    }
}

impl Drop for PortGuard {
    fn drop(&mut self) {
        if let Ok(mut held) = BOUND_PORTS.lock() {
            for p in &self.0 {
                held.remove(p);
            }
        }
    }
}

async fn bind(addr: SocketAddr, guard: &mut PortGuard) -> Result<TcpListener, ServerError> {
    guard.claim(addr.port())?;
    let listener = TcpListener::bind(addr).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => ServerError::AddressInUse(addr),
        _ => ServerError::Io(e),
    })?;
    if addr.port() == 0 {
        guard.claim(listener.local_addr()?.port())?;
    }
    Ok(listener)
}

pub struct RelayHandle {
    tcp_addr: SocketAddr,
    ws_addr: Option<SocketAddr>,
    mode: TickMode,
    cmds: mpsc::Sender<Cmd>,
    ticks: broadcast::Sender<TickInfo>,
    stop: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
    router: Option<JoinHandle<()>>,
    _ports: PortGuard,
}

/// Binds both endpoints and starts the router, acceptors and tick loop.
pub async fn start_relay(cfg: RelayConfig) -> Result<RelayHandle, ServerError> {
    if let TickMode::Periodic { hz } = cfg.tick {
        if !(hz.is_finite() && hz > 0.0) {
            return Err(ServerError::BadTickRate(hz));
        }
    }
    let mut ports = PortGuard(Vec::new());
    let tcp = bind(cfg.tcp_addr, &mut ports).await?;
    let tcp_addr = tcp.local_addr()?;
    let ws = match cfg.ws_addr {
        Some(a) => Some(bind(a, &mut ports).await?),
        None => None,
    };
    let ws_addr = ws.as_ref().map(|l| l.local_addr()).transpose()?;

    let log: Option<Box<dyn Write + Send>> = match &cfg.log_path {
        Some(p) => Some(Box::new(BufWriter::new(File::create(p)?))),
        None => None,
    };
    let (cmd_tx, cmd_rx) = mpsc::channel(4096);
    let (tick_tx, _) = broadcast::channel(1024);
    let (stop_tx, stop_rx) = watch::channel(false);

    let router = tokio::spawn(RouterTask::new(log, tick_tx.clone()).run(cmd_rx));
    let mut tasks = vec![tokio::spawn(tcp::accept_loop(tcp, cmd_tx.clone(), stop_rx.clone()))];
    if let Some(listener) = ws {
        let app = http::app(http::AppState {
            cmds: cmd_tx.clone(),
            manual: cfg.tick == TickMode::Manual,
        });
        let mut stop = stop_rx.clone();
        tasks.push(tokio::spawn(async move {
            let shutdown = async move {
                let _ = stop.changed().await;
            };
            if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
                tracing::error!(error = %e, "http server failed");
            }
        }));
    }
    if let TickMode::Periodic { hz } = cfg.tick {
        tasks.push(tokio::spawn(tick_loop(hz, cmd_tx.clone(), stop_rx)));
    }
    tracing::info!(%tcp_addr, ?ws_addr, mode = ?cfg.tick, "relay listening");
    Ok(RelayHandle {
        tcp_addr,
        ws_addr,
        mode: cfg.tick,
        cmds: cmd_tx,
        ticks: tick_tx,
        stop: stop_tx,
        tasks,
        router: Some(router),
        _ports: ports,
    })
}

async fn tick_loop(hz: f64, cmds: mpsc::Sender<Cmd>, mut stop: watch::Receiver<bool>) {
    let mut every = tokio::time::interval(Duration::from_secs_f64(1.0 / hz));
    loop {
        tokio::select! {
            _ = stop.changed() => break,
            _ = every.tick() => {
                if cmds.send(Cmd::Tick { reply: None }).await.is_err() {
                    break;
                }
            }
        }
    }
}

impl RelayHandle {
    pub fn tcp_addr(&self) -> SocketAddr {
        self.tcp_addr
    }

    pub fn ws_addr(&self) -> Option<SocketAddr> {
        self.ws_addr
    }

    pub fn mode(&self) -> TickMode {
        self.mode
    }

    /// Runs one tick now and waits until its deliveries are queued.
    pub async fn tick(&self) -> Result<TickReport, ServerError> {
        let (tx, rx) = oneshot::channel();
        self.cmds
            .send(Cmd::Tick { reply: Some(tx) })
            .await
            .map_err(|_| ServerError::Stopped)?;
        rx.await.map_err(|_| ServerError::Stopped)
    }

    pub async fn stats(&self) -> Result<RelayStats, ServerError> {
        let (tx, rx) = oneshot::channel();
        self.cmds
            .send(Cmd::Stats { reply: tx })
            .await
            .map_err(|_| ServerError::Stopped)?;
        rx.await.map_err(|_| ServerError::Stopped)
    }

    pub fn subscribe_ticks(&self) -> broadcast::Receiver<TickInfo> {
        self.ticks.subscribe()
    }

    /// Stops accepting, closes connections, flushes the delivery log.
    pub async fn shutdown(mut self) {
        let _ = self.stop.send(true);
        for t in self.tasks.drain(..) {
            let _ = t.await;
        }
        // Connection handlers hold command senders; the router ends once
        // they and this handle are gone.
        let router = self.router.take();
        drop(self);
        if let Some(r) = router {
            let _ = tokio::time::timeout(Duration::from_secs(5), r).await;
        }
    }
}
