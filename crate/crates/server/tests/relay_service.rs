use std::net::SocketAddr;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use mirrorboard_core::relay::{tick_frame, ErrorNotice, NodeRegistration, NodeRole, SYS_ACK, SYS_ERROR, SYS_SYNC};
use mirrorboard_core::wire::{decode_flake, encode_flake, DeliveryClass, Flake, FrameBuffer, Payload};
use mirrorboard_server::{start_relay, RelayConfig, ServerError, TickMode};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;

const SCOPE: &str = "test";

struct Peer {
    name: String,
    stream: TcpStream,
    frames: FrameBuffer,
    ready: Vec<Flake>,
    seq: u32,
}

impl Peer {
    async fn connect(addr: SocketAddr, name: &str, roles: &[NodeRole], subs: &[&str]) -> Peer {
        let mut p = Peer {
            name: name.into(),
            stream: TcpStream::connect(addr).await.unwrap(),
            frames: FrameBuffer::new(),
            ready: Vec::new(),
            seq: 0,
        };
        let reg = NodeRegistration::new(name, roles, subs.iter().copied());
        p.send(&reg.to_flake(SCOPE)).await;
        p
    }

    async fn send(&mut self, f: &Flake) {
        self.stream.write_all(&encode_flake(f).unwrap()).await.unwrap();
    }

    async fn publish(&mut self, label: &str, class: DeliveryClass, payload: Payload) {
        self.seq += 1;
        let f = Flake::new(SCOPE, label, self.name.clone(), class, self.seq, payload);
        self.send(&f).await;
    }

    async fn recv(&mut self) -> Flake {
        loop {
            if !self.ready.is_empty() {
                return self.ready.remove(0);
            }
            let mut buf = [0u8; 4096];
            let n = tokio::time::timeout(Duration::from_secs(5), self.stream.read(&mut buf))
                .await
                .expect("timed out waiting for relay")
                .unwrap();
            assert!(n > 0, "relay closed the connection");
            for p in self.frames.push(&buf[..n]).unwrap() {
                self.ready.push(decode_flake(&p).unwrap());
            }
        }
    }

    async fn expect_ack(&mut self) {
        let f = self.recv().await;
        assert_eq!(f.label, SYS_ACK, "{f:?}");
    }

    /// Round trip through the router: everything sent before is processed.
    async fn sync(&mut self) {
        self.publish(SYS_SYNC, DeliveryClass::Event, Payload::Bytes(vec![1]))
            .await;
        loop {
            let f = self.recv().await;
            if f.label == SYS_SYNC {
                return;
            }
            self.ready.push(f);
        }
    }

    /// Flakes delivered up to and including tick `frame`.
    async fn until_tick(&mut self, frame: u64) -> Vec<Flake> {
        let mut out = Vec::new();
        loop {
            let f = self.recv().await;
            match tick_frame(&f) {
                Some(k) if k == frame => return out,
                Some(_) => {}
                None => out.push(f),
            }
        }
    }
}

fn error_code(f: &Flake) -> String {
    assert_eq!(f.label, SYS_ERROR);
    let Payload::Text(t) = &f.payload else {
        panic!("error body is not text")
    };
    serde_json::from_str::<ErrorNotice>(t).unwrap().code
}

use NodeRole::{Emitter, Sink};

#[tokio::test]
async fn registration_errors() {
    let relay = start_relay(RelayConfig::local_manual()).await.unwrap();
    let addr = relay.tcp_addr();
    let mut p = Peer::connect(addr, "P", &[Emitter, Sink], &["render", "pose.*"]).await;
    p.expect_ack().await;
    let mut dup = Peer::connect(addr, "P", &[Sink], &["render"]).await;
    assert_eq!(error_code(&dup.recv().await), "DuplicateName");
    let mut empty = Peer::connect(addr, "Q", &[], &["render"]).await;
    assert_eq!(error_code(&empty.recv().await), "EmptyRoles");

    let mut sink = Peer::connect(addr, "S", &[Sink], &["render"]).await;
    sink.expect_ack().await;
    sink.publish("render", DeliveryClass::Event, Payload::Bytes(vec![0]))
        .await;
    assert_eq!(error_code(&sink.recv().await), "RoleViolation");

    let spoof = Flake::new(SCOPE, "render", "X", DeliveryClass::Event, 9, Payload::Bytes(vec![]));
    p.send(&spoof).await;
    assert_eq!(error_code(&p.recv().await), "OriginSpoof");
    relay.shutdown().await;
}

#[tokio::test]
async fn coalescing_events_and_echo() {
    let relay = start_relay(RelayConfig::local_manual()).await.unwrap();
    let addr = relay.tcp_addr();
    let mut e = Peer::connect(addr, "E", &[Emitter, Sink], &["render", "pose.*"]).await;
    let mut s1 = Peer::connect(addr, "S1", &[Sink], &["render"]).await;
    let mut s2 = Peer::connect(addr, "S2", &[Sink], &["pose.*"]).await;
    for p in [&mut e, &mut s1, &mut s2] {
        p.expect_ack().await;
    }
    e.publish("pose.E", DeliveryClass::State, Payload::Ints(vec![1])).await;
    e.publish("pose.E", DeliveryClass::State, Payload::Ints(vec![2])).await;
    e.publish("render", DeliveryClass::Event, Payload::Ints(vec![10])).await;
    e.publish("render", DeliveryClass::Event, Payload::Ints(vec![11])).await;
    e.publish("chat", DeliveryClass::Event, Payload::Ints(vec![12])).await;
    e.sync().await;
    let report = relay.tick().await.unwrap();
    assert_eq!(report.frame_no, 0);

    let got1 = s1.until_tick(0).await;
    assert_eq!(
        got1.iter().map(|f| f.payload.clone()).collect::<Vec<_>>(),
        vec![Payload::Ints(vec![10]), Payload::Ints(vec![11])]
    );
    let got2 = s2.until_tick(0).await;
    assert_eq!(got2.len(), 1);
    assert_eq!(got2[0].payload, Payload::Ints(vec![2]));
    assert!(e.until_tick(0).await.is_empty(), "no self-echo");
    assert_eq!(relay.stats().await.unwrap().delivered, 3);
    relay.shutdown().await;
}

#[tokio::test]
async fn ticks_at_sixty_hertz() {
    let mut cfg = RelayConfig::local_manual();
    cfg.tick = TickMode::Periodic { hz: 60.0 };
    let relay = start_relay(cfg).await.unwrap();
    let mut ticks = relay.subscribe_ticks();
    let first = ticks.recv().await.unwrap();
    let mut last = first;
    while last.at.duration_since(first.at) < Duration::from_secs(5) {
        last = ticks.recv().await.unwrap();
    }
    let n = (last.frame_no - first.frame_no) as f64;
    let mean_ms = last.at.duration_since(first.at).as_secs_f64() * 1000.0 / n;
    assert!((mean_ms - 1000.0 / 60.0).abs() < 1.0, "mean tick interval {mean_ms} ms");
    relay.shutdown().await;
}

#[tokio::test]
async fn one_relay_per_port() {
    let relay = start_relay(RelayConfig::local_manual()).await.unwrap();
    let mut cfg = RelayConfig::local_manual();
    cfg.tcp_addr = relay.tcp_addr();
    match start_relay(cfg).await {
        Err(ServerError::SingleRelayViolation(p)) => assert_eq!(p, relay.tcp_addr().port()),
        other => panic!("expected SingleRelayViolation, got {:?}", other.map(|h| h.tcp_addr())),
    }
    // A port held by something other than a relay is reported as in use.
    let foreign = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let mut cfg = RelayConfig::local_manual();
    cfg.tcp_addr = foreign.local_addr().unwrap();
    assert!(matches!(start_relay(cfg).await, Err(ServerError::AddressInUse(_))));
    let port = relay.tcp_addr();
    relay.shutdown().await;
    // the port is released on shutdown
    let mut cfg = RelayConfig::local_manual();
    cfg.tcp_addr = port;
    start_relay(cfg).await.unwrap().shutdown().await;
}

#[tokio::test]
async fn websocket_speaks_the_same_packets() {
    let relay = start_relay(RelayConfig::local_manual()).await.unwrap();
    let url = format!("ws://{}/ws", relay.ws_addr().unwrap());
    let (mut ws, _) = tokio_tungstenite::connect_async(url).await.unwrap();
    let reg = NodeRegistration::new("W", &[Emitter, Sink], ["render"]);
    ws.send(Message::Binary(encode_flake(&reg.to_flake(SCOPE)).unwrap().into()))
        .await
        .unwrap();
    let next = |m: Option<Result<Message, _>>| -> Flake {
        match m {
            Some(Ok(Message::Binary(b))) => decode_flake(&b).unwrap(),
            other => panic!("unexpected {other:?}"),
        }
    };
    assert_eq!(next(ws.next().await).label, SYS_ACK);

    let mut e = Peer::connect(relay.tcp_addr(), "E", &[Emitter, Sink], &["pose.*"]).await;
    e.expect_ack().await;
    e.publish("render", DeliveryClass::Event, Payload::Text("hello".into()))
        .await;
    let pose = Flake::new(
        SCOPE,
        "pose.W",
        "W",
        DeliveryClass::State,
        1,
        Payload::Vec3(vec![[0.0; 3]; 4]),
    );
    ws.send(Message::Binary(encode_flake(&pose).unwrap().into()))
        .await
        .unwrap();
    e.sync().await;
    // the ws node's publish is only known to be routed once it has been processed
    ws.send(Message::Binary(
        encode_flake(&Flake::new(
            SCOPE,
            SYS_SYNC,
            "W",
            DeliveryClass::Event,
            2,
            Payload::Bytes(vec![]),
        ))
        .unwrap()
        .into(),
    ))
    .await
    .unwrap();
    assert_eq!(next(ws.next().await).label, SYS_SYNC);
    relay.tick().await.unwrap();

    let f = next(ws.next().await);
    assert_eq!(
        (f.label.as_str(), &f.payload),
        ("render", &Payload::Text("hello".into()))
    );
    assert_eq!(tick_frame(&next(ws.next().await)), Some(0));
    let got = e.until_tick(0).await;
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].label, "pose.W");

    ws.send(Message::Text("nope".into())).await.unwrap();
    assert_eq!(error_code(&next(ws.next().await)), "MalformedPacket");
    relay.shutdown().await;
}

#[tokio::test]
async fn delivery_log_lists_every_delivery() {
    let dir = std::env::temp_dir().join(format!("relay-log-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("relay.log");
    let mut cfg = RelayConfig::local_manual();
    cfg.log_path = Some(path.clone());
    let relay = start_relay(cfg).await.unwrap();
    let mut e = Peer::connect(relay.tcp_addr(), "E", &[Emitter], &[]).await;
    let mut s = Peer::connect(relay.tcp_addr(), "S", &[Sink], &["render"]).await;
    e.expect_ack().await;
    s.expect_ack().await;
    e.publish("render", DeliveryClass::Event, Payload::Ints(vec![])).await;
    e.sync().await;
    relay.tick().await.unwrap();
    s.until_tick(0).await;
    relay.shutdown().await;
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "0 S EVENT render E 1\n");
    std::fs::remove_dir_all(dir).unwrap();
}
