use mirrorboard_client::{ApiClient, ClientError, RelayClient};
use mirrorboard_core::gaze::{write_log, AnalysisConfig, GazeSample, LogHeader, LogRecord, LOG_VERSION};
use mirrorboard_core::relay::{NodeRegistration, NodeRole};
use mirrorboard_core::session::{AvatarPose, BoardPlane, Role, SessionConfig};
use mirrorboard_core::wire::Payload;
use mirrorboard_core::Vec3;
use mirrorboard_server::{start_relay, RelayConfig};

#[tokio::test]
async fn node_round_trip() {
    let relay = start_relay(RelayConfig::local_manual()).await.unwrap();
    let addr = relay.tcp_addr();
    let mut e = RelayClient::connect(
        addr,
        "s",
        NodeRegistration::new("E", &[NodeRole::Emitter], Vec::<String>::new()),
    )
    .await
    .unwrap();
    let mut s = RelayClient::connect(addr, "s", NodeRegistration::new("S", &[NodeRole::Sink], ["pose.*"]))
        .await
        .unwrap();
    let refused = RelayClient::connect(addr, "s", NodeRegistration::new("S", &[NodeRole::Sink], ["x"])).await;
    assert!(matches!(refused, Err(ClientError::Refused(n)) if n.code == "DuplicateName"));

    for k in 0..3u64 {
        e.publish_state("pose.E", Payload::Ints(vec![k as i32])).await.unwrap();
        e.publish_state("pose.E", Payload::Ints(vec![k as i32 + 100]))
            .await
            .unwrap();
        e.sync().await.unwrap();
        relay.tick().await.unwrap();
        let got = s.until_tick(k).await.unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].payload, Payload::Ints(vec![k as i32 + 100]));
    }
    e.publish_event("pose.E", Payload::Ints(vec![])).await.unwrap();
    e.sync().await.unwrap();
    assert!(e.errors().is_empty());
    relay.shutdown().await;
}

#[tokio::test]
async fn http_api() {
    let relay = start_relay(RelayConfig::local_manual()).await.unwrap();
    let api = ApiClient::new(format!("http://{}", relay.ws_addr().unwrap()));
    assert!(api.health().await.unwrap());
    assert_eq!(api.tick().await.unwrap().frame_no, 0);
    assert_eq!(api.tick().await.unwrap().frame_no, 1);
    assert_eq!(api.stats().await.unwrap().frame_no, 2);

    let pose = AvatarPose {
        user: "A".into(),
        t: 3,
        position: Vec3::new(0.0, 1.6, 1.0),
        forward: -Vec3::Z,
        up: Vec3::Y,
        gaze_origin: Vec3::new(0.0, 1.6, 1.0),
        gaze_dir: -Vec3::Z,
    };
    let m = api.mirror(&pose, &BoardPlane::default()).await.unwrap();
    assert_eq!(m.position, Vec3::new(0.0, 1.6, -1.0));
    assert_eq!(m.gaze_dir, Vec3::Z);

    let session = SessionConfig {
        board: BoardPlane::default(),
        roles: [
            ("P".to_string(), Role::Presenter),
            ("A".into(), Role::Audience),
            ("B".into(), Role::Audience),
        ]
        .into(),
        open_join: false,
    };
    assert_eq!(api.visible(&session, "A").await.unwrap(), ["P".to_string()].into());
    assert_eq!(api.visible(&session, "P").await.unwrap().len(), 2);
    assert!(api.visible(&session, "Z").await.is_err());

    let header = LogHeader {
        version: LOG_VERSION,
        board: BoardPlane::default(),
        roles: session.roles.clone(),
        duration_ms: 1000,
        analysis: AnalysisConfig::default(),
    };
    let mut recs = vec![LogRecord::Header(header)];
    for t in [0u64, 100, 200] {
        for u in ["P", "A"] {
            recs.push(LogRecord::Sample(GazeSample {
                user: u.into(),
                t,
                gaze_origin: Vec3::new(0.0, 1.6, 1.0),
                gaze_dir: -Vec3::Z,
            }));
        }
    }
    let mut text = Vec::new();
    write_log(&mut text, &recs).unwrap();
    let metrics = api
        .analyze(String::from_utf8(text).unwrap(), Some(10.0), Some(100))
        .await
        .unwrap();
    assert_eq!(metrics.eye_contact_events, 1);
    assert_eq!(metrics.users["A"].samples, 3);
    relay.shutdown().await;
}
