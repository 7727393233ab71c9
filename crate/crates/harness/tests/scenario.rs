use std::fs;
use std::path::Path;

use mirrorboard_core::board::ViewMode;
use mirrorboard_harness::{replay, run_scenario, HarnessError, ScenarioConfig, ARTIFACTS};

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn lesson_runs_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::lesson(42, 2);
    let out = run_scenario(&cfg, dir.path()).await.unwrap();
    for c in &out.report.checks {
        println!("{} {} {}", c.name, c.pass, c.detail);
    }
    assert!(out.report.pass);
    for a in ARTIFACTS {
        assert!(dir.path().join(a).is_file(), "{a}");
    }
    assert!(out.report.inputs == 1);
    let names: Vec<_> = out.report.checks.iter().map(|c| c.name.as_str()).collect();
    assert!(names.contains(&"pan_retention"));
    let proj = out
        .report
        .clients
        .iter()
        .find(|c| c.view == ViewMode::Projected)
        .unwrap();
    let mr = out.report.clients.iter().find(|c| c.view == ViewMode::Mr).unwrap();
    assert!(proj.pan.unwrap().after < mr.pan.unwrap().after);

    // The presenter's stroke reaches every client within two ticks of being drawn.
    let stroke_tick = (0..).find(|k| cfg.frame_time(*k) >= 30_000 * 2 / 5).unwrap();
    for c in ["P", "A1", "A2"] {
        let log = fs::read_to_string(dir.path().join(format!("{c}.commands.log"))).unwrap();
        let line = log.lines().find(|l| l.contains("CreateSketch { id: 1000000")).unwrap();
        let tick: u64 = line.split(' ').next().unwrap().parse().unwrap();
        assert!(
            tick >= stroke_tick && tick <= stroke_tick + 2,
            "{c}: stroke drawn at {stroke_tick}, shown at {tick}"
        );
    }

    let r = replay(dir.path()).unwrap();
    assert!(r.matches);
    assert_eq!(r, replay(dir.path()).unwrap());

    // Tampering with the log changes the metrics.
    let log = fs::read_to_string(dir.path().join("gaze.jsonl")).unwrap();
    let first_sample = log.lines().position(|l| l.contains(r#""type":"sample""#)).unwrap();
    let kept: Vec<&str> = log
        .lines()
        .enumerate()
        .filter(|(i, _)| *i != first_sample + 40)
        .map(|(_, l)| l)
        .collect();
    fs::write(dir.path().join("gaze.jsonl"), kept.join("\n") + "\n").unwrap();
    assert!(!replay(dir.path()).unwrap().matches);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::lesson(7, 2);
    run_scenario(&cfg, a.path()).await.unwrap();
    run_scenario(&cfg, b.path()).await.unwrap();
    let (fa, fb) = (read_all(a.path()), read_all(b.path()));
    assert_eq!(fa.len(), fb.len());
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn zero_audience_has_no_eye_contact() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_scenario(&ScenarioConfig::lesson(3, 0), dir.path()).await.unwrap();
    assert!(out.report.pass);
    assert_eq!(out.metrics.eye_contact_events, 0);
}

#[tokio::test]
async fn replay_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(replay(dir.path()), Err(HarnessError::MissingArtifact(_))));
    fs::write(dir.path().join("gaze.jsonl"), "{\"type\":\"bogus\"}\n").unwrap();
    fs::write(dir.path().join("metrics.json"), "{}").unwrap();
    assert!(matches!(replay(dir.path()), Err(HarnessError::SchemaMismatch { .. })));
}

#[tokio::test]
async fn bad_script_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("bad.json");
    fs::write(&script, "{not json").unwrap();
    let mut cfg = ScenarioConfig::lesson(1, 1);
    cfg.script = script.to_string_lossy().into_owned();
    let err = run_scenario(&cfg, &dir.path().join("out")).await.unwrap_err();
    assert!(matches!(err, HarnessError::ScriptParse(_)));
}

#[tokio::test]
async fn occupied_port_is_reported() {
    let blocker = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::lesson(1, 1);
    cfg.relay_port = blocker.local_addr().unwrap().port();
    let err = run_scenario(&cfg, dir.path()).await.unwrap_err();
    assert!(matches!(err, HarnessError::PortInUse(_)), "{err}");
}
