use std::fs;
use std::process::Command;

fn mirrorboard() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mirrorboard"))
}

#[test]
fn lesson_prints_the_script() {
    let out = mirrorboard().arg("lesson").output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["duration_ms"], 600_000);
}

#[test]
fn run_replay_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.json");
    fs::write(
        &scenario,
        r#"{"seed": 5, "participants": [
            {"name": "P", "role": "presenter"},
            {"name": "A1", "role": "audience", "view": "projected"},
            {"name": "A2", "role": "audience"}]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let run = mirrorboard()
        .args(["run", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}");
    assert!(stdout.contains("PASS conservation"));
    assert!(!stdout.contains("FAIL"));

    let replay = mirrorboard().arg("replay").arg(&out_dir).output().unwrap();
    assert!(replay.status.success());
    assert_eq!(replay.stdout, fs::read(out_dir.join("metrics.json")).unwrap());

    let metrics = dir.path().join("m.json");
    let analyze = mirrorboard()
        .args(["analyze", "--log"])
        .arg(out_dir.join("gaze.jsonl"))
        .args(["--cone", "10", "--min-contact", "100", "--out"])
        .arg(&metrics)
        .output()
        .unwrap();
    assert!(analyze.status.success());
    assert_eq!(
        fs::read(&metrics).unwrap(),
        fs::read(out_dir.join("metrics.json")).unwrap()
    );

    let wide = mirrorboard()
        .args(["analyze", "--cone", "30", "--log"])
        .arg(out_dir.join("gaze.jsonl"))
        .output()
        .unwrap();
    assert!(wide.status.success());
    assert_ne!(wide.stdout, fs::read(out_dir.join("metrics.json")).unwrap());

    fs::write(
        out_dir.join("metrics.json"),
        "{\"duration_ms\":1,\"eye_contact_events\":0,\"users\":{}}",
    )
    .unwrap();
    let tampered = mirrorboard().arg("replay").arg(&out_dir).output().unwrap();
    assert_eq!(tampered.status.code(), Some(1));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let missing = mirrorboard().arg("replay").arg(dir.path()).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing artifact"));

    let scenario = dir.path().join("two.json");
    fs::write(
        &scenario,
        r#"{"seed": 1, "participants": [{"name": "P", "role": "presenter"}, {"name": "Q", "role": "presenter"}]}"#,
    )
    .unwrap();
    let bad = mirrorboard()
        .args(["run", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("exactly one presenter"));
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

struct Kill(std::process::Child);

impl Drop for Kill {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn behave_against_a_manual_relay() {
    let (port, ws) = (free_port(), free_port());
    let _relay = Kill(
        mirrorboard()
            .args(["relay", "--host", "127.0.0.1", "--manual"])
            .args(["--port", &port.to_string(), "--ws-port", &ws.to_string()])
            .spawn()
            .unwrap(),
    );
    let api = format!("http://127.0.0.1:{ws}");
    let up = (0..100).any(|_| {
        std::thread::sleep(std::time::Duration::from_millis(50));
        mirrorboard()
            .args(["stats", "--api", &api])
            .output()
            .unwrap()
            .status
            .success()
    });
    assert!(up, "relay did not come up");

    // 600 s of script at 600x is one second: 60 ticks plus one past the end.
    let behave = mirrorboard()
        .args(["behave", "--relay", &format!("127.0.0.1:{port}"), "--time-scale", "600"])
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let registered = (0..100).any(|_| {
        std::thread::sleep(std::time::Duration::from_millis(50));
        let out = mirrorboard().args(["stats", "--api", &api]).output().unwrap();
        String::from_utf8_lossy(&out.stdout).contains("behavior")
    });
    assert!(registered);
    for _ in 0..70 {
        let t = mirrorboard().args(["tick", "--api", &api]).output().unwrap();
        assert!(t.status.success());
    }
    let out = behave.wait_with_output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("deictic \"this\" -> sketch 2"), "{text}");

    let stats = mirrorboard().args(["stats", "--api", &api]).output().unwrap();
    let v: serde_json::Value = serde_json::from_slice(&stats.stdout).unwrap();
    assert_eq!(v["frame_no"], 70);
    assert!(v["accepted"].as_u64().unwrap() > 0);
}
