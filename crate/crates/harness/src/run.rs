use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use mirrorboard_core::behavior::{BehaviorEngine, LectureScript};
use mirrorboard_core::board::ViewMode;
use mirrorboard_core::gaze::{analyze, write_log, LogHeader, LogRecord, Metrics, LOG_VERSION};
use mirrorboard_core::relay::RelayStats;
use mirrorboard_core::session::{Role, SessionState};
use mirrorboard_server::{start_relay, RelayConfig, RelayHandle, ServerError, TickMode};
use serde::Serialize;

use crate::nodes::{
    expected_star, run_phase, BehaviorNode, ClientNode, Node, NodeTask, PanCounts, Phase, RecorderNode,
};
use crate::scenario::{ParticipantKind, ScenarioConfig, Trajectories};
use crate::HarnessError;

pub type PanObservation = PanCounts;

/// Files every run writes, besides the per-client `<name>.board.txt` and
/// `<name>.commands.log`.
pub const ARTIFACTS: &[&str] = &[
    "scenario.json",
    "gaze.jsonl",
    "metrics.json",
    "relay.log",
    "report.json",
];

/// Script time that keeps ticking after the last action, ms.
const TAIL_MS: u64 = 500;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientReport {
    pub name: String,
    pub role: Role,
    pub view: ViewMode,
    pub render_commands: usize,
    pub frames: u64,
    /// Items visible at the end, in the client's own view mode.
    pub visible_items: usize,
    pub visible_projected: usize,
    pub visible_mr: usize,
    pub pan: Option<PanObservation>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub seed: u64,
    pub ticks: u64,
    pub duration_ms: u64,
    pub render_events: usize,
    pub annotations: usize,
    pub inputs: usize,
    pub samples: usize,
    pub eye_contact_events: u64,
    pub relay: RelayStats,
    pub clients: Vec<ClientReport>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub metrics: Metrics,
    /// Final board snapshot per scripted client.
    pub snapshots: BTreeMap<String, String>,
}

pub(crate) fn metrics_bytes(m: &Metrics) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(m).expect("metrics serialize");
    b.push(b'\n');
    b
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("artifact serializes");
    b.push(b'\n');
    b
}

/// Runs the whole session and writes its artifacts into `out`.
pub async fn run_scenario(cfg: &ScenarioConfig, out: &Path) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let script = cfg.load_script()?;
    let engine = BehaviorEngine::new(&script).map_err(|e| HarnessError::ScriptParse(e.to_string()))?;
    fs::create_dir_all(out)?;
    let relay = start_relay(RelayConfig {
        tcp_addr: SocketAddr::from(([127, 0, 0, 1], cfg.relay_port)),
        ws_addr: None,
        tick: TickMode::Manual,
        log_path: Some(out.join("relay.log")),
    })
    .await
    .map_err(|e| match e {
        ServerError::AddressInUse(_) | ServerError::SingleRelayViolation(_) => HarnessError::PortInUse(e),
        other => HarnessError::Relay(other),
    })?;
    let driven = drive(cfg, &script, engine, &relay).await;
    let stats = relay.stats().await;
    relay.shutdown().await;
    let (nodes, ticks) = driven?;
    let stats = stats?;
    finish(cfg, nodes, ticks, stats, out)
}

struct Nodes {
    behavior: BehaviorNode,
    recorder: RecorderNode,
    clients: Vec<ClientNode>,
}

fn tick_count(cfg: &ScenarioConfig, script: &LectureScript) -> u64 {
    let end = script.duration_ms + TAIL_MS;
    let mut k = 0;
    while cfg.frame_time(k) <= end {
        k += 1;
    }
    k
}

async fn drive(
    cfg: &ScenarioConfig,
    script: &LectureScript,
    engine: BehaviorEngine,
    relay: &RelayHandle,
) -> Result<(Nodes, u64), HarnessError> {
    let addr = relay.tcp_addr();
    let ticks = tick_count(cfg, script);
    let traj = Arc::new(Trajectories::generate(cfg, cfg.frame_time(ticks)));
    let session = cfg.session_config();
    let roles = cfg.roles();
    // The presenter draws once, a little before the midpoint.
    let stroke_at = script.duration_ms * 2 / 5;
    let stroke_tick = (0..ticks).find(|k| cfg.frame_time(*k) >= stroke_at);

    let mut tasks = vec![
        NodeTask::spawn(Node::Behavior(Box::new(
            BehaviorNode::connect(addr, &cfg.scope, engine).await?,
        ))),
        NodeTask::spawn(Node::Recorder(Box::new(RecorderNode::connect(addr, &cfg.scope).await?))),
    ];
    for p in cfg.participants.iter().filter(|p| p.kind == ParticipantKind::Scripted) {
        let node = ClientNode::connect(
            addr,
            &cfg.scope,
            p.clone(),
            &session,
            traj.clone(),
            cfg.pose_every(),
            stroke_tick.filter(|_| p.role == Role::Presenter),
            expected_star(&p.name, &roles),
        )
        .await?;
        tasks.push(NodeTask::spawn(Node::Client(Box::new(node))));
    }

    let mut result = Ok(());
    for k in 0..ticks {
        let t = cfg.frame_time(k);
        result = run_phase(&tasks, Phase::Publish { k, t }).await;
        if result.is_err() {
            break;
        }
        relay.tick().await?;
        result = run_phase(&tasks, Phase::Collect { k, t }).await;
        if result.is_err() {
            break;
        }
    }
    let mut behavior = None;
    let mut recorder = None;
    let mut clients = Vec::new();
    for t in tasks {
        match t.finish().await? {
            Node::Behavior(b) => behavior = Some(*b),
            Node::Recorder(r) => recorder = Some(*r),
            Node::Client(c) => clients.push(*c),
        }
    }
    result?;
    Ok((
        Nodes {
            behavior: behavior.expect("behavior node spawned"),
            recorder: recorder.expect("recorder node spawned"),
            clients,
        },
        ticks,
    ))
}

fn finish(
    cfg: &ScenarioConfig,
    nodes: Nodes,
    ticks: u64,
    relay: RelayStats,
    out: &Path,
) -> Result<RunOutput, HarnessError> {
    let Nodes {
        behavior,
        recorder,
        clients,
    } = nodes;
    let duration_ms = cfg.frame_time(ticks - 1);

    let mut samples = recorder.samples.clone();
    samples.sort_by(|a, b| (a.t, &a.user).cmp(&(b.t, &b.user)));
    let session = SessionState::from_config(&cfg.session_config())?;
    let analysis = analyze(&samples, &session, duration_ms, &cfg.analysis)?;

    let mut records = vec![LogRecord::Header(LogHeader {
        version: LOG_VERSION,
        board: cfg.board.clone(),
        roles: cfg.roles(),
        duration_ms,
        analysis: cfg.analysis.clone(),
    })];
    records.extend(samples.iter().cloned().map(LogRecord::Sample));
    records.extend(recorder.annotations.iter().map(|a| LogRecord::Annotation {
        t: a.t_ms,
        kind: a.kind.clone(),
        text: a.text.clone(),
        sketch: a.sketch,
    }));
    records.extend(analysis.intervals.iter().cloned().map(LogRecord::Interval));
    records.extend(analysis.events.iter().cloned().map(LogRecord::Event));
    let mut gaze = Vec::new();
    write_log(&mut gaze, &records)?;

    let mut checks = Vec::new();
    let conservation: Vec<String> = clients
        .iter()
        .filter(|c| c.render_seqs != behavior.render_seqs)
        .map(|c| {
            format!(
                "{} received {} of {} render events",
                c.spec.name,
                c.render_seqs.len(),
                behavior.render_seqs.len()
            )
        })
        .collect();
    checks.push(Check::new(
        "conservation",
        conservation.is_empty(),
        if conservation.is_empty() {
            format!(
                "{} render events delivered once, in order, to {} clients",
                behavior.render_seqs.len(),
                clients.len()
            )
        } else {
            conservation.join("; ")
        },
    ));

    let mr: Vec<&ClientNode> = clients.iter().filter(|c| c.spec.view == ViewMode::Mr).collect();
    let consistent = mr.windows(2).all(|w| w[0].board.snapshot() == w[1].board.snapshot());
    checks.push(Check::new(
        "mr_snapshots_identical",
        consistent,
        format!("{} MR clients", mr.len()),
    ));

    let violations: Vec<&String> = clients.iter().flat_map(|c| &c.star_violations).collect();
    let all_checked = clients.iter().all(|c| c.star_checks == ticks);
    checks.push(Check::new(
        "star_visibility",
        violations.is_empty() && all_checked,
        match violations.first() {
            Some(v) => format!("{} violations, first: {v}", violations.len()),
            None => format!("{} clients x {ticks} frames", clients.len()),
        },
    ));

    let errors: Vec<&String> = clients.iter().flat_map(|c| &c.errors).chain(&recorder.errors).collect();
    checks.push(Check::new(
        "clean_streams",
        errors.is_empty(),
        match errors.first() {
            Some(e) => format!("{} errors, first: {e}", errors.len()),
            None => "no decode or apply errors".into(),
        },
    ));

    if let Some(check) = pan_check(&clients) {
        checks.push(check);
    }

    let client_reports: Vec<ClientReport> = clients
        .iter()
        .map(|c| ClientReport {
            name: c.spec.name.clone(),
            role: c.spec.role,
            view: c.spec.view,
            render_commands: c.render_seqs.len(),
            frames: c.frames,
            visible_items: c.visible_items(),
            visible_projected: c.visible_items_in(ViewMode::Projected),
            visible_mr: c.visible_items_in(ViewMode::Mr),
            pan: c.pan,
            errors: c.errors.clone(),
        })
        .collect();
    let report = Report {
        seed: cfg.seed,
        ticks,
        duration_ms,
        render_events: behavior.render_seqs.len(),
        annotations: recorder.annotations.len(),
        inputs: behavior.inputs,
        samples: samples.len(),
        eye_contact_events: analysis.metrics.eye_contact_events,
        relay,
        pass: checks.iter().all(|c| c.pass),
        clients: client_reports,
        checks,
    };

    let snapshots: BTreeMap<String, String> = clients
        .iter()
        .map(|c| (c.spec.name.clone(), c.board.snapshot()))
        .collect();
    fs::write(out.join("scenario.json"), pretty(cfg))?;
    fs::write(out.join("gaze.jsonl"), gaze)?;
    fs::write(out.join("metrics.json"), metrics_bytes(&analysis.metrics))?;
    fs::write(out.join("report.json"), pretty(&report))?;
    for c in &clients {
        fs::write(out.join(format!("{}.board.txt", c.spec.name)), &snapshots[&c.spec.name])?;
        fs::write(out.join(format!("{}.commands.log", c.spec.name)), &c.command_log)?;
    }
    Ok(RunOutput {
        report,
        metrics: analysis.metrics,
        snapshots,
    })
}

/// After the pan, MR clients keep every item while projected clients show
/// fewer than the MR clients do.
fn pan_check(clients: &[ClientNode]) -> Option<Check> {
    let observed: Vec<(&ClientNode, PanCounts)> = clients.iter().filter_map(|c| c.pan.map(|p| (c, p))).collect();
    if observed.is_empty() {
        return None;
    }
    let mut problems = Vec::new();
    let mr_after: Vec<usize> = observed
        .iter()
        .filter(|(c, _)| c.spec.view == ViewMode::Mr)
        .map(|(_, p)| p.after)
        .collect();
    for (c, p) in &observed {
        match c.spec.view {
            ViewMode::Mr if p.after != p.before => {
                problems.push(format!("{} went from {} to {} items", c.spec.name, p.before, p.after))
            }
            ViewMode::Projected => {
                if let Some(m) = mr_after.iter().find(|m| p.after >= **m) {
                    problems.push(format!("{} shows {} items, MR shows {m}", c.spec.name, p.after));
                }
            }
            _ => {}
        }
    }
    let detail = if problems.is_empty() {
        observed
            .iter()
            .map(|(c, p)| format!("{} {}->{}", c.spec.name, p.before, p.after))
            .collect::<Vec<_>>()
            .join(", ")
    } else {
        problems.join("; ")
    };
    Some(Check::new("pan_retention", problems.is_empty(), detail))
}
