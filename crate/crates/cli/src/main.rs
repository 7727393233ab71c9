use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mirrorboard_client::{ApiClient, RelayClient};
use mirrorboard_core::behavior::{
    generate_matrix_lesson, Annotation, BehaviorEngine, LectureScript, ANNOTATION_LABEL, INPUT_LABEL,
};
use mirrorboard_core::board::{RenderCommand, RENDER_LABEL};
use mirrorboard_core::gaze::{AnalysisConfig, GazeLog, Metrics};
use mirrorboard_core::relay::{NodeRegistration, NodeRole};
use mirrorboard_core::wire::Payload;
use mirrorboard_harness::{replay, run_scenario, ScenarioConfig};
use mirrorboard_server::{start_relay, RelayConfig, TickMode, DEFAULT_TCP_PORT, DEFAULT_TICK_HZ, DEFAULT_WS_PORT};

#[derive(Parser)]
#[command(name = "mirrorboard", version, about = "Mirrored-board lecture relay and tools")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the relay: framed TCP for nodes, WebSocket and HTTP API for browsers and tools.
    Relay {
        #[arg(long, default_value = "0.0.0.0")]
        host: IpAddr,
        #[arg(long, default_value_t = DEFAULT_TCP_PORT)]
        port: u16,
        #[arg(long, default_value_t = DEFAULT_WS_PORT)]
        ws_port: u16,
        /// Tick rate in Hz.
        #[arg(long, default_value_t = DEFAULT_TICK_HZ)]
        tick: f64,
        /// Tick only on POST /api/tick.
        #[arg(long)]
        manual: bool,
        /// Delivery log path.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Connect a behavior node to a running relay and play a lecture script.
    Behave {
        #[arg(long, default_value = "127.0.0.1:9090")]
        relay: SocketAddr,
        #[arg(long, default_value = "lesson")]
        scope: String,
        /// Script file; the built-in matrix lesson if omitted.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
        /// The relay's tick rate, used to turn frame numbers into time.
        #[arg(long, default_value_t = DEFAULT_TICK_HZ)]
        hz: f64,
        /// Keep serving input after the script ends.
        #[arg(long)]
        stay: bool,
    },
    /// Run a scripted session and write its artifacts. Exits non-zero if an invariant fails.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute metrics from a run's logs. Exits non-zero if they differ from the recorded ones.
    Replay { dir: PathBuf },
    /// Compute gaze metrics from a gaze log.
    Analyze {
        #[arg(long)]
        log: PathBuf,
        /// Cone half-angle in degrees; the log header's value if omitted.
        #[arg(long)]
        cone: Option<f64>,
        /// Minimum eye-contact duration in ms; the log header's value if omitted.
        #[arg(long)]
        min_contact: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ask a relay's HTTP API instead of computing locally, e.g. http://127.0.0.1:9091.
        #[arg(long)]
        api: Option<String>,
    },
    /// Print the built-in matrix lesson script as JSON.
    Lesson,
    /// Print relay counters from its HTTP API.
    Stats {
        #[arg(long, default_value = "http://127.0.0.1:9091")]
        api: String,
    },
    /// Advance a manual-tick relay by one tick.
    Tick {
        #[arg(long, default_value = "http://127.0.0.1:9091")]
        api: String,
    },
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse().cmd).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

async fn dispatch(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Relay {
            host,
            port,
            ws_port,
            tick,
            manual,
            log,
        } => {
            let relay = start_relay(RelayConfig {
                tcp_addr: SocketAddr::new(host, port),
                ws_addr: Some(SocketAddr::new(host, ws_port)),
                tick: if manual {
                    TickMode::Manual
                } else {
                    TickMode::Periodic { hz: tick }
                },
                log_path: log,
            })
            .await?;
            eprintln!(
                "relay on {} (ws/http {})",
                relay.tcp_addr(),
                relay.ws_addr().map(|a| a.to_string()).unwrap_or_default()
            );
            tokio::signal::ctrl_c().await?;
            relay.shutdown().await;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Behave {
            relay,
            scope,
            script,
            time_scale,
            hz,
            stay,
        } => {
            let script = match script {
                Some(p) => {
                    LectureScript::from_json(&std::fs::read_to_string(&p).with_context(|| p.display().to_string())?)?
                }
                None => generate_matrix_lesson(),
            };
            behave(relay, &scope, script.compressed(time_scale)?, hz, stay).await?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Run { scenario, out } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            let run = run_scenario(&cfg, &out).await?;
            for c in &run.report.checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!(
                "{} ticks, {} render events, {} gaze samples, {} eye-contact events",
                run.report.ticks, run.report.render_events, run.report.samples, run.report.eye_contact_events
            );
            Ok(if run.report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Cmd::Replay { dir } => {
            let r = replay(&dir)?;
            print!("{}", String::from_utf8_lossy(&r.bytes));
            if r.matches {
                eprintln!("metrics match {}", dir.join("metrics.json").display());
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("metrics differ from {}", dir.join("metrics.json").display());
                Ok(ExitCode::FAILURE)
            }
        }
        Cmd::Analyze {
            log,
            cone,
            min_contact,
            out,
            api,
        } => {
            let metrics = analyze(&log, cone, min_contact, api.as_deref()).await?;
            let mut text = serde_json::to_string_pretty(&metrics)?;
            text.push('\n');
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| p.display().to_string())?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Lesson => {
            println!("{}", generate_matrix_lesson().to_json());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Stats { api } => {
            let s = ApiClient::new(api).stats().await?;
            println!("{}", serde_json::to_string_pretty(&s)?);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Tick { api } => {
            let r = ApiClient::new(api).tick().await?;
            println!("frame {} delivered {}", r.frame_no, r.deliveries);
            Ok(ExitCode::SUCCESS)
        }
    }
}

async fn analyze(log: &Path, cone: Option<f64>, min_contact: Option<u64>, api: Option<&str>) -> Result<Metrics> {
    let text = std::fs::read_to_string(log).with_context(|| log.display().to_string())?;
    if let Some(base) = api {
        return Ok(ApiClient::new(base).analyze(text, cone, min_contact).await?);
    }
    let parsed = GazeLog::read(text.as_bytes())?;
    let cfg = AnalysisConfig {
        cone_deg: cone.unwrap_or(parsed.header.analysis.cone_deg),
        min_contact_ms: min_contact.unwrap_or(parsed.header.analysis.min_contact_ms),
    };
    Ok(parsed.analyze_with(&cfg)?.metrics)
}

/// Steps the engine on every relay tick. Script time counts from the first
/// tick seen after registering.
async fn behave(relay: SocketAddr, scope: &str, script: LectureScript, hz: f64, stay: bool) -> Result<()> {
    if !(hz.is_finite() && hz > 0.0) {
        bail!("tick rate must be positive, got {hz}");
    }
    let mut engine = BehaviorEngine::new(&script)?;
    let reg = NodeRegistration::new("behavior", &[NodeRole::Emitter, NodeRole::Sink], [INPUT_LABEL]);
    let mut client = RelayClient::connect(relay, scope, reg).await?;
    client.set_timeout(std::time::Duration::from_secs(3600));
    let mut start = None;
    loop {
        let (frame, flakes) = client.next_tick().await?;
        let first = *start.get_or_insert(frame);
        for f in flakes.iter().filter(|f| f.label == INPUT_LABEL) {
            match RenderCommand::from_flake(f) {
                Ok(cmd) => engine.push_input(cmd),
                Err(e) => tracing::warn!(origin = %f.origin, error = %e, "bad input"),
            }
        }
        let t = ((frame - first) as f64 * 1000.0 / hz) as u64;
        let out = engine.step(t);
        for cmd in &out.commands {
            client
                .publish_event(RENDER_LABEL, Payload::Bytes(cmd.encode()?))
                .await?;
        }
        for a in &out.annotations {
            print_annotation(a);
            client
                .publish_event(ANNOTATION_LABEL, Payload::Text(serde_json::to_string(a)?))
                .await?;
        }
        if !stay && engine.script_done() && t > script.duration_ms {
            break;
        }
    }
    client.close().await?;
    Ok(())
}

fn print_annotation(a: &Annotation) {
    match a.sketch {
        Some(id) => println!("{:>7} ms {} \"{}\" -> sketch {id}", a.t_ms, a.kind, a.text),
        None => println!("{:>7} ms {} \"{}\"", a.t_ms, a.kind, a.text),
    }
}
