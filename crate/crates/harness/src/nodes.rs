//! The in-process nodes. Each runs in its own task and is stepped through
//! two phases per tick: publish (then sync with the relay) and collect (read
//! everything up to the tick marker).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::net::SocketAddr;
use std::sync::Arc;

use mirrorboard_client::RelayClient;
use mirrorboard_core::behavior::{Annotation, BehaviorEngine, ANNOTATION_LABEL, INPUT_LABEL};
use mirrorboard_core::board::{visible_content, Applied, Board, RenderCommand, Stroke, ViewMode, RENDER_LABEL};
use mirrorboard_core::gaze::GazeSample;
use mirrorboard_core::relay::{NodeRegistration, NodeRole};
use mirrorboard_core::session::{
    apply_pose_update, pose_from_payload, pose_label_user, pose_payload, BoardPlane, Role, SessionConfig, SessionState,
    POSE_LABEL_PREFIX,
};
use mirrorboard_core::wire::{Flake, Payload};
use serde::Serialize;
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;

use crate::scenario::{ParticipantSpec, Trajectories, BEHAVIOR_NODE, RECORDER_NODE};
use crate::HarnessError;

#[derive(Debug, Clone, Copy)]
pub enum Phase {
    Publish { k: u64, t: u64 },
    Collect { k: u64, t: u64 },
}

type Reply = oneshot::Sender<Result<(), HarnessError>>;

pub struct BehaviorNode {
    client: RelayClient,
    engine: BehaviorEngine,
    /// Seqs of every render EVENT sent, in order.
    pub render_seqs: Vec<u32>,
    pub annotations: usize,
    pub inputs: usize,
}

impl BehaviorNode {
    pub async fn connect(addr: SocketAddr, scope: &str, engine: BehaviorEngine) -> Result<Self, HarnessError> {
        let reg = NodeRegistration::new(BEHAVIOR_NODE, &[NodeRole::Emitter, NodeRole::Sink], [INPUT_LABEL]);
        let client = RelayClient::connect(addr, scope, reg)
            .await
            .map_err(HarnessError::client(BEHAVIOR_NODE))?;
        Ok(BehaviorNode {
            client,
            engine,
            render_seqs: Vec::new(),
            annotations: 0,
            inputs: 0,
        })
    }

    async fn publish(&mut self, t: u64) -> Result<(), HarnessError> {
        let out = self.engine.step(t);
        for cmd in &out.commands {
            let seq = self
                .client
                .publish_event(RENDER_LABEL, Payload::Bytes(cmd.encode()?))
                .await
                .map_err(HarnessError::client(BEHAVIOR_NODE))?;
            self.render_seqs.push(seq);
        }
        for a in &out.annotations {
            let body = serde_json::to_string(a).expect("annotation serializes");
            self.client
                .publish_event(ANNOTATION_LABEL, Payload::Text(body))
                .await
                .map_err(HarnessError::client(BEHAVIOR_NODE))?;
            self.annotations += 1;
        }
        self.client.sync().await.map_err(HarnessError::client(BEHAVIOR_NODE))
    }

    async fn collect(&mut self, k: u64) -> Result<(), HarnessError> {
        let flakes = self
            .client
            .until_tick(k)
            .await
            .map_err(HarnessError::client(BEHAVIOR_NODE))?;
        for f in flakes.iter().filter(|f| f.label == INPUT_LABEL) {
            match RenderCommand::from_flake(f) {
                Ok(cmd) => {
                    self.inputs += 1;
                    self.engine.push_input(cmd);
                }
                Err(e) => tracing::warn!(origin = %f.origin, error = %e, "bad input command"),
            }
        }
        Ok(())
    }
}

/// Visible-item counts around the first frame that pans the board.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PanCounts {
    pub frame: u64,
    pub before: usize,
    pub after: usize,
}

pub struct ClientNode {
    pub spec: ParticipantSpec,
    client: RelayClient,
    traj: Arc<Trajectories>,
    plane: BoardPlane,
    pose_every: u64,
    /// Tick at which this participant draws a stroke, if any.
    stroke_tick: Option<u64>,
    pub board: Board,
    pub session: SessionState,
    expected_visible: BTreeSet<String>,
    pan_pending: bool,
    pub pan: Option<PanCounts>,
    pub command_log: String,
    pub render_seqs: Vec<u32>,
    pub frames: u64,
    pub star_checks: u64,
    pub star_violations: Vec<String>,
    pub errors: Vec<String>,
}

/// Stroke drawn by the presenter: a short diagonal in the lower left.
pub fn presenter_stroke() -> RenderCommand {
    RenderCommand::Stroke {
        id: 0,
        stroke: Stroke {
            color: [40, 90, 200, 255],
            width: 0.01,
            points: vec![[-1.7, -0.9, 0.0], [-1.5, -1.0, 0.0], [-1.3, -0.95, 0.0]],
        },
    }
}

impl ClientNode {
    #[allow(clippy::too_many_arguments)]
    pub async fn connect(
        addr: SocketAddr,
        scope: &str,
        spec: ParticipantSpec,
        session: &SessionConfig,
        traj: Arc<Trajectories>,
        pose_every: u64,
        stroke_tick: Option<u64>,
        expected_visible: BTreeSet<String>,
    ) -> Result<Self, HarnessError> {
        let reg = NodeRegistration::new(
            spec.name.clone(),
            &[NodeRole::Emitter, NodeRole::Sink],
            [RENDER_LABEL.to_string(), format!("{POSE_LABEL_PREFIX}*")],
        );
        let client = RelayClient::connect(addr, scope, reg)
            .await
            .map_err(HarnessError::client(&spec.name))?;
        Ok(ClientNode {
            client,
            traj,
            plane: session.board.clone(),
            pose_every,
            stroke_tick,
            board: Board::new(),
            session: SessionState::from_config(session)?,
            expected_visible,
            pan_pending: false,
            pan: None,
            command_log: String::new(),
            render_seqs: Vec::new(),
            frames: 0,
            star_checks: 0,
            star_violations: Vec::new(),
            errors: Vec::new(),
            spec,
        })
    }

    pub fn visible_items(&self) -> usize {
        visible_content(self.board.state(), &self.plane, self.spec.view).len()
    }

    pub fn visible_items_in(&self, mode: ViewMode) -> usize {
        visible_content(self.board.state(), &self.plane, mode).len()
    }

    async fn publish(&mut self, k: u64, t: u64) -> Result<(), HarnessError> {
        let name = self.spec.name.clone();
        if k.is_multiple_of(self.pose_every) {
            if let Some(pose) = self.traj.pose(&name, t) {
                self.client
                    .publish_state(&format!("{POSE_LABEL_PREFIX}{name}"), pose_payload(&pose))
                    .await
                    .map_err(HarnessError::client(&name))?;
            }
        }
        if self.stroke_tick == Some(k) {
            let cmd = presenter_stroke();
            self.client
                .publish_event(INPUT_LABEL, Payload::Bytes(cmd.encode()?))
                .await
                .map_err(HarnessError::client(&name))?;
        }
        self.client.sync().await.map_err(HarnessError::client(&name))
    }

    async fn collect(&mut self, k: u64, t: u64) -> Result<(), HarnessError> {
        let flakes = self
            .client
            .until_tick(k)
            .await
            .map_err(HarnessError::client(&self.spec.name))?;
        for f in &flakes {
            if f.label == RENDER_LABEL {
                self.on_render(k, f);
            } else if pose_label_user(&f.label).is_some() {
                if let Err(e) = apply_pose_update(&mut self.session, f, t) {
                    self.errors.push(format!("tick {k}: {} {e}", f.label));
                }
            }
        }
        self.check_star(k);
        Ok(())
    }

    fn on_render(&mut self, k: u64, f: &Flake) {
        self.render_seqs.push(f.seq);
        let cmd = match RenderCommand::from_flake(f) {
            Ok(c) => c,
            Err(e) => {
                self.errors.push(format!("tick {k}: seq {} {e}", f.seq));
                return;
            }
        };
        let _ = writeln!(self.command_log, "{k} {} {cmd:?}", f.seq);
        match cmd {
            RenderCommand::Pan { .. } => self.pan_pending = true,
            RenderCommand::EndFrame { frame } if self.pan_pending && self.pan.is_none() => {
                let before = self.visible_items();
                self.apply(k, &cmd);
                self.pan = Some(PanCounts {
                    frame,
                    before,
                    after: self.visible_items(),
                });
                self.pan_pending = false;
                return;
            }
            _ => {}
        }
        self.apply(k, &cmd);
    }

    fn apply(&mut self, k: u64, cmd: &RenderCommand) {
        match self.board.apply_command(cmd) {
            Ok(Applied::Committed { .. }) => self.frames += 1,
            Ok(Applied::Buffered) => {}
            Err(e) => self.errors.push(format!("tick {k}: {e}")),
        }
    }

    /// Every tick is a rendered frame; the avatars shown must form the star.
    fn check_star(&mut self, k: u64) {
        self.star_checks += 1;
        let name = &self.spec.name;
        match self.session.visible_avatars(name) {
            Ok(v) if v == self.expected_visible => {}
            Ok(v) => self.star_violations.push(format!(
                "tick {k}: {name} sees {v:?}, expected {:?}",
                self.expected_visible
            )),
            Err(e) => self.star_violations.push(format!("tick {k}: {e}")),
        }
        if let Ok(rendered) = self.session.rendered_avatars(name) {
            if let Some(p) = rendered.iter().find(|p| !self.expected_visible.contains(&p.user)) {
                self.star_violations
                    .push(format!("tick {k}: {name} renders {}", p.user));
            }
        }
    }
}

pub struct RecorderNode {
    client: RelayClient,
    pub samples: Vec<GazeSample>,
    pub annotations: Vec<Annotation>,
    pub errors: Vec<String>,
}

impl RecorderNode {
    pub async fn connect(addr: SocketAddr, scope: &str) -> Result<Self, HarnessError> {
        let reg = NodeRegistration::new(
            RECORDER_NODE,
            &[NodeRole::Sink],
            [format!("{POSE_LABEL_PREFIX}*"), ANNOTATION_LABEL.to_string()],
        );
        let client = RelayClient::connect(addr, scope, reg)
            .await
            .map_err(HarnessError::client(RECORDER_NODE))?;
        Ok(RecorderNode {
            client,
            samples: Vec::new(),
            annotations: Vec::new(),
            errors: Vec::new(),
        })
    }

    async fn collect(&mut self, k: u64, t: u64) -> Result<(), HarnessError> {
        let flakes = self
            .client
            .until_tick(k)
            .await
            .map_err(HarnessError::client(RECORDER_NODE))?;
        for f in &flakes {
            if let Some(user) = pose_label_user(&f.label) {
                match pose_from_payload(user, t, &f.payload) {
                    Ok(p) => self.samples.push(GazeSample {
                        user: p.user,
                        t,
                        gaze_origin: p.gaze_origin,
                        gaze_dir: p.gaze_dir,
                    }),
                    Err(e) => self.errors.push(format!("tick {k}: {e}")),
                }
            } else if f.label == ANNOTATION_LABEL {
                let parsed = match &f.payload {
                    Payload::Text(s) => serde_json::from_str::<Annotation>(s).map_err(|e| e.to_string()),
                    _ => Err("annotation payload must be TEXT".to_string()),
                };
                match parsed {
                    Ok(a) => self.annotations.push(a),
                    Err(e) => self.errors.push(format!("tick {k}: {e}")),
                }
            }
        }
        Ok(())
    }
}

pub enum Node {
    Behavior(Box<BehaviorNode>),
    Client(Box<ClientNode>),
    Recorder(Box<RecorderNode>),
}

impl Node {
    async fn step(&mut self, phase: Phase) -> Result<(), HarnessError> {
        match (self, phase) {
            (Node::Behavior(b), Phase::Publish { t, .. }) => b.publish(t).await,
            (Node::Behavior(b), Phase::Collect { k, .. }) => b.collect(k).await,
            (Node::Client(c), Phase::Publish { k, t }) => c.publish(k, t).await,
            (Node::Client(c), Phase::Collect { k, t }) => c.collect(k, t).await,
            (Node::Recorder(_), Phase::Publish { .. }) => Ok(()),
            (Node::Recorder(r), Phase::Collect { k, t }) => r.collect(k, t).await,
        }
    }
}

/// A node running in its own task.
pub struct NodeTask {
    tx: mpsc::Sender<(Phase, Reply)>,
    handle: JoinHandle<Node>,
}

impl NodeTask {
    pub fn spawn(mut node: Node) -> Self {
        let (tx, mut rx) = mpsc::channel::<(Phase, Reply)>(1);
        let handle = tokio::spawn(async move {
            while let Some((phase, reply)) = rx.recv().await {
                let r = node.step(phase).await;
                let _ = reply.send(r);
            }
            node
        });
        NodeTask { tx, handle }
    }

    pub async fn start(&self, phase: Phase) -> Result<oneshot::Receiver<Result<(), HarnessError>>, HarnessError> {
        let (reply, rx) = oneshot::channel();
        self.tx
            .send((phase, reply))
            .await
            .map_err(|_| HarnessError::Task("node task stopped".into()))?;
        Ok(rx)
    }

    pub async fn finish(self) -> Result<Node, HarnessError> {
        drop(self.tx);
        self.handle.await.map_err(|e| HarnessError::Task(e.to_string()))
    }
}

/// Runs one phase on every node concurrently and waits for all of them.
pub async fn run_phase(tasks: &[NodeTask], phase: Phase) -> Result<(), HarnessError> {
    let mut pending = Vec::with_capacity(tasks.len());
    for t in tasks {
        pending.push(t.start(phase).await?);
    }
    let mut first_err = None;
    for rx in pending {
        let r = rx
            .await
            .map_err(|_| HarnessError::Task("node task dropped its reply".into()))
            .and_then(|r| r);
        if let Err(e) = r {
            first_err.get_or_insert(e);
        }
    }
    first_err.map_or(Ok(()), Err)
}

/// The avatars a participant must see: presenters see the audience, the
/// audience sees the presenter.
pub fn expected_star(name: &str, roles: &std::collections::BTreeMap<String, Role>) -> BTreeSet<String> {
    let mine = roles.get(name).copied();
    roles
        .iter()
        .filter(|(u, r)| u.as_str() != name && Some(**r) != mine)
        .map(|(u, _)| u.clone())
        .collect()
}
