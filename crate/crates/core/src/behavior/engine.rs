//! Deterministic behavior stepper: runs a lecture script, simulates sketch
//! logic and link dataflow, and emits framed render commands.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::matrix::Mat4;
use super::script::{Action, Axis, LectureScript, SketchKind};
use super::{pendulum_value, BehaviorError, PendulumState};
use crate::board::{RenderCommand, Stroke, TextItem};
use crate::geom::Vec3;

/// Value carried along a link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Signal {
    Scalar(f64),
    Matrix(Mat4),
}

/// Sketch ids at or above this are allocated for freehand client strokes.
pub const FREEHAND_BASE_ID: u32 = 1_000_000;
/// Radius around a pendulum anchor in which a client stroke excites it.
pub const EXCITE_RADIUS: f64 = 0.3;
/// Amplitude per meter of horizontal drag.
pub const EXCITE_GAIN: f64 = 1.0;
const MAX_PLOT_SAMPLES: usize = 4096;

const WHITE: [u8; 4] = [255, 255, 255, 255];
const ACCENT: [u8; 4] = [255, 160, 40, 255];

#[derive(Debug, Clone, PartialEq)]
struct SimSketch {
    kind: SketchKind,
    at: Vec3,
    output: Option<Signal>,
    /// Pendulum: time the current swing started.
    start_ms: u64,
    /// Plot samples.
    samples: Vec<f64>,
    transform: [f32; 16],
}

/// Links grouped by receiver: which sketch reads which sources' outputs.
pub type Inbox = BTreeMap<u32, Vec<(u32, Signal)>>;

/// One synchronous propagation step: every link (a, b) copies a's current
/// output into b's inbox. Outputs are read from the snapshot passed in, so
/// the result does not depend on link or sketch iteration order and a cycle
/// advances by one hop per frame.
pub fn propagate_links(outputs: &BTreeMap<u32, Signal>, links: &BTreeSet<(u32, u32)>) -> Inbox {
    let mut inbox = Inbox::new();
    for (from, to) in links {
        if let Some(sig) = outputs.get(from) {
            inbox.entry(*to).or_default().push((*from, *sig));
        }
    }
    inbox
}

/// A presenter annotation reached by the script clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub t_ms: u64,
    pub kind: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sketch: Option<u32>,
}

/// Output of one behavior tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameOutput {
    /// Empty when nothing changed; otherwise bracketed by BEGIN/END_FRAME.
    pub commands: Vec<RenderCommand>,
    pub annotations: Vec<Annotation>,
}

/// The scripted behavior server.
#[derive(Debug, Clone)]
pub struct BehaviorEngine {
    script: VecDeque<(u64, Action)>,
    sketches: BTreeMap<u32, SimSketch>,
    links: BTreeSet<(u32, u32)>,
    pan: Vec3,
    input: Vec<RenderCommand>,
    next_freehand: u32,
    frame: u64,
}

impl Default for BehaviorEngine {
    fn default() -> Self {
        Self::idle()
    }
}

fn place(at: Vec3) -> Mat4 {
    Mat4::translation(at.x, at.y, at.z).expect("positions are finite")
}

fn fmt_entry(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn matrix_rows(m: &Mat4) -> Vec<String> {
    (0..4)
        .map(|r| {
            (0..4)
                .map(|c| format!("{:>5}", fmt_entry(m.get(r, c))))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

fn text(s: impl Into<String>, x: f32, y: f32, h: f32) -> TextItem {
    TextItem {
        text: s.into(),
        anchor: [x, y, 0.0],
        height: h,
    }
}

fn stroke(color: [u8; 4], points: Vec<[f32; 3]>) -> Stroke {
    Stroke {
        color,
        width: 0.01,
        points,
    }
}

/// Matrix text block at the sketch origin; the row text is anchored at x = 0.1.
fn matrix_block(id: u32, m: &Mat4, top: f32) -> Vec<RenderCommand> {
    let mut out = vec![
        RenderCommand::Stroke {
            id,
            stroke: stroke(
                WHITE,
                vec![
                    [0.05, top, 0.0],
                    [0.0, top, 0.0],
                    [0.0, top - 0.5, 0.0],
                    [0.05, top - 0.5, 0.0],
                ],
            ),
        },
        RenderCommand::Stroke {
            id,
            stroke: stroke(
                WHITE,
                vec![
                    [0.85, top, 0.0],
                    [0.9, top, 0.0],
                    [0.9, top - 0.5, 0.0],
                    [0.85, top - 0.5, 0.0],
                ],
            ),
        },
    ];
    for (r, row) in matrix_rows(m).into_iter().enumerate() {
        out.push(RenderCommand::Text {
            id,
            text: text(row, 0.1, top - 0.1 - 0.12 * r as f32, 0.08),
        });
    }
    out
}

fn cube_edges(size: f64) -> Vec<Vec<[f32; 3]>> {
    let h = (size / 2.0) as f32;
    let c = |i: u8| {
        [
            if i & 1 == 0 { -h } else { h },
            if i & 2 == 0 { -h } else { h },
            if i & 4 == 0 { -h } else { h },
        ]
    };
    let mut edges = Vec::new();
    for i in 0u8..8 {
        for bit in [1u8, 2, 4] {
            if i & bit == 0 {
                edges.push(vec![c(i), c(i | bit)]);
            }
        }
    }
    edges
}

impl BehaviorEngine {
    /// Engine with no script; driven only by client input.
    pub fn idle() -> Self {
        BehaviorEngine {
            script: VecDeque::new(),
            sketches: BTreeMap::new(),
            links: BTreeSet::new(),
            pan: Vec3::ZERO,
            input: Vec::new(),
            next_freehand: FREEHAND_BASE_ID,
            frame: 0,
        }
    }

    pub fn new(script: &LectureScript) -> Result<Self, BehaviorError> {
        script.validate()?;
        let mut e = Self::idle();
        e.script = script.actions.iter().map(|a| (a.t_ms, a.action.clone())).collect();
        Ok(e)
    }

    pub fn script_done(&self) -> bool {
        self.script.is_empty()
    }

    pub fn output_of(&self, id: u32) -> Option<Signal> {
        self.sketches.get(&id).and_then(|s| s.output)
    }

    pub fn samples_of(&self, id: u32) -> &[f64] {
        self.sketches.get(&id).map_or(&[], |s| &s.samples)
    }

    pub fn links(&self) -> &BTreeSet<(u32, u32)> {
        &self.links
    }

    /// Queues a client input command (STROKE, CURSOR or PAN) for the next step.
    /// Other ops are ignored.
    pub fn push_input(&mut self, cmd: RenderCommand) {
        if matches!(
            cmd,
            RenderCommand::Stroke { .. } | RenderCommand::Cursor { .. } | RenderCommand::Pan { .. }
        ) {
            self.input.push(cmd);
        }
    }

    /// Advances to script time `t_ms` and returns this tick's render frame.
    pub fn step(&mut self, t_ms: u64) -> FrameOutput {
        let mut cmds = Vec::new();
        let mut annotations = Vec::new();

        while self.script.front().is_some_and(|(t, _)| *t <= t_ms) {
            let (t, action) = self.script.pop_front().expect("checked front");
            self.run_action(t, action, &mut cmds, &mut annotations);
        }
        for input in std::mem::take(&mut self.input) {
            self.run_input(t_ms, input, &mut cmds);
        }

        let outputs: BTreeMap<u32, Signal> = self
            .sketches
            .iter()
            .filter_map(|(id, s)| s.output.map(|o| (*id, o)))
            .collect();
        let mut inbox = propagate_links(&outputs, &self.links);
        let ids: Vec<u32> = self.sketches.keys().copied().collect();
        for id in ids {
            let received = inbox.remove(&id).unwrap_or_default();
            self.update_sketch(id, t_ms, &received, &mut cmds);
        }

        if cmds.is_empty() {
            return FrameOutput {
                commands: cmds,
                annotations,
            };
        }
        let frame = self.frame;
        self.frame += 1;
        let mut commands = Vec::with_capacity(cmds.len() + 2);
        commands.push(RenderCommand::BeginFrame { frame });
        commands.extend(cmds);
        commands.push(RenderCommand::EndFrame { frame });
        FrameOutput { commands, annotations }
    }

    fn run_action(&mut self, t: u64, action: Action, cmds: &mut Vec<RenderCommand>, notes: &mut Vec<Annotation>) {
        match action {
            Action::Create { id, kind, at } => self.create(id, kind, at, t, cmds),
            Action::Link { from, to } => {
                if self.sketches.contains_key(&from) && self.sketches.contains_key(&to) && self.links.insert((from, to))
                {
                    cmds.push(RenderCommand::Link { from, to });
                }
            }
            Action::Delete { id } => {
                if self.sketches.remove(&id).is_some() {
                    self.links.retain(|(a, b)| *a != id && *b != id);
                    cmds.push(RenderCommand::DeleteSketch { id });
                }
            }
            Action::Cursor { at } => cmds.push(RenderCommand::Cursor { at: at.to_f32() }),
            Action::Pan { delta } => {
                self.pan += delta;
                cmds.push(RenderCommand::Pan { delta: delta.to_f32() });
            }
            Action::Excite { id, theta0 } => self.excite(id, theta0, t),
            Action::Gesture { description } => notes.push(Annotation {
                t_ms: t,
                kind: "gesture".into(),
                text: description,
                sketch: None,
            }),
            Action::Deictic { word, sketch } => notes.push(Annotation {
                t_ms: t,
                kind: "deictic".into(),
                text: word,
                sketch,
            }),
        }
    }

    fn excite(&mut self, id: u32, theta0: f64, t: u64) {
        if let Some(s) = self.sketches.get_mut(&id) {
            if let SketchKind::Pendulum { theta0: amp, .. } = &mut s.kind {
                *amp = theta0.clamp(-1.0, 1.0);
                s.start_ms = t;
            }
        }
    }

    fn run_input(&mut self, t: u64, cmd: RenderCommand, cmds: &mut Vec<RenderCommand>) {
        match cmd {
            RenderCommand::Stroke { stroke, .. } if stroke.points.len() >= 2 => {
                let first = Vec3::from_f32(stroke.points[0]);
                let last = Vec3::from_f32(*stroke.points.last().expect("len >= 2"));
                let hit = self.sketches.iter().find_map(|(id, s)| {
                    let is_pendulum = matches!(s.kind, SketchKind::Pendulum { .. });
                    (is_pendulum && (s.at + self.pan).distance(first) <= EXCITE_RADIUS).then_some(*id)
                });
                if let Some(id) = hit {
                    self.excite(id, EXCITE_GAIN * (last.x - first.x), t);
                }
                // Strokes arrive in board coordinates; store them pan-compensated.
                let id = self.next_freehand;
                self.next_freehand += 1;
                let pan = self.pan.to_f32();
                let points = stroke
                    .points
                    .iter()
                    .map(|p| [p[0] - pan[0], p[1] - pan[1], p[2] - pan[2]])
                    .collect();
                cmds.push(RenderCommand::CreateSketch {
                    id,
                    kind: "freehand".into(),
                });
                cmds.push(RenderCommand::Stroke {
                    id,
                    stroke: Stroke { points, ..stroke },
                });
            }
            RenderCommand::Cursor { at } => cmds.push(RenderCommand::Cursor { at }),
            RenderCommand::Pan { delta } => {
                self.pan += Vec3::from_f32(delta);
                cmds.push(RenderCommand::Pan { delta });
            }
            _ => {}
        }
    }

    fn create(&mut self, id: u32, kind: SketchKind, at: Vec3, t: u64, cmds: &mut Vec<RenderCommand>) {
        if id == 0 || self.sketches.contains_key(&id) {
            tracing::warn!(id, "ignoring create for a reserved or existing sketch id");
            return;
        }
        cmds.push(RenderCommand::CreateSketch {
            id,
            kind: kind.name().into(),
        });
        let transform = place(at).to_f32();
        cmds.push(RenderCommand::SetTransform { id, matrix: transform });
        let mut output = None;
        match &kind {
            SketchKind::Cube { size } => {
                for e in cube_edges(*size) {
                    cmds.push(RenderCommand::Stroke {
                        id,
                        stroke: stroke(WHITE, e),
                    });
                }
                let h = (*size / 2.0) as f32;
                cmds.push(RenderCommand::Stroke {
                    id,
                    stroke: stroke(ACCENT, vec![[0.0, 0.0, 0.0], [h, 0.0, 0.0], [0.8 * h, 0.2 * h, 0.0]]),
                });
            }
            SketchKind::Translation { offset } => {
                let m = Mat4::translation(offset[0], offset[1], offset[2]).unwrap_or(Mat4::IDENTITY);
                cmds.extend(matrix_block(id, &m, 0.25));
                cmds.push(RenderCommand::Text {
                    id,
                    text: text("T", 0.4, 0.32, 0.08),
                });
                output = Some(Signal::Matrix(m));
            }
            SketchKind::Rotation { axis, angle } => {
                let m = match axis {
                    Axis::X => Mat4::rotation_x(*angle),
                    Axis::Y => Mat4::rotation_y(*angle),
                    Axis::Z => Mat4::rotation_z(*angle),
                }
                .unwrap_or(Mat4::IDENTITY);
                cmds.extend(matrix_block(id, &m, 0.25));
                cmds.push(RenderCommand::Text {
                    id,
                    text: text("R", 0.4, 0.32, 0.08),
                });
                output = Some(Signal::Matrix(m));
            }
            SketchKind::Product { left, right } => {
                cmds.push(RenderCommand::Text {
                    id,
                    text: text(format!("[{left}] x [{right}]"), 0.1, 0.32, 0.08),
                });
            }
            SketchKind::Pendulum { .. } => {
                cmds.push(RenderCommand::Stroke {
                    id,
                    stroke: stroke(WHITE, vec![[0.0, 0.0, 0.0], [0.0, -0.5, 0.0]]),
                });
            }
            SketchKind::Plot => {
                cmds.push(RenderCommand::Stroke {
                    id,
                    stroke: stroke(WHITE, vec![[0.0, -0.5, 0.0], [0.0, 0.5, 0.0]]),
                });
                cmds.push(RenderCommand::Stroke {
                    id,
                    stroke: stroke(WHITE, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
                });
            }
            SketchKind::Label { text: s } => {
                cmds.push(RenderCommand::Text {
                    id,
                    text: text(s.clone(), 0.0, 0.0, 0.1),
                });
            }
        }
        self.sketches.insert(
            id,
            SimSketch {
                kind,
                at,
                output,
                start_ms: t,
                samples: Vec::new(),
                transform,
            },
        );
    }

    fn update_sketch(&mut self, id: u32, t: u64, received: &[(u32, Signal)], cmds: &mut Vec<RenderCommand>) {
        let s = self.sketches.get_mut(&id).expect("id from key list");
        match &s.kind {
            SketchKind::Pendulum { theta0, omega } => {
                let state = PendulumState {
                    theta0: *theta0,
                    omega: *omega,
                    t: t.saturating_sub(s.start_ms) as f64 / 1000.0,
                };
                let theta = pendulum_value(&state);
                let changed = s.output != Some(Signal::Scalar(theta));
                s.output = Some(Signal::Scalar(theta));
                if changed {
                    cmds.push(RenderCommand::SetValue {
                        id,
                        value: theta as f32,
                    });
                    let m = place(s.at) * Mat4::rotation_z(theta).unwrap_or(Mat4::IDENTITY);
                    s.transform = m.to_f32();
                    cmds.push(RenderCommand::SetTransform {
                        id,
                        matrix: s.transform,
                    });
                }
            }
            SketchKind::Plot => {
                for (_, sig) in received {
                    if let Signal::Scalar(v) = sig {
                        if s.samples.len() >= MAX_PLOT_SAMPLES {
                            continue;
                        }
                        let n = s.samples.len();
                        if let Some(prev) = s.samples.last() {
                            let x = |i: usize| (i as f32) * 0.01;
                            cmds.push(RenderCommand::Stroke {
                                id,
                                stroke: stroke(
                                    ACCENT,
                                    vec![[x(n - 1), *prev as f32 * 0.5, 0.0], [x(n), *v as f32 * 0.5, 0.0]],
                                ),
                            });
                        }
                        s.samples.push(*v);
                        s.output = Some(Signal::Scalar(*v));
                        cmds.push(RenderCommand::SetValue { id, value: *v as f32 });
                    }
                }
            }
            SketchKind::Cube { .. } => {
                let mut m = place(s.at);
                for (_, sig) in received {
                    if let Signal::Matrix(x) = sig {
                        m = m * *x;
                    }
                }
                let t32 = m.to_f32();
                if t32 != s.transform {
                    s.transform = t32;
                    cmds.push(RenderCommand::SetTransform { id, matrix: t32 });
                }
            }
            SketchKind::Product { left, right } => {
                let find = |want: u32| {
                    received.iter().find_map(|(from, sig)| match sig {
                        Signal::Matrix(m) if *from == want => Some(*m),
                        _ => None,
                    })
                };
                if let (Some(l), Some(r)) = (find(*left), find(*right)) {
                    let p = l * r;
                    if s.output != Some(Signal::Matrix(p)) {
                        s.output = Some(Signal::Matrix(p));
                        cmds.extend(matrix_block(id, &p, 0.25));
                    }
                }
            }
            SketchKind::Translation { .. } | SketchKind::Rotation { .. } | SketchKind::Label { .. } => {}
        }
    }
}
