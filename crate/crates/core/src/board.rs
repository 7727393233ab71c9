//! The shared board: render commands from the behavior server, the sketch and
//! link graph they build, pan, and projected versus unbounded viewing.
//!
//! Each [`RenderCommand`] travels as one EVENT flake labeled `render` whose
//! BYTES payload is `op u8 | sketch_id u32 BE | body` (layouts in
//! [`RenderCommand::encode`]). A behavior tick is bracketed by `BEGIN_FRAME` and
//! `END_FRAME`; a [`Board`] applies the bracketed commands to a working copy and
//! publishes it atomically at `END_FRAME`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::session::BoardPlane;
use crate::wire::{DeliveryClass, Flake, Payload};

pub const RENDER_LABEL: &str = "render";

pub const IDENTITY: [f32; 16] = [
    1.0, 0.0, 0.0, 0.0, //
    0.0, 1.0, 0.0, 0.0, //
    0.0, 0.0, 1.0, 0.0, //
    0.0, 0.0, 0.0, 1.0,
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoardError {
    #[error("malformed render command: {0}")]
    Codec(&'static str),
    #[error("unknown sketch {0}")]
    UnknownSketch(u32),
    #[error("sketch {0} already exists")]
    DuplicateSketch(u32),
    #[error("link {from} -> {to} references a missing sketch")]
    DanglingLink { from: u32, to: u32 },
    #[error("command outside BEGIN_FRAME/END_FRAME")]
    OutOfFrameCommand,
    #[error("frame {open} is still open")]
    FrameAlreadyOpen { open: u64 },
    #[error("END_FRAME {got} does not match open frame {open}")]
    FrameMismatch { open: u64, got: u64 },
    #[error("invalid command: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub color: [u8; 4],
    pub width: f32,
    pub points: Vec<[f32; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextItem {
    pub text: String,
    pub anchor: [f32; 3],
    pub height: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum RenderOp {
    BeginFrame = 0,
    CreateSketch = 1,
    Stroke = 2,
    Text = 3,
    SetTransform = 4,
    Link = 5,
    SetValue = 6,
    Cursor = 7,
    Pan = 8,
    DeleteSketch = 9,
    EndFrame = 10,
}

/// Draw instruction from the behavior server. Sketch id 0 is board-global.
#[derive(Debug, Clone, PartialEq)]
pub enum RenderCommand {
    BeginFrame {
        frame: u64,
    },
    CreateSketch {
        id: u32,
        kind: String,
    },
    Stroke {
        id: u32,
        stroke: Stroke,
    },
    Text {
        id: u32,
        text: TextItem,
    },
    /// Column-major 4×4 sketch-to-board transform.
    SetTransform {
        id: u32,
        matrix: [f32; 16],
    },
    Link {
        from: u32,
        to: u32,
    },
    SetValue {
        id: u32,
        value: f32,
    },
    Cursor {
        at: [f32; 3],
    },
    Pan {
        delta: [f32; 3],
    },
    DeleteSketch {
        id: u32,
    },
    EndFrame {
        frame: u64,
    },
}

fn put_f32(out: &mut Vec<u8>, v: f32) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), BoardError> {
    let len = u16::try_from(s.len()).map_err(|_| BoardError::Codec("string longer than 65535 bytes"))?;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Cursor<'a> {
    b: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BoardError> {
        if self.b.len() < n {
            return Err(BoardError::Codec("truncated"));
        }
        let (h, t) = self.b.split_at(n);
        self.b = t;
        Ok(h)
    }
    fn u32(&mut self) -> Result<u32, BoardError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, BoardError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32, BoardError> {
        Ok(f32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn vec3(&mut self) -> Result<[f32; 3], BoardError> {
        Ok([self.f32()?, self.f32()?, self.f32()?])
    }
    fn string(&mut self) -> Result<String, BoardError> {
        let len = u16::from_be_bytes(self.take(2)?.try_into().unwrap()) as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| BoardError::Codec("string is not UTF-8"))
    }
}

impl RenderCommand {
    pub fn op(&self) -> RenderOp {
        match self {
            RenderCommand::BeginFrame { .. } => RenderOp::BeginFrame,
            RenderCommand::CreateSketch { .. } => RenderOp::CreateSketch,
            RenderCommand::Stroke { .. } => RenderOp::Stroke,
            RenderCommand::Text { .. } => RenderOp::Text,
            RenderCommand::SetTransform { .. } => RenderOp::SetTransform,
            RenderCommand::Link { .. } => RenderOp::Link,
            RenderCommand::SetValue { .. } => RenderOp::SetValue,
            RenderCommand::Cursor { .. } => RenderOp::Cursor,
            RenderCommand::Pan { .. } => RenderOp::Pan,
            RenderCommand::DeleteSketch { .. } => RenderOp::DeleteSketch,
            RenderCommand::EndFrame { .. } => RenderOp::EndFrame,
        }
    }

    pub fn sketch_id(&self) -> u32 {
        match self {
            RenderCommand::CreateSketch { id, .. }
            | RenderCommand::Stroke { id, .. }
            | RenderCommand::Text { id, .. }
            | RenderCommand::SetTransform { id, .. }
            | RenderCommand::SetValue { id, .. }
            | RenderCommand::DeleteSketch { id } => *id,
            RenderCommand::Link { from, .. } => *from,
            _ => 0,
        }
    }

    /// Compact binary form. Bodies after `op | sketch_id`:
    ///
    /// | op | body |
    /// |----|------|
    /// | BEGIN_FRAME, END_FRAME | frame u64 |
    /// | CREATE_SKETCH | kind (u16 len + UTF-8) |
    /// | STROKE | rgba 4×u8, width f32, n u32, n × (x,y,z) f32 |
    /// | TEXT | text (u16 len + UTF-8), anchor 3×f32, height f32 |
    /// | SET_TRANSFORM | 16 × f32, column-major |
    /// | LINK | to_id u32 (sketch_id is from_id) |
    /// | SET_VALUE | f32 |
    /// | CURSOR, PAN | 3 × f32 |
    /// | DELETE_SKETCH | empty |
    pub fn encode(&self) -> Result<Vec<u8>, BoardError> {
        let mut out = vec![self.op() as u8];
        out.extend_from_slice(&self.sketch_id().to_be_bytes());
        match self {
            RenderCommand::BeginFrame { frame } | RenderCommand::EndFrame { frame } => {
                out.extend_from_slice(&frame.to_be_bytes())
            }
            RenderCommand::CreateSketch { kind, .. } => put_str(&mut out, kind)?,
            RenderCommand::Stroke { stroke, .. } => {
                out.extend_from_slice(&stroke.color);
                put_f32(&mut out, stroke.width);
                let n = u32::try_from(stroke.points.len()).map_err(|_| BoardError::Codec("too many points"))?;
                out.extend_from_slice(&n.to_be_bytes());
                for p in &stroke.points {
                    p.iter().for_each(|v| put_f32(&mut out, *v));
                }
            }
            RenderCommand::Text { text, .. } => {
                put_str(&mut out, &text.text)?;
                text.anchor.iter().for_each(|v| put_f32(&mut out, *v));
                put_f32(&mut out, text.height);
            }
            RenderCommand::SetTransform { matrix, .. } => matrix.iter().for_each(|v| put_f32(&mut out, *v)),
            RenderCommand::Link { to, .. } => out.extend_from_slice(&to.to_be_bytes()),
            RenderCommand::SetValue { value, .. } => put_f32(&mut out, *value),
            RenderCommand::Cursor { at: v } | RenderCommand::Pan { delta: v } => {
                v.iter().for_each(|x| put_f32(&mut out, *x))
            }
            RenderCommand::DeleteSketch { .. } => {}
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<RenderCommand, BoardError> {
        let mut c = Cursor { b: bytes };
        let op = c.take(1)?[0];
        let id = c.u32()?;
        let cmd = match op {
            0 => RenderCommand::BeginFrame { frame: c.u64()? },
            1 => RenderCommand::CreateSketch { id, kind: c.string()? },
            2 => {
                let color: [u8; 4] = c.take(4)?.try_into().unwrap();
                let width = c.f32()?;
                let n = c.u32()? as usize;
                if c.b.len() != n.saturating_mul(12) {
                    return Err(BoardError::Codec("stroke point count does not match body"));
                }
                let points = (0..n).map(|_| c.vec3()).collect::<Result<_, _>>()?;
                RenderCommand::Stroke {
                    id,
                    stroke: Stroke { color, width, points },
                }
            }
            3 => RenderCommand::Text {
                id,
                text: TextItem {
                    text: c.string()?,
                    anchor: c.vec3()?,
                    height: c.f32()?,
                },
            },
            4 => {
                let mut matrix = [0f32; 16];
                for m in matrix.iter_mut() {
                    *m = c.f32()?;
                }
                RenderCommand::SetTransform { id, matrix }
            }
            5 => RenderCommand::Link { from: id, to: c.u32()? },
            6 => RenderCommand::SetValue { id, value: c.f32()? },
            7 => RenderCommand::Cursor { at: c.vec3()? },
            8 => RenderCommand::Pan { delta: c.vec3()? },
            9 => RenderCommand::DeleteSketch { id },
            10 => RenderCommand::EndFrame { frame: c.u64()? },
            _ => return Err(BoardError::Codec("unknown op")),
        };
        if !c.b.is_empty() {
            return Err(BoardError::Codec("trailing bytes"));
        }
        if matches!(op, 0 | 7 | 8 | 10) && id != 0 {
            return Err(BoardError::Codec("board-global op with nonzero sketch id"));
        }
        Ok(cmd)
    }

    /// Wraps the command in a `render` EVENT flake.
    pub fn to_flake(&self, scope: &str, origin: &str, seq: u32) -> Result<Flake, BoardError> {
        Ok(Flake::new(
            scope,
            RENDER_LABEL,
            origin,
            DeliveryClass::Event,
            seq,
            Payload::Bytes(self.encode()?),
        ))
    }

    pub fn from_flake(f: &Flake) -> Result<RenderCommand, BoardError> {
        match &f.payload {
            Payload::Bytes(b) => RenderCommand::decode(b),
            _ => Err(BoardError::Codec("render payload must be BYTES")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sketch {
    pub kind: String,
    pub strokes: Vec<Stroke>,
    pub texts: Vec<TextItem>,
    pub transform: [f32; 16],
    pub value: Option<f32>,
}

impl Sketch {
    fn new(kind: String) -> Self {
        Sketch {
            kind,
            strokes: Vec::new(),
            texts: Vec::new(),
            transform: IDENTITY,
            value: None,
        }
    }

    /// Sketch-local point to board space (before pan).
    pub fn place(&self, p: [f32; 3]) -> Vec3 {
        let m = self.transform.map(f64::from);
        let (x, y, z) = (p[0] as f64, p[1] as f64, p[2] as f64);
        let w = m[3] * x + m[7] * y + m[11] * z + m[15];
        let w = if w == 0.0 { 1.0 } else { w };
        Vec3::new(
            (m[0] * x + m[4] * y + m[8] * z + m[12]) / w,
            (m[1] * x + m[5] * y + m[9] * z + m[13]) / w,
            (m[2] * x + m[6] * y + m[10] * z + m[14]) / w,
        )
    }
}

/// Sketches, links, pan and cursor as seen after a committed frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoardState {
    pub sketches: BTreeMap<u32, Sketch>,
    pub links: BTreeSet<(u32, u32)>,
    pub pan_offset: Vec3,
    pub cursor: Option<Vec3>,
}

impl BoardState {
    pub fn sketch_mut(&mut self, id: u32) -> Result<&mut Sketch, BoardError> {
        self.sketches.get_mut(&id).ok_or(BoardError::UnknownSketch(id))
    }

    /// Applies one in-frame content command.
    pub fn apply(&mut self, c: &RenderCommand) -> Result<(), BoardError> {
        match c {
            RenderCommand::BeginFrame { .. } | RenderCommand::EndFrame { .. } => {
                Err(BoardError::Invalid("frame markers are handled by Board"))
            }
            RenderCommand::CreateSketch { id, kind } => {
                if *id == 0 {
                    return Err(BoardError::Invalid("sketch id 0 is reserved"));
                }
                if self.sketches.contains_key(id) {
                    return Err(BoardError::DuplicateSketch(*id));
                }
                self.sketches.insert(*id, Sketch::new(kind.clone()));
                Ok(())
            }
            RenderCommand::Stroke { id, stroke } => {
                if stroke.points.len() < 2 {
                    return Err(BoardError::Invalid("stroke needs at least two points"));
                }
                self.sketch_mut(*id)?.strokes.push(stroke.clone());
                Ok(())
            }
            RenderCommand::Text { id, text } => {
                self.sketch_mut(*id)?.texts.push(text.clone());
                Ok(())
            }
            RenderCommand::SetTransform { id, matrix } => {
                if !matrix.iter().all(|v| v.is_finite()) {
                    return Err(BoardError::Invalid("transform has non-finite entries"));
                }
                self.sketch_mut(*id)?.transform = *matrix;
                Ok(())
            }
            RenderCommand::Link { from, to } => {
                if !self.sketches.contains_key(from) || !self.sketches.contains_key(to) {
                    return Err(BoardError::DanglingLink { from: *from, to: *to });
                }
                self.links.insert((*from, *to));
                Ok(())
            }
            RenderCommand::SetValue { id, value } => {
                self.sketch_mut(*id)?.value = Some(*value);
                Ok(())
            }
            RenderCommand::Cursor { at } => {
                self.cursor = Some(Vec3::from_f32(*at));
                Ok(())
            }
            RenderCommand::Pan { delta } => {
                self.pan_offset += Vec3::from_f32(*delta);
                Ok(())
            }
            RenderCommand::DeleteSketch { id } => {
                self.sketches.remove(id).ok_or(BoardError::UnknownSketch(*id))?;
                self.links.retain(|(a, b)| a != id && b != id);
                Ok(())
            }
        }
    }

    /// Number of drawable items (strokes and texts).
    pub fn item_count(&self) -> usize {
        self.sketches.values().map(|s| s.strokes.len() + s.texts.len()).sum()
    }
}

/// Frame-atomic board replica.
#[derive(Debug, Clone, Default)]
pub struct Board {
    committed: BoardState,
    pending: Option<(u64, BoardState)>,
    last_frame: Option<u64>,
}

/// Outcome of [`Board::apply_command`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Applied {
    Buffered,
    /// `END_FRAME` published a new state.
    Committed {
        frame: u64,
    },
}

impl Board {
    pub fn new() -> Self {
        Self::default()
    }

    /// The last committed state; never shows a partially applied frame.
    pub fn state(&self) -> &BoardState {
        &self.committed
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.last_frame
    }

    pub fn frame_open(&self) -> bool {
        self.pending.is_some()
    }

    pub fn apply_command(&mut self, c: &RenderCommand) -> Result<Applied, BoardError> {
        match c {
            RenderCommand::BeginFrame { frame } => {
                if let Some((open, _)) = &self.pending {
                    return Err(BoardError::FrameAlreadyOpen { open: *open });
                }
                self.pending = Some((*frame, self.committed.clone()));
                Ok(Applied::Buffered)
            }
            RenderCommand::EndFrame { frame } => {
                let open = self.pending.as_ref().ok_or(BoardError::OutOfFrameCommand)?.0;
                if open != *frame {
                    return Err(BoardError::FrameMismatch { open, got: *frame });
                }
                let (_, state) = self.pending.take().expect("checked above");
                self.committed = state;
                self.last_frame = Some(*frame);
                Ok(Applied::Committed { frame: *frame })
            }
            other => {
                let (_, state) = self.pending.as_mut().ok_or(BoardError::OutOfFrameCommand)?;
                state.apply(other)?;
                Ok(Applied::Buffered)
            }
        }
    }

    pub fn snapshot(&self) -> String {
        snapshot(&self.committed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewMode {
    /// Bounded viewport; items outside the board extents are clipped.
    Projected,
    /// Unbounded board; everything stays in view.
    Mr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ItemRef {
    Stroke(usize),
    Text(usize),
}

/// A drawable item with its effective board-space points (transform and pan applied).
#[derive(Debug, Clone, PartialEq)]
pub struct DrawItem {
    pub sketch: u32,
    pub item: ItemRef,
    pub points: Vec<Vec3>,
}

/// Items the given view shows. An item is inside the projected viewport if
/// at least one of its points falls within the board extents.
pub fn visible_content(state: &BoardState, board: &BoardPlane, mode: ViewMode) -> Vec<DrawItem> {
    let mut out = Vec::new();
    for (id, s) in &state.sketches {
        let place = |p: &[f32; 3]| s.place(*p) + state.pan_offset;
        let strokes = s
            .strokes
            .iter()
            .enumerate()
            .map(|(i, st)| (ItemRef::Stroke(i), st.points.iter().map(place).collect::<Vec<_>>()));
        let texts = s
            .texts
            .iter()
            .enumerate()
            .map(|(i, t)| (ItemRef::Text(i), vec![place(&t.anchor)]));
        for (item, points) in strokes.chain(texts) {
            let keep = match mode {
                ViewMode::Mr => true,
                ViewMode::Projected => points.iter().any(|p| board.contains(*p)),
            };
            if keep {
                out.push(DrawItem {
                    sketch: *id,
                    item,
                    points,
                });
            }
        }
    }
    out
}

/// `%g`-style formatting with 6 significant digits; `-0` prints as `0`.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mant = trim_zeros(mant);
        return format!("{mant}e{exp}");
    }
    trim_zeros(&format!("{:.*}", (5 - exp) as usize, x)).to_owned()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn push_vec(out: &mut String, v: impl IntoIterator<Item = f64>) {
    for x in v {
        out.push(' ');
        out.push_str(&fmt_sig6(x));
    }
}

/// Canonical text form of a board state, used for golden comparisons
/// (`.board.txt`). Sketches in id order, links sorted, floats at 6
/// significant digits.
pub fn snapshot(state: &BoardState) -> String {
    let mut out = String::from("board v1\n");
    out.push_str("pan");
    push_vec(&mut out, state.pan_offset.to_array());
    out.push('\n');
    match state.cursor {
        Some(c) => {
            out.push_str("cursor");
            push_vec(&mut out, c.to_array());
            out.push('\n');
        }
        None => out.push_str("cursor none\n"),
    }
    for (id, s) in &state.sketches {
        let _ = writeln!(out, "sketch {id} {:?}", s.kind);
        match s.value {
            Some(v) => {
                let _ = writeln!(out, "  value {}", fmt_sig6(v as f64));
            }
            None => out.push_str("  value none\n"),
        }
        out.push_str("  transform");
        push_vec(&mut out, s.transform.iter().map(|v| *v as f64));
        out.push('\n');
        for st in &s.strokes {
            let [r, g, b, a] = st.color;
            let _ = write!(
                out,
                "  stroke rgba {r} {g} {b} {a} width {} points {}",
                fmt_sig6(st.width as f64),
                st.points.len()
            );
            push_vec(&mut out, st.points.iter().flatten().map(|v| *v as f64));
            out.push('\n');
        }
        for t in &s.texts {
            let _ = write!(out, "  text height {} anchor", fmt_sig6(t.height as f64));
            push_vec(&mut out, t.anchor.iter().map(|v| *v as f64));
            let _ = writeln!(out, " {:?}", t.text);
        }
    }
    for (a, b) in &state.links {
        let _ = writeln!(out, "link {a} {b}");
    }
    out
}
