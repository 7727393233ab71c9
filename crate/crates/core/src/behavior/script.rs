//! Lecture scripts: timed sketch actions plus presenter annotations.
//!
//! Scripts are JSON:
//!
//! ```json
//! {"title": "...", "duration_ms": 600000, "actions": [
//!   {"t_ms": 0, "type": "create", "id": 1, "kind": {"type": "cube", "size": 0.4}, "at": [-1.2, 0.2, 0]},
//!   {"t_ms": 500, "type": "link", "from": 3, "to": 2},
//!   {"t_ms": 900, "type": "pan", "delta": [-4, 0, 0]},
//!   {"t_ms": 900, "type": "gesture", "description": "sweeps the board"}
//! ]}
//! ```

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::BehaviorError;
use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Simulated sketch types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SketchKind {
    /// Wireframe cube with an orientation marker; consumes matrices.
    Cube {
        size: f64,
    },
    /// Constant translation matrix.
    Translation {
        offset: [f64; 3],
    },
    /// Constant rotation matrix.
    Rotation {
        axis: Axis,
        angle: f64,
    },
    /// Outputs `left · right` once both operands arrive over links.
    Product {
        left: u32,
        right: u32,
    },
    /// Small-angle pendulum emitting its angle in radians.
    Pendulum {
        theta0: f64,
        omega: f64,
    },
    /// Appends every scalar it receives as a curve sample.
    Plot,
    Label {
        text: String,
    },
}

impl SketchKind {
    /// Name sent in `CREATE_SKETCH`.
    pub fn name(&self) -> &'static str {
        match self {
            SketchKind::Cube { .. } => "cube",
            SketchKind::Translation { .. } | SketchKind::Rotation { .. } => "matrix",
            SketchKind::Product { .. } => "product",
            SketchKind::Pendulum { .. } => "pendulum",
            SketchKind::Plot => "plot",
            SketchKind::Label { .. } => "label",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Create {
        id: u32,
        kind: SketchKind,
        at: Vec3,
    },
    Link {
        from: u32,
        to: u32,
    },
    Delete {
        id: u32,
    },
    Cursor {
        at: Vec3,
    },
    Pan {
        delta: Vec3,
    },
    /// Sets a pendulum swinging with the given amplitude.
    Excite {
        id: u32,
        theta0: f64,
    },
    /// Presenter gesture; logged, not rendered.
    Gesture {
        description: String,
    },
    /// Deictic utterance ("this", "here"), optionally referring to a sketch.
    Deictic {
        word: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sketch: Option<u32>,
    },
}

impl Action {
    pub fn is_annotation(&self) -> bool {
        matches!(self, Action::Gesture { .. } | Action::Deictic { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedAction {
    pub t_ms: u64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LectureScript {
    pub title: String,
    pub duration_ms: u64,
    pub actions: Vec<TimedAction>,
}

impl LectureScript {
    pub fn validate(&self) -> Result<(), BehaviorError> {
        if let Some(w) = self.actions.windows(2).find(|w| w[1].t_ms < w[0].t_ms) {
            return Err(BehaviorError::Script(format!(
                "action times decrease: {} after {}",
                w[1].t_ms, w[0].t_ms
            )));
        }
        if self.actions.last().is_some_and(|a| a.t_ms > self.duration_ms) {
            return Err(BehaviorError::Script("action after script end".into()));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self, BehaviorError> {
        let script: LectureScript = serde_json::from_str(s).map_err(|e| BehaviorError::Script(e.to_string()))?;
        script.validate()?;
        Ok(script)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }

    /// Divides every timestamp by `factor` (rounding to the nearest ms).
    pub fn compressed(&self, factor: f64) -> Result<LectureScript, BehaviorError> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(BehaviorError::Script(format!("invalid time scale {factor}")));
        }
        let scale = |t: u64| (t as f64 / factor).round() as u64;
        Ok(LectureScript {
            title: self.title.clone(),
            duration_ms: scale(self.duration_ms),
            actions: self
                .actions
                .iter()
                .map(|a| TimedAction {
                    t_ms: scale(a.t_ms),
                    action: a.action.clone(),
                })
                .collect(),
        })
    }

    pub fn count(&self, pred: impl Fn(&Action) -> bool) -> usize {
        self.actions.iter().filter(|a| pred(&a.action)).count()
    }
}

/// Ids used by the generated lesson.
pub mod lesson_ids {
    pub const TITLE: u32 = 1;
    pub const CUBE_A: u32 = 2;
    pub const TRANSLATE_A: u32 = 3;
    pub const CUBE_B: u32 = 4;
    pub const ROTATE_B: u32 = 5;
    pub const TRANSLATE: u32 = 6;
    pub const ROTATE: u32 = 7;
    pub const PRODUCT_TR: u32 = 8;
    pub const PRODUCT_RT: u32 = 9;
    pub const CUBE_TR: u32 = 10;
    pub const CUBE_RT: u32 = 11;
    pub const SUMMARY: u32 = 12;
}

/// The ten-minute matrix lesson.
///
/// Part one applies a translation and a rotation to two cubes through links.
/// The board is then panned 4 m to the left and part two builds T·R and R·T
/// side by side, each driving its own cube, to show that the order matters.
/// Part-one content lies within |x| < 2 so the pan moves all of it past the
/// default projected viewport; part-two content is placed 4 m to the right in
/// stored coordinates so it lands back in view.
pub fn generate_matrix_lesson() -> LectureScript {
    use lesson_ids::*;
    let v = Vec3::new;
    let s = |t: u64| t * 1000;
    let mut a: Vec<(u64, Action)> = Vec::new();
    let mut push = |t: u64, act: Action| a.push((t, act));

    // Part one: applying a matrix to geometry.
    push(
        0,
        Action::Create {
            id: TITLE,
            kind: SketchKind::Label {
                text: "4x4 transformation matrices".into(),
            },
            at: v(0.0, 1.0, 0.0),
        },
    );
    push(
        s(4),
        Action::Gesture {
            description: "greets the audience and opens both hands toward the board".into(),
        },
    );
    push(
        s(10),
        Action::Create {
            id: CUBE_A,
            kind: SketchKind::Cube { size: 0.4 },
            at: v(-1.2, 0.3, 0.0),
        },
    );
    push(s(20), Action::Cursor { at: v(-1.2, 0.3, 0.0) });
    push(
        s(20),
        Action::Deictic {
            word: "this".into(),
            sketch: Some(CUBE_A),
        },
    );
    push(
        s(40),
        Action::Create {
            id: TRANSLATE_A,
            kind: SketchKind::Translation {
                offset: [1.0, 0.0, 0.0],
            },
            at: v(-1.5, -0.6, 0.0),
        },
    );
    push(s(55), Action::Cursor { at: v(-1.2, -0.6, 0.0) });
    push(
        s(55),
        Action::Deictic {
            word: "here".into(),
            sketch: Some(TRANSLATE_A),
        },
    );
    push(
        s(70),
        Action::Link {
            from: TRANSLATE_A,
            to: CUBE_A,
        },
    );
    push(
        s(80),
        Action::Gesture {
            description: "traces the cube's path with the drawing hand".into(),
        },
    );
    push(
        s(100),
        Action::Create {
            id: CUBE_B,
            kind: SketchKind::Cube { size: 0.4 },
            at: v(1.2, 0.3, 0.0),
        },
    );
    push(
        s(120),
        Action::Create {
            id: ROTATE_B,
            kind: SketchKind::Rotation {
                axis: Axis::Z,
                angle: FRAC_PI_2,
            },
            at: v(0.3, -0.6, 0.0),
        },
    );
    push(s(135), Action::Cursor { at: v(0.6, -0.6, 0.0) });
    push(
        s(135),
        Action::Deictic {
            word: "this rotation".into(),
            sketch: Some(ROTATE_B),
        },
    );
    push(
        s(150),
        Action::Link {
            from: ROTATE_B,
            to: CUBE_B,
        },
    );
    push(s(165), Action::Cursor { at: v(1.2, 0.3, 0.0) });
    push(
        s(165),
        Action::Gesture {
            description: "rotates a hand to mirror the cube".into(),
        },
    );
    push(
        s(200),
        Action::Deictic {
            word: "that".into(),
            sketch: Some(CUBE_A),
        },
    );

    // Part two: composition order.
    push(
        s(290),
        Action::Gesture {
            description: "sweeps the old content aside".into(),
        },
    );
    push(
        s(300),
        Action::Pan {
            delta: v(-4.0, 0.0, 0.0),
        },
    );
    push(
        s(310),
        Action::Create {
            id: TRANSLATE,
            kind: SketchKind::Translation {
                offset: [1.0, 0.0, 0.0],
            },
            at: v(2.4, 0.7, 0.0),
        },
    );
    push(
        s(320),
        Action::Create {
            id: ROTATE,
            kind: SketchKind::Rotation {
                axis: Axis::Z,
                angle: FRAC_PI_2,
            },
            at: v(4.6, 0.7, 0.0),
        },
    );
    push(
        s(340),
        Action::Create {
            id: PRODUCT_TR,
            kind: SketchKind::Product {
                left: TRANSLATE,
                right: ROTATE,
            },
            at: v(2.4, -0.2, 0.0),
        },
    );
    push(
        s(350),
        Action::Link {
            from: TRANSLATE,
            to: PRODUCT_TR,
        },
    );
    push(
        s(350),
        Action::Link {
            from: ROTATE,
            to: PRODUCT_TR,
        },
    );
    push(s(360), Action::Cursor { at: v(2.6, -0.2, 0.0) });
    push(
        s(360),
        Action::Deictic {
            word: "first this one".into(),
            sketch: Some(PRODUCT_TR),
        },
    );
    push(
        s(380),
        Action::Create {
            id: PRODUCT_RT,
            kind: SketchKind::Product {
                left: ROTATE,
                right: TRANSLATE,
            },
            at: v(4.6, -0.2, 0.0),
        },
    );
    push(
        s(390),
        Action::Link {
            from: ROTATE,
            to: PRODUCT_RT,
        },
    );
    push(
        s(390),
        Action::Link {
            from: TRANSLATE,
            to: PRODUCT_RT,
        },
    );
    push(
        s(420),
        Action::Create {
            id: CUBE_TR,
            kind: SketchKind::Cube { size: 0.3 },
            at: v(2.6, -0.95, 0.0),
        },
    );
    push(
        s(430),
        Action::Create {
            id: CUBE_RT,
            kind: SketchKind::Cube { size: 0.3 },
            at: v(4.4, -0.95, 0.0),
        },
    );
    push(
        s(450),
        Action::Link {
            from: PRODUCT_TR,
            to: CUBE_TR,
        },
    );
    push(
        s(470),
        Action::Link {
            from: PRODUCT_RT,
            to: CUBE_RT,
        },
    );
    push(s(480), Action::Cursor { at: v(3.6, -0.95, 0.0) });
    push(
        s(480),
        Action::Deictic {
            word: "these two".into(),
            sketch: None,
        },
    );
    push(
        s(500),
        Action::Gesture {
            description: "swaps both hands to show the reversed order".into(),
        },
    );
    push(
        s(540),
        Action::Create {
            id: SUMMARY,
            kind: SketchKind::Label {
                text: "T*R != R*T".into(),
            },
            at: v(4.0, 1.1, 0.0),
        },
    );
    push(s(560), Action::Cursor { at: v(4.0, 1.1, 0.0) });
    push(
        s(570),
        Action::Gesture {
            description: "closes the lesson".into(),
        },
    );

    LectureScript {
        title: "matrix lesson".into(),
        duration_ms: s(600),
        actions: a
            .into_iter()
            .map(|(t_ms, action)| TimedAction { t_ms, action })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lesson_is_deterministic_and_valid() {
        let a = generate_matrix_lesson();
        let b = generate_matrix_lesson();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(a.actions.len(), b.actions.len());
        assert_eq!(a.duration_ms, 600_000);
    }

    #[test]
    fn lesson_covers_activity_list() {
        let l = generate_matrix_lesson();
        assert!(l.count(|a| matches!(a, Action::Pan { .. })) >= 1);
        assert!(l.count(|a| matches!(a, Action::Cursor { .. })) >= 4);
        assert!(l.count(|a| matches!(a, Action::Gesture { .. })) >= 1);
        assert!(l.count(|a| matches!(a, Action::Deictic { .. })) >= 1);
    }

    #[test]
    fn json_round_trip_and_compression() {
        let l = generate_matrix_lesson();
        let back = LectureScript::from_json(&l.to_json()).unwrap();
        assert_eq!(back, l);
        let c = l.compressed(20.0).unwrap();
        assert_eq!(c.duration_ms, 30_000);
        assert_eq!(c.actions.len(), l.actions.len());
        c.validate().unwrap();
        assert!(l.compressed(0.0).is_err());
    }

    #[test]
    fn decreasing_times_rejected() {
        let json = r#"{"title":"x","duration_ms":10,"actions":[
            {"t_ms":5,"type":"cursor","at":[0,0,0]},
            {"t_ms":3,"type":"cursor","at":[0,0,0]}]}"#;
        assert!(matches!(LectureScript::from_json(json), Err(BehaviorError::Script(_))));
        assert!(LectureScript::from_json("{not json").is_err());
    }

    #[test]
    fn action_json_shape() {
        let t = TimedAction {
            t_ms: 7,
            action: Action::Link { from: 1, to: 2 },
        };
        assert_eq!(
            serde_json::to_string(&t).unwrap(),
            r#"{"t_ms":7,"type":"link","from":1,"to":2}"#
        );
    }
}
