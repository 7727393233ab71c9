//! Session roles, avatar pose replication and the mirrored face-to-face view.
//!
//! Every participant publishes their pose from their own side of the board
//! (the side the board normal points to). Each viewer renders remote avatars
//! reflected across the board plane, so the two parties face each other with
//! the content between them and unreversed for both. Reflection preserves the
//! point where a gaze ray meets the board.
//!
//! Reflection flips handedness: a renderer rebuilding the avatar basis from a
//! mirrored pose must use `right = forward × up` rather than reusing a stored
//! right vector.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::wire::{Flake, Payload};

/// Tolerance for unit length and orthogonality of incoming poses.
pub const POSE_TOLERANCE: f64 = 1e-6;
/// Looser tolerance applied to poses decoded from 32-bit wire floats.
pub const WIRE_POSE_TOLERANCE: f64 = 1e-5;
pub const POSE_LABEL_PREFIX: &str = "pose.";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("degenerate pose: {0}")]
    DegeneratePose(String),
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("malformed pose payload: {0}")]
    MalformedPosePayload(String),
    #[error("invalid board plane: {0}")]
    InvalidBoard(String),
    #[error("a session needs exactly one presenter, found {0}")]
    PresenterCount(usize),
    #[error("{0:?} is already the presenter")]
    PresenterTaken(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Presenter,
    Audience,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvatarPose {
    pub user: String,
    /// Milliseconds on the session clock.
    pub t: u64,
    pub position: Vec3,
    pub forward: Vec3,
    pub up: Vec3,
    pub gaze_origin: Vec3,
    pub gaze_dir: Vec3,
}

impl AvatarPose {
    /// Checks unit length and orthogonality within `tol`.
    pub fn check(&self, tol: f64) -> Result<(), SessionError> {
        let all = [self.position, self.forward, self.up, self.gaze_origin, self.gaze_dir];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(SessionError::DegeneratePose("non-finite component".into()));
        }
        for (name, v) in [("forward", self.forward), ("up", self.up), ("gaze_dir", self.gaze_dir)] {
            if (v.norm() - 1.0).abs() > tol {
                return Err(SessionError::DegeneratePose(format!(
                    "|{name}| = {} is not unit",
                    v.norm()
                )));
            }
        }
        let d = self.forward.dot(self.up);
        if d.abs() > tol {
            return Err(SessionError::DegeneratePose(format!(
                "forward·up = {d} is not orthogonal"
            )));
        }
        Ok(())
    }
}

/// The shared content plane between presenter and audience.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardPlane {
    pub origin: Vec3,
    /// Unit normal pointing toward the presenter's side.
    pub normal: Vec3,
    /// Half-width and half-height of the projected viewport, in meters.
    pub extents: [f64; 2],
}

impl Default for BoardPlane {
    /// Plane z = 0 facing +z with a 4 m × 2.5 m projected viewport.
    fn default() -> Self {
        BoardPlane {
            origin: Vec3::ZERO,
            normal: Vec3::Z,
            extents: [2.0, 1.25],
        }
    }
}

impl BoardPlane {
    pub fn new(origin: Vec3, normal: Vec3, extents: [f64; 2]) -> Result<Self, SessionError> {
        let b = BoardPlane {
            origin,
            normal,
            extents,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if !self.origin.is_finite() || !self.normal.is_finite() {
            return Err(SessionError::InvalidBoard("non-finite origin or normal".into()));
        }
        if (self.normal.norm() - 1.0).abs() > 1e-9 {
            return Err(SessionError::InvalidBoard(format!(
                "normal has length {}",
                self.normal.norm()
            )));
        }
        if !(self.extents[0] > 0.0 && self.extents[1] > 0.0) {
            return Err(SessionError::InvalidBoard("extents must be positive".into()));
        }
        Ok(())
    }

    /// Signed distance of `p` from the plane, positive on the normal side.
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        (p - self.origin).dot(self.normal)
    }

    pub fn reflect_point(&self, p: Vec3) -> Vec3 {
        p - self.normal * (2.0 * self.signed_distance(p))
    }

    pub fn reflect_dir(&self, d: Vec3) -> Vec3 {
        d - self.normal * (2.0 * d.dot(self.normal))
    }

    /// Forward ray intersection. `None` when the ray is parallel to the plane
    /// (|dir·n| < 1e-9) or the plane lies behind the origin.
    pub fn intersect_ray(&self, origin: Vec3, dir: Vec3) -> Option<Vec3> {
        let denom = dir.dot(self.normal);
        if denom.abs() < 1e-9 {
            return None;
        }
        let t = (self.origin - origin).dot(self.normal) / denom;
        if t < 0.0 {
            return None;
        }
        Some(origin + dir * t)
    }

    /// In-plane unit axes (right, up). "Up" is the world +y projected onto the
    /// plane, or +z when the normal is vertical.
    pub fn axes(&self) -> (Vec3, Vec3) {
        let hint = if self.normal.cross(Vec3::Y).norm() < 1e-6 {
            Vec3::Z
        } else {
            Vec3::Y
        };
        let right = hint.cross(self.normal).normalized().unwrap_or(Vec3::X);
        let up = self.normal.cross(right);
        (right, up)
    }

    /// Board-plane coordinates of `p` along [`BoardPlane::axes`].
    pub fn plane_coords(&self, p: Vec3) -> (f64, f64) {
        let (r, u) = self.axes();
        let d = p - self.origin;
        (d.dot(r), d.dot(u))
    }

    /// Whether `p` projects inside the viewport rectangle (edges inclusive).
    pub fn contains(&self, p: Vec3) -> bool {
        let (a, b) = self.plane_coords(p);
        a.abs() <= self.extents[0] && b.abs() <= self.extents[1]
    }
}

fn renorm(v: Vec3, what: &str) -> Result<Vec3, SessionError> {
    v.normalized()
        .ok_or_else(|| SessionError::DegeneratePose(format!("{what} vanished")))
}

/// Reflects a pose across the board plane: position, gaze origin and every
/// direction vector. Directions are renormalized; user and timestamp are kept.
pub fn mirror_pose(p: &AvatarPose, board: &BoardPlane) -> Result<AvatarPose, SessionError> {
    p.check(POSE_TOLERANCE)?;
    Ok(AvatarPose {
        user: p.user.clone(),
        t: p.t,
        position: board.reflect_point(p.position),
        forward: renorm(board.reflect_dir(p.forward), "forward")?,
        up: renorm(board.reflect_dir(p.up), "up")?,
        gaze_origin: board.reflect_point(p.gaze_origin),
        gaze_dir: renorm(board.reflect_dir(p.gaze_dir), "gaze_dir")?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub role: Role,
    pub pose: Option<AvatarPose>,
}

/// Session configuration file:
///
/// ```json
/// {"board": {"origin": [0,0,0], "normal": [0,0,1], "extents": [2.0, 1.25]},
///  "roles": {"P": "presenter", "A": "audience"},
///  "open_join": true}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default)]
    pub board: BoardPlane,
    pub roles: BTreeMap<String, Role>,
    #[serde(default = "default_open_join")]
    pub open_join: bool,
}

fn default_open_join() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub board: BoardPlane,
    pub participants: BTreeMap<String, Participant>,
    pub pan_offset: Vec3,
    /// Unknown `pose.<user>` labels register the user as audience.
    pub open_join: bool,
}

impl SessionState {
    pub fn new(board: BoardPlane, presenter: impl Into<String>) -> Result<Self, SessionError> {
        board.validate()?;
        let mut participants = BTreeMap::new();
        participants.insert(
            presenter.into(),
            Participant {
                role: Role::Presenter,
                pose: None,
            },
        );
        Ok(SessionState {
            board,
            participants,
            pan_offset: Vec3::ZERO,
            open_join: true,
        })
    }

    pub fn from_config(cfg: &SessionConfig) -> Result<Self, SessionError> {
        cfg.board.validate()?;
        let presenters = cfg.roles.values().filter(|r| **r == Role::Presenter).count();
        if presenters != 1 {
            return Err(SessionError::PresenterCount(presenters));
        }
        Ok(SessionState {
            board: cfg.board.clone(),
            participants: cfg
                .roles
                .iter()
                .map(|(u, r)| (u.clone(), Participant { role: *r, pose: None }))
                .collect(),
            pan_offset: Vec3::ZERO,
            open_join: cfg.open_join,
        })
    }

    /// Adds (or re-roles) a participant, keeping exactly one presenter.
    pub fn join(&mut self, user: impl Into<String>, role: Role) -> Result<(), SessionError> {
        let user = user.into();
        if role == Role::Presenter {
            if let Some(p) = self.presenter().filter(|p| *p != user) {
                return Err(SessionError::PresenterTaken(p.to_owned()));
            }
        }
        let entry = self
            .participants
            .entry(user)
            .or_insert(Participant { role, pose: None });
        entry.role = role;
        Ok(())
    }

    pub fn presenter(&self) -> Option<&str> {
        self.participants
            .iter()
            .find(|(_, p)| p.role == Role::Presenter)
            .map(|(u, _)| u.as_str())
    }

    pub fn role_of(&self, user: &str) -> Option<Role> {
        self.participants.get(user).map(|p| p.role)
    }

    pub fn pose_of(&self, user: &str) -> Option<&AvatarPose> {
        self.participants.get(user).and_then(|p| p.pose.as_ref())
    }

    /// Users whose avatars `viewer` sees: every audience member for the
    /// presenter, only the presenter for an audience member.
    pub fn visible_avatars(&self, viewer: &str) -> Result<BTreeSet<String>, SessionError> {
        visible_avatars(self, viewer)
    }

    /// Mirrored poses of the visible users that have published a pose.
    pub fn rendered_avatars(&self, viewer: &str) -> Result<Vec<AvatarPose>, SessionError> {
        self.visible_avatars(viewer)?
            .iter()
            .filter_map(|u| self.pose_of(u))
            .map(|p| mirror_pose(p, &self.board))
            .collect()
    }
}

pub fn visible_avatars(s: &SessionState, viewer: &str) -> Result<BTreeSet<String>, SessionError> {
    let role = s
        .role_of(viewer)
        .ok_or_else(|| SessionError::UnknownUser(viewer.to_owned()))?;
    let want = match role {
        Role::Presenter => Role::Audience,
        Role::Audience => Role::Presenter,
    };
    Ok(s.participants
        .iter()
        .filter(|(u, p)| p.role == want && u.as_str() != viewer)
        .map(|(u, _)| u.clone())
        .collect())
}

/// Encodes a pose as the canonical `pose.<user>` payload: four VEC3 elements
/// (position, forward, up, gaze_dir). The gaze origin is the head position.
pub fn pose_payload(p: &AvatarPose) -> Payload {
    Payload::Vec3(vec![
        p.position.to_f32(),
        p.forward.to_f32(),
        p.up.to_f32(),
        p.gaze_dir.to_f32(),
    ])
}

/// Decodes a pose payload stamped with time `t`.
///
/// Accepts the canonical four-VEC3 layout, or four VEC4 elements in
/// homogeneous form (w = 1 for the position, w = 0 for directions).
/// Directions are renormalized and `up` re-orthogonalized against `forward`
/// after checking them at 32-bit wire precision.
pub fn pose_from_payload(user: &str, t: u64, payload: &Payload) -> Result<AvatarPose, SessionError> {
    let vecs: Vec<Vec3> = match payload {
        Payload::Vec3(v) if v.len() == 4 => v.iter().map(|e| Vec3::from_f32(*e)).collect(),
        Payload::Vec4(v) if v.len() == 4 => {
            if v[0][3] != 1.0 || v[1..].iter().any(|e| e[3] != 0.0) {
                return Err(SessionError::MalformedPosePayload(
                    "VEC4 pose needs w=1 for position and w=0 for directions".into(),
                ));
            }
            v.iter().map(|e| Vec3::from_f32([e[0], e[1], e[2]])).collect()
        }
        other => {
            return Err(SessionError::MalformedPosePayload(format!(
                "expected 4 VEC3 or 4 VEC4 elements, got {:?} x{}",
                other.tag(),
                other.count()
            )))
        }
    };
    let raw = AvatarPose {
        user: user.to_owned(),
        t,
        position: vecs[0],
        forward: vecs[1],
        up: vecs[2],
        gaze_origin: vecs[0],
        gaze_dir: vecs[3],
    };
    raw.check(WIRE_POSE_TOLERANCE)
        .map_err(|e| SessionError::MalformedPosePayload(e.to_string()))?;
    let forward = renorm(raw.forward, "forward")?;
    let up = renorm(raw.up - forward * raw.up.dot(forward), "up")?;
    Ok(AvatarPose {
        forward,
        up,
        gaze_dir: renorm(raw.gaze_dir, "gaze_dir")?,
        ..raw
    })
}

/// User named by a `pose.<user>` label.
pub fn pose_label_user(label: &str) -> Option<&str> {
    label.strip_prefix(POSE_LABEL_PREFIX).filter(|u| !u.is_empty())
}

/// Applies a `pose.<user>` flake received at time `t`. Returns whether the
/// stored pose was replaced; updates not newer than the stored one are ignored.
pub fn apply_pose_update(s: &mut SessionState, f: &Flake, t: u64) -> Result<bool, SessionError> {
    let user = pose_label_user(&f.label)
        .ok_or_else(|| SessionError::MalformedPosePayload(format!("label {:?} is not pose.<user>", f.label)))?;
    let pose = pose_from_payload(user, t, &f.payload)?;
    apply_pose(s, pose)
}

/// Stores `pose` if it is newer than the user's current one.
pub fn apply_pose(s: &mut SessionState, pose: AvatarPose) -> Result<bool, SessionError> {
    if !s.participants.contains_key(&pose.user) {
        if !s.open_join {
            return Err(SessionError::UnknownUser(pose.user));
        }
        s.join(pose.user.clone(), Role::Audience)?;
    }
    let slot = &mut s.participants.get_mut(&pose.user).expect("just ensured").pose;
    match slot {
        Some(old) if old.t >= pose.t => Ok(false),
        _ => {
            *slot = Some(pose);
            Ok(true)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::DeliveryClass;

    fn pose(user: &str, t: u64, pos: Vec3, fwd: Vec3) -> AvatarPose {
        AvatarPose {
            user: user.into(),
            t,
            position: pos,
            forward: fwd,
            up: Vec3::Y,
            gaze_origin: pos,
            gaze_dir: fwd,
        }
    }

    #[test]
    fn axis_aligned_reflection() {
        let b = BoardPlane::default();
        let p = pose("P", 5, Vec3::new(0.5, 1.6, 1.0), Vec3::new(0.0, 0.0, -1.0));
        let m = mirror_pose(&p, &b).unwrap();
        assert_eq!(m.position, Vec3::new(0.5, 1.6, -1.0));
        assert_eq!(m.forward, Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(m.up, Vec3::Y);
        assert_eq!((m.user.as_str(), m.t), ("P", 5));
    }

    #[test]
    fn plane_points_are_fixed() {
        let b = BoardPlane::default();
        let q = Vec3::new(0.3, 1.2, 0.0);
        assert_eq!(b.reflect_point(q), q);
    }

    #[test]
    fn gaze_point_preserved() {
        let b = BoardPlane::default();
        let eye = Vec3::new(0.0, 1.6, 1.0);
        let target = Vec3::new(0.2, 1.0, 0.0);
        let dir = (target - eye).normalized().unwrap();
        let mut p = pose("A", 0, eye, Vec3::new(0.0, 0.0, -1.0));
        p.gaze_dir = dir;
        let m = mirror_pose(&p, &b).unwrap();
        let hit = b.intersect_ray(m.gaze_origin, m.gaze_dir).unwrap();
        assert!(hit.max_abs_diff(target) < 1e-12, "{hit:?}");
    }

    #[test]
    fn degenerate_pose_rejected() {
        let b = BoardPlane::default();
        let mut p = pose("P", 0, Vec3::ZERO, Vec3::new(0.0, 0.0, -1.0));
        p.up = Vec3::new(0.0, 0.5, 0.5);
        assert!(matches!(mirror_pose(&p, &b), Err(SessionError::DegeneratePose(_))));
        p.up = Vec3::new(0.0, 0.6, -0.8);
        assert!(matches!(mirror_pose(&p, &b), Err(SessionError::DegeneratePose(_))));
    }

    #[test]
    fn board_validation() {
        assert!(BoardPlane::new(Vec3::ZERO, Vec3::new(0.0, 0.0, 2.0), [1.0, 1.0]).is_err());
        assert!(BoardPlane::new(Vec3::ZERO, Vec3::Z, [0.0, 1.0]).is_err());
    }

    #[test]
    fn ray_plane_cases() {
        let b = BoardPlane::default();
        assert_eq!(b.intersect_ray(Vec3::new(0.0, 0.0, 1.0), -Vec3::Z), Some(Vec3::ZERO));
        assert_eq!(
            b.intersect_ray(Vec3::new(1.0, 2.0, 2.0), -Vec3::Z),
            Some(Vec3::new(1.0, 2.0, 0.0))
        );
        assert_eq!(b.intersect_ray(Vec3::new(0.0, 0.0, 1.0), Vec3::X), None);
        assert_eq!(b.intersect_ray(Vec3::new(0.0, 0.0, 1.0), Vec3::Z), None);
    }

    #[test]
    fn axes_for_tilted_and_vertical_normals() {
        let b = BoardPlane::default();
        assert_eq!(b.axes(), (Vec3::X, Vec3::Y));
        let floor = BoardPlane::new(Vec3::ZERO, Vec3::Y, [1.0, 1.0]).unwrap();
        let (r, u) = floor.axes();
        assert!(r.dot(Vec3::Y).abs() < 1e-12 && u.dot(Vec3::Y).abs() < 1e-12);
        assert!((r.cross(u).dot(Vec3::Y) - 1.0).abs() < 1e-12);
    }

    fn session(audience: &[&str]) -> SessionState {
        let mut s = SessionState::new(BoardPlane::default(), "P").unwrap();
        for a in audience {
            s.join(*a, Role::Audience).unwrap();
        }
        s
    }

    fn set(users: &[&str]) -> BTreeSet<String> {
        users.iter().map(|u| u.to_string()).collect()
    }

    #[test]
    fn visibility_is_star() {
        let s = session(&["A", "B"]);
        assert_eq!(s.visible_avatars("P").unwrap(), set(&["A", "B"]));
        assert_eq!(s.visible_avatars("A").unwrap(), set(&["P"]));
        assert_eq!(s.visible_avatars("B").unwrap(), set(&["P"]));
        assert!(session(&[]).visible_avatars("P").unwrap().is_empty());
        assert!(matches!(s.visible_avatars("Z"), Err(SessionError::UnknownUser(_))));
    }

    #[test]
    fn one_presenter_only() {
        let mut s = session(&["A"]);
        assert!(matches!(
            s.join("A", Role::Presenter),
            Err(SessionError::PresenterTaken(_))
        ));
        let cfg = SessionConfig {
            board: BoardPlane::default(),
            roles: [("A".to_string(), Role::Audience)].into(),
            open_join: false,
        };
        assert_eq!(SessionState::from_config(&cfg), Err(SessionError::PresenterCount(0)));
    }

    fn flake(user: &str, p: &AvatarPose) -> Flake {
        Flake::new(
            "demo",
            format!("pose.{user}"),
            user,
            DeliveryClass::State,
            1,
            pose_payload(p),
        )
    }

    #[test]
    fn pose_update_monotone() {
        let mut s = session(&["A"]);
        let p1 = pose("A", 0, Vec3::new(0.0, 1.6, 1.0), -Vec3::Z);
        let p2 = pose("A", 0, Vec3::new(0.5, 1.6, 1.0), -Vec3::Z);
        assert!(apply_pose_update(&mut s, &flake("A", &p1), 100).unwrap());
        assert!(apply_pose_update(&mut s, &flake("A", &p2), 200).unwrap());
        assert!(!apply_pose_update(&mut s, &flake("A", &p1), 150).unwrap());
        assert!(s.pose_of("A").unwrap().position.max_abs_diff(Vec3::new(0.5, 1.6, 1.0)) < 1e-6);
        assert_eq!(s.pose_of("A").unwrap().t, 200);
    }

    #[test]
    fn open_join_and_closed_sessions() {
        let mut s = session(&[]);
        let p = pose("C", 0, Vec3::new(0.0, 1.6, 1.0), -Vec3::Z);
        apply_pose_update(&mut s, &flake("C", &p), 1).unwrap();
        assert_eq!(s.role_of("C"), Some(Role::Audience));
        s.open_join = false;
        assert!(matches!(
            apply_pose_update(&mut s, &flake("D", &p), 1),
            Err(SessionError::UnknownUser(_))
        ));
    }

    #[test]
    fn malformed_pose_payloads() {
        let mut s = session(&["A"]);
        let mut f = Flake::new(
            "demo",
            "pose.A",
            "A",
            DeliveryClass::State,
            1,
            Payload::Floats(vec![1.0]),
        );
        assert!(matches!(
            apply_pose_update(&mut s, &f, 1),
            Err(SessionError::MalformedPosePayload(_))
        ));
        f.payload = Payload::Vec3(vec![[0.0; 3]; 4]);
        assert!(matches!(
            apply_pose_update(&mut s, &f, 1),
            Err(SessionError::MalformedPosePayload(_))
        ));
        f.label = "pose.".into();
        assert!(apply_pose_update(&mut s, &f, 1).is_err());
    }

    #[test]
    fn homogeneous_vec4_variant() {
        let payload = Payload::Vec4(vec![
            [0.0, 1.6, 1.0, 1.0],
            [0.0, 0.0, -1.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, -1.0, 0.0],
        ]);
        let p = pose_from_payload("A", 7, &payload).unwrap();
        assert!(p.position.max_abs_diff(Vec3::new(0.0, 1.6, 1.0)) < 1e-6);
        assert_eq!(p.gaze_origin, p.position);
        let bad = Payload::Vec4(vec![[0.0, 1.6, 1.0, 0.0]; 4]);
        assert!(pose_from_payload("A", 7, &bad).is_err());
    }

    #[test]
    fn config_json_shape() {
        let cfg: SessionConfig = serde_json::from_str(
            r#"{"board":{"origin":[0,0,0],"normal":[0,0,1],"extents":[2.0,1.25]},
                "roles":{"P":"presenter","A":"audience"}}"#,
        )
        .unwrap();
        assert!(cfg.open_join);
        let s = SessionState::from_config(&cfg).unwrap();
        assert_eq!(s.presenter(), Some("P"));
    }
}
