//! Scripted stand-in for a behavior server: matrix and pendulum sketches,
//! link dataflow, and the matrix lesson.

mod engine;
mod matrix;
mod script;

use thiserror::Error;

/// Client interaction commands (STROKE, CURSOR, PAN) sent to the behavior node.
pub const INPUT_LABEL: &str = "input";
/// Presenter gesture and deictic annotations, as TEXT JSON.
pub const ANNOTATION_LABEL: &str = "annotation";

pub use engine::{
    propagate_links, Annotation, BehaviorEngine, FrameOutput, Inbox, Signal, EXCITE_GAIN, EXCITE_RADIUS,
    FREEHAND_BASE_ID,
};
pub use matrix::Mat4;
pub use script::{generate_matrix_lesson, lesson_ids, Action, Axis, LectureScript, SketchKind, TimedAction};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BehaviorError {
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("pendulum frequency must be positive")]
    NonPositiveOmega,
    #[error("script error: {0}")]
    Script(String),
}

pub fn mat_translation(dx: f64, dy: f64, dz: f64) -> Result<Mat4, BehaviorError> {
    Mat4::translation(dx, dy, dz)
}

pub fn mat_rotation_x(angle: f64) -> Result<Mat4, BehaviorError> {
    Mat4::rotation_x(angle)
}

pub fn mat_rotation_y(angle: f64) -> Result<Mat4, BehaviorError> {
    Mat4::rotation_y(angle)
}

pub fn mat_rotation_z(angle: f64) -> Result<Mat4, BehaviorError> {
    Mat4::rotation_z(angle)
}

/// `a · b`: apply `b` first.
pub fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    a.mul(b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumState {
    /// Amplitude, radians.
    pub theta0: f64,
    /// Angular frequency, radians per second.
    pub omega: f64,
    /// Seconds since release.
    pub t: f64,
}

impl PendulumState {
    pub fn new(theta0: f64, omega: f64, t: f64) -> Result<Self, BehaviorError> {
        if !(theta0.is_finite() && omega.is_finite() && t.is_finite()) {
            return Err(BehaviorError::NonFiniteInput);
        }
        if omega <= 0.0 {
            return Err(BehaviorError::NonPositiveOmega);
        }
        Ok(PendulumState { theta0, omega, t })
    }
}

/// Small-angle pendulum angle θ(t) = θ₀·cos(ωt), radians.
pub fn pendulum_value(s: &PendulumState) -> f64 {
    s.theta0 * (s.omega * s.t).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pendulum_closed_form() {
        assert_eq!(pendulum_value(&PendulumState::new(0.3, 2.0, 0.0).unwrap()), 0.3);
        let quarter = PendulumState::new(0.3, 2.0, std::f64::consts::FRAC_PI_2 / 2.0).unwrap();
        assert!(pendulum_value(&quarter).abs() < 1e-12);
        // 0.5·cos(1.4), cos(1.4) = 0.16996714290024093 (mpmath, 30 digits)
        let v = pendulum_value(&PendulumState::new(0.5, 2.0, 0.7).unwrap());
        assert!((v - 0.084_983_571_450_120_47).abs() < 1e-15, "{v}");
    }

    #[test]
    fn pendulum_rejects_bad_state() {
        assert_eq!(PendulumState::new(0.1, 0.0, 0.0), Err(BehaviorError::NonPositiveOmega));
        assert_eq!(
            PendulumState::new(f64::NAN, 1.0, 0.0),
            Err(BehaviorError::NonFiniteInput)
        );
    }
}
