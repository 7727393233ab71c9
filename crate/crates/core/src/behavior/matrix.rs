//! Homogeneous 4×4 matrices for the transformation lesson.

use std::ops::Mul;

use serde::{Deserialize, Serialize};

use super::BehaviorError;

/// Column-major 4×4 matrix of finite `f64`: entry (row r, column c) is `m[c * 4 + r]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 16]", into = "[f64; 16]")]
pub struct Mat4 {
    m: [f64; 16],
}

impl TryFrom<[f64; 16]> for Mat4 {
    type Error = BehaviorError;
    fn try_from(m: [f64; 16]) -> Result<Self, Self::Error> {
        Mat4::from_cols(m)
    }
}

impl From<Mat4> for [f64; 16] {
    fn from(m: Mat4) -> Self {
        m.m
    }
}

fn finite(vals: &[f64]) -> Result<(), BehaviorError> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(BehaviorError::NonFiniteInput)
    }
}

impl Mat4 {
    pub const IDENTITY: Mat4 = Mat4 {
        m: [
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ],
    };

    pub fn from_cols(m: [f64; 16]) -> Result<Mat4, BehaviorError> {
        finite(&m)?;
        Ok(Mat4 { m })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.m[col * 4 + row]
    }

    fn set(&mut self, row: usize, col: usize, v: f64) {
        self.m[col * 4 + row] = v;
    }

    pub fn as_cols(&self) -> &[f64; 16] {
        &self.m
    }

    pub fn translation(dx: f64, dy: f64, dz: f64) -> Result<Mat4, BehaviorError> {
        finite(&[dx, dy, dz])?;
        let mut t = Mat4::IDENTITY;
        t.set(0, 3, dx);
        t.set(1, 3, dy);
        t.set(2, 3, dz);
        Ok(t)
    }

    /// Rotation about +x by `angle` radians (right-handed).
    pub fn rotation_x(angle: f64) -> Result<Mat4, BehaviorError> {
        Self::plane_rotation(angle, 1, 2)
    }

    pub fn rotation_y(angle: f64) -> Result<Mat4, BehaviorError> {
        Self::plane_rotation(angle, 2, 0)
    }

    pub fn rotation_z(angle: f64) -> Result<Mat4, BehaviorError> {
        Self::plane_rotation(angle, 0, 1)
    }

    /// Rotation taking axis `a` toward axis `b`.
    fn plane_rotation(angle: f64, a: usize, b: usize) -> Result<Mat4, BehaviorError> {
        finite(&[angle])?;
        let (s, c) = angle.sin_cos();
        let mut r = Mat4::IDENTITY;
        r.set(a, a, c);
        r.set(a, b, -s);
        r.set(b, a, s);
        r.set(b, b, c);
        Ok(r)
    }

    /// Matrix product `self · rhs`: applied to a point, `rhs` acts first.
    pub fn mul(&self, rhs: &Mat4) -> Mat4 {
        let mut out = [0.0; 16];
        for c in 0..4 {
            for r in 0..4 {
                out[c * 4 + r] = (0..4).map(|k| self.get(r, k) * rhs.get(k, c)).sum();
            }
        }
        Mat4 { m: out }
    }

    pub fn apply(&self, v: [f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|k| self.get(r, k) * v[k]).sum();
        }
        out
    }

    pub fn transpose(&self) -> Mat4 {
        let mut t = Mat4::IDENTITY;
        for r in 0..4 {
            for c in 0..4 {
                t.set(r, c, self.get(c, r));
            }
        }
        t
    }

    /// Infinity norm (largest absolute row sum).
    pub fn inf_norm(&self) -> f64 {
        (0..4)
            .map(|r| (0..4).map(|c| self.get(r, c).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn sub(&self, o: &Mat4) -> Mat4 {
        let mut m = self.m;
        m.iter_mut().zip(o.m.iter()).for_each(|(a, b)| *a -= b);
        Mat4 { m }
    }

    /// Largest absolute entry difference.
    pub fn max_abs_diff(&self, o: &Mat4) -> f64 {
        self.m
            .iter()
            .zip(o.m.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_f32(&self) -> [f32; 16] {
        self.m.map(|v| v as f32)
    }
}

impl Mul for Mat4 {
    type Output = Mat4;
    fn mul(self, rhs: Mat4) -> Mat4 {
        Mat4::mul(&self, &rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: [f64; 4], b: [f64; 4], tol: f64) -> bool {
        a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn translation_moves_origin() {
        let t = Mat4::translation(1.0, 0.0, 0.0).unwrap();
        assert_eq!(t.apply([0.0, 0.0, 0.0, 1.0]), [1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = Mat4::rotation_z(FRAC_PI_2).unwrap();
        assert!(close(r.apply([1.0, 0.0, 0.0, 1.0]), [0.0, 1.0, 0.0, 1.0], 1e-12));
        assert_eq!(Mat4::rotation_z(0.0).unwrap(), Mat4::IDENTITY);
    }

    #[test]
    fn x_and_y_rotations_are_right_handed() {
        let rx = Mat4::rotation_x(FRAC_PI_2).unwrap();
        assert!(close(rx.apply([0.0, 1.0, 0.0, 0.0]), [0.0, 0.0, 1.0, 0.0], 1e-12));
        let ry = Mat4::rotation_y(FRAC_PI_2).unwrap();
        assert!(close(ry.apply([0.0, 0.0, 1.0, 0.0]), [1.0, 0.0, 0.0, 0.0], 1e-12));
    }

    #[test]
    fn non_finite_rejected() {
        assert_eq!(
            Mat4::translation(f64::NAN, 0.0, 0.0),
            Err(BehaviorError::NonFiniteInput)
        );
        assert_eq!(Mat4::rotation_z(f64::INFINITY), Err(BehaviorError::NonFiniteInput));
        let mut m = [0.0; 16];
        m[3] = f64::NEG_INFINITY;
        assert!(Mat4::from_cols(m).is_err());
        assert!(serde_json::from_str::<Mat4>("[1,0,0,0,0,1,0,0,0,0,1,0,0,0,0,1]").is_ok());
    }

    #[test]
    fn column_major_layout() {
        let t = Mat4::translation(1.0, 2.0, 3.0).unwrap();
        assert_eq!(&t.as_cols()[12..15], &[1.0, 2.0, 3.0]);
    }
}
