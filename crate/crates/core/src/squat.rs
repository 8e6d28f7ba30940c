//! Leg kinematics for dynamic height control.
//!
//! Each leg is a two-link chain hip -> knee -> wheel. The knee angle `q2` is
//! zero for a straight leg; the included angle at the knee is `π - q2`. The hip
//! angle `q1` is measured from the downward vertical and is chosen so that the
//! hip-wheel axis stays vertical, which keeps the base upright and the base
//! directly above the wheel axis. The leg links are modelled as a mirrored
//! (kite-shaped) pair so that their combined mass lies on the hip-wheel axis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Margin kept away from the singular straight and fully folded poses.
pub const REACH_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("leg geometry `{0}` must be finite and positive")]
    InvalidGeometry(&'static str),
    #[error("height {h} m is unreachable; valid range is [{min}, {max}] m")]
    Unreachable { h: f64, min: f64, max: f64 },
    #[error("joint `{name}` = {value} rad is outside [{min}, {max}]")]
    JointOutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("trajectory duration and step must be positive")]
    BadDuration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegGeometry {
    pub thigh_length: f64,
    pub shank_length: f64,
    pub hip_offset: f64,
}

impl Default for LegGeometry {
    fn default() -> Self {
        Self::symmetric(0.2, 0.0)
    }
}

impl LegGeometry {
    pub fn symmetric(link_length: f64, hip_offset: f64) -> Self {
        Self {
            thigh_length: link_length,
            shank_length: link_length,
            hip_offset,
        }
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if !(self.thigh_length.is_finite() && self.thigh_length > 0.0) {
            return Err(KinematicsError::InvalidGeometry("thigh_length"));
        }
        if !(self.shank_length.is_finite() && self.shank_length > 0.0) {
            return Err(KinematicsError::InvalidGeometry("shank_length"));
        }
        if !(self.hip_offset.is_finite() && self.hip_offset >= 0.0) {
            return Err(KinematicsError::InvalidGeometry("hip_offset"));
        }
        let (lo, hi) = self.reach();
        if lo >= hi {
            return Err(KinematicsError::InvalidGeometry("reach"));
        }
        Ok(())
    }

    /// Link length of the symmetric leg (mean of the two links).
    pub fn link_length(&self) -> f64 {
        0.5 * (self.thigh_length + self.shank_length)
    }

    /// Reachable hip-to-wheel distance interval.
    pub fn reach(&self) -> (f64, f64) {
        let (l1, l2) = (self.thigh_length, self.shank_length);
        ((l1 - l2).abs() + REACH_EPS, l1 + l2 - REACH_EPS)
    }

    /// Reachable base-to-wheel height interval.
    pub fn height_range(&self) -> (f64, f64) {
        let (lo, hi) = self.reach();
        (lo + self.hip_offset, hi + self.hip_offset)
    }

    /// Hip-wheel distance for a knee angle `q2`.
    pub fn axis_length(&self, q2: f64) -> f64 {
        let (l1, l2) = (self.thigh_length, self.shank_length);
        (l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * q2.cos()).max(0.0).sqrt()
    }

    /// Angle between the thigh and the hip-wheel axis.
    fn axis_offset(&self, q2: f64) -> f64 {
        let (l1, l2) = (self.thigh_length, self.shank_length);
        (l2 * q2.sin()).atan2(l1 + l2 * q2.cos())
    }
}

/// Joint-space pose `[q1 hip, q2 knee, q3 wheel]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointVector {
    pub hip: f64,
    pub knee: f64,
    pub wheel: f64,
}

impl JointVector {
    /// Included angle at the knee.
    pub fn knee_included_angle(&self) -> f64 {
        std::f64::consts::PI - self.knee
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub hip: (f64, f64),
    pub knee: (f64, f64),
}

impl Default for JointLimits {
    fn default() -> Self {
        use std::f64::consts::{FRAC_PI_2, PI};
        Self {
            hip: (-FRAC_PI_2, FRAC_PI_2),
            knee: (0.0, PI - 0.05),
        }
    }
}

impl JointLimits {
    pub fn check(&self, q: &JointVector) -> Result<(), KinematicsError> {
        let check = |name, value: f64, (min, max): (f64, f64)| {
            if value.is_finite() && value >= min && value <= max {
                Ok(())
            } else {
                Err(KinematicsError::JointOutOfRange { name, value, min, max })
            }
        };
        check("hip", q.hip, self.hip)?;
        check("knee", q.knee, self.knee)
    }
}

/// Masses of the non-wheel bodies used for the CoM check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMasses {
    pub base: f64,
    pub thigh: f64,
    pub shank: f64,
}

/// Vertical distance from the base CoM to the wheel centre.
pub fn forward_height(q: &JointVector, geom: &LegGeometry, limits: &JointLimits) -> Result<f64, KinematicsError> {
    geom.validate()?;
    limits.check(q)?;
    let psi = q.hip + geom.axis_offset(q.knee);
    Ok(geom.axis_length(q.knee) * psi.cos() + geom.hip_offset)
}

/// Upright pose with base CoM height `h` above the wheel centre.
pub fn inverse_squat(h: f64, geom: &LegGeometry) -> Result<JointVector, KinematicsError> {
    geom.validate()?;
    let (min, max) = geom.height_range();
    if !(h.is_finite() && h >= min && h <= max) {
        return Err(KinematicsError::Unreachable { h, min, max });
    }
    let d = h - geom.hip_offset;
    let (l1, l2) = (geom.thigh_length, geom.shank_length);
    let c = ((d * d - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let knee = c.acos();
    Ok(JointVector {
        hip: -geom.axis_offset(knee),
        knee,
        wheel: 0.0,
    })
}

/// Horizontal offset of the non-wheel CoM from the wheel axis.
pub fn com_offset(q: &JointVector, geom: &LegGeometry, masses: &LinkMasses) -> f64 {
    let (l1, l2) = (geom.thigh_length, geom.shank_length);
    // direction for an angle from the downward vertical; positive swings back (-x)
    let dir = |phi: f64| (-phi.sin(), -phi.cos());
    let hip = (0.0, 0.0);
    let t = dir(q.hip);
    let knee = (l1 * t.0, l1 * t.1);
    let s = dir(q.hip + q.knee);
    let wheel = (knee.0 + l2 * s.0, knee.1 + l2 * s.1);

    // mirror image of the knee across the hip-wheel axis
    let axis_len = (wheel.0 * wheel.0 + wheel.1 * wheel.1).sqrt();
    let mirrored_knee = if axis_len > 0.0 {
        let u = (wheel.0 / axis_len, wheel.1 / axis_len);
        let proj = knee.0 * u.0 + knee.1 * u.1;
        (2.0 * proj * u.0 - knee.0, 2.0 * proj * u.1 - knee.1)
    } else {
        knee
    };
    let mid = |a: (f64, f64), b: (f64, f64)| 0.5 * (a.0 + b.0);
    let thigh_x = 0.5 * (mid(hip, knee) + mid(hip, mirrored_knee));
    let shank_x = 0.5 * (mid(knee, wheel) + mid(mirrored_knee, wheel));
    let base_x = hip.0;

    let total = masses.base + masses.thigh + masses.shank;
    if total <= 0.0 {
        return 0.0;
    }
    let com_x = (masses.base * base_x + masses.thigh * thigh_x + masses.shank * shank_x) / total;
    com_x - wheel.0
}

/// Minimum-jerk time scaling `10s³ - 15s⁴ + 6s⁵` on `[0, 1]`.
pub fn min_jerk(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

/// Squat (or stand-up) trajectory sampled at `dt`, both endpoints included.
pub fn squat_trajectory(
    h_start: f64,
    h_end: f64,
    duration: f64,
    dt: f64,
    geom: &LegGeometry,
) -> Result<Vec<JointVector>, KinematicsError> {
    if !(duration > 0.0 && dt > 0.0) {
        return Err(KinematicsError::BadDuration);
    }
    inverse_squat(h_start, geom)?;
    inverse_squat(h_end, geom)?;
    let n = ((duration / dt).round() as usize).max(1);
    (0..=n)
        .map(|i| {
            let h = if i == n {
                h_end
            } else {
                h_start + (h_end - h_start) * min_jerk(i as f64 / n as f64)
            };
            inverse_squat(h, geom)
        })
        .collect()
}
