//! Physical constants of the robot, shared by every module.

use crate::dynamics::{PolePair, StanceParams};
use crate::squat::{JointLimits, LegGeometry, LinkMasses};
use crate::wjbd::WjbdParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotParams {
    /// All mass except the wheels (base plus legs).
    pub body_mass: f64,
    pub wheel_mass_each: f64,
    pub wheel_radius: f64,
    /// Pendulum length used by the stance balance model.
    pub pendulum_length: f64,
    pub leg: LegGeometry,
    pub link_masses: LinkMasses,
    pub spring_stiffness: f64,
    /// Natural length of the equivalent leg spring; `None` uses the leg length
    /// at the lift-off angle.
    pub natural_length: Option<f64>,
    /// Knee included angle at which the leg reaches full extension for take-off.
    pub liftoff_angle: f64,
    /// Knee included angle the legs fold to during flight.
    pub tuck_angle: f64,
    pub knee_torque_limit: f64,
    pub wheel_torque_limit: f64,
    pub joint_limits: JointLimits,
    pub stance_poles: PolePair,
    pub gravity: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            body_mass: 7.0,
            wheel_mass_each: 0.4,
            wheel_radius: 0.05,
            pendulum_length: 0.25,
            leg: LegGeometry::default(),
            link_masses: LinkMasses {
                base: 5.8,
                thigh: 0.6,
                shank: 0.6,
            },
            spring_stiffness: 2000.0,
            natural_length: None,
            liftoff_angle: 1.2,
            tuck_angle: 0.6,
            knee_torque_limit: 35.0,
            wheel_torque_limit: 5.0,
            joint_limits: JointLimits::default(),
            stance_poles: PolePair::default(),
            gravity: 9.81,
        }
    }
}

impl RobotParams {
    pub fn wheel_mass(&self) -> f64 {
        2.0 * self.wheel_mass_each
    }

    pub fn total_mass(&self) -> f64 {
        self.body_mass + self.wheel_mass()
    }

    pub fn link_length(&self) -> f64 {
        self.leg.link_length()
    }

    /// Hip-to-wheel leg length for a knee included angle.
    pub fn leg_length(&self, alpha: f64) -> f64 {
        2.0 * self.link_length() * (0.5 * alpha).sin()
    }

    /// `dL/dα`.
    pub fn leg_jacobian(&self, alpha: f64) -> f64 {
        self.link_length() * (0.5 * alpha).cos()
    }

    /// Base CoM height above the wheel centre.
    pub fn base_height(&self, alpha: f64) -> f64 {
        self.leg.hip_offset + self.leg_length(alpha)
    }

    pub fn natural_length(&self) -> f64 {
        self.natural_length
            .unwrap_or_else(|| self.leg_length(self.liftoff_angle))
    }

    /// Smallest and largest admissible knee included angle.
    pub fn knee_range(&self) -> (f64, f64) {
        let pi = std::f64::consts::PI;
        (pi - self.joint_limits.knee.1, pi - self.joint_limits.knee.0)
    }

    /// Per-knee extension torque that statically holds the body at `alpha`.
    pub fn holding_torque(&self, alpha: f64) -> f64 {
        0.5 * self.body_mass * self.gravity * self.leg_jacobian(alpha)
    }

    pub fn stance_params(&self) -> StanceParams {
        StanceParams {
            body_mass: self.body_mass,
            wheel_mass_each: self.wheel_mass_each,
            wheel_radius: self.wheel_radius,
            pendulum_length: self.pendulum_length,
            gravity: self.gravity,
        }
    }

    pub fn wjbd_params(&self) -> WjbdParams {
        WjbdParams {
            body_mass: self.body_mass,
            wheel_mass: self.wheel_mass(),
            spring_stiffness: self.spring_stiffness,
            link_length: self.link_length(),
            natural_length: self.natural_length(),
            liftoff_angle: self.liftoff_angle,
            tuck_angle: self.tuck_angle,
            gravity: self.gravity,
        }
    }

    /// Returns the name of the first invalid field.
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("robot.body_mass", self.body_mass),
            ("robot.wheel_mass_each", self.wheel_mass_each),
            ("robot.wheel_radius", self.wheel_radius),
            ("robot.pendulum_length", self.pendulum_length),
            ("robot.spring_stiffness", self.spring_stiffness),
            ("robot.knee_torque_limit", self.knee_torque_limit),
            ("robot.wheel_torque_limit", self.wheel_torque_limit),
            ("robot.gravity", self.gravity),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be finite and positive (got {v})"));
            }
        }
        if (self.leg.thigh_length - self.leg.shank_length).abs() > 1e-12 {
            return Err("robot.leg: jump model requires thigh_length == shank_length".into());
        }
        self.leg.validate().map_err(|e| format!("robot.leg: {e}"))?;
        let lm = self.link_masses;
        if [lm.base, lm.thigh, lm.shank].iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err("robot.link_masses must be non-negative".into());
        }
        let (lo, hi) = self.knee_range();
        if !(lo > 0.0 && lo < hi) {
            return Err("robot.joint_limits.knee is empty".into());
        }
        if !(self.liftoff_angle > lo && self.liftoff_angle <= hi) {
            return Err(format!("robot.liftoff_angle must lie in ({lo}, {hi}]"));
        }
        self.wjbd_params()
            .validate()
            .map_err(|e| format!("robot.{}: {e}", if self.natural_length.is_some() { "natural_length" } else { "tuck_angle" }))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_consistent() {
        let p = RobotParams::default();
        p.validate().unwrap();
        assert!((p.total_mass() - 7.8).abs() < 1e-12);
        let w = p.wjbd_params();
        assert!((w.total_mass() - 7.8).abs() < 1e-12);
        assert!((w.natural_length - p.leg_length(1.2)).abs() < 1e-15);
        let s = p.stance_params();
        assert!((s.wheel_inertia() - 0.0005).abs() < 1e-18);
    }

    #[test]
    fn invalid_field_is_named() {
        let p = RobotParams {
            wheel_radius: -1.0,
            ..RobotParams::default()
        };
        assert!(p.validate().unwrap_err().contains("robot.wheel_radius"));
    }
}
