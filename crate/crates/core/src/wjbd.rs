//! Closed-form feedforward jump planning.
//!
//! The leg is treated as a vertical spring between the body (`m_b`, all mass
//! except the wheels) and the wheels (`m_w`). The chain used here is:
//!
//! * stored energy: `½ K ΔL² - m_b g ΔL = ½ m_b L̇²`
//! * wheel pick-up at lift-off: `m_b L̇ = M V`, with `M = m_b + m_w`
//! * ballistic rise: `h_c = V² / 2g`
//! * leg retraction in flight: `M Δh = 2 m_b r η`, `η = sin(α_i/2) - sin(α_f/2)`
//! * wheel apex: `h_w = h_c + Δh`
//!
//! Eliminating `L̇` gives the quadratic in the designed compression
//! `K ΔL² - 2 m_b g ΔL = 2 g h_w M² / m_b - 4 η g r M`.

use crate::profile::{spring_torque, TorqueProfile};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("planner parameter `{0}` is invalid")]
    InvalidParam(&'static str),
    #[error("retraction must fold the leg: tuck angle {tuck} > lift-off angle {liftoff}")]
    Extension { liftoff: f64, tuck: f64 },
    #[error("target below retraction gain: {target} m < {gain} m")]
    BelowRetractionGain { target: f64, gain: f64 },
    #[error("infeasible height {target} m for given K_s; feasible interval is [{min}, {max}] m")]
    Infeasible { target: f64, min: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WjbdParams {
    /// Everything except the wheels.
    pub body_mass: f64,
    /// Both wheels together.
    pub wheel_mass: f64,
    pub spring_stiffness: f64,
    pub link_length: f64,
    pub natural_length: f64,
    pub liftoff_angle: f64,
    pub tuck_angle: f64,
    pub gravity: f64,
}

impl Default for WjbdParams {
    fn default() -> Self {
        let link_length = 0.2;
        let liftoff_angle: f64 = 1.2;
        Self {
            body_mass: 7.0,
            wheel_mass: 0.8,
            spring_stiffness: 2000.0,
            link_length,
            natural_length: 2.0 * link_length * (0.5 * liftoff_angle).sin(),
            liftoff_angle,
            tuck_angle: 0.6,
            gravity: 9.81,
        }
    }
}

impl WjbdParams {
    pub fn total_mass(&self) -> f64 {
        self.body_mass + self.wheel_mass
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let positive = [
            ("body_mass", self.body_mass),
            ("wheel_mass", self.wheel_mass),
            ("spring_stiffness", self.spring_stiffness),
            ("link_length", self.link_length),
            ("natural_length", self.natural_length),
            ("gravity", self.gravity),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(PlanError::InvalidParam(name));
            }
        }
        if self.natural_length > 2.0 * self.link_length {
            return Err(PlanError::InvalidParam("natural_length"));
        }
        check_angles(self.liftoff_angle, self.tuck_angle)
    }

    /// Leg length `2 r sin(α/2)` for a knee included angle `α`.
    pub fn leg_length(&self, alpha: f64) -> f64 {
        2.0 * self.link_length * (0.5 * alpha).sin()
    }
}

fn check_angles(liftoff: f64, tuck: f64) -> Result<(), PlanError> {
    use std::f64::consts::PI;
    if !(liftoff.is_finite() && tuck.is_finite() && tuck > 0.0 && liftoff < PI) {
        return Err(PlanError::InvalidParam("retraction angles"));
    }
    if tuck > liftoff {
        return Err(PlanError::Extension { liftoff, tuck });
    }
    Ok(())
}

/// Wheel rise gained by folding the legs from `liftoff` to `tuck` in flight
/// while the composite CoM follows its ballistic path.
pub fn retraction_gain(liftoff: f64, tuck: f64, p: &WjbdParams) -> Result<f64, PlanError> {
    check_angles(liftoff, tuck)?;
    let eta = (0.5 * liftoff).sin() - (0.5 * tuck).sin();
    Ok(2.0 * p.body_mass * p.link_length * eta / p.total_mass())
}

/// Wheel apex height for a leg extension speed `ldot` at lift-off.
pub fn wheel_height(ldot: f64, liftoff: f64, tuck: f64, p: &WjbdParams) -> Result<f64, PlanError> {
    if !(ldot.is_finite() && ldot >= 0.0) {
        return Err(PlanError::InvalidParam("takeoff velocity"));
    }
    let v_com = p.body_mass * ldot / p.total_mass();
    let h_c = v_com * v_com / (2.0 * p.gravity);
    Ok(h_c + retraction_gain(liftoff, tuck, p)?)
}

/// Inverse of [`wheel_height`].
pub fn takeoff_velocity(target: f64, liftoff: f64, tuck: f64, p: &WjbdParams) -> Result<f64, PlanError> {
    let gain = retraction_gain(liftoff, tuck, p)?;
    if !(target.is_finite() && target >= gain) {
        return Err(PlanError::BelowRetractionGain { target, gain });
    }
    let v_com = (2.0 * p.gravity * (target - gain)).sqrt();
    Ok(v_com * p.total_mass() / p.body_mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WjbdPlan {
    pub target_height: f64,
    pub spring_displacement: f64,
    pub prejump_knee_angle: f64,
    pub takeoff_velocity: f64,
    pub predicted_height: f64,
    pub feedforward: TorqueProfile,
}

/// Which feedforward shape the plan emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedforwardForm {
    /// Torque of the equivalent spring at the current knee angle.
    #[default]
    SpringMimic,
    /// Constant torque equal to the spring torque at the pre-jump angle.
    Constant,
}

fn rhs(target: f64, p: &WjbdParams) -> f64 {
    let m = p.total_mass();
    let eta = (0.5 * p.liftoff_angle).sin() - (0.5 * p.tuck_angle).sin();
    2.0 * p.gravity * target * m * m / p.body_mass - 4.0 * eta * p.gravity * p.link_length * m
}

/// Larger root of `K x² - 2 m_b g x - rhs = 0`.
fn compression_root(rhs: f64, p: &WjbdParams) -> Option<f64> {
    let b = 2.0 * p.body_mass * p.gravity;
    let disc = b * b + 4.0 * p.spring_stiffness * rhs;
    (disc >= 0.0).then(|| (b + disc.sqrt()) / (2.0 * p.spring_stiffness))
}

/// Target band for which the designed compression stays inside `(0, L0)`.
pub fn feasible_band(p: &WjbdParams) -> Result<(f64, f64), PlanError> {
    p.validate()?;
    let min = retraction_gain(p.liftoff_angle, p.tuck_angle, p)?;
    let l0 = p.natural_length;
    let m = p.total_mass();
    let eta = (0.5 * p.liftoff_angle).sin() - (0.5 * p.tuck_angle).sin();
    let max_rhs = p.spring_stiffness * l0 * l0 - 2.0 * p.body_mass * p.gravity * l0;
    let max = (max_rhs + 4.0 * eta * p.gravity * p.link_length * m) * p.body_mass / (2.0 * p.gravity * m * m);
    Ok((min, max))
}

/// Solve the feedforward plan for a desired wheel apex height.
pub fn solve_plan(target: f64, p: &WjbdParams, torque_limit: f64, form: FeedforwardForm) -> Result<WjbdPlan, PlanError> {
    p.validate()?;
    let gain = retraction_gain(p.liftoff_angle, p.tuck_angle, p)?;
    if !(target.is_finite() && target >= gain) {
        return Err(PlanError::BelowRetractionGain { target, gain });
    }
    let (min, max) = feasible_band(p)?;
    let infeasible = PlanError::Infeasible { target, min, max };
    let rhs = rhs(target, p);
    let dl = compression_root(rhs, p).ok_or(infeasible.clone())?;
    if !(dl > 0.0 && dl < p.natural_length) {
        return Err(infeasible);
    }
    let s = (p.natural_length - dl) / (2.0 * p.link_length);
    let alpha = 2.0 * s.asin();
    if !(alpha > 0.0 && alpha < std::f64::consts::PI) {
        return Err(infeasible);
    }
    let energy = 0.5 * p.spring_stiffness * dl * dl - p.body_mass * p.gravity * dl;
    let ldot = (2.0 * energy.max(0.0) / p.body_mass).sqrt();
    let predicted = wheel_height(ldot, p.liftoff_angle, p.tuck_angle, p)?;
    let mut plan = WjbdPlan {
        target_height: target,
        spring_displacement: dl,
        prejump_knee_angle: alpha,
        takeoff_velocity: ldot,
        predicted_height: predicted,
        feedforward: TorqueProfile::zero(),
    };
    plan.feedforward = torque_of_plan(&plan, p, torque_limit, form);
    Ok(plan)
}

/// Feedforward knee torque for a plan: a step at take-off onset to the
/// spring-equivalent torque, saturated at `limit`.
pub fn torque_of_plan(plan: &WjbdPlan, p: &WjbdParams, limit: f64, form: FeedforwardForm) -> TorqueProfile {
    match form {
        FeedforwardForm::SpringMimic => TorqueProfile::SpringMimic {
            onset: 0.0,
            stiffness: p.spring_stiffness,
            natural_length: p.natural_length,
            link_length: p.link_length,
            limit,
        },
        FeedforwardForm::Constant => TorqueProfile::Step {
            onset: 0.0,
            level: spring_torque(
                p.spring_stiffness,
                p.natural_length,
                p.link_length,
                plan.prejump_knee_angle,
            )
            .clamp(-limit, limit),
            limit,
        },
    }
}
