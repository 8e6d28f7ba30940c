//! Parametric knee-torque profiles for the take-off phase.
//!
//! Profiles are written in terms of the *extension* torque of one knee motor
//! (positive extends the leg). Recorded knee torques use the motor sign
//! convention, which is the negative of this.

use serde::{Deserialize, Serialize};

/// Offset of the post-cut decay sigmoid; the decay starts at exactly 1.
const DECAY_OFFSET: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum TorqueProfile {
    /// Constant `level` from `onset` on.
    Step { onset: f64, level: f64, limit: f64 },
    /// Step to the torque of an equivalent linear leg spring, which depends on
    /// the current knee included angle.
    SpringMimic {
        onset: f64,
        stiffness: f64,
        natural_length: f64,
        link_length: f64,
        limit: f64,
    },
    /// Logistic ramp from the stance load to `peak`.
    SigmoidRamp {
        peak: f64,
        steepness: f64,
        midpoint: f64,
        limit: f64,
    },
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl TorqueProfile {
    pub fn zero() -> Self {
        TorqueProfile::Step {
            onset: 0.0,
            level: 0.0,
            limit: f64::INFINITY,
        }
    }

    pub fn limit(&self) -> f64 {
        match *self {
            TorqueProfile::Step { limit, .. }
            | TorqueProfile::SpringMimic { limit, .. }
            | TorqueProfile::SigmoidRamp { limit, .. } => limit,
        }
    }

    pub fn is_smooth(&self) -> bool {
        matches!(self, TorqueProfile::SigmoidRamp { .. })
    }

    /// Unclamped extension torque at time `t` after take-off start, knee
    /// included angle `alpha`, with `base` the extension torque that held the
    /// stance pose.
    pub fn requested(&self, t: f64, alpha: f64, base: f64) -> f64 {
        match *self {
            TorqueProfile::Step { onset, level, .. } => {
                if t >= onset {
                    level
                } else {
                    base
                }
            }
            TorqueProfile::SpringMimic {
                onset,
                stiffness,
                natural_length,
                link_length,
                ..
            } => {
                if t >= onset {
                    spring_torque(stiffness, natural_length, link_length, alpha)
                } else {
                    base
                }
            }
            TorqueProfile::SigmoidRamp {
                peak,
                steepness,
                midpoint,
                ..
            } => base + (peak - base) * sigmoid(steepness * (t - midpoint)),
        }
    }

    /// Requested torque clamped to the actuator limit.
    pub fn command(&self, t: f64, alpha: f64, base: f64) -> f64 {
        let lim = self.limit();
        self.requested(t, alpha, base).clamp(-lim, lim)
    }

    /// Torque after the take-off cut at `t_cut` where the command was
    /// `at_cut`. Step-like profiles drop to zero; the ramp decays with its own
    /// steepness so that its slope stays within `1.02 · |at_cut| · k / 4`.
    pub fn after_cut(&self, t: f64, t_cut: f64, at_cut: f64) -> f64 {
        match *self {
            TorqueProfile::SigmoidRamp { steepness, .. } => {
                let x = steepness * (t - t_cut);
                at_cut * sigmoid(DECAY_OFFSET - x) / sigmoid(DECAY_OFFSET)
            }
            _ => 0.0,
        }
    }

    /// Upper bound on the profile's slope in N·m/s (ramp only).
    pub fn max_slope(&self) -> Option<f64> {
        match *self {
            TorqueProfile::SigmoidRamp { peak, steepness, .. } => Some(peak.abs() * steepness / 4.0),
            _ => None,
        }
    }
}

/// Per-knee extension torque mimicking a linear leg spring of stiffness `k`
/// and natural length `l0` on a symmetric leg of link length `r`: the spring
/// force `k (l0 - 2 r sin(α/2))` is shared by two knees through the
/// Jacobian `dL/dα = r cos(α/2)`.
pub fn spring_torque(k: f64, l0: f64, r: f64, alpha: f64) -> f64 {
    let compression = l0 - 2.0 * r * (0.5 * alpha).sin();
    0.5 * k * compression * r * (0.5 * alpha).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spring_torque_vanishes_at_natural_length() {
        let r = 0.2;
        let alpha = 1.2;
        let l0 = 2.0 * r * (0.5f64 * alpha).sin();
        assert!(spring_torque(2000.0, l0, r, alpha).abs() < 1e-12);
    }

    #[test]
    fn step_switches_at_onset() {
        let p = TorqueProfile::Step {
            onset: 0.1,
            level: 40.0,
            limit: 35.0,
        };
        assert_eq!(p.command(0.05, 1.0, 5.0), 5.0);
        assert_eq!(p.requested(0.1, 1.0, 5.0), 40.0);
        assert_eq!(p.command(0.1, 1.0, 5.0), 35.0);
        assert_eq!(p.after_cut(0.2, 0.15, 35.0), 0.0);
    }

    #[test]
    fn ramp_slope_bound_holds_numerically() {
        let p = TorqueProfile::SigmoidRamp {
            peak: 35.0,
            steepness: 50.0,
            midpoint: 0.1,
            limit: 35.0,
        };
        let dt = 1e-3;
        let worst = (0..400)
            .map(|i| {
                let t = i as f64 * dt;
                (p.command(t + dt, 1.0, 0.0) - p.command(t, 1.0, 0.0)).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 35.0 * 50.0 / 4.0 * dt);
        assert!(worst > 0.9 * 35.0 * 50.0 / 4.0 * dt);
    }

    #[test]
    fn decay_is_continuous_and_bounded() {
        let p = TorqueProfile::SigmoidRamp {
            peak: 35.0,
            steepness: 100.0,
            midpoint: 0.1,
            limit: 35.0,
        };
        assert!((p.after_cut(0.3, 0.3, 30.0) - 30.0).abs() < 1e-12);
        let dt = 1e-4;
        let worst = (0..2000)
            .map(|i| {
                let t = 0.3 + i as f64 * dt;
                (p.after_cut(t + dt, 0.3, 30.0) - p.after_cut(t, 0.3, 30.0)).abs() / dt
            })
            .fold(0.0, f64::max);
        assert!(worst <= 1.02 * 30.0 * 100.0 / 4.0);
        assert!(p.after_cut(0.6, 0.3, 30.0).abs() < 1e-6);
    }
}
