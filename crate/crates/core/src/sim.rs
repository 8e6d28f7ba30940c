//! Deterministic multi-phase jump simulator.
//!
//! Phases run Squat -> Stance -> TakeOff -> Flight -> Landing on a fixed
//! sample grid. The squat is kinematic, the stance phase balances the pitch
//! with the wheel controller while the knees hold the load, and take-off is a
//! one-degree-of-freedom model of the knee included angle with massless legs
//! and the wheels on the ground. Torque cut, joint stop, loss of ground contact
//! and the knee limit are located inside a step by bisection so that outcomes
//! vary smoothly with the command parameters.

use crate::dynamics::{balance_torque, linearize, place_poles, rk4, stance_step, DynamicsError, StanceState};
use crate::params::RobotParams;
use crate::profile::TorqueProfile;
use crate::squat::{min_jerk, squat_trajectory, KinematicsError, LegGeometry};
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

/// Penalty magnitude reported for a trial that never leaves the ground.
pub const FAILED_TAKEOFF_SENTINEL: f64 = 1.0;

const EVENT_BISECTIONS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation input: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("stance phase failed: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("simulation produced a non-finite state at t = {0} s")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Squat,
    Stance,
    TakeOff,
    Flight,
    Landing,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Squat => "squat",
            Phase::Stance => "stance",
            Phase::TakeOff => "takeoff",
            Phase::Flight => "flight",
            Phase::Landing => "landing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftoffCause {
    /// Knee reached the lift-off angle and the wheels were picked up.
    JointStop,
    /// Ground reaction fell to zero before full extension.
    LostContact,
}

/// One time sample. Knee angle is the included angle in rad; knee torque is
/// the per-knee motor torque (negative extends the leg).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub phase: Phase,
    pub z_wheel: f64,
    pub z_com: f64,
    pub knee_angle: f64,
    pub knee_torque: f64,
    pub knee_rate: f64,
    /// Vertical CoM velocity (not exported to CSV).
    pub v_com: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintId {
    TorqueLimit,
    JointRange,
    TorqueStep,
    FailedTakeoff,
    ThresholdMissed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub id: ConstraintId,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub dt: f64,
    pub samples: Vec<Sample>,
    /// Highest wheel clearance over the flight samples (0 if no flight).
    pub apex_wheel_height: f64,
    pub failed: bool,
    pub liftoff_cause: Option<LiftoffCause>,
    pub liftoff_time: Option<f64>,
    pub liftoff_knee_angle: Option<f64>,
    /// Leg extension speed at lift-off.
    pub liftoff_extension_speed: f64,
    /// CoM vertical velocity just after the wheels are picked up.
    pub liftoff_com_velocity: f64,
    /// Ground reaction just before lift-off.
    pub liftoff_reaction: f64,
    pub cut_time: Option<f64>,
    pub max_extension_speed: f64,
    /// Largest |requested| extension torque before saturation.
    pub max_requested_torque: f64,
    /// Knee speed when the lower knee limit was hit (0 if never).
    pub joint_limit_impact: f64,
    /// Extension-speed shortfall if lift-off happened before the threshold.
    pub threshold_shortfall: f64,
    pub stance_final_pitch: f64,
    pub energy: f64,
    pub violations: Vec<Violation>,
}

/// Legs fold from the lift-off angle to `tuck_angle` during flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Retraction {
    pub tuck_angle: f64,
    /// Retraction time as a fraction of the ascent time `V / g`.
    pub duration_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpCommand {
    pub profile: TorqueProfile,
    /// Knee included angle at the bottom of the squat.
    pub prejump_angle: f64,
    /// Extension speed at which the drive torque is cut; infinite disables it.
    pub cut_speed: f64,
    pub retraction: Retraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    pub squat_duration: f64,
    pub stance_duration: f64,
    pub initial_pitch: f64,
    /// Viscous knee damping per joint, N·m·s/rad.
    pub knee_damping: f64,
    /// Coulomb knee friction per joint, N·m.
    pub knee_friction: f64,
    /// Velocity scale of the smoothed Coulomb friction, rad/s.
    pub friction_smoothing: f64,
    pub takeoff_timeout: f64,
    pub max_flight_time: f64,
    /// Window for the per-period torque-step metric.
    pub control_period: f64,
    /// Allowed torque change per control period, N·m.
    pub torque_step_bound: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            squat_duration: 0.5,
            stance_duration: 0.3,
            initial_pitch: 0.02,
            knee_damping: 0.05,
            knee_friction: 0.1,
            friction_smoothing: 0.01,
            takeoff_timeout: 1.0,
            max_flight_time: 2.0,
            control_period: 1e-3,
            torque_step_bound: 1.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("sim.dt", self.dt),
            ("sim.squat_duration", self.squat_duration),
            ("sim.stance_duration", self.stance_duration),
            ("sim.friction_smoothing", self.friction_smoothing),
            ("sim.takeoff_timeout", self.takeoff_timeout),
            ("sim.max_flight_time", self.max_flight_time),
            ("sim.control_period", self.control_period),
            ("sim.torque_step_bound", self.torque_step_bound),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be finite and positive (got {v})"));
            }
        }
        if self.dt > 1e-3 {
            return Err(format!("sim.dt must be at most 1e-3 (got {})", self.dt));
        }
        for (name, v) in [
            ("sim.knee_damping", self.knee_damping),
            ("sim.knee_friction", self.knee_friction),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be finite and non-negative (got {v})"));
            }
        }
        if !self.initial_pitch.is_finite() || self.initial_pitch.abs() >= 0.5 {
            return Err("sim.initial_pitch must be finite with |pitch| < 0.5".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Drive {
    Powered,
    Cut { t_cut: f64, at_cut: f64 },
}

/// Take-off dynamics of `x = [α, α̇]` in local time.
struct TakeOff<'a> {
    robot: &'a RobotParams,
    cfg: &'a SimConfig,
    profile: TorqueProfile,
    base: f64,
    cut_speed: f64,
}

impl TakeOff<'_> {
    fn r(&self) -> f64 {
        self.robot.link_length()
    }

    fn extension_torque(&self, t: f64, alpha: f64, drive: Drive) -> f64 {
        match drive {
            Drive::Powered => self.profile.command(t, alpha, self.base),
            Drive::Cut { t_cut, at_cut } => self.profile.after_cut(t, t_cut, at_cut),
        }
    }

    /// Leg force on the body (upward positive).
    fn leg_force(&self, t: f64, x: [f64; 2], drive: Drive) -> f64 {
        let u = self.extension_torque(t, x[0], drive);
        let c = self.cfg;
        let q = 2.0 * u
            - 2.0 * c.knee_damping * x[1]
            - 2.0 * c.knee_friction * (x[1] / c.friction_smoothing).tanh();
        q / self.robot.leg_jacobian(x[0])
    }

    fn reaction(&self, t: f64, x: [f64; 2], drive: Drive) -> f64 {
        self.robot.wheel_mass() * self.robot.gravity + self.leg_force(t, x, drive)
    }

    fn deriv(&self, t: f64, x: [f64; 2], drive: Drive) -> [f64; 2] {
        let mb = self.robot.body_mass;
        let jac = self.robot.leg_jacobian(x[0]);
        let curv = -0.5 * self.r() * (0.5 * x[0]).sin();
        let f = self.leg_force(t, x, drive);
        let acc = (f - mb * self.robot.gravity - mb * curv * x[1] * x[1]) / (mb * jac);
        [x[1], acc]
    }

    fn step(&self, t: f64, x: [f64; 2], h: f64, drive: Drive) -> [f64; 2] {
        // time enters through the drive torque, so carry it as a state
        let y = rk4([x[0], x[1], t], h, |y| {
            let d = self.deriv(y[2], [y[0], y[1]], drive);
            [d[0], d[1], 1.0]
        });
        [y[0], y[1]]
    }

    fn extension_speed(&self, x: [f64; 2]) -> f64 {
        self.robot.leg_jacobian(x[0]) * x[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Event {
    Cut,
    Stop,
    Contact,
    Limit,
}

/// Run one jump trial.
pub fn run_jump(robot: &RobotParams, cfg: &SimConfig, cmd: &JumpCommand) -> Result<TrialRecord, SimError> {
    robot.validate().map_err(SimError::InvalidParam)?;
    cfg.validate().map_err(SimError::InvalidParam)?;
    let (alpha_min, alpha_max) = robot.knee_range();
    let alpha_stop = robot.liftoff_angle;
    let alpha0 = cmd.prejump_angle;
    if !(alpha0.is_finite() && alpha0 > alpha_min && alpha0 < alpha_stop) {
        return Err(SimError::InvalidParam(format!(
            "pre-jump knee angle {alpha0} must lie in ({alpha_min}, {alpha_stop})"
        )));
    }
    if !(cmd.cut_speed >= 0.0) {
        return Err(SimError::InvalidParam(format!("cut speed must be non-negative (got {})", cmd.cut_speed)));
    }
    let tuck = cmd.retraction.tuck_angle;
    if !(tuck.is_finite() && tuck >= alpha_min && tuck <= alpha_max) {
        return Err(SimError::InvalidParam(format!("tuck angle {tuck} is outside the knee range")));
    }
    let frac = cmd.retraction.duration_fraction;
    if !(frac.is_finite() && frac > 0.0) {
        return Err(SimError::InvalidParam("retraction duration fraction must be positive".into()));
    }

    let dt = cfg.dt;
    let m_total = robot.total_mass();
    let mb = robot.body_mass;
    let rw = robot.wheel_radius;
    let g = robot.gravity;
    let com_on_ground = |alpha: f64| rw + mb * robot.base_height(alpha) / m_total;
    let mut samples: Vec<Sample> = Vec::new();

    // squat
    let geom = LegGeometry::symmetric(robot.link_length(), robot.leg.hip_offset);
    let traj = squat_trajectory(
        robot.base_height(alpha_stop),
        robot.base_height(alpha0),
        cfg.squat_duration,
        dt,
        &geom,
    )?;
    let angles: Vec<f64> = traj.iter().map(|q| q.knee_included_angle()).collect();
    let n = angles.len();
    for (i, &a) in angles.iter().enumerate().take(n - 1) {
        let rate = if i == 0 { 0.0 } else { (angles[i + 1] - angles[i - 1]) / (2.0 * dt) };
        samples.push(Sample {
            t: i as f64 * dt,
            phase: Phase::Squat,
            z_wheel: 0.0,
            z_com: com_on_ground(a),
            knee_angle: a,
            knee_torque: -robot.holding_torque(a),
            knee_rate: rate,
            v_com: mb * robot.leg_jacobian(a) * rate / m_total,
        });
    }

    // stance
    let base = robot.holding_torque(alpha0);
    let sp = robot.stance_params();
    let gain = place_poles(&linearize(&sp)?, robot.stance_poles)?;
    let mut pitch = StanceState::with_pitch(cfg.initial_pitch);
    let t_stance = (n - 1) as f64 * dt;
    let stance_steps = (cfg.stance_duration / dt).round() as usize;
    for i in 0..stance_steps {
        samples.push(Sample {
            t: t_stance + i as f64 * dt,
            phase: Phase::Stance,
            z_wheel: 0.0,
            z_com: com_on_ground(alpha0),
            knee_angle: alpha0,
            knee_torque: -base,
            knee_rate: 0.0,
            v_com: 0.0,
        });
        let u = balance_torque(&pitch, &gain, &StanceState::upright())
            .clamp(-2.0 * robot.wheel_torque_limit, 2.0 * robot.wheel_torque_limit);
        pitch = stance_step(&pitch, u, dt, &sp)?;
    }

    // take-off
    let t0 = t_stance + stance_steps as f64 * dt;
    let to = TakeOff {
        robot,
        cfg,
        profile: cmd.profile,
        base,
        cut_speed: cmd.cut_speed,
    };
    let mut rec = TrialRecord {
        dt,
        samples: Vec::new(),
        apex_wheel_height: 0.0,
        failed: false,
        liftoff_cause: None,
        liftoff_time: None,
        liftoff_knee_angle: None,
        liftoff_extension_speed: 0.0,
        liftoff_com_velocity: 0.0,
        liftoff_reaction: 0.0,
        cut_time: None,
        max_extension_speed: 0.0,
        max_requested_torque: 0.0,
        joint_limit_impact: 0.0,
        threshold_shortfall: 0.0,
        stance_final_pitch: pitch.pitch,
        energy: 0.0,
        violations: Vec::new(),
    };

    let mut x = [alpha0, 0.0];
    let mut drive = Drive::Powered;
    let mut pinned = false;
    let mut k: usize = 0;
    let max_steps = (cfg.takeoff_timeout / dt).ceil() as usize;
    let track_requested = |t: f64, alpha: f64, drive: Drive, rec: &mut TrialRecord| {
        if matches!(drive, Drive::Powered) {
            let r = cmd.profile.requested(t, alpha, base).abs();
            rec.max_requested_torque = rec.max_requested_torque.max(r);
        }
    };
    let push_takeoff = |t: f64, x: [f64; 2], drive: Drive, samples: &mut Vec<Sample>| {
        samples.push(Sample {
            t: t0 + t,
            phase: Phase::TakeOff,
            z_wheel: 0.0,
            z_com: com_on_ground(x[0]),
            knee_angle: x[0],
            knee_torque: -to.extension_torque(t, x[0], drive),
            knee_rate: x[1],
            v_com: mb * to.extension_speed(x) / m_total,
        });
    };
    let cut_now = |t: f64, x: [f64; 2], drive: Drive, rec: &mut TrialRecord| -> Drive {
        rec.cut_time = Some(t0 + t);
        Drive::Cut {
            t_cut: t,
            at_cut: to.extension_torque(t, x[0], drive),
        }
    };

    // (local time, state, drive) at lift-off
    let mut liftoff: Option<(f64, [f64; 2], Drive)> = None;
    'grid: while k < max_steps {
        let t_k = k as f64 * dt;
        track_requested(t_k, x[0], drive, &mut rec);
        if matches!(drive, Drive::Powered) && to.extension_speed(x) >= to.cut_speed {
            drive = cut_now(t_k, x, drive, &mut rec);
        }
        push_takeoff(t_k, x, drive, &mut samples);
        rec.max_extension_speed = rec.max_extension_speed.max(to.extension_speed(x));

        let mut t = t_k;
        let t_next = (k + 1) as f64 * dt;
        while t < t_next {
            let h_full = t_next - t;
            if pinned {
                let acc = to.deriv(t, [alpha_min, 0.0], drive)[1];
                if acc <= 0.0 {
                    t = t_next;
                    x = [alpha_min, 0.0];
                    continue;
                }
                pinned = false;
            }
            let events = |y: [f64; 2], tt: f64, d: Drive| -> Vec<(Event, f64)> {
                let mut v = vec![(Event::Stop, y[0] - alpha_stop), (Event::Contact, -to.reaction(tt, y, d))];
                if matches!(d, Drive::Powered) {
                    v.push((Event::Cut, to.extension_speed(y) - to.cut_speed));
                }
                v.push((Event::Limit, alpha_min - y[0]));
                v
            };
            let trial = to.step(t, x, h_full, drive);
            if !(trial[0].is_finite() && trial[1].is_finite()) {
                return Err(SimError::NonFinite(t0 + t));
            }
            let fired: Vec<Event> = events(trial, t_next, drive)
                .into_iter()
                .filter(|(_, g)| *g >= 0.0)
                .map(|(e, _)| e)
                .collect();
            if fired.is_empty() {
                x = trial;
                t = t_next;
                continue;
            }
            // earliest event inside the step
            let mut best: Option<(Event, f64)> = None;
            for e in fired {
                let value = |h: f64| {
                    let y = to.step(t, x, h, drive);
                    events(y, t + h, drive)
                        .into_iter()
                        .find(|(id, _)| *id == e)
                        .map(|(_, g)| g)
                        .unwrap_or(f64::NEG_INFINITY)
                };
                let (mut lo, mut hi) = (0.0, h_full);
                if value(0.0) >= 0.0 {
                    hi = 0.0;
                } else {
                    for _ in 0..EVENT_BISECTIONS {
                        let mid = 0.5 * (lo + hi);
                        if value(mid) >= 0.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                }
                if best.is_none_or(|(_, h)| hi < h) {
                    best = Some((e, hi));
                }
            }
            let (event, h) = best.expect("at least one event fired");
            let te = t + h;
            let xe = if h > 0.0 { to.step(t, x, h, drive) } else { x };
            rec.max_extension_speed = rec.max_extension_speed.max(to.extension_speed(xe));
            track_requested(te, xe[0], drive, &mut rec);
            match event {
                Event::Cut => {
                    x = xe;
                    drive = cut_now(te, xe, drive, &mut rec);
                }
                Event::Limit => {
                    rec.joint_limit_impact = rec.joint_limit_impact.max(xe[1].abs());
                    x = [alpha_min, 0.0];
                    pinned = true;
                }
                Event::Stop | Event::Contact => {
                    rec.liftoff_cause = Some(if event == Event::Stop {
                        LiftoffCause::JointStop
                    } else {
                        LiftoffCause::LostContact
                    });
                    rec.liftoff_reaction = to.reaction(te, xe, drive);
                    liftoff = Some((te, xe, drive));
                    break 'grid;
                }
            }
            t = te;
        }
        k += 1;
    }

    let Some((t_lo, x_lo, drive_lo)) = liftoff else {
        rec.failed = true;
        rec.violations = check_constraints(&rec, robot, cfg, cmd);
        rec.samples = samples;
        rec.energy = energy_cost(&rec);
        return Ok(rec);
    };

    // lift-off: the wheels are picked up by the moving body
    let zdot = to.extension_speed(x_lo);
    let v0 = mb * zdot / m_total;
    rec.liftoff_time = Some(t0 + t_lo);
    rec.liftoff_knee_angle = Some(x_lo[0]);
    rec.liftoff_extension_speed = zdot;
    rec.liftoff_com_velocity = v0;
    rec.max_extension_speed = rec.max_extension_speed.max(zdot);
    if cmd.cut_speed.is_finite() && matches!(drive_lo, Drive::Powered) {
        rec.threshold_shortfall = (cmd.cut_speed - rec.max_extension_speed).max(0.0);
    }
    let flight_drive = match drive_lo {
        Drive::Powered => Drive::Cut {
            t_cut: t_lo,
            at_cut: to.extension_torque(t_lo, x_lo[0], drive_lo),
        },
        d => d,
    };
    if rec.cut_time.is_none() {
        rec.cut_time = Some(t0 + t_lo);
    }

    // flight
    let alpha_lo = x_lo[0];
    let alpha_end = tuck.min(alpha_lo);
    let t_ret = frac * v0.max(0.0) / g;
    let knee_at = |tau: f64| -> (f64, f64) {
        if t_ret <= 0.0 || alpha_end >= alpha_lo {
            return (alpha_lo, 0.0);
        }
        let s = (tau / t_ret).clamp(0.0, 1.0);
        let ds = if (0.0..1.0).contains(&s) {
            30.0 * s * s * (1.0 - s) * (1.0 - s) / t_ret
        } else {
            0.0
        };
        (alpha_lo + (alpha_end - alpha_lo) * min_jerk(s), (alpha_end - alpha_lo) * ds)
    };
    let ballistic = |y: [f64; 2]| [y[1], -g];
    let mut com = [com_on_ground(alpha_lo), v0];
    let mut t = t_lo;
    let max_flight = (cfg.max_flight_time / dt).ceil() as usize;
    for _ in 0..max_flight {
        let t_next = (k + 1) as f64 * dt;
        com = rk4(com, t_next - t, ballistic);
        t = t_next;
        k += 1;
        let (alpha, rate) = knee_at(t - t_lo);
        let z_wheel = com[0] - rw - mb * robot.base_height(alpha) / m_total;
        let landed = z_wheel <= 0.0 && com[1] < 0.0;
        samples.push(Sample {
            t: t0 + t,
            phase: if landed { Phase::Landing } else { Phase::Flight },
            z_wheel,
            z_com: com[0],
            knee_angle: alpha,
            knee_torque: -to.extension_torque(t, alpha, flight_drive),
            knee_rate: rate,
            v_com: com[1],
        });
        if landed {
            break;
        }
        rec.apex_wheel_height = rec.apex_wheel_height.max(z_wheel);
    }

    rec.samples = samples;
    rec.energy = energy_cost(&rec);
    rec.violations = check_constraints(&rec, robot, cfg, cmd);
    Ok(rec)
}

/// Motor energy over the take-off phase, both knees, `Σ 2 |τ ω| dt`.
pub fn energy_cost(rec: &TrialRecord) -> f64 {
    rec.samples
        .iter()
        .filter(|s| s.phase == Phase::TakeOff)
        .map(|s| 2.0 * (s.knee_torque * s.knee_rate).abs() * rec.dt)
        .sum()
}

/// Largest torque change between consecutive samples.
pub fn torque_step_metric(rec: &TrialRecord) -> f64 {
    rec.samples
        .windows(2)
        .map(|w| (w[1].knee_torque - w[0].knee_torque).abs())
        .fold(0.0, f64::max)
}

/// Largest torque change over any window of one control period.
pub fn torque_step_per_period(rec: &TrialRecord, period: f64) -> f64 {
    let n = ((period / rec.dt).round() as usize).max(1);
    if rec.samples.len() <= n {
        return 0.0;
    }
    (0..rec.samples.len() - n)
        .map(|i| (rec.samples[i + n].knee_torque - rec.samples[i].knee_torque).abs())
        .fold(0.0, f64::max)
}

/// Positive-part constraint violations of a trial.
pub fn check_constraints(
    rec: &TrialRecord,
    robot: &RobotParams,
    cfg: &SimConfig,
    cmd: &JumpCommand,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |id, magnitude: f64| {
        if magnitude > 0.0 {
            out.push(Violation { id, magnitude });
        }
    };
    let limit = robot.knee_torque_limit.min(cmd.profile.limit());
    push(ConstraintId::TorqueLimit, rec.max_requested_torque - limit);
    push(ConstraintId::JointRange, rec.joint_limit_impact);
    if !rec.samples.is_empty() {
        push(
            ConstraintId::TorqueStep,
            torque_step_per_period(rec, cfg.control_period) - cfg.torque_step_bound,
        );
    }
    if rec.failed {
        push(ConstraintId::FailedTakeoff, FAILED_TAKEOFF_SENTINEL);
    }
    push(ConstraintId::ThresholdMissed, rec.threshold_shortfall);
    out
}

/// Write the time series as CSV.
pub fn write_trial_csv<W: Write>(rec: &TrialRecord, mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,phase,z_wheel,z_com,knee_angle,knee_torque,knee_rate")?;
    for s in &rec.samples {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.t,
            s.phase.as_str(),
            s.z_wheel,
            s.z_com,
            s.knee_angle,
            s.knee_torque,
            s.knee_rate
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wjbd::{solve_plan, FeedforwardForm};

    fn wjbd_command(robot: &RobotParams, target: f64) -> JumpCommand {
        let p = robot.wjbd_params();
        let plan = solve_plan(target, &p, robot.knee_torque_limit, FeedforwardForm::SpringMimic).unwrap();
        JumpCommand {
            profile: plan.feedforward,
            prejump_angle: plan.prejump_knee_angle,
            cut_speed: f64::INFINITY,
            retraction: Retraction {
                tuck_angle: robot.tuck_angle,
                duration_fraction: 0.8,
            },
        }
    }

    fn ideal() -> SimConfig {
        SimConfig {
            knee_damping: 0.0,
            knee_friction: 0.0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn frictionless_wjbd_reaches_plan() {
        let robot = RobotParams::default();
        for target in [0.2, 0.3, 0.4] {
            let rec = run_jump(&robot, &ideal(), &wjbd_command(&robot, target)).unwrap();
            assert!(!rec.failed);
            assert_eq!(rec.liftoff_cause, Some(LiftoffCause::JointStop));
            let err = (rec.apex_wheel_height - target).abs() / target;
            assert!(err < 0.02, "target {target}: apex {}", rec.apex_wheel_height);
        }
    }

    #[test]
    fn phases_are_ordered() {
        let robot = RobotParams::default();
        let rec = run_jump(&robot, &SimConfig::default(), &wjbd_command(&robot, 0.3)).unwrap();
        let rank = |p: Phase| p as u8;
        assert!(rec.samples.windows(2).all(|w| rank(w[0].phase) <= rank(w[1].phase)));
        assert!(rec.samples.windows(2).all(|w| w[1].t > w[0].t));
        assert_eq!(rec.samples.last().unwrap().phase, Phase::Landing);
        assert_eq!(rec.samples[0].phase, Phase::Squat);
    }

    #[test]
    fn weak_torque_fails_to_take_off() {
        let robot = RobotParams::default();
        let mut cmd = wjbd_command(&robot, 0.3);
        cmd.profile = TorqueProfile::Step {
            onset: 0.0,
            level: 0.5,
            limit: 35.0,
        };
        let rec = run_jump(&robot, &SimConfig::default(), &cmd).unwrap();
        assert!(rec.failed);
        assert!(rec
            .violations
            .iter()
            .any(|v| v.id == ConstraintId::FailedTakeoff && v.magnitude == FAILED_TAKEOFF_SENTINEL));
        assert!(rec.violations.iter().any(|v| v.id == ConstraintId::JointRange));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let robot = RobotParams::default();
        let rec = run_jump(&robot, &SimConfig::default(), &wjbd_command(&robot, 0.25)).unwrap();
        let mut buf = Vec::new();
        write_trial_csv(&rec, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,phase,z_wheel,z_com,knee_angle,knee_torque,knee_rate\n"));
        assert_eq!(text.lines().count(), rec.samples.len() + 1);
    }

    #[test]
    fn bad_prejump_angle_is_rejected() {
        let robot = RobotParams::default();
        let mut cmd = wjbd_command(&robot, 0.3);
        cmd.prejump_angle = 1.5;
        assert!(matches!(
            run_jump(&robot, &SimConfig::default(), &cmd),
            Err(SimError::InvalidParam(_))
        ));
    }
}
