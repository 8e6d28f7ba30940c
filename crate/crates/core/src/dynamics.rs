//! Stance dynamics of the wheel-inverted-pendulum, its linearization about the
//! upright point, pole-placement gains and the balance controller.
//!
//! Sign conventions: `tau` is the torque of a single wheel motor, `u = 2 tau`
//! is the total wheel torque. Positive pitch leans the body forward.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

/// Total wheel torque limit (two wheels at 5 N·m each).
pub const WHEEL_TORQUE_LIMIT: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("stance parameter `{0}` must be finite and strictly positive")]
    InvalidParam(&'static str),
    #[error("non-finite input to stance dynamics")]
    NonFinite,
    #[error("pitch {0} rad is outside (-pi/2, pi/2): the robot has fallen")]
    Fallen(f64),
    #[error("time step {0} outside (0, 1e-2]")]
    BadStep(f64),
    #[error("the pair (A, B) is not controllable (B[1] = 0)")]
    Uncontrollable,
    #[error("requested pole {0} does not have a negative real part")]
    UnstablePole(String),
}

/// Physical constants of the stance model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StanceParams {
    pub body_mass: f64,
    pub wheel_mass_each: f64,
    pub wheel_radius: f64,
    pub pendulum_length: f64,
    pub gravity: f64,
}

impl StanceParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let fields = [
            ("body_mass", self.body_mass),
            ("wheel_mass_each", self.wheel_mass_each),
            ("wheel_radius", self.wheel_radius),
            ("pendulum_length", self.pendulum_length),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(DynamicsError::InvalidParam(name));
            }
        }
        // gravity may be zero for analysis, never negative
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return Err(DynamicsError::InvalidParam("gravity"));
        }
        Ok(())
    }

    /// Wheel moment of inertia, `½ m r²` (solid disc).
    pub fn wheel_inertia(&self) -> f64 {
        0.5 * self.wheel_mass_each * self.wheel_radius * self.wheel_radius
    }
}

impl Default for StanceParams {
    fn default() -> Self {
        Self {
            body_mass: 7.0,
            wheel_mass_each: 0.4,
            wheel_radius: 0.05,
            pendulum_length: 0.25,
            gravity: 9.81,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StanceState {
    pub pitch: f64,
    pub pitch_rate: f64,
    pub wheel_angle: f64,
    pub wheel_rate: f64,
}

impl StanceState {
    pub fn upright() -> Self {
        Self::default()
    }

    pub fn with_pitch(pitch: f64) -> Self {
        Self {
            pitch,
            ..Self::default()
        }
    }

    fn is_finite(&self) -> bool {
        self.pitch.is_finite()
            && self.pitch_rate.is_finite()
            && self.wheel_angle.is_finite()
            && self.wheel_rate.is_finite()
    }
}

/// `x' = A x + B u` about the upright point, with `x = [pitch, pitch_rate]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
}

/// Pitch acceleration of the nonlinear stance model for a per-wheel torque
/// `tau`.
pub fn theta_ddot(state: &StanceState, tau: f64, p: &StanceParams) -> Result<f64, DynamicsError> {
    p.validate()?;
    if !state.is_finite() || !tau.is_finite() {
        return Err(DynamicsError::NonFinite);
    }
    if state.pitch.abs() >= FRAC_PI_2 {
        return Err(DynamicsError::Fallen(state.pitch));
    }
    Ok(pitch_accel(state.pitch, tau, p))
}

// Unchecked form used inside the integrator.
fn pitch_accel(theta: f64, tau: f64, p: &StanceParams) -> f64 {
    let (m, r, l, g) = (p.body_mass, p.wheel_radius, p.pendulum_length, p.gravity);
    let jw = p.wheel_inertia();
    let d1 = m * l * r * theta.sin();
    let d2 = m * l * r * theta.cos();
    let num = -d1 * d2 * theta * theta + d1 * m * g * r + 6.0 * d1 * jw * g / r
        - 2.0 * tau * (d2 + m * r * r + 6.0 * jw);
    let den = 6.0 * jw * m * l * l + d1 * d1;
    num / den
}

/// Wheel angular acceleration consistent with the same contact model
/// (from `tau = ½ m r² α'' + f r` and the horizontal force balance).
fn wheel_accel(theta: f64, theta_dot: f64, theta_dd: f64, tau: f64, p: &StanceParams) -> f64 {
    let (m_body, m, r, l) = (p.body_mass, p.wheel_mass_each, p.wheel_radius, p.pendulum_length);
    // 2F_x = M (x'' + L(θ'' cos θ - θ'² sin θ)), F_x = f - m α'' r, x'' = α'' r
    // τ = ½ m r² α'' + f r  =>  f = (τ - ½ m r² α'')/r
    // 2(f - m r α'') = M r α'' + M L (θ'' cos θ - θ'² sin θ)
    let pend = m_body * l * (theta_dd * theta.cos() - theta_dot * theta_dot * theta.sin());
    let coeff = 2.0 * (0.5 * m * r) + 2.0 * m * r + m_body * r;
    (2.0 * tau / r - pend) / coeff
}

/// Jacobian of the pitch dynamics at the upright point.
pub fn linearize(p: &StanceParams) -> Result<LinearModel, DynamicsError> {
    p.validate()?;
    let (m, r, l, g) = (p.body_mass, p.wheel_radius, p.pendulum_length, p.gravity);
    let jw = p.wheel_inertia();
    let a10 = g * (m * r * r + 6.0 * jw) / (6.0 * jw * l);
    let b1 = -(m * l * r + m * r * r + 6.0 * jw) / (6.0 * jw * m * l * l);
    Ok(LinearModel {
        a: [[0.0, 1.0], [a10, 0.0]],
        b: [0.0, b1],
    })
}

/// Desired closed-loop eigenvalues of the 2x2 pitch loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolePair {
    Real { s1: f64, s2: f64 },
    Complex { re: f64, im: f64 },
}

impl PolePair {
    /// Coefficients `(c1, c0)` of `s² + c1 s + c0`.
    fn char_poly(&self) -> (f64, f64) {
        match *self {
            PolePair::Real { s1, s2 } => (-(s1 + s2), s1 * s2),
            PolePair::Complex { re, im } => (-2.0 * re, re * re + im * im),
        }
    }

    fn check_stable(&self) -> Result<(), DynamicsError> {
        let ok = match *self {
            PolePair::Real { s1, s2 } => s1 < 0.0 && s2 < 0.0 && s1.is_finite() && s2.is_finite(),
            PolePair::Complex { re, im } => re < 0.0 && re.is_finite() && im.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(DynamicsError::UnstablePole(format!("{self:?}")))
        }
    }
}

impl Default for PolePair {
    fn default() -> Self {
        PolePair::Real { s1: -5.0, s2: -8.0 }
    }
}

/// State-feedback gain row `K` with `u = -K x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gain(pub [f64; 2]);

/// Coefficient matching on the companion-structured pair: for
/// `A = [[0, 1], [a, 0]]`, `B = [0, b]` the closed-loop polynomial is
/// `s² + b k2 s + (b k1 - a)`.
pub fn place_poles(model: &LinearModel, poles: PolePair) -> Result<Gain, DynamicsError> {
    poles.check_stable()?;
    let b = model.b[1];
    if b == 0.0 || !b.is_finite() {
        return Err(DynamicsError::Uncontrollable);
    }
    let (c1, c0) = poles.char_poly();
    // General 2x2 with B = [0, b]: A - BK = [[a00, a01], [a10 - b k1, a11 - b k2]].
    // Trace = a00 + a11 - b k2 = -c1; det = a00 (a11 - b k2) - a01 (a10 - b k1) = c0.
    let [[a00, a01], [a10, a11]] = model.a;
    let k2 = (a00 + a11 + c1) / b;
    let k1 = (c0 - a00 * (a11 - b * k2) + a01 * a10) / (a01 * b);
    if !(k1.is_finite() && k2.is_finite()) {
        return Err(DynamicsError::Uncontrollable);
    }
    Ok(Gain([k1, k2]))
}

/// Total wheel torque `u = -K (x - x_ref)`, saturated at the wheel limit.
pub fn balance_torque(state: &StanceState, k: &Gain, reference: &StanceState) -> f64 {
    let e0 = state.pitch - reference.pitch;
    let e1 = state.pitch_rate - reference.pitch_rate;
    let u = -(k.0[0] * e0 + k.0[1] * e1);
    u.clamp(-WHEEL_TORQUE_LIMIT, WHEEL_TORQUE_LIMIT)
}

/// One RK4 step of the nonlinear stance dynamics under total wheel torque `u`.
pub fn stance_step(
    state: &StanceState,
    u: f64,
    dt: f64,
    p: &StanceParams,
) -> Result<StanceState, DynamicsError> {
    if !(dt > 0.0 && dt <= 1e-2) {
        return Err(DynamicsError::BadStep(dt));
    }
    p.validate()?;
    if !state.is_finite() || !u.is_finite() {
        return Err(DynamicsError::NonFinite);
    }
    if state.pitch.abs() >= FRAC_PI_2 {
        return Err(DynamicsError::Fallen(state.pitch));
    }
    let tau = 0.5 * u;
    let deriv = |s: [f64; 4]| -> [f64; 4] {
        let thdd = pitch_accel(s[0], tau, p);
        let wdd = wheel_accel(s[0], s[1], thdd, tau, p);
        [s[1], thdd, s[3], wdd]
    };
    let x = [state.pitch, state.pitch_rate, state.wheel_angle, state.wheel_rate];
    let next = rk4(x, dt, deriv);
    let out = StanceState {
        pitch: next[0],
        pitch_rate: next[1],
        wheel_angle: next[2],
        wheel_rate: next[3],
    };
    if !out.is_finite() {
        return Err(DynamicsError::NonFinite);
    }
    if out.pitch.abs() >= FRAC_PI_2 {
        return Err(DynamicsError::Fallen(out.pitch));
    }
    Ok(out)
}

pub(crate) fn rk4<const N: usize>(x: [f64; N], h: f64, f: impl Fn([f64; N]) -> [f64; N]) -> [f64; N] {
    let add = |a: [f64; N], b: [f64; N], s: f64| {
        let mut o = a;
        for i in 0..N {
            o[i] += s * b[i];
        }
        o
    };
    let k1 = f(x);
    let k2 = f(add(x, k1, 0.5 * h));
    let k3 = f(add(x, k2, 0.5 * h));
    let k4 = f(add(x, k3, h));
    let mut o = x;
    for i in 0..N {
        o[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    o
}

/// Closed-loop balance simulation; returns the pitch trajectory sampled every
/// step (including the initial state).
pub fn simulate_balance(
    initial: StanceState,
    k: &Gain,
    duration: f64,
    dt: f64,
    p: &StanceParams,
) -> Result<Vec<StanceState>, DynamicsError> {
    let steps = (duration / dt).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = initial;
    out.push(s);
    let reference = StanceState::upright();
    for _ in 0..steps {
        let u = balance_torque(&s, k, &reference);
        s = stance_step(&s, u, dt, p)?;
        out.push(s);
    }
    Ok(out)
}
