//! Jump-height planning and torque optimization for wheeled-bipedal robots.
//!
//! * [`dynamics`]: stance pendulum model, linearization and balance control
//! * [`squat`]: leg kinematics and squat trajectories
//! * [`wjbd`]: closed-form feedforward jump planner
//! * [`sim`]: deterministic multi-phase jump simulator
//! * [`botp`]: Bayesian optimization of the take-off torque profile
//! * [`campaign`]: configuration, parameter library and reports

pub mod botp;
pub mod campaign;
pub mod dynamics;
pub mod params;
pub mod profile;
pub mod sim;
pub mod squat;
pub mod wjbd;
