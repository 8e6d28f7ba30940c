//! Bayesian optimization of the take-off torque profile and cut-off speed.

pub mod gp;

use crate::params::RobotParams;
use crate::profile::TorqueProfile;
use crate::sim::{run_jump, JumpCommand, Retraction, SimConfig, SimError, TrialRecord, Violation};
use crate::wjbd::{solve_plan, FeedforwardForm, PlanError, WjbdPlan};
use gp::{fit_hyperparameters, gp_fit, suggest_unit, GaussianProcess, GpError, Hyper, HyperBounds};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest objective value distinguished by the surrogate's log transform.
const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BotpError {
    #[error("invalid optimizer setting: {0}")]
    InvalidConfig(String),
    #[error("degenerate search bounds for `{0}` (lower must be < upper)")]
    DegenerateBounds(&'static str),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Gp(#[from] GpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<(&str, f64, f64)>) -> Result<Self, BotpError> {
        let dims: Vec<Dimension> = dims
            .into_iter()
            .map(|(n, lower, upper)| Dimension {
                name: n.to_string(),
                lower,
                upper,
            })
            .collect();
        for d in &dims {
            if !(d.lower.is_finite() && d.upper.is_finite() && d.lower < d.upper) {
                return Err(BotpError::DegenerateBounds(static_name(&d.name)));
            }
        }
        Ok(Self { dims })
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(u)
            .map(|(d, v)| d.lower + (d.upper - d.lower) * v.clamp(0.0, 1.0))
            .collect()
    }

    pub fn to_unit(&self, z: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(z)
            .map(|(d, v)| ((v - d.lower) / (d.upper - d.lower)).clamp(0.0, 1.0))
            .collect()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dims.len() && self.dims.iter().zip(z).all(|(d, v)| *v >= d.lower && *v <= d.upper)
    }
}

fn static_name(name: &str) -> &'static str {
    match name {
        "tau_p" => "tau_p",
        "k" => "k",
        "t0" => "t0",
        "ldot_d" => "ldot_d",
        _ => "dimension",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BotpConfig {
    pub budget: usize,
    pub warm_start: usize,
    pub penalty: f64,
    pub early_stop: bool,
    pub window: usize,
    pub tol: f64,
    /// Relative half-width of the cut-speed bounds around the W-JBD value.
    pub widening: f64,
    /// Peak torque bounds as fractions of the knee torque limit.
    pub peak_fraction: (f64, f64),
    pub steepness: (f64, f64),
    pub midpoint: (f64, f64),
    /// Squat stroke as a fraction of the W-JBD spring displacement.
    pub squat_ratio: f64,
    /// Weight of the take-off energy in the objective (0 disables it).
    pub energy_weight: f64,
    pub refit_every: usize,
    pub hyper_restarts: usize,
    pub hyper_iters: u64,
    pub acquisition_probes: usize,
    pub retraction_fraction: f64,
}

impl Default for BotpConfig {
    fn default() -> Self {
        Self {
            budget: 100,
            warm_start: 10,
            penalty: 1e3,
            early_stop: true,
            window: 15,
            tol: 1e-3,
            widening: 0.3,
            peak_fraction: (0.5, 1.0),
            steepness: (30.0, 120.0),
            midpoint: (0.05, 0.2),
            squat_ratio: 0.6,
            energy_weight: 0.0,
            refit_every: 5,
            hyper_restarts: 3,
            hyper_iters: 150,
            acquisition_probes: 1000,
            retraction_fraction: 0.8,
        }
    }
}

impl BotpConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.warm_start == 0 {
            return Err("optimizer.warm_start must be at least 1".into());
        }
        if self.budget < self.warm_start {
            return Err(format!(
                "optimizer.budget ({}) must be at least optimizer.warm_start ({})",
                self.budget, self.warm_start
            ));
        }
        if !(self.penalty.is_finite() && self.penalty > 0.0) {
            return Err("optimizer.penalty must be finite and positive".into());
        }
        if self.window == 0 {
            return Err("optimizer.window must be at least 1".into());
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err("optimizer.tol must be non-negative".into());
        }
        if !(self.widening.is_finite() && self.widening > 0.0 && self.widening < 1.0 + 1e-12) {
            return Err("optimizer.widening must lie in (0, 1]".into());
        }
        let pairs = [
            ("optimizer.peak_fraction", self.peak_fraction),
            ("optimizer.steepness", self.steepness),
            ("optimizer.midpoint", self.midpoint),
        ];
        for (name, (lo, hi)) in pairs {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
                return Err(format!("{name} must satisfy 0 < lower < upper"));
            }
        }
        if self.peak_fraction.1 > 1.0 {
            return Err("optimizer.peak_fraction upper bound must not exceed 1".into());
        }
        if !(self.squat_ratio > 0.0 && self.squat_ratio <= 1.0) {
            return Err("optimizer.squat_ratio must lie in (0, 1]".into());
        }
        if !(self.energy_weight.is_finite() && self.energy_weight >= 0.0) {
            return Err("optimizer.energy_weight must be non-negative".into());
        }
        if self.refit_every == 0 || self.hyper_restarts == 0 || self.acquisition_probes == 0 {
            return Err("optimizer.refit_every, hyper_restarts and acquisition_probes must be positive".into());
        }
        if !(self.retraction_fraction > 0.0 && self.retraction_fraction < 1.0) {
            return Err("optimizer.retraction_fraction must lie in (0, 1)".into());
        }
        Ok(())
    }
}

/// Search space `(τ_p, k, t₀, L̇_d)` centred on a W-JBD plan.
pub fn bounds_from_wjbd(plan: &WjbdPlan, torque_limit: f64, cfg: &BotpConfig) -> Result<SearchSpace, BotpError> {
    let w = cfg.widening;
    let ldot = plan.takeoff_velocity;
    if !(w > 0.0) {
        return Err(BotpError::DegenerateBounds("ldot_d"));
    }
    SearchSpace::new(vec![
        (
            "tau_p",
            cfg.peak_fraction.0 * torque_limit,
            cfg.peak_fraction.1.min(1.0) * torque_limit,
        ),
        ("k", cfg.steepness.0, cfg.steepness.1),
        ("t0", cfg.midpoint.0, cfg.midpoint.1),
        ("ldot_d", ((1.0 - w) * ldot).max(1e-3), (1.0 + w) * ldot),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BotpParams {
    pub tau_p: f64,
    pub k: f64,
    pub t0: f64,
    pub ldot_d: f64,
}

impl BotpParams {
    pub fn from_vec(z: &[f64]) -> Self {
        Self {
            tau_p: z[0],
            k: z[1],
            t0: z[2],
            ldot_d: z[3],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.tau_p, self.k, self.t0, self.ldot_d]
    }
}

/// Knee included angle at the bottom of the BOTP squat.
pub fn botp_prejump_angle(plan: &WjbdPlan, robot: &RobotParams, cfg: &BotpConfig) -> f64 {
    let dl = cfg.squat_ratio * plan.spring_displacement;
    let s = (robot.natural_length() - dl) / (2.0 * robot.link_length());
    2.0 * s.clamp(-1.0, 1.0).asin()
}

pub fn botp_command(params: &BotpParams, prejump_angle: f64, robot: &RobotParams, cfg: &BotpConfig) -> JumpCommand {
    JumpCommand {
        profile: TorqueProfile::SigmoidRamp {
            peak: params.tau_p,
            steepness: params.k,
            midpoint: params.t0,
            limit: robot.knee_torque_limit,
        },
        prejump_angle,
        cut_speed: params.ldot_d,
        retraction: Retraction {
            tuck_angle: robot.tuck_angle,
            duration_fraction: cfg.retraction_fraction,
        },
    }
}

/// W-JBD baseline: spring-mimic feedforward with no early cut.
pub fn wjbd_command(plan: &WjbdPlan, robot: &RobotParams, retraction_fraction: f64) -> JumpCommand {
    JumpCommand {
        profile: plan.feedforward,
        prejump_angle: plan.prejump_knee_angle,
        cut_speed: f64::INFINITY,
        retraction: Retraction {
            tuck_angle: robot.tuck_angle,
            duration_fraction: retraction_fraction,
        },
    }
}

/// Squared-penalty term `μ Σ max(0, g)²`.
pub fn penalty_term(violations: &[f64], mu: f64) -> f64 {
    mu * violations.iter().map(|g| g.max(0.0).powi(2)).sum::<f64>()
}

/// Penalty objective `(h - h̃)² + μ Σ max(0, g)²`.
pub fn objective(height: f64, target: f64, violations: &[f64], mu: f64) -> f64 {
    (height - target).powi(2) + penalty_term(violations, mu)
}

pub fn trial_objective(rec: &TrialRecord, target: f64, mu: f64) -> f64 {
    let g: Vec<f64> = rec.violations.iter().map(|v: &Violation| v.magnitude).collect();
    objective(rec.apex_wheel_height, target, &g, mu)
}

/// True when the best value improved by less than `tol` (relative) over the
/// last `window` evaluations.
pub fn early_stop(history: &[f64], window: usize, tol: f64) -> bool {
    if window == 0 || history.len() < window {
        return false;
    }
    let start = history.len() - window;
    let before = history[..=start].iter().copied().fold(f64::INFINITY, f64::min);
    let now = history.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = before.abs().max(f64::MIN_POSITIVE);
    (before - now) / scale < tol
}

/// Running minimum of a sequence.
pub fn best_so_far(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(f64::INFINITY, |b, v| {
            *b = b.min(*v);
            Some(*b)
        })
        .collect()
}

/// First 1-based iteration whose best-so-far value is within `fraction`
/// (relative) of the run's final best.
pub fn iterations_to_converge(values: &[f64], fraction: f64) -> usize {
    let best = best_so_far(values);
    let Some(last) = best.last() else {
        return 0;
    };
    let threshold = last + fraction * last.abs();
    best.iter().position(|b| *b <= threshold).map_or(best.len(), |i| i + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Budget,
    EarlyStop,
}

/// Settings of the generic minimizer.
#[derive(Debug, Clone, Copy)]
pub struct LoopSettings {
    pub budget: usize,
    pub warm_start: usize,
    pub early_stop: Option<(usize, f64)>,
    pub refit_every: usize,
    pub hyper_restarts: usize,
    pub hyper_iters: u64,
    pub probes: usize,
}

impl LoopSettings {
    pub fn from_config(cfg: &BotpConfig) -> Self {
        Self {
            budget: cfg.budget,
            warm_start: cfg.warm_start,
            early_stop: cfg.early_stop.then_some((cfg.window, cfg.tol)),
            refit_every: cfg.refit_every,
            hyper_restarts: cfg.hyper_restarts,
            hyper_iters: cfg.hyper_iters,
            probes: cfg.acquisition_probes,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoopResult {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub best_index: usize,
    pub stop_reason: StopReason,
}

/// Warm-start design: a randomly shifted Halton sequence in the unit cube.
pub fn warm_start_points<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    const PRIMES: [u8; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];
    assert!(dim <= PRIMES.len(), "warm start supports up to {} dimensions", PRIMES.len());
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    (1..=n)
        .map(|i| {
            (0..dim)
                .map(|d| (halton::number(PRIMES[d], i) + shift[d]).fract())
                .collect()
        })
        .collect()
}

/// Bayesian minimization of `f` over `space`, deterministic per `seed`.
pub fn minimize<F>(space: &SearchSpace, settings: &LoopSettings, seed: u64, mut f: F) -> Result<LoopResult, BotpError>
where
    F: FnMut(&[f64]) -> Result<f64, BotpError>,
{
    if settings.warm_start == 0 || settings.budget < settings.warm_start {
        return Err(BotpError::InvalidConfig("budget must be at least the warm-start count".into()));
    }
    let dim = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut units: Vec<Vec<f64>> = Vec::new();
    let mut points = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut eval = |u: Vec<f64>, units: &mut Vec<Vec<f64>>, points: &mut Vec<Vec<f64>>, values: &mut Vec<f64>| {
        let z = space.from_unit(&u);
        let v = f(&z)?;
        units.push(u);
        points.push(z);
        values.push(v);
        Ok::<(), BotpError>(())
    };
    for u in warm_start_points(settings.warm_start, dim, &mut rng) {
        eval(u, &mut units, &mut points, &mut values)?;
    }
    let mut hyper = Hyper::isotropic(dim, 0.3);
    let bounds = HyperBounds::default();
    let mut stop_reason = StopReason::Budget;
    let mut since_refit = settings.refit_every;
    while values.len() < settings.budget {
        if let Some((window, tol)) = settings.early_stop {
            if early_stop(&values[settings.warm_start.min(values.len())..], window, tol) {
                stop_reason = StopReason::EarlyStop;
                break;
            }
        }
        let y: Vec<f64> = values.iter().map(|v| (v.max(0.0) + LOG_FLOOR).ln()).collect();
        if since_refit >= settings.refit_every {
            hyper = fit_hyperparameters(
                &units,
                &y,
                &hyper,
                &bounds,
                settings.hyper_restarts,
                settings.hyper_iters,
                &mut rng,
            )?;
            since_refit = 0;
        }
        since_refit += 1;
        let gp: GaussianProcess = gp_fit(&units, &y, &hyper)?;
        let (best_i, best_y) = y
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("warm start is non-empty");
        let incumbent = units[best_i].clone();
        let u = suggest_unit(&gp, dim, best_y, settings.probes, Some(&incumbent), &mut rng);
        eval(u, &mut units, &mut points, &mut values)?;
    }
    let best_index = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("at least one evaluation");
    Ok(LoopResult {
        points,
        values,
        best_index,
        stop_reason,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub params: BotpParams,
    pub height: f64,
    pub height_error: f64,
    pub penalty: f64,
    pub energy: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub target_height: f64,
    pub best_params: BotpParams,
    pub best_objective: f64,
    pub history: Vec<HistoryEntry>,
    pub stop_reason: StopReason,
    pub seed: u64,
    pub iterations: usize,
    pub prejump_angle: f64,
    /// True when no evaluated trial satisfied every constraint.
    pub all_infeasible: bool,
}

impl OptResult {
    pub fn objectives(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.objective).collect()
    }

    pub fn best(&self) -> &HistoryEntry {
        self.history
            .iter()
            .min_by(|a, b| a.objective.total_cmp(&b.objective))
            .expect("non-empty history")
    }
}

/// Optimize the take-off parameters for `target` (m).
pub fn optimize(
    target: f64,
    seed: u64,
    robot: &RobotParams,
    sim: &SimConfig,
    cfg: &BotpConfig,
) -> Result<OptResult, BotpError> {
    cfg.validate().map_err(BotpError::InvalidConfig)?;
    robot.validate().map_err(BotpError::InvalidConfig)?;
    sim.validate().map_err(BotpError::InvalidConfig)?;
    let wp = robot.wjbd_params();
    let plan = solve_plan(target, &wp, robot.knee_torque_limit, FeedforwardForm::SpringMimic)?;
    let space = bounds_from_wjbd(&plan, robot.knee_torque_limit, cfg)?;
    let prejump = botp_prejump_angle(&plan, robot, cfg);
    let mut history = Vec::new();
    let mut any_feasible = false;
    let run = minimize(&space, &LoopSettings::from_config(cfg), seed, |z| {
        let params = BotpParams::from_vec(z);
        let rec = run_jump(robot, sim, &botp_command(&params, prejump, robot, cfg))?;
        let g: Vec<f64> = rec.violations.iter().map(|v| v.magnitude).collect();
        let penalty = penalty_term(&g, cfg.penalty);
        any_feasible |= g.is_empty();
        let obj = objective(rec.apex_wheel_height, target, &g, cfg.penalty) + cfg.energy_weight * rec.energy;
        history.push(HistoryEntry {
            params,
            height: rec.apex_wheel_height,
            height_error: rec.apex_wheel_height - target,
            penalty,
            energy: rec.energy,
            objective: obj,
        });
        Ok(obj)
    })?;
    Ok(OptResult {
        target_height: target,
        best_params: BotpParams::from_vec(&run.points[run.best_index]),
        best_objective: run.values[run.best_index],
        iterations: history.len(),
        history,
        stop_reason: run.stop_reason,
        seed,
        prejump_angle: prejump,
        all_infeasible: !any_feasible,
    })
}
