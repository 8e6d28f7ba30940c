//! Campaign configuration, the parameter library and report files.

use crate::botp::{
    botp_command, iterations_to_converge, optimize, wjbd_command, BotpConfig, BotpError, BotpParams, OptResult,
    StopReason,
};
use crate::params::RobotParams;
use crate::sim::{run_jump, torque_step_per_period, SimConfig, SimError, TrialRecord};
use crate::wjbd::{solve_plan, FeedforwardForm, PlanError, WjbdPlan};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Fraction used by the convergence-iteration metric.
pub const CONVERGENCE_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config file {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub robot: RobotParams,
    pub sim: SimConfig,
    pub optimizer: BotpConfig,
    pub targets: Vec<f64>,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            robot: RobotParams::default(),
            sim: SimConfig::default(),
            optimizer: BotpConfig::default(),
            targets: vec![0.2, 0.3, 0.4],
            seeds: (0..5).collect(),
            output_dir: None,
        }
    }
}

impl CampaignConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        self.robot.validate()?;
        self.sim.validate()?;
        self.optimizer.validate()?;
        for (i, t) in self.targets.iter().enumerate() {
            if !(t.is_finite() && *t > 0.0) {
                return Err(format!("targets[{i}] must be finite and positive (got {t})"));
            }
        }
        if self.seeds.is_empty() {
            return Err("seeds must not be empty".into());
        }
        Ok(())
    }
}

/// Outcome metrics of one simulated jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub height: f64,
    pub height_error_pct: f64,
    pub energy_j: f64,
    /// Largest knee-torque change over one control period.
    pub torque_step_nm: f64,
}

impl Metrics {
    pub fn of(rec: &TrialRecord, target: f64, sim: &SimConfig) -> Self {
        Self {
            height: rec.apex_wheel_height,
            height_error_pct: 100.0 * (rec.apex_wheel_height - target).abs() / target,
            energy_j: rec.energy,
            torque_step_nm: torque_step_per_period(rec, sim.control_period),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub best_params: BotpParams,
    pub best_objective: f64,
    pub iterations: usize,
    pub converged_at: usize,
    pub stop_reason: StopReason,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotpEntry {
    pub prejump_angle: f64,
    /// Seed of the run with the lowest objective.
    pub best_seed: u64,
    pub best_params: BotpParams,
    pub best_objective: f64,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub target_height: f64,
    pub wjbd_plan: Option<WjbdPlan>,
    pub wjbd_metrics: Option<Metrics>,
    pub botp: Option<BotpEntry>,
    /// Failure message when the target could not be completed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterLibrary {
    pub entries: Vec<LibraryEntry>,
}

impl ParameterLibrary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("library is serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn entry(&self, target: f64) -> Option<&LibraryEntry> {
        self.entries.iter().find(|e| e.target_height == target)
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

/// W-JBD baseline trial for a plan.
pub fn run_wjbd(plan: &WjbdPlan, robot: &RobotParams, sim: &SimConfig, retraction_fraction: f64) -> Result<TrialRecord, SimError> {
    run_jump(robot, sim, &wjbd_command(plan, robot, retraction_fraction))
}

/// Re-simulate a BOTP parameter set.
pub fn run_botp(
    params: &BotpParams,
    prejump_angle: f64,
    robot: &RobotParams,
    sim: &SimConfig,
    cfg: &BotpConfig,
) -> Result<TrialRecord, SimError> {
    run_jump(robot, sim, &botp_command(params, prejump_angle, robot, cfg))
}

pub fn summarize(res: &OptResult, rec: &TrialRecord, sim: &SimConfig) -> RunSummary {
    RunSummary {
        seed: res.seed,
        best_params: res.best_params,
        best_objective: res.best_objective,
        iterations: res.iterations,
        converged_at: iterations_to_converge(&res.objectives(), CONVERGENCE_FRACTION),
        stop_reason: res.stop_reason,
        metrics: Metrics::of(rec, res.target_height, sim),
    }
}

#[derive(Debug, Error)]
enum TargetError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Botp(#[from] BotpError),
}

/// Everything a campaign produced.
#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub library: ParameterLibrary,
    pub runs: Vec<OptResult>,
}

fn run_target(target: f64, cfg: &CampaignConfig) -> Result<(LibraryEntry, Vec<OptResult>), TargetError> {
    let robot = &cfg.robot;
    let plan = solve_plan(target, &robot.wjbd_params(), robot.knee_torque_limit, FeedforwardForm::SpringMimic)?;
    let wrec = run_wjbd(&plan, robot, &cfg.sim, cfg.optimizer.retraction_fraction)?;
    let runs: Vec<OptResult> = cfg
        .seeds
        .par_iter()
        .map(|&seed| optimize(target, seed, robot, &cfg.sim, &cfg.optimizer))
        .collect::<Result<_, _>>()?;
    let mut summaries = Vec::with_capacity(runs.len());
    for r in &runs {
        let rec = run_botp(&r.best_params, r.prejump_angle, robot, &cfg.sim, &cfg.optimizer)?;
        summaries.push(summarize(r, &rec, &cfg.sim));
    }
    let best = runs
        .iter()
        .min_by(|a, b| a.best_objective.total_cmp(&b.best_objective))
        .expect("seeds are non-empty");
    let entry = LibraryEntry {
        target_height: target,
        wjbd_plan: Some(plan),
        wjbd_metrics: Some(Metrics::of(&wrec, target, &cfg.sim)),
        botp: Some(BotpEntry {
            prejump_angle: best.prejump_angle,
            best_seed: best.seed,
            best_params: best.best_params,
            best_objective: best.best_objective,
            runs: summaries,
        }),
        error: None,
    };
    Ok((entry, runs))
}

/// Plan, simulate and optimize every configured target. Failures are recorded
/// per target and the campaign continues.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignOutcome, ConfigError> {
    cfg.validate().map_err(ConfigError::Invalid)?;
    if cfg.targets.is_empty() {
        return Err(ConfigError::Invalid("targets must contain at least one height".into()));
    }
    let mut library = ParameterLibrary::default();
    let mut runs = Vec::new();
    for &target in &cfg.targets {
        match run_target(target, cfg) {
            Ok((entry, r)) => {
                library.entries.push(entry);
                runs.extend(r);
            }
            Err(e) => library.entries.push(LibraryEntry {
                target_height: target,
                wjbd_plan: None,
                wjbd_metrics: None,
                botp: None,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(CampaignOutcome { library, runs })
}

/// Comparison table built only from the library; BOTP rows hold medians
/// over seeds.
pub fn comparison_csv(lib: &ParameterLibrary) -> String {
    let mut out = String::from("target,method,height_error_pct,energy_J,torque_step_Nm,iterations,ldot_d\n");
    for e in &lib.entries {
        if let (Some(plan), Some(m)) = (&e.wjbd_plan, &e.wjbd_metrics) {
            let _ = writeln!(
                out,
                "{},wjbd,{},{},{},0,{}",
                e.target_height, m.height_error_pct, m.energy_j, m.torque_step_nm, plan.takeoff_velocity
            );
        }
        if let Some(b) = &e.botp {
            let col = |f: fn(&RunSummary) -> f64| median(&b.runs.iter().map(f).collect::<Vec<_>>());
            let _ = writeln!(
                out,
                "{},botp,{},{},{},{},{}",
                e.target_height,
                col(|r| r.metrics.height_error_pct),
                col(|r| r.metrics.energy_j),
                col(|r| r.metrics.torque_step_nm),
                col(|r| r.iterations as f64),
                col(|r| r.best_params.ldot_d),
            );
        }
    }
    out
}

/// Per-iteration convergence table of one optimization run.
pub fn convergence_csv(res: &OptResult) -> String {
    let mut out = String::from("iteration,objective,best_so_far\n");
    let mut best = f64::INFINITY;
    for (i, h) in res.history.iter().enumerate() {
        best = best.min(h.objective);
        let _ = writeln!(out, "{},{},{}", i + 1, h.objective, best);
    }
    out
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        CampaignConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_field_is_named() {
        let err = CampaignConfig::from_toml_str("[sim]\ndtt = 1e-4\n").unwrap_err();
        assert!(err.contains("dtt"), "{err}");
    }

    #[test]
    fn invalid_value_is_named() {
        let err = CampaignConfig::from_toml_str("[optimizer]\nbudget = 3\n").unwrap_err();
        assert!(err.contains("optimizer.budget"), "{err}");
        let err = CampaignConfig::from_toml_str("targets = [0.3, -1.0]\n").unwrap_err();
        assert!(err.contains("targets[1]"), "{err}");
    }

    #[test]
    fn nested_sections_parse() {
        let cfg = CampaignConfig::from_toml_str(
            "targets = [0.25]\nseeds = [7]\n[robot]\nspring_stiffness = 2500.0\n[robot.leg]\nthigh_length = 0.2\nshank_length = 0.2\nhip_offset = 0.0\n[sim]\nknee_damping = 0.1\n",
        )
        .unwrap();
        assert_eq!(cfg.robot.spring_stiffness, 2500.0);
        assert_eq!(cfg.sim.knee_damping, 0.1);
        assert_eq!(cfg.seeds, vec![7]);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
