//! Command-line harness: plan, simulate, optimize and campaign.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use wheeljump::botp::{optimize, BotpError, OptResult};
use wheeljump::campaign::{
    comparison_csv, convergence_csv, run_botp, run_campaign, run_wjbd, write_atomic, CampaignConfig, Metrics,
    ParameterLibrary,
};
use wheeljump::sim::{torque_step_metric, write_trial_csv, TrialRecord};
use wheeljump::wjbd::{solve_plan, FeedforwardForm, PlanError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "wheeljump", version, about = "Jump-height planning and torque optimization for a wheeled-bipedal robot")]
pub struct Cli {
    /// TOML configuration file (defaults are used when omitted).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Wjbd,
    Botp,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the closed-form feedforward plan for a target wheel height.
    Plan {
        #[arg(long)]
        height: f64,
    },
    /// Simulate one jump and write its time series.
    Simulate {
        #[arg(long)]
        height: f64,
        #[arg(long, value_enum, default_value = "wjbd")]
        method: Method,
        /// Parameter library or optimization result holding BOTP parameters.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Accepted for interface uniformity; the simulator is deterministic.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Optimize the take-off profile for one target height.
    Optimize {
        #[arg(long)]
        height: f64,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run every configured target and seed and build the parameter library.
    Campaign {
        #[arg(long)]
        budget: Option<usize>,
        /// Run only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Run only this target instead of the configured list.
        #[arg(long)]
        height: Option<f64>,
    },
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn failed(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_FAILED,
            message: message.into(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::failed(format!("cannot write {}: {e}", path.display()))
}

fn plan_failure(e: PlanError) -> Failure {
    Failure::failed(e.to_string())
}

fn botp_failure(e: BotpError) -> Failure {
    match e {
        BotpError::InvalidConfig(m) => Failure::usage(m),
        other => Failure::failed(other.to_string()),
    }
}

fn height_tag(h: f64) -> String {
    format!("{h:.3}").replace('.', "p")
}

/// Parse and run; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load_config(cli: &Cli) -> Result<CampaignConfig, Failure> {
    match &cli.config {
        Some(p) => CampaignConfig::load(p).map_err(|e| Failure::usage(e.to_string())),
        None => Ok(CampaignConfig::default()),
    }
}

fn out_dir(cli: &Cli, cfg: &CampaignConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    write_atomic(path, text.as_bytes()).map_err(|e| io_failure(path, e))
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

fn check_height(h: f64) -> Result<(), Failure> {
    if h.is_finite() {
        Ok(())
    } else {
        Err(Failure::usage("--height must be a finite number"))
    }
}

pub fn execute(cli: &Cli, stdout: &mut dyn std::io::Write) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let out = out_dir(cli, &cfg);
    let mut say = |s: String| {
        let _ = writeln!(stdout, "{s}");
    };
    match &cli.command {
        Command::Plan { height } => {
            check_height(*height)?;
            let robot = &cfg.robot;
            let plan = solve_plan(*height, &robot.wjbd_params(), robot.knee_torque_limit, FeedforwardForm::SpringMimic)
                .map_err(plan_failure)?;
            let hold = robot.holding_torque(plan.prejump_knee_angle);
            let onset = plan.feedforward.command(0.0, plan.prejump_knee_angle, hold);
            say(format!("target height      {:.6} m", plan.target_height));
            say(format!("spring displacement {:.6} m", plan.spring_displacement));
            say(format!("pre-jump knee angle {:.6} rad", plan.prejump_knee_angle));
            say(format!("take-off velocity  {:.4} m/s", plan.takeoff_velocity));
            say(format!("predicted height   {:.6} m", plan.predicted_height));
            say(format!(
                "predicted torque step {:.2} N·m (from {:.2} to {:.2})",
                (onset - hold).abs(),
                -hold,
                -onset
            ));
            let path = out.join(format!("plan_{}.json", height_tag(*height)));
            write(&path, &json(&plan))?;
            say(format!("wrote {}", path.display()));
            Ok(())
        }
        Command::Simulate {
            height,
            method,
            params,
            seed: _,
        } => {
            check_height(*height)?;
            let robot = &cfg.robot;
            let rec = match method {
                Method::Wjbd => {
                    let plan = solve_plan(*height, &robot.wjbd_params(), robot.knee_torque_limit, FeedforwardForm::SpringMimic)
                        .map_err(plan_failure)?;
                    run_wjbd(&plan, robot, &cfg.sim, cfg.optimizer.retraction_fraction)
                }
                Method::Botp => {
                    let path = params
                        .as_ref()
                        .ok_or_else(|| Failure::usage("--method botp requires --params <library or result JSON>"))?;
                    let (p, angle) = load_botp_params(path, *height)?;
                    run_botp(&p, angle, robot, &cfg.sim, &cfg.optimizer)
                }
            }
            .map_err(|e| Failure::usage(e.to_string()))?;
            let tag = match method {
                Method::Wjbd => "wjbd",
                Method::Botp => "botp",
            };
            let path = out.join(format!("trial_{tag}_{}.csv", height_tag(*height)));
            let mut buf = Vec::new();
            write_trial_csv(&rec, &mut buf).map_err(|e| io_failure(&path, e))?;
            write_atomic(&path, &buf).map_err(|e| io_failure(&path, e))?;
            report_trial(&rec, *height, &cfg, &mut say);
            say(format!("wrote {}", path.display()));
            if rec.failed {
                return Err(Failure::failed(format!(
                    "take-off failed; achieved extension speed {:.4} m/s",
                    rec.max_extension_speed
                )));
            }
            Ok(())
        }
        Command::Optimize { height, budget, seed } => {
            check_height(*height)?;
            let mut opt = cfg.optimizer;
            if let Some(b) = budget {
                opt.budget = *b;
            }
            let res = optimize(*height, *seed, &cfg.robot, &cfg.sim, &opt).map_err(botp_failure)?;
            let tag = format!("{}_seed{}", height_tag(*height), seed);
            let rpath = out.join(format!("opt_{tag}.json"));
            let cpath = out.join(format!("convergence_{tag}.csv"));
            write(&rpath, &json(&res))?;
            write(&cpath, &convergence_csv(&res))?;
            let b = res.best();
            say(format!(
                "best tau_p={:.4} k={:.4} t0={:.5} ldot_d={:.5}",
                res.best_params.tau_p, res.best_params.k, res.best_params.t0, res.best_params.ldot_d
            ));
            say(format!(
                "h_w={:.6} m error={:.4}% energy={:.4} J objective={:.3e} iterations={} stop={}",
                b.height,
                100.0 * b.height_error.abs() / height,
                b.energy,
                res.best_objective,
                res.iterations,
                stop_name(&res)
            ));
            say(format!("wrote {} and {}", rpath.display(), cpath.display()));
            if res.all_infeasible {
                return Err(Failure::failed("no feasible trial was found"));
            }
            Ok(())
        }
        Command::Campaign { budget, seed, height } => {
            let mut cfg = cfg.clone();
            if let Some(b) = budget {
                cfg.optimizer.budget = *b;
            }
            if let Some(s) = seed {
                cfg.seeds = vec![*s];
            }
            if let Some(h) = height {
                check_height(*h)?;
                cfg.targets = vec![*h];
            }
            let outcome = run_campaign(&cfg).map_err(|e| Failure::usage(e.to_string()))?;
            for r in &outcome.runs {
                let tag = format!("{}_seed{}", height_tag(r.target_height), r.seed);
                write(&out.join(format!("opt_{tag}.json")), &json(r))?;
                write(&out.join(format!("convergence_{tag}.csv")), &convergence_csv(r))?;
            }
            let lib_path = out.join("library.json");
            let cmp_path = out.join("comparison.csv");
            write(&lib_path, &outcome.library.to_json())?;
            let table = comparison_csv(&outcome.library);
            write(&cmp_path, &table)?;
            for line in table.lines() {
                say(line.to_string());
            }
            say(format!("wrote {} and {}", lib_path.display(), cmp_path.display()));
            let failed: Vec<String> = outcome
                .library
                .entries
                .iter()
                .filter_map(|e| e.error.as_ref().map(|m| format!("{}: {m}", e.target_height)))
                .collect();
            if !failed.is_empty() {
                return Err(Failure::failed(format!("some targets failed: {}", failed.join("; "))));
            }
            Ok(())
        }
    }
}

fn stop_name(res: &OptResult) -> String {
    serde_json::to_value(res.stop_reason)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn report_trial(rec: &TrialRecord, target: f64, cfg: &CampaignConfig, say: &mut impl FnMut(String)) {
    let m = Metrics::of(rec, target, &cfg.sim);
    say(format!(
        "h_w={:.6} m error={:.4}% energy={:.4} J torque_step={:.4} N·m per control period (max per sample {:.4})",
        m.height,
        m.height_error_pct,
        m.energy_j,
        m.torque_step_nm,
        torque_step_metric(rec)
    ));
    for v in &rec.violations {
        say(format!("violation {:?}: {:.6}", v.id, v.magnitude));
    }
}

/// BOTP parameters for `height` from a parameter library or an optimization
/// result file.
fn load_botp_params(path: &Path, height: f64) -> Result<(wheeljump::botp::BotpParams, f64), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    if let Ok(lib) = ParameterLibrary::from_json(&text) {
        let entry = lib
            .entries
            .iter()
            .find(|e| (e.target_height - height).abs() < 1e-12)
            .ok_or_else(|| Failure::usage(format!("{} has no entry for height {height}", path.display())))?;
        let b = entry
            .botp
            .as_ref()
            .ok_or_else(|| Failure::failed(format!("library entry for {height} has no BOTP result")))?;
        return Ok((b.best_params, b.prejump_angle));
    }
    let res: OptResult = serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("{} is neither a library nor a result: {e}", path.display())))?;
    if (res.target_height - height).abs() > 1e-12 {
        return Err(Failure::usage(format!(
            "{} was optimized for {} m, not {height} m",
            path.display(),
            res.target_height
        )));
    }
    Ok((res.best_params, res.prejump_angle))
}

