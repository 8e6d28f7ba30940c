//! Gaussian-process surrogate with a squared-exponential ARD kernel and the
//! expected-improvement acquisition.

use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use thiserror::Error;

use super::SearchSpace;

const MAX_JITTER: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("no training data")]
    Empty,
    #[error("training input {0} has the wrong dimension or lies outside the unit cube")]
    BadInput(usize),
    #[error("non-finite training target at index {0}")]
    BadTarget(usize),
    #[error("invalid hyperparameters: {0}")]
    BadHyper(&'static str),
    #[error("covariance is not positive definite even with jitter {0:e}")]
    NotPositiveDefinite(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub length_scales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl Hyper {
    pub fn isotropic(dim: usize, length: f64) -> Self {
        Self {
            length_scales: vec![length; dim],
            signal_var: 1.0,
            noise_var: 1e-6,
        }
    }

    fn validate(&self, dim: usize) -> Result<(), GpError> {
        if self.length_scales.len() != dim {
            return Err(GpError::BadHyper("length-scale count differs from input dimension"));
        }
        if self.length_scales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(GpError::BadHyper("length scales must be positive"));
        }
        if !(self.signal_var.is_finite() && self.signal_var > 0.0) {
            return Err(GpError::BadHyper("signal variance must be positive"));
        }
        if !(self.noise_var.is_finite() && self.noise_var >= 0.0) {
            return Err(GpError::BadHyper("noise variance must be non-negative"));
        }
        Ok(())
    }
}

/// Exact GP regression on standardized targets.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    hyper: Hyper,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    ys: DVector<f64>,
    alpha: DVector<f64>,
}

fn kernel(a: &[f64], b: &[f64], h: &Hyper) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(&h.length_scales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    h.signal_var * (-0.5 * r2).exp()
}

fn standardize(y: &[f64]) -> (f64, f64, DVector<f64>) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    (mean, scale, DVector::from_iterator(y.len(), y.iter().map(|v| (v - mean) / scale)))
}

fn factor(x: &[Vec<f64>], h: &Hyper) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| kernel(&x[i], &x[j], h));
    let mut jitter = 0.0;
    loop {
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += h.noise_var + jitter;
        }
        if let Some(c) = m.cholesky() {
            return Ok((c, jitter));
        }
        jitter = if jitter == 0.0 { 1e-10 * h.signal_var } else { jitter * 10.0 };
        if jitter > MAX_JITTER * h.signal_var {
            return Err(GpError::NotPositiveDefinite(jitter / 10.0));
        }
    }
}

/// Fit a GP with fixed hyperparameters. Inputs must lie in the unit cube.
pub fn gp_fit(x: &[Vec<f64>], y: &[f64], hyper: &Hyper) -> Result<GaussianProcess, GpError> {
    let dim = x.first().ok_or(GpError::Empty)?.len();
    if y.len() != x.len() {
        return Err(GpError::BadTarget(y.len().min(x.len())));
    }
    for (i, p) in x.iter().enumerate() {
        if p.len() != dim || p.iter().any(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
            return Err(GpError::BadInput(i));
        }
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(GpError::BadTarget(i));
    }
    hyper.validate(dim)?;
    let (y_mean, y_scale, ys) = standardize(y);
    let (chol, jitter) = factor(x, hyper)?;
    let alpha = chol.solve(&ys);
    Ok(GaussianProcess {
        x: x.to_vec(),
        y_mean,
        y_scale,
        hyper: hyper.clone(),
        jitter,
        chol,
        ys,
        alpha,
    })
}

impl GaussianProcess {
    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Posterior mean and variance of the latent function in standardized units.
    pub fn predict_standardized(&self, x: &[f64]) -> (f64, f64) {
        let ks = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| kernel(xi, x, &self.hyper)));
        let mean = ks.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&ks).expect("factor is non-singular");
        let var = (self.hyper.signal_var - v.norm_squared()).max(0.0);
        (mean, var)
    }

    /// Posterior mean and variance in the units of the training targets.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = self.predict_standardized(x);
        (self.y_mean + self.y_scale * m, v * self.y_scale * self.y_scale)
    }

    /// Negative log marginal likelihood of the standardized targets.
    pub fn neg_log_likelihood(&self) -> f64 {
        let n = self.x.len() as f64;
        let logdet: f64 = self.chol.l().diagonal().iter().map(|d| d.ln()).sum();
        0.5 * self.ys.dot(&self.alpha) + logdet + 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Box on the log hyperparameters searched by [`fit_hyperparameters`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub length_scale: (f64, f64),
    pub signal_var: (f64, f64),
    pub noise_var: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self {
            length_scale: (0.02, 5.0),
            signal_var: (0.1, 10.0),
            noise_var: (1e-8, 0.5),
        }
    }
}

impl HyperBounds {
    fn log_box(&self, dim: usize) -> Vec<(f64, f64)> {
        let ln = |(a, b): (f64, f64)| (a.ln(), b.ln());
        let mut v = vec![ln(self.length_scale); dim];
        v.push(ln(self.signal_var));
        v.push(ln(self.noise_var));
        v
    }
}

fn unpack(theta: &[f64], dim: usize) -> Hyper {
    Hyper {
        length_scales: theta[..dim].iter().map(|t| t.exp()).collect(),
        signal_var: theta[dim].exp(),
        noise_var: theta[dim + 1].exp(),
    }
}

fn pack(h: &Hyper) -> Vec<f64> {
    let mut v: Vec<f64> = h.length_scales.iter().map(|l| l.ln()).collect();
    v.push(h.signal_var.ln());
    v.push(h.noise_var.ln());
    v
}

struct Likelihood<'a> {
    x: &'a [Vec<f64>],
    ys: DVector<f64>,
    bounds: Vec<(f64, f64)>,
}

impl Likelihood<'_> {
    fn eval(&self, theta: &[f64]) -> f64 {
        let dim = self.bounds.len() - 2;
        let mut outside = 0.0;
        let clamped: Vec<f64> = theta
            .iter()
            .zip(&self.bounds)
            .map(|(t, (lo, hi))| {
                outside += (lo - t).max(0.0).powi(2) + (t - hi).max(0.0).powi(2);
                t.clamp(*lo, *hi)
            })
            .collect();
        let h = unpack(&clamped, dim);
        let Ok((chol, _)) = factor(self.x, &h) else {
            return 1e10;
        };
        let alpha = chol.solve(&self.ys);
        let logdet: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
        0.5 * self.ys.dot(&alpha) + logdet + 1e3 * outside
    }
}

/// Maximize the marginal likelihood by multi-start Nelder-Mead inside
/// `bounds`, starting from `initial` and `restarts - 1` random points.
pub fn fit_hyperparameters<R: Rng>(
    x: &[Vec<f64>],
    y: &[f64],
    initial: &Hyper,
    bounds: &HyperBounds,
    restarts: usize,
    max_iters: u64,
    rng: &mut R,
) -> Result<Hyper, GpError> {
    let dim = x.first().ok_or(GpError::Empty)?.len();
    initial.validate(dim)?;
    let (_, _, ys) = standardize(y);
    let lik = Likelihood {
        x,
        ys,
        bounds: bounds.log_box(dim),
    };
    let mut starts = vec![pack(initial)
        .iter()
        .zip(&lik.bounds)
        .map(|(t, (lo, hi))| t.clamp(*lo, *hi))
        .collect::<Vec<_>>()];
    for _ in 1..restarts.max(1) {
        starts.push(lik.bounds.iter().map(|(lo, hi)| rng.gen_range(*lo..*hi)).collect());
    }
    let mut best = (lik.eval(&starts[0]), starts[0].clone());
    for s in starts {
        let mut simplex = vec![s.clone()];
        for i in 0..s.len() {
            let mut p = s.clone();
            let (lo, hi) = lik.bounds[i];
            let step = 0.25 * (hi - lo);
            p[i] = if p[i] + step <= hi { p[i] + step } else { p[i] - step };
            simplex.push(p);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-6)
            .expect("tolerance is non-negative");
        let run = Executor::new(&lik, solver)
            .configure(|st| st.max_iters(max_iters))
            .run();
        if let Ok(res) = run {
            let state = res.state();
            if let Some(p) = state.get_best_param() {
                if state.get_best_cost() < best.0 {
                    best = (state.get_best_cost(), p.clone());
                }
            }
        }
    }
    let clamped: Vec<f64> = best
        .1
        .iter()
        .zip(&lik.bounds)
        .map(|(t, (lo, hi))| t.clamp(*lo, *hi))
        .collect();
    Ok(unpack(&clamped, dim))
}

impl CostFunction for &Likelihood<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Vec<f64>) -> Result<f64, ArgminError> {
        Ok(self.eval(theta))
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Expected improvement below `best_y` for a posterior mean `m` and standard
/// deviation `s`.
pub fn ei_closed_form(m: f64, s: f64, best_y: f64) -> f64 {
    if !(s > 0.0) {
        return (best_y - m).max(0.0);
    }
    let n = std_normal();
    let u = (best_y - m) / s;
    ((best_y - m) * n.cdf(u) + s * n.pdf(u)).max(0.0)
}

/// Expected improvement at unit-cube point `x` in the target units.
pub fn expected_improvement(gp: &GaussianProcess, x: &[f64], best_y: f64) -> f64 {
    let (m, v) = gp.predict(x);
    ei_closed_form(m, v.sqrt(), best_y)
}

/// Maximize EI over the unit cube: `probes` uniform random points, then a
/// coordinate search from the best few. Returns the point in `space` units.
pub fn suggest_next<R: Rng>(gp: &GaussianProcess, space: &SearchSpace, best_y: f64, probes: usize, rng: &mut R) -> Vec<f64> {
    space.from_unit(&suggest_unit(gp, space.dim(), best_y, probes, None, rng))
}

/// As [`suggest_next`] in unit coordinates; `incumbent` adds the best observed
/// point as an extra start of the local search.
pub(crate) fn suggest_unit<R: Rng>(
    gp: &GaussianProcess,
    dim: usize,
    best_y: f64,
    probes: usize,
    incumbent: Option<&[f64]>,
    rng: &mut R,
) -> Vec<f64> {
    let mut cands: Vec<(f64, Vec<f64>)> = (0..probes.max(1))
        .map(|_| {
            let p: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
            (expected_improvement(gp, &p, best_y), p)
        })
        .collect();
    cands.sort_by(|a, b| b.0.total_cmp(&a.0));
    cands.truncate(5);
    if let Some(p) = incumbent {
        cands.push((expected_improvement(gp, p, best_y), p.to_vec()));
    }
    let mut best = cands[0].clone();
    for (mut ei, mut p) in cands {
        let mut step = 0.05;
        while step > 1e-4 {
            let mut moved = false;
            for d in 0..dim {
                for dir in [-1.0, 1.0] {
                    let mut q = p.clone();
                    q[d] = (q[d] + dir * step).clamp(0.0, 1.0);
                    let e = expected_improvement(gp, &q, best_y);
                    if e > ei {
                        ei = e;
                        p = q;
                        moved = true;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        if ei > best.0 {
            best = (ei, p);
        }
    }
    best.1
}
