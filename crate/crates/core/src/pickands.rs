//! Monte Carlo estimation of Pickands-type constants.
//!
//! For `Z(t) = √2·B_{α/2}(t) − t^α` the constants are limits of
//!
//! ```text
//! H_α(λ)        = E exp(max_{t ∈ [0,λ]} Z(t))
//! H_{a,α}(λ)    = E exp(max_{ka ∈ [0,λ]} Z(ka))
//! H^{x,y}_{a,α}(λ) = ∫ e^s P(max_{ka} Z > s + x, max_t Z > s + y) ds
//!                  = E exp(min(A − x, B − y))
//! ```
//!
//! divided by `λ`, where `A` and `B` are the grid and lattice maxima of one path.
//! The last identity is the closed form of the `s`-integral.
//!
//! The plain average of `exp(max Z)` has heavy tails. The default estimator
//! instead tilts by `e^{Z(t_J)}` at a uniformly chosen lattice point `t_J`.
//! Because `Z` has stationary increments, the tilted process is
//! `√2(B(t) − B(t_J)) − |t − t_J|^α` up to an additive constant, and
//!
//! ```text
//! E F(Z) = N · E[F(Z̃)·e^{max Z̃}/Σ_k e^{Z̃_k}] / e^{max Z̃}   for F = exp(max …)
//! ```
//!
//! gives an unbiased estimate with bounded weights. With several axes the
//! components are independent and the sums factorize, so per-axis maxima add
//! and per-axis weights multiply.
//!
//! Every estimate is computed from stored per-path summaries `(A, B, log w)`,
//! so the continuous, discrete and bivariate estimators share their paths.

use crate::error::{arg_err, config_err, Error, Result};
use crate::fieldsim::FbmSampler;
use crate::grids::point_count;
use crate::limitlaws::BivariateConstant;
use crate::rng::{stream, StreamTag};
use crate::stats::mean_and_stderr;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Tilted estimator with a uniformly random shift.
    #[default]
    Shift,
    /// Plain average of `exp(max Z)` over paths started at the origin.
    Naive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PickandsConfig {
    pub alphas: Vec<f64>,
    pub lambda_vec: Vec<f64>,
    pub fine_step: f64,
    /// Grid spacing per axis; all zeros means no grid.
    #[serde(default)]
    pub grid_a: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub estimator: Estimator,
}

/// Axes are limited so that substream ids `8·path + axis` stay distinct.
const MAX_AXES: usize = 8;
const MULTIPLE_TOL: f64 = 1e-9;

impl PickandsConfig {
    /// λ = 128 for α ≥ 1 and 32 otherwise; fine step `0.01·min(1, a)`.
    pub fn with_defaults(alpha: f64, a: f64, reps: usize, seed: u64) -> Self {
        let lambda = if alpha >= 1.0 { 128.0 } else { 32.0 };
        let fine_step = if a > 0.0 { 0.01 * a.min(1.0) } else { 0.01 };
        Self {
            alphas: vec![alpha],
            lambda_vec: vec![lambda],
            fine_step,
            grid_a: vec![a],
            reps,
            seed,
            estimator: Estimator::Shift,
        }
    }

    pub fn dim(&self) -> usize {
        self.alphas.len()
    }

    pub fn has_grid(&self) -> bool {
        self.grid_a.iter().any(|a| *a > 0.0)
    }

    pub fn volume(&self) -> f64 {
        self.lambda_vec.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.alphas.len();
        if d == 0 || d > MAX_AXES {
            return arg_err(format!("between 1 and {MAX_AXES} axes are supported"));
        }
        if self.reps == 0 {
            return arg_err("reps must be positive");
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a <= 2.0)) {
            return arg_err(format!("exponent {a} outside (0, 2]"));
        }
        if self.lambda_vec.len() != d || self.lambda_vec.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return arg_err("one positive λ per axis is required");
        }
        if !(self.fine_step > 0.0 && self.fine_step.is_finite()) {
            return arg_err("fine step must be positive");
        }
        if !self.grid_a.is_empty() && self.grid_a.len() != d {
            return arg_err("one grid spacing per axis is required");
        }
        if self.grid_a.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return arg_err("grid spacings must be nonnegative");
        }
        if self.has_grid() {
            if self.grid_a.contains(&0.0) {
                return config_err("grid spacing must be positive on every axis or zero on all");
            }
            for &a in &self.grid_a {
                let ratio = a / self.fine_step;
                let collapsed = (ratio - 1.0).abs() <= MULTIPLE_TOL;
                if !collapsed && ratio < 4.0 * (1.0 - MULTIPLE_TOL) {
                    return config_err(format!("fine step {} exceeds a/4 for a = {a}", self.fine_step));
                }
                if (ratio - ratio.round()).abs() > MULTIPLE_TOL * ratio.max(1.0) {
                    return config_err(format!("grid spacing {a} is not a multiple of the fine step {}", self.fine_step));
                }
            }
        } else {
            let min_lambda = self.lambda_vec.iter().cloned().fold(f64::INFINITY, f64::min);
            if self.fine_step > min_lambda / 64.0 * (1.0 + MULTIPLE_TOL) {
                return arg_err(format!("fine step {} exceeds λ/64", self.fine_step));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateKind {
    Continuous,
    Discrete,
    BivariateXY,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PickandsEstimate {
    pub kind: EstimateKind,
    /// Per unit volume, i.e. divided by Πλ_i.
    pub value: f64,
    pub stderr: f64,
    pub xy_args: Option<(f64, f64)>,
    pub config: PickandsConfig,
}

/// Summary of one simulated path (all axes combined).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PathSummary {
    /// Maximum of `Z̃` over each requested grid.
    pub grid_max: [f64; MAX_GRIDS],
    /// Maximum of `Z̃` over the fine lattice.
    pub cont_max: f64,
    /// Log of the estimator weight; zero for the plain estimator.
    pub log_weight: f64,
}

/// Grids evaluated on a single path set.
pub const MAX_GRIDS: usize = 8;

/// Summaries of `reps` paths, possibly for several nested grids at once.
#[derive(Debug, Clone)]
pub struct PathSet {
    pub config: PickandsConfig,
    /// Grid spacing vectors, one per entry of `PathSummary::grid_max`.
    pub grids: Vec<Vec<f64>>,
    pub paths: Vec<PathSummary>,
}

struct AxisPlan {
    points: usize,
    step: f64,
    /// `(k h)^α` for `k = 0..points`.
    drift: Vec<f64>,
    sampler: Option<FbmSampler>,
    /// Per requested grid, the stride in lattice steps.
    strides: Vec<usize>,
}

impl AxisPlan {
    fn new(alpha: f64, lambda: f64, step: f64, strides: Vec<usize>) -> Result<Self> {
        let points = point_count(lambda, step);
        if points < 2 {
            return arg_err("λ must span at least one fine step");
        }
        let drift = (0..points).map(|k| (k as f64 * step).powf(alpha)).collect();
        let sampler = if alpha < 2.0 { Some(FbmSampler::new(alpha / 2.0, step, points - 1)?) } else { None };
        Ok(Self { points, step, drift, sampler, strides })
    }

    fn paths(&self, seed: u64, pair: u64, axis: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = stream(seed, pair * MAX_AXES as u64 + axis as u64, StreamTag::Path);
        match &self.sampler {
            Some(s) => s.sample_pair(&mut rng),
            None => {
                // B_1(t) = t·Z
                let line = |z: f64| (0..self.points).map(|k| k as f64 * self.step * z).collect::<Vec<f64>>();
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                (line(z1), line(z2))
            }
        }
    }

    /// Returns (grid maxima, lattice maximum, log weight) for one axis.
    fn summarize(&self, path: &[f64], shift: Option<usize>, out_grid: &mut [f64]) -> (f64, f64) {
        let root2 = std::f64::consts::SQRT_2;
        let z: Vec<f64> = match shift {
            Some(j) => {
                let bj = path[j];
                path.iter().enumerate().map(|(k, b)| root2 * (b - bj) - self.drift[k.abs_diff(j)]).collect()
            }
            None => path.iter().zip(&self.drift).map(|(b, d)| root2 * b - d).collect(),
        };
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (slot, &stride) in out_grid.iter_mut().zip(&self.strides) {
            *slot = z.iter().step_by(stride).cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        let log_weight = match shift {
            Some(_) => {
                let s: f64 = z.iter().map(|v| (v - zmax).exp()).sum();
                (self.points as f64).ln() - zmax - s.ln()
            }
            None => 0.0,
        };
        (zmax, log_weight)
    }
}

fn strides_for(cfg: &PickandsConfig, grids: &[Vec<f64>], axis: usize) -> Vec<usize> {
    grids.iter().map(|g| ((g[axis] / cfg.fine_step).round() as usize).max(1)).collect()
}

/// Simulates the path summaries for `cfg` with the lattice maximum and the
/// maxima over every grid in `grids` (each a per-axis spacing vector).
pub fn simulate_paths(cfg: &PickandsConfig, grids: &[Vec<f64>]) -> Result<PathSet> {
    cfg.validate()?;
    if grids.len() > MAX_GRIDS {
        return arg_err(format!("at most {MAX_GRIDS} grids per path set"));
    }
    for g in grids {
        let probe = PickandsConfig { grid_a: g.clone(), ..cfg.clone() };
        probe.validate()?;
        if !probe.has_grid() {
            return arg_err("grid spacings must be positive");
        }
    }
    let d = cfg.dim();
    let plans: Vec<AxisPlan> = (0..d)
        .map(|i| AxisPlan::new(cfg.alphas[i], cfg.lambda_vec[i], cfg.fine_step, strides_for(cfg, grids, i)))
        .collect::<Result<_>>()?;
    let pairs = cfg.reps.div_ceil(2);
    let chunks: Vec<[PathSummary; 2]> = (0..pairs as u64)
        .into_par_iter()
        .map(|pair| {
            let mut out = [PathSummary { grid_max: [0.0; MAX_GRIDS], cont_max: 0.0, log_weight: 0.0 }; 2];
            for (axis, plan) in plans.iter().enumerate() {
                let (p0, p1) = plan.paths(cfg.seed, pair, axis);
                for (half, path) in [p0, p1].iter().enumerate() {
                    let rep = 2 * pair + half as u64;
                    let shift = match cfg.estimator {
                        Estimator::Shift => {
                            let mut r = stream(cfg.seed, rep * MAX_AXES as u64 + axis as u64, StreamTag::Shift);
                            Some(r.random_range(0..plan.points))
                        }
                        Estimator::Naive => None,
                    };
                    let mut g = [0.0; MAX_GRIDS];
                    let (zmax, lw) = plan.summarize(path, shift, &mut g[..grids.len()]);
                    let s = &mut out[half];
                    s.cont_max += zmax;
                    s.log_weight += lw;
                    for k in 0..grids.len() {
                        s.grid_max[k] += g[k];
                    }
                }
            }
            out
        })
        .collect();
    let mut paths: Vec<PathSummary> = chunks.into_iter().flatten().collect();
    paths.truncate(cfg.reps);
    Ok(PathSet { config: cfg.clone(), grids: grids.to_vec(), paths })
}

impl PathSet {
    fn estimate(&self, kind: EstimateKind, xy: Option<(f64, f64)>, term: impl Fn(&PathSummary) -> f64 + Sync) -> PickandsEstimate {
        let vol = self.config.volume();
        let vals: Vec<f64> = self.paths.iter().map(|p| term(p) / vol).collect();
        let (value, stderr) = mean_and_stderr(&vals);
        PickandsEstimate { kind, value, stderr, xy_args: xy, config: self.config.clone() }
    }

    /// Per-path terms of the continuous estimator, divided by Πλ.
    pub fn continuous_terms(&self) -> Vec<f64> {
        let vol = self.config.volume();
        self.paths.iter().map(|p| (p.cont_max + p.log_weight).exp() / vol).collect()
    }

    /// Per-path terms of the discrete estimator for grid `g`.
    pub fn discrete_terms(&self, g: usize) -> Vec<f64> {
        let vol = self.config.volume();
        self.paths.iter().map(|p| (p.grid_max[g] + p.log_weight).exp() / vol).collect()
    }

    pub fn continuous(&self) -> PickandsEstimate {
        self.estimate(EstimateKind::Continuous, None, |p| (p.cont_max + p.log_weight).exp())
    }

    pub fn discrete(&self, g: usize) -> PickandsEstimate {
        let mut e = self.estimate(EstimateKind::Discrete, None, |p| (p.grid_max[g] + p.log_weight).exp());
        e.config.grid_a = self.grids[g].clone();
        e
    }

    /// `H^{x,y}` with `x` applied to the grid maximum and `y` to the lattice
    /// maximum.
    pub fn bivariate(&self, g: usize, x: f64, y: f64) -> PickandsEstimate {
        let mut e = self.estimate(EstimateKind::BivariateXY, Some((x, y)), |p| bivariate_term(p, g, x, y));
        e.config.grid_a = self.grids[g].clone();
        e
    }
}

fn bivariate_term(p: &PathSummary, g: usize, x: f64, y: f64) -> f64 {
    ((p.grid_max[g] - x).min(p.cont_max - y) + p.log_weight).exp()
}

fn slice_1d(cfg: &PickandsConfig) -> Result<()> {
    if cfg.dim() != 1 {
        return arg_err("this estimator takes a single exponent and window");
    }
    Ok(())
}

/// Estimate of `H_α` from the fine lattice.
pub fn estimate_h_alpha(cfg: &PickandsConfig) -> Result<PickandsEstimate> {
    slice_1d(cfg)?;
    let plain = PickandsConfig { grid_a: vec![], ..cfg.clone() };
    let set = simulate_paths(if cfg.has_grid() { cfg } else { &plain }, &[])?;
    Ok(set.continuous())
}

/// Estimate of `H_{a,α}` over the grid `{ka}`.
pub fn estimate_h_a_alpha(cfg: &PickandsConfig) -> Result<PickandsEstimate> {
    if !cfg.has_grid() {
        return config_err("the discrete constant needs a positive grid spacing");
    }
    Ok(simulate_paths(cfg, std::slice::from_ref(&cfg.grid_a))?.discrete(0))
}

/// Estimate of `H^{x,y}_{a,α}`.
pub fn estimate_h_bivariate(cfg: &PickandsConfig, x: f64, y: f64) -> Result<PickandsEstimate> {
    if !cfg.has_grid() {
        return config_err("the bivariate constant needs a positive grid spacing");
    }
    Ok(simulate_paths(cfg, std::slice::from_ref(&cfg.grid_a))?.bivariate(0, x, y))
}

/// Rounding grid of the bivariate cache.
pub const BIVARIATE_KEY_STEP: f64 = 0.05;

/// A simulated path set serving `H^{x,y}` on demand, cached by arguments
/// rounded to [`BIVARIATE_KEY_STEP`]. The value for a key depends only on the
/// key, so concurrent fills are deterministic.
pub struct BivariateTable {
    set: Arc<PathSet>,
    grid: usize,
    cache: Mutex<HashMap<(i64, i64), f64>>,
}

impl BivariateTable {
    pub fn new(set: Arc<PathSet>, grid: usize) -> Result<Self> {
        if grid >= set.grids.len() {
            return arg_err("grid index out of range");
        }
        Ok(Self { set, grid, cache: Mutex::new(HashMap::new()) })
    }

    pub fn path_set(&self) -> &PathSet {
        &self.set
    }

    fn direct(&self, x: f64, y: f64) -> f64 {
        let vol = self.set.config.volume();
        let vals: Vec<f64> = self.set.paths.iter().map(|p| bivariate_term(p, self.grid, x, y) / vol).collect();
        mean_and_stderr(&vals).0
    }
}

impl BivariateConstant for BivariateTable {
    fn value(&self, grid_arg: f64, cont_arg: f64) -> f64 {
        if grid_arg == f64::INFINITY || cont_arg == f64::INFINITY {
            return 0.0;
        }
        if !(grid_arg.is_finite() && cont_arg.is_finite()) {
            return self.direct(grid_arg, cont_arg);
        }
        let key = ((grid_arg / BIVARIATE_KEY_STEP).round() as i64, (cont_arg / BIVARIATE_KEY_STEP).round() as i64);
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return *v;
        }
        let v = self.direct(key.0 as f64 * BIVARIATE_KEY_STEP, key.1 as f64 * BIVARIATE_KEY_STEP);
        self.cache.lock().unwrap().insert(key, v);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "camelCase")]
pub enum ExtrapolationModel {
    /// `c0 + c1/λ` over a λ series.
    InverseLambda,
    /// `c0 + c1·step^{α/2}` over a step series.
    StepPower { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Extrapolation {
    pub c0: f64,
    pub c1: f64,
    /// Standard error of the intercept from the fit residuals.
    pub band: f64,
    pub model: ExtrapolationModel,
}

/// Least-squares fit of `value = c0 + c1·g(s)` and its intercept.
pub fn extrapolate(series: &[(f64, f64)], model: ExtrapolationModel) -> Result<Extrapolation> {
    if series.len() < 3 {
        return Err(Error::Fitting(format!("extrapolation needs at least 3 points, got {}", series.len())));
    }
    let g = |s: f64| match model {
        ExtrapolationModel::InverseLambda => 1.0 / s,
        ExtrapolationModel::StepPower { alpha } => s.powf(alpha / 2.0),
    };
    let xs: Vec<f64> = series.iter().map(|(s, _)| g(*s)).collect();
    let ys: Vec<f64> = series.iter().map(|(_, v)| *v).collect();
    if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
        return Err(Error::Fitting("non-finite point in series".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-14 * xs.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE) {
        return Err(Error::Fitting("degenerate design: all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let c1 = sxy / sxx;
    let c0 = my - c1 * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - c0 - c1 * x).powi(2)).sum();
    let sigma2 = rss / (n - 2.0);
    let sum_x2: f64 = xs.iter().map(|x| x * x).sum();
    let band = (sigma2 * sum_x2 / (n * sxx)).sqrt();
    Ok(Extrapolation { c0, c1, band, model })
}
