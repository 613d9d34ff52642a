//! Replicated Monte Carlo experiments compared against the limit laws.
//!
//! One replication simulates the field on a fine lattice (the surrogate for
//! the continuous domain), reads off the lattice and grid extremes, normalizes
//! them and records whether each evaluation tuple's event
//!
//! ```text
//! a(M − b_T) ≤ x2, a(M^δ − b*) ≤ y2, a(m + b_T) ≤ x1, a(m^δ + b*) ≤ y1
//! ```
//!
//! occurred. Replications are generated in pairs from one circulant transform
//! where possible and are indexed by seed, so results do not depend on the
//! number of worker threads.

use crate::covmodels::{CovarianceModel, FieldModel, ModelConfig};
use crate::error::{arg_err, config_err, Error, Result};
use crate::fieldsim::{apply_mixture, mixture_common, FieldSample, FieldSampler, LatticeSpec, SampleMethod};
use crate::grids::{grid_indices, point_count, DomainSpec, GridSpec, Regime};
use crate::limitlaws::{argument_grid, band_probability, evaluate, LimitParams, MinConvention, Theorem};
use crate::mvn::{exceedance_probability, MAX_DIM};
use crate::norming::{compute_norming, normalize_extremes, NormalizedExtremes, NormingConstants, PickandsValues};
use crate::pickands::{simulate_paths, BivariateTable, Estimator, PickandsConfig};
use crate::rng::{replication_seed, stream, StreamTag};
use crate::special::norm_sf;
use crate::stats::{correlation, kendall_tau, ks_distance, quantile};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

pub const MIN_REPS: usize = 100;
/// Largest admissible `h·u^{2/α}` for the fine lattice.
pub const LATTICE_RULE_MAX: f64 = 0.1;

/// How the fine lattice step is chosen: `h_i = factor·u^{−2/α_i}`, reduced
/// so that the grid spacing is a whole number of lattice steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LatticeRule {
    #[serde(default = "default_factor")]
    pub factor: f64,
    #[serde(default)]
    pub method: SampleMethod,
    /// Accept factors above [`LATTICE_RULE_MAX`] (needed for large
    /// two-dimensional domains). Recorded in the run metadata.
    #[serde(default)]
    pub relaxed: bool,
}

fn default_factor() -> f64 {
    0.05
}

impl Default for LatticeRule {
    fn default() -> Self {
        Self { factor: default_factor(), method: SampleMethod::Auto, relaxed: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    /// H_1 = 1, H_2 = 1/√π.
    Literature,
    /// Values supplied in the configuration.
    Given,
    /// Estimated in this run.
    Estimated,
}

/// Monte Carlo settings for constants estimated in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EstimationSettings {
    #[serde(default = "default_est_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default = "default_est_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_est_lambda() -> f64 {
    64.0
}

fn default_est_reps() -> usize {
    10_000
}

impl Default for EstimationSettings {
    fn default() -> Self {
        Self { lambda: default_est_lambda(), step: None, reps: default_est_reps(), seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PickandsSource {
    pub source: SourceKind,
    #[serde(default)]
    pub h_alpha: Option<Vec<f64>>,
    #[serde(default)]
    pub h_a_alpha: Option<Vec<f64>>,
    /// Used for estimated constants and, on Pickands grids, for the
    /// bivariate constant.
    #[serde(default)]
    pub estimation: EstimationSettings,
}

impl Default for PickandsSource {
    fn default() -> Self {
        Self { source: SourceKind::Literature, h_alpha: None, h_a_alpha: None, estimation: EstimationSettings::default() }
    }
}

/// Additive shifts of the location constants; a negative control only.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NormingAdjust {
    #[serde(default, rename = "bT")]
    pub b_t: f64,
    #[serde(default)]
    pub b_star: f64,
}

/// Pass/fail thresholds checked by the `verify` command.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AcceptanceThresholds {
    pub sup_defect: Option<f64>,
    /// Applied to the continuous maximum and minimum.
    pub marginal_ks: Option<f64>,
    pub max_min_corr_abs: Option<f64>,
    pub max_min_raw_corr_min: Option<f64>,
    pub grid_gap_q95: Option<f64>,
    pub swap_defect: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub domain: DomainSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub lattice: LatticeRule,
    pub reps: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub eval_points: Vec<[f64; 4]>,
    /// Shorthand adding every tuple of these values to the evaluation points.
    #[serde(default)]
    pub eval_grid: Vec<f64>,
    #[serde(default)]
    pub pickands: PickandsSource,
    #[serde(default)]
    pub min_convention: MinConvention,
    #[serde(default)]
    pub norming_adjust: NormingAdjust,
    #[serde(default)]
    pub acceptance: AcceptanceThresholds,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn points(&self) -> Vec<[f64; 4]> {
        let mut pts = self.eval_points.clone();
        pts.extend(argument_grid(&self.eval_grid));
        pts
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if self.model.dim != self.domain.dim() {
            return config_err("model and domain dimensions differ");
        }
        if self.domain.dim() > 2 {
            return config_err("experiments are limited to d ≤ 2");
        }
        self.grid.validate(self.domain.dim())?;
        if self.reps < MIN_REPS {
            return config_err(format!("reps must be at least {MIN_REPS}"));
        }
        if self.points().is_empty() {
            return config_err("no evaluation points");
        }
        if self.points().iter().flatten().any(|v| v.is_nan()) {
            return config_err("evaluation points must not be NaN");
        }
        let f = self.lattice.factor;
        if !(f > 0.0 && f.is_finite()) {
            return config_err("lattice factor must be positive");
        }
        if f > LATTICE_RULE_MAX && !self.lattice.relaxed {
            return config_err(format!("lattice factor {f} exceeds {LATTICE_RULE_MAX}; set \"relaxed\": true to allow it"));
        }
        Ok(())
    }
}

/// One replication's extremes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExtremesRecord {
    pub rep: u64,
    pub seed: u64,
    pub m_cont: f64,
    pub m_grid: f64,
    pub min_cont: f64,
    pub min_grid: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MarginalKs {
    pub max_cont: f64,
    pub max_grid: f64,
    pub min_cont: f64,
    pub min_grid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PointComparison {
    pub args: [f64; 4],
    pub empirical: f64,
    pub theoretical: f64,
    /// The same limit under the published minima convention.
    pub theoretical_published: f64,
    pub empirical_band: f64,
    pub theoretical_band: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ComparisonReport {
    pub theorem: Theorem,
    pub r: f64,
    pub reps: usize,
    pub min_convention: MinConvention,
    pub points: Vec<PointComparison>,
    pub sup_defect: f64,
    pub sup_defect_published: f64,
    pub per_marginal_ks: MarginalKs,
    /// corr(normalized max, −normalized min)
    pub max_min_corr: f64,
    /// corr(normalized max, normalized min)
    pub max_min_raw_corr: f64,
    /// 95th percentile of a_T·(M − M^δ).
    pub grid_gap_q95: f64,
    /// Largest change of the empirical CDF when x2 and y2 are swapped.
    pub swap_defect: f64,
    pub clamp_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunMeta {
    pub norming: NormingConstants,
    pub norming_adjust: NormingAdjust,
    pub pickands: PickandsValues,
    pub spacings: Vec<f64>,
    pub lattice_step: Vec<f64>,
    pub lattice_counts: Vec<usize>,
    pub grid_stride: Vec<usize>,
    pub lattice_factor: f64,
    pub lattice_rule_satisfied: bool,
    pub method: SampleMethod,
    pub rho: f64,
    pub pairing: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub records: Vec<ExtremesRecord>,
    pub normalized: Vec<NormalizedExtremes>,
    pub report: ComparisonReport,
    pub meta: RunMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl AcceptanceThresholds {
    pub fn check(&self, rep: &ComparisonReport) -> Vec<CheckResult> {
        let mut out = Vec::new();
        let mut below = |name: &'static str, value: f64, t: Option<f64>| {
            if let Some(threshold) = t {
                out.push(CheckResult { name, value, threshold, passed: value <= threshold });
            }
        };
        below("supDefect", rep.sup_defect, self.sup_defect);
        below("ksMaxCont", rep.per_marginal_ks.max_cont, self.marginal_ks);
        below("ksMinCont", rep.per_marginal_ks.min_cont, self.marginal_ks);
        below("maxMinCorrAbs", rep.max_min_corr.abs(), self.max_min_corr_abs);
        below("gridGapQ95", rep.grid_gap_q95, self.grid_gap_q95);
        below("swapDefect", rep.swap_defect, self.swap_defect);
        if let Some(threshold) = self.max_min_raw_corr_min {
            out.push(CheckResult {
                name: "maxMinRawCorr",
                value: rep.max_min_raw_corr,
                threshold,
                passed: rep.max_min_raw_corr >= threshold,
            });
        }
        out
    }
}

struct Prepared {
    model: FieldModel,
    sampler: FieldSampler,
    rho: f64,
    grid_index: Vec<Vec<usize>>,
    norming: NormingConstants,
    params: LimitParams,
    meta: RunMeta,
}

fn theorem_for(regime: Regime) -> Theorem {
    match regime {
        Regime::Sparse => Theorem::SparseT1,
        Regime::Pickands => Theorem::PickandsT2,
        Regime::Dense => Theorem::DenseT3,
    }
}

/// Resolves the Pickands constants and, on Pickands grids, the bivariate
/// table.
fn resolve_pickands(cfg: &ExperimentConfig, alphas: &[f64]) -> Result<(PickandsValues, Option<Arc<BivariateTable>>)> {
    let src = &cfg.pickands;
    let est = &src.estimation;
    let seed = est.seed.unwrap_or_else(|| stream(cfg.master_seed, 0, StreamTag::Pilot).next_u64());
    let grid_a = match &cfg.grid {
        GridSpec::Pickands { a } => Some(a.clone()),
        _ => None,
    };
    let step_for = |a: Option<f64>| est.step.unwrap_or(match a {
        Some(a) => 0.01 * a.min(1.0),
        None => 0.01,
    });
    let one_axis = |i: usize, a: Option<f64>| -> Result<(f64, Option<f64>)> {
        let pc = PickandsConfig {
            alphas: vec![alphas[i]],
            lambda_vec: vec![est.lambda],
            fine_step: step_for(a),
            grid_a: a.map(|a| vec![a]).unwrap_or_default(),
            reps: est.reps,
            seed: seed.wrapping_add(i as u64),
            estimator: Estimator::Shift,
        };
        let grids: Vec<Vec<f64>> = a.map(|a| vec![vec![a]]).unwrap_or_default();
        let set = simulate_paths(&pc, &grids)?;
        Ok((set.continuous().value, a.map(|_| set.discrete(0).value)))
    };
    let mut values = match src.source {
        SourceKind::Literature => PickandsValues::literature(alphas)?,
        SourceKind::Given => {
            let h = src.h_alpha.clone().ok_or_else(|| Error::Config("given Pickands values need hAlpha".into()))?;
            PickandsValues { h_alpha: h, h_a_alpha: src.h_a_alpha.clone(), provenance: "given".into() }
        }
        SourceKind::Estimated => {
            let mut h = Vec::new();
            let mut hg = Vec::new();
            for i in 0..alphas.len() {
                let (c, g) = one_axis(i, grid_a.as_ref().map(|a| a[i]))?;
                h.push(c);
                if let Some(g) = g {
                    hg.push(g);
                }
            }
            PickandsValues {
                h_alpha: h,
                h_a_alpha: grid_a.as_ref().map(|_| hg),
                provenance: format!("estimated: lambda {} reps {} seed {seed}", est.lambda, est.reps),
            }
        }
    };
    let table = match &grid_a {
        None => None,
        Some(a) => {
            let step = est.step.unwrap_or(0.01 * a.iter().cloned().fold(1.0, f64::min));
            let pc = PickandsConfig {
                alphas: alphas.to_vec(),
                lambda_vec: vec![est.lambda; alphas.len()],
                fine_step: step,
                grid_a: a.clone(),
                reps: est.reps,
                seed: seed.wrapping_add(1000),
                estimator: Estimator::Shift,
            };
            let set = simulate_paths(&pc, std::slice::from_ref(a))?;
            if values.h_a_alpha.is_none() {
                let mut hg = Vec::new();
                for i in 0..alphas.len() {
                    hg.push(one_axis(i, Some(a[i]))?.1.unwrap());
                }
                values.h_a_alpha = Some(hg);
                values.provenance.push_str("; grid constants estimated");
            }
            Some(Arc::new(BivariateTable::new(Arc::new(set), 0)?))
        }
    };
    Ok((values, table))
}

/// Simulation lattice derived from the domain, the grid and the lattice rule.
#[derive(Debug, Clone)]
pub struct LatticePlan {
    pub lattice: LatticeSpec,
    /// Grid spacing per axis.
    pub spacings: Vec<f64>,
    /// Lattice steps per grid spacing, per axis.
    pub stride: Vec<usize>,
}

/// Lattice step `h = δ/ceil(δ/(factor·u^{−2/α}))` on each axis, so grid
/// points fall on the lattice.
pub fn plan_lattice(cfg: &ExperimentConfig) -> Result<LatticePlan> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    let alphas = model.alphas();
    let domain = &cfg.domain;
    let spacings = cfg.grid.spacings(domain, alphas)?;
    let u = domain.level_scale();
    let mut step = Vec::new();
    let mut stride = Vec::new();
    for (i, &al) in alphas.iter().enumerate() {
        let h0 = cfg.lattice.factor * u.powf(-2.0 / al);
        let k = (spacings[i] / h0 * (1.0 - 1e-12)).ceil().max(1.0);
        step.push(spacings[i] / k);
        stride.push(k as usize);
    }
    let lattice = LatticeSpec::new(domain.extent().to_vec(), step)?;
    Ok(LatticePlan { lattice, spacings, stride })
}

/// Norming constants for a configuration, with the Pickands values used.
pub fn resolve_norming(cfg: &ExperimentConfig) -> Result<(NormingConstants, PickandsValues)> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    let (pickands, _) = resolve_pickands(cfg, model.alphas())?;
    let mut norming = compute_norming(&cfg.domain, model.alphas(), &cfg.grid, &pickands)?;
    norming.b_t += cfg.norming_adjust.b_t;
    norming.b_star += cfg.norming_adjust.b_star;
    Ok((norming, pickands))
}

/// The field of replication `rep` exactly as the experiment draws it.
pub fn replicate_field(cfg: &ExperimentConfig, rep: u64) -> Result<FieldSample> {
    let plan = plan_lattice(cfg)?;
    let model = cfg.model.build()?;
    let sampler = FieldSampler::new(model.base(), &plan.lattice, cfg.lattice.method)?;
    let seed = replication_seed(cfg.master_seed, rep / 2);
    let (a, b) = sampler.sample_pair(&mut stream(seed, 0, StreamTag::Field));
    let half = rep % 2;
    let mut values = if half == 0 { a } else { b };
    if let FieldModel::Mixture { r_target, .. } = &model {
        let rho = crate::covmodels::mixing_weight(*r_target, &cfg.domain)?;
        apply_mixture(&mut values, rho, mixture_common(seed, half));
    }
    Ok(FieldSample { lattice: plan.lattice, values, seed })
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let LatticePlan { lattice, spacings, stride } = plan_lattice(cfg)?;
    let step = lattice.step().to_vec();
    let model = cfg.model.build()?;
    let alphas = model.alphas().to_vec();
    let domain = &cfg.domain;
    let sampler = FieldSampler::new(model.base(), &lattice, cfg.lattice.method)?;
    let rho = match &model {
        FieldModel::Weak(_) => 0.0,
        FieldModel::Mixture { r_target, .. } => crate::covmodels::mixing_weight(*r_target, domain)?,
    };
    let grid_index: Vec<Vec<usize>> = (0..alphas.len())
        .map(|i| grid_indices(spacings[i], domain.extent()[i], step[i]))
        .collect::<Result<_>>()?;
    let (pickands, table) = resolve_pickands(cfg, &alphas)?;
    let mut norming = compute_norming(domain, &alphas, &cfg.grid, &pickands)?;
    norming.b_t += cfg.norming_adjust.b_t;
    norming.b_star += cfg.norming_adjust.b_star;
    let theorem = theorem_for(cfg.grid.regime());
    let h_const: f64 = pickands.h_alpha.iter().product();
    let params = match theorem {
        Theorem::PickandsT2 => {
            let hg: f64 = pickands.h_a_alpha.as_ref().unwrap().iter().product();
            LimitParams::pickands(model.r(), h_const, hg.min(h_const), table.unwrap())
        }
        Theorem::SparseT1 => LimitParams { h_const, ..LimitParams::sparse(model.r()) },
        Theorem::DenseT3 => LimitParams { h_const, ..LimitParams::dense(model.r()) },
    }
    .with_convention(cfg.min_convention);
    let meta = RunMeta {
        norming,
        norming_adjust: cfg.norming_adjust,
        pickands,
        spacings,
        lattice_step: step,
        lattice_counts: lattice.counts().to_vec(),
        grid_stride: stride,
        lattice_factor: cfg.lattice.factor,
        lattice_rule_satisfied: cfg.lattice.factor <= LATTICE_RULE_MAX,
        method: sampler.method(),
        rho,
        pairing: "replications 2k and 2k+1 share the seed of pair k",
        version: env!("CARGO_PKG_VERSION"),
    };
    Ok(Prepared { model, sampler, rho, grid_index, norming, params, meta })
}

fn extremes(values: &[f64], counts: &[usize], grid: &[Vec<usize>]) -> (f64, f64, f64, f64) {
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    for &v in values {
        hi = hi.max(v);
        lo = lo.min(v);
    }
    let (mut ghi, mut glo) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut visit = |flat: usize| {
        let v = values[flat];
        ghi = ghi.max(v);
        glo = glo.min(v);
    };
    match counts.len() {
        1 => grid[0].iter().for_each(|&i| visit(i)),
        _ => {
            for &i in &grid[0] {
                for &j in &grid[1] {
                    visit(i * counts[1] + j);
                }
            }
        }
    }
    (hi, ghi, lo, glo)
}

fn simulate(p: &Prepared, cfg: &ExperimentConfig) -> Result<Vec<ExtremesRecord>> {
    let pairs = cfg.reps.div_ceil(2) as u64;
    let counts = p.sampler.lattice().counts().to_vec();
    let chunks: Vec<[ExtremesRecord; 2]> = (0..pairs)
        .into_par_iter()
        .map(|k| {
            let seed = replication_seed(cfg.master_seed, k);
            let (a, b) = p.sampler.sample_pair(&mut stream(seed, 0, StreamTag::Field));
            let mut out = [ExtremesRecord { rep: 0, seed, m_cont: 0.0, m_grid: 0.0, min_cont: 0.0, min_grid: 0.0 }; 2];
            for (half, mut values) in [a, b].into_iter().enumerate() {
                if p.rho > 0.0 {
                    apply_mixture(&mut values, p.rho, mixture_common(seed, half as u64));
                }
                let (m_cont, m_grid, min_cont, min_grid) = extremes(&values, &counts, &p.grid_index);
                out[half] = ExtremesRecord { rep: 2 * k + half as u64, seed, m_cont, m_grid, min_cont, min_grid };
            }
            out
        })
        .collect();
    let mut records: Vec<ExtremesRecord> = chunks.into_iter().flatten().collect();
    records.truncate(cfg.reps);
    if let Some(bad) = records.iter().find(|r| !(r.m_grid <= r.m_cont && r.min_grid >= r.min_cont)) {
        return Err(Error::Simulation(format!("grid extremes escaped the lattice extremes in replication {}", bad.rep)));
    }
    Ok(records)
}

fn empirical(z: &[NormalizedExtremes], [x1, y1, x2, y2]: [f64; 4]) -> f64 {
    let hits = z.iter().filter(|e| e.max_cont <= x2 && e.max_grid <= y2 && e.min_cont <= x1 && e.min_grid <= y1).count();
    hits as f64 / z.len() as f64
}

fn empirical_band(z: &[NormalizedExtremes], [x1, y1, x2, y2]: [f64; 4]) -> f64 {
    let hits = z.iter().filter(|e| e.max_cont <= x2 && e.max_grid <= y2 && e.min_cont > x1 && e.min_grid > y1).count();
    hits as f64 / z.len() as f64
}

fn build_report(p: &Prepared, cfg: &ExperimentConfig, z: &[NormalizedExtremes], records: &[ExtremesRecord]) -> Result<ComparisonReport> {
    let inf = f64::INFINITY;
    let published = p.params.clone().with_convention(MinConvention::Published);
    let mut points = Vec::new();
    let mut clamp_events = 0;
    for args in cfg.points() {
        let [x1, y1, x2, y2] = args;
        let th = evaluate(&p.params, x1, y1, x2, y2)?;
        let pub_th = evaluate(&published, x1, y1, x2, y2)?;
        clamp_events += th.clamped as usize;
        points.push(PointComparison {
            args,
            empirical: empirical(z, args),
            theoretical: th.value,
            theoretical_published: pub_th.value,
            empirical_band: empirical_band(z, args),
            theoretical_band: band_probability(&p.params, x1, y1, x2, y2)?,
            clamped: th.clamped,
        });
    }
    let sup = |f: fn(&PointComparison) -> f64| points.iter().map(|q| (q.empirical - f(q)).abs()).fold(0.0, f64::max);
    let sup_defect = sup(|q| q.theoretical);
    let sup_defect_published = sup(|q| q.theoretical_published);
    let cdf = |slot: usize| {
        let params = p.params.clone();
        move |x: f64| {
            let mut a = [inf; 4];
            a[slot] = x;
            evaluate(&params, a[0], a[1], a[2], a[3]).map(|e| e.value).unwrap_or(f64::NAN)
        }
    };
    let col = |f: fn(&NormalizedExtremes) -> f64| z.iter().map(f).collect::<Vec<f64>>();
    let (mc, mg, nc, ng) = (col(|e| e.max_cont), col(|e| e.max_grid), col(|e| e.min_cont), col(|e| e.min_grid));
    let per_marginal_ks = MarginalKs {
        max_cont: ks_distance(&mc, cdf(2)),
        max_grid: ks_distance(&mg, cdf(3)),
        min_cont: ks_distance(&nc, cdf(0)),
        min_grid: ks_distance(&ng, cdf(1)),
    };
    let neg: Vec<f64> = nc.iter().map(|v| -v).collect();
    let gaps: Vec<f64> = records.iter().map(|r| p.norming.a_t * (r.m_cont - r.m_grid)).collect();
    let swap_defect = cfg
        .points()
        .iter()
        .map(|&[x1, y1, x2, y2]| (empirical(z, [x1, y1, x2, y2]) - empirical(z, [x1, y1, y2, x2])).abs())
        .fold(0.0, f64::max);
    Ok(ComparisonReport {
        theorem: p.params.theorem,
        r: p.params.r,
        reps: z.len(),
        min_convention: p.params.convention,
        points,
        sup_defect,
        sup_defect_published,
        per_marginal_ks,
        max_min_corr: correlation(&mc, &neg),
        max_min_raw_corr: correlation(&mc, &nc),
        grid_gap_q95: quantile(&gaps, 0.95),
        swap_defect,
        clamp_events,
    })
}

/// Runs the experiment, optionally on a dedicated pool of `threads` workers.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentOutcome> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Simulation(format!("thread pool: {e}")))?;
            pool.install(|| run_inner(cfg))
        }
        None => run_inner(cfg),
    }
}

fn run_inner(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let p = prepare(cfg)?;
    let records = simulate(&p, cfg)?;
    let normalized: Vec<NormalizedExtremes> = records.iter().map(|r| normalize_extremes(r, &p.norming)).collect();
    let report = build_report(&p, cfg, &normalized, &records)?;
    let _ = &p.model;
    Ok(ExperimentOutcome { records, normalized, report, meta: p.meta })
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_extremes_csv<W: Write>(out: &ExperimentOutcome, mut w: W) -> Result<()> {
    writeln!(w, "rep,seed,mCont,mGrid,minCont,minGrid,maxContNorm,maxGridNorm,minContNorm,minGridNorm")?;
    for (r, z) in out.records.iter().zip(&out.normalized) {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.rep,
            r.seed,
            fmt_f64(r.m_cont),
            fmt_f64(r.m_grid),
            fmt_f64(r.min_cont),
            fmt_f64(r.min_grid),
            fmt_f64(z.max_cont),
            fmt_f64(z.max_grid),
            fmt_f64(z.min_cont),
            fmt_f64(z.min_grid)
        )?;
    }
    Ok(())
}

/// Writes `extremes.csv`, `report.json` and `meta.json` into `dir`.
pub fn write_outputs(out: &ExperimentOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("extremes.csv"))?);
    write_extremes_csv(out, &mut csv)?;
    csv.flush()?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&out.report)?)?;
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&out.meta)?)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TailValidation {
    pub points: usize,
    pub probability: f64,
    pub psi: f64,
    /// P / (n·Ψ(u)) with n the number of grid points.
    pub ratio: f64,
    /// P / ((S/δ)^d·Ψ(u)), the volume count of the single-point asymptotic.
    pub ratio_volume_count: f64,
}

/// Exact `P(max over {kδ ≤ S}^d of X > u)` relative to the point count times
/// `Ψ(u)`.
pub fn tail_validation(model: &CovarianceModel, s: f64, delta: f64, u: f64) -> Result<TailValidation> {
    if !(s >= 0.0 && delta > 0.0) {
        return arg_err("S must be nonnegative and δ positive");
    }
    if u < 3.0 {
        return arg_err(format!("level u = {u} below 3"));
    }
    let d = model.dim();
    let per_axis = point_count(s, delta);
    let n = per_axis.checked_pow(d as u32).unwrap_or(usize::MAX);
    if n > MAX_DIM {
        return arg_err(format!("{n} grid points exceed the exact limit of {MAX_DIM}"));
    }
    let coords: Vec<Vec<f64>> = (0..n)
        .map(|flat| {
            let mut rem = flat;
            (0..d)
                .map(|_| {
                    let j = rem % per_axis;
                    rem /= per_axis;
                    j as f64 * delta
                })
                .collect()
        })
        .collect();
    let psi = norm_sf(u);
    let probability = if n == 1 {
        psi
    } else {
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let lag: Vec<f64> = (0..d).map(|k| coords[i][k] - coords[j][k]).collect();
                cov[i * n + j] = model.evaluate(&lag)?;
            }
        }
        exceedance_probability(&cov, n, u)?
    };
    Ok(TailValidation {
        points: n,
        probability,
        psi,
        ratio: probability / (n as f64 * psi),
        ratio_volume_count: probability / ((s / delta).powi(d as i32) * psi),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConvergenceRow {
    pub extent: f64,
    pub master_seed: u64,
    pub sup_defect: f64,
    pub ks: MarginalKs,
    pub max_min_corr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Kendall τ of the sup defect against T.
    pub kendall_tau_sup_defect: f64,
    /// Pairs `i < j` of rows with a continuous-maximum KS distance that did
    /// not increase, out of all pairs.
    pub ks_nonincreasing_pairs: usize,
    pub ks_pairs: usize,
}

/// Repeats `template` over a ladder of domain sizes (the same size on every
/// axis), each rung with its own derived seed.
pub fn convergence_study(template: &ExperimentConfig, ladder: &[f64], threads: Option<usize>) -> Result<ConvergenceTable> {
    if ladder.len() < 3 {
        return arg_err("a convergence ladder needs at least 3 sizes");
    }
    if ladder.windows(2).any(|w| w[1] < w[0]) {
        return arg_err("ladder sizes must be nondecreasing");
    }
    let mut rows = Vec::new();
    for (i, &t) in ladder.iter().enumerate() {
        let mut cfg = template.clone();
        cfg.domain = DomainSpec::new(vec![t; template.domain.dim()])?;
        cfg.master_seed = stream(template.master_seed, i as u64, StreamTag::Pilot).next_u64();
        let out = run_experiment(&cfg, threads)?;
        rows.push(ConvergenceRow {
            extent: t,
            master_seed: cfg.master_seed,
            sup_defect: out.report.sup_defect,
            ks: out.report.per_marginal_ks,
            max_min_corr: out.report.max_min_corr,
        });
    }
    let ts: Vec<f64> = rows.iter().map(|r| r.extent).collect();
    let sd: Vec<f64> = rows.iter().map(|r| r.sup_defect).collect();
    let mut ok = 0;
    let mut pairs = 0;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            pairs += 1;
            ok += (rows[j].ks.max_cont <= rows[i].ks.max_cont) as usize;
        }
    }
    Ok(ConvergenceTable { kendall_tau_sup_defect: kendall_tau(&ts, &sd), rows, ks_nonincreasing_pairs: ok, ks_pairs: pairs })
}
