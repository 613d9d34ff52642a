//! Stationary covariance models and the strongly dependent mixture field.
//!
//! The base families all depend on the lag only through `Σ|t_i|^{α_i}`, so
//! they are even in every coordinate and satisfy the local expansion
//! `1 − r(t) ~ Σ|t_i|^{α_i}` exactly to first order:
//!
//! - `Exponential`: `r(t) = exp(−Σ|t_i|^{α_i})`
//! - `Gneiting` (generalized Cauchy): `r(t) = (1 + Σ|t_i|^{α_i}/β)^{−β}`
//! - `UserTable`: one-dimensional, piecewise linear in `|t|`
//!
//! Strong dependence is obtained from a weakly dependent base field `Y` as the
//! triangular array `X_T = √(1−ρ(T))·Y + √ρ(T)·U` with a single standard normal
//! `U` and `ρ(T) = r / log ΠT_i`.

use crate::error::{arg_err, config_err, Result};
use crate::grids::DomainSpec;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceKind {
    Exponential,
    Gneiting,
    #[serde(rename = "table")]
    UserTable,
}

/// A stationary, unit-variance covariance function on ℝ^d.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    dim: usize,
    alphas: Vec<f64>,
    long_range: f64,
    kind: CovarianceKind,
    params: BTreeMap<String, f64>,
    table: Vec<(f64, f64)>,
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return config_err("at least one exponent is required");
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a <= 2.0)) {
        return config_err(format!("exponent {a} outside (0, 2]"));
    }
    Ok(())
}

impl CovarianceModel {
    /// `exp(−Σ|t_i|^{α_i})`
    pub fn exponential(alphas: Vec<f64>) -> Result<Self> {
        check_alphas(&alphas)?;
        Ok(Self {
            dim: alphas.len(),
            alphas,
            long_range: 0.0,
            kind: CovarianceKind::Exponential,
            params: BTreeMap::new(),
            table: Vec::new(),
        })
    }

    /// `(1 + Σ|t_i|^{α_i}/β)^{−β}`, a gamma mixture of exponential models and
    /// hence positive definite for every β > 0.
    pub fn gneiting(alphas: Vec<f64>, beta: f64) -> Result<Self> {
        check_alphas(&alphas)?;
        if !(beta > 0.0 && beta.is_finite()) {
            return config_err(format!("gneiting beta must be positive, got {beta}"));
        }
        let mut params = BTreeMap::new();
        params.insert("beta".to_string(), beta);
        Ok(Self {
            dim: alphas.len(),
            alphas,
            long_range: 0.0,
            kind: CovarianceKind::Gneiting,
            params,
            table: Vec::new(),
        })
    }

    /// Tabulated one-dimensional covariance, linearly interpolated in `|t|`
    /// and held at its last value beyond the table. The declared exponent is
    /// used by the grid and norming rules; it is not inferred.
    pub fn user_table(alpha: f64, table: Vec<(f64, f64)>) -> Result<Self> {
        check_alphas(&[alpha])?;
        if table.len() < 2 {
            return config_err("covariance table needs at least two rows");
        }
        if table[0].0 != 0.0 || (table[0].1 - 1.0).abs() > 1e-12 {
            return config_err("covariance table must start with the row (0, 1)");
        }
        if table.windows(2).any(|w| w[1].0 <= w[0].0) {
            return config_err("covariance table lags must be strictly increasing");
        }
        if table[1..].iter().any(|&(_, v)| !(-1.0..1.0).contains(&v)) {
            return config_err("tabulated covariance must lie in [-1, 1) away from lag 0");
        }
        Ok(Self {
            dim: 1,
            alphas: vec![alpha],
            long_range: 0.0,
            kind: CovarianceKind::UserTable,
            params: BTreeMap::new(),
            table,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// The limit `r` of `r(T)·log ΠT_i`; zero for every base family.
    pub fn long_range(&self) -> f64 {
        self.long_range
    }

    pub fn kind(&self) -> CovarianceKind {
        self.kind
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// `Σ|t_i|^{α_i}`
    pub fn local_scale(&self, t: &[f64]) -> f64 {
        t.iter().zip(&self.alphas).map(|(x, a)| x.abs().powf(*a)).sum()
    }

    /// r(t), checking the lag dimension.
    pub fn evaluate(&self, t: &[f64]) -> Result<f64> {
        if t.len() != self.dim {
            return arg_err(format!("lag has {} coordinates, model has dimension {}", t.len(), self.dim));
        }
        Ok(self.eval(t))
    }

    /// r(t) without the dimension check.
    pub(crate) fn eval(&self, t: &[f64]) -> f64 {
        match self.kind {
            CovarianceKind::Exponential => (-self.local_scale(t)).exp(),
            CovarianceKind::Gneiting => {
                let beta = self.params["beta"];
                (1.0 + self.local_scale(t) / beta).powf(-beta)
            }
            CovarianceKind::UserTable => self.interpolate(t[0].abs()),
        }
    }

    fn interpolate(&self, x: f64) -> f64 {
        let tab = &self.table;
        match tab.iter().position(|&(lag, _)| lag >= x) {
            Some(0) => tab[0].1,
            Some(i) => {
                let (x0, y0) = tab[i - 1];
                let (x1, y1) = tab[i];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
            None => tab[tab.len() - 1].1,
        }
    }
}

/// JSON description of a model: `{"kind":"exponential","dim":1,"alphas":[1.0],"rTarget":0.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: CovarianceKind,
    pub dim: usize,
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub r_target: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<(f64, f64)>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<FieldModel> {
        if self.alphas.len() != self.dim {
            return config_err(format!("dim = {} but {} exponents given", self.dim, self.alphas.len()));
        }
        let base = match self.kind {
            CovarianceKind::Exponential => CovarianceModel::exponential(self.alphas.clone())?,
            CovarianceKind::Gneiting => {
                let beta = *self.params.get("beta").unwrap_or(&1.0);
                CovarianceModel::gneiting(self.alphas.clone(), beta)?
            }
            CovarianceKind::UserTable => {
                if self.dim != 1 {
                    return config_err("tabulated covariances are one-dimensional");
                }
                CovarianceModel::user_table(self.alphas[0], self.table.clone())?
            }
        };
        if !(self.r_target >= 0.0 && self.r_target.is_finite()) {
            return config_err(format!("rTarget must be finite and nonnegative, got {}", self.r_target));
        }
        Ok(if self.r_target > 0.0 {
            FieldModel::Mixture { base, r_target: self.r_target }
        } else {
            FieldModel::Weak(base)
        })
    }
}

/// Either a weakly dependent stationary field or the mixture triangular array
/// built on one. The mixture's covariance depends on the domain size.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldModel {
    Weak(CovarianceModel),
    Mixture { base: CovarianceModel, r_target: f64 },
}

impl FieldModel {
    pub fn base(&self) -> &CovarianceModel {
        match self {
            FieldModel::Weak(m) => m,
            FieldModel::Mixture { base, .. } => base,
        }
    }

    pub fn dim(&self) -> usize {
        self.base().dim()
    }

    pub fn alphas(&self) -> &[f64] {
        self.base().alphas()
    }

    /// The dependence parameter `r` of the limit laws.
    pub fn r(&self) -> f64 {
        match self {
            FieldModel::Weak(m) => m.long_range(),
            FieldModel::Mixture { r_target, .. } => *r_target,
        }
    }

    /// Covariance at `lag` for the field indexed by `domain`.
    pub fn covariance(&self, lag: &[f64], domain: &DomainSpec) -> Result<f64> {
        match self {
            FieldModel::Weak(m) => m.evaluate(lag),
            FieldModel::Mixture { base, r_target } => {
                let rho = mixing_weight(*r_target, domain)?;
                Ok(mix(rho, base.evaluate(lag)?))
            }
        }
    }
}

fn mix(rho: f64, base: f64) -> f64 {
    (1.0 - rho) * base + rho
}

/// ρ(T) = r / log ΠT_i, required to lie in [0, 1).
pub fn mixing_weight(r_target: f64, domain: &DomainSpec) -> Result<f64> {
    let rho = r_target / domain.log_volume();
    if !(0.0..1.0).contains(&rho) {
        return config_err(format!("mixing weight ρ(T) = {rho} outside [0, 1)"));
    }
    Ok(rho)
}

/// The mixture field `√(1−ρ)·η + √ρ·U` on a fixed domain.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureFieldSpec {
    pub base: CovarianceModel,
    pub r_target: f64,
    pub domain: DomainSpec,
}

impl MixtureFieldSpec {
    pub fn new(base: CovarianceModel, r_target: f64, domain: DomainSpec) -> Result<Self> {
        if base.long_range() != 0.0 {
            return config_err("mixture base must be weakly dependent");
        }
        if base.dim() != domain.dim() {
            return config_err("mixture base and domain dimensions differ");
        }
        if !(r_target >= 0.0) {
            return config_err(format!("rTarget must be nonnegative, got {r_target}"));
        }
        mixing_weight(r_target, &domain)?;
        Ok(Self { base, r_target, domain })
    }

    pub fn rho(&self) -> f64 {
        self.r_target / self.domain.log_volume()
    }
}

/// Covariance `(1−ρ)·r_base(t) + ρ` of the mixture field.
pub fn mixture_covariance(spec: &MixtureFieldSpec, t: &[f64]) -> Result<f64> {
    let rho = mixing_weight(spec.r_target, &spec.domain)?;
    if t.iter().zip(spec.domain.extent()).any(|(x, ext)| x.abs() > *ext) {
        return arg_err("lag exceeds the domain extent");
    }
    let base = spec.base.evaluate(t)?;
    if rho == 0.0 {
        return Ok(base);
    }
    Ok(mix(rho, base))
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeProbe {
    pub radius: f64,
    pub direction: &'static str,
    pub ratio: f64,
    pub within: bool,
}

/// Ratios `(1 − r(t)) / Σ|t_i|^{α_i}` along the coordinate axes and the main
/// diagonal.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub lower: f64,
    pub upper: f64,
    pub probes: Vec<EnvelopeProbe>,
}

impl EnvelopeReport {
    pub fn passed(&self) -> bool {
        self.probes.iter().all(|p| p.within)
    }
}

pub const A1_ENVELOPE: (f64, f64) = (0.5, 2.0);
pub const A3_CAUCHY_TOL: f64 = 0.05;

pub fn check_a1_envelope(model: &CovarianceModel, radii: &[f64]) -> Result<EnvelopeReport> {
    check_a1_envelope_with(model, radii, A1_ENVELOPE)
}

pub fn check_a1_envelope_with(
    model: &CovarianceModel,
    radii: &[f64],
    (lower, upper): (f64, f64),
) -> Result<EnvelopeReport> {
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && **r <= 0.5)) {
        return arg_err(format!("probe radius {r} outside (0, 0.5]"));
    }
    let d = model.dim();
    let mut probes = Vec::new();
    for &radius in radii {
        let mut dirs: Vec<(&'static str, Vec<f64>)> = (0..d)
            .map(|i| {
                let mut t = vec![0.0; d];
                t[i] = radius;
                (AXIS_NAMES[i.min(AXIS_NAMES.len() - 1)], t)
            })
            .collect();
        if d > 1 {
            dirs.push(("diagonal", vec![radius; d]));
        }
        for (direction, t) in dirs {
            let ratio = (1.0 - model.eval(&t)) / model.local_scale(&t);
            probes.push(EnvelopeProbe { radius, direction, ratio, within: ratio >= lower && ratio <= upper });
        }
    }
    Ok(EnvelopeReport { lower, upper, probes })
}

const AXIS_NAMES: [&str; 3] = ["axis0", "axis1", "axis2+"];

/// The sequence `r(T)·log ΠT_i` over increasing domains.
#[derive(Debug, Clone, Serialize)]
pub struct LongRangeReport {
    pub values: Vec<f64>,
    pub last: f64,
    pub tolerance: f64,
    /// The last three values (or all, if fewer) differ pairwise by at most
    /// `tolerance`.
    pub settled: bool,
}

pub fn check_a3_limit(model: &FieldModel, domain_sizes: &[Vec<f64>], tol: f64) -> Result<LongRangeReport> {
    if domain_sizes.is_empty() {
        return arg_err("no domain sizes given");
    }
    let mut values = Vec::with_capacity(domain_sizes.len());
    for t in domain_sizes {
        let domain = DomainSpec::new(t.clone())?;
        values.push(model.covariance(t, &domain)? * domain.log_volume());
    }
    let tail = &values[values.len().saturating_sub(3)..];
    let settled = tail.iter().all(|a| tail.iter().all(|b| (a - b).abs() <= tol));
    Ok(LongRangeReport { last: *values.last().unwrap(), values, tolerance: tol, settled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn exp1() -> CovarianceModel {
        CovarianceModel::exponential(vec![1.0]).unwrap()
    }

    #[test]
    fn exponential_values() {
        let m = exp1();
        assert_eq!(m.evaluate(&[0.0]).unwrap(), 1.0);
        assert_relative_eq!(m.evaluate(&[1.0]).unwrap(), 0.367_879_441_171_442_3, epsilon = 1e-15);
        let m2 = CovarianceModel::exponential(vec![2.0, 2.0]).unwrap();
        assert_relative_eq!(m2.evaluate(&[0.3, 0.4]).unwrap(), 0.778_800_783_071_404_9, epsilon = 1e-15);
        assert!(m2.evaluate(&[0.3]).is_err());
    }

    #[test]
    fn bad_exponents_are_rejected() {
        assert!(CovarianceModel::exponential(vec![2.5]).is_err());
        assert!(CovarianceModel::exponential(vec![0.0]).is_err());
        assert!(CovarianceModel::gneiting(vec![1.0], -1.0).is_err());
    }

    #[test]
    fn a1_envelope_ratios() {
        let rep = check_a1_envelope(&exp1(), &[0.01, 0.5]).unwrap();
        assert_relative_eq!(rep.probes[0].ratio, 0.995_016_625_083_194_7, epsilon = 1e-12);
        assert_relative_eq!(rep.probes[1].ratio, 0.786_938_680_574_733, epsilon = 1e-12);
        assert!(rep.passed());
        assert!(check_a1_envelope(&exp1(), &[0.0]).is_err());
        assert!(check_a1_envelope(&exp1(), &[0.6]).is_err());
    }

    #[test]
    fn a1_envelope_probes_diagonal_in_two_dimensions() {
        let m = CovarianceModel::gneiting(vec![1.0, 2.0], 2.0).unwrap();
        let rep = check_a1_envelope(&m, &[0.05, 0.2]).unwrap();
        assert_eq!(rep.probes.len(), 6);
        assert!(rep.passed());
    }

    #[test]
    fn a3_weak_dependence_is_zero() {
        let rep = check_a3_limit(&FieldModel::Weak(exp1()), &[vec![10.0], vec![100.0]], A3_CAUCHY_TOL).unwrap();
        assert!(rep.last < 1e-40);
        assert!(rep.settled);
    }

    #[test]
    fn a3_mixture_reaches_target() {
        let model = FieldModel::Mixture { base: exp1(), r_target: 2.0 };
        let sizes: Vec<Vec<f64>> = [10.0f64, 20.0, 50.0, 1e10f64.ln().exp()].iter().map(|&t| vec![t]).collect();
        let rep = check_a3_limit(&model, &sizes, A3_CAUCHY_TOL).unwrap();
        // r_base(T)(1−ρ)log T + r
        let expect = |t: f64| (-t).exp() * (1.0 - 2.0 / t.ln()) * t.ln() + 2.0;
        for (v, t) in rep.values.iter().zip(&sizes) {
            assert_relative_eq!(*v, expect(t[0]), epsilon = 1e-12);
        }
        let big = check_a3_limit(&model, &[vec![10f64.exp()]], 0.05).unwrap();
        assert_relative_eq!(big.last, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn a3_constant_zero_tail() {
        let table = CovarianceModel::user_table(1.0, vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.0)]).unwrap();
        let rep = check_a3_limit(&FieldModel::Weak(table), &[vec![5.0], vec![50.0], vec![500.0]], 0.05).unwrap();
        assert_eq!(rep.values, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn mixture_covariance_values() {
        let domain = DomainSpec::new(vec![8f64.exp()]).unwrap();
        let spec = MixtureFieldSpec::new(exp1(), 2.0, domain.clone()).unwrap();
        assert_relative_eq!(spec.rho(), 0.25, epsilon = 1e-15);
        assert_relative_eq!(mixture_covariance(&spec, &[0.0]).unwrap(), 1.0, epsilon = 1e-15);
        let lag = -(0.4f64.ln());
        assert_relative_eq!(mixture_covariance(&spec, &[lag]).unwrap(), 0.55, epsilon = 1e-14);
        let zero = MixtureFieldSpec::new(exp1(), 0.0, domain.clone()).unwrap();
        assert_eq!(mixture_covariance(&zero, &[0.7]).unwrap(), (-0.7f64).exp());
        // ρ ≥ 1
        assert!(MixtureFieldSpec::new(exp1(), 9.0, domain).is_err());
    }

    #[test]
    fn model_config_round_trip() {
        let json = r#"{"kind":"exponential","dim":1,"alphas":[1.0],"rTarget":0.0}"#;
        let cfg: ModelConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.build().unwrap(), FieldModel::Weak(exp1()));
        let mix: ModelConfig = serde_json::from_str(r#"{"kind":"exponential","dim":1,"alphas":[1.0],"rTarget":2.0}"#).unwrap();
        assert!(matches!(mix.build().unwrap(), FieldModel::Mixture { .. }));
        let bad: ModelConfig = serde_json::from_str(r#"{"kind":"exponential","dim":2,"alphas":[1.0]}"#).unwrap();
        assert!(bad.build().is_err());
    }

    fn any_model() -> impl Strategy<Value = CovarianceModel> {
        let alphas = prop::collection::vec(0.1f64..=2.0, 1..=2);
        (alphas, prop::bool::ANY, 0.5f64..4.0).prop_map(|(a, g, beta)| {
            if g {
                CovarianceModel::gneiting(a, beta).unwrap()
            } else {
                CovarianceModel::exponential(a).unwrap()
            }
        })
    }

    proptest! {
        #[test]
        fn covariance_is_even_and_bounded(m in any_model(), t in prop::collection::vec(-5.0f64..5.0, 2), flips in prop::collection::vec(prop::bool::ANY, 2)) {
            let t = &t[..m.dim()];
            let v = m.evaluate(t).unwrap();
            prop_assert!((-1.0..=1.0).contains(&v));
            if t.iter().any(|x| *x != 0.0) { prop_assert!(v < 1.0); }
            let flipped: Vec<f64> = t.iter().zip(&flips).map(|(x, f)| if *f { -x } else { *x }).collect();
            prop_assert_eq!(v, m.evaluate(&flipped).unwrap());
        }

        #[test]
        fn covariance_matrices_are_semidefinite(m in any_model(), pts in prop::collection::vec(prop::collection::vec(0.0f64..6.0, 2), 2..64)) {
            let d = m.dim();
            let n = pts.len();
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let lag: Vec<f64> = (0..d).map(|k| pts[i][k] - pts[j][k]).collect();
                    a[i * n + j] = m.evaluate(&lag).unwrap();
                }
            }
            prop_assert!(crate::linalg::semidefinite_cholesky(&a, n, 1e-8).is_ok());
        }

        #[test]
        fn mixture_has_unit_variance(r in 0.0f64..5.0, t in 20.0f64..1e6) {
            let domain = DomainSpec::new(vec![t]).unwrap();
            let spec = MixtureFieldSpec::new(exp1(), r, domain).unwrap();
            prop_assert!((mixture_covariance(&spec, &[0.0]).unwrap() - 1.0).abs() < 1e-15);
        }
    }
}
