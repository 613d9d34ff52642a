//! Observation domains and the three uniform-grid regimes.
//!
//! With `u = √(2 log ΠT_i)` the grid spacing on axis `i` is
//!
//! - sparse: a fixed `δ_i`, so `δ_i·u^{2/α_i} → ∞`;
//! - Pickands: `δ_i = a_i·u^{−2/α_i}`;
//! - dense: `δ_i = c·u^{−2/α_i}` with a small fixed `c`.
//!
//! All axes share one regime; a mixed configuration cannot be expressed.

use crate::error::{arg_err, config_err, Result};
use serde::{Deserialize, Serialize};

/// The box `Π[0, T_i]` with every `T_i > 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    extent: Vec<f64>,
}

impl DomainSpec {
    pub fn new(extent: Vec<f64>) -> Result<Self> {
        let d = Self { extent };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.extent.is_empty() {
            return config_err("domain needs at least one axis");
        }
        if let Some(t) = self.extent.iter().find(|t| !(**t > 1.0 && t.is_finite())) {
            return config_err(format!("domain extent {t} must be finite and exceed 1"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.extent.len()
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    /// log ΠT_i
    pub fn log_volume(&self) -> f64 {
        self.extent.iter().map(|t| t.ln()).sum()
    }

    /// u = a_T = √(2 log ΠT_i)
    pub fn level_scale(&self) -> f64 {
        (2.0 * self.log_volume()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Sparse,
    Pickands,
    Dense,
}

/// A uniform-grid regime and its parameters, written in JSON as
/// `{"regime":"sparse","delta":[2.0]}`, `{"regime":"pickands","a":[1.0]}` or
/// `{"regime":"dense","c":0.05}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "lowercase", deny_unknown_fields)]
pub enum GridSpec {
    Sparse { delta: Vec<f64> },
    Pickands { a: Vec<f64> },
    Dense { c: f64 },
}

pub const MAX_DENSE_FACTOR: f64 = 0.2;

impl GridSpec {
    pub fn regime(&self) -> Regime {
        match self {
            GridSpec::Sparse { .. } => Regime::Sparse,
            GridSpec::Pickands { .. } => Regime::Pickands,
            GridSpec::Dense { .. } => Regime::Dense,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let positive = |name: &str, v: &[f64]| -> Result<()> {
            if v.len() != dim {
                return config_err(format!("{name} has {} entries for a {dim}-dimensional domain", v.len()));
            }
            if let Some(x) = v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                return config_err(format!("{name} entry {x} must be finite and positive"));
            }
            Ok(())
        };
        match self {
            GridSpec::Sparse { delta } => positive("delta", delta),
            GridSpec::Pickands { a } => positive("a", a),
            GridSpec::Dense { c } => {
                if !(*c > 0.0 && *c <= MAX_DENSE_FACTOR) {
                    return config_err(format!("dense factor c = {c} outside (0, {MAX_DENSE_FACTOR}]"));
                }
                Ok(())
            }
        }
    }

    /// Grid spacings δ_i for the given domain.
    pub fn spacings(&self, domain: &DomainSpec, alphas: &[f64]) -> Result<Vec<f64>> {
        if alphas.len() != domain.dim() {
            return config_err("exponent count differs from the domain dimension");
        }
        if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a <= 2.0)) {
            return config_err(format!("exponent {a} outside (0, 2]"));
        }
        self.validate(domain.dim())?;
        let u = domain.level_scale();
        Ok(match self {
            GridSpec::Sparse { delta } => delta.clone(),
            GridSpec::Pickands { a } => a.iter().zip(alphas).map(|(a, al)| a * u.powf(-2.0 / al)).collect(),
            GridSpec::Dense { c } => alphas.iter().map(|al| c * u.powf(-2.0 / al)).collect(),
        })
    }
}

/// Relative slack used when counting points so that `T/δ` landing a rounding
/// error below an integer still counts the endpoint.
const COUNT_SLACK: f64 = 1e-9;

pub(crate) fn point_count(extent: f64, step: f64) -> usize {
    (extent / step * (1.0 + COUNT_SLACK)).floor() as usize + 1
}

/// Indices on the lattice `{j·h}` nearest to the grid points `{kδ : kδ ≤ T}`.
/// Points beyond the last lattice index are clamped onto it.
pub fn grid_indices(delta: f64, extent: f64, lattice_step: f64) -> Result<Vec<usize>> {
    if !(lattice_step > 0.0 && extent > 0.0) {
        return arg_err("extent and lattice step must be positive");
    }
    if delta < lattice_step * (1.0 - COUNT_SLACK) {
        return config_err(format!(
            "grid spacing {delta} is finer than the lattice step {lattice_step}; use a finer lattice"
        ));
    }
    let last = point_count(extent, lattice_step) - 1;
    let count = point_count(extent, delta);
    let mut out: Vec<usize> = (0..count).map(|k| ((k as f64 * delta / lattice_step).round() as usize).min(last)).collect();
    out.dedup();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dom8() -> DomainSpec {
        DomainSpec::new(vec![8f64.exp()]).unwrap()
    }

    #[test]
    fn level_scale_is_four() {
        assert_relative_eq!(dom8().level_scale(), 4.0, epsilon = 1e-15);
    }

    #[test]
    fn spacing_examples() {
        let p = GridSpec::Pickands { a: vec![1.0] };
        assert_relative_eq!(p.spacings(&dom8(), &[1.0]).unwrap()[0], 0.0625, epsilon = 1e-15);
        let s = GridSpec::Sparse { delta: vec![2.0] };
        assert_eq!(s.spacings(&dom8(), &[1.0]).unwrap(), vec![2.0]);
        let d = GridSpec::Dense { c: 0.05 };
        assert_relative_eq!(d.spacings(&dom8(), &[2.0]).unwrap()[0], 0.0125, epsilon = 1e-15);
    }

    #[test]
    fn grid_json_forms() {
        let g: GridSpec = serde_json::from_str(r#"{"regime":"pickands","a":[1.0]}"#).unwrap();
        assert_eq!(g, GridSpec::Pickands { a: vec![1.0] });
        assert!(serde_json::from_str::<GridSpec>(r#"{"regime":"pickands","delta":[1.0]}"#).is_err());
        assert!(serde_json::from_str::<GridSpec>(r#"{"regime":"sparse","delta":[1.0],"c":0.1}"#).is_err());
        let dense = GridSpec::Dense { c: 0.3 };
        assert!(dense.spacings(&dom8(), &[1.0]).is_err());
        let short = GridSpec::Sparse { delta: vec![1.0] };
        assert!(short.validate(2).is_err());
    }

    #[test]
    fn index_examples() {
        assert_eq!(grid_indices(2.0, 10.0, 0.5).unwrap(), vec![0, 4, 8, 12, 16, 20]);
        assert_eq!(grid_indices(3.0, 10.0, 0.5).unwrap().len(), 4);
        assert!(grid_indices(0.4, 10.0, 0.5).is_err());
    }

    #[test]
    fn domain_rejects_small_extent() {
        assert!(DomainSpec::new(vec![1.0]).is_err());
        assert!(DomainSpec::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn snapped_points_are_close(delta in 0.05f64..5.0, extent in 5.0f64..50.0, ratio in 1.0f64..20.0) {
            let h = delta / ratio;
            let idx = grid_indices(delta, extent, h).unwrap();
            prop_assert_eq!(idx[0], 0);
            prop_assert!(idx.windows(2).all(|w| w[1] > w[0]));
            // With a non-integer stride the grid can overhang the last lattice point by less
            // than 1.5 lattice steps, so at most one clamped point merges.
            let count = point_count(extent, delta);
            prop_assert!(idx.len() == count || idx.len() + 1 == count);
            if (ratio - ratio.round()).abs() < 1e-12 {
                prop_assert_eq!(idx.len(), count);
            }
            let last = point_count(extent, h) - 1;
            for (k, &j) in idx.iter().enumerate() {
                prop_assert!(j <= last);
                let target = k as f64 * delta;
                if target <= last as f64 * h {
                    prop_assert!((j as f64 * h - target).abs() <= h / 2.0 + 1e-9);
                }
            }
        }

        #[test]
        fn pickands_spacing_halves_with_a(a in 0.01f64..10.0, t in 10.0f64..1e6, alpha in 0.2f64..=2.0) {
            let dom = DomainSpec::new(vec![t]).unwrap();
            let full = GridSpec::Pickands { a: vec![a] }.spacings(&dom, &[alpha]).unwrap()[0];
            let half = GridSpec::Pickands { a: vec![a / 2.0] }.spacings(&dom, &[alpha]).unwrap()[0];
            prop_assert!((full - 2.0 * half).abs() <= 1e-12 * full);
        }
    }
}
