//! Normalizing constants and the four-level transform.
//!
//! With `a = √(2 log ΠT_i)`:
//!
//! ```text
//! b_T     = a + a⁻¹ log((2π)^{−1/2} ΠH_{α_i}     a^{Σ2/α_i − 1})
//! b_T^δ   = a + a⁻¹ log((2π)^{−1/2} Πδ_i⁻¹       a⁻¹)
//! b_{a,T} = a + a⁻¹ log((2π)^{−1/2} ΠH_{a_i,α_i} a^{Σ2/α_i − 1})
//! ```
//!
//! and `b*` is `b_T^δ`, `b_{a,T}` or `b_T` for sparse, Pickands and dense
//! grids. Maxima are centred at `b_T`, `b*` and minima at `−b_T`, `−b*`.

use crate::error::{config_err, Result};
use crate::grids::{DomainSpec, GridSpec, Regime};
use crate::harness::ExtremesRecord;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Pickands constants fed into the norming, with a note of where they came
/// from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PickandsValues {
    /// H_{α_i}, one per axis.
    pub h_alpha: Vec<f64>,
    /// H_{a_i,α_i}, one per axis; needed for Pickands grids only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_a_alpha: Option<Vec<f64>>,
    pub provenance: String,
}

impl PickandsValues {
    /// Exact values H_1 = 1 and H_2 = 1/√π.
    pub fn literature(alphas: &[f64]) -> Result<Self> {
        let h_alpha = alphas
            .iter()
            .map(|&a| match a {
                a if a == 1.0 => Ok(1.0),
                a if a == 2.0 => Ok(1.0 / PI.sqrt()),
                a => config_err(format!("no exact Pickands constant is known for α = {a}")),
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self { h_alpha, h_a_alpha: None, provenance: "literature".into() })
    }

    pub fn log_h(&self) -> f64 {
        self.h_alpha.iter().map(|h| h.ln()).sum()
    }

    pub fn log_h_grid(&self) -> Option<f64> {
        self.h_a_alpha.as_ref().map(|v| v.iter().map(|h| h.ln()).sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormingConstants {
    #[serde(rename = "aT")]
    pub a_t: f64,
    #[serde(rename = "bT")]
    pub b_t: f64,
    #[serde(rename = "bTdelta")]
    pub b_t_delta: f64,
    #[serde(rename = "bAT")]
    pub b_a_t: Option<f64>,
    #[serde(rename = "bStar")]
    pub b_star: f64,
    pub regime: Regime,
}

fn location(a: f64, log_inner: f64) -> f64 {
    a + (log_inner - 0.5 * (2.0 * PI).ln()) / a
}

pub fn compute_norming(
    domain: &DomainSpec,
    alphas: &[f64],
    grid: &GridSpec,
    values: &PickandsValues,
) -> Result<NormingConstants> {
    if domain.log_volume() <= 0.0 {
        return config_err("domain volume must exceed 1");
    }
    let deltas = grid.spacings(domain, alphas)?;
    if values.h_alpha.len() != alphas.len() || values.h_alpha.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return config_err("one positive H_α per axis is required");
    }
    let a = domain.level_scale();
    let power: f64 = alphas.iter().map(|al| 2.0 / al).sum::<f64>() - 1.0;
    let b_t = location(a, values.log_h() + power * a.ln());
    let log_inv_delta: f64 = deltas.iter().map(|d| -d.ln()).sum();
    let b_t_delta = location(a, log_inv_delta - a.ln());
    let b_a_t = match (&values.h_a_alpha, grid.regime()) {
        (Some(v), _) => {
            if v.len() != alphas.len() || v.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
                return config_err("one positive H_{a,α} per axis is required");
            }
            Some(location(a, values.log_h_grid().unwrap() + power * a.ln()))
        }
        (None, Regime::Pickands) => return config_err("Pickands grids need H_{a,α} values"),
        (None, _) => None,
    };
    let b_star = match grid.regime() {
        Regime::Sparse => b_t_delta,
        Regime::Pickands => b_a_t.unwrap(),
        Regime::Dense => b_t,
    };
    Ok(NormingConstants { a_t: a, b_t, b_t_delta, b_a_t, b_star, regime: grid.regime() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelQuadruple {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub u_x2: f64,
    pub u_y2: f64,
    pub v_x1: f64,
    pub v_y1: f64,
}

pub fn to_levels(n: &NormingConstants, x1: f64, y1: f64, x2: f64, y2: f64) -> LevelQuadruple {
    LevelQuadruple {
        x1,
        y1,
        x2,
        y2,
        u_x2: n.b_t + x2 / n.a_t,
        u_y2: n.b_star + y2 / n.a_t,
        v_x1: -n.b_t + x1 / n.a_t,
        v_y1: -n.b_star + y1 / n.a_t,
    }
}

/// `(a(M − b_T), a(M^δ − b*), a(m + b_T), a(m^δ + b*))`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NormalizedExtremes {
    pub max_cont: f64,
    pub max_grid: f64,
    pub min_cont: f64,
    pub min_grid: f64,
}

pub fn normalize_extremes(rec: &ExtremesRecord, n: &NormingConstants) -> NormalizedExtremes {
    NormalizedExtremes {
        max_cont: n.a_t * (rec.m_cont - n.b_t),
        max_grid: n.a_t * (rec.m_grid - n.b_star),
        min_cont: n.a_t * (rec.min_cont + n.b_t),
        min_grid: n.a_t * (rec.min_grid + n.b_star),
    }
}
