//! The joint limit distributions of normalized maxima and minima.
//!
//! Every law has the form `∫ [min bracket](z) · [max factor](z) dΦ(z)` with
//! `s = √(2r)·z`. For the sparse case
//!
//! ```text
//! max factor  = exp(−e^{−x2−r+s} − e^{−y2−r+s})
//! min bracket = 1 − e^{−p} − e^{−q} + e^{−p−q}
//! ```
//!
//! The Pickands case subtracts a bivariate-constant correction inside both
//! exponentials and the dense case depends on `min(x2, y2)` and
//! `max(x1, y1)` only.
//!
//! Two conventions are provided for `p, q`. [`MinConvention::Published`] uses
//! `p = e^{x1+r+s}` (and a `−H·e^{r+s}` correction), the form usually stated
//! for these laws. [`MinConvention::Reflected`] derives the minima law from the
//! maxima law by `X ↦ −X`, which maps the common factor `U ↦ −U` and gives
//! `p = e^{x1−r−s}` with a `+H·e^{−r−s}` correction. The two agree at `r = 0`
//! apart from the sign of the Pickands correction.

use crate::error::{arg_err, config_err, Result};
use crate::quadrature::expect_normal;
use crate::special::exp_clamped;
use serde::{Deserialize, Serialize};
use std::cell::Cell;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    #[serde(rename = "sparse")]
    SparseT1,
    #[serde(rename = "pickands")]
    PickandsT2,
    #[serde(rename = "dense")]
    DenseT3,
}

impl Theorem {
    pub fn from_number(n: u32) -> Option<Self> {
        match n {
            1 => Some(Theorem::SparseT1),
            2 => Some(Theorem::PickandsT2),
            3 => Some(Theorem::DenseT3),
            _ => None,
        }
    }

    pub fn number(self) -> u32 {
        match self {
            Theorem::SparseT1 => 1,
            Theorem::PickandsT2 => 2,
            Theorem::DenseT3 => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MinConvention {
    Published,
    #[default]
    Reflected,
}

/// `H^{x,y}` per unit volume, with `grid_arg` the threshold offset of the
/// grid maximum and `cont_arg` that of the continuous maximum.
pub trait BivariateConstant: Send + Sync {
    fn value(&self, grid_arg: f64, cont_arg: f64) -> f64;
}

/// The identically zero constant, which turns the Pickands law into the
/// sparse one.
pub struct ZeroBivariate;

impl BivariateConstant for ZeroBivariate {
    fn value(&self, _: f64, _: f64) -> f64 {
        0.0
    }
}

impl<F: Fn(f64, f64) -> f64 + Send + Sync> BivariateConstant for F {
    fn value(&self, grid_arg: f64, cont_arg: f64) -> f64 {
        self(grid_arg, cont_arg)
    }
}

#[derive(Clone)]
pub struct LimitParams {
    pub theorem: Theorem,
    pub r: f64,
    /// ΠH_{α_i}
    pub h_const: f64,
    /// ΠH_{a_i,α_i}, Pickands law only.
    pub h_grid_const: Option<f64>,
    pub h_bivariate: Option<Arc<dyn BivariateConstant>>,
    pub convention: MinConvention,
}

impl std::fmt::Debug for LimitParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LimitParams")
            .field("theorem", &self.theorem)
            .field("r", &self.r)
            .field("h_const", &self.h_const)
            .field("h_grid_const", &self.h_grid_const)
            .field("h_bivariate", &self.h_bivariate.is_some())
            .field("convention", &self.convention)
            .finish()
    }
}

impl LimitParams {
    pub fn sparse(r: f64) -> Self {
        Self::simple(Theorem::SparseT1, r)
    }

    pub fn dense(r: f64) -> Self {
        Self::simple(Theorem::DenseT3, r)
    }

    fn simple(theorem: Theorem, r: f64) -> Self {
        Self { theorem, r, h_const: 1.0, h_grid_const: None, h_bivariate: None, convention: MinConvention::default() }
    }

    pub fn pickands(r: f64, h_const: f64, h_grid_const: f64, h: Arc<dyn BivariateConstant>) -> Self {
        Self {
            theorem: Theorem::PickandsT2,
            r,
            h_const,
            h_grid_const: Some(h_grid_const),
            h_bivariate: Some(h),
            convention: MinConvention::default(),
        }
    }

    pub fn with_convention(mut self, c: MinConvention) -> Self {
        self.convention = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return arg_err(format!("r must be finite and nonnegative, got {}", self.r));
        }
        if !(self.h_const > 0.0 && self.h_const.is_finite()) {
            return config_err("ΠH_α must be positive");
        }
        if self.theorem == Theorem::PickandsT2 {
            match self.h_grid_const {
                Some(h) if h > 0.0 && h <= self.h_const => {}
                Some(h) => return config_err(format!("ΠH_(a,α) = {h} must lie in (0, ΠH_α]")),
                None => return config_err("the Pickands law needs ΠH_(a,α)"),
            }
            if self.h_bivariate.is_none() {
                return config_err("the Pickands law needs the bivariate constant");
            }
        }
        Ok(())
    }
}

/// A CDF value with a flag raised when a Monte Carlo bivariate constant had
/// to be clamped into its admissible range or the result into [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub value: f64,
    pub clamped: bool,
}

/// Bivariate corrections for one argument tuple (they do not depend on z).
struct Corrections {
    max_h: f64,
    min_h: f64,
}

fn corrections(p: &LimitParams, x1: f64, y1: f64, x2: f64, y2: f64, clamped: &Cell<bool>) -> Corrections {
    if p.theorem != Theorem::PickandsT2 {
        return Corrections { max_h: 0.0, min_h: 0.0 };
    }
    let h = p.h_bivariate.as_ref().expect("validated");
    let log_h = p.h_const.ln();
    let log_hg = p.h_grid_const.expect("validated").ln();
    let clamp = |v: f64, cap: f64| {
        let v = if v.is_nan() { 0.0 } else { v.max(0.0) };
        if v > cap * (1.0 + 1e-12) {
            clamped.set(true);
            cap
        } else {
            v.min(cap)
        }
    };
    let max_h = clamp(h.value(y2 + log_hg, x2 + log_h), (-x2).exp().min((-y2).exp()));
    let min_raw = h.value(-y1 + log_hg, -x1 + log_h);
    let min_h = match p.convention {
        MinConvention::Reflected => clamp(min_raw, x1.exp().min(y1.exp())),
        MinConvention::Published => {
            if min_raw.is_nan() {
                0.0
            } else {
                min_raw.max(0.0)
            }
        }
    };
    Corrections { max_h, min_h }
}

fn max_factor(p: &LimitParams, x2: f64, y2: f64, s: f64, c: &Corrections) -> f64 {
    let r = p.r;
    match p.theorem {
        Theorem::SparseT1 => (-(exp_clamped(-x2 - r + s) + exp_clamped(-y2 - r + s))).exp(),
        Theorem::PickandsT2 => {
            let inner = exp_clamped(-x2 - r + s) + exp_clamped(-y2 - r + s) - c.max_h * exp_clamped(-r + s);
            (-inner.max(0.0)).exp()
        }
        Theorem::DenseT3 => (-exp_clamped(-x2.min(y2) - r + s)).exp(),
    }
}

fn min_bracket(p: &LimitParams, x1: f64, y1: f64, s: f64, c: &Corrections) -> f64 {
    let r = p.r;
    let shift = match p.convention {
        MinConvention::Published => r + s,
        MinConvention::Reflected => -r - s,
    };
    let pe = exp_clamped(x1 + shift);
    let qe = exp_clamped(y1 + shift);
    match p.theorem {
        Theorem::SparseT1 => (-(-pe).exp_m1()) * (-(-qe).exp_m1()),
        Theorem::DenseT3 => -(-pe.min(qe)).exp_m1(),
        Theorem::PickandsT2 => {
            let corr = match p.convention {
                MinConvention::Published => -c.min_h * exp_clamped(r + s),
                MinConvention::Reflected => c.min_h * exp_clamped(-r - s),
            };
            // 1 − e^{−p} − e^{−q} + e^{−p−q+corr}
            let e = (-pe - qe).exp();
            (-(-pe).exp_m1()) * (-(-qe).exp_m1()) + if e > 0.0 { e * corr.exp_m1() } else { 0.0 }
        }
    }
}

fn finish(v: f64, clamped: bool) -> Evaluation {
    if v.is_nan() {
        return Evaluation { value: 0.0, clamped: true };
    }
    let slack = 1e-12;
    let out_of_range = v < -slack || v > 1.0 + slack;
    Evaluation { value: v.clamp(0.0, 1.0), clamped: clamped || out_of_range }
}

/// The limit of `P(M ≤ u(x2), M^δ ≤ u^δ(y2), m ≤ v(x1), m^δ ≤ v^δ(y1))`.
pub fn evaluate(p: &LimitParams, x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Evaluation> {
    p.validate()?;
    let flag = Cell::new(false);
    let c = corrections(p, x1, y1, x2, y2, &flag);
    let root = (2.0 * p.r).sqrt();
    let v = expect_normal(|z| {
        let s = root * z;
        let b = min_bracket(p, x1, y1, s, &c);
        if b == 0.0 {
            return 0.0;
        }
        b * max_factor(p, x2, y2, s, &c)
    });
    Ok(finish(v, flag.get()))
}

pub fn joint_cdf(p: &LimitParams, x1: f64, y1: f64, x2: f64, y2: f64) -> Result<f64> {
    Ok(evaluate(p, x1, y1, x2, y2)?.value)
}

/// `∫ max factor dΦ`, the limit as `x1, y1 → ∞` of the joint law.
pub fn marginal_max_cdf(p: &LimitParams, x2: f64, y2: f64) -> Result<f64> {
    p.validate()?;
    let flag = Cell::new(false);
    let c = corrections(p, f64::INFINITY, f64::INFINITY, x2, y2, &flag);
    let root = (2.0 * p.r).sqrt();
    Ok(finish(expect_normal(|z| max_factor(p, x2, y2, root * z, &c)), flag.get()).value)
}

/// `∫ min bracket dΦ`, the limit as `x2, y2 → ∞`.
pub fn marginal_min_cdf(p: &LimitParams, x1: f64, y1: f64) -> Result<f64> {
    p.validate()?;
    let flag = Cell::new(false);
    let c = corrections(p, x1, y1, f64::INFINITY, f64::INFINITY, &flag);
    let root = (2.0 * p.r).sqrt();
    Ok(finish(expect_normal(|z| min_bracket(p, x1, y1, root * z, &c)), flag.get()).value)
}

/// The limit of `P(m > v(x1), m^δ > v^δ(y1), M ≤ u(x2), M^δ ≤ u^δ(y2))`, by
/// inclusion–exclusion over the minima events.
pub fn band_probability(p: &LimitParams, x1: f64, y1: f64, x2: f64, y2: f64) -> Result<f64> {
    let inf = f64::INFINITY;
    let v = joint_cdf(p, inf, inf, x2, y2)? - joint_cdf(p, x1, inf, x2, y2)? - joint_cdf(p, inf, y1, x2, y2)?
        + joint_cdf(p, x1, y1, x2, y2)?;
    Ok(v.clamp(0.0, 1.0))
}

/// Largest `|joint − max part · min part|` over `args`, where both parts are
/// taken at `z = 0`. Only meaningful, and only accepted, at `r = 0`.
pub fn check_factorization_r0(p: &LimitParams, args: &[[f64; 4]]) -> Result<f64> {
    if p.r != 0.0 {
        return arg_err(format!("factorization holds at r = 0 only, got r = {}", p.r));
    }
    p.validate()?;
    let mut worst = 0.0f64;
    for &[x1, y1, x2, y2] in args {
        let flag = Cell::new(false);
        let c = corrections(p, x1, y1, x2, y2, &flag);
        let product = min_bracket(p, x1, y1, 0.0, &c) * max_factor(p, x2, y2, 0.0, &c);
        worst = worst.max((joint_cdf(p, x1, y1, x2, y2)? - product).abs());
    }
    Ok(worst)
}

/// All `k^4` tuples over `values`.
pub fn argument_grid(values: &[f64]) -> Vec<[f64; 4]> {
    let mut out = Vec::with_capacity(values.len().pow(4));
    for &a in values {
        for &b in values {
            for &c in values {
                for &d in values {
                    out.push([a, b, c, d]);
                }
            }
        }
    }
    out
}
