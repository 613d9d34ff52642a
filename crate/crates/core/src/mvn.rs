//! Orthant and exceedance probabilities of small Gaussian vectors.
//!
//! An orthant probability `P(X_i > b_i, i = 1..k)` is rewritten with the
//! separation-of-variables transform of Genz as an integral over the unit cube
//! of dimension `k − 1` and evaluated with tensor Gauss–Legendre rules whose
//! order is doubled until two consecutive values agree.

use crate::error::{arg_err, Error, Result};
use crate::quadrature::GaussRule;
use crate::special::{norm_cdf, norm_inv, norm_sf};

pub const MAX_DIM: usize = 6;
/// Budget of integrand evaluations for one orthant.
pub const MAX_EVALUATIONS: usize = 4_000_000;

/// Largest Gauss–Legendre order per axis; node computation is quadratic in it.
pub const MAX_ORDER: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthantValue {
    pub value: f64,
    /// Difference between the last two rule orders.
    pub error: f64,
    pub order: usize,
}

fn cholesky(cov: &[f64], k: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for j in 0..k {
        let mut d = cov[j * k + j];
        for p in 0..j {
            d -= l[j * k + p] * l[j * k + p];
        }
        if d <= 1e-14 * cov[j * k + j] {
            return Err(Error::Simulation("orthant covariance is singular".into()));
        }
        let djj = d.sqrt();
        l[j * k + j] = djj;
        for i in j + 1..k {
            let mut s = cov[i * k + j];
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p];
            }
            l[i * k + j] = s / djj;
        }
    }
    Ok(l)
}

/// `P(X > b)` componentwise for `X ~ N(0, cov)` with `cov` row-major `k × k`.
pub fn orthant_probability(cov: &[f64], lower: &[f64], rel_tol: f64) -> Result<OrthantValue> {
    let k = lower.len();
    if k == 0 || k > MAX_DIM || cov.len() != k * k {
        return arg_err(format!("orthant dimension must be 1..={MAX_DIM} with a matching covariance"));
    }
    if k == 1 {
        let s = cov[0].sqrt();
        return Ok(OrthantValue { value: norm_sf(lower[0] / s), error: 0.0, order: 0 });
    }
    // P(X > b) = P(−X < −b) and −X has the same covariance.
    let c: Vec<f64> = lower.iter().map(|b| -b).collect();
    let l = cholesky(cov, k)?;
    let integrand = |w: &[f64]| -> f64 {
        let mut y = [0.0; MAX_DIM];
        let mut f = 1.0;
        for i in 0..k {
            let mut t = c[i];
            for p in 0..i {
                t -= l[i * k + p] * y[p];
            }
            let e = norm_cdf(t / l[i * k + i]);
            f *= e;
            if f == 0.0 {
                return 0.0;
            }
            if i + 1 < k {
                y[i] = norm_inv((w[i] * e).max(f64::MIN_POSITIVE));
            }
        }
        f
    };
    let dims = k - 1;
    let mut previous: Option<f64> = None;
    let mut order = 4usize;
    loop {
        let rule = GaussRule::legendre_on(order, 0.0, 1.0);
        let value = tensor(&rule, dims, &integrand);
        if let Some(prev) = previous {
            let error = (value - prev).abs();
            let next = (2 * order).pow(dims as u32);
            if error <= rel_tol * value.abs() || next > MAX_EVALUATIONS || 2 * order > MAX_ORDER {
                return Ok(OrthantValue { value, error, order });
            }
        }
        previous = Some(value);
        order *= 2;
    }
}

fn tensor<F: Fn(&[f64]) -> f64>(rule: &GaussRule, dims: usize, f: &F) -> f64 {
    let m = rule.nodes.len();
    let total = m.pow(dims as u32);
    let mut w = vec![0.0; dims];
    let mut acc = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        let mut weight = 1.0;
        for slot in w.iter_mut() {
            let j = rem % m;
            rem /= m;
            *slot = rule.nodes[j];
            weight *= rule.weights[j];
        }
        acc += weight * f(&w);
    }
    acc
}

/// `P(max_i X_i > u)` by inclusion–exclusion over all nonempty subsets.
pub fn exceedance_probability(cov: &[f64], n: usize, u: f64) -> Result<f64> {
    if n == 0 || n > MAX_DIM || cov.len() != n * n {
        return arg_err(format!("exceedance needs 1..={MAX_DIM} points with a matching covariance"));
    }
    let mut total = 0.0;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let k = idx.len();
        let sub: Vec<f64> = idx.iter().flat_map(|&i| idx.iter().map(move |&j| cov[i * n + j])).collect();
        let p = orthant_probability(&sub, &vec![u; k], 1e-10)?.value;
        total += if k % 2 == 1 { p } else { -p };
    }
    Ok(total)
}
