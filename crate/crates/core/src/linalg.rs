//! Dense symmetric factorizations used by the fallback sampler, the
//! semidefiniteness checks and the orthant integrator.

use crate::error::{Error, Result};

/// Lower-triangular factor `L` of a symmetric positive semidefinite matrix,
/// stored row-major as an `n × n` array.
#[derive(Debug, Clone)]
pub struct LowerFactor {
    pub n: usize,
    pub data: Vec<f64>,
}

impl LowerFactor {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// y = L·z
    pub fn mul_vec(&self, z: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let row = &self.data[i * self.n..i * self.n + i + 1];
            out[i] = row.iter().zip(z).map(|(l, z)| l * z).sum();
        }
    }
}

/// Cholesky factorization that tolerates rank deficiency.
///
/// A pivot in `[-tol, tol]` (relative to the largest diagonal entry) zeroes its
/// column; a pivot below `-tol` means the matrix is not semidefinite and is
/// reported with its value.
pub fn semidefinite_cholesky(a: &[f64], n: usize, tol: f64) -> Result<LowerFactor> {
    if a.len() != n * n {
        return Err(Error::Argument(format!("expected {}×{} matrix", n, n)));
    }
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d < -tol * scale {
            return Err(Error::Simulation(format!(
                "matrix is not positive semidefinite: pivot {} at column {}",
                d, j
            )));
        }
        if d <= tol * scale {
            continue;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Ok(LowerFactor { n, data: l })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn factor_reconstructs_matrix() {
        let a = [4.0, 2.0, 0.4, 2.0, 2.0, 0.5, 0.4, 0.5, 3.0];
        let f = semidefinite_cholesky(&a, 3, 1e-12).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| f.get(i, k) * f.get(j, k)).sum();
                assert_relative_eq!(s, a[i * 3 + j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn singular_matrix_is_accepted() {
        // rank one
        let a = [1.0, 1.0, 1.0, 1.0];
        let f = semidefinite_cholesky(&a, 2, 1e-10).unwrap();
        assert_eq!(f.get(1, 1), 0.0);
        assert_relative_eq!(f.get(1, 0), 1.0);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = [1.0, 2.0, 2.0, 1.0];
        assert!(semidefinite_cholesky(&a, 2, 1e-10).is_err());
    }
}
