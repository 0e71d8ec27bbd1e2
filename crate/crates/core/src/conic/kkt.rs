//! The scaled constraint operator and the cached solve with `σI + ÂᵀRÂ`.
//!
//! Rows of `Â` with a single nonzero (the `p, q ≥ 0` rows, epigraph heads)
//! only add to the diagonal of `ÂᵀRÂ`. When the remaining dense rows are few
//! compared to the number of variables, the system is solved through the
//! Woodbury identity
//!
//! ```text
//! (Λ + UᵀR_uU)⁻¹ = Λ⁻¹ − Λ⁻¹Uᵀ(R_u⁻¹ + UΛ⁻¹Uᵀ)⁻¹UΛ⁻¹
//! ```
//!
//! with a small Cholesky factor; otherwise `ÂᵀRÂ` is formed and factored
//! directly.

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};

/// `Â` split into single-entry rows and a dense remainder.
pub(crate) struct Operator {
    cols: usize,
    singletons: Vec<(usize, usize, f64)>,
    dense_rows: Vec<usize>,
    dense: Matrix,
}

impl Operator {
    pub fn new(a: &Matrix) -> Self {
        let cols = a.cols();
        let mut singletons = Vec::new();
        let mut dense_rows = Vec::new();
        for r in 0..a.rows() {
            let row = a.row(r);
            let mut nz = row.iter().enumerate().filter(|(_, v)| **v != 0.0);
            match (nz.next(), nz.next()) {
                (None, _) => {}
                (Some((c, &v)), None) => singletons.push((r, c, v)),
                _ => dense_rows.push(r),
            }
        }
        let mut data = Vec::with_capacity(dense_rows.len() * cols);
        for &r in &dense_rows {
            data.extend_from_slice(a.row(r));
        }
        let dense =
            Matrix::new(dense_rows.len(), cols, data).expect("rows copied from a valid matrix");
        Operator {
            cols,
            singletons,
            dense_rows,
            dense,
        }
    }

    /// `out = Âx`
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(r, c, v) in &self.singletons {
            out[r] = v * x[c];
        }
        for (k, &r) in self.dense_rows.iter().enumerate() {
            out[r] = dot(self.dense.row(k), x);
        }
    }

    /// `out = Âᵀy`
    pub fn apply_t(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(r, c, v) in &self.singletons {
            out[c] += v * y[r];
        }
        for (k, &r) in self.dense_rows.iter().enumerate() {
            let w = y[r];
            if w != 0.0 {
                for (o, &a) in out.iter_mut().zip(self.dense.row(k)) {
                    *o += a * w;
                }
            }
        }
    }
}

enum Factor {
    Direct(Cholesky),
    Woodbury {
        lambda_inv: Vec<f64>,
        capacitance: Cholesky,
    },
}

/// Cached factorization of `σI + ÂᵀRÂ` for the current penalty vector.
pub(crate) struct LinearSystem {
    factor: Factor,
    scratch: Vec<f64>,
}

impl LinearSystem {
    pub fn factor(op: &Operator, rho: &[f64], sigma: f64) -> Result<Self> {
        let n = op.cols;
        let mut diag = vec![sigma; n];
        let mut covered = vec![false; n];
        for &(r, c, v) in &op.singletons {
            diag[c] += rho[r] * v * v;
            covered[c] = true;
        }
        let k = op.dense_rows.len();
        let use_woodbury = 2 * k < n && covered.iter().all(|&c| c);
        let factor = if use_woodbury {
            let lambda_inv: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
            let mut cap = Matrix::zeros(k, k);
            for i in 0..k {
                let ri = op.dense.row(i);
                for j in 0..=i {
                    let rj = op.dense.row(j);
                    let mut v: f64 = ri
                        .iter()
                        .zip(rj)
                        .zip(&lambda_inv)
                        .map(|((a, b), l)| a * b * l)
                        .sum();
                    if i == j {
                        v += 1.0 / rho[op.dense_rows[i]];
                    }
                    cap.set(i, j, v);
                }
            }
            Factor::Woodbury {
                lambda_inv,
                capacitance: Cholesky::factor(&cap).map_err(factor_error)?,
            }
        } else {
            let mut kkt = Matrix::diag(&diag)?;
            for (i, &r) in op.dense_rows.iter().enumerate() {
                let row = op.dense.row(i);
                let w = rho[r];
                for (p, &ap) in row.iter().enumerate() {
                    if ap == 0.0 {
                        continue;
                    }
                    let scaled = w * ap;
                    for (q, &aq) in row.iter().enumerate().take(p + 1) {
                        kkt.set(p, q, kkt.get(p, q) + scaled * aq);
                    }
                }
            }
            Factor::Direct(Cholesky::factor(&kkt).map_err(factor_error)?)
        };
        Ok(LinearSystem {
            factor,
            scratch: vec![0.0; k],
        })
    }

    /// Overwrites `rhs` with the solution.
    pub fn solve(&mut self, op: &Operator, rhs: &mut [f64]) {
        match &self.factor {
            Factor::Direct(chol) => chol.solve_in_place(rhs),
            Factor::Woodbury {
                lambda_inv,
                capacitance,
            } => {
                rhs.iter_mut().zip(lambda_inv).for_each(|(r, l)| *r *= l);
                for (k, w) in self.scratch.iter_mut().enumerate() {
                    *w = dot(op.dense.row(k), rhs);
                }
                capacitance.solve_in_place(&mut self.scratch);
                for (k, &w) in self.scratch.iter().enumerate() {
                    for ((r, &a), l) in rhs.iter_mut().zip(op.dense.row(k)).zip(lambda_inv) {
                        *r -= l * a * w;
                    }
                }
            }
        }
    }

    #[cfg(test)]
    fn is_woodbury(&self) -> bool {
        matches!(self.factor, Factor::Woodbury { .. })
    }
}

fn factor_error(e: Error) -> Error {
    Error::NumericalFailure(format!("linear system factorization failed: {e}"))
}
