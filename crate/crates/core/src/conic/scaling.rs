//! Ruiz-style diagonal equilibration.
//!
//! The scaled problem is `Â = diag(e) A diag(d)`, `b̂ = e ∘ b`, `ĉ = γ d ∘ c`.
//! Rows belonging to one second-order block share a single factor so the
//! scaled slack stays in the same cone.

use super::cone::{ConeBlock, ConeSpec};
use crate::linalg::Matrix;

const MIN_NORM: f64 = 1e-4;
const MAX_NORM: f64 = 1e4;
const MIN_FACTOR: f64 = 1e-4;
const MAX_FACTOR: f64 = 1e4;

#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    /// Column factors (length n).
    pub d: Vec<f64>,
    /// Row factors (length m).
    pub e: Vec<f64>,
    /// Cost factor γ.
    pub cost: f64,
}

pub(crate) struct Scaled {
    pub a: Matrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub scaling: Scaling,
}

fn clamp_norm(v: f64) -> f64 {
    if v < MIN_NORM {
        1.0
    } else {
        v.min(MAX_NORM)
    }
}

pub(crate) fn equilibrate(
    a: &Matrix,
    b: &[f64],
    c: &[f64],
    cones: &ConeSpec,
    iters: usize,
) -> Scaled {
    let (m, n) = (a.rows(), a.cols());
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    let mut work = a.clone();

    let mut col_norm = vec![0.0f64; n];
    let mut row_norm = vec![0.0f64; m];
    for _ in 0..iters {
        col_norm.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..m {
            let row = work.row(r);
            row_norm[r] = row.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()));
            for (cn, x) in col_norm.iter_mut().zip(row) {
                *cn = cn.max(x.abs());
            }
        }
        for (block, start) in cones.offsets() {
            if let ConeBlock::SecondOrder(dim) = block {
                let mean = row_norm[start..start + dim].iter().sum::<f64>() / dim as f64;
                row_norm[start..start + dim]
                    .iter_mut()
                    .for_each(|v| *v = mean);
            }
        }
        let col_step: Vec<f64> = col_norm
            .iter()
            .map(|&v| 1.0 / clamp_norm(v).sqrt())
            .collect();
        let row_step: Vec<f64> = row_norm
            .iter()
            .map(|&v| 1.0 / clamp_norm(v).sqrt())
            .collect();
        for (r, &rs) in row_step.iter().enumerate() {
            let new_e = (e[r] * rs).clamp(MIN_FACTOR, MAX_FACTOR);
            let rs = new_e / e[r];
            e[r] = new_e;
            for (x, cs) in work.row_mut(r).iter_mut().zip(&col_step) {
                *x *= rs * cs;
            }
        }
        for (dj, cs) in d.iter_mut().zip(&col_step) {
            *dj = (*dj * cs).clamp(MIN_FACTOR, MAX_FACTOR);
        }
    }

    // Rebuild from the original data so the clamping above does not leave
    // `work` inconsistent with the recorded factors.
    let mut scaled = a.clone();
    for r in 0..m {
        for (j, x) in scaled.row_mut(r).iter_mut().enumerate() {
            *x *= e[r] * d[j];
        }
    }
    let b_hat: Vec<f64> = b.iter().zip(&e).map(|(v, s)| v * s).collect();
    let mut c_hat: Vec<f64> = c.iter().zip(&d).map(|(v, s)| v * s).collect();
    let c_inf = c_hat.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()));
    let cost = if c_inf < MIN_NORM {
        1.0
    } else {
        1.0 / c_inf.min(MAX_NORM)
    };
    c_hat.iter_mut().for_each(|v| *v *= cost);

    Scaled {
        a: scaled,
        b: b_hat,
        c: c_hat,
        scaling: Scaling { d, e, cost },
    }
}

impl Scaling {
    pub fn identity(m: usize, n: usize) -> Self {
        Scaling {
            d: vec![1.0; n],
            e: vec![1.0; m],
            cost: 1.0,
        }
    }

    pub fn unscale_x(&self, x_hat: &[f64], out: &mut [f64]) {
        for ((o, x), d) in out.iter_mut().zip(x_hat).zip(&self.d) {
            *o = x * d;
        }
    }

    pub fn unscale_s(&self, s_hat: &[f64], out: &mut [f64]) {
        for ((o, s), e) in out.iter_mut().zip(s_hat).zip(&self.e) {
            *o = s / e;
        }
    }

    pub fn unscale_y(&self, y_hat: &[f64], out: &mut [f64]) {
        for ((o, y), e) in out.iter_mut().zip(y_hat).zip(&self.e) {
            *o = y * e / self.cost;
        }
    }
}
