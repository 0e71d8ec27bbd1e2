//! Active-set refinement of a converged ADMM iterate.
//!
//! Constraints are classified from the complementary pair `(s, y)`: zero rows
//! and nonnegative rows with `y > s` become equalities, a second-order block
//! with an interior dual forces `s = 0`, and a block where both sit on the
//! boundary keeps `s₀ = ‖s̄‖`. The iterate is then moved by the smallest
//! correction satisfying those equations, linearizing the boundary condition
//! in a few Gauss-Newton steps.

use super::cone::{ConeBlock, ConeSpec};
use crate::linalg::{dot, norm2_unchecked, Cholesky, Matrix};

const INACTIVE_RATIO: f64 = 1e-3;
const INTERIOR_RATIO: f64 = 1e-3;
const REGULARIZATION: f64 = 1e-9;
const REFINE_STEPS: usize = 4;
const NEWTON_STEPS: usize = 3;
const MIN_TAIL: f64 = 1e-12;

enum Active {
    Row(usize),
    /// Second-order block `start..end` held on its boundary.
    Boundary(usize, usize),
}

/// Returns the polished `(x, s)`, or `None` when the active system cannot be
/// factored.
pub(crate) fn polish(
    a: &Matrix,
    b: &[f64],
    cones: &ConeSpec,
    x: &[f64],
    s: &[f64],
    y: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut active = Vec::new();
    let mut boundary = false;
    for (block, start) in cones.offsets() {
        let range = start..start + block.dim();
        match block {
            ConeBlock::Zero(_) => active.extend(range.map(Active::Row)),
            ConeBlock::NonNeg(_) => active.extend(range.filter(|&i| y[i] > s[i]).map(Active::Row)),
            ConeBlock::SecondOrder(_) => {
                let (ys, ss) = (&y[range.clone()], &s[range.clone()]);
                let (yn, sn) = (norm2_unchecked(ys), norm2_unchecked(ss));
                if yn <= INACTIVE_RATIO * sn {
                    continue;
                }
                if ys[0] - norm2_unchecked(&ys[1..]) > INTERIOR_RATIO * yn
                    || norm2_unchecked(&ss[1..]) <= MIN_TAIL
                {
                    active.extend(range.map(Active::Row));
                } else {
                    boundary = true;
                    active.push(Active::Boundary(range.start, range.end));
                }
            }
        }
    }
    if active.is_empty() {
        return None;
    }

    let mut xp = x.to_vec();
    let steps = if boundary { NEWTON_STEPS } else { 1 };
    for _ in 0..steps {
        let (c, r) = linearize(a, b, &active, &xp)?;
        let dx = min_norm_solve(&c, &r, a.cols())?;
        xp.iter_mut().zip(&dx).for_each(|(v, d)| *v += d);
    }

    let mut sp: Vec<f64> = (0..b.len()).map(|i| b[i] - dot(a.row(i), &xp)).collect();
    cones.project_in_place(&mut sp);
    Some((xp, sp))
}

/// Rows `C` and right-hand side `r` of the active equations `C dx = r` at `x`.
fn linearize(a: &Matrix, b: &[f64], active: &[Active], x: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = a.cols();
    let mut c = Vec::with_capacity(active.len() * n);
    let mut r = Vec::with_capacity(active.len());
    for eq in active {
        match *eq {
            Active::Row(i) => {
                c.extend_from_slice(a.row(i));
                r.push(b[i] - dot(a.row(i), x));
            }
            Active::Boundary(start, end) => {
                // f(x) = (b₀ − A₀x) − ‖b̄ − Āx‖, with gradient −A₀ + ûᵀĀ.
                let tail: Vec<f64> = (start + 1..end).map(|i| b[i] - dot(a.row(i), x)).collect();
                let tn = norm2_unchecked(&tail);
                if tn <= MIN_TAIL {
                    return None;
                }
                let mut row = a.row(start).to_vec();
                for (k, i) in (start + 1..end).enumerate() {
                    let u = tail[k] / tn;
                    row.iter_mut().zip(a.row(i)).for_each(|(g, v)| *g -= u * v);
                }
                c.extend_from_slice(&row);
                r.push(b[start] - dot(a.row(start), x) - tn);
            }
        }
    }
    Some((c, r))
}

/// Minimum-norm solution of `C dx = r` through `(CCᵀ + εI) w = r`,
/// `dx = Cᵀw`, with iterative refinement.
fn min_norm_solve(c: &[f64], r: &[f64], n: usize) -> Option<Vec<f64>> {
    let p = r.len();
    let row = |k: usize| &c[k * n..(k + 1) * n];
    let mut g = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let v = dot(row(i), row(j));
            g[i * p + j] = v;
            g[j * p + i] = v;
        }
    }
    let scale = (0..p).map(|i| g[i * p + i]).fold(0.0, f64::max).max(1.0);
    for i in 0..p {
        g[i * p + i] += REGULARIZATION * scale;
    }
    let chol = Cholesky::factor(&Matrix::new(p, p, g).ok()?).ok()?;

    let mut dx = vec![0.0; n];
    let mut resid = r.to_vec();
    for _ in 0..REFINE_STEPS {
        chol.solve_in_place(&mut resid);
        for (k, w) in resid.iter().enumerate() {
            dx.iter_mut().zip(row(k)).for_each(|(d, v)| *d += w * v);
        }
        for k in 0..p {
            resid[k] = r[k] - dot(row(k), &dx);
        }
    }
    Some(dx)
}
