//! Sparse recovery methods.
//!
//! The convex methods are compiled to standard-form cone programs over the
//! split `θ = p − q`, `p, q ≥ 0`:
//!
//! * basis pursuit: `min ‖θ‖₁ s.t. Bθ = y`
//! * anti-uncertainty operator: `min t s.t. ‖y − Bθ‖₂ ≤ √M δ t, ‖θ‖₁ ≤ t`,
//!   which equals `min_θ max(‖θ‖₁, ‖y − Bθ‖₂ / (√M δ))`
//! * Dantzig selector: `min ‖θ‖₁ s.t. ‖Bᵀ(y − Bθ)‖∞ ≤ λ`
//!
//! OMP runs directly on `B`.

use std::fmt;

use crate::conic::{solve_conic, ConeBlock, ConeSpec, ConicProblem, SolveStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm1_unchecked, norm2_unchecked, Cholesky, Matrix, Vector};

pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmpStop {
    Sparsity(usize),
    ResidualTol(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecoveryMethod {
    Bp,
    Auo { delta: f64 },
    Ds { lambda: f64 },
    Omp(OmpStop),
}

impl RecoveryMethod {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RecoveryMethod::Bp => Ok(()),
            RecoveryMethod::Auo { delta } if !(delta > 0.0 && delta.is_finite()) => {
                Err(Error::InvalidParameter(format!(
                    "AUO needs delta > 0 (use BP for delta = 0), got {delta}"
                )))
            }
            RecoveryMethod::Ds { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => Err(
                Error::InvalidParameter(format!("DS needs lambda >= 0, got {lambda}")),
            ),
            RecoveryMethod::Omp(OmpStop::Sparsity(0)) => {
                Err(Error::InvalidParameter("OMP sparsity must be >= 1".into()))
            }
            RecoveryMethod::Omp(OmpStop::ResidualTol(tol)) if !(tol >= 0.0 && tol.is_finite()) => {
                Err(Error::InvalidParameter(format!(
                    "OMP residual tolerance {tol}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Short lowercase name used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            RecoveryMethod::Bp => "bp",
            RecoveryMethod::Auo { .. } => "auo",
            RecoveryMethod::Ds { .. } => "ds",
            RecoveryMethod::Omp(_) => "omp",
        }
    }
}

impl fmt::Display for RecoveryMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecoveryMethod::Bp => write!(f, "bp"),
            RecoveryMethod::Auo { delta } => write!(f, "auo(delta={delta})"),
            RecoveryMethod::Ds { lambda } => write!(f, "ds(lambda={lambda})"),
            RecoveryMethod::Omp(OmpStop::Sparsity(k)) => write!(f, "omp(sparsity={k})"),
            RecoveryMethod::Omp(OmpStop::ResidualTol(t)) => write!(f, "omp(residual_tol={t})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Bp,
    Auo,
    Ds,
}

/// A compiled cone program plus what is needed to read θ back out of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Compiled {
    pub problem: ConicProblem,
    pub kind: ProblemKind,
    pub signal_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub theta_hat: Vector,
    /// Epigraph variable of the AUO program; `None` for other methods.
    pub t_value: Option<f64>,
    /// `‖θ̂‖₁`, recomputed from the estimate.
    pub objective: f64,
    pub solver_status: SolveStatus,
    pub iterations: usize,
    pub support: Vec<usize>,
}

fn check_dims(op: &'static str, b: &Matrix, y: &[f64]) -> Result<()> {
    if b.rows() != y.len() {
        return Err(Error::dim(
            op,
            format!(
                "B is {}x{} but y has length {}",
                b.rows(),
                b.cols(),
                y.len()
            ),
        ));
    }
    if b.cols() == 0 || b.rows() == 0 {
        return Err(Error::dim(op, "empty measurement matrix"));
    }
    Ok(())
}

/// Writes `[B, −B]` into columns `0..2N` of row `dst_row` scaled by `sign`.
fn put_split_row(a: &mut Matrix, dst_row: usize, src: &[f64], sign: f64) {
    let n = src.len();
    let row = a.row_mut(dst_row);
    for (j, &v) in src.iter().enumerate() {
        row[j] = sign * v;
        row[n + j] = -sign * v;
    }
}

/// Appends the `p, q ≥ 0` rows (`−p + s = 0`) starting at `first_row`.
fn put_nonneg_rows(a: &mut Matrix, first_row: usize, n2: usize) {
    for j in 0..n2 {
        a.set(first_row + j, j, -1.0);
    }
}

pub fn compile_bp(b: &Matrix, y: &[f64]) -> Result<Compiled> {
    check_dims("compile_bp", b, y)?;
    let (m, n) = (b.rows(), b.cols());
    let rows = m + 2 * n;
    let mut a = Matrix::zeros(rows, 2 * n);
    for r in 0..m {
        put_split_row(&mut a, r, b.row(r), 1.0);
    }
    put_nonneg_rows(&mut a, m, 2 * n);
    let mut rhs = vec![0.0; rows];
    rhs[..m].copy_from_slice(y);
    let problem = ConicProblem::new(
        Vector::new(vec![1.0; 2 * n])?,
        a,
        Vector::new(rhs)?,
        ConeSpec::new(vec![ConeBlock::Zero(m), ConeBlock::NonNeg(2 * n)])?,
    )?;
    Ok(Compiled {
        problem,
        kind: ProblemKind::Bp,
        signal_len: n,
    })
}

/// Variables `(p, q, t)`; rows: the ℓ1 epigraph row, the `(√M δ t, y − Bθ)`
/// second-order block, then `p, q ≥ 0`.
pub fn compile_auo(b: &Matrix, y: &[f64], delta: f64) -> Result<Compiled> {
    RecoveryMethod::Auo { delta }.validate()?;
    check_dims("compile_auo", b, y)?;
    let (m, n) = (b.rows(), b.cols());
    let vars = 2 * n + 1;
    let t_col = 2 * n;
    let rows = 1 + (m + 1) + 2 * n;
    let mut a = Matrix::zeros(rows, vars);
    let mut rhs = vec![0.0; rows];

    // t − 1ᵀ(p + q) ≥ 0
    for j in 0..2 * n {
        a.set(0, j, 1.0);
    }
    a.set(0, t_col, -1.0);

    // (√M δ t, y − B(p − q)) ∈ SOC
    a.set(1, t_col, -(m as f64).sqrt() * delta);
    for r in 0..m {
        put_split_row(&mut a, 2 + r, b.row(r), 1.0);
        rhs[2 + r] = y[r];
    }

    put_nonneg_rows(&mut a, m + 2, 2 * n);

    let mut c = vec![0.0; vars];
    c[t_col] = 1.0;
    let problem = ConicProblem::new(
        Vector::new(c)?,
        a,
        Vector::new(rhs)?,
        ConeSpec::new(vec![
            ConeBlock::NonNeg(1),
            ConeBlock::SecondOrder(m + 1),
            ConeBlock::NonNeg(2 * n),
        ])?,
    )?;
    Ok(Compiled {
        problem,
        kind: ProblemKind::Auo,
        signal_len: n,
    })
}

/// Rows: `λ − Bᵀy + BᵀBθ ≥ 0`, `λ + Bᵀy − BᵀBθ ≥ 0`, then `p, q ≥ 0`.
pub fn compile_ds(b: &Matrix, y: &[f64], lambda: f64) -> Result<Compiled> {
    RecoveryMethod::Ds { lambda }.validate()?;
    check_dims("compile_ds", b, y)?;
    let n = b.cols();
    let bt = b.transpose();
    let mut gram = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = dot(bt.row(i), bt.row(j));
            gram.set(i, j, v);
            gram.set(j, i, v);
        }
    }
    let mut bty = vec![0.0; n];
    b.mul_t_vec_into(y, &mut bty);

    let rows = 4 * n;
    let mut a = Matrix::zeros(rows, 2 * n);
    let mut rhs = vec![0.0; rows];
    for i in 0..n {
        put_split_row(&mut a, i, gram.row(i), -1.0);
        rhs[i] = lambda - bty[i];
        put_split_row(&mut a, n + i, gram.row(i), 1.0);
        rhs[n + i] = lambda + bty[i];
    }
    put_nonneg_rows(&mut a, 2 * n, 2 * n);
    let problem = ConicProblem::new(
        Vector::new(vec![1.0; 2 * n])?,
        a,
        Vector::new(rhs)?,
        ConeSpec::new(vec![ConeBlock::NonNeg(2 * n), ConeBlock::NonNeg(2 * n)])?,
    )?;
    Ok(Compiled {
        problem,
        kind: ProblemKind::Ds,
        signal_len: n,
    })
}

/// Reads `θ = p − q` (and `t` for AUO) out of a primal solution vector.
pub fn decompile(
    record: &Compiled,
    x: &[f64],
    status: SolveStatus,
    iterations: usize,
    tau: f64,
) -> Result<RecoveryResult> {
    let n = record.signal_len;
    let expected = match record.kind {
        ProblemKind::Auo => 2 * n + 1,
        ProblemKind::Bp | ProblemKind::Ds => 2 * n,
    };
    if x.len() != expected {
        return Err(Error::dim(
            "decompile",
            format!(
                "solution has length {}, compiled layout needs {expected}",
                x.len()
            ),
        ));
    }
    let theta: Vec<f64> = (0..n).map(|j| x[j] - x[n + j]).collect();
    let theta = Vector::new(theta)?;
    let t_value = (record.kind == ProblemKind::Auo).then(|| x[2 * n]);
    let support = support_detect(&theta, tau)?;
    Ok(RecoveryResult {
        objective: norm1_unchecked(&theta),
        theta_hat: theta,
        t_value,
        solver_status: status,
        iterations,
        support,
    })
}

/// Greedy recovery with least-squares refits on the active set.
///
/// The next atom maximizes `|b_jᵀ r| / ‖b_j‖₂`; ties go to the lowest index.
pub fn omp(b: &Matrix, y: &[f64], stop: OmpStop, tau: f64) -> Result<RecoveryResult> {
    RecoveryMethod::Omp(stop).validate()?;
    check_dims("omp", b, y)?;
    let (m, n) = (b.rows(), b.cols());
    let max_atoms = match stop {
        OmpStop::Sparsity(k) if k > m => {
            return Err(Error::InvalidParameter(format!(
                "OMP sparsity {k} exceeds measurement count {m}"
            )))
        }
        OmpStop::Sparsity(k) => k.min(n),
        OmpStop::ResidualTol(_) => m.min(n),
    };
    let tol = match stop {
        OmpStop::ResidualTol(t) => t,
        OmpStop::Sparsity(_) => 0.0,
    };

    let bt = b.transpose();
    let col_norms: Vec<f64> = (0..n).map(|j| norm2_unchecked(bt.row(j))).collect();
    if col_norms.iter().all(|&c| c == 0.0) {
        return Err(Error::InvalidParameter("all columns of B are zero".into()));
    }

    let mut active: Vec<usize> = Vec::new();
    let mut coeffs: Vec<f64> = Vec::new();
    let mut residual = y.to_vec();
    let mut in_active = vec![false; n];

    while active.len() < max_atoms && norm2_unchecked(&residual) > tol {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if in_active[j] || col_norms[j] == 0.0 {
                continue;
            }
            let score = dot(bt.row(j), &residual).abs() / col_norms[j];
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let Some((j, score)) = best else { break };
        if score == 0.0 {
            break;
        }
        active.push(j);
        in_active[j] = true;

        let k = active.len();
        let mut gram = Matrix::zeros(k, k);
        let mut rhs = vec![0.0; k];
        for (r, &ar) in active.iter().enumerate() {
            rhs[r] = dot(bt.row(ar), y);
            for (c, &ac) in active.iter().enumerate().take(r + 1) {
                gram.set(r, c, dot(bt.row(ar), bt.row(ac)));
            }
        }
        let factor =
            Cholesky::factor(&gram).map_err(|_| Error::DegenerateDictionary { column: j })?;
        factor.solve_in_place(&mut rhs);
        coeffs = rhs;

        residual.copy_from_slice(y);
        for (&col, &w) in active.iter().zip(&coeffs) {
            for (r, res) in residual.iter_mut().enumerate() {
                *res -= w * b.get(r, col);
            }
        }
    }

    let mut theta = vec![0.0; n];
    for (&col, &w) in active.iter().zip(&coeffs) {
        theta[col] = w;
    }
    let theta = Vector::new(theta)?;
    let support = support_detect(&theta, tau)?;
    Ok(RecoveryResult {
        objective: norm1_unchecked(&theta),
        theta_hat: theta,
        t_value: None,
        solver_status: SolveStatus::Optimal,
        iterations: active.len(),
        support,
    })
}

/// Runs any method end to end.
pub fn recover(
    b: &Matrix,
    y: &[f64],
    method: &RecoveryMethod,
    settings: &SolverSettings,
    tau: f64,
) -> Result<RecoveryResult> {
    method.validate()?;
    let compiled = match *method {
        RecoveryMethod::Bp => compile_bp(b, y)?,
        RecoveryMethod::Auo { delta } => compile_auo(b, y, delta)?,
        RecoveryMethod::Ds { lambda } => compile_ds(b, y, lambda)?,
        RecoveryMethod::Omp(stop) => return omp(b, y, stop, tau),
    };
    let solution = solve_conic(&compiled.problem, settings)?;
    decompile(&compiled, &solution.x, solution.status, solution.iters, tau)
}

/// Both sides of `‖Vθ‖₂ ≤ √M δ ‖θ‖₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AucBound {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluates the anti-uncertainty bound for a perturbation `V` and signal θ.
///
/// `lhs = ‖Vθ‖₂`, which equals `‖y − Bθ‖₂` when `y = Aθ` and `B = A + V`.
pub fn auc_bound(v: &Matrix, theta: &[f64], delta: f64) -> Result<AucBound> {
    if v.cols() != theta.len() {
        return Err(Error::dim(
            "auc_bound",
            format!(
                "V is {}x{}, theta has length {}",
                v.rows(),
                v.cols(),
                theta.len()
            ),
        ));
    }
    let mut vt = vec![0.0; v.rows()];
    v.mul_vec_into(theta, &mut vt);
    let lhs = norm2_unchecked(&vt);
    let rhs = (v.rows() as f64).sqrt() * delta * norm1_unchecked(theta);
    Ok(AucBound {
        lhs,
        rhs,
        holds: lhs <= rhs,
    })
}

/// `{i : |θ_i| ≥ τ · max_j |θ_j|}`; empty for the zero vector.
pub fn support_detect(theta: &[f64], tau: f64) -> Result<Vec<usize>> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "support threshold must be in (0, 1), got {tau}"
        )));
    }
    let peak = theta.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if peak == 0.0 {
        return Ok(Vec::new());
    }
    let cut = tau * peak;
    Ok(theta
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() >= cut)
        .map(|(i, _)| i)
        .collect())
}
