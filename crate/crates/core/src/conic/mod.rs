//! Standard-form cone programs and a first-order splitting solver.
//!
//! Problems have the form
//!
//! ```text
//! minimize    cᵀx
//! subject to  Ax + s = b,  s ∈ K
//! ```
//!
//! where `K` is a product of zero, nonnegative and second-order cones. The
//! dual is `maximize −bᵀy s.t. Aᵀy + c = 0, y ∈ K*`.

mod cone;
mod kkt;
mod polish;
mod scaling;
mod solver;

pub use cone::{project_cone, ConeBlock, ConeSpec};
pub use solver::{solve_conic, solve_conic_traced};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2_unchecked, Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub c: Vector,
    pub a: Matrix,
    pub b: Vector,
    pub cones: ConeSpec,
}

impl ConicProblem {
    pub fn new(c: Vector, a: Matrix, b: Vector, cones: ConeSpec) -> Result<Self> {
        if a.cols() != c.len() || a.rows() != b.len() || cones.total_dim() != b.len() {
            return Err(Error::dim(
                "ConicProblem::new",
                format!(
                    "c: {}, A: {}x{}, b: {}, cone dim: {}",
                    c.len(),
                    a.rows(),
                    a.cols(),
                    b.len(),
                    cones.total_dim()
                ),
            ));
        }
        Ok(ConicProblem { c, a, b, cones })
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub eps_gap: f64,
    pub max_iters: usize,
    /// Over-relaxation α in (0, 2).
    pub over_relaxation: f64,
    /// Seeds the power iteration used to pick the initial step size.
    pub seed: u64,
    /// Initial penalty for inequality rows, relative to the scaled matrix norm.
    pub rho: f64,
    /// Proximal regularization on x.
    pub sigma: f64,
    /// Passes of diagonal equilibration; 0 disables scaling.
    pub scaling_iters: usize,
    /// Rebalance the penalty (and refactor) when primal and dual residuals
    /// drift apart.
    pub adaptive_rho: bool,
    /// Iterations between penalty updates when `adaptive_rho` is set.
    pub adapt_interval: usize,
    /// Iterations between convergence checks.
    pub check_interval: usize,
    /// On convergence, project the iterate onto the affine set of its active
    /// constraints and keep the result if it is more accurate.
    pub polish: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            eps_primal: 1e-6,
            eps_dual: 1e-6,
            eps_gap: 1e-6,
            max_iters: 50_000,
            over_relaxation: 1.5,
            seed: 0,
            rho: 1.0,
            sigma: 1e-6,
            scaling_iters: 15,
            adaptive_rho: true,
            adapt_interval: 1000,
            check_interval: 10,
            polish: true,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eps_primal", self.eps_primal),
            ("eps_dual", self.eps_dual),
            ("eps_gap", self.eps_gap),
            ("rho", self.rho),
            ("sigma", self.sigma),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        if !(self.over_relaxation > 0.0 && self.over_relaxation < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "over_relaxation must be in (0, 2), got {}",
                self.over_relaxation
            )));
        }
        if self.max_iters == 0 || self.check_interval == 0 || self.adapt_interval == 0 {
            return Err(Error::InvalidParameter(
                "max_iters, check_interval and adapt_interval must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Sets all three tolerances at once.
    pub fn with_tolerance(mut self, eps: f64) -> Self {
        self.eps_primal = eps;
        self.eps_dual = eps;
        self.eps_gap = eps;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    Infeasible,
    Unbounded,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "Optimal",
            SolveStatus::MaxIters => "MaxIters",
            SolveStatus::Infeasible => "Infeasible",
            SolveStatus::Unbounded => "Unbounded",
        };
        f.write_str(s)
    }
}

/// Normalized residuals:
///
/// * primal `‖Ax + s − b‖₂ / (1 + ‖b‖₂)`
/// * dual `‖Aᵀy + c‖₂ / (1 + ‖c‖₂)`
/// * gap `|cᵀx + bᵀy| / (1 + |cᵀx| + |bᵀy|)`
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

impl Residuals {
    pub fn within(&self, settings: &SolverSettings) -> bool {
        self.primal <= settings.eps_primal
            && self.dual <= settings.eps_dual
            && self.gap <= settings.eps_gap
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub x: Vector,
    pub s: Vector,
    pub dual: Vector,
    pub status: SolveStatus,
    pub iters: usize,
    pub residuals: Residuals,
}

impl ConicSolution {
    pub fn objective(&self, problem: &ConicProblem) -> f64 {
        dot(&problem.c, &self.x)
    }
}

pub(crate) fn residuals_raw(problem: &ConicProblem, x: &[f64], s: &[f64], y: &[f64]) -> Residuals {
    let mut ax = vec![0.0; problem.num_rows()];
    problem.a.mul_vec_into(x, &mut ax);
    for ((r, si), bi) in ax.iter_mut().zip(s).zip(problem.b.iter()) {
        *r += si - bi;
    }
    let mut aty = vec![0.0; problem.num_vars()];
    problem.a.mul_t_vec_into(y, &mut aty);
    for (r, ci) in aty.iter_mut().zip(problem.c.iter()) {
        *r += ci;
    }
    let cx = dot(&problem.c, x);
    let by = dot(&problem.b, y);
    Residuals {
        primal: norm2_unchecked(&ax) / (1.0 + norm2_unchecked(&problem.b)),
        dual: norm2_unchecked(&aty) / (1.0 + norm2_unchecked(&problem.c)),
        gap: (cx + by).abs() / (1.0 + cx.abs() + by.abs()),
    }
}

/// Recomputes the normalized residuals of `solution` from the problem data.
pub fn residuals(problem: &ConicProblem, solution: &ConicSolution) -> Result<Residuals> {
    if solution.x.len() != problem.num_vars()
        || solution.s.len() != problem.num_rows()
        || solution.dual.len() != problem.num_rows()
    {
        return Err(Error::dim(
            "residuals",
            format!(
                "x: {}, s: {}, dual: {} against n = {}, m = {}",
                solution.x.len(),
                solution.s.len(),
                solution.dual.len(),
                problem.num_vars(),
                problem.num_rows()
            ),
        ));
    }
    Ok(residuals_raw(
        problem,
        &solution.x,
        &solution.s,
        &solution.dual,
    ))
}
