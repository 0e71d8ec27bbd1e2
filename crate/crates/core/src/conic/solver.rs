//! Operator-splitting (ADMM) iteration for standard-form cone programs.
//!
//! Each iteration solves one linear system with a cached factorization of
//! `σI + ÂᵀRÂ`, projects onto the cone and updates the dual. `R` is diagonal:
//! `ρ` on cone rows and `1000ρ` on zero-cone rows. Convergence is judged on
//! the unscaled iterate, through the same residual routine users call.

use std::io::Write;

use super::cone::{ConeBlock, ConeSpec};
use super::kkt::{LinearSystem, Operator};
use super::polish::polish;
use super::scaling::{equilibrate, Scaled, Scaling};
use super::{residuals_raw, ConicProblem, ConicSolution, Residuals, SolveStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::linalg::{dot, spectral_norm_estimate, Matrix, Vector};

const EQUALITY_RHO_FACTOR: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_ADAPT_RATIO: f64 = 5.0;
const DIVERGENCE_NORM: f64 = 1e8;
const CERT_TOL: f64 = 1e-6;
const CERT_MIN_STEP: f64 = 1e-9;
const CERT_PERSIST_CHECKS: usize = 5;

pub fn solve_conic(problem: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution> {
    Admm::new(problem, settings)?.run(None)
}

/// As [`solve_conic`], writing `iter,primal_res,dual_res,gap` CSV lines for
/// every iteration to `trace`.
pub fn solve_conic_traced(
    problem: &ConicProblem,
    settings: &SolverSettings,
    trace: &mut dyn Write,
) -> Result<ConicSolution> {
    Admm::new(problem, settings)?.run(Some(trace))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Admm<'a> {
    problem: &'a ConicProblem,
    settings: &'a SolverSettings,
    a_dense: Matrix,
    a: Operator,
    b: Vec<f64>,
    c: Vec<f64>,
    scaling: Scaling,
    is_zero_row: Vec<bool>,
    rho: f64,
    rho_vec: Vec<f64>,
    factor: LinearSystem,
}

impl<'a> Admm<'a> {
    fn new(problem: &'a ConicProblem, settings: &'a SolverSettings) -> Result<Self> {
        settings.validate()?;
        let Scaled { a, b, c, scaling } = if settings.scaling_iters > 0 {
            equilibrate(
                &problem.a,
                &problem.b,
                &problem.c,
                &problem.cones,
                settings.scaling_iters,
            )
        } else {
            Scaled {
                a: problem.a.clone(),
                b: problem.b.to_vec(),
                c: problem.c.to_vec(),
                scaling: Scaling::identity(problem.num_rows(), problem.num_vars()),
            }
        };
        let is_zero_row = zero_rows(&problem.cones);

        // Normalize the penalty by ‖Â‖₂² so `settings.rho` is scale-free.
        let rho = if a.is_empty() {
            settings.rho
        } else {
            let norm = spectral_norm_estimate(&a, 50, settings.seed)?;
            if norm > 0.0 {
                (settings.rho / (norm * norm)).clamp(RHO_MIN, RHO_MAX)
            } else {
                settings.rho
            }
        };
        let a_dense = a;
        let a = Operator::new(&a_dense);
        let rho_vec = penalties(&is_zero_row, rho);
        let factor = LinearSystem::factor(&a, &rho_vec, settings.sigma)?;
        Ok(Admm {
            problem,
            settings,
            a_dense,
            a,
            b,
            c,
            scaling,
            is_zero_row,
            rho,
            rho_vec,
            factor,
        })
    }

    fn run(mut self, mut trace: Option<&mut dyn Write>) -> Result<ConicSolution> {
        let (m, n) = (self.problem.num_rows(), self.problem.num_vars());
        let alpha = self.settings.over_relaxation;
        let sigma = self.settings.sigma;
        let cones = &self.problem.cones;

        let mut x = vec![0.0; n];
        let mut s = vec![0.0; m];
        let mut y = vec![0.0; m];
        let mut x_prev = vec![0.0; n];
        let mut y_prev = vec![0.0; m];

        let mut work_m = vec![0.0; m];
        let mut rhs = vec![0.0; n];
        let mut s_rel = vec![0.0; m];

        let mut xo = vec![0.0; n];
        let mut so = vec![0.0; m];
        let mut yo = vec![0.0; m];

        if let Some(w) = trace.as_deref_mut() {
            writeln!(w, "iter,primal_res,dual_res,gap")?;
        }

        let mut infeasible_streak = 0usize;
        let mut unbounded_streak = 0usize;
        let mut last = Residuals::default();

        for iter in 1..=self.settings.max_iters {
            x_prev.copy_from_slice(&x);
            y_prev.copy_from_slice(&y);

            // rhs = σx − ĉ + Âᵀ(R(b̂ − s) − y)
            for i in 0..m {
                work_m[i] = self.rho_vec[i] * (self.b[i] - s[i]) - y[i];
            }
            self.a.apply_t(&work_m, &mut rhs);
            for j in 0..n {
                rhs[j] += sigma * x[j] - self.c[j];
            }
            self.factor.solve(&self.a, &mut rhs);
            let x_tilde = &rhs;

            // s̃ = b̂ − Âx̃, then relax both blocks.
            self.a.apply(x_tilde, &mut work_m);
            for i in 0..m {
                let s_tilde = self.b[i] - work_m[i];
                s_rel[i] = alpha * s_tilde + (1.0 - alpha) * s[i];
            }
            for j in 0..n {
                x[j] = alpha * x_tilde[j] + (1.0 - alpha) * x[j];
            }

            for i in 0..m {
                s[i] = s_rel[i] - y[i] / self.rho_vec[i];
            }
            cones.project_in_place(&mut s);
            for i in 0..m {
                y[i] -= self.rho_vec[i] * (s_rel[i] - s[i]);
            }

            let at_check =
                iter % self.settings.check_interval == 0 || iter == self.settings.max_iters;
            if !(at_check || trace.is_some()) {
                continue;
            }

            self.scaling.unscale_x(&x, &mut xo);
            self.scaling.unscale_s(&s, &mut so);
            self.scaling.unscale_y(&y, &mut yo);
            if xo.iter().chain(&so).chain(&yo).any(|v| !v.is_finite()) {
                return Err(Error::NumericalFailure(format!(
                    "non-finite iterate at iteration {iter}"
                )));
            }
            last = residuals_raw(self.problem, &xo, &so, &yo);
            if let Some(w) = trace.as_deref_mut() {
                writeln!(w, "{iter},{:e},{:e},{:e}", last.primal, last.dual, last.gap)?;
            }
            if !at_check {
                continue;
            }

            if last.within(self.settings) {
                if self.settings.polish {
                    if let Some((xp, sp, res)) = self.polished(&x, &s, &y, &yo, &last) {
                        xo = xp;
                        so = sp;
                        last = res;
                    }
                }
                return Ok(self.finish(xo, so, yo, SolveStatus::Optimal, iter, last));
            }

            if inf_norm(&yo) > DIVERGENCE_NORM || self.looks_infeasible(&y, &y_prev) {
                infeasible_streak += 1;
            } else {
                infeasible_streak = 0;
            }
            if inf_norm(&xo) > DIVERGENCE_NORM || self.looks_unbounded(&x, &x_prev) {
                unbounded_streak += 1;
            } else {
                unbounded_streak = 0;
            }
            if infeasible_streak >= CERT_PERSIST_CHECKS {
                return Ok(self.finish(xo, so, yo, SolveStatus::Infeasible, iter, last));
            }
            if unbounded_streak >= CERT_PERSIST_CHECKS {
                return Ok(self.finish(xo, so, yo, SolveStatus::Unbounded, iter, last));
            }

            if self.settings.adaptive_rho && iter % self.settings.adapt_interval == 0 {
                self.adapt_rho(&x, &s, &y)?;
            }
        }

        let iters = self.settings.max_iters;
        Ok(self.finish(xo, so, yo, SolveStatus::MaxIters, iters, last))
    }

    /// Unscaled polished `(x, s)` with its residuals, when it stays within
    /// tolerance and lowers the primal residual.
    fn polished(
        &self,
        x: &[f64],
        s: &[f64],
        y: &[f64],
        yo: &[f64],
        current: &Residuals,
    ) -> Option<(Vec<f64>, Vec<f64>, Residuals)> {
        let (xp, sp) = polish(&self.a_dense, &self.b, &self.problem.cones, x, s, y)?;
        let mut xo = vec![0.0; xp.len()];
        let mut so = vec![0.0; sp.len()];
        self.scaling.unscale_x(&xp, &mut xo);
        self.scaling.unscale_s(&sp, &mut so);
        if xo.iter().chain(&so).any(|v| !v.is_finite()) {
            return None;
        }
        let res = residuals_raw(self.problem, &xo, &so, yo);
        (res.within(self.settings) && res.primal <= current.primal).then_some((xo, so, res))
    }

    fn finish(
        &self,
        x: Vec<f64>,
        s: Vec<f64>,
        y: Vec<f64>,
        status: SolveStatus,
        iters: usize,
        residuals: Residuals,
    ) -> ConicSolution {
        ConicSolution {
            x: Vector::from_finite(x),
            s: Vector::from_finite(s),
            dual: Vector::from_finite(y),
            status,
            iters,
            residuals,
        }
    }

    /// The dual step `δy` approaches a separating direction when the problem
    /// is infeasible: `Âᵀδy ≈ 0`, `b̂ᵀδy < 0`, `δy ∈ K*`.
    fn looks_infeasible(&self, y: &[f64], y_prev: &[f64]) -> bool {
        let mut dy: Vec<f64> = y.iter().zip(y_prev).map(|(a, b)| a - b).collect();
        let norm = inf_norm(&dy);
        if norm < CERT_MIN_STEP {
            return false;
        }
        dy.iter_mut().for_each(|v| *v /= norm);
        let mut aty = vec![0.0; self.problem.num_vars()];
        self.a.apply_t(&dy, &mut aty);
        let mut proj = dy.clone();
        self.problem.cones.project_dual_in_place(&mut proj);
        let cone_gap = inf_norm(&proj.iter().zip(&dy).map(|(p, d)| p - d).collect::<Vec<_>>());
        inf_norm(&aty) < CERT_TOL && dot(&self.b, &dy) < -CERT_TOL && cone_gap < CERT_TOL
    }

    /// The primal step `δx` approaches a recession direction when the problem
    /// is unbounded: `cᵀδx < 0`, `−Âδx ∈ K`.
    fn looks_unbounded(&self, x: &[f64], x_prev: &[f64]) -> bool {
        let mut dx: Vec<f64> = x.iter().zip(x_prev).map(|(a, b)| a - b).collect();
        let norm = inf_norm(&dx);
        if norm < CERT_MIN_STEP {
            return false;
        }
        dx.iter_mut().for_each(|v| *v /= norm);
        if dot(&self.c, &dx) >= -CERT_TOL {
            return false;
        }
        let mut ax = vec![0.0; self.problem.num_rows()];
        self.a.apply(&dx, &mut ax);
        ax.iter_mut().for_each(|v| *v = -*v);
        self.problem.cones.distance(&ax) < CERT_TOL
    }

    fn adapt_rho(&mut self, x: &[f64], s: &[f64], y: &[f64]) -> Result<()> {
        let (m, n) = (self.problem.num_rows(), self.problem.num_vars());
        let mut ax = vec![0.0; m];
        self.a.apply(x, &mut ax);
        let mut aty = vec![0.0; n];
        self.a.apply_t(y, &mut aty);
        let prim: Vec<f64> = (0..m).map(|i| ax[i] + s[i] - self.b[i]).collect();
        let dual: Vec<f64> = (0..n).map(|j| aty[j] + self.c[j]).collect();
        let prim_scale = inf_norm(&ax)
            .max(inf_norm(s))
            .max(inf_norm(&self.b))
            .max(1e-10);
        let dual_scale = inf_norm(&aty).max(inf_norm(&self.c)).max(1e-10);
        let prim_rel = inf_norm(&prim) / prim_scale;
        let dual_rel = inf_norm(&dual) / dual_scale;
        if prim_rel == 0.0 || dual_rel == 0.0 {
            return Ok(());
        }
        let proposal = (self.rho * (prim_rel / dual_rel).sqrt()).clamp(RHO_MIN, RHO_MAX);
        if proposal > self.rho * RHO_ADAPT_RATIO || proposal < self.rho / RHO_ADAPT_RATIO {
            let rho_vec = penalties(&self.is_zero_row, proposal);
            let factor = LinearSystem::factor(&self.a, &rho_vec, self.settings.sigma)?;
            self.rho = proposal;
            self.rho_vec = rho_vec;
            self.factor = factor;
        }
        Ok(())
    }
}

fn zero_rows(cones: &ConeSpec) -> Vec<bool> {
    cones
        .blocks()
        .iter()
        .flat_map(|b| std::iter::repeat_n(matches!(b, ConeBlock::Zero(_)), b.dim()))
        .collect()
}

fn penalties(is_zero_row: &[bool], rho: f64) -> Vec<f64> {
    is_zero_row
        .iter()
        .map(|&z| if z { rho * EQUALITY_RHO_FACTOR } else { rho })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn problem(c: &[f64], a: &[Vec<f64>], b: &[f64], cones: Vec<ConeBlock>) -> ConicProblem {
        ConicProblem::new(
            Vector::new(c.to_vec()).unwrap(),
            Matrix::from_rows(a).unwrap(),
            Vector::new(b.to_vec()).unwrap(),
            ConeSpec::new(cones).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn x_at_least_one() {
        let p = problem(&[1.0], &[vec![-1.0]], &[-1.0], vec![ConeBlock::NonNeg(1)]);
        let sol = solve_conic(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-6, "{:?}", sol.x);
    }

    #[test]
    fn second_order_epigraph() {
        // min t s.t. (t, 3, 4) ∈ SOC; A = [-1; 0; 0], b = (0, 3, 4).
        let p = problem(
            &[1.0],
            &[vec![-1.0], vec![0.0], vec![0.0]],
            &[0.0, 3.0, 4.0],
            vec![ConeBlock::SecondOrder(3)],
        );
        let sol = solve_conic(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 5.0).abs() < 1e-5, "{:?}", sol.x);
    }

    #[test]
    fn equality_lp() {
        let p = problem(
            &[1.0, 1.0],
            &[vec![1.0, 2.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
            &[1.0, 0.0, 0.0],
            vec![ConeBlock::Zero(1), ConeBlock::NonNeg(2)],
        );
        let sol = solve_conic(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective(&p) - 0.5).abs() < 1e-6);
        assert!(sol.x[0].abs() < 1e-5 && (sol.x[1] - 0.5).abs() < 1e-5);
    }

    #[test]
    fn infeasible_lp_is_flagged() {
        // x >= 1 and x <= 0.
        let p = problem(
            &[1.0],
            &[vec![-1.0], vec![1.0]],
            &[-1.0, 0.0],
            vec![ConeBlock::NonNeg(2)],
        );
        let sol = solve_conic(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_lp_is_flagged() {
        // min -x s.t. x >= 0.
        let p = problem(&[-1.0], &[vec![-1.0]], &[0.0], vec![ConeBlock::NonNeg(1)]);
        let sol = solve_conic(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn max_iters_is_a_status() {
        let p = problem(
            &[1.0, 1.0],
            &[vec![1.0, 2.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
            &[1.0, 0.0, 0.0],
            vec![ConeBlock::Zero(1), ConeBlock::NonNeg(2)],
        );
        let settings = SolverSettings {
            max_iters: 3,
            ..Default::default()
        }
        .with_tolerance(1e-14);
        let sol = solve_conic(&p, &settings).unwrap();
        assert_eq!(sol.status, SolveStatus::MaxIters);
        assert_eq!(sol.iters, 3);
    }

    #[test]
    fn trace_has_one_line_per_iteration() {
        let p = problem(&[1.0], &[vec![-1.0]], &[-1.0], vec![ConeBlock::NonNeg(1)]);
        let mut buf = Vec::new();
        let sol = solve_conic_traced(&p, &SolverSettings::default(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iter,primal_res,dual_res,gap"));
        assert_eq!(lines.count(), sol.iters);
    }

    #[test]
    fn solve_is_deterministic() {
        let p = problem(
            &[1.0, 2.0, 0.5],
            &[
                vec![1.0, 1.0, 1.0],
                vec![-1.0, 0.0, 0.0],
                vec![0.0, -1.0, 0.0],
                vec![0.0, 0.0, -1.0],
            ],
            &[2.0, 0.0, 0.0, 0.0],
            vec![ConeBlock::Zero(1), ConeBlock::NonNeg(3)],
        );
        let a = solve_conic(&p, &SolverSettings::default()).unwrap();
        let b = solve_conic(&p, &SolverSettings::default()).unwrap();
        assert_eq!(a, b);
    }
}
