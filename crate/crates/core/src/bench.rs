//! Monte Carlo harness for the support-error metric
//!
//! ```text
//! ρ = (1/L) Σ_trials ( #false alarms + #misses )
//! ```
//!
//! Every trial draws one instance from `(master_seed, sweep value, trial)` and
//! runs all methods on it. Trials are independent, so they may run on a rayon
//! pool (feature `parallel`); results are reduced in trial order, which makes
//! reports bit-identical for any worker count.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::conic::{SolveStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::linalg::{format_value, Vector};
use crate::model::{
    gen_instance, gen_instance_with_signal, gen_signal_from_seed, InstanceConfig,
    MeasurementInstance,
};
use crate::recovery::{recover, OmpStop, RecoveryMethod, DEFAULT_TAU};
use crate::rng::derive_seed;

/// Share of failed trials above which a sweep point is a harness error.
pub const MAX_FAILURE_RATE: f64 = 0.1;

/// Entries below this magnitude never count as detected.
pub const DEFAULT_SUPPORT_FLOOR: f64 = 1e-4;

pub const REPORT_HEADER: &str =
    "method,sweep_var,sweep_value,N,M,K,delta,trials,failures,rho_mean,rho_std,fa_mean,miss_mean,seed";

/// `(|est \ true|, |true \ est|)`. Both sets must lie in `0..n`.
pub fn rho_terms(est: &[usize], truth: &[usize], n: usize) -> Result<(usize, usize)> {
    if let Some(&i) = est.iter().chain(truth).find(|&&i| i >= n) {
        return Err(Error::InvalidParameter(format!(
            "support index {i} out of range for N = {n}"
        )));
    }
    let fa = est.iter().filter(|i| !truth.contains(i)).count();
    let miss = truth.iter().filter(|i| !est.contains(i)).count();
    Ok((fa, miss))
}

/// `{i : |θ_i| ≥ max(τ · max_j |θ_j|, floor)}`
pub fn detect_support(theta: &[f64], tau: f64, floor: f64) -> Vec<usize> {
    let peak = theta.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let cut = (tau * peak).max(floor);
    if peak == 0.0 || peak < cut {
        return Vec::new();
    }
    theta
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() >= cut)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    K,
    M,
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVariable::K => "K",
            SweepVariable::M => "M",
        })
    }
}

/// A recovery method whose parameters may depend on the instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchMethod {
    Bp,
    /// `None` uses the instance's δ.
    Auo {
        delta: Option<f64>,
    },
    Ds {
        lambda: f64,
    },
    /// Stops after the instance's K atoms.
    Omp,
}

impl BenchMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BenchMethod::Bp => "bp",
            BenchMethod::Auo { .. } => "auo",
            BenchMethod::Ds { .. } => "ds",
            BenchMethod::Omp => "omp",
        }
    }

    pub fn resolve(&self, config: &InstanceConfig) -> RecoveryMethod {
        match *self {
            BenchMethod::Bp => RecoveryMethod::Bp,
            BenchMethod::Auo { delta } => RecoveryMethod::Auo {
                delta: delta.unwrap_or(config.delta),
            },
            BenchMethod::Ds { lambda } => RecoveryMethod::Ds { lambda },
            BenchMethod::Omp => RecoveryMethod::Omp(OmpStop::Sparsity(config.k.max(1))),
        }
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchMethod::Auo { delta: Some(d) } => write!(f, "auo(delta={d})"),
            BenchMethod::Ds { lambda } => write!(f, "ds(lambda={lambda})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Parses `bp`, `auo`, `omp`; `ds` needs a λ and is built by the caller.
impl FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bp" => Ok(BenchMethod::Bp),
            "auo" => Ok(BenchMethod::Auo { delta: None }),
            "omp" => Ok(BenchMethod::Omp),
            other => Err(Error::InvalidParameter(format!(
                "unknown bench method `{other}`"
            ))),
        }
    }
}

/// Worker count for the trial pool. `None` lets rayon decide; `Some(1)` runs
/// on the calling thread. Without the `parallel` feature trials always run
/// sequentially.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Execution {
    pub threads: Option<usize>,
}

impl Execution {
    pub fn sequential() -> Self {
        Execution { threads: Some(1) }
    }

    fn map<T, F>(&self, count: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        if self.threads == Some(0) {
            return Err(Error::InvalidParameter("threads must be >= 1".into()));
        }
        #[cfg(feature = "parallel")]
        if self.threads != Some(1) {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.threads.unwrap_or(0))
                .build()
                .map_err(|e| Error::Harness(format!("cannot start worker pool: {e}")))?;
            return Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()));
        }
        Ok((0..count).map(f).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: InstanceConfig,
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<usize>,
    pub methods: Vec<BenchMethod>,
    pub trials: usize,
    pub tau: f64,
    pub support_floor: f64,
    pub master_seed: u64,
    pub settings: SolverSettings,
}

impl SweepConfig {
    pub fn new(
        base: InstanceConfig,
        sweep_variable: SweepVariable,
        sweep_values: Vec<usize>,
    ) -> Self {
        SweepConfig {
            base,
            sweep_variable,
            sweep_values,
            methods: vec![BenchMethod::Bp, BenchMethod::Auo { delta: None }],
            trials: 100,
            tau: DEFAULT_TAU,
            support_floor: DEFAULT_SUPPORT_FLOOR,
            master_seed: 0,
            settings: SolverSettings::default(),
        }
    }

    /// Instance configuration at one sweep value, without the seed.
    pub fn point(&self, value: usize) -> InstanceConfig {
        let mut cfg = self.base.clone();
        match self.sweep_variable {
            SweepVariable::K => cfg.k = value,
            SweepVariable::M => cfg.m = value,
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if self.sweep_values.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidParameter(
                "need at least one sweep value and one method".into(),
            ));
        }
        validate_threshold(self.tau, self.support_floor)?;
        self.settings.validate()?;
        for &v in &self.sweep_values {
            let cfg = self.point(v);
            cfg.validate()?;
            for m in &self.methods {
                m.resolve(&cfg).validate()?;
            }
        }
        Ok(())
    }
}

fn validate_threshold(tau: f64, floor: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must be in (0, 1), got {tau}"
        )));
    }
    if !(floor >= 0.0 && floor.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "support floor must be >= 0, got {floor}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoRow {
    pub method: String,
    pub sweep_value: usize,
    pub config: InstanceConfig,
    /// Successful trials.
    pub trials: usize,
    pub failures: usize,
    pub rho_mean: f64,
    pub rho_std: f64,
    pub fa_mean: f64,
    pub miss_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoReport {
    pub sweep_variable: SweepVariable,
    pub master_seed: u64,
    pub rows: Vec<RhoRow>,
}

impl RhoReport {
    pub fn row(&self, method: &str, value: usize) -> Option<&RhoRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.sweep_value == value)
    }

    /// `rho_mean` per sweep value, in sweep order.
    pub fn series(&self, method: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| (r.sweep_value, r.rho_mean))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{REPORT_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.method,
                self.sweep_variable,
                r.sweep_value,
                r.config.n,
                r.config.m,
                r.config.k,
                format_value(r.config.delta),
                r.trials,
                r.failures,
                format_value(r.rho_mean),
                format_value(r.rho_std),
                format_value(r.fa_mean),
                format_value(r.miss_mean),
                self.master_seed
            )?;
        }
        Ok(())
    }
}

/// `None` marks a failed solve.
type Outcome = Option<(usize, usize)>;

fn solved(result: Result<crate::recovery::RecoveryResult>) -> Option<Vector> {
    match result {
        Ok(r)
            if matches!(
                r.solver_status,
                SolveStatus::Optimal | SolveStatus::MaxIters
            ) =>
        {
            Some(r.theta_hat)
        }
        _ => None,
    }
}

fn run_methods(config: &SweepConfig, inst: &MeasurementInstance) -> Vec<Outcome> {
    let truth = inst.true_support();
    config
        .methods
        .iter()
        .map(|m| {
            let method = m.resolve(&inst.config);
            let theta = solved(recover(
                &inst.b,
                &inst.y,
                &method,
                &config.settings,
                config.tau,
            ))?;
            let est = detect_support(&theta, config.tau, config.support_floor);
            rho_terms(&est, &truth, inst.config.n).ok()
        })
        .collect()
}

pub fn run_sweep(config: &SweepConfig, exec: Execution) -> Result<RhoReport> {
    config.validate()?;
    let values = &config.sweep_values;
    let trials = config.trials;
    let outcomes = exec.map(values.len() * trials, |job| -> Result<Vec<Outcome>> {
        let (vi, trial) = (job / trials, job % trials);
        let mut cfg = config.point(values[vi]);
        cfg.seed = derive_seed(config.master_seed, &[values[vi] as u64, trial as u64]);
        let inst = gen_instance(&cfg)?;
        Ok(run_methods(config, &inst))
    })?;

    let mut rows = Vec::new();
    for (mi, method) in config.methods.iter().enumerate() {
        for (vi, &value) in values.iter().enumerate() {
            let mut terms = Vec::with_capacity(trials);
            for job in &outcomes[vi * trials..(vi + 1) * trials] {
                let job = job
                    .as_ref()
                    .map_err(|e| Error::Harness(format!("trial setup failed: {e}")))?;
                if let Some(t) = job[mi] {
                    terms.push(t);
                }
            }
            let failures = trials - terms.len();
            if failures as f64 > MAX_FAILURE_RATE * trials as f64 {
                return Err(Error::Harness(format!(
                    "{} failed {failures} of {trials} trials at {} = {value}",
                    method.name(),
                    config.sweep_variable
                )));
            }
            rows.push(summarize(
                method.name(),
                value,
                config.point(value),
                &terms,
                failures,
            ));
        }
    }
    Ok(RhoReport {
        sweep_variable: config.sweep_variable,
        master_seed: config.master_seed,
        rows,
    })
}

fn summarize(
    method: &str,
    value: usize,
    config: InstanceConfig,
    terms: &[(usize, usize)],
    failures: usize,
) -> RhoRow {
    let n = terms.len();
    let (mut fa, mut miss, mut sum) = (0usize, 0usize, 0usize);
    for &(f, m) in terms {
        fa += f;
        miss += m;
        sum += f + m;
    }
    let (rho_mean, fa_mean, miss_mean, rho_std) = if n == 0 {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    } else {
        let nf = n as f64;
        let mean = sum as f64 / nf;
        let var = if n > 1 {
            terms
                .iter()
                .map(|&(f, m)| ((f + m) as f64 - mean).powi(2))
                .sum::<f64>()
                / (nf - 1.0)
        } else {
            0.0
        };
        (mean, fa as f64 / nf, miss as f64 / nf, var.sqrt())
    };
    RhoRow {
        method: method.to_string(),
        sweep_value: value,
        config,
        trials: n,
        failures,
        rho_mean,
        rho_std,
        fa_mean,
        miss_mean,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Divide by `max |θ̂_i|`.
    #[default]
    MaxAbs,
    /// Divide by `‖θ̂‖₂`.
    L2,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::MaxAbs => "max-abs",
            Normalization::L2 => "l2",
        })
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max-abs" => Ok(Normalization::MaxAbs),
            "l2" => Ok(Normalization::L2),
            other => Err(Error::InvalidParameter(format!(
                "unknown normalization `{other}`"
            ))),
        }
    }
}

impl Normalization {
    /// `|θ|` divided by its norm; the zero vector stays zero.
    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        let scale = match self {
            Normalization::MaxAbs => theta.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
            Normalization::L2 => theta.iter().map(|v| v * v).sum::<f64>().sqrt(),
        };
        if scale == 0.0 {
            return vec![0.0; theta.len()];
        }
        theta.iter().map(|v| v.abs() / scale).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileConfig {
    pub base: InstanceConfig,
    pub methods: Vec<BenchMethod>,
    pub trials: usize,
    pub normalization: Normalization,
    pub master_seed: u64,
    pub settings: SolverSettings,
}

impl ProfileConfig {
    pub fn new(base: InstanceConfig) -> Self {
        ProfileConfig {
            base,
            methods: vec![BenchMethod::Bp, BenchMethod::Auo { delta: None }],
            trials: 50,
            normalization: Normalization::MaxAbs,
            master_seed: 0,
            settings: SolverSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("need at least one method".into()));
        }
        self.base.validate()?;
        self.settings.validate()?;
        for m in &self.methods {
            m.resolve(&self.base).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    /// Normalized true signal.
    pub truth: Vec<f64>,
    /// `(method name, averaged normalized |θ̂|)`.
    pub columns: Vec<(String, Vec<f64>)>,
    pub failures: Vec<usize>,
}

impl Profile {
    pub fn column(&self, method: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(m, _)| m == method)
            .map(|(_, v)| v.as_slice())
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        write!(out, "index,true")?;
        for (m, _) in &self.columns {
            write!(out, ",{m}")?;
        }
        writeln!(out)?;
        for (i, t) in self.truth.iter().enumerate() {
            write!(out, "{i},{}", format_value(*t))?;
            for (_, col) in &self.columns {
                write!(out, ",{}", format_value(col[i]))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Averages normalized `|θ̂|` over trials that share one support, drawn from
/// the master seed; `A` and `V` are fresh in every trial.
pub fn run_profile(config: &ProfileConfig, exec: Execution) -> Result<Profile> {
    config.validate()?;
    let theta = gen_signal_from_seed(&config.base, derive_seed(config.master_seed, &[u64::MAX]))?;
    let per_trial = exec.map(config.trials, |trial| -> Result<Vec<Option<Vec<f64>>>> {
        let mut cfg = config.base.clone();
        cfg.seed = derive_seed(config.master_seed, &[trial as u64]);
        let inst = gen_instance_with_signal(&cfg, theta.clone())?;
        Ok(config
            .methods
            .iter()
            .map(|m| {
                let method = m.resolve(&inst.config);
                solved(recover(
                    &inst.b,
                    &inst.y,
                    &method,
                    &config.settings,
                    DEFAULT_TAU,
                ))
                .map(|t| config.normalization.apply(&t))
            })
            .collect())
    })?;

    let n = config.base.n;
    let mut columns = Vec::new();
    let mut failures = Vec::new();
    for (mi, method) in config.methods.iter().enumerate() {
        let mut sum = vec![0.0; n];
        let mut ok = 0usize;
        for trial in &per_trial {
            let trial = trial
                .as_ref()
                .map_err(|e| Error::Harness(format!("trial setup failed: {e}")))?;
            if let Some(v) = &trial[mi] {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                ok += 1;
            }
        }
        let failed = config.trials - ok;
        if failed as f64 > MAX_FAILURE_RATE * config.trials as f64 {
            return Err(Error::Harness(format!(
                "{} failed {failed} of {} trials",
                method.name(),
                config.trials
            )));
        }
        sum.iter_mut().for_each(|s| *s /= ok as f64);
        columns.push((method.name().to_string(), sum));
        failures.push(failed);
    }
    Ok(Profile {
        truth: config.normalization.apply(&theta),
        columns,
        failures,
    })
}
