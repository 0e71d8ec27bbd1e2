//! Seeded problem instances for the uncertain-matrix measurement model
//!
//! ```text
//! y = A θ,    B = A + V,    V bounded by δ
//! ```
//!
//! `A` is the true (unobserved) sensing matrix, `B` the observed one. `y`
//! depends only on `A` and `θ`.
//!
//! The bound on `V` has two readings. [`DeltaSemantics::Elementwise`] caps
//! every entry, `max |V_ij| ≤ δ`, which is what a bounded Gaussian draw gives.
//! [`DeltaSemantics::RowL1`] caps the induced ℓ∞ norm, `max_m ‖v_m‖₁ ≤ δ`.
//! Either one implies `‖Vθ‖₂ ≤ √M δ ‖θ‖₁`.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{
    self, mat_inf_norm, matrix_to_vector, max_abs_entry, norm2_unchecked, parse_matrix, Lines,
    Matrix, Vector,
};
use crate::rng::{stream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeltaSemantics {
    #[default]
    Elementwise,
    RowL1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatrixMode {
    #[default]
    SubsampledIdentity,
    /// I.i.d. N(0, 1/M) entries.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum AmplitudeMode {
    #[default]
    UnitOnes,
    /// One amplitude per nonzero, assigned in draw order.
    Custom(Vec<f64>),
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(Error::InvalidParameter(format!(
                        concat!("unknown ", stringify!($ty), " `{}`"),
                        other
                    ))),
                }
            }
        }
    };
}

text_enum!(DeltaSemantics { Elementwise => "elementwise", RowL1 => "row-l1" });
text_enum!(MatrixMode { SubsampledIdentity => "subsampled-identity", Gaussian => "gaussian" });

impl fmt::Display for AmplitudeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AmplitudeMode::UnitOnes => f.write_str("unit-ones"),
            AmplitudeMode::Custom(values) => {
                let parts: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                write!(f, "custom:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for AmplitudeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "unit-ones" {
            return Ok(AmplitudeMode::UnitOnes);
        }
        let list = s
            .strip_prefix("custom:")
            .ok_or_else(|| Error::InvalidParameter(format!("unknown amplitude mode `{s}`")))?;
        if list.trim().is_empty() {
            return Ok(AmplitudeMode::Custom(Vec::new()));
        }
        let values = list
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v != 0.0)
                    .ok_or_else(|| Error::InvalidParameter(format!("bad amplitude `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AmplitudeMode::Custom(values))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceConfig {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub delta: f64,
    pub delta_semantics: DeltaSemantics,
    pub amplitude: AmplitudeMode,
    pub matrix_mode: MatrixMode,
    /// Standard deviation of the perturbation draw, as a fraction of δ.
    pub sigma_ratio: f64,
    pub seed: u64,
}

impl Default for InstanceConfig {
    /// N = 500, M = 125, K = 6, δ = 0.7.
    fn default() -> Self {
        InstanceConfig {
            n: 500,
            m: 125,
            k: 6,
            delta: 0.7,
            delta_semantics: DeltaSemantics::Elementwise,
            amplitude: AmplitudeMode::UnitOnes,
            matrix_mode: MatrixMode::SubsampledIdentity,
            sigma_ratio: 0.5,
            seed: 0,
        }
    }
}

impl InstanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k > self.n {
            return Err(Error::InvalidParameter(format!(
                "K = {} exceeds N = {}",
                self.k, self.n
            )));
        }
        if self.m == 0 || self.m > self.n {
            return Err(Error::InvalidParameter(format!(
                "M = {} must satisfy 1 <= M <= N = {}",
                self.m, self.n
            )));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delta must be finite and >= 0, got {}",
                self.delta
            )));
        }
        if !(self.sigma_ratio > 0.0 && self.sigma_ratio.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma_ratio must be > 0, got {}",
                self.sigma_ratio
            )));
        }
        if let AmplitudeMode::Custom(values) = &self.amplitude {
            if values.len() != self.k {
                return Err(Error::InvalidParameter(format!(
                    "{} custom amplitudes for K = {}",
                    values.len(),
                    self.k
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementInstance {
    pub theta_true: Vector,
    pub a: Matrix,
    pub v: Matrix,
    pub b: Matrix,
    pub y: Vector,
    pub config: InstanceConfig,
}

impl MeasurementInstance {
    /// Indices of the nonzero entries of the true signal.
    pub fn true_support(&self) -> Vec<usize> {
        self.theta_true
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Checks the model invariants. `y_tol` is the relative tolerance on
    /// `y = Aθ` (0 for freshly generated instances).
    pub fn validate(&self, y_tol: f64) -> Result<()> {
        let cfg = &self.config;
        let dims_ok = self.theta_true.len() == cfg.n
            && self.y.len() == cfg.m
            && [&self.a, &self.v, &self.b]
                .iter()
                .all(|mat| mat.rows() == cfg.m && mat.cols() == cfg.n);
        if !dims_ok {
            return Err(Error::Validation(format!(
                "dimensions disagree with N = {}, M = {}: theta {}, y {}, A {}x{}, V {}x{}",
                cfg.n,
                cfg.m,
                self.theta_true.len(),
                self.y.len(),
                self.a.rows(),
                self.a.cols(),
                self.v.rows(),
                self.v.cols()
            )));
        }
        let support = self.true_support().len();
        if support != cfg.k {
            return Err(Error::Validation(format!(
                "theta has {support} nonzeros, K = {}",
                cfg.k
            )));
        }
        if self.a.add(&self.v)? != self.b {
            return Err(Error::Validation("B != A + V".into()));
        }
        let ay = linalg::matvec(&self.a, &self.theta_true)?;
        let err: Vec<f64> = ay.iter().zip(self.y.iter()).map(|(p, q)| p - q).collect();
        if norm2_unchecked(&err) > y_tol * (1.0 + norm2_unchecked(&self.y)) {
            return Err(Error::Validation("y != A theta".into()));
        }
        if cfg.m > 0 && cfg.n > 0 {
            let bound = match cfg.delta_semantics {
                DeltaSemantics::Elementwise => max_abs_entry(&self.v),
                DeltaSemantics::RowL1 => mat_inf_norm(&self.v)?,
            };
            if bound > cfg.delta {
                return Err(Error::Validation(format!(
                    "perturbation bound {bound} exceeds delta = {} ({})",
                    cfg.delta, cfg.delta_semantics
                )));
            }
        }
        Ok(())
    }
}

/// K-sparse signal with uniformly drawn support.
pub fn gen_sparse_signal(
    n: usize,
    k: usize,
    amplitude: &AmplitudeMode,
    rng: &mut StreamRng,
) -> Result<Vector> {
    if k > n {
        return Err(Error::InvalidParameter(format!("K = {k} exceeds N = {n}")));
    }
    let amplitudes: Vec<f64> = match amplitude {
        AmplitudeMode::UnitOnes => vec![1.0; k],
        AmplitudeMode::Custom(values) if values.len() == k => values.clone(),
        AmplitudeMode::Custom(values) => {
            return Err(Error::InvalidParameter(format!(
                "{} custom amplitudes for K = {k}",
                values.len()
            )))
        }
    };
    let mut theta = vec![0.0; n];
    for (pos, amp) in index::sample(rng, n, k).into_iter().zip(amplitudes) {
        theta[pos] = amp;
    }
    Vector::new(theta)
}

pub fn gen_measurement_matrix(
    m: usize,
    n: usize,
    mode: MatrixMode,
    rng: &mut StreamRng,
) -> Result<Matrix> {
    match mode {
        MatrixMode::SubsampledIdentity => {
            if m > n {
                return Err(Error::InvalidParameter(format!(
                    "sub-sampled identity needs M <= N, got M = {m}, N = {n}"
                )));
            }
            let mut a = Matrix::zeros(m, n);
            for (r, col) in index::sample(rng, n, m).into_iter().enumerate() {
                a.set(r, col, 1.0);
            }
            Ok(a)
        }
        MatrixMode::Gaussian => {
            let normal = Normal::new(0.0, 1.0 / (m.max(1) as f64).sqrt())
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let data = (0..m * n).map(|_| normal.sample(rng)).collect();
            Matrix::new(m, n, data)
        }
    }
}

/// Bounded Gaussian perturbation.
///
/// Entries are N(0, (σ_ratio·δ)²) redrawn until `|v| ≤ δ`. Under
/// [`DeltaSemantics::RowL1`] rows whose ℓ1 norm exceeds δ are then shrunk onto
/// the ℓ1 sphere of radius δ.
pub fn gen_perturbation(
    m: usize,
    n: usize,
    delta: f64,
    semantics: DeltaSemantics,
    sigma_ratio: f64,
    rng: &mut StreamRng,
) -> Result<Matrix> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("delta = {delta}")));
    }
    if delta == 0.0 {
        return Ok(Matrix::zeros(m, n));
    }
    let normal = Normal::new(0.0, sigma_ratio * delta)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut data = Vec::with_capacity(m * n);
    for _ in 0..m * n {
        let v = loop {
            let v: f64 = normal.sample(rng);
            if v.abs() <= delta {
                break v;
            }
        };
        data.push(v);
    }
    if semantics == DeltaSemantics::RowL1 && n > 0 {
        for row in data.chunks_exact_mut(n) {
            let mut l1: f64 = row.iter().map(|v| v.abs()).sum();
            while l1 > delta {
                let shrink = delta / l1 * (1.0 - 4.0 * f64::EPSILON);
                row.iter_mut().for_each(|v| *v *= shrink);
                l1 = row.iter().map(|v| v.abs()).sum();
            }
        }
    }
    Matrix::new(m, n, data)
}

/// Draws a full instance from `config.seed`.
pub fn gen_instance(config: &InstanceConfig) -> Result<MeasurementInstance> {
    config.validate()?;
    let mut rng = stream(config.seed);
    let theta = gen_sparse_signal(config.n, config.k, &config.amplitude, &mut rng)?;
    assemble(config, theta, &mut rng)
}

/// Draws `A` and `V` from `config.seed` around a caller-fixed signal.
pub fn gen_instance_with_signal(
    config: &InstanceConfig,
    theta: Vector,
) -> Result<MeasurementInstance> {
    config.validate()?;
    if theta.len() != config.n {
        return Err(Error::dim(
            "gen_instance_with_signal",
            format!("theta has length {}, N = {}", theta.len(), config.n),
        ));
    }
    let mut rng = stream(config.seed);
    assemble(config, theta, &mut rng)
}

fn assemble(
    config: &InstanceConfig,
    theta: Vector,
    rng: &mut StreamRng,
) -> Result<MeasurementInstance> {
    let a = gen_measurement_matrix(config.m, config.n, config.matrix_mode, rng)?;
    let v = gen_perturbation(
        config.m,
        config.n,
        config.delta,
        config.delta_semantics,
        config.sigma_ratio,
        rng,
    )?;
    let b = a.add(&v)?;
    let y = linalg::matvec(&a, &theta)?;
    let instance = MeasurementInstance {
        theta_true: theta,
        a,
        v,
        b,
        y,
        config: config.clone(),
    };
    instance.validate(0.0)?;
    Ok(instance)
}

/// Draws a uniformly random support of size `k` (unit or custom amplitudes)
/// from a dedicated stream.
pub fn gen_signal_from_seed(config: &InstanceConfig, seed: u64) -> Result<Vector> {
    let mut rng = stream(seed);
    gen_sparse_signal(config.n, config.k, &config.amplitude, &mut rng)
}

pub fn write_instance_to<W: Write>(out: &mut W, inst: &MeasurementInstance) -> Result<()> {
    let c = &inst.config;
    writeln!(out, "N = {}", c.n)?;
    writeln!(out, "M = {}", c.m)?;
    writeln!(out, "K = {}", c.k)?;
    writeln!(out, "delta = {}", c.delta)?;
    writeln!(out, "delta_semantics = {}", c.delta_semantics)?;
    writeln!(out, "matrix_mode = {}", c.matrix_mode)?;
    writeln!(out, "amplitude_mode = {}", c.amplitude)?;
    writeln!(out, "sigma_ratio = {}", c.sigma_ratio)?;
    writeln!(out, "seed = {}", c.seed)?;
    writeln!(out, "[theta]")?;
    linalg::write_vector(out, &inst.theta_true)?;
    writeln!(out, "[A]")?;
    linalg::write_matrix(out, &inst.a)?;
    writeln!(out, "[V]")?;
    linalg::write_matrix(out, &inst.v)?;
    writeln!(out, "[y]")?;
    linalg::write_vector(out, &inst.y)?;
    Ok(())
}

pub fn write_instance(path: &Path, inst: &MeasurementInstance) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_instance_to(&mut out, inst)?;
    out.flush()?;
    Ok(())
}

fn header_value<T: FromStr>(entries: &[(String, String, usize)], key: &str) -> Result<Option<T>> {
    match entries.iter().find(|(k, _, _)| k == key) {
        Some((_, v, line)) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::parse(*line, format!("bad value `{v}` for `{key}`"))),
        None => Ok(None),
    }
}

fn required<T: FromStr>(
    entries: &[(String, String, usize)],
    key: &str,
    end_line: usize,
) -> Result<T> {
    header_value(entries, key)?
        .ok_or_else(|| Error::parse(end_line, format!("missing header key `{key}`")))
}

const HEADER_KEYS: [&str; 9] = [
    "N",
    "M",
    "K",
    "delta",
    "delta_semantics",
    "matrix_mode",
    "amplitude_mode",
    "sigma_ratio",
    "seed",
];

pub fn read_instance_from<R: BufRead>(reader: R) -> Result<MeasurementInstance> {
    let mut lines = Lines::new(reader);
    let mut entries: Vec<(String, String, usize)> = Vec::new();
    let first_section = loop {
        let line = lines.next_content()?.ok_or_else(|| {
            Error::parse(lines.line_no() + 1, "unexpected end of input in header")
        })?;
        if line.starts_with('[') {
            break line;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(lines.line_no(), "expected `key = value`"))?;
        let key = key.trim();
        if !HEADER_KEYS.contains(&key) {
            return Err(Error::parse(
                lines.line_no(),
                format!("unknown header key `{key}`"),
            ));
        }
        if entries.iter().any(|(k, _, _)| k == key) {
            return Err(Error::parse(
                lines.line_no(),
                format!("duplicate header key `{key}`"),
            ));
        }
        entries.push((key.to_string(), value.trim().to_string(), lines.line_no()));
    };
    let header_end = lines.line_no();
    let amplitude: Option<String> = header_value(&entries, "amplitude_mode")?;
    let config = InstanceConfig {
        n: required(&entries, "N", header_end)?,
        m: required(&entries, "M", header_end)?,
        k: required(&entries, "K", header_end)?,
        delta: required(&entries, "delta", header_end)?,
        delta_semantics: required(&entries, "delta_semantics", header_end)?,
        matrix_mode: required(&entries, "matrix_mode", header_end)?,
        amplitude: match amplitude {
            Some(text) => text
                .parse()
                .map_err(|e: Error| Error::parse(header_end, e.to_string()))?,
            None => AmplitudeMode::UnitOnes,
        },
        sigma_ratio: header_value(&entries, "sigma_ratio")?.unwrap_or(0.5),
        seed: required(&entries, "seed", header_end)?,
    };

    let mut theta = None;
    let mut a = None;
    let mut v = None;
    let mut y = None;
    let mut section = Some(first_section);
    while let Some(name) = section {
        let line_no = lines.line_no();
        let mat = parse_matrix(&mut lines)?;
        let slot = match name.as_str() {
            "[theta]" => &mut theta,
            "[A]" => &mut a,
            "[V]" => &mut v,
            "[y]" => &mut y,
            other => return Err(Error::parse(line_no, format!("unknown section `{other}`"))),
        };
        if slot.replace(mat).is_some() {
            return Err(Error::parse(line_no, format!("duplicate section `{name}`")));
        }
        section = lines.next_content()?;
        if let Some(s) = &section {
            if !s.starts_with('[') {
                return Err(Error::parse(lines.line_no(), "expected a section header"));
            }
        }
    }
    let end = lines.line_no();
    let missing = |name: &str| Error::parse(end, format!("missing section `{name}`"));
    let theta = matrix_to_vector(theta.ok_or_else(|| missing("[theta]"))?, end)?;
    let y = matrix_to_vector(y.ok_or_else(|| missing("[y]"))?, end)?;
    let a = a.ok_or_else(|| missing("[A]"))?;
    let v = v.ok_or_else(|| missing("[V]"))?;
    if a.rows() != v.rows() || a.cols() != v.cols() {
        return Err(Error::Validation(format!(
            "A is {}x{} but V is {}x{}",
            a.rows(),
            a.cols(),
            v.rows(),
            v.cols()
        )));
    }
    let b = a.add(&v)?;
    let inst = MeasurementInstance {
        theta_true: theta,
        a,
        v,
        b,
        y,
        config,
    };
    inst.validate(1e-12)?;
    Ok(inst)
}

pub fn read_instance(path: &Path) -> Result<MeasurementInstance> {
    read_instance_from(BufReader::new(File::open(path)?))
}
