use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use auo::bench::{
    run_profile, run_sweep, BenchMethod, Execution, Normalization, ProfileConfig, SweepConfig,
    SweepVariable, DEFAULT_SUPPORT_FLOOR,
};
use auo::conic::{solve_conic, solve_conic_traced, SolverSettings};
use auo::linalg::{matvec, norm1, norm2, write_vector};
use auo::model::{
    gen_instance, read_instance, write_instance, AmplitudeMode, DeltaSemantics, InstanceConfig,
    MatrixMode,
};
use auo::recovery::{
    compile_auo, compile_bp, compile_ds, decompile, omp, OmpStop, RecoveryMethod, RecoveryResult,
    DEFAULT_TAU,
};
use auo::Error;

#[derive(Parser)]
#[command(
    name = "auo",
    version,
    about = "Sparse recovery under measurement matrix uncertainty"
)]
struct Cli {
    /// Print the resolved configuration and exit without running.
    #[arg(long, global = true)]
    dump_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a measurement instance file.
    Gen(GenArgs),
    /// Recover a sparse signal from an instance file.
    Recover(RecoverArgs),
    /// Monte Carlo support-error sweep over K or M.
    Bench(BenchArgs),
    /// Averaged normalized recovery profile over a fixed support.
    Profile(ProfileArgs),
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value = "elementwise")]
    delta_semantics: DeltaSemantics,
    #[arg(long, default_value = "subsampled-identity")]
    matrix_mode: MatrixMode,
    /// Perturbation standard deviation as a multiple of delta.
    #[arg(long, default_value_t = 0.5)]
    sigma_ratio: f64,
    /// `unit-ones` or `custom:a1,a2,...`
    #[arg(long, default_value = "unit-ones")]
    amplitude: AmplitudeMode,
}

impl ModelArgs {
    fn config(&self, defaults: (usize, usize, usize, f64)) -> InstanceConfig {
        InstanceConfig {
            n: self.n.unwrap_or(defaults.0),
            m: self.m.unwrap_or(defaults.1),
            k: self.k.unwrap_or(defaults.2),
            delta: self.delta.unwrap_or(defaults.3),
            delta_semantics: self.delta_semantics,
            amplitude: self.amplitude.clone(),
            matrix_mode: self.matrix_mode,
            sigma_ratio: self.sigma_ratio,
            seed: 0,
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Primal, dual and gap tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 50_000)]
    max_iters: usize,
}

impl SolverArgs {
    fn settings(&self) -> SolverSettings {
        SolverSettings {
            max_iters: self.max_iters,
            ..SolverSettings::default().with_tolerance(self.tol)
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RecoverArgs {
    #[arg(long)]
    instance: PathBuf,
    /// bp, auo, ds or omp
    #[arg(long)]
    method: String,
    /// AUO uncertainty bound.
    #[arg(long)]
    delta: Option<f64>,
    /// DS correlation bound.
    #[arg(long)]
    lambda: Option<f64>,
    /// OMP atom count; defaults to the instance K.
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration residual CSV (conic methods only).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "k_list",
        required_unless_present = "k_list"
    )]
    m_list: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    k_list: Option<Vec<usize>>,
    #[command(flatten)]
    methods: MethodArgs,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// Magnitudes below this never count as detected.
    #[arg(long, default_value_t = DEFAULT_SUPPORT_FLOOR)]
    support_floor: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    methods: MethodArgs,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// max-abs or l2
    #[arg(long, default_value = "max-abs")]
    normalization: Normalization,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MethodArgs {
    /// Comma-separated subset of bp, auo, ds, omp.
    #[arg(long, value_delimiter = ',', default_value = "bp,auo")]
    methods: Vec<String>,
    /// λ for ds.
    #[arg(long)]
    lambda: Option<f64>,
}

impl MethodArgs {
    fn resolve(&self) -> Result<Vec<BenchMethod>, CliError> {
        self.methods
            .iter()
            .map(|name| match name.as_str() {
                "ds" => self
                    .lambda
                    .map(|lambda| BenchMethod::Ds { lambda })
                    .ok_or_else(|| CliError::Usage("method ds needs --lambda".into())),
                other => other
                    .parse()
                    .map_err(|e: Error| CliError::Usage(e.to_string())),
            })
            .collect()
    }
}

enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn describe(c: &InstanceConfig) -> String {
    format!(
        "N={} M={} K={} delta={} delta_semantics={} matrix_mode={} sigma_ratio={} amplitude={}",
        c.n, c.m, c.k, c.delta, c.delta_semantics, c.matrix_mode, c.sigma_ratio, c.amplitude
    )
}

fn describe_settings(s: &SolverSettings) -> String {
    format!("tol={} max_iters={}", s.eps_primal, s.max_iters)
}

fn methods_list(methods: &[BenchMethod]) -> String {
    methods
        .iter()
        .map(|m| m.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn join<T: ToString>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn gen(args: GenArgs, dump: bool) -> Result<(), CliError> {
    let mut config = args.model.config((500, 125, 6, 0.7));
    config.seed = args.seed;
    config.validate().map_err(usage)?;
    println!(
        "config: gen {} seed={} out={}",
        describe(&config),
        config.seed,
        args.out.display()
    );
    if dump {
        return Ok(());
    }
    let inst = gen_instance(&config)?;
    write_instance(&args.out, &inst)?;
    println!(
        "wrote instance N={} M={} K={} delta={} seed={} to {}",
        config.n,
        config.m,
        config.k,
        config.delta,
        config.seed,
        args.out.display()
    );
    Ok(())
}

fn recover_cmd(args: RecoverArgs, dump: bool) -> Result<(), CliError> {
    let settings = args.solver.settings();
    settings.validate().map_err(usage)?;
    if !(args.tau > 0.0 && args.tau < 1.0) {
        return Err(CliError::Usage(format!(
            "--tau must be in (0, 1), got {}",
            args.tau
        )));
    }
    let method = match args.method.as_str() {
        "bp" => RecoveryMethod::Bp,
        "auo" => RecoveryMethod::Auo {
            delta: args
                .delta
                .ok_or_else(|| CliError::Usage("method auo needs --delta".into()))?,
        },
        "ds" => RecoveryMethod::Ds {
            lambda: args
                .lambda
                .ok_or_else(|| CliError::Usage("method ds needs --lambda".into()))?,
        },
        "omp" => RecoveryMethod::Omp(OmpStop::Sparsity(args.sparsity.unwrap_or(0))),
        other => return Err(CliError::Usage(format!("unknown method `{other}`"))),
    };
    if args.trace.is_some() && matches!(method, RecoveryMethod::Omp(_)) {
        return Err(CliError::Usage(
            "--trace applies to bp, auo and ds only".into(),
        ));
    }
    if !matches!(method, RecoveryMethod::Omp(_)) {
        method.validate().map_err(usage)?;
    }

    let inst = read_instance(&args.instance)?;
    let method = match method {
        RecoveryMethod::Omp(OmpStop::Sparsity(0)) => {
            RecoveryMethod::Omp(OmpStop::Sparsity(inst.config.k.max(1)))
        }
        m => m,
    };
    method.validate().map_err(usage)?;
    println!(
        "config: recover instance={} method={} tau={} {} out={}{}",
        args.instance.display(),
        method,
        args.tau,
        describe_settings(&settings),
        args.out.display(),
        args.trace
            .as_ref()
            .map(|p| format!(" trace={}", p.display()))
            .unwrap_or_default()
    );
    if dump {
        return Ok(());
    }

    let (b, y) = (&inst.b, &inst.y);
    let result: RecoveryResult = match method {
        RecoveryMethod::Omp(stop) => omp(b, y, stop, args.tau)?,
        conic => {
            let compiled = match conic {
                RecoveryMethod::Bp => compile_bp(b, y)?,
                RecoveryMethod::Auo { delta } => compile_auo(b, y, delta)?,
                RecoveryMethod::Ds { lambda } => compile_ds(b, y, lambda)?,
                RecoveryMethod::Omp(_) => unreachable!(),
            };
            let solution = match &args.trace {
                Some(path) => {
                    let mut w = create(path)?;
                    let s = solve_conic_traced(&compiled.problem, &settings, &mut w)?;
                    w.flush()?;
                    s
                }
                None => solve_conic(&compiled.problem, &settings)?,
            };
            decompile(
                &compiled,
                &solution.x,
                solution.status,
                solution.iters,
                args.tau,
            )?
        }
    };

    let mut w = create(&args.out)?;
    write_vector(&mut w, &result.theta_hat)?;
    w.flush()?;

    let residual = {
        let bt = matvec(b, &result.theta_hat)?;
        let r: Vec<f64> = y.iter().zip(bt.iter()).map(|(a, b)| a - b).collect();
        norm2(&r)?
    };
    println!("status: {}", result.solver_status);
    println!("iterations: {}", result.iterations);
    println!("objective: {:.10e}", result.objective);
    println!("residual_l2: {residual:.10e}");
    if let (Some(t), RecoveryMethod::Auo { delta }) = (result.t_value, method) {
        let bound = (b.rows() as f64).sqrt() * delta * t;
        let l1 = norm1(&result.theta_hat)?;
        println!("t: {t:.10e}");
        println!("constraint residual_l2 <= sqrt(M) delta t: {residual:.10e} <= {bound:.10e}");
        println!("constraint l1 <= t: {l1:.10e} <= {t:.10e}");
    }
    println!("support: [{}]", join(&result.support));
    Ok(())
}

fn bench(args: BenchArgs, dump: bool) -> Result<(), CliError> {
    let base = args.model.config((100, 25, 3, 0.7));
    let (variable, values) = match (&args.m_list, &args.k_list) {
        (Some(m), None) => (SweepVariable::M, m.clone()),
        (None, Some(k)) => (SweepVariable::K, k.clone()),
        _ => {
            return Err(CliError::Usage(
                "give exactly one of --m-list and --k-list".into(),
            ))
        }
    };
    let mut config = SweepConfig::new(base, variable, values);
    config.methods = args.methods.resolve()?;
    config.trials = args.trials;
    config.tau = args.tau;
    config.support_floor = args.support_floor;
    config.master_seed = args.seed;
    config.settings = args.solver.settings();
    config.validate().map_err(usage)?;
    let exec = Execution {
        threads: args.threads,
    };
    if exec.threads == Some(0) {
        return Err(CliError::Usage("--threads must be >= 1".into()));
    }
    println!(
        "config: bench {} sweep={} values={} methods={} trials={} tau={} support_floor={} seed={} {} threads={} out={}",
        describe(&config.base),
        variable,
        join(&config.sweep_values),
        methods_list(&config.methods),
        config.trials,
        config.tau,
        config.support_floor,
        config.master_seed,
        describe_settings(&config.settings),
        exec.threads.map(|t| t.to_string()).unwrap_or_else(|| "auto".into()),
        args.out.display()
    );
    if dump {
        return Ok(());
    }
    let report = run_sweep(&config, exec)?;
    let mut w = create(&args.out)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    for r in &report.rows {
        println!(
            "{} {}={} rho={:.4} fa={:.4} miss={:.4} trials={} failures={}",
            r.method,
            variable,
            r.sweep_value,
            r.rho_mean,
            r.fa_mean,
            r.miss_mean,
            r.trials,
            r.failures
        );
    }
    Ok(())
}

fn profile(args: ProfileArgs, dump: bool) -> Result<(), CliError> {
    let mut config = ProfileConfig::new(args.model.config((100, 25, 6, 0.7)));
    config.methods = args.methods.resolve()?;
    config.trials = args.trials;
    config.normalization = args.normalization;
    config.master_seed = args.seed;
    config.settings = args.solver.settings();
    config.validate().map_err(usage)?;
    let exec = Execution {
        threads: args.threads,
    };
    if exec.threads == Some(0) {
        return Err(CliError::Usage("--threads must be >= 1".into()));
    }
    println!(
        "config: profile {} methods={} trials={} normalization={} seed={} {} threads={} out={}",
        describe(&config.base),
        methods_list(&config.methods),
        config.trials,
        config.normalization,
        config.master_seed,
        describe_settings(&config.settings),
        exec.threads
            .map(|t| t.to_string())
            .unwrap_or_else(|| "auto".into()),
        args.out.display()
    );
    if dump {
        return Ok(());
    }
    let p = run_profile(&config, exec)?;
    let mut w = create(&args.out)?;
    p.write_csv(&mut w)?;
    w.flush()?;
    for ((name, _), failed) in p.columns.iter().zip(&p.failures) {
        println!("{name}: {} trials, {failed} failures", config.trials);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let dump = cli.dump_config;
    let outcome = match cli.command {
        Command::Gen(a) => gen(a, dump),
        Command::Recover(a) => recover_cmd(a, dump),
        Command::Bench(a) => bench(a, dump),
        Command::Profile(a) => profile(a, dump),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
