use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use gpforge::bounds::{
    belkin_lambda_bound, ciq_min_iterations, ciq_min_quadrature, condition_number_bound, decay_regime,
    decay_regime_iterations, default_delta_q, delta_q_cap, rff_min_features, DecayModel, Regime, DEFAULT_DELTA, DEFAULT_EPSILON,
    DEFAULT_ETA,
};
use gpforge::ciq::ciq_sample;
use gpforge::exact::{exact_sample, whiten};
use gpforge::io::{
    read_inputs_csv, read_sample_csv, write_inputs_csv, write_json, write_report_csv, write_sample_csv,
    write_sweep_csv, CsvSampleSink, SampleSidecar,
};
use gpforge::kernel::{gram, sample_inputs};
use gpforge::precond::{default_rank, effectiveness_sweep, preconditioned_condition_bound};
use gpforge::rff::{rff_sample, rff_sample_streaming};
use gpforge::stats::{cvm_test, rejection_rate_experiment};
use gpforge::{Error, ExperimentConfig, FidelitySpec, InputData, KernelParams, Method};

#[derive(Parser, Debug)]
#[command(name = "gpforge", version, about = "Gaussian process prior sampling with fidelity bounds")]
struct Cli {
    /// Worker threads for experiment repeats (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the fidelity parameters implied by a TV budget.
    Bounds(BoundsArgs),
    /// Draw one sample and write it as CSV plus a JSON sidecar.
    Sample(SampleArgs),
    /// Run a rejection-rate experiment from a JSON config.
    Experiment(ExperimentArgs),
    /// Tabulate the Nyström preconditioner deviation across lengthscales.
    PrecondSweep(SweepArgs),
    /// Whiten an existing sample and run the Cramér-von Mises test.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone)]
struct KernelArgs {
    /// Signal variance σ_f².
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    #[arg(long, default_value_t = 1.0)]
    lengthscale: f64,
    /// Noise variance σ_ξ².
    #[arg(long, default_value_t = 0.25)]
    noise: f64,
    /// Input dimension.
    #[arg(long, default_value_t = 2)]
    dim: usize,
}

impl KernelArgs {
    fn params(&self) -> gpforge::Result<KernelParams> {
        KernelParams::new(self.variance, self.lengthscale, self.noise, self.dim)
    }
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long)]
    method: Method,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    eps: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    /// Quadrature budget δ_Q (default: half its cap).
    #[arg(long)]
    delta_q: Option<f64>,
    /// Constant absorbing lower-order terms in the iteration bounds.
    #[arg(long, default_value_t = 0.0)]
    c_tilde: f64,
    /// Eigenvalue decay rate used for the regime classification.
    #[arg(long, default_value_t = 1.0)]
    c1: f64,
    #[arg(long, default_value_t = 1.0)]
    c2: f64,
    #[command(flatten)]
    kernel: KernelArgs,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    method: Method,
    /// Number of points; ignored when --inputs is given.
    #[arg(long)]
    n: Option<usize>,
    /// CSV of input points with header x0,...,x{d-1}.
    #[arg(long)]
    inputs: Option<PathBuf>,
    /// Where to write the generated inputs.
    #[arg(long)]
    inputs_out: Option<PathBuf>,
    #[arg(long, env = "GPFORGE_SEED", default_value_t = 0)]
    seed: u64,
    /// Output CSV; the sidecar goes next to it with a .json extension.
    #[arg(long, short)]
    output: PathBuf,
    /// Random features (rff).
    #[arg(long = "features", short = 'D')]
    features: Option<usize>,
    /// Quadrature nodes (ciq, pciq).
    #[arg(long = "quadrature", short = 'Q')]
    quadrature: Option<usize>,
    /// Lanczos iterations (ciq, pciq).
    #[arg(long = "iterations", short = 'J')]
    iterations: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    eps: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    #[arg(long)]
    delta_q: Option<f64>,
    /// Nyström rank for pciq (default ⌊√n⌋).
    #[arg(long)]
    precond_rank: Option<usize>,
    /// Stream rff rows straight to disk without materialising the inputs.
    #[arg(long)]
    stream: bool,
    #[command(flatten)]
    kernel: KernelArgs,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// JSON config file.
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    fidelity_grid: Option<Vec<f64>>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, env = "GPFORGE_SEED")]
    seed: Option<u64>,
    /// Report CSV; a JSON report is written next to it.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "2000")]
    n_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.05,0.1,0.2,0.5,1,2,5,10")]
    lengthscales: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    /// Nyström rank (default ⌊√n⌋).
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, env = "GPFORGE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    #[arg(long, default_value_t = 0.001)]
    noise: f64,
    #[arg(long, default_value_t = 2)]
    dim: usize,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Sample CSV with header index,y.
    #[arg(long)]
    sample: PathBuf,
    /// Input CSV the sample was drawn at.
    #[arg(long)]
    inputs: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Read kernel parameters from a sample sidecar instead of flags.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[command(flatten)]
    kernel: KernelArgs,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. } | Error::ConstraintViolation { .. } => Failure::Usage(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Bounds(a) => cmd_bounds(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::PrecondSweep(a) => cmd_precond_sweep(a),
        Command::Verify(a) => cmd_verify(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[derive(Serialize)]
struct BoundsReport {
    method: Method,
    n: usize,
    epsilon: f64,
    delta: f64,
    #[serde(rename = "delta_Q")]
    delta_q: Option<f64>,
    eta: f64,
    #[serde(rename = "D")]
    features: Option<usize>,
    #[serde(rename = "Q")]
    quadrature: Option<usize>,
    #[serde(rename = "J")]
    iterations: Option<usize>,
    c_tilde: f64,
    kappa_bound: Option<f64>,
    regime: Option<Regime>,
}

fn cmd_bounds(a: BoundsArgs) -> CmdResult {
    let params = a.kernel.params()?;
    let sigma2 = params.noise_variance;
    let mut spec = FidelitySpec {
        epsilon: a.eps,
        delta: a.delta,
        eta: a.eta,
        c_tilde: a.c_tilde,
        ..FidelitySpec::default()
    };
    let mut kappa_bound = None;
    let mut regime = None;
    match a.method {
        Method::Exact => {}
        Method::Rff => spec.features = Some(rff_min_features(a.n, a.eps, a.delta, sigma2)?),
        Method::Ciq | Method::CiqPreconditioned => {
            let dq = resolve_delta_q(a.delta_q, a.eps, a.eta, sigma2)?;
            spec.delta_q = Some(dq);
            let q = ciq_min_quadrature(a.n, a.eta, sigma2, dq)?;
            spec.quadrature = Some(q);
            let model = DecayModel::new(a.c1, a.c2, params.variance.sqrt(), params.dim)?;
            regime = Some(decay_regime(a.n, &model).regime);
            if a.method == Method::Ciq {
                spec.iterations = Some(ciq_min_iterations(a.n, a.eta, sigma2, a.eps, dq, q)?);
                kappa_bound = Some(condition_number_bound(a.n, a.eta, sigma2, params.variance));
            } else {
                spec.iterations = Some(decay_regime_iterations(a.n, &model, a.eta, sigma2, a.eps, dq, a.c_tilde)?);
                let k = default_rank(a.n);
                let lambda = belkin_lambda_bound(k + 1, a.n, &model);
                kappa_bound = Some(preconditioned_condition_bound(lambda, a.n, a.eta, sigma2, k));
            }
        }
    }
    spec.validate(sigma2)?;
    let report = BoundsReport {
        method: a.method,
        n: a.n,
        epsilon: spec.epsilon,
        delta: spec.delta,
        delta_q: spec.delta_q,
        eta: spec.eta,
        features: spec.features,
        quadrature: spec.quadrature,
        iterations: spec.iterations,
        c_tilde: spec.c_tilde,
        kappa_bound,
        regime,
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, &report).context("writing bounds")?;
    writeln!(out)?;
    Ok(())
}

/// δ_Q from the flag or half its cap, rejected outside `(0, cap)`.
fn resolve_delta_q(flag: Option<f64>, eps: f64, eta: f64, sigma2: f64) -> gpforge::Result<f64> {
    let cap = delta_q_cap(eps, eta, sigma2);
    let dq = flag.unwrap_or_else(|| default_delta_q(eps, eta, sigma2));
    if dq > 0.0 && dq < cap {
        Ok(dq)
    } else {
        Err(Error::ConstraintViolation { delta_q: dq, cap })
    }
}

fn sidecar_path(output: &Path) -> PathBuf {
    output.with_extension("json")
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn cmd_sample(a: SampleArgs) -> CmdResult {
    let params = a.kernel.params()?;
    let sigma2 = params.noise_variance;

    if a.stream {
        if a.method != Method::Rff || a.inputs.is_some() {
            return Err(Failure::Usage(anyhow::anyhow!("--stream needs --method rff and generated inputs")));
        }
        let n = a.n.ok_or_else(|| Failure::Usage(anyhow::anyhow!("--n is required without --inputs")))?;
        let d = match a.features {
            Some(d) => d,
            None => rff_min_features(n, a.eps, a.delta, sigma2)?,
        };
        let mut sink = CsvSampleSink::new(create(&a.output)?)?;
        rff_sample_streaming(n, &params, d, a.seed, &mut sink)?;
        sink.finish()?;
        let sidecar = SampleSidecar {
            method: Method::Rff,
            n,
            params,
            fidelity: FidelitySpec {
                epsilon: a.eps,
                delta: a.delta,
                features: Some(d),
                ..FidelitySpec::default()
            },
            seed: a.seed,
            inputs_seed: Some(a.seed),
        };
        write_json(&sidecar_path(&a.output), &sidecar)?;
        return Ok(());
    }

    let (x, inputs_seed): (InputData, Option<u64>) = match &a.inputs {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let x = read_inputs_csv(BufReader::new(f))?;
            if x.dim() != params.dim {
                return Err(Failure::Usage(anyhow::anyhow!(
                    "inputs have {} columns but --dim is {}",
                    x.dim(),
                    params.dim
                )));
            }
            (x, None)
        }
        None => {
            let n = a.n.ok_or_else(|| Failure::Usage(anyhow::anyhow!("--n is required without --inputs")))?;
            (sample_inputs(n, &params, a.seed)?, Some(a.seed))
        }
    };
    let n = x.n();
    if let Some(path) = &a.inputs_out {
        let mut w = create(path)?;
        write_inputs_csv(&mut w, &x)?;
        w.flush()?;
    }

    let mut sample = match a.method {
        Method::Exact => exact_sample(&x, &params, a.seed)?,
        Method::Rff => {
            let d = match a.features {
                Some(d) => d,
                None => rff_min_features(n, a.eps, a.delta, sigma2)?,
            };
            let mut s = rff_sample(&x, &params, d, a.seed)?;
            s.fidelity.epsilon = a.eps;
            s.fidelity.delta = a.delta;
            s
        }
        Method::Ciq | Method::CiqPreconditioned => {
            let dq = resolve_delta_q(a.delta_q, a.eps, a.eta, sigma2)?;
            let q = match a.quadrature {
                Some(q) => q,
                None => ciq_min_quadrature(n, a.eta, sigma2, dq)?,
            };
            let j = match a.iterations {
                Some(j) => j,
                None => ciq_min_iterations(n, a.eta, sigma2, a.eps, dq, q)?,
            };
            let rank = (a.method == Method::CiqPreconditioned)
                .then(|| a.precond_rank.unwrap_or_else(|| default_rank(n)).min(n));
            let mut s = ciq_sample(&x, &params, a.eta, q, j, a.seed, rank)?;
            s.fidelity.epsilon = a.eps;
            s.fidelity.delta_q = Some(dq);
            s
        }
    };
    sample.seed = a.seed;

    let mut w = create(&a.output)?;
    write_sample_csv(&mut w, sample.y.as_slice())?;
    w.flush()?;
    write_json(&sidecar_path(&a.output), &SampleSidecar::from_sample(&sample, inputs_seed))?;
    Ok(())
}

fn load_config(a: &ExperimentArgs) -> anyhow::Result<ExperimentConfig> {
    let f = File::open(&a.config).with_context(|| format!("opening {}", a.config.display()))?;
    let mut cfg: ExperimentConfig =
        serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", a.config.display()))?;
    if let Some(m) = a.method {
        cfg.method = m;
    }
    if let Some(v) = &a.n_list {
        cfg.n_list = v.clone();
    }
    if let Some(v) = &a.fidelity_grid {
        cfg.fidelity_grid = v.clone();
    }
    if let Some(r) = a.repeats {
        cfg.repeats = r;
    }
    if let Some(al) = a.alpha {
        cfg.alpha = al;
    }
    if let Some(s) = a.seed {
        cfg.base_seed = s;
    }
    if let Some(o) = &a.output {
        cfg.output = Some(o.display().to_string());
    }
    Ok(cfg)
}

fn cmd_experiment(a: ExperimentArgs) -> CmdResult {
    let cfg = load_config(&a).map_err(Failure::Usage)?;
    cfg.validate()?;
    let report = rejection_rate_experiment(&cfg)?;
    for c in &report.cells {
        if c.failures > 0 {
            eprintln!(
                "warning: n={} fidelity={}: {} of {} repeats failed",
                c.n, c.fidelity, c.failures, c.repeats
            );
        }
    }
    match &cfg.output {
        Some(path) => {
            let path = PathBuf::from(path);
            let mut w = create(&path)?;
            write_report_csv(&mut w, &report)?;
            w.flush()?;
            write_json(&sidecar_path(&path), &report)?;
        }
        None => write_report_csv(io::stdout().lock(), &report)?,
    }
    Ok(())
}

fn cmd_precond_sweep(a: SweepArgs) -> CmdResult {
    let params = KernelParams::new(a.variance, 1.0, a.noise, a.dim)?;
    let rank = a.rank;
    let rows = effectiveness_sweep(
        &a.n_list,
        &a.lengthscales,
        &params,
        a.eta,
        |n| rank.unwrap_or_else(|| default_rank(n)),
        a.seed,
    )?;
    match &a.output {
        Some(path) => {
            let mut w = create(path)?;
            write_sweep_csv(&mut w, &rows)?;
            w.flush()?;
        }
        None => write_sweep_csv(io::stdout().lock(), &rows)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    n: usize,
    statistic: f64,
    alpha: f64,
    critical_value: f64,
    reject: bool,
}

fn cmd_verify(a: VerifyArgs) -> CmdResult {
    let params = match &a.sidecar {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let side: SampleSidecar = serde_json::from_reader(BufReader::new(f))
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(Failure::Usage)?;
            side.params
        }
        None => a.kernel.params()?,
    };
    let y = {
        let f = File::open(&a.sample).with_context(|| format!("opening {}", a.sample.display()))?;
        read_sample_csv(BufReader::new(f))?
    };
    let x = {
        let f = File::open(&a.inputs).with_context(|| format!("opening {}", a.inputs.display()))?;
        read_inputs_csv(BufReader::new(f))?
    };
    if x.n() != y.len() {
        return Err(Failure::Usage(anyhow::anyhow!(
            "sample has {} values but inputs have {} rows",
            y.len(),
            x.n()
        )));
    }
    let k_xi = gram(&x, &params, params.noise_variance)?;
    let z = whiten(&DVector::from_vec(y), &k_xi)?;
    let r = cvm_test(z.as_slice(), a.alpha)?;
    let report = VerifyReport {
        n: x.n(),
        statistic: r.statistic,
        alpha: r.alpha,
        critical_value: r.critical_value,
        reject: r.reject,
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, &report).context("writing report")?;
    writeln!(out)?;
    Ok(())
}
