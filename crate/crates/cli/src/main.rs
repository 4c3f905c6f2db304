use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rrho::{derive_params, exact_emd, preprocess, sinkhorn, solve, Engine, Mode, Overrides, ProblemInstance, Termination};
use rrho_cli::bench::{self, BenchSpec};
use rrho_cli::report::{to_json, BaselineAlgo, BaselineReport, DistReport};
use rrho_cli::{init_threads, load_point_set, suites, Suite};

#[derive(Parser, Debug)]
#[command(name = "rrho", version, about = "Relaxed optimal transport distances between weighted point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Approximate R_rho between two point sets and print a JSON report.
    Dist(DistArgs),
    /// Compute a reference transport cost (exact EMD or Sinkhorn).
    Baseline(BaselineArgs),
    /// Run seeded validation suites.
    Validate(ValidateArgs),
    /// Time the solver over a grid of sizes and exponents; CSV on stdout.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct Inputs {
    /// CSV file with header `w,x1,...,xd`.
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    nu: PathBuf,
}

#[derive(Args, Debug)]
struct DistArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value_t = 1.5)]
    rho: f64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = Mode::Practical)]
    mode: Mode,
    #[arg(long, default_value_t = Engine::Exact)]
    engine: Engine,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_iters: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_enum)]
    algo: BaselineAlgo,
    /// Entropic regularization for sinkhorn, in absolute units (default 0.01 r).
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Suite name, or `all`.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [8, 16, 32, 64])]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.25, 1.5, 2.0])]
    rhos: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    #[arg(long, default_value_t = Mode::Practical)]
    mode: Mode,
    #[arg(long, default_value_t = Engine::Sampling)]
    engine: Engine,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    init_threads()?;
    match cli.command {
        Command::Dist(args) => dist(args),
        Command::Baseline(args) => baseline(args),
        Command::Validate(args) => validate(args),
        Command::Bench(args) => run_bench(args),
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load_pair(inputs: &Inputs) -> Result<(rrho_cli::Loaded, rrho_cli::Loaded)> {
    let mu = load_point_set(&inputs.mu)?;
    let nu = load_point_set(&inputs.nu)?;
    if mu.set.dim() != nu.set.dim() {
        bail!("dimension mismatch: {} has {} coordinates, {} has {}", inputs.mu.display(), mu.set.dim(), inputs.nu.display(), nu.set.dim());
    }
    for w in mu.warnings.iter().chain(&nu.warnings) {
        eprintln!("warning: {w}");
    }
    Ok((mu, nu))
}

fn dist(args: DistArgs) -> Result<ExitCode> {
    let (mu, nu) = load_pair(&args.inputs)?;
    let overrides = Overrides { max_iters: args.max_iters, ..Default::default() };
    let p0 = derive_params(args.rho, args.eps, mu.set.len(), nu.set.len(), args.mode, Some(&overrides))?;
    let inst = preprocess(&mu.set, &nu.set, &p0)?;
    let params = p0.fit(&inst)?;
    let report = solve(&inst, &params.holder(), &params, args.engine, args.seed)?;

    let mut warnings: Vec<String> = mu.warnings.into_iter().chain(nu.warnings).collect();
    for w in &inst.warnings {
        eprintln!("warning: {w}");
        warnings.push(w.clone());
    }
    let json = DistReport::new(&report, mu.set.len(), nu.set.len(), inst.sigma_actual, warnings);
    emit(&to_json(&json)?, args.out.as_deref())?;
    Ok(match report.termination {
        Termination::Converged => ExitCode::SUCCESS,
        Termination::MaxIters => ExitCode::from(2),
    })
}

fn baseline(args: BaselineArgs) -> Result<ExitCode> {
    let (mu, nu) = load_pair(&args.inputs)?;
    let (n, m) = (mu.set.len(), nu.set.len());
    let inst = ProblemInstance::raw(mu.set, nu.set)?;
    let start = Instant::now();
    let (result, eta) = match args.algo {
        BaselineAlgo::Emd => {
            if args.eta.is_some() {
                bail!("--eta only applies to --algo sinkhorn");
            }
            (exact_emd(&inst)?, None)
        }
        BaselineAlgo::Sinkhorn => {
            let eta = args.eta.unwrap_or(0.01 * inst.r);
            (sinkhorn(&inst, eta, 1e-9, 100_000)?, Some(eta))
        }
    };
    let report = BaselineReport {
        algo: args.algo,
        value: result.value,
        eta,
        r: inst.r,
        iterations: result.iterations,
        n,
        m,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    emit(&to_json(&report)?, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn validate(args: ValidateArgs) -> Result<ExitCode> {
    let selected: Vec<Suite> = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![args.suite.parse().map_err(anyhow::Error::msg)?]
    };
    let mut ok = true;
    for suite in selected {
        let outcome = suites::run(suite, args.seed)?;
        println!("{outcome}");
        for f in &outcome.failures {
            println!("  FAIL {f}");
        }
        ok &= outcome.all_passed();
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn run_bench(args: BenchArgs) -> Result<ExitCode> {
    let spec = BenchSpec {
        sizes: args.sizes,
        rhos: args.rhos,
        dim: args.dim,
        eps: args.eps,
        engine: args.engine,
        mode: args.mode,
        seed: args.seed,
    };
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            bench::run(&spec, file)?;
        }
        None => {
            bench::run(&spec, std::io::stdout().lock())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
