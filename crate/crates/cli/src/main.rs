use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use symindex_cli::config::threads_from_env;
use symindex_cli::{run_experiment, CliError, ConfigFile, ExperimentConfig, Overrides, Verb};

#[derive(Parser)]
#[command(name = "symindex", version = env!("SYMINDEX_VERSION"), about = "Index-estimate experiments on minimal hypersurfaces")]
struct Cli {
    #[command(subcommand)]
    verb: Option<Command>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML file with [experiment], [tolerances], [output] and [params] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    immersion: Option<String>,
    /// Comma-separated grid resolutions.
    #[arg(long, global = true, value_delimiter = ',', num_args = 0..)]
    resolutions: Option<Vec<usize>>,
    #[arg(long, global = true)]
    tol_zero: Option<f64>,
    /// Relative tolerance for quadrature-level identities.
    #[arg(long, global = true)]
    quadrature: Option<f64>,
    /// Directory for the JSON, CSV and text reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the JSON report on stdout.
    #[arg(long, global = true, conflicts_with = "csv")]
    json: bool,
    /// Print the CSV summary on stdout.
    #[arg(long, global = true)]
    csv: bool,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Jacobi spectrum, zero trace and index bounds on the Clifford torus.
    CliffordS3,
    /// Jacobi spectrum of the equatorial sphere.
    EquatorSn {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Vanishing trace of the wedge family under refinement.
    TraceZero,
    /// First trace identity (ψ family).
    #[command(name = "trace-formula-1")]
    TraceFormula1,
    /// Second trace identity (wedge family, umbilic target).
    #[command(name = "trace-formula-2")]
    TraceFormula2 {
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Sampled sup β over a radius grid on the Berger sphere.
    BergerScan {
        #[arg(long)]
        r_min: Option<f64>,
        #[arg(long)]
        r_max: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Sign changes of the bound, exact and sampled sup β.
    BergerThreshold {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Euclidean comparison constant from assembled forms.
    EuclidCompare,
    /// Smooth simultaneous diagonalization examples.
    Simdiag {
        #[arg(long)]
        example: Option<String>,
        /// JSON pair file for the custom example.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Exact bound constants and the Clifford bound checks.
    BoundCheck,
    /// Observed order of a verb's error under refinement.
    Convergence {
        #[arg(long)]
        verb: Option<String>,
    },
}

fn overrides(c: &Common, cmd: Option<&Command>) -> Overrides {
    let mut o = Overrides {
        model: c.model.clone(),
        immersion: c.immersion.clone(),
        resolutions: c.resolutions.clone(),
        tol_zero: c.tol_zero,
        quadrature: c.quadrature,
        output_dir: c.out.clone(),
        seed: c.seed,
        ..Default::default()
    };
    match cmd {
        Some(Command::EquatorSn { n }) => o.n = *n,
        Some(Command::TraceFormula2 { rho }) => o.rho = *rho,
        Some(Command::BergerScan { r_min, r_max, samples, points }) => {
            (o.r_min, o.r_max, o.samples, o.points) = (*r_min, *r_max, *samples, *points);
        }
        Some(Command::BergerThreshold { samples }) => o.samples = *samples,
        Some(Command::Simdiag { example, input }) => (o.example, o.input) = (example.clone(), input.clone()),
        Some(Command::Convergence { verb }) => o.verb = verb.clone(),
        _ => {}
    }
    o
}

fn verb_of(cmd: &Command) -> Verb {
    match cmd {
        Command::CliffordS3 => Verb::CliffordS3,
        Command::EquatorSn { .. } => Verb::EquatorSn,
        Command::TraceZero => Verb::TraceZero,
        Command::TraceFormula1 => Verb::TraceFormula1,
        Command::TraceFormula2 { .. } => Verb::TraceFormula2,
        Command::BergerScan { .. } => Verb::BergerScan,
        Command::BergerThreshold { .. } => Verb::BergerThreshold,
        Command::EuclidCompare => Verb::EuclidCompare,
        Command::Simdiag { .. } => Verb::Simdiag,
        Command::BoundCheck => Verb::BoundCheck,
        Command::Convergence { .. } => Verb::Convergence,
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let file = cli.common.config.as_deref().map(ConfigFile::load).transpose()?;
    let verb = match (&cli.verb, &file) {
        (Some(cmd), _) => verb_of(cmd),
        (None, Some(f)) => Verb::parse(f.experiment_name().ok_or_else(|| CliError::Usage("config names no experiment".into()))?)?,
        (None, None) => return Err(CliError::Usage("no experiment given; pass a verb or --config".into())),
    };
    let cfg = ExperimentConfig::resolve(verb, file.as_ref(), &overrides(&cli.common, cli.verb.as_ref()), threads_from_env()?)?;
    let report = run_experiment(&cfg)?;
    if let Some(dir) = &cfg.output_dir {
        for p in report.write_files(dir)? {
            eprintln!("wrote {}", p.display());
        }
    }
    if cli.common.json {
        print!("{}", report.to_json());
    } else if cli.common.csv {
        print!("{}", report.to_csv());
    } else {
        print!("{}", report.to_text());
    }
    for c in report.failures() {
        eprintln!("identity failed: {} = {:e} (limit {:e})", c.name, c.value, c.limit);
    }
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("symindex: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
