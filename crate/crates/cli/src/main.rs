use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qprecision::experiment::{self, ExperimentConfig, Mode, RunOutput, SingleOptions};
use qprecision::markov::LindbladSpec;
use qprecision::model::ModelDocument;
use qprecision::Error;

const EXIT_CONFIG: u8 = 4;
const EXIT_ACCURACY: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "qprecision", version, about = "Uncertainty relations for open quantum systems")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "QPRECISION_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Currents of random qubit models against the generalized TUR.
    TurScatter(Common),
    /// Generic observables of random qubit models against the generalized KUR.
    KurScatter {
        #[command(flatten)]
        common: Common,
        /// Start every environment in its lowest level, enabling the survival bound.
        #[arg(long)]
        pure_environment: bool,
    },
    /// Σ*, S̄_EE and 𝒬 of one model across a grid of couplings.
    LambdaSweep(Common),
    /// Short-time checks of Lindblad dynamics.
    MarkovSuite {
        #[command(flatten)]
        common: Common,
        /// Extra Lindblad spec (JSON) to check; repeatable.
        #[arg(long)]
        lindblad: Vec<PathBuf>,
    },
    /// Bounds for one model read from JSON.
    Single {
        model: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Write every trajectory of the first observable to this CSV file.
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    /// Number of random models.
    #[arg(long)]
    models: Option<usize>,
    /// Coupling strength.
    #[arg(long)]
    lambda: Option<f64>,
    /// Output directory [default: current directory].
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// TOML or JSON configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Maximum number of enumerated trajectories per model.
    #[arg(long)]
    cap: Option<u64>,
    /// Also write a gnuplot script.
    #[arg(long)]
    gnuplot: bool,
}

impl Common {
    fn config(&self, mode: Mode) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(m) = cfg.mode {
            if m != mode {
                return Err(Error::Config(format!("config is for mode {m}, command is {mode}")));
            }
        }
        cfg.seed = self.seed.or(cfg.seed);
        cfg.n_models = self.models.unwrap_or(cfg.n_models);
        cfg.lambda = self.lambda.unwrap_or(cfg.lambda);
        cfg.cap = self.cap.unwrap_or(cfg.cap);
        cfg.out_dir = self.out_dir.clone().or(cfg.out_dir);
        cfg.gnuplot |= self.gnuplot;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidModel(_) | Error::Json(_) | Error::Io(_) => EXIT_CONFIG,
        Error::BoundViolation { .. } => 2,
        _ => EXIT_ACCURACY,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_for(&err))
}

fn run(command: Command) -> Result<(RunOutput, ExperimentConfig), Error> {
    Ok(match command {
        Command::TurScatter(c) => {
            let cfg = c.config(Mode::TurScatter)?;
            (experiment::run_tur_scatter(&cfg)?, cfg)
        }
        Command::KurScatter { common, pure_environment } => {
            let mut cfg = common.config(Mode::KurScatter)?;
            cfg.pure_environment |= pure_environment;
            (experiment::run_kur_scatter(&cfg)?, cfg)
        }
        Command::LambdaSweep(c) => {
            let cfg = c.config(Mode::LambdaSweep)?;
            (experiment::run_lambda_sweep(&cfg)?, cfg)
        }
        Command::MarkovSuite { common, lindblad } => {
            let cfg = common.config(Mode::MarkovSuite)?;
            let specs = lindblad
                .iter()
                .map(|p| Ok((spec_name(p), LindbladSpec::load(p).map_err(|e| input_error(p, e))?)))
                .collect::<Result<Vec<_>, Error>>()?;
            (experiment::run_markov_suite_with(&cfg, &specs)?, cfg)
        }
        Command::Single { model, common, trajectories } => {
            let cfg = common.config(Mode::Single)?;
            let doc = ModelDocument::load(&model).map_err(|e| input_error(&model, e))?;
            (experiment::run_single(&cfg, &doc, &SingleOptions { trajectories })?, cfg)
        }
    })
}

fn spec_name(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("spec");
    name.strip_suffix(".json").unwrap_or(name).to_string()
}

/// Problems reading an input file are configuration errors.
fn input_error(path: &Path, err: Error) -> Error {
    match err {
        Error::Io(_) | Error::Json(_) | Error::InvalidModel(_) | Error::Hermiticity(_) | Error::Dim(_) => {
            Error::Config(format!("{}: {err}", path.display()))
        }
        other => other,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail(Error::Config("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => return fail(Error::Config(format!("thread pool: {e}"))),
    };
    let (out, cfg) = match pool.install(|| run(cli.command)) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    if let Err(e) = experiment::write_outputs(&dir, &out, cfg.gnuplot) {
        return fail(e);
    }
    let r = &out.report;
    println!("{} seed={} rows={} failures={}", r.mode, r.seed, r.rows, r.failures);
    for c in &r.checks {
        let status = match (c.passed, c.enforced) {
            (true, _) => "ok",
            (false, true) => "FAIL",
            (false, false) => "note",
        };
        println!("  [{status}] {} = {} (threshold {:e})", c.name, json_num(&c.measured), c.threshold);
    }
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    ExitCode::from(r.exit_code() as u8)
}

fn json_num(n: &experiment::Num) -> String {
    if n.0.is_finite() {
        format!("{:.6e}", n.0)
    } else {
        "excluded".into()
    }
}
