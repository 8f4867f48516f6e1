//! `tbma`: error exponents, Monte Carlo error probabilities, detector
//! training and the built-in figure sweeps, all written as CSV.
//!
//! Exit status: 0 on success, 1 for configuration or usage errors, 2 for
//! runtime failures.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tbma_core::detect::DetectorKind;
use tbma_core::experiments::{
    exponent_record, named_figure, pe_records, run_figure, with_workers, write_records_csv, ExperimentRecord,
    FigureOptions, DEFAULT_TRIALS, FIGURE_NAMES,
};
use tbma_core::exponents::exponent_report;
use tbma_core::fronthaul::solve_quantization_variance;
use tbma_core::learn::{
    generate_dataset, train, write_dataset_csv, LearnConfig, MlpModel, Target, TrainConfig, DEFAULT_EPOCHS,
    DEFAULT_HIDDEN, DEFAULT_LEARNING_RATE,
};
use tbma_core::rng::{derive_seed, label_hash, stream_rng};
use tbma_core::{Error, Model, SystemConfig};

#[derive(Parser, Debug)]
#[command(name = "tbma", version, about = "Two-cell TBMA detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Edge and cloud error exponents at one configuration.
    Exponents(Common),
    /// Monte Carlo error probability of one or more detectors.
    Pe {
        #[command(flatten)]
        common: Common,
        /// Detector to run; repeat for several (shared trials).
        #[arg(long = "detector", default_values = ["edge_optimal", "cloud_optimal"])]
        detectors: Vec<DetectorKind>,
        #[command(flatten)]
        learn: LearnArgs,
    },
    /// Train a learned detector and write the model file.
    Train {
        #[command(flatten)]
        common: Common,
        /// edge_cell1, edge_cell2 or cloud.
        #[arg(long, default_value = "edge_cell1", value_parser = parse_target)]
        target: Target,
        #[command(flatten)]
        learn: LearnArgs,
        /// Also write the training set here.
        #[arg(long)]
        dataset_out: Option<PathBuf>,
    },
    /// Run a built-in sweep: fig3 .. fig8, fig7b, or slope.
    Figure {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(FIGURE_NAMES))]
        name: String,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        learn: LearnArgs,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Config file (`key = value` lines); defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set sigma2_g=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output path; `-` for stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: u64,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args, Debug)]
struct LearnArgs {
    /// Training samples per network.
    #[arg(long, default_value_t = 10_000)]
    train_size: usize,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    learning_rate: f64,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_HIDDEN.to_vec())]
    hidden: Vec<usize>,
}

impl LearnArgs {
    fn config(&self) -> LearnConfig {
        LearnConfig {
            hidden: self.hidden.clone(),
            train: TrainConfig { epochs: self.epochs, learning_rate: self.learning_rate },
            n_samples: self.train_size,
        }
    }
}

fn parse_target(s: &str) -> Result<Target, String> {
    Target::parse(s).ok_or_else(|| format!("unknown target '{s}' (edge_cell1, edge_cell2 or cloud)"))
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

impl Common {
    fn system_config(&self) -> Result<SystemConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => SystemConfig::from_file(path).map_err(|e| Failure::Config(e.to_string()))?,
            None => SystemConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) =
                kv.split_once('=').ok_or_else(|| Failure::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| Failure::Config(e.to_string()))?;
        }
        Ok(cfg)
    }

    fn model(&self) -> Result<Model, Failure> {
        Model::new(self.system_config()?).map_err(|e| Failure::Config(e.to_string()))
    }

    fn writer(&self) -> Result<Box<dyn Write>, Failure> {
        open_out(&self.out)
    }
}

fn open_out(path: &Path) -> Result<Box<dyn Write>, Failure> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(io::stdout().lock()));
    }
    let f = File::create(path).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn write_records(common: &Common, records: &[ExperimentRecord]) -> Result<(), Failure> {
    let out = common.writer()?;
    write_records_csv(out, records).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", common.out.display())))
}

fn cmd_exponents(common: &Common) -> Result<(), Failure> {
    let model = common.model()?;
    let r = exponent_report(&model).map_err(|e| Failure::from(Error::from(e)))?;
    write_records(common, &[exponent_record("exponents", "none", 0.0, &r, common.seed)])
}

fn cmd_pe(common: &Common, detectors: &[DetectorKind], learn: &LearnArgs) -> Result<(), Failure> {
    let model = common.model()?;
    let learn = learn.config();
    let records = with_workers(common.workers, || pe_records(&model, detectors, common.trials, common.seed, &learn))?;
    write_records(common, &records)
}

fn cmd_train(common: &Common, target: Target, learn: &LearnArgs, dataset_out: Option<&Path>) -> Result<(), Failure> {
    let model = common.model()?;
    let cfg = learn.config();
    let spec = match target {
        Target::Cloud => Some(solve_quantization_variance(&model).map_err(|e| Failure::from(Error::from(e)))?),
        _ => None,
    };
    let ds =
        with_workers(common.workers, || generate_dataset(&model, cfg.n_samples, target, spec.as_ref(), common.seed))
            .map_err(|e| Failure::from(Error::from(e)))?;
    if let Some(path) = dataset_out {
        let out = open_out(path)?;
        write_dataset_csv(out, &ds, model.levels(), model.l_intervals()).map_err(runtime)?;
    }
    let mut rng = stream_rng(derive_seed(common.seed, label_hash("init")), 0);
    let net = MlpModel::for_dataset(&ds, &cfg.hidden, &mut rng).map_err(runtime)?;
    let outcome = train(&net, &ds, &cfg.train).map_err(runtime)?;
    let mut out = common.writer()?;
    outcome.model.write_text(&mut out).map_err(runtime)?;
    out.flush().map_err(runtime)?;
    let first = outcome.loss_trace.first().copied().unwrap_or(f64::NAN);
    let last = outcome.loss_trace.last().copied().unwrap_or(f64::NAN);
    eprintln!("trained {} on {} samples: loss {first:.6} -> {last:.6}", target.as_str(), ds.len());
    if outcome.diverged {
        return Err(Failure::Runtime("training loss became non-finite; wrote the last finite state".into()));
    }
    Ok(())
}

fn cmd_figure(name: &str, common: &Common, learn: &LearnArgs) -> Result<(), Failure> {
    let opts = FigureOptions {
        base: common.system_config()?,
        trials: common.trials,
        seed: common.seed,
        learn: learn.config(),
    };
    let fig = named_figure(name, &opts)?;
    let records = run_figure(&fig, common.workers)?;
    write_records(common, &records)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Exponents(common) => cmd_exponents(common),
        Command::Pe { common, detectors, learn } => cmd_pe(common, detectors, learn),
        Command::Train { common, target, learn, dataset_out } => {
            cmd_train(common, *target, learn, dataset_out.as_deref())
        }
        Command::Figure { name, common, learn } => cmd_figure(name, common, learn),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
