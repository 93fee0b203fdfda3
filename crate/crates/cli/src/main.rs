use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use intra_lab::config::{EncodeSet, MnrcSetting, OperatingPoint};
use intra_lab::corpus::generate_corpus;
use intra_lab::stages::{self, StageOutcome};
use intra_lab::{LabError, RunConfig};
use log::info;

#[derive(Parser)]
#[command(name = "intra-lab", version, about = "Fast intra coding lab: data, models, thresholds, encodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract training labels from the corpus and measure splitting rates.
    Datagen(Overrides),
    /// Train the split and mode-candidate models.
    Train(Overrides),
    /// Search confidence thresholds and write the Pareto archive.
    Optimize(Overrides),
    /// Encode with the baseline and the fast encoder.
    Encode(Overrides),
    /// Summarize the latest encode and archive.
    Report(Overrides),
    /// Run datagen, train, optimize, encode and report in order.
    All(Overrides),
    /// Write a synthetic picture corpus.
    GenCorpus {
        #[arg(long, default_value = "data/corpus")]
        dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Point {
    Lr,
    Ot,
    Hr,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mnrc {
    Off,
    Conservative,
    Aggressive,
}

#[derive(Clone, Copy, ValueEnum)]
enum Set {
    Val,
    All,
}

#[derive(Args)]
struct Overrides {
    /// TOML run configuration; flags below override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Picture file or directory (repeatable).
    #[arg(long)]
    corpus: Vec<PathBuf>,
    /// QP to encode at (repeatable, or comma separated).
    #[arg(long, value_delimiter = ',')]
    qp: Vec<u8>,
    #[arg(long, value_delimiter = ',')]
    anchor_qp: Vec<u8>,
    #[arg(long)]
    seed: Option<u64>,
    /// Four comma separated thresholds for depths 0-3.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Archive point to use when no thresholds are given.
    #[arg(long, value_enum)]
    point: Option<Point>,
    #[arg(long, value_enum)]
    mnrc: Option<Mnrc>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Pictures to encode.
    #[arg(long, value_enum)]
    set: Option<Set>,
    #[arg(long)]
    baseline_only: bool,
}

impl Overrides {
    fn resolve(&self) -> intra_lab::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if !self.corpus.is_empty() {
            cfg.corpus = self.corpus.clone();
        }
        if !self.qp.is_empty() {
            cfg.qps = self.qp.clone();
        }
        if !self.anchor_qp.is_empty() {
            cfg.anchor_qps = self.anchor_qp.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = &self.thresholds {
            let th: [f64; 4] = t
                .as_slice()
                .try_into()
                .map_err(|_| LabError::config(format!("--thresholds needs 4 values, got {}", t.len())))?;
            cfg.thresholds = Some(th);
        }
        if let Some(p) = self.point {
            cfg.operating_point = match p {
                Point::Lr => OperatingPoint::Lr,
                Point::Ot => OperatingPoint::Ot,
                Point::Hr => OperatingPoint::Hr,
            };
        }
        if let Some(m) = self.mnrc {
            cfg.mnrc = match m {
                Mnrc::Off => MnrcSetting::Off,
                Mnrc::Conservative => MnrcSetting::Conservative,
                Mnrc::Aggressive => MnrcSetting::Aggressive,
            };
        }
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(s) = self.set {
            cfg.encode.set = match s {
                Set::Val => EncodeSet::Val,
                Set::All => EncodeSet::All,
            };
        }
        if self.baseline_only {
            cfg.encode.baseline_only = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn announce(o: &StageOutcome) {
    if o.skipped {
        println!("{}: up to date ({})", o.stage, o.dir.display());
    } else {
        println!("{}: wrote {}", o.stage, o.dir.display());
    }
}

fn execute(cmd: Command) -> intra_lab::Result<()> {
    let (stage, ov): (fn(&RunConfig) -> intra_lab::Result<StageOutcome>, Overrides) = match cmd {
        Command::GenCorpus { dir, count, seed } => {
            let files = generate_corpus(&dir, count, seed)?;
            println!("wrote {} pictures to {}", files.len(), dir.display());
            return Ok(());
        }
        Command::All(ov) => {
            let cfg = ov.resolve()?;
            for o in stages::run_all(&cfg)? {
                announce(&o);
            }
            print_report(&cfg)?;
            return Ok(());
        }
        Command::Report(ov) => {
            let cfg = ov.resolve()?;
            announce(&stages::report::run(&cfg)?);
            print_report(&cfg)?;
            return Ok(());
        }
        Command::Datagen(ov) => (stages::datagen::run, ov),
        Command::Train(ov) => (stages::train::run, ov),
        Command::Optimize(ov) => (stages::optimize::run, ov),
        Command::Encode(ov) => (stages::encode::run, ov),
    };
    let cfg = ov.resolve()?;
    info!("output directory {}", cfg.output.display());
    announce(&stage(&cfg)?);
    Ok(())
}

fn print_report(cfg: &RunConfig) -> intra_lab::Result<()> {
    print!("{}", stages::report::render(cfg)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

