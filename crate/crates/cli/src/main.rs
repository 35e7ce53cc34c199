use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use feedchan::harness::{
    emit_report, export_transcript, load_spec, run_experiment, write_report_file, ExperimentSpec, HarnessError,
    MessageSpec, Observer, ReportFormat, Scenario, Seeds, SimReport, TomographySpec, WalkSpec,
};
use feedchan::{EveStrategy, SessionConfig};

/// Residual above which `walk-check` reports failure.
const WALK_TOLERANCE: f64 = 1e-9;

#[derive(Parser, Debug)]
#[command(name = "feedchan", version, about = "Seeded simulator for a feedback-verified qubit channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed (or first seed of a range).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value = "table", value_parser = ["table", "delimited", "structured"])]
    format: String,
    /// Include wall-clock duration in the report.
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment described by a TOML spec file.
    Run {
        spec: PathBuf,
        /// Override a spec field, e.g. `--set session.package_length=4`.
        #[arg(long = "set", value_name = "PATH=VALUE")]
        set: Vec<String>,
        #[command(flatten)]
        export: Export,
    },
    /// Walk a random trajectory and check its step geometry.
    WalkCheck { steps: usize },
    /// Estimate a coding axis from K samples per coordinate axis.
    Tomography {
        k: usize,
        /// Comma-separated unit vector, e.g. `0.5,0.5,0.7071067811865476`.
        axis: String,
        /// Number of seeds, starting at `--seed`.
        #[arg(long, default_value_t = 1)]
        runs: u64,
        #[arg(long, default_value = "bob", value_parser = ["bob", "eve"])]
        observer: String,
        /// Stream length when the observer is Eve.
        #[arg(long, default_value_t = 30_000)]
        qubits: usize,
    },
    /// Run sessions against an eavesdropping strategy.
    Attack {
        #[arg(value_parser = ["passive-off", "fixed-axis-measure", "tomography-interleave", "walk-guesser", "intercept-resend"])]
        strategy: String,
        /// Number of seeds, starting at `--seed`.
        seeds: u64,
        /// Eve's axis for the fixed-axis strategies.
        #[arg(long, default_value = "1,0,0")]
        axis: String,
        #[arg(long, default_value_t = 200)]
        packages: usize,
        #[arg(long, default_value_t = 0)]
        guess_seed: u64,
        #[arg(long, default_value_t = 6)]
        package_length: usize,
        #[command(flatten)]
        export: Export,
    },
}

#[derive(clap::Args, Debug)]
struct Export {
    /// Write the first seed's session transcript as JSON lines.
    #[arg(long, value_name = "PATH")]
    transcript: Option<PathBuf>,
    /// Write the first seed's eavesdropper record as JSON lines.
    #[arg(long, value_name = "PATH")]
    eve_record: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let format: ReportFormat = cli.format.parse().map_err(Failure::Config)?;
    let start = Instant::now();
    let (spec, export) = match cli.command {
        Command::Run { spec, set, export } => {
            let text = std::fs::read_to_string(&spec)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", spec.display())))?;
            let mut overrides = set.iter().map(|s| split_override(s)).collect::<Result<Vec<_>, _>>()?;
            if let Some(seed) = cli.seed {
                overrides.push(("seeds".into(), format!("[{seed}]")));
            }
            (load_spec(&text, &overrides)?, Some(export))
        }
        Command::WalkCheck { steps } => (
            ExperimentSpec {
                walk: Some(WalkSpec { steps }),
                ..base_spec("walk-check", Scenario::WalkGeometry, Seeds::List(vec![cli.seed.unwrap_or(0)]))
            },
            None,
        ),
        Command::Tomography {
            k,
            axis,
            runs,
            observer,
            qubits,
        } => (
            ExperimentSpec {
                tomography: Some(TomographySpec {
                    k,
                    axis: parse_axis(&axis, "axis")?,
                    observer: if observer == "eve" { Observer::Eve } else { Observer::Bob },
                    qubits,
                    rule: Default::default(),
                    stream: Default::default(),
                    tolerance: 0.05,
                }),
                ..base_spec("tomography", Scenario::Tomography, range(cli.seed, runs))
            },
            None,
        ),
        Command::Attack {
            strategy,
            seeds,
            axis,
            packages,
            guess_seed,
            package_length,
            export,
        } => {
            let eve = match strategy.as_str() {
                "passive-off" => EveStrategy::PassiveOff,
                "fixed-axis-measure" => EveStrategy::FixedAxisMeasure {
                    axis: parse_axis(&axis, "--axis")?,
                },
                "intercept-resend" => EveStrategy::InterceptResend {
                    axis: parse_axis(&axis, "--axis")?,
                },
                "tomography-interleave" => EveStrategy::TomographyInterleave { rule: Default::default() },
                "walk-guesser" => EveStrategy::WalkGuesser { guess_seed },
                other => return Err(Failure::Config(format!("unknown strategy `{other}`"))),
            };
            (
                ExperimentSpec {
                    session: SessionConfig {
                        package_length,
                        ..SessionConfig::default()
                    },
                    eve: Some(eve),
                    message: Some(MessageSpec::Random { packages }),
                    ..base_spec(&format!("attack {strategy}"), Scenario::AttackSession, range(cli.seed, seeds))
                },
                Some(export),
            )
        }
    };

    let mut report = run_experiment(&spec)?;
    if let Some(export) = export {
        write_exports(&spec, &export)?;
    }
    if cli.timing {
        report.duration_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    match &cli.out {
        Some(path) => write_report_file(&report, format, path)?,
        None => emit_report(&report, format, BufWriter::new(io::stdout().lock()))?,
    }
    if spec.scenario == Scenario::WalkGeometry {
        check_walk(&report)?;
    }
    Ok(())
}

fn base_spec(name: &str, scenario: Scenario, seeds: Seeds) -> ExperimentSpec {
    ExperimentSpec {
        name: name.into(),
        scenario,
        seeds,
        session: SessionConfig::default(),
        eve: None,
        message: None,
        tomography: None,
        walk: None,
        survival_changes: 8,
    }
}

fn range(seed: Option<u64>, count: u64) -> Seeds {
    Seeds::Range {
        start: seed.unwrap_or(0),
        count,
    }
}

fn split_override(s: &str) -> Result<(String, String), Failure> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Failure::Config(format!("override `{s}` is not PATH=VALUE")))
}

fn parse_axis(s: &str, what: &str) -> Result<[f64; 3], Failure> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::Config(format!("{what}: {e}")))?;
    parts
        .try_into()
        .map_err(|_| Failure::Config(format!("{what}: expected three comma-separated numbers")))
}

fn write_exports(spec: &ExperimentSpec, export: &Export) -> Result<(), Failure> {
    if export.transcript.is_none() && export.eve_record.is_none() {
        return Ok(());
    }
    let seed = spec.seeds.expand()[0];
    let transcript: Box<dyn Write> = match &export.transcript {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::sink()),
    };
    let eve = export.eve_record.as_deref().map(create).transpose()?;
    export_transcript(spec, seed, transcript, eve)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn check_walk(report: &SimReport) -> Result<(), Failure> {
    let w = report.aggregate.walk.unwrap_or_default();
    if w.arc > WALK_TOLERANCE || w.turn > WALK_TOLERANCE || w.norm > WALK_TOLERANCE {
        return Err(Failure::Runtime(format!(
            "walk geometry residuals above {WALK_TOLERANCE}: arc {}, turn {}, norm {}",
            w.arc, w.turn, w.norm
        )));
    }
    Ok(())
}
