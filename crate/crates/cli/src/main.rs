use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use icode_cli::audit::{audit_analysis, audit_benchmark, AuditReport};
use icode_cli::benchmark::{render_tables, run_benchmark, SUMMARY_FILE};
use icode_cli::commands::{cmd_analyze, cmd_simulate, cmd_train, load_checkpoint, load_dataset, CHECKPOINT_FILE};
use icode_cli::{CliError, CliResult, ExperimentConfig};

/// Interpretable causality neural ODEs for anomaly detection, classification
/// and root-cause localization on simulated dynamical systems.
#[derive(Parser)]
#[command(name = "icode", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON experiment config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one field, e.g. `--set protocol.alpha=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> CliResult<ExperimentConfig> {
        ExperimentConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the normal, cyber and measurement periods.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory [default: <output root>/dataset].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on a dataset's normal period.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory [default: <output root>/model].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detect, classify and localize the anomalies of a dataset.
    Analyze {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// A checkpoint file or a directory holding checkpoint.json.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory [default: <output root>/analysis].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the systems × alphas × seeds suite.
    Benchmark {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Recompute reported numbers from persisted records.
    Audit {
        /// A benchmark root, or an analysis directory together with --dataset
        /// [default: the output root].
        dir: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn print_audit(report: &AuditReport) -> CliResult<()> {
    for m in &report.mismatches {
        eprintln!("mismatch: {m}");
    }
    println!("audit: {} values checked, {} mismatches", report.checked, report.mismatches.len());
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("audit found {} mismatches", report.mismatches.len())))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { cfg, out } => {
            let cfg = cfg.load()?;
            let out = out.unwrap_or_else(|| cfg.output_root().join("dataset"));
            let data = cmd_simulate(&cfg, &out)?;
            println!(
                "wrote {} ({} rows per period, {} + {} segments)",
                out.display(),
                data.normal.trajectory.len(),
                data.cyber.segments.len(),
                data.measurement.segments.len()
            );
        }
        Command::Train { cfg, dataset, out } => {
            let cfg = cfg.load()?;
            let data = load_dataset(&dataset)?;
            let out = out.unwrap_or_else(|| cfg.output_root().join("model"));
            let outcome = cmd_train(&data, &cfg, &out)?;
            let loss = outcome.final_loss().map_or_else(|| "-".into(), |l| format!("{l:.6e}"));
            println!("wrote {} (final loss {loss})", out.join(CHECKPOINT_FILE).display());
        }
        Command::Analyze { cfg, dataset, checkpoint, out } => {
            let cfg = cfg.load()?;
            let data = load_dataset(&dataset)?;
            let checkpoint = if checkpoint.is_dir() { checkpoint.join(CHECKPOINT_FILE) } else { checkpoint };
            let model = load_checkpoint(&checkpoint)?;
            let out = out.unwrap_or_else(|| cfg.output_root().join("analysis"));
            let m = cmd_analyze(&data, &model, &cfg, &out)?.metrics;
            println!(
                "F1 {:.4}  top-1 {:.4}  top-3 {:.4}  top-5 {:.4}  accuracy {:.4}  ({} segments)",
                m.detection.f1, m.topk.top1, m.topk.top3, m.topk.top5, m.accuracy, m.segments
            );
            println!("wrote {}", out.display());
        }
        Command::Benchmark { cfg } => {
            let cfg = cfg.load()?;
            let root = cfg.output_root();
            let summary = run_benchmark(&cfg, &root)?;
            print!("{}", render_tables(&summary.rows));
            for c in summary.cells.iter().filter(|c| c.error.is_some()) {
                eprintln!("{}: {}", c.name, c.error.as_deref().unwrap_or_default());
            }
            println!("wrote {}", root.display());
            let failed = summary.failed();
            if failed > 0 {
                return Err(CliError::Failed(format!("{failed} of {} cells failed", summary.cells.len())));
            }
        }
        Command::Audit { dir, dataset } => {
            let dir = match dir {
                Some(d) => d,
                None => ExperimentConfig::load(None, &[])?.output_root(),
            };
            let report = if dir.join(SUMMARY_FILE).is_file() {
                audit_benchmark(&dir)?
            } else {
                let dataset = dataset.ok_or_else(|| {
                    CliError::Validation(format!("{} has no {SUMMARY_FILE}; pass --dataset to audit one analysis", dir.display()))
                })?;
                audit_analysis(&dataset, &dir)?.1
            };
            print_audit(&report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
