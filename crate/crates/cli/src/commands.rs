//! The single-step subcommands as library calls; `main` only parses flags.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use icode::analysis::export::save_json;
use icode::anomaly::DatasetTriple;
use icode::model::{Checkpoint, IcodeModel, TrainOutcome};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::{self, Analysis};

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOSS_FILE: &str = "loss.csv";

/// File-level failures keep the path; everything else maps by kind.
pub(crate) fn at(path: &Path, e: icode::Error) -> CliError {
    match e {
        icode::Error::Io(_) | icode::Error::Json(_) | icode::Error::Format(_) => CliError::io(path, e),
        other => other.into(),
    }
}

pub fn write_config(dir: &Path, cfg: &ExperimentConfig) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(CONFIG_FILE);
    save_json(&path, cfg).map_err(|e| at(&path, e))
}

/// Builds the three periods and writes them, with the resolved config, to `out`.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> CliResult<DatasetTriple<f64>> {
    let data = pipeline::simulate(cfg)?;
    data.save(out, &cfg.protocol).map_err(|e| at(out, e))?;
    write_config(out, cfg)?;
    Ok(data)
}

pub fn load_dataset(dir: &Path) -> CliResult<DatasetTriple<f64>> {
    if !dir.is_dir() {
        return Err(CliError::Io(format!("{}: dataset directory not found", dir.display())));
    }
    DatasetTriple::load(dir).map(|(d, _)| d).map_err(|e| at(dir, e))
}

/// Trains on the normal period; writes `checkpoint.json` and `loss.csv`.
pub fn cmd_train(data: &DatasetTriple<f64>, cfg: &ExperimentConfig, out: &Path) -> CliResult<TrainOutcome<f64>> {
    let outcome = pipeline::train_normal(data, cfg)?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let ckpt = out.join(CHECKPOINT_FILE);
    Checkpoint::from_model(&outcome.model, &cfg.train, outcome.final_loss()).save(&ckpt).map_err(|e| at(&ckpt, e))?;
    write_loss_log(&out.join(LOSS_FILE), &outcome.history)?;
    Ok(outcome)
}

fn write_loss_log(path: &Path, history: &[f64]) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "epoch,loss").map_err(io)?;
    for (epoch, loss) in history.iter().enumerate() {
        writeln!(w, "{},{loss}", epoch + 1).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_checkpoint(path: &Path) -> CliResult<IcodeModel<f64>> {
    if !path.is_file() {
        return Err(CliError::Io(format!("{}: checkpoint not found", path.display())));
    }
    let ckpt = Checkpoint::<f64>::load(path).map_err(|e| at(path, e))?;
    Ok(ckpt.to_model()?)
}

/// Runs the analysis chain and writes its reports under `out`.
pub fn cmd_analyze(
    data: &DatasetTriple<f64>,
    model: &IcodeModel<f64>,
    cfg: &ExperimentConfig,
    out: &Path,
) -> CliResult<Analysis> {
    let analysis = pipeline::analyze(data, model, cfg)?;
    analysis.save(out)?;
    write_config(out, cfg)?;
    Ok(analysis)
}
