//! On-disk layout of a labelled dataset directory:
//! `trajectory.csv`, `labels.csv`, `segments.json`, `meta.json`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnomalySegment, DatasetTriple, LabeledDataset, Protocol};
use crate::error::{Error, Result};
use crate::ode::{SystemSpec, Trajectory};
use crate::scalar::Scalar;

pub const PERIODS: [&str; 3] = ["normal", "cyber", "measurement"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DatasetMeta<T> {
    pub period: String,
    pub spec: SystemSpec<T>,
    pub protocol: Protocol,
}

pub(crate) fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub(crate) fn read_json<V: serde::de::DeserializeOwned>(path: &Path) -> Result<V> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn save(&self, dir: &Path, meta: &DatasetMeta<T>) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join("trajectory.csv"))?);
        self.trajectory.write_csv(&mut w)?;
        w.flush()?;

        let mut w = BufWriter::new(File::create(dir.join("labels.csv"))?);
        writeln!(w, "index,label")?;
        for (i, l) in self.labels.iter().enumerate() {
            writeln!(w, "{i},{l}")?;
        }
        w.flush()?;

        write_json(&dir.join("segments.json"), &self.segments)?;
        write_json(&dir.join("meta.json"), meta)
    }

    pub fn load(dir: &Path) -> Result<(Self, DatasetMeta<T>)> {
        let trajectory = Trajectory::read_csv(BufReader::new(File::open(dir.join("trajectory.csv"))?))?;
        let segments: Vec<AnomalySegment<T>> = read_json(&dir.join("segments.json"))?;
        let meta: DatasetMeta<T> = read_json(&dir.join("meta.json"))?;
        if meta.spec.p() != trajectory.p() {
            return Err(Error::Format(format!(
                "meta.json describes p = {} but trajectory.csv has {} variables",
                meta.spec.p(),
                trajectory.p()
            )));
        }
        let dataset = LabeledDataset::new(trajectory, segments, meta.spec.clone())?;
        let stored = read_labels(&dir.join("labels.csv"))?;
        if stored != dataset.labels {
            return Err(Error::Format(format!("{} disagrees with segments.json", dir.join("labels.csv").display())));
        }
        Ok((dataset, meta))
    }
}

fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate().skip(1) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (idx, label) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("labels.csv line {}: expected index,label", n + 1)))?;
        let idx: usize = idx.trim().parse().map_err(|_| Error::Format(format!("labels.csv line {}", n + 1)))?;
        if idx != out.len() {
            return Err(Error::Format(format!("labels.csv line {}: index {idx} out of order", n + 1)));
        }
        match label.trim() {
            "0" => out.push(0),
            "1" => out.push(1),
            other => return Err(Error::Format(format!("labels.csv line {}: bad label {other:?}", n + 1))),
        }
    }
    Ok(out)
}

impl<T: Scalar> DatasetTriple<T> {
    pub fn periods(&self) -> [(&'static str, &LabeledDataset<T>); 3] {
        [(PERIODS[0], &self.normal), (PERIODS[1], &self.cyber), (PERIODS[2], &self.measurement)]
    }

    /// Writes `normal/`, `cyber/` and `measurement/` under `root`.
    pub fn save(&self, root: &Path, protocol: &Protocol) -> Result<()> {
        for (name, ds) in self.periods() {
            let meta = DatasetMeta { period: name.to_string(), spec: ds.spec.clone(), protocol: protocol.clone() };
            ds.save(&root.join(name), &meta)?;
        }
        Ok(())
    }

    pub fn load(root: &Path) -> Result<(Self, Protocol)> {
        let (normal, meta) = LabeledDataset::load(&root.join(PERIODS[0]))?;
        let (cyber, _) = LabeledDataset::load(&root.join(PERIODS[1]))?;
        let (measurement, _) = LabeledDataset::load(&root.join(PERIODS[2]))?;
        Ok((Self { normal, cyber, measurement }, meta.protocol))
    }
}
