//! Append-only CSV logs and PNG sample grids.

use std::fs::{File, OpenOptions};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tch::Tensor;

use crate::error::{Error, Result};
use crate::media::write_png;
use crate::video::Video8;

/// One row of the training log. Terms that the current stage does not compute
/// are left empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: u64,
    pub stage: String,
    pub l1_mrm: f64,
    pub perceptual: f64,
    pub j_fd: Option<f64>,
    pub j_ed: Option<f64>,
    pub critic: Option<f64>,
    pub gp: Option<f64>,
    pub emotion_d: Option<f64>,
    pub emotion_acc: Option<f64>,
    pub total: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub grad_norm_g: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub iteration: u64,
    pub l1_mrm: f64,
    pub perceptual: f64,
    pub emotion_acc: Option<f64>,
    pub best: bool,
}

/// CSV writer that appends to an existing log and writes the header only
/// for a new file.
#[derive(Debug)]
pub struct CsvLog {
    writer: csv::Writer<File>,
}

impl CsvLog {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
        let writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        Ok(Self { writer })
    }

    pub fn write<T: Serialize>(&mut self, row: &T) -> Result<()> {
        self.writer.serialize(row)?;
        self.writer.flush().map_err(|e| Error::io("log", e))
    }
}

pub fn read_log<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Two rows of `columns` frames, ground truth above generated, taken evenly
/// from `[T, 3, H, W]` videos in `[-1, 1]`.
pub fn sample_grid(real: &Tensor, fake: &Tensor, columns: i64) -> Result<Video8> {
    let t = real.size()[0];
    let columns = columns.clamp(1, t);
    let idx: Vec<i64> = (0..columns).map(|i| i * t / columns).collect();
    let idx = Tensor::from_slice(&idx).to_device(real.device());
    let row = |v: &Tensor| Tensor::cat(&v.detach().index_select(0, &idx).unbind(0), 2);
    let grid = Tensor::cat(&[row(real), row(fake)], 1).unsqueeze(0);
    Video8::from_tensor(&grid.to_device(tch::Device::Cpu).to_kind(tch::Kind::Float))
}

pub fn write_sample_grid(path: &Path, real: &Tensor, fake: &Tensor) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_png(path, &sample_grid(real, fake, 8)?, 0)
}

#[cfg(test)]
mod tests {
    use tch::{Device, Kind};

    use super::*;

    #[test]
    fn append_keeps_single_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let row = StepRecord { iteration: 1, stage: "init".into(), ..Default::default() };
        CsvLog::open(&path).unwrap().write(&row).unwrap();
        let second = StepRecord { iteration: 2, ..row.clone() };
        CsvLog::open(&path).unwrap().write(&second).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("iteration").count(), 1);
        let rows: Vec<StepRecord> = read_log(&path).unwrap();
        assert_eq!(rows.iter().map(|r| r.iteration).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(rows[0].j_fd, None);
    }

    #[test]
    fn grid_layout() {
        let real = Tensor::ones([16, 3, 8, 8], (Kind::Float, Device::Cpu));
        let fake = -Tensor::ones([16, 3, 8, 8], (Kind::Float, Device::Cpu));
        let g = sample_grid(&real, &fake, 4).unwrap();
        assert_eq!((g.frames, g.height, g.width), (1, 16, 32));
        assert_eq!(g.frame(0)[0], 255);
        assert_eq!(*g.frame(0).last().unwrap(), 0);
    }
}
