//! Run artifacts on disk: `config_resolved`, `metrics.csv` and
//! `samples_round_<k>.pgm`.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::federated::{run_experiment_with, Assets, ExperimentData, Observer};
use crate::metrics::{CsvSink, RoundRecord};
use crate::pgm::grid_pgm;
use crate::tensor::Tensor;

/// Streams records to `metrics.csv` and grids to PGM files in one directory.
pub struct DirObserver {
    dir: PathBuf,
    csv: CsvSink<BufWriter<File>>,
    echo: bool,
}

impl DirObserver {
    /// Creates the directory and writes the CSV header. With `echo`, each
    /// row is also printed to stderr.
    pub fn create(dir: &Path, echo: bool) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let file = File::create(dir.join("metrics.csv"))?;
        Ok(Self { dir: dir.to_path_buf(), csv: CsvSink::new(BufWriter::new(file))?, echo })
    }
}

impl Observer for DirObserver {
    fn record(&mut self, record: &RoundRecord) -> Result<()> {
        if self.echo {
            eprintln!("{}", record.csv_row());
        }
        self.csv.write(record)
    }

    fn grid(&mut self, round: u64, images: &Tensor) -> Result<()> {
        std::fs::write(self.dir.join(format!("samples_round_{round}.pgm")), grid_pgm(images)?)?;
        Ok(())
    }
}

pub fn write_resolved_config(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config_resolved"), cfg.to_text())?;
    Ok(())
}

/// Validates `cfg`, then loads data, prepares assets, runs, and writes every
/// artifact into `dir`.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: &Path, echo: bool) -> Result<Vec<RoundRecord>> {
    cfg.validate()?;
    write_resolved_config(cfg, dir)?;
    let data = ExperimentData::load(cfg)?;
    let assets = Assets::prepare(cfg, &data)?;
    let mut observer = DirObserver::create(dir, echo)?;
    run_experiment_with(cfg, &data, &assets, &mut observer)
}
