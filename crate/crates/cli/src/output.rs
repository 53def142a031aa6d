use std::fs::{self, File};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use heatmap_eval::netcore::Model;

use crate::config::RunConfig;

/// Name of the marker present in an output directory until a run completes.
pub const PARTIAL_MARKER: &str = "PARTIAL";
pub const MANIFEST: &str = "manifest.conf";

/// Shortest round-trip formatting, so CSVs are byte-stable and lossless.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// An output directory for one run. Creation writes the manifest and a
/// `PARTIAL` marker; [`RunDir::finish`] removes the marker.
pub struct RunDir {
    dir: PathBuf,
}

impl RunDir {
    pub fn start(dir: &Path, command: &str, cfg: &RunConfig, model: Option<&Model>) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(
            dir.join(PARTIAL_MARKER),
            format!("hmeval {command} did not complete; outputs here are incomplete\n"),
        )?;
        let mut manifest = format!(
            "# hmeval {} {command}\n# re-run: hmeval {command} --config {MANIFEST}\n",
            env!("CARGO_PKG_VERSION")
        );
        if let Some(m) = model {
            manifest.push_str(&format!("# model_fingerprint = {:016x}\n", m.fingerprint()));
        }
        manifest.push_str(&cfg.to_text());
        fs::write(dir.join(MANIFEST), manifest)?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn subdir(&self, name: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        fs::create_dir_all(&p).with_context(|| format!("creating {}", p.display()))?;
        Ok(p)
    }

    pub fn csv(&self, name: &str, header: &[&str]) -> Result<CsvOut> {
        CsvOut::create(&self.dir.join(name), header)
    }

    pub fn finish(self) -> Result<()> {
        fs::remove_file(self.dir.join(PARTIAL_MARKER))?;
        Ok(())
    }
}

/// Appends the error to the marker of an unfinished run, if there is one.
pub fn mark_failed(dir: &Path, error: &anyhow::Error) {
    let marker = dir.join(PARTIAL_MARKER);
    if marker.exists() {
        let prev = fs::read_to_string(&marker).unwrap_or_default();
        let _ = fs::write(&marker, format!("{prev}error: {error:#}\n"));
    }
}

pub struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvOut {
    fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        writer.write_record(header)?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row(&mut self, fields: &[&str]) -> Result<()> {
        self.writer
            .write_record(fields)
            .with_context(|| format!("writing {}", self.path.display()))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().with_context(|| format!("writing {}", self.path.display()))
    }
}
