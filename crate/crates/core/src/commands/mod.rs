//! End-to-end commands behind the `vanhove` binary: simulate, analyze,
//! qwv, fit and the figure recipes. Every command is also usable as a
//! library call on in-memory data.

pub mod analyze;
pub mod ensemble;
pub mod fit;
pub mod qwv;
pub mod reproduce;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::plot::{self, Series};
use crate::io::{tables, TensorContainer};

pub use analyze::{analyze, cmd_analyze, Products};
pub use ensemble::{cmd_simulate, simulate, EnsembleData};
pub use fit::{cmd_fit, run_fit};
pub use qwv::{cmd_qwv, weak_values, QwvReport};
pub use reproduce::{cmd_reproduce, Figure};

/// Index of everything a command wrote, with hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    /// File name → hash. Containers are listed by content hash (creation
    /// time excluded), other files by SHA-256 of their bytes.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("manifest: {e}")))
    }
}

/// Output directory that records a hash for every file written through it.
pub struct OutputDir {
    root: PathBuf,
    command: String,
    config_hash: String,
    files: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl OutputDir {
    pub fn create(root: &Path, command: &str, config_hash: &str) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), command: command.into(), config_hash: config_hash.into(), files: BTreeMap::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Entries of the manifest, e.g. to fold in a sub-directory's files.
    pub fn files_mut(&mut self) -> &mut BTreeMap<String, String> {
        &mut self.files
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn record(&mut self, name: &str) -> Result<()> {
        let bytes = std::fs::read(self.path(name))?;
        self.files.insert(name.into(), sha256_hex(&bytes));
        Ok(())
    }

    /// Container plus a `<name>.json` sidecar restating its header.
    pub fn container(&mut self, name: &str, c: &TensorContainer) -> Result<()> {
        let path = self.path(name);
        write_container(&path, c)?;
        self.files.insert(name.into(), c.content_hash());
        Ok(())
    }

    pub fn columns(&mut self, name: &str, columns: &[(&str, &[f64])]) -> Result<()> {
        tables::write_columns(&self.path(name), columns)?;
        self.record(name)
    }

    pub fn rows(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        tables::write_rows(&self.path(name), header, rows)?;
        self.record(name)
    }

    pub fn matrix(&mut self, name: &str, corner: &str, rows: &[f64], cols: &[f64], values: &[Vec<f64>]) -> Result<()> {
        tables::write_matrix(&self.path(name), corner, rows, cols, values)?;
        self.record(name)
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(self.path(name), text + "\n")?;
        self.record(name)
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<()> {
        std::fs::write(self.path(name), text)?;
        self.record(name)
    }

    pub fn heatmap(&mut self, name: &str, values: &[Vec<f64>], scale: u32) -> Result<()> {
        plot::heatmap_png(&self.path(name), values, scale)?;
        self.record(name)
    }

    pub fn lines(&mut self, name: &str, title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> Result<()> {
        plot::line_svg(&self.path(name), title, xlabel, ylabel, series)?;
        self.record(name)
    }

    /// Write `manifest.json` and return it.
    pub fn finish(self) -> Result<Manifest> {
        let m = Manifest { command: self.command, config_hash: self.config_hash, files: self.files };
        let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(self.root.join("manifest.json"), text + "\n")?;
        Ok(m)
    }
}

/// Write a container and its JSON sidecar next to it.
pub fn write_container(path: &Path, c: &TensorContainer) -> Result<()> {
    c.write(path)?;
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".json");
    let text = serde_json::to_string_pretty(&c.sidecar()).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(PathBuf::from(sidecar), text + "\n")?;
    Ok(())
}

/// Read a container and check its kind.
pub fn read_container(path: &Path, kind: &str) -> Result<TensorContainer> {
    let c = TensorContainer::read(path)?;
    if c.kind != kind {
        return Err(Error::Data(format!("{} holds a {:?} container, expected {kind:?}", path.display(), c.kind)));
    }
    Ok(c)
}

/// Values in micrometres, for tables and plots.
pub(crate) fn um(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x * 1e6).collect()
}

pub(crate) fn ms(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x * 1e3).collect()
}
