//! Output directory bookkeeping and the run manifest.

use std::path::{Path, PathBuf};
use std::time::Duration;

use coulomb_lab::io;
use coulomb_lab::Configuration;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::spec::{LoadedSpec, RunSpec};
use crate::CliError;

/// Files written by one run, in creation order.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn claim(&mut self, name: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn records<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let path = self.claim(name)?;
        Ok(io::save_records(&path, rows)?)
    }

    pub fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.claim(name)?;
        Ok(io::save_table(&path, header, rows)?)
    }

    pub fn configuration(&mut self, name: &str, config: &Configuration) -> Result<(), CliError> {
        let path = self.claim(name)?;
        Ok(io::save_configuration(&path, config)?)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.claim(name)?;
        Ok(io::save_json(&path, value)?)
    }

    pub fn measure(&mut self, name: &str, mu: &coulomb_lab::equilibrium::EquilibriumMeasure) -> Result<(), CliError> {
        let path = self.claim(name)?;
        io::save_measure(&path, mu)?;
        self.files.push(format!("{name}.json"));
        Ok(())
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<(), CliError> {
        Ok(io::save_json(&self.dir.join("manifest.json"), manifest)?)
    }
}

#[derive(Serialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run: the resolved spec, the input hash and the seeds.
#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub coulab_version: &'static str,
    pub coulomb_lab_version: &'static str,
    pub spec_path: String,
    pub input_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub parallel: bool,
    pub spec: RunSpec,
    pub summary: serde_json::Value,
    pub outputs: Vec<FileDigest>,
    pub wall_seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn new(
        command: &str,
        loaded: &LoadedSpec,
        spec: &RunSpec,
        outputs: &Outputs,
        summary: serde_json::Value,
        threads: usize,
        wall: Duration,
    ) -> Self {
        let digests = outputs
            .files
            .iter()
            .map(|f| FileDigest {
                file: f.clone(),
                sha256: std::fs::read(outputs.dir.join(f)).map(|b| sha256_hex(&b)).unwrap_or_default(),
            })
            .collect();
        Self {
            command: command.to_string(),
            coulab_version: env!("CARGO_PKG_VERSION"),
            coulomb_lab_version: coulomb_lab::VERSION,
            spec_path: loaded.path.display().to_string(),
            input_sha256: sha256_hex(&loaded.bytes),
            seed: spec.seed(),
            threads,
            parallel: cfg!(feature = "parallel"),
            spec: spec.clone(),
            summary,
            outputs: digests,
            wall_seconds: wall.as_secs_f64(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_the_empty_string() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
