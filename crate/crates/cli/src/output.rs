//! Output directory bookkeeping, CSV formatting and the run manifest.

use std::path::{Path, PathBuf};

use gammaflow_core::io::{save_field, sidecar_path, FieldMeta};
use gammaflow_core::lattice::LatticeField;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Shortest decimal that parses back to the same `f64`; locale-free.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { text: header.join(",") + "\n", width: header.len() }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.width, "csv row width");
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(|e| CliError::Internal(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Files written by one run, in write order.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    fn record(&mut self, name: &str) -> Result<(), CliError> {
        let bytes = std::fs::read(self.dir.join(name)).map_err(|e| CliError::Internal(format!("{name}: {e}")))?;
        self.files.retain(|f| f.file != name);
        self.files.push(OutputFile { file: name.into(), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let io = |e: std::io::Error| CliError::Usage(format!("{name}: {e}"));
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        std::fs::write(&path, bytes).map_err(io)?;
        self.record(name)
    }

    pub fn csv(&mut self, name: &str, csv: Csv) -> Result<(), CliError> {
        self.write(name, csv.into_string().as_bytes())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, to_json(value)?.as_bytes())
    }

    /// Writes `name` and its JSON sidecar.
    pub fn field(&mut self, name: &str, field: &LatticeField, meta: &FieldMeta) -> Result<(), CliError> {
        let path = self.dir.join(name);
        save_field(field, &path, meta)?;
        self.record(name)?;
        let side = sidecar_path(Path::new(name));
        self.record(&side.to_string_lossy())
    }
}

#[derive(Clone, Debug, Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub experiment: String,
    pub config: serde_json::Value,
    pub status: String,
    #[serde(default)]
    pub failure: Option<String>,
    pub wall_time_seconds: f64,
    pub outputs: Vec<OutputFile>,
}

pub const MANIFEST: &str = "manifest.json";

/// Recomputes the checksum of every listed output; returns the mismatches.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(dir.join(MANIFEST)).map_err(|e| CliError::Usage(format!("{MANIFEST}: {e}")))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{MANIFEST}: {e}")))?;
    let mut bad = Vec::new();
    for f in &m.outputs {
        match std::fs::read(dir.join(&f.file)) {
            Ok(b) if sha256_hex(&b) == f.sha256 => {}
            _ => bad.push(f.file.clone()),
        }
    }
    Ok(bad)
}
