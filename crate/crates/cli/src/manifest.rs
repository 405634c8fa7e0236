//! Run manifests and the final write of a command's output files.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use wavecal::io::{sha256_hex, write_atomic};

use crate::failure::Failure;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct ScenarioEntry {
    pub id: String,
    pub hash: String,
}

#[derive(Debug, Serialize)]
pub struct InputEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// SHA-256 of the canonical JSON of everything that determines the output.
    pub scenario_hash: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub full_scale: bool,
    pub started: String,
    pub finished: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub scenarios: Vec<ScenarioEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<InputEntry>,
    pub outputs: Vec<String>,
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn hash_json<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("canonical form serializes"))
}

/// Reads an input file and records its digest.
pub fn read_input(path: &Path) -> Result<(Vec<u8>, InputEntry), Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::io(path, e))?;
    let entry = InputEntry {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    };
    Ok((bytes, entry))
}

/// Files produced by a command, written only once everything succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_owned(), bytes));
    }

    /// Writes the files and then the manifest into `dir`.
    pub fn commit(self, dir: &Path, mut manifest: RunManifest) -> Result<Vec<PathBuf>, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        let mut written = Vec::with_capacity(self.files.len() + 1);
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            write_atomic(&path, bytes).map_err(|e| Failure::io(&path, e))?;
            written.push(path);
        }
        manifest.outputs = self.files.into_iter().map(|(name, _)| name).collect();
        manifest.finished = now();
        let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        json.push(b'\n');
        let path = dir.join(MANIFEST_FILE);
        write_atomic(&path, &json).map_err(|e| Failure::io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}
