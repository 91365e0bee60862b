use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use flooddan::pipeline::{file_digest, RunConfig};
use flooddan::{Error, Result};
use serde::Serialize;

#[derive(Serialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one command invocation, written when the command finishes.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    pub config_digest: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: Vec<Artifact>,
    pub started: String,
    pub finished: String,
}

pub struct ManifestBuilder {
    command: String,
    config: RunConfig,
    seed: u64,
    started: DateTime<Utc>,
    inputs: BTreeMap<String, PathBuf>,
    outputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: &RunConfig, seed: u64) -> Self {
        Self {
            command: command.into(),
            config: config.clone(),
            seed,
            started: Utc::now(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) {
        self.inputs.insert(role.into(), path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Digests every output and writes `<out>/manifest_<command>.json`.
    pub fn finish(self, out: &Path) -> Result<PathBuf> {
        let outputs = self
            .outputs
            .iter()
            .map(|p| {
                Ok(Artifact {
                    path: p.clone(),
                    sha256: file_digest(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: self.command.clone(),
            config_digest: self.config.digest(),
            config: self.config,
            seed: self.seed,
            inputs: self.inputs,
            outputs,
            started: self.started.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        };
        let path = out.join(format!("manifest_{}.json", self.command));
        write_atomic(
            &path,
            serde_json::to_string_pretty(&manifest)
                .expect("manifest serializes")
                .as_bytes(),
        )?;
        Ok(path)
    }
}

/// Writes through a sibling temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
