//! Stage stamps. Each stage's key hashes its config sections together with
//! its predecessor's key, so a change anywhere upstream invalidates
//! everything below it.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub struct KeyBuilder {
    table: toml::Table,
}

impl KeyBuilder {
    pub fn new(stage: &str, upstream: &[&str]) -> Self {
        let mut table = toml::Table::new();
        table.insert("stage".into(), stage.into());
        table.insert(
            "upstream".into(),
            toml::Value::Array(upstream.iter().map(|&k| k.into()).collect()),
        );
        KeyBuilder { table }
    }

    pub fn with(mut self, name: &str, value: &impl Serialize) -> Result<Self, CliError> {
        let v = toml::Value::try_from(value)
            .map_err(|e| CliError::Config(format!("cannot hash `{name}`: {e}")))?;
        self.table.insert(name.into(), v);
        Ok(self)
    }

    pub fn finish(self) -> String {
        let text = toml::to_string(&self.table).expect("table serializes");
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }
}

pub fn stamp_path(workdir: &Path, stage: &str) -> PathBuf {
    workdir.join("stamps").join(format!("{stage}.stamp"))
}

pub fn read_stamp(workdir: &Path, stage: &str) -> Option<String> {
    std::fs::read_to_string(stamp_path(workdir, stage))
        .ok()
        .map(|s| s.trim().to_string())
}

pub fn write_stamp(workdir: &Path, stage: &str, key: &str) -> Result<(), CliError> {
    let p = stamp_path(workdir, stage);
    let dir = p.parent().expect("stamp has a directory");
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    std::fs::write(&p, format!("{key}\n")).map_err(|e| CliError::io(&p, e))
}

/// Removes a stamp before a stage rewrites its outputs, so an interrupted
/// run is never mistaken for a finished one.
pub fn clear_stamp(workdir: &Path, stage: &str) -> Result<(), CliError> {
    let p = stamp_path(workdir, stage);
    match std::fs::remove_file(&p) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(CliError::io(&p, e)),
        _ => Ok(()),
    }
}

/// Fails unless `stage` has run with exactly this key.
pub fn require(workdir: &Path, stage: &str, command: &str, key: &str) -> Result<(), CliError> {
    match read_stamp(workdir, stage) {
        None => Err(CliError::MissingStage {
            stage: stage.into(),
            command: command.into(),
            why: "has not been run".into(),
        }),
        Some(k) if k != key => Err(CliError::MissingStage {
            stage: stage.into(),
            command: command.into(),
            why: "is stale for the current config".into(),
        }),
        Some(_) => Ok(()),
    }
}
