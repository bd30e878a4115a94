//! Manifests and output files.
//!
//! CSV output starts with `#` comment lines carrying the manifest, then a
//! header row and the data. JSON output is `{"manifest": ..., "result": ...}`.
//! When writing to a file, the manifest is also written to
//! `<output>.manifest.json`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::commands::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub config_sha256: String,
    pub config: Value,
}

impl Manifest {
    /// `config` is the fully resolved parameter set; the hash covers the
    /// command name and its compact JSON form.
    pub fn new<C: Serialize>(command: &'static str, seed: Option<u64>, config: &C) -> Result<Self, CliError> {
        let config = serde_json::to_value(config).map_err(|e| CliError::Config(e.to_string()))?;
        let canonical = json!({ "command": command, "config": config }).to_string();
        let digest = Sha256::digest(canonical.as_bytes());
        let config_sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(Manifest { tool: "tree-ldp", version: tree_ldp::VERSION, command, seed, config_sha256, config })
    }

    fn comment_lines(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "# tool: {} {}\n# command: {}\n# seed: {}\n# config_sha256: {}\n# config: {}\n",
            self.tool, self.version, self.command, seed, self.config_sha256, self.config
        )
    }
}

pub struct Sink {
    pub output: Option<PathBuf>,
}

impl Sink {
    /// `notes` become extra comment lines after the manifest.
    pub fn csv(&self, manifest: &Manifest, notes: &[String], body: &[u8]) -> Result<(), CliError> {
        let mut text = manifest.comment_lines().into_bytes();
        for note in notes {
            text.extend_from_slice(format!("# {note}\n").as_bytes());
        }
        text.extend_from_slice(body);
        self.emit(manifest, &text)
    }

    pub fn json<T: Serialize>(&self, manifest: &Manifest, result: &T) -> Result<(), CliError> {
        let doc = json!({ "manifest": manifest, "result": result });
        let mut text = serde_json::to_vec_pretty(&doc).map_err(tree_ldp::Error::from)?;
        text.push(b'\n');
        self.emit(manifest, &text)
    }

    fn emit(&self, manifest: &Manifest, bytes: &[u8]) -> Result<(), CliError> {
        match &self.output {
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(bytes)?;
                out.flush()?;
            }
            Some(path) => {
                fs::write(path, bytes)?;
                let mut side = OsString::from(path.as_os_str());
                side.push(".manifest.json");
                let mut text = serde_json::to_vec_pretty(manifest).map_err(tree_ldp::Error::from)?;
                text.push(b'\n');
                fs::write(PathBuf::from(side), text)?;
            }
        }
        Ok(())
    }
}

/// Writes the error as JSON on stderr and returns its exit code.
pub fn report_error(e: &CliError) -> ExitCode {
    let code = e.exit_code();
    let doc = json!({ "error": { "kind": e.kind(), "message": e.to_string() }, "exit_code": code });
    eprintln!("{doc}");
    ExitCode::from(code)
}
