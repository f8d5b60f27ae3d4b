//! Artifact files. Names derive from the config hash; every file carries the
//! hash and the parameter echo.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Resolved;
use crate::error::{io, CliError};

pub struct Artifacts {
    dir: PathBuf,
    hash: String,
    echo: serde_json::Value,
}

impl Artifacts {
    pub fn new(dir: &Path, cfg: &Resolved) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        Ok(Self {
            dir: dir.to_owned(),
            hash: cfg.hash(),
            echo: cfg.echo(),
        })
    }

    /// `<stem>-<hash>[-<tag>].<ext>`
    pub fn path(&self, stem: &str, tag: Option<&str>, ext: &str) -> PathBuf {
        let name = match tag {
            Some(t) => format!("{stem}-{}-{t}.{ext}", self.hash),
            None => format!("{stem}-{}.{ext}", self.hash),
        };
        self.dir.join(name)
    }

    /// JSON object `{config_hash, config, result}`.
    pub fn write_json<T: Serialize>(&self, stem: &str, tag: Option<&str>, result: &T) -> Result<PathBuf, CliError> {
        let path = self.path(stem, tag, "json");
        let doc = serde_json::json!({
            "config_hash": self.hash,
            "config": self.echo,
            "result": result,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("artifact serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| io(&path, e))?;
        Ok(path)
    }

    /// CSV preceded by `#` lines holding the hash and the compact echo.
    pub fn write_csv(
        &self,
        stem: &str,
        tag: Option<&str>,
        body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let path = self.path(stem, tag, "csv");
        let mut buf = Vec::new();
        writeln!(buf, "# config_hash={}", self.hash).expect("vec write");
        writeln!(buf, "# config={}", self.echo).expect("vec write");
        body(&mut buf).map_err(|e| io(&path, e))?;
        fs::write(&path, buf).map_err(|e| io(&path, e))?;
        Ok(path)
    }
}

/// Filename-safe tag for a ticker and affinity, e.g. `AAPL-g-1`.
pub fn job_tag(ticker: &str, gamma_esg: f64) -> String {
    let t: String = ticker
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{t}-g{gamma_esg}")
}
