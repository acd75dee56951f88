//! Result files. CSVs start with one `#` line carrying the run id, seed and
//! resolved config, followed by a fixed header row. JSON summaries are
//! `{command, run_id, seed, config, results}`. UTF-8, LF line endings.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// First 12 hex digits of SHA-256 over the command name and resolved config.
pub fn run_id(command: &str, config: &Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(command.as_bytes());
    hasher.update([0u8]);
    hasher.update(config.to_string().as_bytes());
    hasher.finalize()[..6]
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub struct RunOutput {
    dir: PathBuf,
    command: &'static str,
    run_id: String,
    seed: u64,
    config: Value,
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Invalid(format!("cannot write {}: {e}", path.display()))
}

impl RunOutput {
    pub fn new<C: Serialize>(
        dir: &Path,
        command: &'static str,
        seed: u64,
        config: &C,
    ) -> Result<Self> {
        let config =
            serde_json::to_value(config).map_err(|e| Error::Invalid(format!("config: {e}")))?;
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command,
            run_id: run_id(command, &config),
            seed,
            config,
        })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_csv<I>(&self, name: &str, header: &[String], rows: I) -> Result<PathBuf>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut text = format!(
            "# actorlab {} run_id={} seed={} config={}\n",
            self.command, self.run_id, self.seed, self.config
        );
        text.push_str(&header.join(","));
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        Ok(path)
    }

    pub fn write_json(&self, name: &str, results: Value) -> Result<PathBuf> {
        let doc = json!({
            "command": self.command,
            "run_id": self.run_id,
            "seed": self.seed,
            "config": self.config,
            "results": results,
        });
        let mut text =
            serde_json::to_string_pretty(&doc).map_err(|e| Error::Invalid(e.to_string()))?;
        text.push('\n');
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        Ok(path)
    }
}

pub fn header<S: AsRef<str>>(fixed: &[S], prefix: &str, count: usize) -> Vec<String> {
    fixed
        .iter()
        .map(|s| s.as_ref().to_string())
        .chain((0..count).map(|i| format!("{prefix}{i}")))
        .collect()
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_id_depends_on_config_and_command() {
        let a = run_id("variance", &json!({"seed": 1}));
        assert_eq!(a.len(), 12);
        assert_eq!(a, run_id("variance", &json!({"seed": 1})));
        assert_ne!(a, run_id("variance", &json!({"seed": 2})));
        assert_ne!(a, run_id("optimize", &json!({"seed": 1})));
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let out = RunOutput::new(dir.path(), "optimize", 3, &json!({"x": 1})).unwrap();
        let p = out
            .write_csv(
                "t.csv",
                &header(&["step"], "p", 2),
                vec![vec!["0".into(), "1".into(), "2.5".into()]],
            )
            .unwrap();
        let text = fs::read_to_string(p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# actorlab optimize run_id="));
        assert!(lines[0].contains("seed=3"));
        assert_eq!(lines[1], "step,p0,p1");
        assert_eq!(lines[2], "0,1,2.5");
        assert!(!text.contains('\r'));
    }
}
