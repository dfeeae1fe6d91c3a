use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// What a command produced: a JSON result, named CSV tables, and an exit code.
pub struct Output {
    pub command: &'static str,
    pub result: Value,
    /// `(file stem, csv body)`; the first table is the one printed with `--format csv`.
    pub tables: Vec<(&'static str, String)>,
    pub exit_code: u8,
}

impl Output {
    pub fn envelope(&self, config: &Value) -> Value {
        json!({
            "tool": "largegame",
            "version": VERSION,
            "config": config,
            "exit_code": self.exit_code,
            "result": self.result,
        })
    }
}

/// Prefixes a CSV body with comment lines carrying the version and config.
pub fn csv_with_header(config: &Value, body: &str) -> String {
    format!("# largegame {VERSION}\n# config: {config}\n{body}")
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn emit(out: &Output, config: &Value, format: Format, dir: Option<&Path>) -> Result<()> {
    let json_text = serde_json::to_string_pretty(&out.envelope(config))? + "\n";
    if let Some(dir) = dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_atomic(&dir.join(format!("{}.json", out.command)), &json_text)?;
        for (stem, body) in &out.tables {
            write_atomic(
                &dir.join(format!("{stem}.csv")),
                &csv_with_header(config, body),
            )?;
        }
    }
    let mut stdout = std::io::stdout().lock();
    match (format, out.tables.first()) {
        (Format::Csv, Some((_, body))) => {
            stdout.write_all(csv_with_header(config, body).as_bytes())?
        }
        _ => stdout.write_all(json_text.as_bytes())?,
    }
    Ok(())
}
