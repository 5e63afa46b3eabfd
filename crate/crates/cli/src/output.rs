//! File writers. CSV files open with a `# config: {...}` line and JSON files
//! carry a top-level `config` object.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use serde_json::Value;

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_json(path: &Path, value: &Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes `header` and `rows` after the config comment line.
pub fn write_csv(path: &Path, config: &Value, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut text = format!("# config: {}\n", serde_json::to_string(config)?);
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Shortest decimal text that reads back to the same `f64`.
pub fn num(x: f64) -> String {
    let mut s = String::new();
    write!(s, "{x}").expect("writing to a String");
    s
}
