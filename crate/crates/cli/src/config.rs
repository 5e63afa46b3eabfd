//! Option files. Keys are flag names with underscores (`max_samples`), either
//! at the top level or inside a table named after the subcommand; the
//! subcommand table wins over the top level and flags win over both.

use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::{usage, Failure};

pub fn read(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(|e| Failure { code: 2, error: e })?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let value = if is_json {
        serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?
    } else {
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        serde_json::to_value(table).map_err(|e| usage(format!("config {}: {e}", path.display())))?
    };
    if !value.is_object() {
        return Err(usage(format!("config {} must be a table", path.display())));
    }
    Ok(value)
}

/// Fills unset flags (`None`, or `false` for switches) from the option file.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, file: Option<&Value>, command: &str) -> Result<T, Failure> {
    let Some(file) = file else {
        return Ok(serde_json::from_value(serde_json::to_value(flags).map_err(anyhow::Error::from)?)
            .map_err(anyhow::Error::from)?);
    };
    let mut merged = Map::new();
    let top = file.as_object().cloned().unwrap_or_default();
    for (k, v) in &top {
        if !v.is_object() {
            merged.insert(k.clone(), v.clone());
        }
    }
    if let Some(Value::Object(section)) = top.get(command) {
        merged.extend(section.clone());
    }
    let Value::Object(given) = serde_json::to_value(flags).map_err(anyhow::Error::from)? else {
        unreachable!("argument structs serialise to objects");
    };
    let known: Vec<String> = given.keys().cloned().collect();
    merged.retain(|k, _| known.contains(k));
    for (k, v) in given {
        if !(v.is_null() || v == Value::Bool(false)) {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("config: {e}")))
}
