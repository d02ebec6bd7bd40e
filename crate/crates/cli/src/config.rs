//! Config file loading. Accepts a JSON object or `key = value` lines with
//! dotted section keys, e.g. `backend.kind = remote`. Recognized sections
//! are `backend`, `finetune` and `encoder`; each overrides the defaults.

use std::path::Path;

use anyhow::{bail, Context, Result};
use fincorpus::freeze::{EncoderConfig, FineTuneConfig};
use fincorpus::scoring::BackendConfig;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileConfig {
    pub backend: BackendConfig,
    pub finetune: FineTuneConfig,
    pub encoder: EncoderConfig,
}

const SECTIONS: [&str; 3] = ["backend", "finetune", "encoder"];

pub fn parse(text: &str) -> Result<FileConfig> {
    let root = if text.trim_start().starts_with('{') {
        serde_json::from_str::<Value>(text).context("config is not valid JSON")?
    } else {
        parse_key_values(text)?
    };
    let Value::Object(root) = root else {
        bail!("config root must be an object");
    };
    if let Some(unknown) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        bail!("unknown config section {unknown:?}");
    }
    let finetune: FineTuneConfig = overlay(FineTuneConfig::default(), root.get("finetune"), "finetune")?;
    finetune.validate()?;
    let encoder: EncoderConfig = overlay(EncoderConfig::default(), root.get("encoder"), "encoder")?;
    encoder.validate()?;
    let backend: BackendConfig = overlay(BackendConfig::default(), root.get("backend"), "backend")?;
    Ok(FileConfig { backend, finetune, encoder })
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse(&text).with_context(|| format!("in config {}", path.display()))
}

fn overlay<T: Serialize + DeserializeOwned>(base: T, patch: Option<&Value>, section: &str) -> Result<T> {
    let Some(patch) = patch else { return Ok(base) };
    let Value::Object(patch) = patch else {
        bail!("section {section:?} must be an object");
    };
    let mut merged = serde_json::to_value(base)?;
    let fields = merged.as_object_mut().expect("config structs serialize to objects");
    for (k, v) in patch {
        if !fields.contains_key(k) {
            bail!("unknown key {section}.{k}");
        }
        fields.insert(k.clone(), v.clone());
    }
    serde_json::from_value(merged).with_context(|| format!("invalid value in section {section:?}"))
}

fn parse_key_values(text: &str) -> Result<Value> {
    let mut root = Map::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key = value", i + 1);
        };
        let Some((section, field)) = key.trim().split_once('.') else {
            bail!("config line {}: key must be section.field", i + 1);
        };
        let value = value.trim();
        // Numbers, booleans and null keep their JSON type; anything else is a string.
        let parsed = serde_json::from_str::<Value>(value)
            .ok()
            .filter(|v| !v.is_object() && !v.is_array())
            .unwrap_or_else(|| Value::String(value.to_string()));
        root.entry(section.to_string())
            .or_insert_with(|| Value::Object(Map::new()))
            .as_object_mut()
            .expect("sections are objects")
            .insert(field.to_string(), parsed);
    }
    Ok(Value::Object(root))
}
