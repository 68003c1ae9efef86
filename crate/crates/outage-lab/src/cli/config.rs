//! Flat key=value configuration files.
//!
//! Keys mirror the long command-line flags (`seed=7`, `q-step=0.025`). Flags
//! given on the command line always override file values. Lines starting with
//! `#` and blank lines are ignored; later duplicates override earlier ones.

use std::collections::BTreeMap;
use std::path::Path;

/// Parses configuration text into a key-value map.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected key=value, got {raw:?}", idx + 1));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(format!("line {}: empty key", idx + 1));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Loads and parses a configuration file.
pub fn load(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_config(&text)
}

/// Fills `slot` from `map[key]` when the command line left it empty.
pub fn fill<T: std::str::FromStr>(
    slot: &mut Option<T>,
    map: &BTreeMap<String, String>,
    key: &str,
) -> Result<(), String>
where
    T::Err: std::fmt::Display,
{
    if slot.is_none() {
        if let Some(raw) = map.get(key) {
            let parsed = raw
                .parse::<T>()
                .map_err(|e| format!("config key {key}={raw:?}: {e}"))?;
            *slot = Some(parsed);
        }
    }
    Ok(())
}

/// Turns on a boolean flag from `map[key]` unless already set.
pub fn fill_flag(
    slot: &mut bool,
    map: &BTreeMap<String, String>,
    key: &str,
) -> Result<(), String> {
    if !*slot {
        if let Some(raw) = map.get(key) {
            *slot = match raw.as_str() {
                "true" | "1" | "yes" => true,
                "false" | "0" | "no" => false,
                other => return Err(format!("config key {key}={other:?}: expected a boolean")),
            };
        }
    }
    Ok(())
}
