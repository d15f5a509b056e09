//! JSON config files with flag overrides.
//!
//! A config file is a JSON object whose keys are the long flag names with
//! `-` replaced by `_`. Flags given on the command line win. Unknown keys
//! and type errors are malformed-config failures.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::failure::Failure;

pub fn read_object(path: &Path) -> anyhow::Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => anyhow::Error::new(Failure::MissingFile(path.to_path_buf())),
        _ => anyhow::Error::new(e).context(format!("reading {}", path.display())),
    })?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(Failure::Config(format!("{}: top level must be an object", path.display())).into()),
        Err(e) => Err(Failure::Config(format!("{}: {e}", path.display())).into()),
    }
}

/// Merges `flags` (serialized, nulls dropped) over the config file and
/// deserializes the result.
pub fn resolve<S: DeserializeOwned>(config: Option<&Path>, flags: &impl Serialize) -> anyhow::Result<S> {
    let mut merged = match config {
        Some(p) => read_object(p)?,
        None => Map::new(),
    };
    let Value::Object(overrides) = serde_json::to_value(flags)? else {
        unreachable!("flag structs serialize to objects");
    };
    for (k, v) in overrides {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| {
        let origin = config.map_or("flags".to_string(), |p| p.display().to_string());
        Failure::Config(format!("{origin}: {e}")).into()
    })
}

pub fn require<T>(value: Option<T>, flag: &str) -> anyhow::Result<T> {
    value.ok_or_else(|| Failure::Usage(format!("--{flag} is required (flag or config key)")).into())
}

pub fn require_path(value: &Option<PathBuf>, flag: &str) -> anyhow::Result<PathBuf> {
    require(value.clone(), flag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize)]
    struct Flags {
        n: Option<usize>,
        name: Option<String>,
    }

    #[derive(Debug, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct Settings {
        n: usize,
        name: String,
        seed: u64,
    }

    impl Default for Settings {
        fn default() -> Self {
            Settings {
                n: 1,
                name: "a".into(),
                seed: 0,
            }
        }
    }

    #[test]
    fn flags_win_over_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"n": 5, "seed": 9}"#).unwrap();
        let s: Settings = resolve(Some(&p), &Flags { n: Some(7), name: None }).unwrap();
        assert_eq!(
            s,
            Settings {
                n: 7,
                name: "a".into(),
                seed: 9
            }
        );
    }

    #[test]
    fn unknown_keys_are_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"bogus": 1}"#).unwrap();
        let err = resolve::<Settings>(Some(&p), &Flags { n: None, name: None }).unwrap_err();
        assert!(matches!(err.downcast_ref::<Failure>(), Some(Failure::Config(_))));
        std::fs::write(&p, "{not json").unwrap();
        let err = resolve::<Settings>(Some(&p), &Flags { n: None, name: None }).unwrap_err();
        assert!(matches!(err.downcast_ref::<Failure>(), Some(Failure::Config(_))));
    }

    #[test]
    fn missing_config_is_a_missing_file() {
        let err =
            resolve::<Settings>(Some(Path::new("/nonexistent/c.json")), &Flags { n: None, name: None }).unwrap_err();
        assert!(matches!(err.downcast_ref::<Failure>(), Some(Failure::MissingFile(_))));
    }
}
