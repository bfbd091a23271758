//! Run configuration resolution: profile, then an optional JSON file, then `--a.b=value`
//! overrides, then strict parsing and validation.

use std::path::Path;

use agrpose::config::RunConfig;
use agrpose::{Error, Result};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// A `--path.to.field=value` flag. The value is parsed as JSON when possible, else kept
/// as a string.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

/// Splits argv into config overrides (`--a.b=v`, the key must contain a dot) and the rest.
pub fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<Override>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for arg in args {
        let Some(flag) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let key = flag.split('=').next().unwrap_or_default();
        if !key.contains('.') {
            rest.push(arg);
            continue;
        }
        let Some((key, raw)) = flag.split_once('=') else {
            return Err(Error::Config {
                path: key.into(),
                msg: format!("override `{arg}` needs the form --{key}=VALUE"),
            });
        };
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
        overrides.push(Override {
            path: key.split('.').map(String::from).collect(),
            value,
        });
    }
    Ok((rest, overrides))
}

fn merge(base: &mut Value, patch: Value, path: &mut Vec<String>) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                path.push(k.clone());
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, path)?,
                    None => {
                        return Err(Error::Config {
                            path: path.join("."),
                            msg: "unknown field".into(),
                        })
                    }
                }
                path.pop();
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

fn apply(base: &mut Value, o: &Override) -> Result<()> {
    let mut slot = base;
    for (i, key) in o.path.iter().enumerate() {
        slot = slot.get_mut(key).ok_or_else(|| Error::Config {
            path: o.path[..=i].join("."),
            msg: "unknown field".into(),
        })?;
    }
    *slot = o.value.clone();
    Ok(())
}

/// Resolves a run configuration from its layers.
pub fn resolve(profile: &str, file: Option<&Path>, overrides: &[Override]) -> Result<RunConfig> {
    let base = RunConfig::profile(profile)?;
    let mut value = serde_json::to_value(&base).expect("config serializes");
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let patch: Value = serde_json::from_str(&text).map_err(|e| Error::Config {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        merge(&mut value, patch, &mut Vec::new())?;
    }
    for o in overrides {
        apply(&mut value, o)?;
    }
    let cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::Config {
        path: "config".into(),
        msg: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Hex SHA-256 of the canonical JSON encoding.
pub fn config_hash<V: serde::Serialize>(value: &V) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn overrides_are_split_and_typed() {
        let (rest, o) = split_overrides(strings(&["train", "--data", "d", "--train.lr=0.5", "--model.projection=naive"])).unwrap();
        assert_eq!(rest, strings(&["train", "--data", "d"]));
        assert_eq!(o[0].value, Value::from(0.5));
        assert_eq!(o[1].value, Value::String("naive".into()));
        assert!(split_overrides(strings(&["--train.lr"])).is_err());
    }

    #[test]
    fn resolution_layers_and_errors_name_paths() {
        let (_, o) = split_overrides(strings(&["--train.epochs=3", "--synth.people=[1,1]"])).unwrap();
        let c = resolve("desk", None, &o).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.synth.people, [1, 1]);
        let (_, bad) = split_overrides(strings(&["--train.learning_rate=1"])).unwrap();
        match resolve("desk", None, &bad).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "train.learning_rate"),
            e => panic!("{e}"),
        }
        let (_, bad) = split_overrides(strings(&["--train.batch=0"])).unwrap();
        match resolve("desk", None, &bad).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "train.batch"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::desk();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.train.lr *= 2.0;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
