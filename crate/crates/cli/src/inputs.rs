//! Input files, environment resolution and flag value parsers.

use std::path::Path;

use anyhow::Context;
use chronogem_core::c3po::{Controller, Policy, ProportionalController, ThresholdMode};
use chronogem_core::density::{DensitySpec, Family};
use chronogem_core::explore::Replacement;
use chronogem_core::{EnvSpec, Environment, Error, StateSet};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

pub fn ensure_exists(path: &Path) -> anyhow::Result<()> {
    if !path.exists() {
        return Err(Failure::MissingFile(path.to_path_buf()).into());
    }
    Ok(())
}

pub fn load_states(path: &Path) -> anyhow::Result<StateSet> {
    ensure_exists(path)?;
    chronogem_core::io::load_states(path).with_context(|| format!("reading {}", path.display()))
}

pub fn states_bytes(set: &StateSet) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    chronogem_core::io::write_states(set, &mut buf)?;
    Ok(buf)
}

/// An explicit spec wins; its id must agree with `name` when both exist.
pub fn resolve_env(name: Option<&str>, spec: Option<&EnvSpec>) -> anyhow::Result<EnvSpec> {
    let env = match (name, spec) {
        (Some(n), Some(s)) if s.id() != n => {
            return Err(Error::EnvMismatch {
                expected: n.to_string(),
                got: s.id().to_string(),
            }
            .into())
        }
        (_, Some(s)) => s.clone(),
        (Some(n), None) => EnvSpec::by_name(n)?,
        (None, None) => EnvSpec::by_name("maze")?,
    };
    env.validate()?;
    Ok(env)
}

/// The environment a state set was produced in.
pub fn env_of(set: &StateSet) -> anyhow::Result<EnvSpec> {
    Ok(match &set.meta.env_spec {
        Some(s) => s.clone(),
        None => EnvSpec::by_name(&set.meta.env)?,
    })
}

pub fn check_same_env(expected: &EnvSpec, got: &EnvSpec) -> anyhow::Result<()> {
    if expected != got {
        return Err(Error::EnvMismatch {
            expected: expected.id().to_string(),
            got: got.id().to_string(),
        }
        .into());
    }
    Ok(())
}

/// File written for controllers that have no parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleFile {
    pub format_version: u32,
    pub controller: String,
    pub env_spec: EnvSpec,
}

impl OracleFile {
    pub fn new(env: &EnvSpec) -> Self {
        OracleFile {
            format_version: chronogem_core::FORMAT_VERSION,
            controller: "oracle".into(),
            env_spec: env.clone(),
        }
    }
}

pub struct LoadedController {
    pub env: EnvSpec,
    pub controller: Box<dyn Controller>,
}

/// Loads a policy JSON or an oracle file. The literal `oracle` builds the
/// straight-line controller for `default_env`.
pub fn load_controller(spec: &str, default_env: &EnvSpec) -> anyhow::Result<LoadedController> {
    if spec == "oracle" {
        return Ok(LoadedController {
            env: default_env.clone(),
            controller: Box::new(ProportionalController::new(default_env)),
        });
    }
    let path = Path::new(spec);
    ensure_exists(path)?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {spec}"))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {spec}"))?;
    if value.get("controller").and_then(|v| v.as_str()) == Some("oracle") {
        let f: OracleFile = serde_json::from_value(value).with_context(|| format!("parsing {spec}"))?;
        f.env_spec.validate()?;
        return Ok(LoadedController {
            controller: Box::new(ProportionalController::new(&f.env_spec)),
            env: f.env_spec,
        });
    }
    let mut p: Policy = serde_json::from_value(value).with_context(|| format!("parsing policy {spec}"))?;
    p.prepare().with_context(|| format!("loading policy {spec}"))?;
    Ok(LoadedController {
        env: p.env_spec.clone(),
        controller: Box::new(p),
    })
}

/// `gaussian`, `kde`, `gmm[:components]`, `histogram[:bins]`.
pub fn parse_density(text: &str) -> Result<DensitySpec, String> {
    let (name, arg) = match text.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (text, None),
    };
    let family = Family::parse(name).map_err(|e| e.to_string())?;
    let count = |a: &str| a.parse::<usize>().map_err(|_| format!("'{a}' is not a count"));
    Ok(match (family, arg) {
        (Family::Gmm, Some(a)) => DensitySpec::gmm(count(a)?),
        (Family::Histogram, Some(a)) => DensitySpec::histogram(count(a)?),
        (f, None) => DensitySpec::default_for(f),
        (f, Some(_)) => return Err(format!("{} takes no parameter", f.name())),
    })
}

pub fn parse_replacement(text: &str) -> Result<Replacement, String> {
    match text {
        "with" => Ok(Replacement::With),
        "without" => Ok(Replacement::Without),
        _ => Err("expected 'with' or 'without'".into()),
    }
}

pub fn parse_mode(text: &str) -> Result<ThresholdMode, String> {
    match text {
        "squared" => Ok(ThresholdMode::Squared),
        "distance" => Ok(ThresholdMode::Distance),
        _ => Err("expected 'squared' or 'distance'".into()),
    }
}

/// `name=path`.
pub fn parse_named(text: &str) -> Result<(String, String), String> {
    match text.split_once('=') {
        Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok((n.to_string(), p.to_string())),
        _ => Err(format!("'{text}' is not name=path")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_flags() {
        assert_eq!(parse_density("gmm:3").unwrap(), DensitySpec::gmm(3));
        assert_eq!(parse_density("histogram:40").unwrap(), DensitySpec::histogram(40));
        assert_eq!(parse_density("kde").unwrap(), DensitySpec::default_for(Family::Kde));
        assert!(parse_density("kde:3").is_err());
        assert!(parse_density("nope").is_err());
    }

    #[test]
    fn env_resolution() {
        assert_eq!(resolve_env(Some("chain"), None).unwrap().id(), "chain");
        let maze = EnvSpec::by_name("maze").unwrap();
        let err = resolve_env(Some("chain"), Some(&maze)).unwrap_err();
        assert!(err.to_string().contains("env mismatch"));
    }
}
