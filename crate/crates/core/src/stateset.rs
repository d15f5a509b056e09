use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, State};
use crate::error::{Error, Result};

/// Provenance of a state set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSetMeta {
    pub format_version: u32,
    /// Environment id (`maze`, `chain`).
    pub env: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_spec: Option<EnvSpec>,
    /// Producer, e.g. `chronogem`, `randomwalk`, `countbonus`, `expert`.
    pub method: String,
    /// Population or episode count.
    pub n: usize,
    /// Branching factor or candidate count (1 when not applicable).
    pub k: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Environment interactions spent producing the set.
    pub env_steps: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl StateSetMeta {
    pub fn new(env: &EnvSpec, method: &str) -> Self {
        use crate::env::Environment;
        StateSetMeta {
            format_version: crate::FORMAT_VERSION,
            env: env.id().to_string(),
            env_spec: Some(env.clone()),
            method: method.to_string(),
            n: 0,
            k: 1,
            horizon: 0,
            seed: 0,
            env_steps: 0,
            extra: BTreeMap::new(),
        }
    }
}

/// A batch of states with optional per-state log-density and weight.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSet {
    pub meta: StateSetMeta,
    pub states: Vec<State>,
    pub log_densities: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
}

impl StateSet {
    pub fn new(meta: StateSetMeta, states: Vec<State>) -> Self {
        StateSet {
            meta,
            states,
            log_densities: None,
            weights: None,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.is_empty() {
            return Err(Error::invalid("state set is empty"));
        }
        let d = self.states[0].len();
        for s in &self.states {
            if s.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: s.len(),
                });
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("state set contains non-finite values"));
            }
        }
        if let Some(ld) = &self.log_densities {
            if ld.len() != self.states.len() || ld.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("log-densities must be finite and aligned with states"));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.states.len() || w.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::invalid("weights must be non-negative and aligned with states"));
            }
        }
        Ok(())
    }

    /// States as plain vectors.
    pub fn vectors(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.0.clone()).collect()
    }
}
