//! Branch / fit / inverse-density resample diffusion.
//!
//! Each iteration steps every state of the population with `K` uniform
//! actions, fits a density to the `N·K` children and draws `N` of them with
//! probability proportional to `1 / ρ(s)`. Repeating this for `T` steps
//! flattens the horizon-`T` population toward uniform over reachable states.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{self, DensitySpec};
use crate::env::{Action, EnvSpec, Environment, State};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::stateset::{StateSet, StateSetMeta};

/// Weights below this are treated as zero.
pub const MIN_WEIGHT: f64 = 1e-300;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Replacement {
    #[default]
    With,
    Without,
}

/// Normalized resampling weights `mask_i · exp(-ld_i)`, computed relative to
/// the largest admitted term so nothing overflows.
pub fn inverse_density_weights(log_densities: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>> {
    if let Some(m) = mask {
        if m.len() != log_densities.len() {
            return Err(Error::DimensionMismatch {
                expected: log_densities.len(),
                got: m.len(),
            });
        }
    }
    if log_densities.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("log-densities must be finite"));
    }
    let admitted = |i: usize| mask.is_none_or(|m| m[i]);
    let top = (0..log_densities.len())
        .filter(|&i| admitted(i))
        .map(|i| -log_densities[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::EmptySupport);
    }
    let mut w: Vec<f64> = (0..log_densities.len())
        .map(|i| {
            if !admitted(i) {
                return 0.0;
            }
            let v = (-log_densities[i] - top).exp();
            if v < MIN_WEIGHT {
                0.0
            } else {
                v
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    Ok(w)
}

/// Indices drawn with probability proportional to `mask · 1/ρ`.
pub fn resample_indices(
    log_densities: &[f64],
    mask: Option<&[bool]>,
    n_out: usize,
    replacement: Replacement,
    rng: &mut Stream,
) -> Result<Vec<usize>> {
    if n_out == 0 {
        return Err(Error::invalid("resample size must be at least 1"));
    }
    let w = inverse_density_weights(log_densities, mask)?;
    match replacement {
        Replacement::With => {
            let dist = WeightedIndex::new(&w).map_err(|_| Error::EmptySupport)?;
            Ok((0..n_out).map(|_| dist.sample(rng)).collect())
        }
        Replacement::Without => {
            let positive = w.iter().filter(|&&v| v > 0.0).count();
            if positive < n_out {
                return Err(Error::invalid(format!(
                    "cannot draw {n_out} distinct states from {positive} with positive weight"
                )));
            }
            let mut idx = rand::seq::index::sample_weighted(rng, w.len(), |i| w[i], n_out)
                .map_err(|_| Error::EmptySupport)?
                .into_vec();
            // deterministic order for downstream consumers
            idx.sort_unstable();
            Ok(idx)
        }
    }
}

/// Resamples `items` with probability proportional to `mask · exp(-ld)`.
pub fn inverse_density_resample<T: Clone>(
    items: &[T],
    log_densities: &[f64],
    mask: Option<&[bool]>,
    n_out: usize,
    replacement: Replacement,
    rng: &mut Stream,
) -> Result<Vec<T>> {
    if items.len() != log_densities.len() {
        return Err(Error::DimensionMismatch {
            expected: items.len(),
            got: log_densities.len(),
        });
    }
    let idx = resample_indices(log_densities, mask, n_out, replacement, rng)?;
    Ok(idx.into_iter().map(|i| items[i].clone()).collect())
}

/// How the `K` children of a state pick their actions.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum BranchActions {
    #[default]
    Uniform,
    /// Every child uses this action. With `K = 1` and the zero action this
    /// reproduces the parents.
    Constant(Action),
}

/// Steps every state `k` times. Output is state-major: children
/// `[i·k, (i+1)·k)` descend from `states[i]`. Child actions come from the
/// stream `("branch", [iteration, i])`, so the result does not depend on
/// how rayon splits the work. Adds `k · states.len()` to `steps`.
pub fn branch(
    env: &EnvSpec,
    states: &[State],
    k: usize,
    actions: &BranchActions,
    seed: u64,
    iteration: u64,
    steps: &mut u64,
) -> Result<Vec<State>> {
    if states.is_empty() {
        return Err(Error::invalid("cannot branch an empty population"));
    }
    if k == 0 {
        return Err(Error::invalid("branching factor must be at least 1"));
    }
    if let BranchActions::Constant(a) = actions {
        env.action_box().check(a)?;
    }
    let nested: Vec<Vec<State>> = states
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut r = rng::stream(seed, "branch", &[iteration, i as u64]);
            (0..k)
                .map(|_| {
                    let a = match actions {
                        BranchActions::Uniform => env.sample_uniform_action(&mut r),
                        BranchActions::Constant(a) => a.clone(),
                    };
                    env.step(s, &a)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    // one child per environment step
    let children: Vec<State> = nested.into_iter().flatten().collect();
    *steps += children.len() as u64;
    Ok(children)
}

/// Predicate turning undesired states into zero resampling weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateFilterSpec {
    /// Rejects states whose components `dims` fall inside `[min, max]`.
    ExcludeBox {
        dims: Vec<usize>,
        min: Vec<f64>,
        max: Vec<f64>,
    },
    /// Keeps only states whose components `dims` fall inside `[min, max]`.
    KeepBox {
        dims: Vec<usize>,
        min: Vec<f64>,
        max: Vec<f64>,
    },
    /// Keeps states with `state[dim] >= value` (torso-height style filter).
    AtLeast { dim: usize, value: f64 },
}

impl StateFilterSpec {
    pub fn validate(&self, state_dim: usize) -> Result<()> {
        let check_box = |dims: &[usize], min: &[f64], max: &[f64]| -> Result<()> {
            if dims.is_empty() || dims.len() != min.len() || dims.len() != max.len() {
                return Err(Error::invalid("filter box needs matching dims/min/max"));
            }
            if dims.iter().any(|&d| d >= state_dim) {
                return Err(Error::invalid("filter dimension out of range"));
            }
            if min.iter().zip(max).any(|(a, b)| !(a <= b)) {
                return Err(Error::invalid("filter box has min > max"));
            }
            Ok(())
        };
        match self {
            StateFilterSpec::ExcludeBox { dims, min, max } | StateFilterSpec::KeepBox { dims, min, max } => {
                check_box(dims, min, max)
            }
            StateFilterSpec::AtLeast { dim, value } => {
                if *dim >= state_dim || !value.is_finite() {
                    return Err(Error::invalid("invalid threshold filter"));
                }
                Ok(())
            }
        }
    }

    pub fn admits(&self, s: &[f64]) -> bool {
        let inside = |dims: &[usize], min: &[f64], max: &[f64]| {
            dims.iter().enumerate().all(|(j, &d)| s[d] >= min[j] && s[d] <= max[j])
        };
        match self {
            StateFilterSpec::ExcludeBox { dims, min, max } => !inside(dims, min, max),
            StateFilterSpec::KeepBox { dims, min, max } => inside(dims, min, max),
            StateFilterSpec::AtLeast { dim, value } => s[*dim] >= *value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub n: usize,
    pub k: usize,
    pub horizon: usize,
    pub density: DensitySpec,
    /// State components the density is fitted on; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<StateFilterSpec>,
    #[serde(default)]
    pub replacement: Replacement,
    pub seed: u64,
}

impl DiffusionConfig {
    pub fn new(n: usize, k: usize, horizon: usize, density: DensitySpec, seed: u64) -> Self {
        DiffusionConfig {
            n,
            k,
            horizon,
            density,
            density_dims: None,
            filter: None,
            replacement: Replacement::With,
            seed,
        }
    }

    /// Default desk-scale setting for an environment: a histogram over the
    /// maze position (64 bins per axis) or over the chain joint angles
    /// (10 bins per axis).
    pub fn for_env(env: &EnvSpec, n: usize, k: usize, horizon: usize, seed: u64) -> Self {
        let (dims, bins) = match env {
            EnvSpec::Maze(_) => (env.plane().dims.to_vec(), 64),
            EnvSpec::Chain(c) => ((0..c.links).collect(), 10),
        };
        let mut c = DiffusionConfig::new(n, k, horizon, DensitySpec::histogram(bins), seed);
        c.density_dims = Some(dims);
        c
    }

    pub fn validate(&self, env: &EnvSpec) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("population N must be at least 2"));
        }
        if self.k < 1 {
            return Err(Error::invalid("branching factor K must be at least 1"));
        }
        if let Some(d) = &self.density_dims {
            if d.is_empty() || d.iter().any(|&j| j >= env.state_dim()) {
                return Err(Error::invalid("density_dims out of range"));
            }
        }
        if let Some(f) = &self.filter {
            f.validate(env.state_dim())?;
        }
        Ok(())
    }

    /// Closed-form interaction count `K·N·T`.
    pub fn budget(&self) -> u64 {
        (self.k as u64) * (self.n as u64) * (self.horizon as u64)
    }
}

fn project(states: &[State], dims: Option<&[usize]>) -> Vec<Vec<f64>> {
    match dims {
        None => states.iter().map(|s| s.0.clone()).collect(),
        Some(d) => states.iter().map(|s| d.iter().map(|&j| s[j]).collect()).collect(),
    }
}

pub(crate) fn reset_population(env: &EnvSpec, n: usize, seed: u64) -> Vec<State> {
    (0..n)
        .map(|i| env.reset(&mut rng::stream(seed, "reset", &[i as u64])))
        .collect()
}

/// Runs the diffusion and returns the horizon-`T` population.
pub fn chronogem_explore(env: &EnvSpec, config: &DiffusionConfig) -> Result<StateSet> {
    chronogem_explore_observed(env, config, |_, _| {})
}

/// As [`chronogem_explore`], calling `observe(t, S_t)` after every
/// resampling step.
pub fn chronogem_explore_observed<F>(env: &EnvSpec, config: &DiffusionConfig, mut observe: F) -> Result<StateSet>
where
    F: FnMut(usize, &[State]),
{
    diffuse(env, config, |t, pop, _| observe(t, pop))
}

/// Runs the diffusion keeping every population, then follows the ancestry
/// of member `member` of `S_T` back to the reset state. The returned
/// `T + 1` states are each one environment step apart.
pub fn chronogem_lineage(env: &EnvSpec, config: &DiffusionConfig, member: usize) -> Result<Vec<State>> {
    if member >= config.n {
        return Err(Error::invalid("lineage member index out of range"));
    }
    let mut pops: Vec<Vec<State>> = vec![reset_population(env, config.n, config.seed)];
    let mut parents: Vec<Vec<usize>> = Vec::new();
    diffuse(env, config, |_, pop, picked| {
        pops.push(pop.to_vec());
        parents.push(picked.iter().map(|&c| c / config.k).collect());
    })?;
    let mut i = member;
    let mut lineage = vec![pops[config.horizon][i].clone()];
    for t in (0..config.horizon).rev() {
        i = parents[t][i];
        lineage.push(pops[t][i].clone());
    }
    lineage.reverse();
    Ok(lineage)
}

/// Diffusion loop; `observe(t, S_t, picked)` receives the indices of the
/// chosen children in the state-major candidate list.
fn diffuse<F>(env: &EnvSpec, config: &DiffusionConfig, mut observe: F) -> Result<StateSet>
where
    F: FnMut(usize, &[State], &[usize]),
{
    env.validate()?;
    config.validate(env)?;
    let mut population = reset_population(env, config.n, config.seed);
    let mut steps = 0u64;
    let mut last_ld: Option<Vec<f64>> = None;
    let dims = config.density_dims.as_deref();

    for t in 0..config.horizon {
        let children = branch(
            env,
            &population,
            config.k,
            &BranchActions::Uniform,
            config.seed,
            t as u64,
            &mut steps,
        )?;
        let features = project(&children, dims);
        let mut fit_rng = rng::stream(config.seed, "density", &[t as u64]);
        let model = density::fit(&config.density, &features, &mut fit_rng).map_err(|e| Error::DensityFit {
            iteration: t,
            source: Box::new(e),
        })?;
        let ld = model.log_densities(&features)?;
        let mask: Option<Vec<bool>> = config
            .filter
            .as_ref()
            .map(|f| children.iter().map(|s| f.admits(s)).collect());
        if let Some(m) = &mask {
            if !m.iter().any(|&b| b) {
                return Err(Error::FilteredToEmpty { iteration: t });
            }
        }
        let mut rs = rng::stream(config.seed, "resample", &[t as u64]);
        let idx = match resample_indices(&ld, mask.as_deref(), config.n, config.replacement, &mut rs) {
            Ok(v) => v,
            Err(Error::EmptySupport) => return Err(Error::FilteredToEmpty { iteration: t }),
            Err(e) => return Err(e),
        };
        population = idx.iter().map(|&i| children[i].clone()).collect();
        last_ld = Some(idx.iter().map(|&i| ld[i]).collect());
        observe(t + 1, &population, &idx);
    }

    let mut meta = StateSetMeta::new(env, "chronogem");
    meta.n = config.n;
    meta.k = config.k;
    meta.horizon = config.horizon;
    meta.seed = config.seed;
    meta.env_steps = steps;
    meta.extra
        .insert("density".into(), serde_json::to_value(&config.density)?);
    if let Some(d) = &config.density_dims {
        meta.extra.insert("density_dims".into(), serde_json::to_value(d)?);
    }
    if let Some(f) = &config.filter {
        meta.extra.insert("filter".into(), serde_json::to_value(f)?);
    }
    meta.extra
        .insert("replacement".into(), serde_json::to_value(config.replacement)?);
    let mut set = StateSet::new(meta, population);
    set.log_densities = last_ld;
    Ok(set)
}
