use std::path::PathBuf;

use chronogem_core::baselines::{count_bonus_explore, random_walk_explore, CountBonusConfig};
use chronogem_core::density::DensitySpec;
use chronogem_core::explore::{chronogem_explore, DiffusionConfig, Replacement, StateFilterSpec};
use chronogem_core::EnvSpec;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::{require_path, resolve};
use crate::inputs::{parse_density, parse_replacement, resolve_env, states_bytes};
use crate::manifest::Run;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Chronogem,
    Randomwalk,
    Countbonus,
}

#[derive(Debug, Args, Serialize)]
pub struct ExploreArgs {
    /// JSON config; flags override its keys.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// `maze` or `chain`.
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Population size (diffusion) or episode count (baselines).
    #[arg(long)]
    pub n: Option<usize>,
    /// Children per state, or candidate actions per count-bonus step.
    #[arg(long)]
    pub k: Option<usize>,
    /// Horizon.
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Diffusion density: gaussian, kde, gmm[:c], histogram[:bins].
    #[arg(long, value_parser = parse_density)]
    pub density: Option<DensitySpec>,
    /// State components the diffusion density sees, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub density_dims: Option<Vec<usize>>,
    /// Resampling `with` or `without` replacement.
    #[arg(long, value_parser = parse_replacement)]
    pub replacement: Option<Replacement>,
    /// Count-bonus grid resolution per axis.
    #[arg(long)]
    pub grid_bins: Option<usize>,
    /// Count-bonus episodes per grid snapshot.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExploreSettings {
    pub env: Option<String>,
    pub env_spec: Option<EnvSpec>,
    pub method: Method,
    pub n: usize,
    pub k: usize,
    pub t: usize,
    pub seed: u64,
    pub density: Option<DensitySpec>,
    pub density_dims: Option<Vec<usize>>,
    pub filter: Option<StateFilterSpec>,
    pub replacement: Replacement,
    pub grid_bins: usize,
    pub batch: usize,
    pub out: Option<PathBuf>,
}

impl Default for ExploreSettings {
    fn default() -> Self {
        ExploreSettings {
            env: None,
            env_spec: None,
            method: Method::Chronogem,
            n: 4096,
            k: 4,
            t: 1000,
            seed: 0,
            density: None,
            density_dims: None,
            filter: None,
            replacement: Replacement::With,
            grid_bins: 64,
            batch: 64,
            out: None,
        }
    }
}

pub fn run(args: &ExploreArgs, run: &mut Run) -> anyhow::Result<()> {
    let s: ExploreSettings = resolve(args.config.as_deref(), args)?;
    let out = require_path(&s.out, "out")?;
    let env = resolve_env(s.env.as_deref(), s.env_spec.as_ref())?;
    run.config(&s)?;
    run.seed("seed", s.seed);
    let (set, budget) = match s.method {
        Method::Chronogem => {
            let mut c = DiffusionConfig::for_env(&env, s.n, s.k, s.t, s.seed);
            if let Some(d) = &s.density {
                c.density = d.clone();
            }
            if s.density_dims.is_some() {
                c.density_dims = s.density_dims.clone();
            }
            c.filter = s.filter.clone();
            c.replacement = s.replacement;
            (chronogem_explore(&env, &c)?, c.budget())
        }
        Method::Randomwalk => (random_walk_explore(&env, s.n, s.t, s.seed)?, (s.n * s.t) as u64),
        Method::Countbonus => {
            let mut c = CountBonusConfig::new(s.n, s.t, s.k, s.grid_bins, s.seed);
            c.batch = s.batch;
            (count_bonus_explore(&env, &c)?, c.budget())
        }
    };
    run.steps("env_steps", set.meta.env_steps);
    run.steps("budget", budget);
    run.write(&out, &states_bytes(&set)?)
}
