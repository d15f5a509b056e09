//! Comparison explorers under the same interaction accounting as the
//! diffusion: a random walk, and a greedy count-bonus explorer.
//!
//! The count-bonus explorer is a simplified novelty-seeking stand-in, not
//! a reimplementation of any published intrinsic-motivation method.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, Environment, Plane, State};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::stateset::{StateSet, StateSetMeta};

fn episode_stream(seed: u64, e: usize) -> Stream {
    rng::stream(seed, "episode", &[e as u64])
}

fn meta(env: &EnvSpec, method: &str, episodes: usize, k: usize, horizon: usize, seed: u64, steps: u64) -> StateSetMeta {
    let mut m = StateSetMeta::new(env, method);
    m.n = episodes;
    m.k = k;
    m.horizon = horizon;
    m.seed = seed;
    m.env_steps = steps;
    m
}

/// Final states of `episodes` independent uniform-action episodes of
/// length `horizon`. Uses `episodes · horizon` interactions; the metadata
/// records the steps actually taken.
pub fn random_walk_explore(env: &EnvSpec, episodes: usize, horizon: usize, seed: u64) -> Result<StateSet> {
    env.validate()?;
    if episodes == 0 {
        return Err(Error::invalid("episodes must be at least 1"));
    }
    let runs: Vec<(State, u64)> = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let mut r = episode_stream(seed, e);
            let mut s = env.reset(&mut r);
            let mut steps = 0;
            for _ in 0..horizon {
                let a = env.sample_uniform_action(&mut r);
                s = env.step(&s, &a)?;
                steps += 1;
            }
            Ok((s, steps))
        })
        .collect::<Result<_>>()?;
    let steps = runs.iter().map(|r| r.1).sum();
    let finals = runs.into_iter().map(|r| r.0).collect();
    Ok(StateSet::new(
        meta(env, "randomwalk", episodes, 1, horizon, seed, steps),
        finals,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountBonusConfig {
    pub episodes: usize,
    pub horizon: usize,
    /// Candidate actions evaluated per step.
    pub k: usize,
    /// Grid resolution per axis over the environment plane.
    pub grid_bins: usize,
    /// Episodes that run against the same snapshot of the global grid
    /// before their visits are merged.
    #[serde(default = "default_batch")]
    pub batch: usize,
    pub seed: u64,
}

fn default_batch() -> usize {
    64
}

impl CountBonusConfig {
    pub fn new(episodes: usize, horizon: usize, k: usize, grid_bins: usize, seed: u64) -> Self {
        CountBonusConfig {
            episodes,
            horizon,
            k,
            grid_bins,
            batch: default_batch(),
            seed,
        }
    }

    /// `K · episodes · T`: every candidate action costs one interaction.
    pub fn budget(&self) -> u64 {
        (self.k as u64) * (self.episodes as u64) * (self.horizon as u64)
    }
}

/// Visitation counts on a regular grid over a plane.
#[derive(Clone, Debug, PartialEq)]
pub struct VisitGrid {
    plane: Plane,
    bins: usize,
    counts: Vec<u32>,
}

impl VisitGrid {
    pub fn new(plane: Plane, bins: usize) -> Self {
        VisitGrid {
            plane,
            bins,
            counts: vec![0; bins * bins],
        }
    }

    /// Cell of a state; points outside the plane go to the nearest edge cell.
    pub fn cell(&self, s: &[f64]) -> usize {
        let p = self.plane.project(s);
        let axis = |a: usize| {
            let u = (p[a] - self.plane.min[a]) / (self.plane.max[a] - self.plane.min[a]);
            ((u * self.bins as f64).floor().max(0.0) as usize).min(self.bins - 1)
        };
        axis(1) * self.bins + axis(0)
    }

    pub fn count(&self, cell: usize) -> u32 {
        self.counts[cell]
    }

    pub fn add(&mut self, cell: usize) {
        self.counts[cell] += 1;
    }

    pub fn merge(&mut self, other: &VisitGrid) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn occupied(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// Greedy one-step novelty seeking. At every step `k` candidate actions
/// are drawn; the one whose next state lands in the least-visited cell is
/// taken, ties broken uniformly. Visits count toward the global grid once
/// the episode's batch finishes, in episode order. Returns the final
/// states and the global grid.
pub fn count_bonus_explore_with_grid(env: &EnvSpec, config: &CountBonusConfig) -> Result<(StateSet, VisitGrid)> {
    env.validate()?;
    if config.episodes == 0 || config.k == 0 || config.batch == 0 {
        return Err(Error::invalid("episodes, k and batch must be positive"));
    }
    if config.grid_bins < 2 {
        return Err(Error::invalid("grid_bins must be at least 2"));
    }
    let mut global = VisitGrid::new(env.plane(), config.grid_bins);
    let mut finals = Vec::with_capacity(config.episodes);
    let mut steps = 0u64;
    let mut start = 0;
    while start < config.episodes {
        let end = (start + config.batch).min(config.episodes);
        let snapshot = &global;
        let results: Vec<(State, VisitGrid, u64)> = (start..end)
            .into_par_iter()
            .map(|e| {
                let mut r = episode_stream(config.seed, e);
                let mut local = VisitGrid::new(snapshot.plane, config.grid_bins);
                let mut s = env.reset(&mut r);
                let mut cands = Vec::with_capacity(config.k);
                let mut best = Vec::with_capacity(config.k);
                let mut steps = 0u64;
                for _ in 0..config.horizon {
                    cands.clear();
                    for _ in 0..config.k {
                        let a = env.sample_uniform_action(&mut r);
                        cands.push(env.step(&s, &a)?);
                        steps += 1;
                    }
                    best.clear();
                    let mut low = u32::MAX;
                    for (j, c) in cands.iter().enumerate() {
                        let cell = snapshot.cell(c);
                        let n = snapshot.count(cell) + local.count(cell);
                        if n < low {
                            low = n;
                            best.clear();
                        }
                        if n == low {
                            best.push(j);
                        }
                    }
                    let pick = if best.len() == 1 {
                        best[0]
                    } else {
                        best[r.random_range(0..best.len())]
                    };
                    s = cands.swap_remove(pick);
                    local.add(local.cell(&s));
                }
                Ok((s, local, steps))
            })
            .collect::<Result<_>>()?;
        for (s, local, n) in results {
            global.merge(&local);
            finals.push(s);
            steps += n;
        }
        start = end;
    }
    let mut m = meta(
        env,
        "countbonus",
        config.episodes,
        config.k,
        config.horizon,
        config.seed,
        steps,
    );
    m.extra.insert("grid_bins".into(), config.grid_bins.into());
    m.extra.insert("batch".into(), config.batch.into());
    Ok((StateSet::new(m, finals), global))
}

pub fn count_bonus_explore(env: &EnvSpec, config: &CountBonusConfig) -> Result<StateSet> {
    count_bonus_explore_with_grid(env, config).map(|(s, _)| s)
}
