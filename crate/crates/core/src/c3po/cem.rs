use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::goals::Goal;
use super::policy::{Controller, Policy};
use super::rollout::{rollout, RolloutDataset};
use super::train::Learner;
use crate::env::{EnvSpec, State};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Sampling-distribution update rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CemParams {
    pub population: usize,
    pub elite_fraction: f64,
    /// Weight of the elite statistics in the new mean / variance.
    pub smoothing: f64,
    /// Lower bound on every standard deviation.
    pub min_std: f64,
    /// Extra floor `extra_std · extra_decay^iteration` added to `min_std`,
    /// which keeps early iterations exploring.
    #[serde(default)]
    pub extra_std: f64,
    #[serde(default = "one")]
    pub extra_decay: f64,
    /// Draw perturbations in `±z` pairs.
    #[serde(default)]
    pub mirrored: bool,
}

fn one() -> f64 {
    1.0
}

impl Default for CemParams {
    fn default() -> Self {
        CemParams {
            population: 16,
            elite_fraction: 0.25,
            smoothing: 1.0,
            min_std: 0.005,
            extra_std: 0.05,
            extra_decay: 0.99,
            mirrored: true,
        }
    }
}

impl CemParams {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::invalid("CEM population must be at least 2"));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::invalid("elite_fraction must lie in (0, 1]"));
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return Err(Error::invalid("smoothing must lie in (0, 1]"));
        }
        if !(self.min_std >= 0.0 && self.extra_std >= 0.0) {
            return Err(Error::invalid("min_std and extra_std must be non-negative"));
        }
        if !(self.extra_decay > 0.0 && self.extra_decay <= 1.0) {
            return Err(Error::invalid("extra_decay must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn std_floor(&self, iteration: usize) -> f64 {
        self.min_std + self.extra_std * self.extra_decay.powi(iteration as i32)
    }

    pub fn elite_count(&self) -> usize {
        ((self.population as f64 * self.elite_fraction).round() as usize).clamp(1, self.population)
    }
}

/// Diagonal Gaussian over a parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CemState {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub iteration: usize,
}

impl CemState {
    pub fn new(mean: Vec<f64>, std: f64) -> Self {
        let n = mean.len();
        CemState {
            mean,
            std: vec![std; n],
            iteration: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CemStepReport {
    pub scores: Vec<f64>,
    pub elite_mean_score: f64,
    /// False when every candidate scored the same and nothing moved.
    pub updated: bool,
}

/// One cross-entropy-method iteration maximizing `objective`. Candidates
/// are drawn sequentially from `rng` and scored in parallel; ties in the
/// ranking keep sampling order.
pub fn cem_step<F>(state: &mut CemState, params: &CemParams, objective: F, rng: &mut Stream) -> Result<CemStepReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    params.validate()?;
    let d = state.mean.len();
    let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(params.population);
    while candidates.len() < params.population {
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        candidates.push((0..d).map(|j| state.mean[j] + state.std[j] * z[j]).collect());
        if params.mirrored && candidates.len() < params.population {
            candidates.push((0..d).map(|j| state.mean[j] - state.std[j] * z[j]).collect());
        }
    }
    let scores: Vec<f64> = candidates.par_iter().map(|c| objective(c)).collect();
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numerical("CEM objective returned NaN".into()));
    }
    state.iteration += 1;
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(CemStepReport {
            elite_mean_score: hi,
            scores,
            updated: false,
        });
    }
    let mut order: Vec<usize> = (0..params.population).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let elite = &order[..params.elite_count()];
    let m = elite.len() as f64;
    let a = params.smoothing;
    let floor = params.std_floor(state.iteration);
    #[allow(clippy::needless_range_loop)]
    for j in 0..d {
        let mu = elite.iter().map(|&i| candidates[i][j]).sum::<f64>() / m;
        let var = elite.iter().map(|&i| (candidates[i][j] - mu).powi(2)).sum::<f64>() / m;
        state.mean[j] = (1.0 - a) * state.mean[j] + a * mu;
        let v = (1.0 - a) * state.std[j] * state.std[j] + a * var;
        state.std[j] = v.sqrt().max(floor);
    }
    let elite_mean_score = elite.iter().map(|&i| scores[i]).sum::<f64>() / m;
    Ok(CemStepReport {
        scores,
        elite_mean_score,
        updated: true,
    })
}

/// Where candidate-scoring rollouts begin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreStart {
    /// The stored rollout's initial state.
    #[default]
    Initial,
    /// A uniformly chosen state along the stored rollout.
    Visited,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CemLearnerConfig {
    #[serde(flatten)]
    pub cem: CemParams,
    pub hidden: Vec<usize>,
    /// Initial standard deviation of every parameter.
    pub init_std: f64,
    /// Scale of the initial output layer.
    pub output_gain: f64,
    /// Goals scored per candidate.
    pub minibatch: usize,
    /// Training episodes between updates.
    pub update_every: usize,
    /// Rollout length when scoring candidates.
    pub horizon: usize,
    #[serde(default)]
    pub score_start: ScoreStart,
}

impl Default for CemLearnerConfig {
    fn default() -> Self {
        CemLearnerConfig {
            cem: CemParams::default(),
            hidden: Policy::DEFAULT_HIDDEN.to_vec(),
            init_std: 0.05,
            output_gain: 1.0,
            minibatch: 4,
            update_every: 1,
            horizon: 128,
            score_start: ScoreStart::Initial,
        }
    }
}

impl CemLearnerConfig {
    /// Interactions spent by one update.
    pub fn update_cost(&self) -> u64 {
        (self.cem.population * self.minibatch * self.horizon) as u64
    }
}

/// CEM over the flat parameter vector of a [`Policy`]. Each update samples
/// a minibatch of goals from the rollout dataset and scores every candidate
/// by the mean goal reward at the end of a full-horizon rollout started
/// from a state of the stored rollout (see [`ScoreStart`]). The policy
/// becomes the new sampling mean.
#[derive(Clone, Debug)]
pub struct CemLearner {
    policy: Policy,
    state: CemState,
    config: CemLearnerConfig,
    pending: usize,
    pub last_report: Option<CemStepReport>,
}

impl CemLearner {
    pub fn new(env: &EnvSpec, config: CemLearnerConfig, rng: &mut Stream) -> Result<Self> {
        config.cem.validate()?;
        if config.minibatch == 0 || config.update_every == 0 || config.horizon == 0 {
            return Err(Error::invalid("minibatch, update_every and horizon must be positive"));
        }
        let policy = Policy::init(env, &config.hidden, config.output_gain, rng);
        let state = CemState::new(policy.params.clone(), config.init_std);
        Ok(CemLearner {
            policy,
            state,
            config,
            pending: 0,
            last_report: None,
        })
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn into_policy(self) -> Policy {
        self.policy
    }

    pub fn config(&self) -> &CemLearnerConfig {
        &self.config
    }

    /// Candidate score: mean final reward over `(start, goal)` pairs.
    pub fn score(env: &EnvSpec, policy: &Policy, batch: &[(State, Goal)], horizon: usize) -> f64 {
        let mut total = 0.0;
        for (s, g) in batch {
            total += match rollout(env, policy, s, g, horizon, None, false) {
                Ok(r) => r.final_reward,
                Err(_) => f64::NEG_INFINITY,
            };
        }
        total / batch.len() as f64
    }
}

impl Learner for CemLearner {
    fn name(&self) -> &str {
        "cem"
    }

    fn controller(&self) -> &dyn Controller {
        &self.policy
    }

    fn update(&mut self, env: &EnvSpec, dataset: &RolloutDataset, _episode: usize, rng: &mut Stream) -> Result<u64> {
        if dataset.is_empty() {
            return Err(Error::invalid("CEM update needs a nonempty dataset"));
        }
        self.pending += 1;
        if self.pending < self.config.update_every {
            return Ok(0);
        }
        self.pending = 0;
        let batch: Vec<(State, Goal)> = (0..self.config.minibatch)
            .map(|_| {
                let r = dataset.get(rng.random_range(0..dataset.len()));
                let t = match self.config.score_start {
                    ScoreStart::Initial => 0,
                    ScoreStart::Visited => rng.random_range(0..r.states.len()),
                };
                (r.states[t].clone(), r.goal.clone())
            })
            .collect();
        let base = &self.policy;
        let horizon = self.config.horizon;
        let report = cem_step(
            &mut self.state,
            &self.config.cem,
            |theta| match base.with_params(theta.to_vec()) {
                Ok(p) => Self::score(env, &p, &batch, horizon),
                Err(_) => f64::NEG_INFINITY,
            },
            rng,
        )?;
        if report.updated {
            self.policy = self.policy.with_params(self.state.mean.clone())?;
        }
        self.last_report = Some(report);
        Ok(self.config.update_cost())
    }
}
