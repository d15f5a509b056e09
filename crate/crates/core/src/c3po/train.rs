use rand::Rng;
use serde::{Deserialize, Serialize};

use super::goals::{Goal, GoalSet};
use super::policy::{Controller, ProportionalController};
use super::reward::{goal_reward, ThresholdMode};
use super::rollout::{rollout, RolloutDataset, StopAt};
use crate::env::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Consumes the rollout dataset and maintains the controller being trained.
pub trait Learner {
    fn name(&self) -> &str;

    fn controller(&self) -> &dyn Controller;

    /// Called after every training episode. Returns the environment
    /// interactions the update itself spent.
    fn update(&mut self, env: &EnvSpec, dataset: &RolloutDataset, episode: usize, rng: &mut Stream) -> Result<u64>;
}

/// A fixed, already competent controller. Updates do nothing; useful for
/// exercising the curriculum on its own.
#[derive(Clone, Debug)]
pub struct OracleLearner {
    controller: ProportionalController,
}

impl OracleLearner {
    pub fn new(env: &EnvSpec) -> Self {
        OracleLearner {
            controller: ProportionalController::new(env),
        }
    }
}

impl Learner for OracleLearner {
    fn name(&self) -> &str {
        "oracle"
    }

    fn controller(&self) -> &dyn Controller {
        &self.controller
    }

    fn update(&mut self, _env: &EnvSpec, _dataset: &RolloutDataset, _episode: usize, _rng: &mut Stream) -> Result<u64> {
        Ok(0)
    }
}

/// Initial threshold: a number, or `"auto"` for the 30th percentile of
/// `|r(reset, g)|` over the training goals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Eps0 {
    #[default]
    #[serde(with = "auto_tag")]
    Auto,
    Value(f64),
}

mod auto_tag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(serde::de::Error::custom("expected \"auto\" or a number"))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct C3poConfig {
    pub horizon: usize,
    /// Maximum training episodes.
    pub episodes: usize,
    /// Optional cap on interactions (rollouts plus learner updates).
    #[serde(default)]
    pub max_env_steps: Option<u64>,
    #[serde(default)]
    pub eps0: Eps0,
    #[serde(default)]
    pub mode: ThresholdMode,
    pub ema_decay: f64,
    pub anneal_above: f64,
    pub anneal_factor: f64,
    pub dataset_capacity: usize,
    /// Training-curve sampling period in episodes.
    pub curve_every: usize,
}

impl Default for C3poConfig {
    fn default() -> Self {
        C3poConfig {
            horizon: 128,
            episodes: 20_000,
            max_env_steps: None,
            eps0: Eps0::Auto,
            mode: ThresholdMode::Squared,
            ema_decay: 0.99,
            anneal_above: 0.9,
            anneal_factor: 0.99,
            dataset_capacity: 1024,
            curve_every: 50,
        }
    }
}

impl C3poConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.episodes == 0 || self.dataset_capacity == 0 || self.curve_every == 0 {
            return Err(Error::invalid(
                "horizon, episodes, dataset_capacity and curve_every must be positive",
            ));
        }
        if !(self.ema_decay >= 0.0 && self.ema_decay < 1.0) {
            return Err(Error::invalid("ema_decay must lie in [0, 1)"));
        }
        if !(self.anneal_factor > 0.0 && self.anneal_factor < 1.0) {
            return Err(Error::invalid("anneal_factor must lie in (0, 1)"));
        }
        if let Eps0::Value(v) = self.eps0 {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid("eps0 must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealEvent {
    /// Episodes completed when the threshold changed (0 for the initial value).
    pub episode: usize,
    pub env_steps: u64,
    pub epsilon: f64,
    /// Running success rate that triggered the anneal; 0 for the initial entry.
    #[serde(default)]
    pub trigger_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub epsilon: f64,
    pub mode: ThresholdMode,
    /// Exponential moving average of episode outcomes.
    pub success_rate: f64,
    /// Initial threshold followed by every anneal.
    pub history: Vec<AnnealEvent>,
}

impl CurriculumState {
    pub fn anneals(&self) -> usize {
        self.history.len().saturating_sub(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainPoint {
    pub episode: usize,
    pub env_steps: u64,
    pub epsilon: f64,
    pub success_rate: f64,
    /// Fraction of successes since the previous point.
    pub window_success: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub format_version: u32,
    pub learner: String,
    pub episodes: usize,
    pub env_steps: u64,
    pub rollout_steps: u64,
    pub learner_steps: u64,
    pub curriculum: CurriculumState,
    pub curve: Vec<TrainPoint>,
}

/// Linearly interpolated percentile of a sample (`q` in `[0, 1]`).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// 30th percentile of the reset-to-goal reward magnitude, in `mode` units.
pub fn auto_epsilon(env: &EnvSpec, goals: &[Goal], mode: ThresholdMode, seed: u64) -> Result<f64> {
    if goals.is_empty() {
        return Err(Error::invalid("no goals"));
    }
    let mut mags = Vec::with_capacity(goals.len());
    for (i, g) in goals.iter().enumerate() {
        let s = env.reset(&mut rng::stream(seed, "reset-episode", &[i as u64]));
        let r = goal_reward(&env.body_pose(&s), &g.pose)?.abs();
        mags.push(match mode {
            ThresholdMode::Squared => r,
            ThresholdMode::Distance => r.sqrt(),
        });
    }
    let e = percentile(&mags, 0.3);
    if e > 0.0 {
        return Ok(e);
    }
    // most goals at the reset pose: fall back to the smallest positive one
    mags.into_iter()
        .filter(|&m| m > 0.0)
        .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.min(m))))
        .ok_or_else(|| Error::invalid("every training goal equals the reset pose"))
}

/// Curriculum loop: draw a goal, roll out the learner's controller until
/// success at the current threshold or the horizon, store the rollout,
/// update the running success rate, tighten the threshold by
/// `anneal_factor` when the rate exceeds `anneal_above` (then restart the
/// average), and let the learner update.
pub fn c3po_train<L: Learner + ?Sized>(
    env: &EnvSpec,
    goals: &GoalSet,
    learner: &mut L,
    config: &C3poConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    if goals.env != env.id() {
        return Err(Error::EnvMismatch {
            expected: env.id().to_string(),
            got: goals.env.clone(),
        });
    }
    if goals.train.is_empty() {
        return Err(Error::invalid("empty training goal set"));
    }
    let eps0 = match config.eps0 {
        Eps0::Value(v) => v,
        Eps0::Auto => auto_epsilon(env, &goals.train, config.mode, seed)?,
    };
    let mut cur = CurriculumState {
        epsilon: eps0,
        mode: config.mode,
        success_rate: 0.0,
        history: vec![AnnealEvent {
            episode: 0,
            env_steps: 0,
            epsilon: eps0,
            trigger_rate: 0.0,
        }],
    };
    let mut dataset = RolloutDataset::new(config.dataset_capacity);
    let mut rollout_steps = 0u64;
    let mut learner_steps = 0u64;
    let mut curve = Vec::new();
    let mut window = (0usize, 0usize);
    let mut episodes = 0;
    while episodes < config.episodes {
        if config
            .max_env_steps
            .is_some_and(|cap| rollout_steps + learner_steps >= cap)
        {
            break;
        }
        let e = episodes;
        let gi = rng::stream(seed, "goal", &[e as u64]).random_range(0..goals.train.len());
        let goal = &goals.train[gi];
        let start = env.reset(&mut rng::stream(seed, "reset-episode", &[e as u64]));
        let stop = StopAt {
            eps: cur.epsilon,
            mode: cur.mode,
        };
        let r = rollout(
            env,
            learner.controller(),
            &start,
            goal,
            config.horizon,
            Some(stop),
            true,
        )?;
        rollout_steps += r.steps as u64;
        let x = if r.achieved { 1.0 } else { 0.0 };
        window.0 += r.achieved as usize;
        window.1 += 1;
        dataset.push(r);
        episodes += 1;
        cur.success_rate = config.ema_decay * cur.success_rate + (1.0 - config.ema_decay) * x;
        if cur.success_rate > config.anneal_above {
            cur.epsilon *= config.anneal_factor;
            cur.history.push(AnnealEvent {
                episode: episodes,
                env_steps: rollout_steps + learner_steps,
                epsilon: cur.epsilon,
                trigger_rate: cur.success_rate,
            });
            cur.success_rate = 0.0;
        }
        let mut lr = rng::stream(seed, "learner", &[e as u64]);
        learner_steps += learner
            .update(env, &dataset, e, &mut lr)
            .map_err(|err| Error::LearnerUpdate {
                episode: e,
                source: Box::new(err),
            })?;
        if episodes % config.curve_every == 0 || episodes == config.episodes {
            curve.push(TrainPoint {
                episode: episodes,
                env_steps: rollout_steps + learner_steps,
                epsilon: cur.epsilon,
                success_rate: cur.success_rate,
                window_success: window.0 as f64 / window.1 as f64,
            });
            window = (0, 0);
        }
    }
    Ok(TrainOutcome {
        format_version: crate::FORMAT_VERSION,
        learner: learner.name().to_string(),
        episodes,
        env_steps: rollout_steps + learner_steps,
        rollout_steps,
        learner_steps,
        curriculum: cur,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::State;

    fn open_goals(env: &EnvSpec, n: usize) -> GoalSet {
        let mut r = rng::stream(1, "goals", &[]);
        let train = (0..n)
            .map(|_| {
                Goal::new(
                    env,
                    State(vec![r.random_range(40.0..99.0), r.random_range(-99.0..-40.0)]),
                )
            })
            .collect();
        GoalSet {
            env: env.id().into(),
            source: "test".into(),
            train,
            eval: vec![],
        }
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 0.0), 1.0);
        assert!((percentile(&[1.0, 2.0, 3.0, 4.0], 0.3) - 1.9).abs() < 1e-12);
    }

    #[test]
    fn single_episode_budget() {
        let env = EnvSpec::by_name("maze").unwrap();
        let g = open_goals(&env, 10);
        let mut l = OracleLearner::new(&env);
        let cfg = C3poConfig {
            episodes: 1,
            ..Default::default()
        };
        let out = c3po_train(&env, &g, &mut l, &cfg, 3).unwrap();
        assert_eq!(out.episodes, 1);
        assert!(out.curriculum.anneals() <= 1);
    }

    #[test]
    fn oracle_anneals_in_exact_steps() {
        let env = EnvSpec::by_name("maze").unwrap();
        let g = open_goals(&env, 200);
        let mut l = OracleLearner::new(&env);
        let cfg = C3poConfig {
            episodes: 2000,
            ..Default::default()
        };
        let out = c3po_train(&env, &g, &mut l, &cfg, 3).unwrap();
        let h = &out.curriculum.history;
        assert!(h.len() >= 2);
        for w in h.windows(2) {
            assert_eq!(w[1].epsilon, w[0].epsilon * 0.99);
            assert!(w[1].episode > w[0].episode);
        }
        // a perfect controller anneals after exactly 230 consecutive successes
        assert_eq!(h[1].episode, 230);
    }

    #[test]
    fn step_cap_stops_training() {
        let env = EnvSpec::by_name("maze").unwrap();
        let g = open_goals(&env, 20);
        let mut l = OracleLearner::new(&env);
        let cfg = C3poConfig {
            episodes: 10_000,
            max_env_steps: Some(500),
            ..Default::default()
        };
        let out = c3po_train(&env, &g, &mut l, &cfg, 3).unwrap();
        assert!(out.env_steps >= 500 && out.env_steps < 500 + 128);
        assert!(out.episodes < 10_000);
    }

    #[test]
    fn learner_failure_reports_episode() {
        struct Broken(ProportionalController);
        impl Learner for Broken {
            fn name(&self) -> &str {
                "broken"
            }
            fn controller(&self) -> &dyn Controller {
                &self.0
            }
            fn update(&mut self, _: &EnvSpec, d: &RolloutDataset, _: usize, _: &mut Stream) -> Result<u64> {
                if d.total() == 3 {
                    Err(Error::Numerical("boom".into()))
                } else {
                    Ok(0)
                }
            }
        }
        let env = EnvSpec::by_name("maze").unwrap();
        let g = open_goals(&env, 5);
        let mut l = Broken(ProportionalController::new(&env));
        let err = c3po_train(&env, &g, &mut l, &C3poConfig::default(), 1).unwrap_err();
        assert!(matches!(err, Error::LearnerUpdate { episode: 2, .. }));
    }

    #[test]
    fn eps0_json_forms() {
        assert_eq!(serde_json::from_str::<Eps0>("\"auto\"").unwrap(), Eps0::Auto);
        assert_eq!(serde_json::from_str::<Eps0>("2.5").unwrap(), Eps0::Value(2.5));
        assert_eq!(serde_json::to_string(&Eps0::Auto).unwrap(), "\"auto\"");
        assert!(serde_json::from_str::<Eps0>("\"often\"").is_err());
    }
}
