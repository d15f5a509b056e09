use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::env::{BodyPose, EnvSpec, Environment, State};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::stateset::StateSet;

pub const DEFAULT_TRAIN_GOALS: usize = 4096;
pub const DEFAULT_EVAL_GOALS: usize = 128;

/// A goal state and the body pose that the reward compares against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub state: State,
    pub pose: BodyPose,
}

impl Goal {
    pub fn new(env: &EnvSpec, state: State) -> Self {
        let pose = env.body_pose(&state);
        Goal { state, pose }
    }
}

/// Disjoint train / evaluation goals drawn from one state set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalSet {
    pub env: String,
    /// Producer of the source state set (`chronogem`, `randomwalk`, ...).
    pub source: String,
    pub train: Vec<Goal>,
    pub eval: Vec<Goal>,
}

fn check_env(env: &EnvSpec, set: &StateSet) -> Result<()> {
    if set.meta.env != env.id() {
        return Err(Error::EnvMismatch {
            expected: env.id().to_string(),
            got: set.meta.env.clone(),
        });
    }
    for s in &set.states {
        crate::env::check_state_dim(env.state_dim(), s)?;
    }
    Ok(())
}

impl GoalSet {
    /// Shuffles the set and takes `n_eval` evaluation goals, then up to
    /// `n_train` training goals from the remaining states. Both splits are
    /// drawn from distinct positions of the source set.
    pub fn split(env: &EnvSpec, set: &StateSet, n_train: usize, n_eval: usize, rng: &mut Stream) -> Result<Self> {
        check_env(env, set)?;
        if n_train == 0 {
            return Err(Error::invalid("need at least one training goal"));
        }
        if set.len() < n_eval + 1 {
            return Err(Error::invalid(format!(
                "{} states cannot supply {n_eval} evaluation goals and a training split",
                set.len()
            )));
        }
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(rng);
        let eval = order[..n_eval]
            .iter()
            .map(|&i| Goal::new(env, set.states[i].clone()))
            .collect();
        let train = order[n_eval..]
            .iter()
            .take(n_train)
            .map(|&i| Goal::new(env, set.states[i].clone()))
            .collect();
        Ok(GoalSet {
            env: env.id().to_string(),
            source: set.meta.method.clone(),
            train,
            eval,
        })
    }

    /// Every state of the set as an evaluation goal.
    pub fn eval_only(env: &EnvSpec, set: &StateSet) -> Result<Vec<Goal>> {
        check_env(env, set)?;
        Ok(set.states.iter().map(|s| Goal::new(env, s.clone())).collect())
    }
}
