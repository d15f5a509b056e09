use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::goals::Goal;
use super::policy::Controller;
use super::reward::{goal_reward, ThresholdMode};
use crate::env::{Action, EnvSpec, Environment, State};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub goal: Goal,
    /// Visited states, starting with the initial one; `actions.len() + 1`
    /// entries.
    pub states: Vec<State>,
    pub actions: Vec<Action>,
    pub achieved: bool,
    pub steps: usize,
    pub final_reward: f64,
    /// Largest reward seen anywhere along the trajectory.
    pub best_reward: f64,
}

/// Stopping rule for [`rollout`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopAt {
    pub eps: f64,
    pub mode: ThresholdMode,
}

/// Runs `controller` from `start` for up to `horizon` steps. With `stop`,
/// success is tested on the initial state and after every step, and the
/// episode ends at the first success.
pub fn rollout(
    env: &EnvSpec,
    controller: &dyn Controller,
    start: &State,
    goal: &Goal,
    horizon: usize,
    stop: Option<StopAt>,
    record: bool,
) -> Result<Rollout> {
    let mut s = start.clone();
    let mut r = goal_reward(&env.body_pose(&s), &goal.pose)?;
    let mut best = r;
    let mut states = vec![];
    let mut actions = vec![];
    if record {
        states.push(s.clone());
    }
    let hit = |r: f64| stop.is_some_and(|c| c.mode.succeeds(r, c.eps));
    let mut achieved = hit(r);
    let mut steps = 0;
    while !achieved && steps < horizon {
        let a = controller.act(&s, goal);
        s = env.step(&s, &a)?;
        steps += 1;
        r = goal_reward(&env.body_pose(&s), &goal.pose)?;
        best = best.max(r);
        achieved = hit(r);
        if record {
            states.push(s.clone());
            actions.push(a);
        } else if steps == horizon || achieved {
            states.push(s.clone());
        }
    }
    if states.is_empty() {
        states.push(s);
    }
    Ok(Rollout {
        goal: goal.clone(),
        states,
        actions,
        achieved,
        steps,
        final_reward: r,
        best_reward: best,
    })
}

/// Bounded FIFO of training rollouts.
#[derive(Clone, Debug)]
pub struct RolloutDataset {
    capacity: usize,
    items: VecDeque<Rollout>,
    total: usize,
}

impl RolloutDataset {
    pub fn new(capacity: usize) -> Self {
        RolloutDataset {
            capacity: capacity.max(1),
            items: VecDeque::new(),
            total: 0,
        }
    }

    pub fn push(&mut self, r: Rollout) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(r);
        self.total += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Rollouts ever pushed, including evicted ones.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn get(&self, i: usize) -> &Rollout {
        &self.items[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Rollout> {
        self.items.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c3po::policy::ProportionalController;
    use crate::rng;

    #[test]
    fn oracle_reaches_visible_goal() {
        let env = EnvSpec::by_name("maze").unwrap();
        let start = env.reset(&mut rng::stream(0, "r", &[]));
        let goal = Goal::new(&env, State(vec![60.0, -70.0]));
        let c = ProportionalController::new(&env);
        let stop = StopAt {
            eps: 1e-6,
            mode: ThresholdMode::Squared,
        };
        let r = rollout(&env, &c, &start, &goal, 128, Some(stop), true).unwrap();
        assert!(r.achieved);
        assert_eq!(r.steps, 38);
        assert_eq!(r.states.len(), r.steps + 1);
        assert!(r.final_reward.abs() < 1e-6);
    }

    #[test]
    fn success_checked_before_first_step() {
        let env = EnvSpec::by_name("maze").unwrap();
        let start = env.reset(&mut rng::stream(0, "r", &[]));
        let goal = Goal::new(&env, start.clone());
        let c = ProportionalController::new(&env);
        let stop = StopAt {
            eps: 0.1,
            mode: ThresholdMode::Squared,
        };
        let r = rollout(&env, &c, &start, &goal, 128, Some(stop), true).unwrap();
        assert!(r.achieved);
        assert_eq!(r.steps, 0);
    }

    #[test]
    fn dataset_is_bounded() {
        let env = EnvSpec::by_name("maze").unwrap();
        let start = env.reset(&mut rng::stream(0, "r", &[]));
        let goal = Goal::new(&env, start.clone());
        let c = ProportionalController::new(&env);
        let r = rollout(&env, &c, &start, &goal, 3, None, false).unwrap();
        assert_eq!(r.steps, 3);
        let mut d = RolloutDataset::new(2);
        for _ in 0..5 {
            d.push(r.clone());
        }
        assert_eq!(d.len(), 2);
        assert_eq!(d.total(), 5);
    }
}
