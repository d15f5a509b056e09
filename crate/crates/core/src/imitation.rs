//! Zero-shot imitation: a goal-conditioned controller tracks every `n`-th
//! state of a single demonstration, with no further learning.

use serde::{Deserialize, Serialize};

use crate::c3po::{goal_reward, Controller, Goal, Rollout, ThresholdMode};
use crate::env::{Action, EnvSpec, Environment, MazeSpec, State};
use crate::error::{Error, Result};
use crate::explore::{chronogem_lineage, DiffusionConfig};
use crate::stateset::{StateSet, StateSetMeta};

pub const MAX_EXPERT_LEN: usize = 300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpertSource {
    Scripted,
    ChronogemBranch,
}

impl ExpertSource {
    fn method(self) -> &'static str {
        match self {
            ExpertSource::Scripted => "expert:scripted",
            ExpertSource::ChronogemBranch => "expert:chronogem-branch",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertTrajectory {
    pub env: EnvSpec,
    pub source: ExpertSource,
    pub states: Vec<State>,
}

impl ExpertTrajectory {
    pub fn new(env: EnvSpec, source: ExpertSource, states: Vec<State>) -> Result<Self> {
        if states.is_empty() || states.len() > MAX_EXPERT_LEN {
            return Err(Error::invalid(format!(
                "expert length must lie in 1..={MAX_EXPERT_LEN}, got {}",
                states.len()
            )));
        }
        for s in &states {
            crate::env::check_state_dim(env.state_dim(), s)?;
        }
        Ok(ExpertTrajectory { env, source, states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Same JSON-lines layout as a state set.
    pub fn to_state_set(&self) -> StateSet {
        let mut meta = StateSetMeta::new(&self.env, self.source.method());
        meta.n = 1;
        meta.horizon = self.states.len() - 1;
        StateSet::new(meta, self.states.clone())
    }

    pub fn from_state_set(set: &StateSet) -> Result<Self> {
        let source = match set.meta.method.as_str() {
            "expert:scripted" => ExpertSource::Scripted,
            "expert:chronogem-branch" => ExpertSource::ChronogemBranch,
            other => return Err(Error::Format(format!("'{other}' is not an expert trajectory"))),
        };
        let env = match &set.meta.env_spec {
            Some(e) => e.clone(),
            None => EnvSpec::by_name(&set.meta.env)?,
        };
        Self::new(env, source, set.states.clone())
    }
}

/// Walks through `waypoints` in order at `speed` units per step from the
/// reset state, then holds the last waypoint until `length` states exist.
/// Each state is produced by stepping the environment, so consecutive
/// states are reachable by construction.
pub fn scripted_maze_expert(
    maze: &MazeSpec,
    waypoints: &[[f64; 2]],
    speed: f64,
    length: usize,
) -> Result<ExpertTrajectory> {
    if !(speed > 0.0 && speed <= 1.0) {
        return Err(Error::invalid("expert speed must lie in (0, 1]"));
    }
    if length == 0 {
        return Err(Error::invalid("expert length must be positive"));
    }
    let env = EnvSpec::Maze(maze.clone());
    let mut s = State(maze.start.to_vec());
    let mut states = vec![s.clone()];
    let mut w = 0;
    while states.len() < length {
        let a = if w < waypoints.len() {
            let d = [waypoints[w][0] - s[0], waypoints[w][1] - s[1]];
            let norm = d[0].abs().max(d[1].abs());
            if norm <= speed {
                w += 1;
                [d[0], d[1]]
            } else {
                [d[0] / norm * speed, d[1] / norm * speed]
            }
        } else {
            [0.0, 0.0]
        };
        let next = env.step(&s, &Action(a.to_vec()))?;
        let moved = (next[0] - s[0]).abs().max((next[1] - s[1]).abs());
        let wanted = a[0].abs().max(a[1].abs());
        if wanted > 0.0 && moved < 0.5 * wanted {
            return Err(Error::invalid("scripted expert path runs into a wall"));
        }
        s = next;
        states.push(s.clone());
    }
    ExpertTrajectory::new(env, ExpertSource::Scripted, states)
}

/// Default maze demonstration: 300 states along an L through the start
/// room, first west along the bottom wall, then north.
pub fn default_maze_expert(maze: &MazeSpec) -> Result<ExpertTrajectory> {
    let y0 = maze.start[1];
    scripted_maze_expert(maze, &[[40.0, y0], [40.0, y0 + 57.5]], 0.4, MAX_EXPERT_LEN)
}

/// A demonstration replayed from the ancestry of one member of a diffusion
/// run of horizon `length - 1`.
pub fn branch_expert(env: &EnvSpec, config: &DiffusionConfig, member: usize) -> Result<ExpertTrajectory> {
    ExpertTrajectory::new(
        env.clone(),
        ExpertSource::ChronogemBranch,
        chronogem_lineage(env, config, member)?,
    )
}

/// Indices `L-1, L-1-n, ...` in ascending order; always includes the final
/// state and has `ceil(L / n)` entries.
pub fn target_indices(len: usize, stride: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..len.div_ceil(stride)).map(|j| len - 1 - j * stride).collect();
    v.reverse();
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    pub index: usize,
    pub achieved: bool,
    pub steps: usize,
    pub best_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub format_version: u32,
    pub stride: usize,
    pub per_target_budget: usize,
    pub eps: f64,
    pub mode: ThresholdMode,
    pub targets: Vec<TargetResult>,
    pub achieved_fraction: f64,
    pub mean_best_distance: f64,
    pub total_steps: usize,
}

/// Tracks the subsampled expert from its first state. Each target gets up
/// to `per_target_budget` steps; on success or exhaustion the controller
/// moves on to the next target from wherever it is. `best_distance` is the
/// smallest `sqrt|r|` reached while chasing the target.
pub fn zero_shot_imitate(
    env: &EnvSpec,
    controller: &dyn Controller,
    expert: &ExpertTrajectory,
    stride: usize,
    per_target_budget: usize,
    eps: f64,
    mode: ThresholdMode,
) -> Result<(Rollout, TrackingReport)> {
    if stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    if expert.env.id() != env.id() {
        return Err(Error::EnvMismatch {
            expected: env.id().to_string(),
            got: expert.env.id().to_string(),
        });
    }
    let mut s = expert.states[0].clone();
    let mut states = vec![s.clone()];
    let mut actions = Vec::new();
    let mut results = Vec::new();
    let mut last_reward = 0.0;
    let mut best_overall = f64::NEG_INFINITY;
    let mut last_goal = None;
    for idx in target_indices(expert.len(), stride) {
        let goal = Goal::new(env, expert.states[idx].clone());
        let mut r = goal_reward(&env.body_pose(&s), &goal.pose)?;
        let mut best = r;
        let mut steps = 0;
        let mut achieved = mode.succeeds(r, eps);
        while !achieved && steps < per_target_budget {
            let a = controller.act(&s, &goal);
            s = env.step(&s, &a)?;
            steps += 1;
            r = goal_reward(&env.body_pose(&s), &goal.pose)?;
            best = best.max(r);
            achieved = mode.succeeds(r, eps);
            states.push(s.clone());
            actions.push(a);
        }
        last_reward = r;
        best_overall = best;
        results.push(TargetResult {
            index: idx,
            achieved,
            steps,
            best_distance: best.abs().sqrt(),
        });
        last_goal = Some(goal);
    }
    let n = results.len() as f64;
    let achieved_fraction = results.iter().filter(|t| t.achieved).count() as f64 / n;
    let mean_best_distance = results.iter().map(|t| t.best_distance).sum::<f64>() / n;
    let total_steps = actions.len();
    let rollout = Rollout {
        goal: last_goal.expect("at least one target"),
        steps: total_steps,
        achieved: results.last().is_some_and(|t| t.achieved),
        final_reward: last_reward,
        best_reward: best_overall,
        states,
        actions,
    };
    let report = TrackingReport {
        format_version: crate::FORMAT_VERSION,
        stride,
        per_target_budget,
        eps,
        mode,
        targets: results,
        achieved_fraction,
        mean_best_distance,
        total_steps,
    };
    Ok((rollout, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c3po::ProportionalController;

    fn maze() -> (MazeSpec, EnvSpec) {
        let m = MazeSpec::default();
        (m.clone(), EnvSpec::Maze(m))
    }

    #[test]
    fn targets_cover_the_end() {
        assert_eq!(target_indices(300, 10).len(), 30);
        assert_eq!(*target_indices(300, 10).last().unwrap(), 299);
        assert_eq!(target_indices(300, 10)[0], 9);
        assert_eq!(target_indices(7, 3), vec![0, 3, 6]);
        assert_eq!(target_indices(300, 300), vec![299]);
        assert_eq!(target_indices(5, 1), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn default_expert_shape() {
        let (m, _) = maze();
        let e = default_maze_expert(&m).unwrap();
        assert_eq!(e.len(), 300);
        let last = e.states.last().unwrap();
        assert!((last[0] - 40.0).abs() < 1e-9 && (last[1] - (-40.0)).abs() < 1e-9);
        for w in e.states.windows(2) {
            assert!((w[1][0] - w[0][0]).abs() <= 0.4 + 1e-12 && (w[1][1] - w[0][1]).abs() <= 0.4 + 1e-12);
        }
    }

    #[test]
    fn walled_script_rejected() {
        let (m, _) = maze();
        assert!(scripted_maze_expert(&m, &[[0.0, -97.5]], 1.0, 200).is_err());
    }

    #[test]
    fn oracle_tracks_stationary_expert() {
        let (m, env) = maze();
        let e = ExpertTrajectory::new(env.clone(), ExpertSource::Scripted, vec![State(m.start.to_vec()); 50]).unwrap();
        let (_, rep) = zero_shot_imitate(
            &env,
            &ProportionalController::new(&env),
            &e,
            5,
            10,
            1e-6,
            ThresholdMode::Distance,
        )
        .unwrap();
        assert_eq!(rep.targets.len(), 10);
        assert_eq!(rep.achieved_fraction, 1.0);
        assert_eq!(rep.total_steps, 0);
    }

    #[test]
    fn oracle_tracks_l_path() {
        let (m, env) = maze();
        let e = default_maze_expert(&m).unwrap();
        let (roll, rep) = zero_shot_imitate(
            &env,
            &ProportionalController::new(&env),
            &e,
            10,
            50,
            1.0,
            ThresholdMode::Distance,
        )
        .unwrap();
        assert_eq!(rep.achieved_fraction, 1.0);
        assert!(rep.mean_best_distance < m.corridor_width);
        assert_eq!(roll.states.len(), roll.actions.len() + 1);
    }

    #[test]
    fn budget_monotonicity_for_oracle() {
        let (m, env) = maze();
        let e = scripted_maze_expert(&m, &[[40.0, -97.5], [40.0, -40.0]], 1.0, 120).unwrap();
        let c = ProportionalController::new(&env);
        let mut prev = 0.0;
        for budget in [0, 1, 2, 4, 8, 16] {
            let (_, rep) = zero_shot_imitate(&env, &c, &e, 10, budget, 0.5, ThresholdMode::Distance).unwrap();
            assert!(rep.achieved_fraction >= prev);
            prev = rep.achieved_fraction;
        }
        assert_eq!(prev, 1.0);
    }

    #[test]
    fn stride_equal_length_is_goal_reaching() {
        let (m, env) = maze();
        let e = default_maze_expert(&m).unwrap();
        let (_, rep) = zero_shot_imitate(
            &env,
            &ProportionalController::new(&env),
            &e,
            300,
            200,
            0.1,
            ThresholdMode::Distance,
        )
        .unwrap();
        assert_eq!(rep.targets.len(), 1);
        assert_eq!(rep.targets[0].index, 299);
        assert!(rep.targets[0].achieved);
    }

    #[test]
    fn chain_branch_expert_roundtrips() {
        let env = EnvSpec::by_name("chain").unwrap();
        let mut c = DiffusionConfig::for_env(&env, 32, 4, 99, 3);
        c.n = 32;
        let e = branch_expert(&env, &c, 0).unwrap();
        assert_eq!(e.len(), 100);
        let back = ExpertTrajectory::from_state_set(&e.to_state_set()).unwrap();
        assert_eq!(back, e);
        let (_, rep) = zero_shot_imitate(
            &env,
            &ProportionalController::new(&env),
            &e,
            10,
            30,
            1e-3,
            ThresholdMode::Distance,
        )
        .unwrap();
        assert_eq!(rep.achieved_fraction, 1.0);
    }

    #[test]
    fn env_mismatch_rejected() {
        let (m, _) = maze();
        let e = default_maze_expert(&m).unwrap();
        let chain = EnvSpec::by_name("chain").unwrap();
        assert!(matches!(
            zero_shot_imitate(
                &chain,
                &ProportionalController::new(&chain),
                &e,
                10,
                5,
                1.0,
                ThresholdMode::Distance
            ),
            Err(Error::EnvMismatch { .. })
        ));
    }
}
