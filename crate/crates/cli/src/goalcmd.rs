//! `train`, `eval`, `cross-eval` and `imitate`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use chronogem_core::c3po::{
    c3po_train, cross_evaluate, eval_set_entropies, evaluate_curve, parse_grid, C3poConfig, CemLearner,
    CemLearnerConfig, Controller, Eps0, EvalStop, Goal, GoalSet, OracleLearner, ThresholdMode, TrainOutcome,
    DEFAULT_EVAL_GOALS, DEFAULT_TRAIN_GOALS,
};
use chronogem_core::density::{DensitySpec, Family};
use chronogem_core::env::MazeSpec;
use chronogem_core::imitation::{default_maze_expert, zero_shot_imitate, ExpertTrajectory};
use chronogem_core::{rng, EnvSpec, Environment, StateSet, StateSetMeta};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::{require, require_path, resolve};
use crate::failure::Failure;
use crate::inputs::{
    check_same_env, env_of, load_controller, load_states, parse_density, parse_mode, parse_named, resolve_env,
    states_bytes, OracleFile,
};
use crate::manifest::Run;

fn parse_eps0(text: &str) -> Result<Eps0, String> {
    if text == "auto" {
        return Ok(Eps0::Auto);
    }
    match text.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(Eps0::Value(v)),
        _ => Err("expected 'auto' or a positive number".into()),
    }
}

fn parse_stop(text: &str) -> Result<EvalStop, String> {
    match text {
        "horizon" => Ok(EvalStop::Horizon),
        "at-largest" | "at_largest" => Ok(EvalStop::AtLargest),
        _ => Err("expected 'horizon' or 'at-largest'".into()),
    }
}

/// Threshold grid used when none is given: squared distances 1..2500 on
/// the maze, 0.0025..1 on the chain; distances 1..50 and 0.05..1 otherwise.
pub fn default_grid(env: &EnvSpec, mode: ThresholdMode) -> &'static str {
    match (env, mode) {
        (EnvSpec::Maze(_), ThresholdMode::Squared) => "1:2500:50",
        (EnvSpec::Maze(_), ThresholdMode::Distance) => "1:50:50",
        (EnvSpec::Chain(_), ThresholdMode::Squared) => "0.0025:1:50",
        (EnvSpec::Chain(_), ThresholdMode::Distance) => "0.05:1:50",
    }
}

fn grid_for(text: Option<&str>, env: &EnvSpec, mode: ThresholdMode) -> anyhow::Result<Vec<f64>> {
    parse_grid(text.unwrap_or(default_grid(env, mode))).map_err(|e| Failure::Usage(e.to_string()).into())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    #[default]
    Cem,
    Oracle,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// State set the goals are drawn from.
    #[arg(long)]
    pub goals: Option<PathBuf>,
    /// Expected environment; must match the goal file.
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long, value_enum)]
    pub learner: Option<LearnerKind>,
    /// Initial threshold, `auto` or a number.
    #[arg(long, value_parser = parse_eps0)]
    pub eps0: Option<Eps0>,
    /// Maximum training episodes.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Cap on environment interactions, rollouts and learner updates together.
    #[arg(long)]
    pub max_env_steps: Option<u64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Threshold units: `squared` or `distance`.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<ThresholdMode>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_eval: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Policy output (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub goals: Option<PathBuf>,
    pub env: Option<String>,
    pub learner: LearnerKind,
    pub eps0: Eps0,
    pub budget: usize,
    pub max_env_steps: Option<u64>,
    pub horizon: usize,
    pub mode: ThresholdMode,
    pub ema_decay: f64,
    pub anneal_above: f64,
    pub anneal_factor: f64,
    pub dataset_capacity: usize,
    pub curve_every: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub cem: CemLearnerConfig,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let c = C3poConfig::default();
        TrainSettings {
            goals: None,
            env: None,
            learner: LearnerKind::Cem,
            eps0: c.eps0,
            budget: c.episodes,
            max_env_steps: c.max_env_steps,
            horizon: c.horizon,
            mode: c.mode,
            ema_decay: c.ema_decay,
            anneal_above: c.anneal_above,
            anneal_factor: c.anneal_factor,
            dataset_capacity: c.dataset_capacity,
            curve_every: c.curve_every,
            n_train: DEFAULT_TRAIN_GOALS,
            n_eval: DEFAULT_EVAL_GOALS,
            cem: CemLearnerConfig::default(),
            seed: 0,
            out: None,
        }
    }
}

impl TrainSettings {
    fn c3po(&self) -> C3poConfig {
        C3poConfig {
            horizon: self.horizon,
            episodes: self.budget,
            max_env_steps: self.max_env_steps,
            eps0: self.eps0,
            mode: self.mode,
            ema_decay: self.ema_decay,
            anneal_above: self.anneal_above,
            anneal_factor: self.anneal_factor,
            dataset_capacity: self.dataset_capacity,
            curve_every: self.curve_every,
        }
    }
}

#[derive(Debug, Serialize)]
struct TrainReport<'a> {
    format_version: u32,
    goal_source: &'a str,
    train_goals: usize,
    eval_goals: usize,
    outcome: &'a TrainOutcome,
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

fn goals_as_states(env: &EnvSpec, source: &StateSetMeta, goals: &[Goal], split: &str) -> StateSet {
    let mut meta = StateSetMeta::new(env, &source.method);
    meta.n = goals.len();
    meta.seed = source.seed;
    meta.extra.insert("goal_split".into(), split.into());
    StateSet::new(meta, goals.iter().map(|g| g.state.clone()).collect())
}

/// Writes the policy to `out`, then `<stem>.train.json` and
/// `<stem>.eval-goals.jsonl` beside it.
pub fn train(args: &TrainArgs, run: &mut Run) -> anyhow::Result<()> {
    let s: TrainSettings = resolve(args.config.as_deref(), args)?;
    let goals_path = require_path(&s.goals, "goals")?;
    let out = require_path(&s.out, "out")?;
    run.config(&s)?;
    run.seed("seed", s.seed);
    let set = load_states(&goals_path)?;
    let env = env_of(&set)?;
    if let Some(name) = &s.env {
        check_same_env(&resolve_env(Some(name), None)?, &env)?;
    }
    let goals = GoalSet::split(
        &env,
        &set,
        s.n_train,
        s.n_eval,
        &mut rng::stream(s.seed, "goal-split", &[]),
    )?;
    let cfg = s.c3po();
    let (outcome, policy_json) = match s.learner {
        LearnerKind::Cem => {
            let mut learner = CemLearner::new(&env, s.cem.clone(), &mut rng::stream(s.seed, "policy-init", &[]))?;
            let outcome = c3po_train(&env, &goals, &mut learner, &cfg, s.seed)?;
            (outcome, serde_json::to_value(learner.policy())?)
        }
        LearnerKind::Oracle => {
            let mut learner = OracleLearner::new(&env);
            let outcome = c3po_train(&env, &goals, &mut learner, &cfg, s.seed)?;
            (outcome, serde_json::to_value(OracleFile::new(&env))?)
        }
    };
    run.steps("env_steps", outcome.env_steps);
    run.steps("rollout_steps", outcome.rollout_steps);
    run.steps("learner_steps", outcome.learner_steps);
    run.steps("episodes", outcome.episodes as u64);
    run.write_json(&out, &policy_json)?;
    let report = TrainReport {
        format_version: chronogem_core::FORMAT_VERSION,
        goal_source: &goals.source,
        train_goals: goals.train.len(),
        eval_goals: goals.eval.len(),
        outcome: &outcome,
    };
    run.write_json(&sibling(&out, ".train.json"), &report)?;
    let eval_set = goals_as_states(&env, &set.meta, &goals.eval, "eval");
    run.write(&sibling(&out, ".eval-goals.jsonl"), &states_bytes(&eval_set)?)
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Policy JSON, or `oracle`.
    #[arg(long)]
    pub policy: Option<String>,
    /// Evaluation goal states (JSONL); every state is a goal.
    #[arg(long)]
    pub goals: Option<PathBuf>,
    /// Thresholds as `lo:hi:count`.
    #[arg(long)]
    pub eps_grid: Option<String>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<ThresholdMode>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// `horizon` or `at-largest`.
    #[arg(long, value_parser = parse_stop)]
    pub stop: Option<EvalStop>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub policy: Option<String>,
    pub goals: Option<PathBuf>,
    pub eps_grid: Option<String>,
    pub mode: ThresholdMode,
    pub horizon: usize,
    pub stop: EvalStop,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            policy: None,
            goals: None,
            eps_grid: None,
            mode: ThresholdMode::Squared,
            horizon: 128,
            stop: EvalStop::Horizon,
            seed: 0,
            out: None,
        }
    }
}

pub fn eval(args: &EvalArgs, run: &mut Run) -> anyhow::Result<()> {
    let s: EvalSettings = resolve(args.config.as_deref(), args)?;
    let policy = require(s.policy.clone(), "policy")?;
    let goals_path = require_path(&s.goals, "goals")?;
    let out = require_path(&s.out, "out")?;
    run.config(&s)?;
    run.seed("seed", s.seed);
    let set = load_states(&goals_path)?;
    let env = env_of(&set)?;
    let ctrl = load_controller(&policy, &env)?;
    check_same_env(&ctrl.env, &env)?;
    let goals = GoalSet::eval_only(&env, &set)?;
    let grid = grid_for(s.eps_grid.as_deref(), &env, s.mode)?;
    let curve = evaluate_curve(
        &env,
        ctrl.controller.as_ref(),
        &goals,
        &grid,
        s.mode,
        s.horizon,
        s.stop,
        s.seed,
    )?;
    run.steps("goals", goals.len() as u64);
    run.write_json(&out, &curve)
}

#[derive(Debug, Args, Serialize)]
pub struct CrossEvalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// `name=policy.json` (or `name=oracle`); repeatable.
    #[arg(long = "policy", value_parser = parse_named)]
    #[serde(skip_serializing_if = "Vec::is_empty", rename = "policies")]
    pub policies: Vec<(String, String)>,
    /// `name=goals.jsonl`; repeatable.
    #[arg(long = "goals", value_parser = parse_named)]
    #[serde(skip_serializing_if = "Vec::is_empty", rename = "eval_sets")]
    pub eval_sets: Vec<(String, String)>,
    /// Estimator for the evaluation-set entropies.
    #[arg(long, value_parser = parse_density)]
    pub density: Option<DensitySpec>,
    #[arg(long)]
    pub eps_grid: Option<String>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<ThresholdMode>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossEvalSettings {
    pub policies: Vec<(String, String)>,
    pub eval_sets: Vec<(String, String)>,
    pub density: DensitySpec,
    pub eps_grid: Option<String>,
    pub mode: ThresholdMode,
    pub horizon: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for CrossEvalSettings {
    fn default() -> Self {
        CrossEvalSettings {
            policies: Vec::new(),
            eval_sets: Vec::new(),
            density: DensitySpec::default_for(Family::Kde),
            eps_grid: None,
            mode: ThresholdMode::Squared,
            horizon: 128,
            seed: 0,
            out: None,
        }
    }
}

pub fn cross_eval(args: &CrossEvalArgs, run: &mut Run) -> anyhow::Result<()> {
    let s: CrossEvalSettings = resolve(args.config.as_deref(), args)?;
    let out = require_path(&s.out, "out")?;
    if s.policies.is_empty() || s.eval_sets.is_empty() {
        return Err(Failure::Usage("need at least one --policy and one --goals".into()).into());
    }
    run.config(&s)?;
    run.seed("seed", s.seed);
    let mut env: Option<EnvSpec> = None;
    let mut eval_sets = Vec::with_capacity(s.eval_sets.len());
    for (name, path) in &s.eval_sets {
        let set = load_states(Path::new(path))?;
        let e = env_of(&set)?;
        match &env {
            Some(first) => check_same_env(first, &e)?,
            None => env = Some(e.clone()),
        }
        eval_sets.push((name.clone(), GoalSet::eval_only(&e, &set)?));
    }
    let env = env.expect("at least one evaluation set");
    let mut loaded = Vec::with_capacity(s.policies.len());
    for (name, path) in &s.policies {
        let c = load_controller(path, &env).with_context(|| format!("policy '{name}'"))?;
        check_same_env(&c.env, &env)?;
        loaded.push((name.clone(), c));
    }
    let policies: Vec<(String, &dyn Controller)> =
        loaded.iter().map(|(n, c)| (n.clone(), c.controller.as_ref())).collect();
    let entropies: BTreeMap<String, f64> = eval_set_entropies(&eval_sets, &s.density, s.seed)?;
    let grid = grid_for(s.eps_grid.as_deref(), &env, s.mode)?;
    let report = cross_evaluate(
        &env, &policies, &eval_sets, &entropies, &grid, s.mode, s.horizon, s.seed,
    )?;
    run.write_json(&out, &report)
}

#[derive(Debug, Args, Serialize)]
pub struct ImitateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Policy JSON, or `oracle`.
    #[arg(long)]
    pub policy: Option<String>,
    /// Expert trajectory (JSONL) or `scripted` for the built-in maze path.
    #[arg(long)]
    pub expert: Option<String>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Step budget per target.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<ThresholdMode>,
    /// Optional JSONL of the states visited while tracking.
    #[arg(long)]
    pub rollout_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImitateSettings {
    pub policy: Option<String>,
    pub expert: Option<String>,
    pub stride: usize,
    pub budget: usize,
    pub eps: f64,
    pub mode: ThresholdMode,
    pub rollout_out: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for ImitateSettings {
    fn default() -> Self {
        ImitateSettings {
            policy: None,
            expert: None,
            stride: 10,
            budget: 50,
            eps: 1.0,
            mode: ThresholdMode::Squared,
            rollout_out: None,
            out: None,
        }
    }
}

fn load_expert(spec: &str, hint: Option<&EnvSpec>) -> anyhow::Result<ExpertTrajectory> {
    if spec == "scripted" {
        let maze = match hint {
            Some(EnvSpec::Maze(m)) => m.clone(),
            Some(other) => {
                return Err(chronogem_core::Error::EnvMismatch {
                    expected: "maze".into(),
                    got: other.id().into(),
                }
                .into())
            }
            None => MazeSpec::default(),
        };
        return Ok(default_maze_expert(&maze)?);
    }
    let set = load_states(Path::new(spec))?;
    Ok(ExpertTrajectory::from_state_set(&set)?)
}

pub fn imitate(args: &ImitateArgs, run: &mut Run) -> anyhow::Result<()> {
    let s: ImitateSettings = resolve(args.config.as_deref(), args)?;
    let policy = require(s.policy.clone(), "policy")?;
    let expert_spec = require(s.expert.clone(), "expert")?;
    let out = require_path(&s.out, "out")?;
    run.config(&s)?;
    // a policy file names its environment; the oracle takes the expert's
    let (expert, ctrl) = if policy == "oracle" {
        let expert = load_expert(&expert_spec, None)?;
        let ctrl = load_controller(&policy, &expert.env)?;
        (expert, ctrl)
    } else {
        let ctrl = load_controller(&policy, &EnvSpec::by_name("maze")?)?;
        (load_expert(&expert_spec, Some(&ctrl.env))?, ctrl)
    };
    check_same_env(&ctrl.env, &expert.env)?;
    let (rollout, report) = zero_shot_imitate(
        &expert.env,
        ctrl.controller.as_ref(),
        &expert,
        s.stride,
        s.budget,
        s.eps,
        s.mode,
    )?;
    run.steps("env_steps", report.total_steps as u64);
    run.write_json(&out, &report)?;
    if let Some(p) = &s.rollout_out {
        let mut meta = StateSetMeta::new(&expert.env, "imitation-rollout");
        meta.n = 1;
        meta.horizon = rollout.steps;
        meta.env_steps = rollout.steps as u64;
        run.write(p, &states_bytes(&StateSet::new(meta, rollout.states))?)?;
    }
    Ok(())
}
