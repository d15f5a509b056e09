//! Goal-conditioned curriculum training and its evaluation battery.
//!
//! Training draws goals from a goal set, rolls out the current controller
//! until success under a threshold ε or the horizon, and tightens ε by a
//! fixed factor whenever the running success rate is high. Learners are
//! pluggable; a cross-entropy-method learner over a tanh MLP is provided.

mod cem;
mod eval;
mod goals;
mod policy;
mod reward;
mod rollout;
mod train;

pub use cem::{cem_step, CemLearner, CemLearnerConfig, CemParams, CemState, CemStepReport, ScoreStart};
pub use eval::{
    cross_evaluate, eval_set_entropies, evaluate_curve, linear_grid, parse_grid, CrossEvaluation, EvalStop,
    EvaluationCurve,
};
pub use goals::{Goal, GoalSet, DEFAULT_EVAL_GOALS, DEFAULT_TRAIN_GOALS};
pub use policy::{Architecture, Controller, Policy, ProportionalController};
pub use reward::{goal_reward, success, ThresholdMode};
pub use rollout::{rollout, Rollout, RolloutDataset, StopAt};
pub use train::{
    auto_epsilon, c3po_train, percentile, AnnealEvent, C3poConfig, CurriculumState, Eps0, Learner, OracleLearner,
    TrainOutcome, TrainPoint,
};
