//! Resettable environments.
//!
//! Dynamics are a pure function of `(state, action)`: an environment value
//! holds configuration only, so any stored state can be branched any number
//! of times from any thread.

mod chain;
mod maze;

pub use chain::ChainSpec;
pub use maze::{MazeSpec, Rect, Room, Wall};

use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State(pub Vec<f64>);

impl Deref for State {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for State {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for State {
    fn from(v: Vec<f64>) -> Self {
        State(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(pub Vec<f64>);

impl Deref for Action {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Action {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Ordered 2D positions of the body parts of a state. The maze has one body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BodyPose(pub Vec<[f64; 2]>);

impl BodyPose {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().flat_map(|p| p.iter().copied()).collect()
    }
}

/// Componentwise action bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionBox {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionBox {
    pub fn symmetric(dim: usize, bound: f64) -> Self {
        ActionBox {
            low: vec![-bound; dim],
            high: vec![bound; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn check(&self, action: &[f64]) -> Result<()> {
        if action.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: action.len(),
            });
        }
        for (i, &a) in action.iter().enumerate() {
            // written so that NaN fails too
            if !(a >= self.low[i] && a <= self.high[i]) {
                return Err(Error::ActionOutOfBounds {
                    index: i,
                    value: a,
                    lo: self.low[i],
                    hi: self.high[i],
                });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, action: &mut [f64]) {
        for (i, a) in action.iter_mut().enumerate() {
            *a = a.clamp(self.low[i], self.high[i]);
        }
    }

    pub fn sample(&self, rng: &mut Stream) -> Action {
        Action(
            self.low
                .iter()
                .zip(&self.high)
                .map(|(&lo, &hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect(),
        )
    }

    pub fn center(&self) -> Vec<f64> {
        self.low
            .iter()
            .zip(&self.high)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }
}

/// Two state components and their bounds, used for visitation grids and
/// count-based novelty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub dims: [usize; 2],
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Plane {
    pub fn project(&self, state: &[f64]) -> [f64; 2] {
        [state[self.dims[0]], state[self.dims[1]]]
    }
}

pub trait Environment: Send + Sync {
    fn id(&self) -> &'static str;

    fn state_dim(&self) -> usize;

    fn action_box(&self) -> &ActionBox;

    fn body_count(&self) -> usize;

    /// Draws from the initial state distribution.
    fn reset(&self, rng: &mut Stream) -> State;

    fn step(&self, state: &State, action: &Action) -> Result<State>;

    fn body_pose(&self, state: &State) -> BodyPose;

    /// Natural x-y plane of the environment.
    fn plane(&self) -> Plane;

    /// Per-component multipliers that bring states to roughly unit scale.
    fn observation_scale(&self) -> Vec<f64>;

    fn sample_uniform_action(&self, rng: &mut Stream) -> Action {
        self.action_box().sample(rng)
    }
}

/// Serializable choice of environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "lowercase")]
pub enum EnvSpec {
    Maze(MazeSpec),
    Chain(ChainSpec),
}

impl EnvSpec {
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "maze" => Ok(EnvSpec::Maze(MazeSpec::default())),
            "chain" => Ok(EnvSpec::Chain(ChainSpec::default())),
            other => Err(Error::invalid(format!("unknown environment '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvSpec::Maze(m) => m.validate(),
            EnvSpec::Chain(c) => c.validate(),
        }
    }

    fn inner(&self) -> &dyn Environment {
        match self {
            EnvSpec::Maze(m) => m,
            EnvSpec::Chain(c) => c,
        }
    }
}

impl Environment for EnvSpec {
    fn id(&self) -> &'static str {
        self.inner().id()
    }
    fn state_dim(&self) -> usize {
        self.inner().state_dim()
    }
    fn action_box(&self) -> &ActionBox {
        self.inner().action_box()
    }
    fn body_count(&self) -> usize {
        self.inner().body_count()
    }
    fn reset(&self, rng: &mut Stream) -> State {
        self.inner().reset(rng)
    }
    fn step(&self, state: &State, action: &Action) -> Result<State> {
        self.inner().step(state, action)
    }
    fn body_pose(&self, state: &State) -> BodyPose {
        self.inner().body_pose(state)
    }
    fn plane(&self) -> Plane {
        self.inner().plane()
    }
    fn observation_scale(&self) -> Vec<f64> {
        self.inner().observation_scale()
    }
}

pub(crate) fn check_state_dim(expected: usize, state: &[f64]) -> Result<()> {
    if state.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: state.len(),
        });
    }
    Ok(())
}
