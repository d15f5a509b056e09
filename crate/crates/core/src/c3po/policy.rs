use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::goals::Goal;
use crate::env::{Action, ActionBox, EnvSpec, Environment, State};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Anything that maps (state, goal) to an action inside the action box.
pub trait Controller: Send + Sync {
    fn act(&self, state: &State, goal: &Goal) -> Action;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Observation ⊕ goal.
    pub inputs: usize,
    pub hidden: Vec<usize>,
    pub outputs: usize,
    pub activation: String,
}

impl Architecture {
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.inputs];
        v.extend(&self.hidden);
        v.push(self.outputs);
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_sizes().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Goal-conditioned tanh MLP. Inputs are the scaled state, the scaled goal
/// state and the scaled offset `goal - state` amplified by
/// [`Policy::OFFSET_GAIN`]; outputs go through `tanh` and are mapped onto
/// the action box, so every action is valid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub format_version: u32,
    pub env: String,
    pub env_spec: EnvSpec,
    pub architecture: Architecture,
    /// Per layer: weights (row-major, one row per output), then biases.
    pub params: Vec<f64>,
    #[serde(skip)]
    cache: Option<Cache>,
}

#[derive(Clone, Debug, PartialEq)]
struct Cache {
    scale: Vec<f64>,
    actions: ActionBox,
    sizes: Vec<usize>,
}

impl Policy {
    pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
    /// Resolution boost for the offset block so that small residual
    /// offsets near the goal reach the first layer at order one.
    pub const OFFSET_GAIN: f64 = 10.0;

    pub fn architecture_for(env: &EnvSpec, hidden: &[usize]) -> Architecture {
        Architecture {
            inputs: 3 * env.state_dim(),
            hidden: hidden.to_vec(),
            outputs: env.action_box().dim(),
            activation: "tanh".into(),
        }
    }

    /// LeCun-normal hidden weights, zero biases and an output layer scaled
    /// by `output_gain`.
    pub fn init(env: &EnvSpec, hidden: &[usize], output_gain: f64, rng: &mut Stream) -> Self {
        let arch = Self::architecture_for(env, hidden);
        let sizes = arch.layer_sizes();
        let mut params = Vec::with_capacity(arch.parameter_count());
        for (l, w) in sizes.windows(2).enumerate() {
            let gain = if l + 2 == sizes.len() { output_gain } else { 1.0 };
            let sd = gain / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                let z: f64 = rng.sample(StandardNormal);
                params.push(sd * z);
            }
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Self::from_params(env, arch, params).expect("consistent by construction")
    }

    pub fn from_params(env: &EnvSpec, architecture: Architecture, params: Vec<f64>) -> Result<Self> {
        let mut p = Policy {
            format_version: crate::FORMAT_VERSION,
            env: env.id().to_string(),
            env_spec: env.clone(),
            architecture,
            params,
            cache: None,
        };
        p.prepare()?;
        Ok(p)
    }

    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        Self::from_params(&self.env_spec, self.architecture.clone(), params)
    }

    /// Validates the parameter vector and builds the lookup cache; called
    /// after deserialization.
    pub fn prepare(&mut self) -> Result<()> {
        let env = &self.env_spec;
        if env.id() != self.env {
            return Err(Error::EnvMismatch {
                expected: self.env.clone(),
                got: env.id().to_string(),
            });
        }
        let arch = &self.architecture;
        if arch.activation != "tanh" {
            return Err(Error::invalid(format!("unsupported activation '{}'", arch.activation)));
        }
        if arch.inputs != 3 * env.state_dim() || arch.outputs != env.action_box().dim() {
            return Err(Error::invalid("policy architecture does not fit the environment"));
        }
        if arch.hidden.contains(&0) {
            return Err(Error::invalid("hidden layers must be nonempty"));
        }
        if self.params.len() != arch.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: arch.parameter_count(),
                got: self.params.len(),
            });
        }
        if self.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("policy parameters must be finite"));
        }
        self.cache = Some(Cache {
            scale: env.observation_scale(),
            actions: env.action_box().clone(),
            sizes: arch.layer_sizes(),
        });
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    fn cache(&self) -> &Cache {
        self.cache.as_ref().expect("policy used before prepare()")
    }

    /// Raw network output before the action-box mapping.
    pub fn forward(&self, state: &[f64], goal: &[f64]) -> Vec<f64> {
        let c = self.cache();
        let mut x: Vec<f64> = Vec::with_capacity(3 * state.len());
        x.extend(state.iter().zip(&c.scale).map(|(v, s)| v * s));
        x.extend(goal.iter().zip(&c.scale).map(|(v, s)| v * s));
        x.extend(
            goal.iter()
                .zip(state)
                .zip(&c.scale)
                .map(|((g, v), s)| Self::OFFSET_GAIN * (g - v) * s),
        );
        let mut off = 0;
        let last = c.sizes.len() - 2;
        for (l, w) in c.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let y: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    let z = bias[o] + row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
                    if l == last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            x = y;
        }
        x
    }
}

impl Controller for Policy {
    fn act(&self, state: &State, goal: &Goal) -> Action {
        let z = self.forward(state, &goal.state);
        let b = &self.cache().actions;
        let mut a: Vec<f64> = z
            .iter()
            .zip(b.low.iter().zip(&b.high))
            .map(|(z, (lo, hi))| {
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo);
                mid + half * z.tanh()
            })
            .collect();
        b.clamp(&mut a);
        Action(a)
    }
}

/// Straight-line proportional controller that knows the dynamics: in the
/// maze it heads for the goal position, on the chain for the goal joint
/// angles. Used as an oracle.
#[derive(Clone, Debug)]
pub struct ProportionalController {
    env: EnvSpec,
}

impl ProportionalController {
    pub fn new(env: &EnvSpec) -> Self {
        ProportionalController { env: env.clone() }
    }
}

impl Controller for ProportionalController {
    fn act(&self, state: &State, goal: &Goal) -> Action {
        let mut d: Vec<f64> = match &self.env {
            EnvSpec::Maze(_) => vec![goal.state[0] - state[0], goal.state[1] - state[1]],
            EnvSpec::Chain(c) => (0..c.links)
                .map(|j| (goal.state[j] - state[j]) / c.action_scale)
                .collect(),
        };
        let boxed = self.env.action_box();
        let reach = d.iter().zip(&boxed.high).map(|(v, h)| v.abs() / h).fold(1.0, f64::max);
        for v in &mut d {
            *v /= reach;
        }
        boxed.clamp(&mut d);
        Action(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn default_architecture_size() {
        let env = EnvSpec::by_name("maze").unwrap();
        let a = Policy::architecture_for(&env, &Policy::DEFAULT_HIDDEN);
        assert_eq!(a.layer_sizes(), vec![6, 64, 64, 2]);
        assert_eq!(a.parameter_count(), 6 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
    }

    #[test]
    fn actions_stay_in_box() {
        let env = EnvSpec::by_name("chain").unwrap();
        let mut r = rng::stream(1, "p", &[]);
        let p = Policy::init(&env, &[8], 50.0, &mut r);
        let s = env.reset(&mut r);
        let g = Goal::new(&env, s.clone());
        for _ in 0..50 {
            let a = p.act(&s, &g);
            env.action_box().check(&a).unwrap();
        }
    }

    #[test]
    fn json_roundtrip_needs_prepare() {
        let env = EnvSpec::by_name("maze").unwrap();
        let mut r = rng::stream(2, "p", &[]);
        let p = Policy::init(&env, &[5, 3], 1.0, &mut r);
        let text = serde_json::to_string(&p).unwrap();
        let mut back: Policy = serde_json::from_str(&text).unwrap();
        back.prepare().unwrap();
        let s = State(vec![10.0, -20.0]);
        let g = Goal::new(&env, State(vec![50.0, -60.0]));
        assert_eq!(back.act(&s, &g), p.act(&s, &g));
        back.params.pop();
        assert!(back.prepare().is_err());
    }

    #[test]
    fn oracle_heads_for_goal() {
        let env = EnvSpec::by_name("maze").unwrap();
        let c = ProportionalController::new(&env);
        let s = State(vec![0.0, 0.0]);
        let a = c.act(&s, &Goal::new(&env, State(vec![10.0, 5.0])));
        assert_eq!(a.0, vec![1.0, 0.5]);
        let a = c.act(&s, &Goal::new(&env, State(vec![0.25, -0.5])));
        assert_eq!(a.0, vec![0.25, -0.5]);
    }
}
