use serde::{Deserialize, Serialize};

use super::{check_state_dim, Action, ActionBox, BodyPose, Environment, Plane, State};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Planar kinematic chain of `links` revolute joints.
///
/// A state is `[θ_1..θ_k, x_0, y_0, .., x_k, y_k]`: relative joint angles
/// followed by the anchor and every link end, so body positions are part
/// of the observation. An action in `[-1, 1]^k` changes each angle by at
/// most `action_scale` radians; angles are clamped to their limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "ChainSpecRepr", into = "ChainSpecRepr")]
pub struct ChainSpec {
    pub links: usize,
    pub link_lengths: Vec<f64>,
    pub joint_limits: Vec<[f64; 2]>,
    pub action_scale: f64,
    pub anchor: [f64; 2],
    actions: ActionBox,
}

#[derive(Serialize, Deserialize)]
struct ChainSpecRepr {
    links: usize,
    link_lengths: Vec<f64>,
    joint_limits: Vec<[f64; 2]>,
    action_scale: f64,
    #[serde(default)]
    anchor: [f64; 2],
}

impl From<ChainSpecRepr> for ChainSpec {
    fn from(r: ChainSpecRepr) -> Self {
        ChainSpec::new(r.link_lengths, r.joint_limits, r.action_scale, r.anchor)
    }
}

impl From<ChainSpec> for ChainSpecRepr {
    fn from(c: ChainSpec) -> Self {
        ChainSpecRepr {
            links: c.links,
            link_lengths: c.link_lengths,
            joint_limits: c.joint_limits,
            action_scale: c.action_scale,
            anchor: c.anchor,
        }
    }
}

impl Default for ChainSpec {
    fn default() -> Self {
        ChainSpec::uniform(4, 1.0, 2.0, 0.1)
    }
}

impl ChainSpec {
    pub fn new(link_lengths: Vec<f64>, joint_limits: Vec<[f64; 2]>, action_scale: f64, anchor: [f64; 2]) -> Self {
        let links = link_lengths.len();
        ChainSpec {
            links,
            link_lengths,
            joint_limits,
            action_scale,
            anchor,
            actions: ActionBox::symmetric(links, 1.0),
        }
    }

    /// `links` equal links with symmetric joint limits `±limit`.
    pub fn uniform(links: usize, length: f64, limit: f64, action_scale: f64) -> Self {
        ChainSpec::new(
            vec![length; links],
            vec![[-limit, limit]; links],
            action_scale,
            [0.0, 0.0],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.links < 2 {
            return Err(Error::invalid("chain needs at least two links"));
        }
        if self.link_lengths.len() != self.links || self.joint_limits.len() != self.links {
            return Err(Error::invalid("chain link/limit lists must have one entry per link"));
        }
        if self.link_lengths.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::invalid("chain link lengths must be positive"));
        }
        if self.joint_limits.iter().any(|&[lo, hi]| !(lo <= 0.0 && 0.0 <= hi)) {
            return Err(Error::invalid("joint limits must contain the zero pose"));
        }
        if !(self.action_scale > 0.0) {
            return Err(Error::invalid("action_scale must be positive"));
        }
        Ok(())
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    /// Anchor followed by every link end.
    pub fn forward_kinematics(&self, angles: &[f64]) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.links + 1);
        let mut p = self.anchor;
        let mut heading = 0.0;
        out.push(p);
        for (theta, len) in angles.iter().zip(&self.link_lengths) {
            heading += theta;
            p = [p[0] + len * heading.cos(), p[1] + len * heading.sin()];
            out.push(p);
        }
        out
    }

    pub fn state_from_angles(&self, angles: &[f64]) -> State {
        let mut v = Vec::with_capacity(self.state_dim());
        v.extend_from_slice(angles);
        for p in self.forward_kinematics(angles) {
            v.extend_from_slice(&p);
        }
        State(v)
    }
}

impl Environment for ChainSpec {
    fn id(&self) -> &'static str {
        "chain"
    }

    fn state_dim(&self) -> usize {
        self.links + 2 * (self.links + 1)
    }

    fn action_box(&self) -> &ActionBox {
        &self.actions
    }

    fn body_count(&self) -> usize {
        self.links + 1
    }

    fn reset(&self, _rng: &mut Stream) -> State {
        self.state_from_angles(&vec![0.0; self.links])
    }

    fn step(&self, state: &State, action: &Action) -> Result<State> {
        check_state_dim(self.state_dim(), state)?;
        self.actions.check(action)?;
        let angles: Vec<f64> = state[..self.links]
            .iter()
            .zip(action.iter())
            .zip(&self.joint_limits)
            .map(|((&th, &a), &[lo, hi])| (th + self.action_scale * a).clamp(lo, hi))
            .collect();
        Ok(self.state_from_angles(&angles))
    }

    fn body_pose(&self, state: &State) -> BodyPose {
        let k = self.links;
        BodyPose((0..=k).map(|i| [state[k + 2 * i], state[k + 2 * i + 1]]).collect())
    }

    fn plane(&self) -> Plane {
        let k = self.links;
        let r = self.reach();
        Plane {
            dims: [k + 2 * k, k + 2 * k + 1],
            min: [self.anchor[0] - r, self.anchor[1] - r],
            max: [self.anchor[0] + r, self.anchor[1] + r],
        }
    }

    fn observation_scale(&self) -> Vec<f64> {
        let mut v = vec![1.0 / std::f64::consts::PI; self.links];
        v.extend(std::iter::repeat_n(1.0 / self.reach(), 2 * (self.links + 1)));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: &[[f64; 2]], b: &[[f64; 2]]) -> bool {
        a.len() == b.len()
            && a.iter()
                .zip(b)
                .all(|(p, q)| (p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12)
    }

    #[test]
    fn reset_is_straight() {
        let c = ChainSpec::uniform(3, 1.0, 2.0, 0.1);
        let s = c.reset(&mut stream(0, "reset", &[]));
        assert_eq!(&s[..3], &[0.0; 3]);
        let pose = c.body_pose(&s);
        assert!(close(&pose.0, &[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]));
    }

    #[test]
    fn forward_kinematics_examples() {
        let c = ChainSpec::uniform(2, 1.0, 2.0, 0.1);
        let pose = c.body_pose(&c.state_from_angles(&[0.0, 0.0]));
        assert!(close(&pose.0, &[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]));
        let pose = c.body_pose(&c.state_from_angles(&[FRAC_PI_2, 0.0]));
        assert!(close(&pose.0, &[[0.0, 0.0], [0.0, 1.0], [0.0, 2.0]]));
        // relative angles accumulate: second link turns back to +x
        let pose = c.body_pose(&c.state_from_angles(&[FRAC_PI_2, -FRAC_PI_2]));
        assert!(close(&pose.0, &[[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]]));
    }

    #[test]
    fn zero_action_is_identity() {
        let c = ChainSpec::uniform(2, 1.0, 2.0, 0.1);
        let s = c.state_from_angles(&[0.3, -0.7]);
        let next = c.step(&s, &Action(vec![0.0, 0.0])).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn invalid_specs() {
        assert!(ChainSpec::uniform(1, 1.0, 1.0, 0.1).validate().is_err());
        assert!(ChainSpec::uniform(3, 0.0, 1.0, 0.1).validate().is_err());
        assert!(ChainSpec::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn chain_limits_hold(seq in proptest::collection::vec(proptest::collection::vec(-1.0f64..=1.0, 4), 1..200)) {
            let c = ChainSpec::default();
            let mut s = c.reset(&mut stream(0, "r", &[]));
            for a in seq {
                s = c.step(&s, &Action(a)).unwrap();
                for (th, [lo, hi]) in s[..4].iter().zip(&c.joint_limits) {
                    prop_assert!(*th >= *lo && *th <= *hi);
                }
                prop_assert!(s.iter().all(|v| v.is_finite()));
            }
        }
    }
}
