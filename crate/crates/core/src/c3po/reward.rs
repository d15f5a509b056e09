use serde::{Deserialize, Serialize};

use crate::env::BodyPose;
use crate::error::{Error, Result};

/// Negative squared distance of the farthest body part:
/// `-max_i ‖b_i − g_i‖²`.
pub fn goal_reward(pose: &BodyPose, goal: &BodyPose) -> Result<f64> {
    if pose.len() != goal.len() {
        return Err(Error::DimensionMismatch {
            expected: goal.len(),
            got: pose.len(),
        });
    }
    let worst = pose
        .0
        .iter()
        .zip(&goal.0)
        .map(|(b, g)| {
            let dx = b[0] - g[0];
            let dy = b[1] - g[1];
            dx * dx + dy * dy
        })
        .fold(0.0, f64::max);
    Ok(-worst)
}

/// How a threshold is compared against a reward.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// `|r| < ε`: ε is a squared distance.
    #[default]
    Squared,
    /// `sqrt|r| < ε`: ε is a distance.
    Distance,
}

impl ThresholdMode {
    /// The same threshold expressed on `|r|`.
    pub fn squared(self, eps: f64) -> f64 {
        match self {
            ThresholdMode::Squared => eps,
            ThresholdMode::Distance => eps * eps,
        }
    }

    pub fn succeeds(self, reward: f64, eps: f64) -> bool {
        match self {
            ThresholdMode::Squared => reward.abs() < eps,
            ThresholdMode::Distance => reward.abs().sqrt() < eps,
        }
    }
}

/// `|goal_reward(pose, goal)| < ε`.
pub fn success(pose: &BodyPose, goal: &BodyPose, eps: f64) -> Result<bool> {
    Ok(ThresholdMode::Squared.succeeds(goal_reward(pose, goal)?, eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pose(v: &[[f64; 2]]) -> BodyPose {
        BodyPose(v.to_vec())
    }

    #[test]
    fn reward_examples() {
        let p = pose(&[[0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(goal_reward(&p, &p).unwrap(), 0.0);
        let g = pose(&[[0.0, 0.0], [1.0, 1.0]]);
        assert_eq!(goal_reward(&p, &g).unwrap(), -1.0);
        assert_eq!(goal_reward(&pose(&[[2.0, 0.0]]), &pose(&[[0.0, 0.0]])).unwrap(), -4.0);
        assert!(goal_reward(&p, &pose(&[[0.0, 0.0]])).is_err());
    }

    #[test]
    fn success_is_strict() {
        let a = pose(&[[0.0, 0.0]]);
        assert!(success(&a, &a, 1e-9).unwrap());
        assert!(!success(&pose(&[[2.0, 0.0]]), &a, 4.0).unwrap());
        let near = pose(&[[0.06f64.sqrt(), 0.0]]);
        assert!(success(&near, &a, 0.0625).unwrap());
        assert!(ThresholdMode::Distance.succeeds(-0.06, 0.25));
        assert!(!ThresholdMode::Distance.succeeds(-0.0625, 0.25));
    }

    proptest! {
        #[test]
        fn success_matches_reward(x in -10.0f64..10.0, y in -10.0f64..10.0, eps in 1e-6f64..200.0) {
            let p = pose(&[[x, y]]);
            let g = pose(&[[0.0, 0.0]]);
            let r = goal_reward(&p, &g).unwrap();
            prop_assert_eq!(success(&p, &g, eps).unwrap(), r.abs() < eps);
        }
    }
}
