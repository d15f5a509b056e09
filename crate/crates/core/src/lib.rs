//! Uniform-coverage exploration and goal-reaching curriculum training.
//!
//! The crate is organised bottom-up:
//!
//! * [`env`]: resettable environments (continuous maze, kinematic chain).
//! * [`density`]: density estimators behind one interface, plus a
//!   normalized-score model selection harness.
//! * [`explore`]: branch / fit / inverse-density resample diffusion.
//! * [`baselines`]: random walk and count-bonus explorers.
//! * [`entropy`]: cross-entropy upper bounds, visitation grids and the
//!   entropy-weighted goal achievement score.
//! * [`c3po`]: curriculum goal-conditioned training and evaluation.
//! * [`imitation`]: zero-shot tracking of subsampled demonstrations.
//! * [`io`]: JSON-lines state sets and versioned file formats.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod c3po;
pub mod density;
pub mod entropy;
pub mod env;
pub mod error;
pub mod explore;
pub mod imitation;
pub mod io;
pub mod rng;
pub mod stateset;

pub use env::{Action, BodyPose, EnvSpec, Environment, State};
pub use error::{Error, Result};
pub use stateset::{StateSet, StateSetMeta};

/// Version stamped into every file format written by this crate.
pub const FORMAT_VERSION: u32 = 1;
