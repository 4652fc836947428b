//! Motion primitives for dual-arm manipulation.
//!
//! Skills are learned from demonstrations and merged at the velocity level:
//!
//! * [`dmp`] encodes absolute skills as dynamic movement primitives on the
//!   object frame and fits them by least squares.
//! * [`avoidance`] steers rollouts around point obstacles and learns the
//!   steering style from demonstration pairs.
//! * [`grasp`] maps object twists to contact-point twists.
//! * [`maintenance`] keeps both contacts on the object (relative skills).
//! * [`composition`] merges absolute and relative skill velocities into
//!   left/right end-effector commands.
//! * [`ingest`] generates synthetic demonstrations and cleans raw ones.
//! * [`sim`] runs whole scenes and reports task metrics.
//! * [`scenarios`] builds the reference scenes used by tests and the CLI.

pub mod avoidance;
pub mod composition;
pub mod dmp;
pub mod error;
pub mod grasp;
pub mod ingest;
pub mod maintenance;
pub mod scenarios;
pub mod sim;
pub mod trajectory;

pub use avoidance::{learn_from_pair, learn_params, AvoidanceParams, LearnOptions, Obstacle, ObstacleCoupling, TurningSample};
pub use composition::{merge, AbsoluteSkill, CommandPair, SkillLibrary};
pub use dmp::{fit, Coupling, DmpModel, FitOptions};
pub use error::{Error, Result};
pub use grasp::{GraspConfig, Side, Twist};
pub use maintenance::{DistanceCouplingSkill, ForceCouplingSkill, RelativeSkill};
pub use ingest::{generate_synthetic_demo, pca_project, preprocess, RawDemo};
pub use sim::{batch_run, run_pick_and_raise, run_scene, Metrics, RolloutLog, Scene};
pub use trajectory::{StateTriplet, Trajectory};
