//! Utility-based reinforcement learning on finite-horizon MDPs.
//!
//! Utilities are parameterised (`u_ω`); a coverage set holds an optimal
//! policy for every point of a parameter grid so that a decision-maker can
//! compare them and pick one afterwards. The exact solvers in [`solver`]
//! are the ground truth the sample-based [`learners`] are checked against.

pub mod decimal;
pub mod distribution;
pub mod envs;
pub mod error;
pub mod learners;
pub mod mdp;
pub mod policy;
pub mod solver;
pub mod store;
pub mod utility;

pub use distribution::{Atom, ReturnDistribution};
pub use error::{Error, Result};
pub use mdp::{
    discounted_return, embed_scalar_as_momdp, simulate_episode, validate_mdp, AugmentedState, Mdp, Outcome,
    ScalarMdp, Step, Trajectory, ValidationReport,
};
pub use policy::{Augmentation, Policy, PolicyKey};
pub use solver::{CoverageEntry, CoverageSet, Criterion, EvaluationRecord, MdpRef, Solver};
pub use utility::{make_grid, Family, GridSpec, ParameterGrid, UtilitySpec};
