//! Exact solvers and evaluators: the ground truth every learner is checked
//! against.

mod coverage;
mod enumerate;
mod evaluate;
mod optimal;
mod vi;

pub use coverage::{solve_coverage_set, CoverageEntry, CoverageSet, MdpRef, Solver};
pub use enumerate::{
    count_policies, default_augmentation, enumerate_policies, enumerate_policies_with, for_each_policy, Enumeration,
    EnumerationOptions, RankedPolicy, DEFAULT_POLICY_CAP,
};
pub use evaluate::{
    criterion_value, enumerate_return_distribution, enumerate_return_distribution_with, evaluate, evaluate_esr,
    evaluate_ser, return_gamma, Criterion, EvaluationRecord, DEFAULT_PATH_CAP,
};
pub use optimal::{OptimalActions, OPTIMAL_TOL};
pub use vi::{augmented_value_iteration, augmented_value_iteration_with, value_iteration, AugmentedValues, DEFAULT_AUGMENTED_CAP};

/// Two values closer than this are treated as tied; ties go to the lowest
/// action index (or the lexicographically first policy).
pub const TIE_TOL: f64 = 1e-10;
