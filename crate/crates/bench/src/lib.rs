//! Benchmark fixtures.

use std::collections::BTreeMap;

use ubrl_core::envs::{environment_info, make_env};
use ubrl_core::{Criterion, Mdp, ParameterGrid};

/// A shipped environment at its defaults, with the grid and criterion it
/// was built to explore.
pub fn default_problem(name: &str) -> (Mdp, ParameterGrid, Criterion) {
    let info = environment_info(name).expect("shipped environment");
    let mdp = make_env(name, &BTreeMap::new()).expect("defaults are valid").mdp;
    let grid = info.default_grid.build().expect("default grid is valid");
    let criterion = info.default_criterion.parse().expect("known criterion");
    (mdp, grid, criterion)
}

/// Mining-world with a longer horizon.
pub fn mining(horizon: usize) -> Mdp {
    let params = BTreeMap::from([("horizon".to_string(), horizon.to_string())]);
    make_env("mining-world", &params).expect("valid horizon").mdp
}
