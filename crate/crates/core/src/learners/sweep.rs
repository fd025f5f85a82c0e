use crate::distribution::ReturnDistribution;
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::policy::{Augmentation, Policy};
use crate::solver::{evaluate, for_each_policy, solve_coverage_set, CoverageSet, Criterion, MdpRef, Solver};
use crate::solver::{DEFAULT_POLICY_CAP, TIE_TOL};
use crate::utility::{eval_cvar, Family, ParameterGrid};

use super::distributional::{evaluate_distribution_td, SupportConfig};

#[derive(Clone, Debug, PartialEq)]
pub enum SweepMode {
    /// Exact distributions of every stationary policy.
    ExactEnum,
    /// Distributions learned by categorical TD, one run per policy (seeded
    /// `seed + policy ordinal`).
    DistTd(SupportConfig),
}

/// Best stationary policy for each CVaR level of `alpha_grid`. Entries
/// always carry the exact CVaR of the selected policy.
pub fn cvar_policy_sweep(mdp: &Mdp, alpha_grid: &ParameterGrid, mode: &SweepMode) -> Result<CoverageSet> {
    if alpha_grid.family() != Family::Cvar {
        return Err(Error::WrongFamily {
            family: alpha_grid.family().name(),
            reason: "the CVaR sweep needs an alpha grid",
        });
    }
    let config = match mode {
        SweepMode::ExactEnum => return solve_coverage_set(mdp, alpha_grid, Criterion::Cvar, Solver::Exact),
        SweepMode::DistTd(config) => config,
    };
    mdp.require_scalar()?;
    let mut candidates: Vec<(Policy, ReturnDistribution)> = Vec::new();
    let mut ordinal = 0u64;
    for_each_policy(mdp, Augmentation::None, mdp.gamma, DEFAULT_POLICY_CAP, |actions, _| {
        let policy = Policy::new(Augmentation::None, actions.clone());
        let run = SupportConfig { seed: config.seed.wrapping_add(ordinal), ..config.clone() };
        let estimate = evaluate_distribution_td(mdp, &policy, &run)?.initial_distribution()?;
        candidates.push((policy, estimate));
        ordinal += 1;
        Ok(())
    })?;

    let mut results = Vec::with_capacity(alpha_grid.len());
    for spec in alpha_grid.points() {
        let mut best: Option<(usize, f64)> = None;
        for (i, (_, estimate)) in candidates.iter().enumerate() {
            let v = eval_cvar(spec, estimate)?;
            if best.is_none_or(|(_, b)| v > b + TIE_TOL) {
                best = Some((i, v));
            }
        }
        let (i, _) = best.expect("at least one stationary policy exists");
        let policy = candidates[i].0.clone().with_meta("dist-td", Some(spec.clone()));
        let record = evaluate(mdp, &policy, spec, Criterion::Cvar)?;
        results.push((policy, record));
    }
    Ok(CoverageSet::from_records(MdpRef::custom(mdp), Criterion::Cvar, Solver::DistTd, alpha_grid, results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{self, risky_path};
    use crate::utility::make_grid;

    fn alphas(values: &[f64]) -> Vec<ParameterGrid> {
        values.iter().map(|&a| make_grid(Family::Cvar, a, a, 1).unwrap()).collect()
    }

    #[test]
    fn risky_path_safe_then_risky() {
        let m = envs::risky_path_default();
        for mode in [SweepMode::ExactEnum, SweepMode::DistTd(SupportConfig::default())] {
            let picks: Vec<usize> = alphas(&[0.1, 0.5, 1.0])
                .iter()
                .map(|g| cvar_policy_sweep(&m, g, &mode).unwrap().entries[0].policy.action(0, 0, 0).unwrap())
                .collect();
            assert_eq!(picks, vec![risky_path::SAFE, risky_path::RISKY, risky_path::RISKY], "{mode:?}");
        }
    }

    #[test]
    fn dist_td_agrees_with_exact_on_a_grid() {
        let m = envs::risky_path_default();
        let grid = make_grid(Family::Cvar, 0.05, 0.95, 10).unwrap();
        let exact = cvar_policy_sweep(&m, &grid, &SweepMode::ExactEnum).unwrap();
        let td = cvar_policy_sweep(&m, &grid, &SweepMode::DistTd(SupportConfig::default())).unwrap();
        for (a, b) in exact.entries.iter().zip(&td.entries) {
            assert_eq!(a.policy.actions, b.policy.actions, "alpha = {}", a.param);
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn full_alpha_is_the_mean_optimum() {
        let m = envs::risky_path_default();
        let set = cvar_policy_sweep(&m, &make_grid(Family::Cvar, 1.0, 1.0, 1).unwrap(), &SweepMode::ExactEnum).unwrap();
        let best_mean = crate::solver::value_iteration(&m, None).unwrap().1[0][0];
        assert!((set.entries[0].value - best_mean).abs() < 1e-9);
    }

    #[test]
    fn single_action_mdp_has_one_policy() {
        let m = envs::bandit(&[vec![(0.25, 1.0), (0.75, 3.0)]]);
        let grid = make_grid(Family::Cvar, 0.1, 1.0, 4).unwrap();
        for mode in [SweepMode::ExactEnum, SweepMode::DistTd(SupportConfig::default())] {
            let set = cvar_policy_sweep(&m, &grid, &mode).unwrap();
            assert_eq!(set.distinct_indices(), vec![0]);
        }
    }
}
