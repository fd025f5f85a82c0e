//! Coverage sets: one optimal policy per point of a utility-parameter grid.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decimal;
use crate::distribution::ReturnDistribution;
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::policy::Policy;
use crate::utility::{ParameterGrid, UtilitySpec};

use super::enumerate::enumerate_policies;
use super::evaluate::{evaluate, Criterion, EvaluationRecord};
use super::vi::{augmented_value_iteration, value_iteration};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Solver {
    /// Brute-force policy enumeration.
    Exact,
    /// Backward induction over reward-augmented states (ESR only).
    AugmentedVi {
        #[serde(with = "decimal")]
        bin_width: f64,
    },
    /// Plain backward induction with the utility's discount.
    PerGammaVi,
    /// Learned: utility-conditioned Q-learning with shared experience.
    ConditionedQ,
    /// Learned: Q-learning over several discounts at once.
    MultiGammaQ,
    /// Stationary policies ranked by CVaR of learned return distributions.
    DistTd,
}

impl Solver {
    pub fn name(&self) -> &'static str {
        match self {
            Solver::Exact => "exact",
            Solver::AugmentedVi { .. } => "augmented-vi",
            Solver::PerGammaVi => "per-gamma-vi",
            Solver::ConditionedQ => "conditioned-q",
            Solver::MultiGammaQ => "multi-gamma-q",
            Solver::DistTd => "dist-td",
        }
    }

    pub fn is_learner(&self) -> bool {
        matches!(self, Solver::ConditionedQ | Solver::MultiGammaQ | Solver::DistTd)
    }
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "exact" => Solver::Exact,
            "augmented-vi" => Solver::AugmentedVi { bin_width: 0.0 },
            "per-gamma-vi" => Solver::PerGammaVi,
            other => return Err(Error::Config(format!("unknown solver `{other}`"))),
        })
    }
}

/// Which MDP a coverage set was computed on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpRef {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
    /// SHA-256 of the MDP's JSON serialisation.
    pub digest: String,
}

impl MdpRef {
    pub fn new(name: impl Into<String>, params: BTreeMap<String, String>, mdp: &Mdp) -> Self {
        Self { name: name.into(), params, digest: mdp_digest(mdp) }
    }

    pub fn custom(mdp: &Mdp) -> Self {
        Self::new("custom", BTreeMap::new(), mdp)
    }
}

pub fn mdp_digest(mdp: &Mdp) -> String {
    hex::encode(Sha256::digest(mdp.to_json().as_bytes()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageEntry {
    #[serde(with = "decimal")]
    pub param: f64,
    pub policy: Policy,
    #[serde(with = "decimal")]
    pub value: f64,
    #[serde(with = "decimal")]
    pub expected_return: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<ReturnDistribution>,
    /// Index of the earlier adjacent entry with the same policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageSet {
    pub mdp_ref: MdpRef,
    pub criterion: Criterion,
    pub solver: Solver,
    pub param_name: String,
    pub grid: Vec<UtilitySpec>,
    pub entries: Vec<CoverageEntry>,
}

impl CoverageSet {
    pub fn from_records(
        mdp_ref: MdpRef,
        criterion: Criterion,
        solver: Solver,
        grid: &ParameterGrid,
        results: Vec<(Policy, EvaluationRecord)>,
    ) -> Self {
        let mut entries: Vec<CoverageEntry> = Vec::with_capacity(results.len());
        for (i, (policy, record)) in results.into_iter().enumerate() {
            let duplicate_of = entries.last().and_then(|prev| {
                (prev.policy.augmentation == policy.augmentation && prev.policy.actions == policy.actions)
                    .then(|| prev.duplicate_of.unwrap_or(i - 1))
            });
            entries.push(CoverageEntry {
                param: grid.points()[i].param(),
                policy,
                value: record.value,
                expected_return: record.expected_return,
                distribution: record.distribution,
                duplicate_of,
            });
        }
        Self {
            mdp_ref,
            criterion,
            solver,
            param_name: grid.family().param_name().to_string(),
            grid: grid.points().to_vec(),
            entries,
        }
    }

    pub fn with_mdp_ref(mut self, mdp_ref: MdpRef) -> Self {
        self.mdp_ref = mdp_ref;
        self
    }

    /// Indices of entries that start a new run of identical policies.
    pub fn distinct_indices(&self) -> Vec<usize> {
        (0..self.entries.len()).filter(|&i| self.entries[i].duplicate_of.is_none()).collect()
    }

    /// Grid indices at which the policy changes from its left neighbour.
    pub fn switch_indices(&self) -> Vec<usize> {
        self.distinct_indices().into_iter().filter(|&i| i > 0).collect()
    }

    pub fn record(&self, index: usize) -> Option<EvaluationRecord> {
        let e = self.entries.get(index)?;
        Some(EvaluationRecord {
            criterion: self.criterion,
            utility: self.grid[index].clone(),
            value: e.value,
            expected_return: e.expected_return,
            distribution: e.distribution.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("coverage set serialises");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Solves every grid point (in parallel; the result is in grid order and
/// identical to a sequential run) and flags adjacent duplicates.
pub fn solve_coverage_set(mdp: &Mdp, grid: &ParameterGrid, criterion: Criterion, solver: Solver) -> Result<CoverageSet> {
    mdp.require_scalar()?;
    let results: Vec<Result<(Policy, EvaluationRecord)>> = grid
        .points()
        .par_iter()
        .map(|spec| solve_point(mdp, spec, criterion, solver))
        .collect();
    let mut solved = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        solved.push(r.map_err(|e| e.at_grid_point(i, grid.points()[i].param()))?);
    }
    Ok(CoverageSet::from_records(MdpRef::custom(mdp), criterion, solver, grid, solved))
}

fn solve_point(mdp: &Mdp, spec: &UtilitySpec, criterion: Criterion, solver: Solver) -> Result<(Policy, EvaluationRecord)> {
    let policy = match solver {
        Solver::ConditionedQ | Solver::MultiGammaQ | Solver::DistTd => {
            return Err(Error::Config(format!("{} is a learner, not an exact solver", solver.name())))
        }
        Solver::Exact => enumerate_policies(mdp, spec, criterion)?.best,
        Solver::AugmentedVi { bin_width } => {
            if criterion != Criterion::Esr {
                return Err(Error::Config(format!(
                    "augmented-vi optimises the esr criterion, not {criterion}"
                )));
            }
            augmented_value_iteration(mdp, spec, bin_width)?.0
        }
        Solver::PerGammaVi => {
            criterion.check(spec)?;
            let gamma = match (spec, criterion) {
                (UtilitySpec::Discount { gamma }, Criterion::PerGamma) => Some(*gamma),
                (UtilitySpec::Identity, _) => None,
                _ => {
                    return Err(Error::Config(format!(
                        "per-gamma-vi needs the identity utility or discount utilities under per-gamma, got {} under {criterion}",
                        spec.family()
                    )))
                }
            };
            value_iteration(mdp, gamma)?.0.restricted(mdp)?
        }
    };
    let record = evaluate(mdp, &policy, spec, criterion)?;
    Ok((policy, record))
}
