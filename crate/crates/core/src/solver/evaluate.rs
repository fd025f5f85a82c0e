use serde::{Deserialize, Serialize};

use crate::decimal;
use crate::distribution::ReturnDistribution;
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::policy::{discount_factors, Policy};
use crate::utility::{eval_cvar, eval_scalar_utility, AppliesTo, UtilitySpec};

pub const DEFAULT_PATH_CAP: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Utility of the expected return.
    Ser,
    /// Expected utility of the per-episode return.
    Esr,
    /// CVaR of the return distribution.
    Cvar,
    /// Expected return under the utility's own discount.
    PerGamma,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Ser => "ser",
            Criterion::Esr => "esr",
            Criterion::Cvar => "cvar",
            Criterion::PerGamma => "per-gamma",
        }
    }

    pub(crate) fn check(self, spec: &UtilitySpec) -> Result<()> {
        spec.validate()?;
        let ok = match self {
            Criterion::Ser | Criterion::Esr => spec.applies_to() == AppliesTo::ScalarReturn,
            Criterion::Cvar => spec.applies_to() == AppliesTo::Distribution,
            Criterion::PerGamma => matches!(spec, UtilitySpec::Discount { .. } | UtilitySpec::Identity),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::WrongFamily {
                family: spec.family().name(),
                reason: match self {
                    Criterion::Ser | Criterion::Esr => "SER/ESR need a utility of the total return",
                    Criterion::Cvar => "the CVaR criterion needs a CVaR utility",
                    Criterion::PerGamma => "the per-gamma criterion needs a discount utility",
                },
            })
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ser" => Criterion::Ser,
            "esr" => Criterion::Esr,
            "cvar" => Criterion::Cvar,
            "per-gamma" => Criterion::PerGamma,
            other => return Err(Error::InvalidUtility(format!("unknown criterion `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub criterion: Criterion,
    pub utility: UtilitySpec,
    #[serde(with = "decimal")]
    pub value: f64,
    #[serde(with = "decimal")]
    pub expected_return: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<ReturnDistribution>,
}

/// Discount applied when accumulating returns: the utility's own for
/// per-gamma evaluation, the MDP's otherwise.
pub fn return_gamma(mdp: &Mdp, spec: &UtilitySpec, criterion: Criterion) -> f64 {
    match (criterion, spec) {
        (Criterion::PerGamma, UtilitySpec::Discount { gamma }) => *gamma,
        _ => mdp.gamma,
    }
}

/// Criterion value of a policy whose return distribution is `dist`.
pub fn criterion_value(criterion: Criterion, spec: &UtilitySpec, dist: &ReturnDistribution) -> Result<f64> {
    match criterion {
        Criterion::Ser => eval_scalar_utility(spec, dist.mean()),
        Criterion::Esr => dist
            .atoms()
            .iter()
            .map(|a| eval_scalar_utility(spec, a.value).map(|u| a.prob * u))
            .sum(),
        Criterion::Cvar => eval_cvar(spec, dist),
        Criterion::PerGamma => Ok(dist.mean()),
    }
}

/// Exact distribution of the discounted return by enumerating every path.
pub fn enumerate_return_distribution(mdp: &Mdp, policy: &Policy) -> Result<ReturnDistribution> {
    enumerate_return_distribution_with(mdp, policy, mdp.gamma, DEFAULT_PATH_CAP)
}

pub fn enumerate_return_distribution_with(mdp: &Mdp, policy: &Policy, gamma: f64, path_cap: u64) -> Result<ReturnDistribution> {
    mdp.require_scalar()?;
    let mut walk = PathWalk {
        mdp,
        policy,
        ret_discounts: discount_factors(gamma, mdp.horizon),
        mem_discounts: discount_factors(mdp.gamma, mdp.horizon),
        cap: path_cap,
        paths: 0,
        leaves: Vec::new(),
    };
    for (s, p) in mdp.initial_states() {
        walk.descend(0, s, 0, 0.0, p)?;
    }
    ReturnDistribution::from_pairs(walk.leaves)
}

struct PathWalk<'a> {
    mdp: &'a Mdp,
    policy: &'a Policy,
    ret_discounts: Vec<f64>,
    mem_discounts: Vec<f64>,
    cap: u64,
    paths: u64,
    leaves: Vec<(f64, f64)>,
}

impl PathWalk<'_> {
    fn descend(&mut self, t: usize, s: usize, mem: i64, ret: f64, prob: f64) -> Result<()> {
        if t == self.mdp.horizon || self.mdp.is_terminal(s) {
            self.paths += 1;
            if self.paths > self.cap {
                return Err(Error::ExplosionCap { what: "paths", cap: self.cap });
            }
            self.leaves.push((ret, prob));
            return Ok(());
        }
        let a = self.policy.action(t, s, mem)?;
        if a >= self.mdp.num_actions {
            return Err(Error::PolicyUndefined { state: s, timestep: t });
        }
        for o in self.mdp.outcomes(s, a) {
            if o.prob > 0.0 {
                let r = o.reward[0];
                let mem2 = mem + self.policy.augmentation.mem_increment(self.mem_discounts[t] * r);
                self.descend(t + 1, o.next, mem2, ret + self.ret_discounts[t] * r, prob * o.prob)?;
            }
        }
        Ok(())
    }
}

/// Exact evaluation of `policy` under `criterion`.
pub fn evaluate(mdp: &Mdp, policy: &Policy, spec: &UtilitySpec, criterion: Criterion) -> Result<EvaluationRecord> {
    criterion.check(spec)?;
    let gamma = return_gamma(mdp, spec, criterion);
    let dist = enumerate_return_distribution_with(mdp, policy, gamma, DEFAULT_PATH_CAP)?;
    Ok(EvaluationRecord {
        criterion,
        utility: spec.clone(),
        value: criterion_value(criterion, spec, &dist)?,
        expected_return: dist.mean(),
        distribution: Some(dist),
    })
}

/// Scalarised expected return: `u(E[sum gamma^i r_i])`.
pub fn evaluate_ser(mdp: &Mdp, policy: &Policy, spec: &UtilitySpec) -> Result<EvaluationRecord> {
    evaluate(mdp, policy, spec, Criterion::Ser)
}

/// Expected scalarised return: `E[u(sum gamma^i r_i)]`.
pub fn evaluate_esr(mdp: &Mdp, policy: &Policy, spec: &UtilitySpec) -> Result<EvaluationRecord> {
    evaluate(mdp, policy, spec, Criterion::Esr)
}
