//! Optimal action sets, for checking a policy against the exact optimum
//! without depending on how ties were broken.

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::policy::{discount_factors, for_each_reachable, Augmentation, Policy, PolicyKey};
use crate::utility::{eval_scalar_utility, UtilitySpec};

use super::evaluate::{return_gamma, Criterion};
use super::vi::{augmented_value_iteration, value_iteration, AugmentedValues};

/// Two action values within this of each other are both optimal.
pub const OPTIMAL_TOL: f64 = 1e-9;

enum Values {
    Plain { gamma: f64, v: Vec<Vec<f64>> },
    Augmented { spec: UtilitySpec, values: AugmentedValues, discounts: Vec<f64> },
}

/// Exact optimal action values for one utility and criterion.
pub struct OptimalActions<'a> {
    mdp: &'a Mdp,
    values: Values,
}

impl<'a> OptimalActions<'a> {
    /// Time-indexed values for linear utilities and the per-gamma
    /// criterion; reward-augmented values for ESR with a non-linear utility.
    pub fn new(mdp: &'a Mdp, spec: &UtilitySpec, criterion: Criterion) -> Result<Self> {
        criterion.check(spec)?;
        let values = match criterion {
            Criterion::Esr if !spec.is_linear() => Values::Augmented {
                spec: spec.clone(),
                values: augmented_value_iteration(mdp, spec, 0.0)?.1,
                discounts: discount_factors(mdp.gamma, mdp.horizon),
            },
            Criterion::Ser | Criterion::Esr | Criterion::PerGamma if spec.is_linear() || criterion == Criterion::PerGamma => {
                let gamma = return_gamma(mdp, spec, criterion);
                Values::Plain { gamma, v: value_iteration(mdp, Some(gamma))?.1 }
            }
            _ => {
                return Err(Error::WrongFamily {
                    family: spec.family().name(),
                    reason: "optimal action sets exist for linear utilities, ESR and per-gamma only",
                })
            }
        };
        Ok(Self { mdp, values })
    }

    pub fn augmentation(&self) -> Augmentation {
        match self.values {
            Values::Plain { .. } => Augmentation::Timestep,
            Values::Augmented { .. } => Augmentation::EXACT,
        }
    }

    /// Optimal value of the initial distribution.
    pub fn value(&self) -> f64 {
        match &self.values {
            Values::Plain { v, .. } => self.mdp.initial_states().map(|(s, p)| p * v[0][s]).sum(),
            Values::Augmented { values, .. } => values.value,
        }
    }

    /// Optimal value at `(t, s, mem)`, where `mem` is ignored for
    /// time-indexed values.
    pub fn state_value(&self, t: usize, s: usize, mem: i64) -> Option<f64> {
        match &self.values {
            Values::Plain { v, .. } => v.get(t)?.get(s).copied(),
            Values::Augmented { values, .. } => values.layers.get(t)?.get(&(s, mem)).copied(),
        }
    }

    pub fn q_values(&self, key: PolicyKey) -> Result<Vec<f64>> {
        let (t, s, mem) = (key.timestep as usize, key.state as usize, key.mem);
        let mdp = self.mdp;
        (0..mdp.num_actions)
            .map(|a| {
                let mut q = 0.0;
                for o in mdp.outcomes(s, a).iter().filter(|o| o.prob > 0.0) {
                    let r = o.reward[0];
                    q += o.prob
                        * match &self.values {
                            Values::Plain { gamma, v } => r + gamma * v[t + 1][o.next],
                            Values::Augmented { spec, values, discounts } => {
                                let mem2 = mem + values.augmentation.mem_increment(discounts[t] * r);
                                if t + 1 == mdp.horizon || mdp.is_terminal(o.next) {
                                    eval_scalar_utility(spec, values.augmentation.mem_value(mem2))?
                                } else {
                                    *values.layers[t + 1]
                                        .get(&(o.next, mem2))
                                        .ok_or(Error::PolicyUndefined { state: o.next, timestep: t + 1 })?
                                }
                            }
                        };
                }
                Ok(q)
            })
            .collect()
    }

    pub fn optimal_set(&self, key: PolicyKey) -> Result<Vec<usize>> {
        let q = self.q_values(key)?;
        let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok((0..q.len()).filter(|&a| q[a] >= best - OPTIMAL_TOL).collect())
    }

    /// Keys reached by `policy` at which it takes a non-optimal action.
    pub fn disagreements(&self, policy: &Policy) -> Result<Vec<PolicyKey>> {
        let aug = self.augmentation();
        let compatible = match aug {
            Augmentation::Timestep => matches!(policy.augmentation, Augmentation::Timestep | Augmentation::None),
            _ => policy.augmentation == aug,
        };
        if !compatible {
            return Err(Error::Config(format!(
                "cannot compare a {:?} policy with {:?} optimal values",
                policy.augmentation, aug
            )));
        }
        let mut bad = Vec::new();
        let mut failure = None;
        for_each_reachable(self.mdp, aug, |key| {
            let (t, s) = (key.timestep as usize, key.state as usize);
            let a = match policy.action(t, s, key.mem) {
                Ok(a) => a,
                Err(e) => {
                    failure.get_or_insert(e);
                    return 0;
                }
            };
            match self.optimal_set(key) {
                Ok(set) if set.contains(&a) => {}
                Ok(_) => bad.push(key),
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
            a
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(bad),
        }
    }

    /// True when `policy` takes an optimal action at every key it reaches.
    pub fn is_optimal_policy(&self, policy: &Policy) -> Result<bool> {
        Ok(self.disagreements(policy)?.is_empty())
    }
}
