//! Finite-horizon backward induction, plain and over reward-augmented
//! states.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::policy::{discount_factors, Augmentation, Policy};
use crate::utility::{eval_scalar_utility, AppliesTo, UtilitySpec};

use super::TIE_TOL;

pub const DEFAULT_AUGMENTED_CAP: usize = 1_000_000;

/// Lowest index among the actions whose value is within [`TIE_TOL`] of the
/// maximum.
pub(crate) fn argmax_lowest(values: &[f64]) -> (usize, f64) {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let idx = values.iter().position(|&v| v >= best - TIE_TOL).unwrap_or(0);
    (idx, best)
}

/// Backward induction over `N` steps with discount `gamma_override` (or the
/// MDP's own). Returns the greedy time-indexed policy, total over every
/// non-terminal `(t, s)`, and `V[t][s]` for `t` in `0..=N`.
pub fn value_iteration(mdp: &Mdp, gamma_override: Option<f64>) -> Result<(Policy, Vec<Vec<f64>>)> {
    mdp.require_scalar()?;
    let gamma = gamma_override.unwrap_or(mdp.gamma);
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidUtility(format!("discount {gamma} outside [0, 1]")));
    }
    let n = mdp.horizon;
    let mut values = vec![vec![0.0; mdp.num_states]; n + 1];
    let mut actions = BTreeMap::new();
    let mut q = vec![0.0; mdp.num_actions];
    for t in (0..n).rev() {
        for s in 0..mdp.num_states {
            if mdp.is_terminal(s) {
                continue;
            }
            for (a, qa) in q.iter_mut().enumerate() {
                *qa = mdp
                    .outcomes(s, a)
                    .iter()
                    .map(|o| o.prob * (o.reward[0] + gamma * values[t + 1][o.next]))
                    .sum();
            }
            let (a, v) = argmax_lowest(&q);
            values[t][s] = v;
            actions.insert(Augmentation::Timestep.key(t, s, 0), a);
        }
    }
    let policy = Policy::new(Augmentation::Timestep, actions).with_meta(
        "per-gamma-vi",
        Some(match gamma_override {
            Some(g) => UtilitySpec::Discount { gamma: g },
            None => UtilitySpec::Identity,
        }),
    );
    Ok((policy, values))
}

/// Optimal values over reachable `(state, accumulated-return memory)` pairs,
/// one map per timestep.
#[derive(Clone, Debug)]
pub struct AugmentedValues {
    pub augmentation: Augmentation,
    pub layers: Vec<BTreeMap<(usize, i64), f64>>,
    /// Expected utility from the initial distribution.
    pub value: f64,
}

impl AugmentedValues {
    pub fn get(&self, t: usize, state: usize, acc_return: f64) -> Option<f64> {
        let mem = self.augmentation.mem_increment(acc_return);
        self.layers.get(t)?.get(&(state, mem)).copied()
    }

    pub fn pair_count(&self) -> usize {
        self.layers.iter().map(BTreeMap::len).sum()
    }
}

pub fn augmented_value_iteration(mdp: &Mdp, spec: &UtilitySpec, bin_width: f64) -> Result<(Policy, AugmentedValues)> {
    augmented_value_iteration_with(mdp, spec, bin_width, DEFAULT_AUGMENTED_CAP)
}

/// Maximises expected terminal utility `E[u(acc_return)]` by backward
/// induction over `(t, state, accumulated return)`. `bin_width = 0` keeps
/// accumulated returns exact; a positive width rounds each discounted
/// reward to the bin grid, which costs at most `bin_width / 2` of return per
/// step.
pub fn augmented_value_iteration_with(
    mdp: &Mdp,
    spec: &UtilitySpec,
    bin_width: f64,
    cap: usize,
) -> Result<(Policy, AugmentedValues)> {
    mdp.require_scalar()?;
    spec.validate()?;
    if spec.applies_to() != AppliesTo::ScalarReturn {
        return Err(Error::WrongFamily {
            family: spec.family().name(),
            reason: "augmented value iteration needs a utility of the total return",
        });
    }
    if !(bin_width >= 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidRange(format!("bin width must be finite and non-negative, got {bin_width}")));
    }
    let aug = Augmentation::AccReturn { bin_width };
    let n = mdp.horizon;
    let discounts = discount_factors(mdp.gamma, n);

    // Forward pass: every (state, memory) pair reachable under some policy.
    let mut layers: Vec<BTreeSet<(usize, i64)>> = Vec::with_capacity(n);
    let mut layer: BTreeSet<(usize, i64)> =
        mdp.initial_states().filter(|&(s, _)| !mdp.is_terminal(s)).map(|(s, _)| (s, 0)).collect();
    let mut total = layer.len();
    for t in 0..n {
        let mut next = BTreeSet::new();
        for &(s, mem) in &layer {
            for a in 0..mdp.num_actions {
                for o in mdp.outcomes(s, a) {
                    if o.prob > 0.0 && !mdp.is_terminal(o.next) {
                        next.insert((o.next, mem + aug.mem_increment(discounts[t] * o.reward[0])));
                    }
                }
            }
        }
        layers.push(layer);
        if t + 1 < n {
            total += next.len();
            if total > cap {
                return Err(Error::BinExplosion { cap });
            }
        }
        layer = next;
    }

    // Backward pass.
    let mut utility_cache: HashMap<i64, f64> = HashMap::new();
    let mut terminal_utility = |mem: i64| -> Result<f64> {
        if let Some(&u) = utility_cache.get(&mem) {
            return Ok(u);
        }
        let u = eval_scalar_utility(spec, aug.mem_value(mem))?;
        utility_cache.insert(mem, u);
        Ok(u)
    };
    let mut values: Vec<BTreeMap<(usize, i64), f64>> = vec![BTreeMap::new(); n];
    let mut chosen: HashMap<(usize, usize, i64), usize> = HashMap::new();
    let mut q = vec![0.0; mdp.num_actions];
    for t in (0..n).rev() {
        let mut current = BTreeMap::new();
        for &(s, mem) in &layers[t] {
            for (a, qa) in q.iter_mut().enumerate() {
                let mut acc = 0.0;
                for o in mdp.outcomes(s, a) {
                    if o.prob <= 0.0 {
                        continue;
                    }
                    let mem2 = mem + aug.mem_increment(discounts[t] * o.reward[0]);
                    let v = if t + 1 == n || mdp.is_terminal(o.next) {
                        terminal_utility(mem2)?
                    } else {
                        values[t + 1][&(o.next, mem2)]
                    };
                    acc += o.prob * v;
                }
                *qa = acc;
            }
            let (a, v) = argmax_lowest(&q);
            current.insert((s, mem), v);
            chosen.insert((t, s, mem), a);
        }
        values[t] = current;
    }

    let mut value = 0.0;
    for (s, p) in mdp.initial_states() {
        value += p * if mdp.is_terminal(s) { terminal_utility(0)? } else { values[0][&(s, 0)] };
    }
    let policy = Policy::from_fn(mdp, aug, |k| chosen[&(k.timestep as usize, k.state as usize, k.mem)])
        .with_meta("augmented-vi", Some(spec.clone()));
    Ok((policy, AugmentedValues { augmentation: aug, layers: values, value }))
}
