//! Brute-force enumeration of deterministic policies.
//!
//! Policies are enumerated as decision trees over the keys they actually
//! reach: at each timestep the undecided keys of the live particle set are
//! assigned every action combination, with the first key most significant.
//! Enumeration order is therefore lexicographic in the action sequence, and
//! a leaf's particle set is the policy's exact return distribution.

use std::collections::BTreeMap;

use crate::distribution::ReturnDistribution;
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::policy::{discount_factors, Augmentation, Policy, PolicyKey};
use crate::utility::UtilitySpec;

use super::evaluate::{criterion_value, return_gamma, Criterion, EvaluationRecord};
use super::TIE_TOL;

pub const DEFAULT_POLICY_CAP: u64 = 1_000_000;

#[derive(Clone, Copy, Debug)]
pub struct EnumerationOptions {
    pub policy_cap: u64,
    /// Policy class; `None` picks [`default_augmentation`].
    pub augmentation: Option<Augmentation>,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self { policy_cap: DEFAULT_POLICY_CAP, augmentation: None }
    }
}

/// Policy class each criterion is optimised over: stationary for CVaR,
/// reward-augmented for ESR with a non-linear utility, time-indexed
/// otherwise.
pub fn default_augmentation(spec: &UtilitySpec, criterion: Criterion) -> Augmentation {
    match criterion {
        Criterion::Cvar => Augmentation::None,
        Criterion::Esr if !spec.is_linear() => Augmentation::EXACT,
        _ => Augmentation::Timestep,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankedPolicy {
    /// Position in enumeration order.
    pub ordinal: u64,
    pub value: f64,
    pub expected_return: f64,
}

#[derive(Clone, Debug)]
pub struct Enumeration {
    pub best: Policy,
    pub record: EvaluationRecord,
    /// Every enumerated policy, best first; ties keep enumeration order.
    pub ranking: Vec<RankedPolicy>,
}

impl Enumeration {
    pub fn worst_value(&self) -> f64 {
        self.ranking.last().map_or(self.record.value, |r| r.value)
    }
}

pub fn enumerate_policies(mdp: &Mdp, spec: &UtilitySpec, criterion: Criterion) -> Result<Enumeration> {
    enumerate_policies_with(mdp, spec, criterion, EnumerationOptions::default())
}

pub fn enumerate_policies_with(
    mdp: &Mdp,
    spec: &UtilitySpec,
    criterion: Criterion,
    opts: EnumerationOptions,
) -> Result<Enumeration> {
    criterion.check(spec)?;
    let augmentation = opts.augmentation.unwrap_or_else(|| default_augmentation(spec, criterion));
    let gamma = return_gamma(mdp, spec, criterion);

    let mut ranking = Vec::new();
    let mut best: Option<(f64, BTreeMap<PolicyKey, usize>, ReturnDistribution)> = None;
    for_each_policy(mdp, augmentation, gamma, opts.policy_cap, |actions, dist| {
        let value = criterion_value(criterion, spec, dist)?;
        ranking.push(RankedPolicy { ordinal: ranking.len() as u64, value, expected_return: dist.mean() });
        if best.as_ref().is_none_or(|(v, _, _)| value > v + TIE_TOL) {
            best = Some((value, actions.clone(), dist.clone()));
        }
        Ok(())
    })?;

    let (value, actions, dist) = best.expect("at least one policy is enumerated");
    ranking.sort_by(|a, b| b.value.total_cmp(&a.value));
    let policy = Policy::new(augmentation, actions).with_meta(format!("exact-enum/{criterion}"), Some(spec.clone()));
    Ok(Enumeration {
        best: policy,
        record: EvaluationRecord {
            criterion,
            utility: spec.clone(),
            value,
            expected_return: dist.mean(),
            distribution: Some(dist),
        },
        ranking,
    })
}

/// Number of policies in the class, or `ExplosionCap` once it passes `cap`.
pub fn count_policies(mdp: &Mdp, augmentation: Augmentation, cap: u64) -> Result<u64> {
    let mut walker = Walker::new(mdp, augmentation, mdp.gamma, cap, |_, _| Ok(()));
    walker.skip_distributions = true;
    walker.run()
}

/// Calls `visit` with every policy's action map (restricted to the keys it
/// reaches) and its exact return distribution under discount `gamma`.
pub fn for_each_policy<F>(mdp: &Mdp, augmentation: Augmentation, gamma: f64, cap: u64, visit: F) -> Result<u64>
where
    F: FnMut(&BTreeMap<PolicyKey, usize>, &ReturnDistribution) -> Result<()>,
{
    mdp.require_scalar()?;
    Walker::new(mdp, augmentation, gamma, cap, visit).run()
}

#[derive(Clone, Copy)]
struct Particle {
    state: usize,
    mem: i64,
    ret: f64,
    prob: f64,
}

struct Walker<'a, F> {
    mdp: &'a Mdp,
    augmentation: Augmentation,
    ret_discounts: Vec<f64>,
    mem_discounts: Vec<f64>,
    cap: u64,
    count: u64,
    actions: BTreeMap<PolicyKey, usize>,
    done: Vec<(f64, f64)>,
    skip_distributions: bool,
    visit: F,
}

impl<'a, F> Walker<'a, F>
where
    F: FnMut(&BTreeMap<PolicyKey, usize>, &ReturnDistribution) -> Result<()>,
{
    fn new(mdp: &'a Mdp, augmentation: Augmentation, gamma: f64, cap: u64, visit: F) -> Self {
        Self {
            mdp,
            augmentation,
            ret_discounts: discount_factors(gamma, mdp.horizon),
            mem_discounts: discount_factors(mdp.gamma, mdp.horizon),
            cap,
            count: 0,
            actions: BTreeMap::new(),
            done: Vec::new(),
            skip_distributions: false,
            visit,
        }
    }

    fn run(mut self) -> Result<u64> {
        let mut live = Vec::new();
        for (s, p) in self.mdp.initial_states() {
            let particle = Particle { state: s, mem: 0, ret: 0.0, prob: p };
            if self.mdp.is_terminal(s) {
                self.done.push((0.0, p));
            } else {
                live.push(particle);
            }
        }
        self.descend(0, live)?;
        Ok(self.count)
    }

    fn descend(&mut self, t: usize, live: Vec<Particle>) -> Result<()> {
        if t == self.mdp.horizon || live.is_empty() {
            self.count += 1;
            if self.count > self.cap {
                return Err(Error::ExplosionCap { what: "policies", cap: self.cap });
            }
            if self.skip_distributions {
                return Ok(());
            }
            let pairs = self.done.iter().copied().chain(live.iter().map(|p| (p.ret, p.prob)));
            let dist = ReturnDistribution::from_pairs(pairs)?;
            return (self.visit)(&self.actions, &dist);
        }

        let mut keys: Vec<PolicyKey> = live
            .iter()
            .map(|p| self.augmentation.key(t, p.state, p.mem))
            .filter(|k| !self.actions.contains_key(k))
            .collect();
        keys.sort_unstable();
        keys.dedup();

        let num_actions = self.mdp.num_actions;
        let mut assignment = vec![0usize; keys.len()];
        let result = 'odometer: loop {
            for (key, &a) in keys.iter().zip(&assignment) {
                self.actions.insert(*key, a);
            }
            let mark = self.done.len();
            let next = self.step(t, &live);
            let outcome = self.descend(t + 1, next);
            self.done.truncate(mark);
            if outcome.is_err() {
                break outcome;
            }
            let mut i = keys.len();
            loop {
                if i == 0 {
                    break 'odometer Ok(());
                }
                i -= 1;
                assignment[i] += 1;
                if assignment[i] < num_actions {
                    break;
                }
                assignment[i] = 0;
            }
        };
        for key in &keys {
            self.actions.remove(key);
        }
        result
    }

    fn step(&mut self, t: usize, live: &[Particle]) -> Vec<Particle> {
        let mut next = Vec::with_capacity(live.len() * 2);
        for p in live {
            let a = self.actions[&self.augmentation.key(t, p.state, p.mem)];
            for o in self.mdp.outcomes(p.state, a) {
                if o.prob <= 0.0 {
                    continue;
                }
                let r = o.reward[0];
                let q = Particle {
                    state: o.next,
                    mem: p.mem + self.augmentation.mem_increment(self.mem_discounts[t] * r),
                    ret: p.ret + self.ret_discounts[t] * r,
                    prob: p.prob * o.prob,
                };
                if self.mdp.is_terminal(q.state) {
                    self.done.push((q.ret, q.prob));
                } else {
                    next.push(q);
                }
            }
        }
        next.sort_unstable_by(|a, b| {
            (a.state, a.mem)
                .cmp(&(b.state, b.mem))
                .then(a.ret.total_cmp(&b.ret))
        });
        next.dedup_by(|b, a| {
            let same = a.state == b.state && a.mem == b.mem && a.ret.to_bits() == b.ret.to_bits();
            if same {
                a.prob += b.prob;
            }
            same
        });
        next
    }
}
