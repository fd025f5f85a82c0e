//! Finite MDPs with vector-valued rewards, trajectories and returns.
//!
//! A scalar-reward MDP is represented as a MOMDP whose reward vectors have
//! length one. Episodes are truncated at the horizon `N` and end early on
//! entering a terminal state, which is absorbing with zero reward.

use std::collections::BTreeSet;
use std::fmt;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decimal;
use crate::error::{Error, Result};
use crate::policy::Policy;

/// Row-sum tolerance for transition rows and the initial distribution.
pub const PROB_TOL: f64 = 1e-12;

/// One possible result of taking an action: successor, probability, reward.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub reward: Vec<f64>,
}

impl Outcome {
    pub fn new(next: usize, prob: f64, reward: Vec<f64>) -> Self {
        Self { next, prob, reward }
    }

    pub fn scalar(next: usize, prob: f64, reward: f64) -> Self {
        Self::new(next, prob, vec![reward])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub reward_dim: usize,
    pub gamma: f64,
    pub horizon: usize,
    pub initial_dist: Vec<f64>,
    pub terminal: BTreeSet<usize>,
    /// `transitions[s][a]` lists the outcomes of action `a` in state `s`.
    pub transitions: Vec<Vec<Vec<Outcome>>>,
}

impl Mdp {
    pub fn outcomes(&self, s: usize, a: usize) -> &[Outcome] {
        &self.transitions[s][a]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal.contains(&s)
    }

    pub fn initial_states(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.initial_dist
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, p)| p > 0.0)
    }

    /// Largest absolute scalar reward in the table.
    pub fn max_abs_reward(&self) -> f64 {
        self.transitions
            .iter()
            .flatten()
            .flatten()
            .flat_map(|o| o.reward.iter())
            .fold(0.0f64, |m, r| m.max(r.abs()))
    }

    /// Fails unless the MDP is well formed and has scalar (d = 1) rewards.
    pub fn require_scalar(&self) -> Result<()> {
        let report = self.validate();
        if !report.is_ok() {
            return Err(Error::InvalidMdp(report.to_string()));
        }
        if self.reward_dim != 1 {
            return Err(Error::InvalidMdp(format!(
                "expected scalar rewards (reward_dim = 1), got reward_dim = {}",
                self.reward_dim
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> ValidationReport {
        validate_mdp(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: MdpJson = serde_json::from_str(text)?;
        raw.try_into()
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(&MdpJson::from(self)).expect("MDP serialises");
        out.push('\n');
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.violations.join("; "))
    }
}

/// Lists every violated structural invariant. An empty report means the MDP
/// is well formed.
pub fn validate_mdp(mdp: &Mdp) -> ValidationReport {
    let mut v = Vec::new();
    if mdp.num_states == 0 {
        v.push("num_states must be positive".to_string());
    }
    if mdp.num_actions == 0 {
        v.push("num_actions must be positive".to_string());
    }
    if mdp.reward_dim == 0 {
        v.push("reward_dim must be positive".to_string());
    }
    if !(0.0..=1.0).contains(&mdp.gamma) {
        v.push(format!("gamma {} outside [0, 1]", mdp.gamma));
    }
    if mdp.horizon == 0 {
        v.push("horizon must be at least 1".to_string());
    }

    if mdp.initial_dist.len() != mdp.num_states {
        v.push(format!(
            "initial distribution has {} entries for {} states",
            mdp.initial_dist.len(),
            mdp.num_states
        ));
    }
    if mdp.initial_dist.iter().any(|p| !(0.0..=1.0).contains(p)) {
        v.push("initial distribution has a probability outside [0, 1]".to_string());
    }
    let mu: f64 = mdp.initial_dist.iter().sum();
    if (mu - 1.0).abs() > PROB_TOL {
        v.push(format!("initial distribution sums to {}", decimal::format(mu)));
    }

    for &t in &mdp.terminal {
        if t >= mdp.num_states {
            v.push(format!("terminal state {t} out of range"));
        }
    }

    if mdp.transitions.len() != mdp.num_states {
        v.push(format!(
            "transition table has {} state rows for {} states",
            mdp.transitions.len(),
            mdp.num_states
        ));
    }
    for (s, row) in mdp.transitions.iter().enumerate() {
        if row.len() != mdp.num_actions {
            v.push(format!("state {s} has {} actions, expected {}", row.len(), mdp.num_actions));
        }
        for (a, outcomes) in row.iter().enumerate() {
            if outcomes.is_empty() {
                v.push(format!("transition row ({s},{a}) is empty"));
                continue;
            }
            let mut sum = 0.0;
            for o in outcomes {
                sum += o.prob;
                if !(0.0..=1.0).contains(&o.prob) {
                    v.push(format!("transition ({s},{a})->{} has probability {} outside [0, 1]", o.next, o.prob));
                }
                if o.next >= mdp.num_states {
                    v.push(format!("transition ({s},{a}) targets unknown state {}", o.next));
                }
                if o.reward.len() != mdp.reward_dim {
                    v.push(format!(
                        "reward at ({s},{a})->{} has length {}, expected {}",
                        o.next,
                        o.reward.len(),
                        mdp.reward_dim
                    ));
                }
                if o.reward.iter().any(|r| !r.is_finite()) {
                    v.push(format!("reward at ({s},{a})->{} is not finite", o.next));
                }
            }
            if (sum - 1.0).abs() > PROB_TOL {
                v.push(format!("transition row ({s},{a}) sums to {}", decimal::format(sum)));
            }
            if mdp.is_terminal(s)
                && outcomes
                    .iter()
                    .any(|o| o.prob > 0.0 && (o.next != s || o.reward.iter().any(|&r| r != 0.0)))
            {
                v.push(format!("terminal state {s} is not absorbing with zero reward under action {a}"));
            }
        }
    }
    ValidationReport { violations: v }
}

/// A scalar-reward MDP, the conventional single-objective form.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub horizon: usize,
    pub initial_dist: Vec<f64>,
    pub terminal: BTreeSet<usize>,
    /// `(next_state, probability, reward)` per `(s, a)`.
    pub transitions: Vec<Vec<Vec<(usize, f64, f64)>>>,
}

pub trait IntoMomdp {
    fn embed_as_momdp(&self) -> Mdp;
}

impl IntoMomdp for ScalarMdp {
    fn embed_as_momdp(&self) -> Mdp {
        Mdp {
            num_states: self.num_states,
            num_actions: self.num_actions,
            reward_dim: 1,
            gamma: self.gamma,
            horizon: self.horizon,
            initial_dist: self.initial_dist.clone(),
            terminal: self.terminal.clone(),
            transitions: self
                .transitions
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|outs| outs.iter().map(|&(n, p, r)| Outcome::scalar(n, p, r)).collect())
                        .collect()
                })
                .collect(),
        }
    }
}

impl IntoMomdp for Mdp {
    fn embed_as_momdp(&self) -> Mdp {
        self.clone()
    }
}

/// Wraps every scalar reward as a length-one vector. Already-embedded
/// inputs come back unchanged.
pub fn embed_scalar_as_momdp<M: IntoMomdp + ?Sized>(mdp: &M) -> Mdp {
    mdp.embed_as_momdp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub s: usize,
    pub a: usize,
    #[serde(with = "decimal::vec")]
    pub r: Vec<f64>,
    pub s2: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn scalar_rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.r[0]).collect()
    }
}

/// Environment state extended with the discounted reward accumulated so far.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentedState {
    pub env_state: usize,
    pub acc_return: f64,
    pub timestep: usize,
}

impl AugmentedState {
    pub fn initial(env_state: usize) -> Self {
        Self { env_state, acc_return: 0.0, timestep: 0 }
    }

    pub fn advance(self, next_state: usize, reward: f64, gamma: f64) -> Self {
        Self {
            env_state: next_state,
            acc_return: self.acc_return + (0..self.timestep).fold(1.0, |d, _| d * gamma) * reward,
            timestep: self.timestep + 1,
        }
    }
}

/// Samples one episode under `policy`. The same seed always gives the same
/// trajectory.
pub fn simulate_episode(mdp: &Mdp, policy: &Policy, rng_seed: u64) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let start = WeightedIndex::new(&mdp.initial_dist)
        .map_err(|e| Error::InvalidMdp(format!("initial distribution: {e}")))?
        .sample(&mut rng);

    let mut steps = Vec::new();
    let mut s = start;
    let mut mem = 0i64;
    let mut discount = 1.0;
    for t in 0..mdp.horizon {
        if mdp.is_terminal(s) {
            break;
        }
        let a = policy.action(t, s, mem)?;
        let outcomes = mdp.outcomes(s, a);
        let idx = WeightedIndex::new(outcomes.iter().map(|o| o.prob))
            .map_err(|e| Error::InvalidMdp(format!("transition row ({s},{a}): {e}")))?
            .sample(&mut rng);
        let o = &outcomes[idx];
        mem += policy.augmentation.mem_increment(discount * o.reward[0]);
        steps.push(Step { s, a, r: o.reward.clone(), s2: o.next });
        discount *= mdp.gamma;
        s = o.next;
    }
    Ok(Trajectory { steps })
}

/// Componentwise `sum_i gamma^i r_i` over the trajectory.
pub fn discounted_return(traj: &Trajectory, gamma: f64) -> Vec<f64> {
    let dim = traj.steps.first().map_or(1, |s| s.r.len());
    let mut total = vec![0.0; dim];
    let mut discount = 1.0;
    for step in &traj.steps {
        for (acc, r) in total.iter_mut().zip(&step.r) {
            *acc += discount * r;
        }
        discount *= gamma;
    }
    total
}

// --- JSON -----------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MdpJson {
    num_states: usize,
    num_actions: usize,
    reward_dim: usize,
    #[serde(with = "decimal")]
    gamma: f64,
    horizon: usize,
    #[serde(with = "decimal::vec")]
    initial_dist: Vec<f64>,
    #[serde(default)]
    terminal: Vec<usize>,
    transitions: Vec<RowJson>,
}

#[derive(Serialize, Deserialize)]
struct RowJson {
    s: usize,
    a: usize,
    next: Vec<OutcomeJson>,
}

#[derive(Serialize, Deserialize)]
struct OutcomeJson {
    s2: usize,
    #[serde(with = "decimal")]
    p: f64,
    r: RewardJson,
}

/// A reward is a vector of decimals; a bare scalar is accepted on input and
/// embedded as a length-one vector.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RewardJson {
    Vector(#[serde(with = "decimal::vec")] Vec<f64>),
    Scalar(#[serde(with = "decimal")] f64),
}

impl From<&Mdp> for MdpJson {
    fn from(m: &Mdp) -> Self {
        let mut rows = Vec::with_capacity(m.num_states * m.num_actions);
        for (s, row) in m.transitions.iter().enumerate() {
            for (a, outs) in row.iter().enumerate() {
                rows.push(RowJson {
                    s,
                    a,
                    next: outs
                        .iter()
                        .map(|o| OutcomeJson { s2: o.next, p: o.prob, r: RewardJson::Vector(o.reward.clone()) })
                        .collect(),
                });
            }
        }
        MdpJson {
            num_states: m.num_states,
            num_actions: m.num_actions,
            reward_dim: m.reward_dim,
            gamma: m.gamma,
            horizon: m.horizon,
            initial_dist: m.initial_dist.clone(),
            terminal: m.terminal.iter().copied().collect(),
            transitions: rows,
        }
    }
}

impl TryFrom<MdpJson> for Mdp {
    type Error = Error;

    fn try_from(raw: MdpJson) -> Result<Self> {
        let mut table: Vec<Vec<Option<Vec<Outcome>>>> = vec![vec![None; raw.num_actions]; raw.num_states];
        for row in raw.transitions {
            let slot = table
                .get_mut(row.s)
                .and_then(|r| r.get_mut(row.a))
                .ok_or_else(|| Error::InvalidMdp(format!("transition row ({},{}) out of range", row.s, row.a)))?;
            if slot.is_some() {
                return Err(Error::InvalidMdp(format!("duplicate transition row ({},{})", row.s, row.a)));
            }
            *slot = Some(
                row.next
                    .into_iter()
                    .map(|o| {
                        let reward = match o.r {
                            RewardJson::Vector(v) => v,
                            RewardJson::Scalar(x) => vec![x],
                        };
                        Outcome::new(o.s2, o.p, reward)
                    })
                    .collect(),
            );
        }
        let transitions = table
            .into_iter()
            .enumerate()
            .map(|(s, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(a, outs)| outs.ok_or_else(|| Error::InvalidMdp(format!("missing transition row ({s},{a})"))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mdp {
            num_states: raw.num_states,
            num_actions: raw.num_actions,
            reward_dim: raw.reward_dim,
            gamma: raw.gamma,
            horizon: raw.horizon,
            initial_dist: raw.initial_dist,
            terminal: raw.terminal.into_iter().collect(),
            transitions,
        })
    }
}
