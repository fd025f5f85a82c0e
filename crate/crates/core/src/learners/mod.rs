//! Sample-based multi-policy learners.
//!
//! Conditioning on a utility parameter is tabular: one Q-table per grid
//! point, all fed by the same stream of experience.

mod conditioned;
mod distributional;
mod multi_gamma;
mod sweep;

use std::collections::HashMap;
use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decimal;
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::policy::{Augmentation, Policy, PolicyKey};
use crate::utility::UtilitySpec;

pub use conditioned::{train_conditioned_q, train_conditioned_q_observed, TargetEvent};
pub use distributional::{evaluate_distribution_td, return_bounds, CategoricalEstimate, SupportConfig};
pub use multi_gamma::{max_value_error, train_multi_gamma_q};
pub use sweep::{cvar_policy_sweep, SweepMode};

/// How the step size decays with the number of updates `n` of an entry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `step_size` throughout.
    #[default]
    Constant,
    /// `step_size / (1 + (n - 1) * step_size)`: starts at `step_size` and
    /// tends to `1 / n`. With `step_size = 1` this is the running mean of
    /// the targets.
    Harmonic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: u64,
    #[serde(with = "decimal")]
    pub step_size: f64,
    #[serde(with = "decimal")]
    pub epsilon: f64,
    pub seed: u64,
    #[serde(default, with = "decimal")]
    pub initial_q: f64,
    #[serde(default)]
    pub schedule: StepSchedule,
}

impl TrainConfig {
    pub fn new(episodes: u64, step_size: f64, epsilon: f64, seed: u64) -> Self {
        Self { episodes, step_size, epsilon, seed, initial_q: 0.0, schedule: StepSchedule::Constant }
    }

    /// Budget and learning parameters each shipped environment is tuned and
    /// tested with.
    ///
    /// | environment   | episodes | step | schedule | epsilon | initial Q |
    /// |---------------|----------|------|----------|---------|-----------|
    /// | gold-nuggets  | 4000     | 1    | constant | 0.3     | 10        |
    /// | mining-world  | 60000    | 1    | harmonic | 0.3     | 0         |
    /// | harvest-world | 3000     | 1    | constant | 0.3     | 0         |
    ///
    /// Gold-nuggets and harvest-world are deterministic, so a unit step is
    /// exact once every entry has been tried; the optimistic start on
    /// gold-nuggets drives the agent down the corridor. Mining-world is
    /// stochastic and needs averaging.
    pub fn for_environment(name: &str, seed: u64) -> Result<Self> {
        let c = match name {
            "gold-nuggets" => Self { initial_q: 10.0, ..Self::new(4000, 1.0, 0.3, seed) },
            "mining-world" => Self { schedule: StepSchedule::Harmonic, ..Self::new(60_000, 1.0, 0.3, seed) },
            "harvest-world" => Self::new(3000, 1.0, 0.3, seed),
            other => return Err(Error::UnknownEnvironment(other.to_string())),
        };
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episode budget must be positive".into()));
        }
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return Err(Error::Config(format!("step_size must lie in (0, 1], got {}", self.step_size)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        if !self.initial_q.is_finite() {
            return Err(Error::Config("initial_q must be finite".into()));
        }
        Ok(())
    }

    fn step(&self, n: u32) -> f64 {
        match self.schedule {
            StepSchedule::Constant => self.step_size,
            StepSchedule::Harmonic => self.step_size / (1.0 + (n as f64 - 1.0) * self.step_size),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct QEntry {
    q: Vec<f64>,
    visits: Vec<u32>,
}

/// Tabular action values over policy keys; unvisited entries read as the
/// configured initial value.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    pub augmentation: Augmentation,
    num_actions: usize,
    initial_q: f64,
    entries: HashMap<PolicyKey, QEntry>,
}

impl QTable {
    pub fn new(augmentation: Augmentation, num_actions: usize, initial_q: f64) -> Self {
        Self { augmentation, num_actions, initial_q, entries: HashMap::new() }
    }

    /// Stored values, or `None` if the key was never updated.
    pub fn get(&self, key: PolicyKey) -> Option<&[f64]> {
        self.entries.get(&key).map(|e| e.q.as_slice())
    }

    pub fn value(&self, key: PolicyKey, a: usize) -> f64 {
        self.get(key).map_or(self.initial_q, |q| q[a])
    }

    pub fn max(&self, key: PolicyKey) -> f64 {
        self.get(key).map_or(self.initial_q, |q| q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Highest-valued action, lowest index on exact ties.
    pub fn greedy(&self, key: PolicyKey) -> usize {
        match self.get(key) {
            None => 0,
            Some(q) => {
                let mut best = 0;
                for a in 1..q.len() {
                    if q[a] > q[best] {
                        best = a;
                    }
                }
                best
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn update(&mut self, key: PolicyKey, a: usize, target: f64, config: &TrainConfig) {
        let (n, init) = (self.num_actions, self.initial_q);
        let e = self.entries.entry(key).or_insert_with(|| QEntry { q: vec![init; n], visits: vec![0; n] });
        e.visits[a] += 1;
        let step = config.step(e.visits[a]);
        e.q[a] += step * (target - e.q[a]);
    }

    /// Greedy policy tabulated over the keys it reaches.
    pub fn greedy_policy(&self, mdp: &Mdp) -> Policy {
        Policy::from_fn(mdp, self.augmentation, |k| self.greedy(k))
    }
}

/// One Q-table per grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionedQTable {
    pub grid: Vec<UtilitySpec>,
    pub tables: Vec<QTable>,
    pub config: TrainConfig,
    /// Number of update targets computed for each table.
    pub target_computations: Vec<u64>,
}

/// One training episode as logged.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRow {
    pub episode: u64,
    pub grid_point: usize,
    #[serde(with = "decimal")]
    pub param: f64,
    #[serde(rename = "return", with = "decimal")]
    pub ret: f64,
    #[serde(with = "decimal")]
    pub utility: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sample_start(mdp: &Mdp, rng: &mut ChaCha8Rng) -> Result<usize> {
    let dist = WeightedIndex::new(&mdp.initial_dist).map_err(|e| Error::InvalidMdp(e.to_string()))?;
    Ok(dist.sample(rng))
}

fn sample_outcome(mdp: &Mdp, s: usize, a: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
    let outcomes = mdp.outcomes(s, a);
    if outcomes.len() == 1 {
        return Ok(0);
    }
    let dist = WeightedIndex::new(outcomes.iter().map(|o| o.prob)).map_err(|e| Error::InvalidMdp(e.to_string()))?;
    Ok(dist.sample(rng))
}

fn epsilon_greedy(table: &QTable, key: PolicyKey, epsilon: f64, num_actions: usize, rng: &mut ChaCha8Rng) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..num_actions)
    } else {
        table.greedy(key)
    }
}
