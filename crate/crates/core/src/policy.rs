//! Deterministic tabular policies over plain, time-indexed, or
//! reward-augmented states.
//!
//! A reward-augmented policy carries a memory of the discounted scalar reward
//! accumulated so far. The memory is an integer count of quanta: with
//! `bin_width = 0` the quantum is [`ACC_QUANTUM`] (exact at desk scale), with
//! a positive `bin_width` each discounted reward is rounded to a multiple of
//! the bin width before it is added.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::decimal;
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::utility::UtilitySpec;

/// Resolution of the exact accumulated-return memory.
pub const ACC_QUANTUM: f64 = 1e-12;
const QUANTA_PER_UNIT: f64 = 1e12;
const QUANTUM_DIGITS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Augmentation {
    /// Stationary: the action depends on the environment state only.
    None,
    /// Time-indexed: `(timestep, state)`.
    Timestep,
    /// `(timestep, state, accumulated discounted return)`.
    AccReturn {
        #[serde(with = "decimal")]
        bin_width: f64,
    },
}

impl Augmentation {
    pub const EXACT: Augmentation = Augmentation::AccReturn { bin_width: 0.0 };

    pub fn key(&self, timestep: usize, state: usize, mem: i64) -> PolicyKey {
        match self {
            Augmentation::None => PolicyKey { timestep: 0, state: state as u32, mem: 0 },
            Augmentation::Timestep => PolicyKey { timestep: timestep as u32, state: state as u32, mem: 0 },
            Augmentation::AccReturn { .. } => PolicyKey { timestep: timestep as u32, state: state as u32, mem },
        }
    }

    pub fn tracks_return(&self) -> bool {
        matches!(self, Augmentation::AccReturn { .. })
    }

    /// Memory increment for an already-discounted reward.
    pub fn mem_increment(&self, discounted_reward: f64) -> i64 {
        match *self {
            Augmentation::AccReturn { bin_width } if bin_width > 0.0 => (discounted_reward / bin_width).round() as i64,
            Augmentation::AccReturn { .. } => (discounted_reward * QUANTA_PER_UNIT).round() as i64,
            _ => 0,
        }
    }

    /// Accumulated return represented by a memory value.
    pub fn mem_value(&self, mem: i64) -> f64 {
        match *self {
            Augmentation::AccReturn { bin_width } if bin_width > 0.0 => mem as f64 * bin_width,
            _ => mem as f64 / QUANTA_PER_UNIT,
        }
    }
}

/// `gamma^t` by repeated multiplication. Every module derives discount
/// factors this way so accumulated-return memories agree bit for bit.
pub fn discount_factors(gamma: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut d = 1.0;
    for _ in 0..len {
        out.push(d);
        d *= gamma;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PolicyKey {
    pub timestep: u32,
    pub state: u32,
    pub mem: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeta {
    pub solver: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilitySpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub augmentation: Augmentation,
    pub actions: BTreeMap<PolicyKey, usize>,
    pub meta: PolicyMeta,
}

impl Policy {
    pub fn new(augmentation: Augmentation, actions: BTreeMap<PolicyKey, usize>) -> Self {
        Self { augmentation, actions, meta: PolicyMeta::default() }
    }

    pub fn with_meta(mut self, solver: impl Into<String>, utility: Option<UtilitySpec>) -> Self {
        self.meta = PolicyMeta { solver: solver.into(), utility };
        self
    }

    pub fn action(&self, timestep: usize, state: usize, mem: i64) -> Result<usize> {
        self.actions
            .get(&self.augmentation.key(timestep, state, mem))
            .copied()
            .ok_or(Error::PolicyUndefined { state, timestep })
    }

    /// Builds the policy `choose` induces, tabulated over exactly the keys it
    /// reaches from the initial distribution.
    pub fn from_fn(mdp: &Mdp, augmentation: Augmentation, mut choose: impl FnMut(PolicyKey) -> usize) -> Self {
        let mut actions = BTreeMap::new();
        for_each_reachable(mdp, augmentation, |key| *actions.entry(key).or_insert_with(|| choose(key)));
        Self::new(augmentation, actions)
    }

    /// The same action everywhere it is needed.
    pub fn constant(mdp: &Mdp, augmentation: Augmentation, action: usize) -> Self {
        Self::from_fn(mdp, augmentation, |_| action)
    }

    /// Drops entries for keys the policy never reaches when followed from the
    /// initial distribution.
    pub fn restricted(&self, mdp: &Mdp) -> Result<Policy> {
        let mut actions = BTreeMap::new();
        let mut missing = None;
        for_each_reachable(mdp, self.augmentation, |key| match self.actions.get(&key) {
            Some(&a) => {
                actions.insert(key, a);
                a
            }
            None => {
                missing.get_or_insert(key);
                0
            }
        });
        if let Some(k) = missing {
            return Err(Error::PolicyUndefined { state: k.state as usize, timestep: k.timestep as usize });
        }
        Ok(Policy { augmentation: self.augmentation, actions, meta: self.meta.clone() })
    }

    /// True when both policies act identically wherever they are followed.
    pub fn same_behaviour(&self, other: &Policy, mdp: &Mdp) -> Result<bool> {
        if self.augmentation != other.augmentation {
            return Ok(false);
        }
        Ok(self.restricted(mdp)?.actions == other.restricted(mdp)?.actions)
    }
}

/// Forward reachability under a policy given as a callback. `act` is called
/// once per reachable key per visit layer and returns the action taken there.
pub(crate) fn for_each_reachable(mdp: &Mdp, augmentation: Augmentation, mut act: impl FnMut(PolicyKey) -> usize) {
    let discounts = discount_factors(mdp.gamma, mdp.horizon);
    let mut layer: BTreeSet<(usize, i64)> = mdp
        .initial_states()
        .filter(|&(s, _)| !mdp.is_terminal(s))
        .map(|(s, _)| (s, 0))
        .collect();
    for t in 0..mdp.horizon {
        let mut next = BTreeSet::new();
        for &(s, mem) in &layer {
            let a = act(augmentation.key(t, s, mem));
            if a >= mdp.num_actions {
                continue;
            }
            for o in mdp.outcomes(s, a) {
                if o.prob > 0.0 && !mdp.is_terminal(o.next) {
                    next.insert((o.next, mem + augmentation.mem_increment(discounts[t] * o.reward[0])));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        layer = next;
    }
}

// --- JSON -----------------------------------------------------------------

/// Exact fixed-point text for a memory counted in [`ACC_QUANTUM`] units.
fn format_quanta(mem: i64) -> String {
    let neg = mem < 0;
    let m = (mem as i128).unsigned_abs();
    let scale = 10u128.pow(QUANTUM_DIGITS as u32);
    let (int, frac) = (m / scale, m % scale);
    let mut out = if neg { format!("-{int}") } else { int.to_string() };
    if frac != 0 {
        let digits = format!("{frac:0width$}", width = QUANTUM_DIGITS);
        out.push('.');
        out.push_str(digits.trim_end_matches('0'));
    }
    out
}

fn parse_quanta(text: &str) -> Result<i64> {
    let bad = || Error::Decimal(text.to_string());
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() || frac.len() > QUANTUM_DIGITS || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let int: i128 = int.parse().map_err(|_| bad())?;
    let frac: i128 = if frac.is_empty() {
        0
    } else {
        format!("{frac:0<width$}", width = QUANTUM_DIGITS).parse().map_err(|_| bad())?
    };
    let v = int * 10i128.pow(QUANTUM_DIGITS as u32) + frac;
    let v = if neg { -v } else { v };
    i64::try_from(v).map_err(|_| bad())
}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t: Option<u32>,
    s: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    acc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bin: Option<i64>,
    a: usize,
}

#[derive(Serialize, Deserialize)]
struct PolicyJson {
    augmentation: Augmentation,
    actions: Vec<EntryJson>,
    #[serde(flatten)]
    meta: PolicyMeta,
}

impl Serialize for Policy {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let actions = self
            .actions
            .iter()
            .map(|(k, &a)| {
                let (t, acc, bin) = match self.augmentation {
                    Augmentation::None => (None, None, None),
                    Augmentation::Timestep => (Some(k.timestep), None, None),
                    Augmentation::AccReturn { bin_width } if bin_width > 0.0 => (Some(k.timestep), None, Some(k.mem)),
                    Augmentation::AccReturn { .. } => (Some(k.timestep), Some(format_quanta(k.mem)), None),
                };
                EntryJson { t, s: k.state, acc, bin, a }
            })
            .collect();
        PolicyJson { augmentation: self.augmentation, actions, meta: self.meta.clone() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = PolicyJson::deserialize(deserializer)?;
        let mut actions = BTreeMap::new();
        for e in raw.actions {
            let mem = match (&e.acc, e.bin) {
                (Some(acc), _) => parse_quanta(acc).map_err(D::Error::custom)?,
                (None, Some(bin)) => bin,
                (None, None) => 0,
            };
            let key = raw.augmentation.key(e.t.unwrap_or(0) as usize, e.s as usize, mem);
            actions.insert(key, e.a);
        }
        Ok(Policy { augmentation: raw.augmentation, actions, meta: raw.meta })
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .actions
            .iter()
            .map(|(k, a)| match self.augmentation {
                Augmentation::None => format!("s{}:{a}", k.state),
                Augmentation::Timestep => format!("t{}s{}:{a}", k.timestep, k.state),
                Augmentation::AccReturn { .. } => format!(
                    "t{}s{}@{}:{a}",
                    k.timestep,
                    k.state,
                    decimal::format(decimal::snap(self.augmentation.mem_value(k.mem)))
                ),
            })
            .collect();
        f.write_str(&parts.join(" "))
    }
}
