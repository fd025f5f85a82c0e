use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decimal;
use crate::distribution::ReturnDistribution;
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::policy::Policy;

use super::{sample_outcome, sample_start};

/// Atoms closer than this to a support point land on it entirely.
const SNAP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportConfig {
    pub atoms: usize,
    /// Support range; `None` uses [`return_bounds`].
    #[serde(default)]
    pub bounds: Option<(f64, f64)>,
    /// Episodes between convergence checks.
    pub episodes_per_sweep: u64,
    pub max_episodes: u64,
    /// Stop once no entry moves by more than this in total variation
    /// between two sweeps.
    #[serde(with = "decimal")]
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SupportConfig {
    fn default() -> Self {
        Self { atoms: 101, bounds: None, episodes_per_sweep: 10, max_episodes: 200_000, tolerance: 1e-4, seed: 0 }
    }
}

/// Learned return distributions on a fixed, evenly spaced support, one per
/// visited `(t, s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalEstimate {
    pub support: Vec<f64>,
    pub probs: BTreeMap<(usize, usize, usize), Vec<f64>>,
    /// Mixture over the initial distribution.
    pub initial: Vec<f64>,
    pub episodes: u64,
    pub converged: bool,
    /// Largest `|sum of probabilities - 1|` seen after any update.
    pub max_mass_error: f64,
}

impl CategoricalEstimate {
    fn to_distribution(&self, probs: &[f64]) -> Result<ReturnDistribution> {
        ReturnDistribution::from_pairs(self.support.iter().copied().zip(probs.iter().copied()))
    }

    pub fn initial_distribution(&self) -> Result<ReturnDistribution> {
        self.to_distribution(&self.initial)
    }

    pub fn distribution(&self, t: usize, s: usize, a: usize) -> Option<Result<ReturnDistribution>> {
        self.probs.get(&(t, s, a)).map(|p| self.to_distribution(p))
    }
}

/// Smallest and largest discounted return-to-go from any timestep, state and
/// action sequence, widened to include 0.
pub fn return_bounds(mdp: &Mdp) -> (f64, f64) {
    let mut lo = vec![0.0; mdp.num_states];
    let mut hi = vec![0.0; mdp.num_states];
    let (mut min, mut max) = (0.0f64, 0.0f64);
    for _ in 0..mdp.horizon {
        let mut lo2 = vec![0.0; mdp.num_states];
        let mut hi2 = vec![0.0; mdp.num_states];
        for s in (0..mdp.num_states).filter(|&s| !mdp.is_terminal(s)) {
            let (mut l, mut h) = (f64::INFINITY, f64::NEG_INFINITY);
            for a in 0..mdp.num_actions {
                for o in mdp.outcomes(s, a).iter().filter(|o| o.prob > 0.0) {
                    l = l.min(o.reward[0] + mdp.gamma * lo[o.next]);
                    h = h.max(o.reward[0] + mdp.gamma * hi[o.next]);
                }
            }
            lo2[s] = l;
            hi2[s] = h;
            min = min.min(l);
            max = max.max(h);
        }
        lo = lo2;
        hi = hi2;
    }
    (min, max)
}

struct Projector {
    lo: f64,
    hi: f64,
    delta: f64,
    n: usize,
}

impl Projector {
    fn add(&self, x: f64, p: f64, out: &mut [f64]) -> Result<()> {
        let b = (x - self.lo) / self.delta;
        if b < -SNAP_TOL || b > (self.n - 1) as f64 + SNAP_TOL {
            return Err(Error::SupportTooNarrow { value: x, lo: self.lo, hi: self.hi });
        }
        let nearest = b.round();
        if (b - nearest).abs() < SNAP_TOL {
            out[nearest as usize] += p;
        } else {
            let l = b.floor();
            let w = b - l;
            out[l as usize] += p * (1.0 - w);
            out[l as usize + 1] += p * w;
        }
        Ok(())
    }

    /// Bootstrapped targets: projection spreads mass onto the edge atoms,
    /// so `r + gamma * z` can overshoot the support slightly even when every
    /// real return lies inside it. Those land on the edge.
    fn add_clamped(&self, x: f64, p: f64, out: &mut [f64]) {
        self.add(x.clamp(self.lo, self.hi), p, out).expect("clamped value lies on the support");
    }
}

/// Categorical TD evaluation of a fixed time-indexed or stationary policy.
/// Episodes follow the policy; each is replayed backwards so every update
/// bootstraps from a successor entry updated in the same episode. Entry
/// `(t, s, a)` mixes its `n`-th target in with weight `1 / n`.
pub fn evaluate_distribution_td(mdp: &Mdp, policy: &Policy, config: &SupportConfig) -> Result<CategoricalEstimate> {
    mdp.require_scalar()?;
    if policy.augmentation.tracks_return() {
        return Err(Error::Config("distributional evaluation supports stationary and time-indexed policies".into()));
    }
    if config.atoms < 2 {
        return Err(Error::Config("the categorical support needs at least two atoms".into()));
    }
    if config.episodes_per_sweep == 0 || config.max_episodes == 0 {
        return Err(Error::Config("episode counts must be positive".into()));
    }
    let (lo, mut hi) = config.bounds.unwrap_or_else(|| return_bounds(mdp));
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Config(format!("invalid support bounds [{lo}, {hi}]")));
    }
    if hi == lo {
        hi = lo + 1.0;
    }
    let n = config.atoms;
    let m = (n - 1) as f64;
    let support: Vec<f64> = (0..n).map(|i| decimal::snap((lo * (m - i as f64) + hi * i as f64) / m)).collect();
    let proj = Projector { lo, hi, delta: (hi - lo) / m, n };

    let mut probs: BTreeMap<(usize, usize, usize), Vec<f64>> = BTreeMap::new();
    let mut visits: BTreeMap<(usize, usize, usize), u64> = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut max_mass_error = 0.0f64;
    let mut snapshot = probs.clone();
    let mut converged = false;
    let mut episodes = 0;
    let mut path: Vec<(usize, usize, usize, f64, usize, bool)> = Vec::with_capacity(mdp.horizon);
    let mut target = vec![0.0; n];

    while episodes < config.max_episodes {
        path.clear();
        let mut s = sample_start(mdp, &mut rng)?;
        let mut t = 0;
        let mut ret = 0.0;
        let mut discount = 1.0;
        while t < mdp.horizon && !mdp.is_terminal(s) {
            let a = policy.action(t, s, 0)?;
            let o = &mdp.outcomes(s, a)[sample_outcome(mdp, s, a, &mut rng)?];
            let last = t + 1 == mdp.horizon || mdp.is_terminal(o.next);
            path.push((t, s, a, o.reward[0], o.next, last));
            ret += discount * o.reward[0];
            discount *= mdp.gamma;
            s = o.next;
            t += 1;
        }
        if ret < lo - SNAP_TOL * (hi - lo) || ret > hi + SNAP_TOL * (hi - lo) {
            return Err(Error::SupportTooNarrow { value: ret, lo, hi });
        }
        for &(t, s, a, r, s2, last) in path.iter().rev() {
            target.iter_mut().for_each(|x| *x = 0.0);
            if last {
                proj.add(r, 1.0, &mut target)?;
            } else {
                let a2 = policy.action(t + 1, s2, 0)?;
                let next = &probs[&(t + 1, s2, a2)];
                for (z, &p) in support.iter().zip(next) {
                    if p > 0.0 {
                        proj.add_clamped(r + mdp.gamma * z, p, &mut target);
                    }
                }
            }
            let count = visits.entry((t, s, a)).or_insert(0);
            *count += 1;
            let beta = 1.0 / *count as f64;
            let entry = probs.entry((t, s, a)).or_insert_with(|| vec![0.0; n]);
            for (x, &y) in entry.iter_mut().zip(&target) {
                *x += beta * (y - *x);
            }
            let mass: f64 = entry.iter().sum();
            max_mass_error = max_mass_error.max((mass - 1.0).abs());
        }
        episodes += 1;
        if episodes % config.episodes_per_sweep == 0 {
            let change = probs
                .iter()
                .map(|(k, p)| match snapshot.get(k) {
                    Some(old) => 0.5 * p.iter().zip(old).map(|(a, b)| (a - b).abs()).sum::<f64>(),
                    None => 1.0,
                })
                .fold(0.0, f64::max);
            let starts_seen = mdp
                .initial_states()
                .filter(|&(s, _)| !mdp.is_terminal(s))
                .all(|(s, _)| policy.action(0, s, 0).is_ok_and(|a| probs.contains_key(&(0, s, a))));
            if change < config.tolerance && !snapshot.is_empty() && starts_seen {
                converged = true;
                break;
            }
            snapshot.clone_from(&probs);
        }
    }

    let mut initial = vec![0.0; n];
    for (s, p) in mdp.initial_states() {
        if mdp.is_terminal(s) {
            proj.add(0.0, p, &mut initial)?;
            continue;
        }
        let a = policy.action(0, s, 0)?;
        let z = probs
            .get(&(0, s, a))
            .ok_or_else(|| Error::Config(format!("initial state {s} was never visited; raise max_episodes")))?;
        for (x, &q) in initial.iter_mut().zip(z) {
            *x += p * q;
        }
    }
    Ok(CategoricalEstimate { support, probs, initial, episodes, converged, max_mass_error })
}
