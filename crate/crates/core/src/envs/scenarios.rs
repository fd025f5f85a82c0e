//! The shipped desk-scale scenarios.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::mdp::{Mdp, Outcome};

fn scalar_mdp(
    num_actions: usize,
    gamma: f64,
    horizon: usize,
    start: usize,
    terminal: BTreeSet<usize>,
    rows: Vec<Vec<Vec<Outcome>>>,
) -> Mdp {
    let mut initial_dist = vec![0.0; rows.len()];
    initial_dist[start] = 1.0;
    Mdp {
        num_states: rows.len(),
        num_actions,
        reward_dim: 1,
        gamma,
        horizon,
        initial_dist,
        terminal,
        transitions: rows,
    }
}

fn absorbing(num_actions: usize, s: usize) -> Vec<Vec<Outcome>> {
    vec![vec![Outcome::scalar(s, 1.0, 0.0)]; num_actions]
}

/// One-step bandit: state 0 pulls an arm, every arm ends in terminal state 1.
/// Each arm is a list of `(probability, reward)` outcomes.
pub fn bandit(arms: &[Vec<(f64, f64)>]) -> Mdp {
    let n = arms.len();
    let pulls = arms
        .iter()
        .map(|arm| arm.iter().map(|&(p, r)| Outcome::scalar(1, p, r)).collect())
        .collect();
    scalar_mdp(n, 1.0, 1, 0, [1].into(), vec![pulls, absorbing(n, 1)])
}

pub mod gold_nuggets {
    pub const LEFT: usize = 0;
    pub const RIGHT: usize = 1;
    pub const COLLECT: usize = 2;
}

/// Corridor of `corridor_len` cells plus a terminal state at index
/// `corridor_len`. The agent starts in cell 0 and can step left, step right
/// (walls hold it in place) or collect; collecting on a nugget cell pays the
/// nugget's value and ends the episode, elsewhere it does nothing.
pub fn make_gold_nuggets(
    corridor_len: usize,
    near_pos: usize,
    near_val: f64,
    far_pos: usize,
    far_val: f64,
    horizon: usize,
    gamma: f64,
) -> Result<Mdp> {
    use gold_nuggets::*;
    if !(0 < near_pos && near_pos < far_pos && far_pos < corridor_len) {
        return Err(Error::InvalidGeometry(format!(
            "need 0 < near_pos < far_pos < corridor_len, got {near_pos}, {far_pos}, {corridor_len}"
        )));
    }
    if !(near_val < far_val) {
        return Err(Error::InvalidGeometry(format!("near_val {near_val} must be below far_val {far_val}")));
    }
    if horizon < far_pos {
        return Err(Error::InvalidGeometry(format!("horizon {horizon} cannot reach far_pos {far_pos}")));
    }
    check_gamma(gamma)?;
    let term = corridor_len;
    let mut rows = Vec::with_capacity(corridor_len + 1);
    for pos in 0..corridor_len {
        let mut row = vec![Vec::new(); 3];
        row[LEFT] = vec![Outcome::scalar(pos.saturating_sub(1), 1.0, 0.0)];
        row[RIGHT] = vec![Outcome::scalar((pos + 1).min(corridor_len - 1), 1.0, 0.0)];
        row[COLLECT] = vec![if pos == near_pos {
            Outcome::scalar(term, 1.0, near_val)
        } else if pos == far_pos {
            Outcome::scalar(term, 1.0, far_val)
        } else {
            Outcome::scalar(pos, 1.0, 0.0)
        }];
        rows.push(row);
    }
    rows.push(absorbing(3, term));
    Ok(scalar_mdp(3, gamma, horizon, 0, [term].into(), rows))
}

pub fn gold_nuggets_default() -> Mdp {
    make_gold_nuggets(8, 1, 2.0, 6, 10.0, 10, 0.9).expect("default geometry is valid")
}

pub mod mining_world {
    pub const NORMAL: usize = 0;
    pub const RISKY: usize = 1;
}

/// A single mine state visited for `horizon` steps. Normal operation yields
/// `base_yield` units; risky excavation yields `risky_yield_hi` with
/// probability `p_hi`, otherwise `risky_yield_lo`. Rewards are units mined,
/// undiscounted.
pub fn make_mining_world(
    base_yield: f64,
    risky_yield_hi: f64,
    risky_yield_lo: f64,
    p_hi: f64,
    horizon: usize,
) -> Result<Mdp> {
    if !(risky_yield_lo < base_yield && base_yield < risky_yield_hi) {
        return Err(Error::InvalidParams(format!(
            "need risky_yield_lo < base_yield < risky_yield_hi, got {risky_yield_lo}, {base_yield}, {risky_yield_hi}"
        )));
    }
    if !(p_hi > 0.0 && p_hi < 1.0) {
        return Err(Error::InvalidParams(format!("p_hi must lie in (0, 1), got {p_hi}")));
    }
    check_horizon(horizon)?;
    let row = vec![
        vec![Outcome::scalar(0, 1.0, base_yield)],
        vec![Outcome::scalar(0, p_hi, risky_yield_hi), Outcome::scalar(0, 1.0 - p_hi, risky_yield_lo)],
    ];
    Ok(scalar_mdp(2, 1.0, horizon, 0, BTreeSet::new(), vec![row]))
}

pub fn mining_world_default() -> Mdp {
    make_mining_world(2.0, 6.0, 0.0, 0.5, 5).expect("default parameters are valid")
}

pub mod risky_path {
    /// At the fork: enter the safe corridor. In the corridor: move forward.
    pub const SAFE: usize = 0;
    /// At the fork: take the risky shortcut. In the corridor: move back.
    pub const RISKY: usize = 1;
    pub const FORWARD: usize = 0;
    pub const BACK: usize = 1;
}

/// State 0 is a fork, states `1..safe_len` a corridor and state `safe_len`
/// the terminal. The safe route takes `safe_len` steps and pays
/// `safe_reward` on the last one. The risky shortcut is a single step that
/// pays `risky_reward`, or falls into the terminal with nothing with
/// probability `hazard_prob`.
pub fn make_risky_path(
    safe_len: usize,
    safe_reward: f64,
    risky_reward: f64,
    hazard_prob: f64,
    horizon: usize,
) -> Result<Mdp> {
    use risky_path::*;
    if !(hazard_prob > 0.0 && hazard_prob < 1.0) {
        return Err(Error::InvalidParams(format!("hazard_prob must lie in (0, 1), got {hazard_prob}")));
    }
    if safe_len < 1 {
        return Err(Error::InvalidParams("safe_len must be at least 1".into()));
    }
    if horizon < safe_len {
        return Err(Error::InvalidParams(format!("horizon {horizon} is shorter than the safe route ({safe_len})")));
    }
    let term = safe_len;
    let advance = |s: usize| {
        if s + 1 == term {
            Outcome::scalar(term, 1.0, safe_reward)
        } else {
            Outcome::scalar(s + 1, 1.0, 0.0)
        }
    };
    let mut rows = Vec::with_capacity(safe_len + 1);
    let mut fork = vec![Vec::new(); 2];
    fork[SAFE] = vec![advance(0)];
    fork[RISKY] = vec![
        Outcome::scalar(term, 1.0 - hazard_prob, risky_reward),
        Outcome::scalar(term, hazard_prob, 0.0),
    ];
    rows.push(fork);
    for s in 1..safe_len {
        let mut row = vec![Vec::new(); 2];
        row[FORWARD] = vec![advance(s)];
        row[BACK] = vec![Outcome::scalar(s - 1, 1.0, 0.0)];
        rows.push(row);
    }
    rows.push(absorbing(2, term));
    Ok(scalar_mdp(2, 1.0, horizon, 0, [term].into(), rows))
}

pub fn risky_path_default() -> Mdp {
    make_risky_path(4, 6.0, 10.0, 0.3, 6).expect("default parameters are valid")
}

pub mod harvest_world {
    pub const HARVEST: usize = 0;
    pub const IDLE: usize = 1;
}

/// State `k` counts units harvested so far. Harvesting adds a unit and pays
/// 1 until `max_units` is reached, after which it pays nothing.
pub fn make_harvest_world(max_units: usize, horizon: usize) -> Result<Mdp> {
    use harvest_world::*;
    check_horizon(horizon)?;
    if max_units > horizon {
        return Err(Error::InvalidParams(format!("max_units {max_units} exceeds horizon {horizon}")));
    }
    let rows = (0..=max_units)
        .map(|k| {
            let mut row = vec![Vec::new(); 2];
            row[HARVEST] = vec![if k < max_units {
                Outcome::scalar(k + 1, 1.0, 1.0)
            } else {
                Outcome::scalar(k, 1.0, 0.0)
            }];
            row[IDLE] = vec![Outcome::scalar(k, 1.0, 0.0)];
            row
        })
        .collect();
    Ok(scalar_mdp(2, 1.0, horizon, 0, BTreeSet::new(), rows))
}

pub fn harvest_world_default() -> Mdp {
    make_harvest_world(5, 5).expect("default parameters are valid")
}

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("gamma must lie in [0, 1], got {gamma}")))
    }
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        Err(Error::InvalidParams("horizon must be at least 1".into()))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{Augmentation, Policy};
    use crate::solver::{count_policies, enumerate_return_distribution, value_iteration, DEFAULT_POLICY_CAP};
    use crate::distribution::ReturnDistribution;

    fn defaults() -> Vec<Mdp> {
        vec![gold_nuggets_default(), mining_world_default(), risky_path_default(), harvest_world_default()]
    }

    #[test]
    fn defaults_validate_and_fit_caps() {
        for m in defaults() {
            assert!(m.validate().is_ok(), "{}", m.validate());
            for aug in [Augmentation::None, Augmentation::Timestep, Augmentation::EXACT] {
                let n = count_policies(&m, aug, DEFAULT_POLICY_CAP).unwrap();
                assert!(n >= 1 && n <= DEFAULT_POLICY_CAP);
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        for (a, b) in defaults().into_iter().zip(defaults()) {
            assert_eq!(a.to_json(), b.to_json());
        }
    }

    #[test]
    fn gold_nuggets_discount_picks_nugget() {
        let m = gold_nuggets_default();
        let (near, v) = value_iteration(&m, Some(0.1)).unwrap();
        assert_eq!(near.action(0, 0, 0).unwrap(), gold_nuggets::RIGHT);
        assert_eq!(near.action(1, 1, 0).unwrap(), gold_nuggets::COLLECT);
        assert!((v[0][0] - 0.2).abs() < 1e-12);
        let (far, v) = value_iteration(&m, Some(0.99)).unwrap();
        assert_eq!(far.action(1, 1, 0).unwrap(), gold_nuggets::RIGHT);
        assert_eq!(far.action(6, 6, 0).unwrap(), gold_nuggets::COLLECT);
        assert!((v[0][0] - 10.0 * 0.99f64.powi(6)).abs() < 1e-12);
    }

    #[test]
    fn gold_nuggets_geometry_errors() {
        assert!(matches!(make_gold_nuggets(8, 6, 2.0, 1, 10.0, 10, 0.9), Err(Error::InvalidGeometry(_))));
        assert!(matches!(make_gold_nuggets(6, 1, 2.0, 6, 10.0, 10, 0.9), Err(Error::InvalidGeometry(_))));
        assert!(matches!(make_gold_nuggets(8, 1, 2.0, 6, 10.0, 5, 0.9), Err(Error::InvalidGeometry(_))));
        assert!(matches!(make_gold_nuggets(8, 1, 12.0, 6, 10.0, 10, 0.9), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn mining_all_normal_meets_contract() {
        let m = mining_world_default();
        let p = Policy::constant(&m, Augmentation::None, mining_world::NORMAL);
        assert_eq!(enumerate_return_distribution(&m, &p).unwrap(), ReturnDistribution::point(10.0));
        let risky = Policy::constant(&m, Augmentation::None, mining_world::RISKY);
        let d = enumerate_return_distribution(&m, &risky).unwrap();
        assert_eq!(d.len(), 6);
        for atom in d.atoms() {
            assert_eq!(atom.value % 6.0, 0.0);
        }
        assert!(matches!(make_mining_world(2.0, 1.0, 0.0, 0.5, 5), Err(Error::InvalidParams(_))));
        assert!(matches!(make_mining_world(2.0, 6.0, 0.0, 1.0, 5), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn risky_path_distributions() {
        let m = risky_path_default();
        let safe = Policy::constant(&m, Augmentation::None, risky_path::SAFE);
        assert_eq!(enumerate_return_distribution(&m, &safe).unwrap(), ReturnDistribution::point(6.0));
        let risky = Policy::constant(&m, Augmentation::None, risky_path::RISKY);
        let d = enumerate_return_distribution(&m, &risky).unwrap();
        assert_eq!(d, ReturnDistribution::from_pairs([(0.0, 0.3), (10.0, 0.7)]).unwrap());
        assert!(matches!(make_risky_path(4, 6.0, 10.0, 0.0, 6), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn harvest_always_returns_max() {
        let m = harvest_world_default();
        let p = Policy::constant(&m, Augmentation::None, harvest_world::HARVEST);
        assert_eq!(enumerate_return_distribution(&m, &p).unwrap(), ReturnDistribution::point(5.0));
        assert!(matches!(make_harvest_world(6, 5), Err(Error::InvalidParams(_))));
    }
}
