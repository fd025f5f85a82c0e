use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mdp::{Mdp, Outcome};

/// Small random MDP for oracle cross-checks: at most 6 states, 3 actions
/// and horizon 4, one or two successors per row, probabilities on a 0.01
/// grid and rewards on a 0.25 grid. About one state in four is terminal.
pub fn random_small_mdp(seed: u64) -> Mdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_states = rng.gen_range(1..=6);
    let num_actions = rng.gen_range(1..=3);
    let horizon = rng.gen_range(1..=4);
    let gamma = [0.5, 0.9, 1.0][rng.gen_range(0..3)];
    let terminal: std::collections::BTreeSet<usize> =
        (1..num_states).filter(|_| rng.gen_bool(0.25)).collect();

    let split = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        if n == 1 {
            vec![1.0]
        } else {
            let cents = rng.gen_range(1..100);
            vec![cents as f64 / 100.0, (100 - cents) as f64 / 100.0]
        }
    };

    let mut transitions = Vec::with_capacity(num_states);
    for s in 0..num_states {
        if terminal.contains(&s) {
            transitions.push(vec![vec![Outcome::scalar(s, 1.0, 0.0)]; num_actions]);
            continue;
        }
        let row = (0..num_actions)
            .map(|_| {
                let k = rng.gen_range(1..=2.min(num_states));
                let nexts = sample(&mut rng, num_states, k).into_vec();
                let probs = split(&mut rng, k);
                nexts
                    .into_iter()
                    .zip(probs)
                    .map(|(next, prob)| Outcome::scalar(next, prob, rng.gen_range(-8..=8) as f64 * 0.25))
                    .collect()
            })
            .collect();
        transitions.push(row);
    }

    let starts = rng.gen_range(1..=2.min(num_states));
    let mut initial_dist = vec![0.0; num_states];
    let chosen = sample(&mut rng, num_states, starts).into_vec();
    for (s, p) in chosen.into_iter().zip(split(&mut rng, starts)) {
        initial_dist[s] = p;
    }

    Mdp {
        num_states,
        num_actions,
        reward_dim: 1,
        gamma,
        horizon,
        initial_dist,
        terminal,
        transitions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_mdps_are_valid_and_reproducible() {
        for seed in 0..200 {
            let m = random_small_mdp(seed);
            assert!(m.validate().is_ok(), "seed {seed}: {}", m.validate());
            assert_eq!(m, random_small_mdp(seed));
        }
    }
}
