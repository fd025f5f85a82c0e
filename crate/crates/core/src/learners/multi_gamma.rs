use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::policy::Augmentation;
use crate::solver::{evaluate, CoverageSet, Criterion, MdpRef, Solver};
use crate::utility::{eval_discount_utility, Family, ParameterGrid, UtilitySpec};

use super::{epsilon_greedy, sample_outcome, sample_start, ConditionedQTable, LogRow, QTable, TrainConfig, TrainingLog};

/// Time-indexed Q-learning for every discount of `gamma_grid` at once.
/// Episodes act epsilon-greedily for a uniformly drawn discount; each
/// transition updates table `j` towards `r + gamma_j * max_a' Q_j(t+1, s', a')`.
pub fn train_multi_gamma_q(
    mdp: &Mdp,
    gamma_grid: &ParameterGrid,
    config: &TrainConfig,
) -> Result<(ConditionedQTable, CoverageSet, TrainingLog)> {
    config.validate()?;
    mdp.require_scalar()?;
    if gamma_grid.family() != Family::Discount {
        return Err(Error::WrongFamily {
            family: gamma_grid.family().name(),
            reason: "the multi-gamma learner needs a discount grid",
        });
    }
    let specs = gamma_grid.points();
    let gammas: Vec<f64> = gamma_grid.values();
    let k = specs.len();
    let aug = Augmentation::Timestep;
    let mut tables: Vec<QTable> = (0..k).map(|_| QTable::new(aug, mdp.num_actions, config.initial_q)).collect();
    let mut counts = vec![0u64; k];
    let mut log = TrainingLog::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rewards = Vec::with_capacity(mdp.horizon);

    for episode in 0..config.episodes {
        let b = rng.gen_range(0..k);
        let mut s = sample_start(mdp, &mut rng)?;
        let mut t = 0;
        rewards.clear();
        while t < mdp.horizon && !mdp.is_terminal(s) {
            let key = aug.key(t, s, 0);
            let a = epsilon_greedy(&tables[b], key, config.epsilon, mdp.num_actions, &mut rng);
            let o = &mdp.outcomes(s, a)[sample_outcome(mdp, s, a, &mut rng)?];
            let r = o.reward[0];
            let last = t + 1 == mdp.horizon || mdp.is_terminal(o.next);
            let next_key = aug.key(t + 1, o.next, 0);
            for (j, table) in tables.iter_mut().enumerate() {
                let target = r + if last { 0.0 } else { gammas[j] * table.max(next_key) };
                counts[j] += 1;
                table.update(key, a, target, config);
            }
            rewards.push(r);
            s = o.next;
            t += 1;
        }
        let ret = eval_discount_utility(&specs[b], &rewards)?;
        log.rows.push(LogRow { episode, grid_point: b, param: gammas[b], ret, utility: ret });
    }

    let mut results = Vec::with_capacity(k);
    for (table, spec) in tables.iter().zip(specs) {
        let policy = table.greedy_policy(mdp).with_meta("multi-gamma-q", Some(spec.clone()));
        let record = evaluate(mdp, &policy, spec, Criterion::PerGamma)?;
        results.push((policy, record));
    }
    let set = CoverageSet::from_records(MdpRef::custom(mdp), Criterion::PerGamma, Solver::MultiGammaQ, gamma_grid, results);
    let q = ConditionedQTable {
        grid: specs.to_vec(),
        tables,
        config: config.clone(),
        target_computations: counts,
    };
    Ok((q, set, log))
}

/// Largest gap between the learned greedy value `max_a Q_j(t, s, a)` and the
/// exact optimal value along the exact optimal path of each table.
pub fn max_value_error(mdp: &Mdp, q: &ConditionedQTable) -> Result<f64> {
    let mut worst = 0.0f64;
    for (table, spec) in q.tables.iter().zip(&q.grid) {
        let UtilitySpec::Discount { gamma } = *spec else {
            return Err(Error::WrongFamily { family: spec.family().name(), reason: "expected a discount grid" });
        };
        let (exact, v) = crate::solver::value_iteration(mdp, Some(gamma))?;
        let exact = exact.restricted(mdp)?;
        for key in exact.actions.keys() {
            let (t, s) = (key.timestep as usize, key.state as usize);
            worst = worst.max((table.max(*key) - v[t][s]).abs());
        }
    }
    Ok(worst)
}
