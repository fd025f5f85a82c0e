use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::policy::{discount_factors, Augmentation};
use crate::solver::{evaluate, CoverageSet, Criterion, MdpRef, Solver};
use crate::utility::{eval_scalar_utility, AppliesTo, ParameterGrid, UtilitySpec};

use super::{epsilon_greedy, sample_outcome, sample_start, ConditionedQTable, LogRow, QTable, TrainConfig, TrainingLog};

/// One update-target computation, reported to the observer passed to
/// [`train_conditioned_q_observed`].
#[derive(Clone, Copy, Debug)]
pub struct TargetEvent<'a> {
    pub table: usize,
    /// Grid point whose policy generated the transition.
    pub behaviour: usize,
    /// Utility the target was computed with, if it needed one.
    pub utility: Option<&'a UtilitySpec>,
}

pub fn train_conditioned_q(
    mdp: &Mdp,
    grid: &ParameterGrid,
    criterion: Criterion,
    config: &TrainConfig,
) -> Result<(ConditionedQTable, CoverageSet, TrainingLog)> {
    train_conditioned_q_observed(mdp, grid, criterion, config, |_| {})
}

/// Q-learning with one table per grid point. Each episode follows an
/// epsilon-greedy policy for a uniformly drawn grid point, and every
/// transition updates every table.
///
/// Linear utilities learn time-indexed values of the discounted return.
/// Non-linear utilities (ESR only) learn over `(t, s, accumulated return)`
/// with zero intermediate reward and terminal target `u_j(acc)`.
pub fn train_conditioned_q_observed(
    mdp: &Mdp,
    grid: &ParameterGrid,
    criterion: Criterion,
    config: &TrainConfig,
    mut observe: impl FnMut(TargetEvent<'_>),
) -> Result<(ConditionedQTable, CoverageSet, TrainingLog)> {
    config.validate()?;
    mdp.require_scalar()?;
    let specs = grid.points();
    let family = grid.family();
    if family.applies_to() != AppliesTo::ScalarReturn {
        return Err(Error::WrongFamily {
            family: family.name(),
            reason: "the conditioned learner needs a utility of the total return",
        });
    }
    let linear = specs.iter().all(UtilitySpec::is_linear);
    match criterion {
        Criterion::Esr => {}
        Criterion::Ser if linear => {}
        _ => {
            return Err(Error::Config(format!(
                "the conditioned learner optimises ESR (or SER for linear utilities), not {criterion} with {family}"
            )))
        }
    }
    let aug = if linear { Augmentation::Timestep } else { Augmentation::EXACT };
    let discounts = discount_factors(mdp.gamma, mdp.horizon);
    let k = specs.len();
    let mut tables: Vec<QTable> = (0..k).map(|_| QTable::new(aug, mdp.num_actions, config.initial_q)).collect();
    let mut counts = vec![0u64; k];
    let mut log = TrainingLog::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    for episode in 0..config.episodes {
        let b = rng.gen_range(0..k);
        let mut s = sample_start(mdp, &mut rng)?;
        let mut mem = 0i64;
        let mut ret = 0.0;
        let mut t = 0;
        while t < mdp.horizon && !mdp.is_terminal(s) {
            let key = aug.key(t, s, mem);
            let a = epsilon_greedy(&tables[b], key, config.epsilon, mdp.num_actions, &mut rng);
            let o = &mdp.outcomes(s, a)[sample_outcome(mdp, s, a, &mut rng)?];
            let r = o.reward[0];
            let mem2 = mem + aug.mem_increment(discounts[t] * r);
            let last = t + 1 == mdp.horizon || mdp.is_terminal(o.next);
            let next_key = aug.key(t + 1, o.next, mem2);
            for (j, table) in tables.iter_mut().enumerate() {
                let target = if linear {
                    observe(TargetEvent { table: j, behaviour: b, utility: None });
                    r + if last { 0.0 } else { mdp.gamma * table.max(next_key) }
                } else if last {
                    observe(TargetEvent { table: j, behaviour: b, utility: Some(&specs[j]) });
                    eval_scalar_utility(&specs[j], aug.mem_value(mem2))?
                } else {
                    observe(TargetEvent { table: j, behaviour: b, utility: None });
                    table.max(next_key)
                };
                counts[j] += 1;
                table.update(key, a, target, config);
            }
            ret += discounts[t] * r;
            mem = mem2;
            s = o.next;
            t += 1;
        }
        log.rows.push(LogRow {
            episode,
            grid_point: b,
            param: specs[b].param(),
            ret,
            utility: eval_scalar_utility(&specs[b], ret)?,
        });
    }

    let mut results = Vec::with_capacity(k);
    for (table, spec) in tables.iter().zip(specs) {
        let policy = table.greedy_policy(mdp).with_meta("conditioned-q", Some(spec.clone()));
        let record = evaluate(mdp, &policy, spec, criterion)?;
        results.push((policy, record));
    }
    let set = CoverageSet::from_records(MdpRef::custom(mdp), criterion, Solver::ConditionedQ, grid, results);
    let q = ConditionedQTable { grid: specs.to_vec(), tables, config: config.clone(), target_computations: counts };
    Ok((q, set, log))
}
