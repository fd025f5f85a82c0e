//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p ubrl-core --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use ubrl_core::envs::{self, gold_nuggets, risky_path};
use ubrl_core::learners::{
    cvar_policy_sweep, evaluate_distribution_td, max_value_error, train_conditioned_q, train_multi_gamma_q,
    SupportConfig, SweepMode, TrainConfig,
};
use ubrl_core::policy::{Augmentation, Policy};
use ubrl_core::solver::{
    augmented_value_iteration, count_policies, criterion_value, enumerate_policies, enumerate_return_distribution,
    evaluate, evaluate_esr, evaluate_ser, for_each_policy, solve_coverage_set, value_iteration, OptimalActions,
};
use ubrl_core::utility::cvar;
use ubrl_core::{make_grid, CoverageSet, Criterion, Family, Mdp, ParameterGrid, ReturnDistribution, Solver, UtilitySpec};

/// Agreement between exact solvers and evaluators.
const EXACT_TOL: f64 = 1e-9;
const RANDOM_MDPS: usize = 50;
/// Random MDPs whose time-indexed policy count exceeds this are skipped.
const RANDOM_POLICY_CAP: u64 = 50_000;
/// Learned multi-gamma values within `Q_TOL_FACTOR * r_max * N` of exact.
const Q_TOL_FACTOR: f64 = 0.05;
/// Fraction of grid points whose learned policy must be optimal.
const MATCH_FRACTION: f64 = 0.95;
/// Value gap allowed per grid point, relative to the best-minus-worst
/// policy value at that point.
const GAP_FRACTION: f64 = 0.02;
const TV_TOL: f64 = 0.05;
const MASS_TOL: f64 = 1e-9;
const SEED: u64 = 20240601;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= EXACT_TOL
}

fn err(e: ubrl_core::Error) -> String {
    e.to_string()
}

fn random_mdps() -> Vec<(u64, Mdp)> {
    let mut out = Vec::new();
    let mut seed = 0;
    while out.len() < RANDOM_MDPS {
        let m = envs::random_small_mdp(seed);
        if count_policies(&m, Augmentation::Timestep, RANDOM_POLICY_CAP).is_ok() {
            out.push((seed, m));
        }
        seed += 1;
    }
    out
}

fn identity_reduction() -> Check {
    let mut worst = 0.0f64;
    for (seed, m) in random_mdps() {
        let e = enumerate_policies(&m, &UtilitySpec::Identity, Criterion::Ser).map_err(err)?;
        let best = e.record.value;
        let ser = evaluate_ser(&m, &e.best, &UtilitySpec::Identity).map_err(err)?.value;
        let esr = evaluate_esr(&m, &e.best, &UtilitySpec::Identity).map_err(err)?.value;
        let (vi_policy, v) = value_iteration(&m, None).map_err(err)?;
        let vi: f64 = m.initial_states().map(|(s, p)| p * v[0][s]).sum();
        let vi_ser = evaluate_ser(&m, &vi_policy, &UtilitySpec::Identity).map_err(err)?.value;
        let embedded = ubrl_core::embed_scalar_as_momdp(&m);
        let emb = enumerate_policies(&embedded, &UtilitySpec::Identity, Criterion::Esr).map_err(err)?.record.value;
        for (name, x) in [("ser", ser), ("esr", esr), ("vi", vi), ("vi policy", vi_ser), ("embedded", emb)] {
            worst = worst.max((x - best).abs());
            ensure(close(x, best), || format!("seed {seed}: {name} {x} vs enumeration {best}"))?;
        }
    }
    Ok(format!("{RANDOM_MDPS} random MDPs, max deviation {worst:.1e} (tol {EXACT_TOL:.0e})"))
}

fn ser_esr_split() -> Check {
    let m = envs::bandit(&[vec![(1.0, 5.0)], vec![(0.5, 0.0), (0.5, 10.0)]]);
    let sat = UtilitySpec::Satisficing { target: 5.0 };
    let mut ser = Vec::new();
    let mut esr = Vec::new();
    for arm in 0..2 {
        let p = Policy::constant(&m, Augmentation::None, arm);
        ser.push(evaluate_ser(&m, &p, &sat).map_err(err)?.value);
        esr.push(evaluate_esr(&m, &p, &sat).map_err(err)?.value);
    }
    ensure(ser == [0.0, 0.0], || format!("SER values {ser:?}, expected [0, 0]"))?;
    ensure(esr == [0.0, -5.0], || format!("ESR values {esr:?}, expected [0, -5]"))?;

    let linear = [UtilitySpec::Identity, UtilitySpec::Affine { scale: 2.0, offset: 1.0 }];
    let mut policies = 0u64;
    let mut worst = 0.0f64;
    for (seed, m) in random_mdps() {
        let mut failure = None;
        for_each_policy(&m, Augmentation::Timestep, m.gamma, RANDOM_POLICY_CAP, |actions, dist| {
            let p = Policy::new(Augmentation::Timestep, actions.clone());
            for spec in &linear {
                let s = evaluate_ser(&m, &p, spec)?.value;
                let e = evaluate_esr(&m, &p, spec)?.value;
                let (s2, e2) = (criterion_value(Criterion::Ser, spec, dist)?, criterion_value(Criterion::Esr, spec, dist)?);
                for d in [(s - e).abs(), (s2 - e2).abs(), (s - s2).abs()] {
                    worst = worst.max(d);
                    if d > EXACT_TOL && failure.is_none() {
                        failure = Some(format!("seed {seed}: SER {s} vs ESR {e} under {spec:?}"));
                    }
                }
            }
            policies += 1;
            Ok(())
        })
        .map_err(err)?;
        if let Some(f) = failure {
            return Err(f);
        }
    }
    Ok(format!(
        "bandit SER {ser:?} ESR {esr:?}; linear SER = ESR on {policies} policies of {RANDOM_MDPS} MDPs (max {worst:.1e})"
    ))
}

fn mining_coverage() -> Check {
    let m = envs::mining_world_default();
    let grid = make_grid(Family::Mining, 0.0, 20.0, 21).map_err(err)?;
    let avi = solve_coverage_set(&m, &grid, Criterion::Esr, Solver::AugmentedVi { bin_width: 0.0 }).map_err(err)?;
    let exact = solve_coverage_set(&m, &grid, Criterion::Esr, Solver::Exact).map_err(err)?;
    for set in [&avi, &exact] {
        ensure(set.distinct_indices().len() == 2, || {
            format!("{}: {} distinct policies", set.solver.name(), set.distinct_indices().len())
        })?;
        ensure(set.switch_indices().len() == 1, || format!("{}: switches {:?}", set.solver.name(), set.switch_indices()))?;
    }
    ensure(avi.switch_indices() == exact.switch_indices(), || "solvers disagree on the switch point".into())?;
    for (i, spec) in grid.points().iter().enumerate() {
        let e = enumerate_policies(&m, spec, Criterion::Esr).map_err(err)?;
        for set in [&avi, &exact] {
            let v = set.entries[i].value;
            ensure(close(v, e.record.value), || format!("h = {}: {} value {v} vs enumeration {}", spec.param(), set.solver.name(), e.record.value))?;
        }
    }
    let h_star = avi.switch_indices()[0];
    let v = |i: usize| avi.entries[i].value;
    Ok(format!(
        "2 distinct policies, switch at h* = {} (value {} at h = 0, {} at h = 20); all 21 points optimal",
        grid.points()[h_star].param(),
        v(0),
        v(20)
    ))
}

fn cvar_sweep() -> Check {
    let m = envs::risky_path_default();
    let alphas: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
    let mut policies = 0;
    for_each_policy(&m, Augmentation::None, m.gamma, 10_000, |actions, dist| {
        let exact = enumerate_return_distribution(&m, &Policy::new(Augmentation::None, actions.clone()))?;
        assert!(exact.total_variation(dist, 1e-12) < 1e-12);
        let values: Vec<f64> = alphas.iter().map(|&a| cvar(a, &exact)).collect::<Result<_, _>>()?;
        assert!(values.windows(2).all(|w| w[0] <= w[1] + EXACT_TOL), "CVaR not monotone: {values:?}");
        assert!(close(values[99], exact.mean()), "CVaR_1 {} vs mean {}", values[99], exact.mean());
        policies += 1;
        Ok(())
    })
    .map_err(err)?;

    let pick = |alpha: f64| -> Result<(usize, ReturnDistribution), String> {
        let set = cvar_policy_sweep(&m, &make_grid(Family::Cvar, alpha, alpha, 1).map_err(err)?, &SweepMode::ExactEnum)
            .map_err(err)?;
        let p = &set.entries[0].policy;
        Ok((p.action(0, 0, 0).map_err(err)?, enumerate_return_distribution(&m, p).map_err(err)?))
    };
    let (low, low_dist) = pick(0.1)?;
    let (high, high_dist) = pick(1.0)?;
    ensure(low == risky_path::SAFE && low_dist == ReturnDistribution::point(6.0), || {
        format!("alpha 0.1 picked action {low} with {low_dist:?}")
    })?;
    let risky = ReturnDistribution::from_pairs([(0.0, 0.3), (10.0, 0.7)]).map_err(err)?;
    ensure(high == risky_path::RISKY && high_dist == risky, || format!("alpha 1 picked action {high} with {high_dist:?}"))?;
    Ok(format!(
        "{policies} stationary policies monotone in alpha, CVaR_1 = mean; alpha 0.1 -> safe (CVaR {}), alpha 1 -> risky (CVaR {})",
        cvar(0.1, &low_dist).map_err(err)?,
        cvar(1.0, &high_dist).map_err(err)?
    ))
}

fn multi_gamma() -> Check {
    let m = envs::gold_nuggets_default();
    let (near, _) = value_iteration(&m, Some(0.1)).map_err(err)?;
    let (far, _) = value_iteration(&m, Some(0.99)).map_err(err)?;
    let (near, far) = (near.restricted(&m).map_err(err)?, far.restricted(&m).map_err(err)?);
    ensure(near.action(1, 1, 0).ok() == Some(gold_nuggets::COLLECT), || format!("gamma 0.1 policy {near}"))?;
    ensure(far.action(6, 6, 0).ok() == Some(gold_nuggets::COLLECT), || format!("gamma 0.99 policy {far}"))?;

    let grid = make_grid(Family::Discount, 0.1, 0.99, 2).map_err(err)?;
    let config = TrainConfig::for_environment("gold-nuggets", SEED).map_err(err)?;
    let (q, set, _) = train_multi_gamma_q(&m, &grid, &config).map_err(err)?;
    ensure(set.entries[0].policy.actions == near.actions, || format!("learned gamma 0.1 policy {}", set.entries[0].policy))?;
    ensure(set.entries[1].policy.actions == far.actions, || format!("learned gamma 0.99 policy {}", set.entries[1].policy))?;
    let tol = Q_TOL_FACTOR * m.max_abs_reward() * m.horizon as f64;
    let q_err = max_value_error(&m, &q).map_err(err)?;
    ensure(q_err <= tol, || format!("Q error {q_err} > {tol}"))?;
    Ok(format!(
        "near at 0.1, far at 0.99; learner ({} episodes, seed {SEED}) reproduces both, max |Q - V| {q_err:.2e} (tol {tol})",
        config.episodes
    ))
}

fn satisficing() -> Check {
    let m = envs::harvest_world_default();
    let grid = make_grid(Family::Satisficing, 0.0, 5.0, 6).map_err(err)?;
    let mut exact = Vec::new();
    for spec in grid.points() {
        let (policy, values) = augmented_value_iteration(&m, spec, 0.0).map_err(err)?;
        let rec = evaluate_esr(&m, &policy, spec).map_err(err)?;
        let omega = spec.param();
        ensure(values.value == 0.0 && rec.value == 0.0, || format!("omega {omega}: value {}", rec.value))?;
        ensure(rec.distribution == Some(ReturnDistribution::point(omega)), || {
            format!("omega {omega}: return distribution {:?}", rec.distribution)
        })?;
        exact.push(policy);
    }
    let config = TrainConfig::for_environment("harvest-world", SEED).map_err(err)?;
    let (_, learned, _) = train_conditioned_q(&m, &grid, Criterion::Esr, &config).map_err(err)?;
    for (i, (entry, policy)) in learned.entries.iter().zip(&exact).enumerate() {
        ensure(entry.policy.actions == policy.actions, || format!("omega {i}: learned {} vs {}", entry.policy, policy))?;
    }
    let seven = UtilitySpec::Satisficing { target: 7.0 };
    let e = enumerate_policies(&m, &seven, Criterion::Esr).map_err(err)?;
    ensure(e.record.expected_return == 5.0 && e.record.value == -2.0, || {
        format!("omega 7: return {}, ESR {}", e.record.expected_return, e.record.value)
    })?;
    Ok(format!(
        "omega 0..5 value 0 with return exactly omega; learner matches all 6; omega 7 -> return {}, ESR {}",
        e.record.expected_return, e.record.value
    ))
}

struct Soundness {
    label: &'static str,
    points: usize,
    matched: usize,
    worst_gap_ratio: f64,
}

fn check_learned(mdp: &Mdp, grid: &ParameterGrid, criterion: Criterion, learned: &CoverageSet, label: &'static str) -> Result<Soundness, String> {
    let mut matched = 0;
    let mut worst_gap_ratio = 0.0f64;
    for (i, spec) in grid.points().iter().enumerate() {
        let entry = &learned.entries[i];
        let e = enumerate_policies(mdp, spec, criterion).map_err(err)?;
        let range = e.record.value - e.worst_value();
        let optimal = match criterion {
            Criterion::Cvar => entry.policy.actions == e.best.actions,
            _ => OptimalActions::new(mdp, spec, criterion).map_err(err)?.is_optimal_policy(&entry.policy).map_err(err)?,
        };
        if optimal {
            matched += 1;
        }
        let value = evaluate(mdp, &entry.policy, spec, criterion).map_err(err)?.value;
        let gap = e.record.value - value;
        ensure(gap >= -EXACT_TOL, || format!("{label}: learned value {value} beats enumeration {}", e.record.value))?;
        let allowed = GAP_FRACTION * range;
        ensure(gap <= allowed + EXACT_TOL, || {
            format!("{label}, param {}: gap {gap} > {allowed} (range {range})", spec.param())
        })?;
        if range > 0.0 {
            worst_gap_ratio = worst_gap_ratio.max(gap / range);
        }
    }
    Ok(Soundness { label, points: grid.len(), matched, worst_gap_ratio })
}

fn learner_soundness() -> Check {
    let mut reports = Vec::new();

    let gold = envs::gold_nuggets_default();
    let grid = make_grid(Family::Discount, 0.1, 0.99, 10).map_err(err)?;
    let config = TrainConfig::for_environment("gold-nuggets", SEED).map_err(err)?;
    let (_, set, _) = train_multi_gamma_q(&gold, &grid, &config).map_err(err)?;
    reports.push(check_learned(&gold, &grid, Criterion::PerGamma, &set, "gold-nuggets/discount")?);

    let mining = envs::mining_world_default();
    let grid = make_grid(Family::Mining, 0.0, 20.0, 21).map_err(err)?;
    let config = TrainConfig::for_environment("mining-world", SEED).map_err(err)?;
    let (_, set, _) = train_conditioned_q(&mining, &grid, Criterion::Esr, &config).map_err(err)?;
    reports.push(check_learned(&mining, &grid, Criterion::Esr, &set, "mining-world/mining")?);

    let harvest = envs::harvest_world_default();
    let grid = make_grid(Family::Satisficing, 0.0, 5.0, 6).map_err(err)?;
    let config = TrainConfig::for_environment("harvest-world", SEED).map_err(err)?;
    let (_, set, _) = train_conditioned_q(&harvest, &grid, Criterion::Esr, &config).map_err(err)?;
    reports.push(check_learned(&harvest, &grid, Criterion::Esr, &set, "harvest-world/satisficing")?);

    let risky = envs::risky_path_default();
    let grid = make_grid(Family::Cvar, 0.05, 0.95, 10).map_err(err)?;
    let set = cvar_policy_sweep(&risky, &grid, &SweepMode::DistTd(SupportConfig { seed: SEED, ..SupportConfig::default() }))
        .map_err(err)?;
    reports.push(check_learned(&risky, &grid, Criterion::Cvar, &set, "risky-path/cvar")?);

    let mut parts = Vec::new();
    for r in &reports {
        let frac = r.matched as f64 / r.points as f64;
        ensure(frac >= MATCH_FRACTION, || format!("{}: {}/{} grid points optimal", r.label, r.matched, r.points))?;
        parts.push(format!("{} {}/{} (gap {:.3})", r.label, r.matched, r.points, r.worst_gap_ratio));
    }
    Ok(parts.join(", "))
}

fn distributional() -> Check {
    let m = envs::risky_path_default();
    let mut worst_tv = 0.0f64;
    let mut worst_mass = 0.0f64;
    let mut count = 0;
    let mut candidates = Vec::new();
    for_each_policy(&m, Augmentation::None, m.gamma, 10_000, |actions, _| {
        candidates.push(Policy::new(Augmentation::None, actions.clone()));
        Ok(())
    })
    .map_err(err)?;
    for (i, p) in candidates.iter().enumerate() {
        let config = SupportConfig { seed: SEED + i as u64, ..SupportConfig::default() };
        let est = evaluate_distribution_td(&m, p, &config).map_err(err)?;
        let exact = enumerate_return_distribution(&m, p).map_err(err)?;
        let tv = est.initial_distribution().map_err(err)?.total_variation(&exact, 1e-9);
        ensure(tv < TV_TOL, || format!("policy {p}: TV {tv}"))?;
        ensure(est.max_mass_error <= MASS_TOL, || format!("policy {p}: mass error {}", est.max_mass_error))?;
        worst_tv = worst_tv.max(tv);
        worst_mass = worst_mass.max(est.max_mass_error);
        count += 1;
    }
    Ok(format!("{count} stationary policies, max TV {worst_tv:.4} (tol {TV_TOL}), max mass error {worst_mass:.1e}"))
}

fn determinism() -> Check {
    let runs = || -> Result<Vec<String>, String> {
        let mining = envs::mining_world_default();
        let gold = envs::gold_nuggets_default();
        let risky = envs::risky_path_default();
        let mgrid = make_grid(Family::Mining, 0.0, 20.0, 21).map_err(err)?;
        let ggrid = make_grid(Family::Discount, 0.1, 0.99, 2).map_err(err)?;
        let cgrid = make_grid(Family::Cvar, 0.05, 0.95, 10).map_err(err)?;
        let mconf = TrainConfig { episodes: 5000, ..TrainConfig::for_environment("mining-world", SEED).map_err(err)? };
        Ok(vec![
            solve_coverage_set(&mining, &mgrid, Criterion::Esr, Solver::Exact).map_err(err)?.to_json(),
            solve_coverage_set(&mining, &mgrid, Criterion::Esr, Solver::AugmentedVi { bin_width: 0.0 }).map_err(err)?.to_json(),
            solve_coverage_set(&gold, &ggrid, Criterion::PerGamma, Solver::PerGammaVi).map_err(err)?.to_json(),
            solve_coverage_set(&risky, &cgrid, Criterion::Cvar, Solver::Exact).map_err(err)?.to_json(),
            train_conditioned_q(&mining, &mgrid, Criterion::Esr, &mconf).map_err(err)?.1.to_json(),
            train_multi_gamma_q(&gold, &ggrid, &TrainConfig::for_environment("gold-nuggets", SEED).map_err(err)?)
                .map_err(err)?
                .1
                .to_json(),
            cvar_policy_sweep(&risky, &cgrid, &SweepMode::DistTd(SupportConfig { seed: SEED, ..SupportConfig::default() }))
                .map_err(err)?
                .to_json(),
        ])
    };
    let a = runs()?;
    let b = runs()?;
    for (i, (x, y)) in a.iter().zip(&b).enumerate() {
        ensure(x == y, || format!("run {i} differs between invocations"))?;
    }
    Ok(format!("{} solve/train invocations byte-identical across two runs", a.len()))
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Check); 9] = [
        ("identity-reduction", identity_reduction),
        ("ser-esr-split", ser_esr_split),
        ("mining-coverage", mining_coverage),
        ("cvar-sweep", cvar_sweep),
        ("multi-gamma", multi_gamma),
        ("satisficing", satisficing),
        ("learner-soundness", learner_soundness),
        ("distributional-evaluation", distributional),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} [{secs:.1}s]: {detail}");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
