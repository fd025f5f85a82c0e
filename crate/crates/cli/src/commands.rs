use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::Path;

use anyhow::{bail, Context};
use serde_json::{json, Value};
use ubrl_core::envs::{environments, make_env};
use ubrl_core::learners::{
    cvar_policy_sweep, train_conditioned_q, train_multi_gamma_q, StepSchedule, SupportConfig, SweepMode, TrainConfig,
};
use ubrl_core::solver::solve_coverage_set;
use ubrl_core::store::Store;
use ubrl_core::{decimal, CoverageSet, Criterion, Family, Mdp, MdpRef, Solver};

use crate::args::*;
use crate::problem;

pub fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Env { action: EnvCommand::List } => env_list(),
        Command::Env { action: EnvCommand::Make { name, params, out } } => env_make(&name, &params, out.as_deref()),
        Command::Solve(a) => solve(a),
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(a),
        Command::Show(a) => show(a),
        Command::Serve(a) => serve(a),
    }
}

fn env_list() -> anyhow::Result<()> {
    for info in environments() {
        println!("{}  {}", info.name, info.doc);
        for p in &info.params {
            let kind = if p.integer { " (integer)" } else { "" };
            println!("    {} = {}{kind}", p.name, decimal::format(p.default));
        }
        let g = &info.default_grid;
        println!(
            "    default grid: --utility {} --grid {}:{}:{}  criterion {}",
            g.family,
            decimal::format(g.lo),
            decimal::format(g.hi),
            g.count,
            info.default_criterion
        );
    }
    Ok(())
}

fn env_make(name: &str, params: &[(String, String)], out: Option<&Path>) -> anyhow::Result<()> {
    let spec = make_env(name, &problem::pairs(params))?;
    let text = spec.mdp.to_json();
    match out {
        Some(path) => {
            write(path, &text)?;
            println!("wrote {}", path.display());
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load(source: &Source, params: &[(String, String)]) -> anyhow::Result<(Mdp, MdpRef)> {
    match (&source.env, &source.mdp) {
        (Some(name), _) => Ok(problem::shipped(name, &problem::pairs(params))?),
        (None, Some(path)) => {
            if !params.is_empty() {
                bail!("--param only applies to --env");
            }
            problem::from_file(path).with_context(|| format!("loading {}", path.display()))
        }
        (None, None) => bail!("one of --env or --mdp is required"),
    }
}

fn solve(a: SolveArgs) -> anyhow::Result<()> {
    let (mdp, mdp_ref) = load(&a.problem.source, &a.problem.params)?;
    let grid = problem::grid(a.problem.utility, a.problem.grid, &a.problem.fixed)?;
    let criterion = a.criterion.unwrap_or_else(|| problem::default_criterion(grid.family()));
    let solver = match a.solver {
        Some(SolverArg::Exact) => Solver::Exact,
        Some(SolverArg::AugmentedVi) => Solver::AugmentedVi { bin_width: a.bin_width },
        Some(SolverArg::PerGammaVi) => Solver::PerGammaVi,
        None => problem::default_solver(criterion, &grid, a.bin_width),
    };
    let set = solve_coverage_set(&mdp, &grid, criterion, solver)?.with_mdp_ref(mdp_ref);
    let config = json!({ "command": "solve", "grid": grid.to_spec(), "criterion": criterion, "solver": solver });
    finish(&set, &mdp, &a.out, a.store.as_deref(), config)
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let (mdp, mdp_ref) = load(&a.problem.source, &a.problem.params)?;
    let grid = problem::grid(a.problem.utility, a.problem.grid, &a.problem.fixed)?;

    let mut config = a
        .problem
        .source
        .env
        .as_deref()
        .and_then(|name| TrainConfig::for_environment(name, a.seed).ok())
        .unwrap_or_else(|| TrainConfig { schedule: StepSchedule::Harmonic, ..TrainConfig::new(20_000, 1.0, 0.3, a.seed) });
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config = merge_config(&config, &text).with_context(|| format!("in {}", path.display()))?;
    }
    config.seed = a.seed;
    if let Some(v) = a.episodes {
        config.episodes = v;
    }
    if let Some(v) = a.step_size {
        config.step_size = v;
    }
    if let Some(v) = a.epsilon {
        config.epsilon = v;
    }
    if let Some(v) = a.initial_q {
        config.initial_q = v;
    }
    if let Some(s) = a.schedule {
        config.schedule = match s {
            ScheduleArg::Constant => StepSchedule::Constant,
            ScheduleArg::Harmonic => StepSchedule::Harmonic,
        };
    }

    let (_, set, log) = match grid.family() {
        Family::Discount => train_multi_gamma_q(&mdp, &grid, &config)?,
        Family::Cvar => bail!("CVaR has no Q-learning target; use `ubrl sweep`"),
        _ => train_conditioned_q(&mdp, &grid, Criterion::Esr, &config)?,
    };
    let set = set.with_mdp_ref(mdp_ref);
    if let Some(path) = &a.log {
        let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        log.write_csv(std::io::BufWriter::new(f))?;
        println!("wrote {} ({} episodes)", path.display(), log.rows.len());
    }
    let meta = json!({ "command": "train", "grid": grid.to_spec(), "train": config });
    finish(&set, &mdp, &a.out, a.store.as_deref(), meta)
}

/// Overlays the keys of a JSON object onto `base`.
fn merge_config(base: &TrainConfig, text: &str) -> anyhow::Result<TrainConfig> {
    let overrides: Value = serde_json::from_str(text)?;
    let Value::Object(overrides) = overrides else { bail!("training config must be a JSON object") };
    let mut merged = serde_json::to_value(base)?;
    let fields = merged.as_object_mut().expect("config serialises to an object");
    for (k, v) in overrides {
        if !fields.contains_key(&k) {
            bail!("unknown training option `{k}`");
        }
        fields.insert(k, v);
    }
    Ok(serde_json::from_value(merged)?)
}

fn sweep(a: SweepArgs) -> anyhow::Result<()> {
    let (mdp, mdp_ref) = load(&a.source, &a.params)?;
    let grid = problem::grid(Family::Cvar, a.grid, &[])?;
    let mode = match a.mode {
        SweepModeArg::Exact => SweepMode::ExactEnum,
        SweepModeArg::DistTd => SweepMode::DistTd(SupportConfig {
            atoms: a.atoms,
            max_episodes: a.max_episodes,
            seed: a.seed,
            ..SupportConfig::default()
        }),
    };
    let set = cvar_policy_sweep(&mdp, &grid, &mode)?.with_mdp_ref(mdp_ref);
    let config = json!({ "command": "sweep", "grid": grid.to_spec(), "mode": match a.mode { SweepModeArg::Exact => "exact", SweepModeArg::DistTd => "dist-td" }, "seed": a.seed, "atoms": a.atoms });
    finish(&set, &mdp, &a.out, a.store.as_deref(), config)
}

fn finish(set: &CoverageSet, mdp: &Mdp, out: &Path, store: Option<&Path>, config: Value) -> anyhow::Result<()> {
    write(out, &set.to_json())?;
    print_summary(set);
    println!("wrote {}", out.display());
    if let Some(root) = store {
        let id = Store::open(root)?.save_coverage_set(set, Some(mdp), Some(&config))?;
        println!("stored as {id}");
    }
    Ok(())
}

fn print_summary(set: &CoverageSet) {
    let switches: Vec<String> =
        set.switch_indices().iter().map(|&i| decimal::format(set.entries[i].param)).collect();
    println!(
        "{} entries, {} distinct policies; {} switches at [{}]",
        set.entries.len(),
        set.distinct_indices().len(),
        set.param_name,
        switches.join(", ")
    );
}

fn show(a: ShowArgs) -> anyhow::Result<()> {
    let set = match &a.store {
        Some(root) => Store::open(root)?.load(&a.target)?,
        None => {
            let text = fs::read_to_string(&a.target).with_context(|| format!("reading {}", a.target))?;
            CoverageSet::from_json(&text).with_context(|| format!("parsing {}", a.target))?
        }
    };
    println!("environment  {} ({})", set.mdp_ref.name, &set.mdp_ref.digest[..set.mdp_ref.digest.len().min(12)]);
    for (k, v) in &set.mdp_ref.params {
        println!("    {k} = {v}");
    }
    println!("criterion    {}", set.criterion);
    println!("solver       {}", set.solver.name());
    println!();
    println!("{:>5}  {:>12}  {:>14}  {:>14}  policy", "index", set.param_name, "value", "E[return]");
    for (i, e) in set.entries.iter().enumerate() {
        let tag = match e.duplicate_of {
            Some(j) => format!("= #{j}"),
            None => format!("#{i} ({} keys)", e.policy.actions.len()),
        };
        println!(
            "{i:>5}  {:>12}  {:>14}  {:>14}  {tag}",
            decimal::format(e.param),
            decimal::format(e.value),
            decimal::format(e.expected_return)
        );
    }
    println!();
    print_summary(&set);
    Ok(())
}

fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse().context("invalid --host/--port")?;
    let store = Store::open(&a.store).with_context(|| format!("opening store {}", a.store.display()))?;
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(crate::server::serve(addr, store, a.static_dir))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
