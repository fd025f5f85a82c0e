use std::path::Path;
use std::process::{Command, Output};

use ubrl_core::{CoverageSet, Solver};

fn ubrl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ubrl")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn load(path: &Path) -> CoverageSet {
    CoverageSet::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn per_gamma_solve_writes_one_entry_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = ubrl(
        dir.path(),
        &["solve", "--env", "gold-nuggets", "--utility", "discount", "--grid", "0:1:5", "--criterion", "per-gamma"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let set = load(&dir.path().join("coverage.json"));
    assert_eq!(set.entries.len(), 5);
    assert_eq!(set.solver, Solver::PerGammaVi);
    assert_eq!(set.mdp_ref.name, "gold-nuggets");
    let params: Vec<f64> = set.entries.iter().map(|e| e.param).collect();
    assert_eq!(params, [0.0, 0.25, 0.5, 0.75, 1.0]);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["solve", "--utility", "identity", "--grid", "0:0:1"][..],
        &["solve", "--env", "mining-world", "--utility", "mining", "--grid", "0:20"],
        &["train", "--env", "harvest-world", "--utility", "satisficing", "--grid", "0:5:6"],
        &["frobnicate"],
    ] {
        let o = ubrl(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    assert_eq!(ubrl(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn domain_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["solve", "--env", "no-such-env", "--utility", "identity", "--grid", "0:0:1"][..],
        &["solve", "--env", "mining-world", "--param", "p_hi=1.5", "--utility", "mining", "--grid", "0:20:3"],
        &["solve", "--env", "mining-world", "--utility", "cvar", "--grid", "0:1:3"],
        &["solve", "--env", "mining-world", "--utility", "mining", "--grid", "5:1:3"],
        &["train", "--env", "risky-path", "--utility", "cvar", "--grid", "0.1:1:3", "--seed", "1"],
        &["show", "missing.json"],
    ] {
        let o = ubrl(dir.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(stderr(&o).starts_with("error: "), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn solve_and_train_are_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 2] = [
        &["solve", "--env", "mining-world", "--utility", "mining", "--grid", "0:20:21"],
        &["train", "--env", "harvest-world", "--utility", "satisficing", "--grid", "0:5:6", "--seed", "11", "--log", "log.csv"],
    ];
    for args in runs {
        let mut outputs = Vec::new();
        for out in ["a.json", "b.json"] {
            let mut full = args.to_vec();
            full.extend(["--out", out]);
            let o = ubrl(dir.path(), &full);
            assert!(o.status.success(), "{}", stderr(&o));
            let log = std::fs::read(dir.path().join("log.csv")).unwrap_or_default();
            outputs.push((std::fs::read(dir.path().join(out)).unwrap(), log));
        }
        assert_eq!(outputs[0], outputs[1], "{args:?}");
    }
}

#[test]
fn fixed_parameters_reach_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = ubrl(
        dir.path(),
        &["solve", "--env", "mining-world", "--utility", "mining", "--grid", "0:4:2", "--fixed", "penalty=0"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let set = load(&dir.path().join("coverage.json"));
    let json = serde_json::to_value(&set.grid[1]).unwrap();
    assert_eq!(json["params"]["penalty"], "0");
    assert_eq!(json["params"]["harm"], "4");
}

#[test]
fn env_make_round_trips_through_mdp_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = ubrl(dir.path(), &["env", "make", "risky-path", "--param", "hazard_prob=0.5", "--out", "rp.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = ubrl(dir.path(), &["sweep", "--mdp", "rp.json", "--grid", "0.1:1:4", "--mode", "exact"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let set = load(&dir.path().join("coverage.json"));
    assert_eq!(set.mdp_ref.name, "rp");
    assert_eq!(set.entries.len(), 4);
}

#[test]
fn stored_runs_can_be_shown_by_id() {
    let dir = tempfile::tempdir().unwrap();
    let o = ubrl(
        dir.path(),
        &["solve", "--env", "harvest-world", "--utility", "satisficing", "--grid", "0:5:6", "--store", "st"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let id = stdout.lines().find_map(|l| l.strip_prefix("stored as ")).expect("id printed").to_string();
    let o = ubrl(dir.path(), &["show", "--store", "st", &id]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().contains("6 entries"));
    let o = ubrl(dir.path(), &["show", "--store", "st", "../../etc"]);
    assert_eq!(o.status.code(), Some(1));
}
