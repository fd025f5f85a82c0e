//! Shipped environments and a name-based registry over their generators.

mod random;
mod scenarios;

use std::collections::BTreeMap;

use serde::Serialize;

pub use random::random_small_mdp;
pub use scenarios::*;

use crate::decimal;
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::utility::GridSpec;

/// Description of one generator parameter.
#[derive(Clone, Debug, Serialize)]
pub struct ParamInfo {
    pub name: &'static str,
    #[serde(with = "decimal")]
    pub default: f64,
    pub integer: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvironmentInfo {
    pub name: &'static str,
    pub doc: &'static str,
    pub params: Vec<ParamInfo>,
    /// Utility grid the scenario was built to explore.
    pub default_grid: GridSpec,
    pub default_criterion: &'static str,
}

/// A generated environment together with the parameters that produced it.
#[derive(Clone, Debug)]
pub struct EnvironmentSpec {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub mdp: Mdp,
    pub doc: &'static str,
}

const fn p(name: &'static str, default: f64, integer: bool) -> ParamInfo {
    ParamInfo { name, default, integer }
}

pub fn environments() -> Vec<EnvironmentInfo> {
    use crate::utility::Family;
    let grid = |family, lo, hi, count| GridSpec { family, lo, hi, count, base: None };
    vec![
        EnvironmentInfo {
            name: "gold-nuggets",
            doc: "1-D corridor with a small nugget close to the start and a large one further away. \
                  Actions: 0 = left, 1 = right, 2 = collect.",
            params: vec![
                p("corridor_len", 8.0, true),
                p("near_pos", 1.0, true),
                p("near_val", 2.0, false),
                p("far_pos", 6.0, true),
                p("far_val", 10.0, false),
                p("horizon", 10.0, true),
                p("gamma", 0.9, false),
            ],
            default_grid: grid(Family::Discount, 0.1, 0.99, 2),
            default_criterion: "per-gamma",
        },
        EnvironmentInfo {
            name: "mining-world",
            doc: "Each step choose normal mining (fixed yield) or risky excavation (high or low yield). \
                  Rewards are units mined. Actions: 0 = normal, 1 = risky.",
            params: vec![
                p("base_yield", 2.0, false),
                p("risky_yield_hi", 6.0, false),
                p("risky_yield_lo", 0.0, false),
                p("p_hi", 0.5, false),
                p("horizon", 5.0, true),
            ],
            default_grid: grid(Family::Mining, 0.0, 20.0, 21),
            default_criterion: "esr",
        },
        EnvironmentInfo {
            name: "risky-path",
            doc: "A fork between a long safe corridor and a one-step shortcut with a hazard of paying nothing. \
                  Actions: 0 = safe / forward, 1 = risky / back.",
            params: vec![
                p("safe_len", 4.0, true),
                p("safe_reward", 6.0, false),
                p("risky_reward", 10.0, false),
                p("hazard_prob", 0.3, false),
                p("horizon", 6.0, true),
            ],
            default_grid: grid(Family::Cvar, 0.1, 1.0, 10),
            default_criterion: "cvar",
        },
        EnvironmentInfo {
            name: "harvest-world",
            doc: "Harvest one unit per step (reward 1) up to a cap, or idle. State = units harvested. \
                  Actions: 0 = harvest, 1 = idle.",
            params: vec![p("max_units", 5.0, true), p("horizon", 5.0, true)],
            default_grid: grid(Family::Satisficing, 0.0, 5.0, 6),
            default_criterion: "esr",
        },
    ]
}

pub fn environment_info(name: &str) -> Result<EnvironmentInfo> {
    environments()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownEnvironment(name.to_string()))
}

/// Builds environment `name`, overriding default parameters with the given
/// decimal strings.
pub fn make_env(name: &str, overrides: &BTreeMap<String, String>) -> Result<EnvironmentSpec> {
    let info = environment_info(name)?;
    let mut params: BTreeMap<String, f64> = info.params.iter().map(|p| (p.name.to_string(), p.default)).collect();
    for (key, text) in overrides {
        let Some(param) = info.params.iter().find(|p| p.name == key) else {
            return Err(Error::InvalidParams(format!("{name} has no parameter `{key}`")));
        };
        let value = decimal::parse(text).map_err(|_| Error::InvalidParams(format!("{key}: `{text}` is not a number")))?;
        if param.integer && (value < 0.0 || value.fract() != 0.0) {
            return Err(Error::InvalidParams(format!("{key} must be a non-negative integer, got {text}")));
        }
        params.insert(key.clone(), value);
    }
    let f = |k: &str| params[k];
    let n = |k: &str| params[k] as usize;
    let mdp = match info.name {
        "gold-nuggets" => make_gold_nuggets(
            n("corridor_len"),
            n("near_pos"),
            f("near_val"),
            n("far_pos"),
            f("far_val"),
            n("horizon"),
            f("gamma"),
        )?,
        "mining-world" => make_mining_world(
            f("base_yield"),
            f("risky_yield_hi"),
            f("risky_yield_lo"),
            f("p_hi"),
            n("horizon"),
        )?,
        "risky-path" => make_risky_path(
            n("safe_len"),
            f("safe_reward"),
            f("risky_reward"),
            f("hazard_prob"),
            n("horizon"),
        )?,
        "harvest-world" => make_harvest_world(n("max_units"), n("horizon"))?,
        _ => unreachable!("registry and builders list the same names"),
    };
    Ok(EnvironmentSpec { name: info.name.to_string(), params, mdp, doc: info.doc })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_defaults_match_helpers() {
        let none = BTreeMap::new();
        assert_eq!(make_env("gold-nuggets", &none).unwrap().mdp, gold_nuggets_default());
        assert_eq!(make_env("mining-world", &none).unwrap().mdp, mining_world_default());
        assert_eq!(make_env("risky-path", &none).unwrap().mdp, risky_path_default());
        assert_eq!(make_env("harvest-world", &none).unwrap().mdp, harvest_world_default());
    }

    #[test]
    fn overrides_apply_and_are_checked() {
        let mut o = BTreeMap::new();
        o.insert("horizon".to_string(), "3".to_string());
        assert_eq!(make_env("mining-world", &o).unwrap().mdp.horizon, 3);
        o.insert("horizon".to_string(), "2.5".to_string());
        assert!(matches!(make_env("mining-world", &o), Err(Error::InvalidParams(_))));
        let mut bad = BTreeMap::new();
        bad.insert("colour".to_string(), "1".to_string());
        assert!(matches!(make_env("harvest-world", &bad), Err(Error::InvalidParams(_))));
        assert!(matches!(make_env("lava-world", &BTreeMap::new()), Err(Error::UnknownEnvironment(_))));
    }

    #[test]
    fn default_grids_build() {
        for info in environments() {
            info.default_grid.build().unwrap();
        }
    }
}
