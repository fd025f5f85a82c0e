//! Turning command-line or request inputs into an MDP, a grid and a solver.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;
use ubrl_core::envs::make_env;
use ubrl_core::{decimal, Criterion, Error, Family, Mdp, MdpRef, ParameterGrid, Result, Solver, UtilitySpec};

/// Generates a shipped environment and the reference recorded with its
/// results.
pub fn shipped(name: &str, params: &BTreeMap<String, String>) -> Result<(Mdp, MdpRef)> {
    let spec = make_env(name, params)?;
    let recorded = spec.params.iter().map(|(k, v)| (k.clone(), decimal::format(*v))).collect();
    let mdp_ref = MdpRef::new(spec.name, recorded, &spec.mdp);
    Ok((spec.mdp, mdp_ref))
}

pub fn from_file(path: &Path) -> Result<(Mdp, MdpRef)> {
    let text = std::fs::read_to_string(path)?;
    let mdp = Mdp::from_json(&text)?;
    let report = mdp.validate();
    if !report.is_ok() {
        return Err(Error::InvalidMdp(report.violations.join("; ")));
    }
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("custom");
    let mdp_ref = MdpRef::new(name, BTreeMap::new(), &mdp);
    Ok((mdp, mdp_ref))
}

/// The family's default template with some fixed parameters replaced.
pub fn template(family: Family, lo: f64, fixed: &[(String, String)]) -> Result<UtilitySpec> {
    let base = family.default_spec(lo);
    if fixed.is_empty() {
        return Ok(base);
    }
    let mut json = serde_json::to_value(&base)?;
    let Some(params) = json.get_mut("params").and_then(Value::as_object_mut) else {
        return Err(Error::InvalidUtility(format!("{family} has no fixed parameters")));
    };
    for (key, text) in fixed {
        if key == family.param_name() {
            return Err(Error::InvalidUtility(format!("`{key}` is the grid parameter and cannot be fixed")));
        }
        if !params.contains_key(key) {
            let known: Vec<&str> =
                params.keys().map(String::as_str).filter(|k| *k != family.param_name()).collect();
            return Err(Error::InvalidUtility(format!(
                "{family} has no parameter `{key}` (fixed parameters: {})",
                known.join(", ")
            )));
        }
        let value = decimal::parse(text)?;
        params.insert(key.clone(), Value::String(decimal::format(value)));
    }
    Ok(serde_json::from_value(json)?)
}

pub fn grid(family: Family, (lo, hi, count): (f64, f64, usize), fixed: &[(String, String)]) -> Result<ParameterGrid> {
    ParameterGrid::new(template(family, lo, fixed)?, lo, hi, count)
}

pub fn default_criterion(family: Family) -> Criterion {
    match family {
        Family::Discount => Criterion::PerGamma,
        Family::Cvar => Criterion::Cvar,
        _ => Criterion::Esr,
    }
}

pub fn default_solver(criterion: Criterion, grid: &ParameterGrid, bin_width: f64) -> Solver {
    match criterion {
        Criterion::PerGamma => Solver::PerGammaVi,
        Criterion::Esr if !grid.template.is_linear() => Solver::AugmentedVi { bin_width },
        _ => Solver::Exact,
    }
}

pub fn pairs(kv: &[(String, String)]) -> BTreeMap<String, String> {
    kv.iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_parameters() {
        let t = template(Family::Mining, 0.0, &[("penalty".into(), "6".into())]).unwrap();
        assert_eq!(t, UtilitySpec::Mining { price: 1.0, penalty: 6.0, harm: 0.0, contract_qty: 10.0 });
        assert!(template(Family::Mining, 0.0, &[("harm".into(), "1".into())]).is_err());
        assert!(template(Family::Mining, 0.0, &[("bogus".into(), "1".into())]).is_err());
        assert!(template(Family::Identity, 0.0, &[("x".into(), "1".into())]).is_err());
    }

    #[test]
    fn defaults_follow_family() {
        let g = grid(Family::Mining, (0.0, 20.0, 3), &[]).unwrap();
        assert_eq!(default_solver(Criterion::Esr, &g, 0.0), Solver::AugmentedVi { bin_width: 0.0 });
        let g = grid(Family::Affine, (1.0, 2.0, 2), &[]).unwrap();
        assert_eq!(default_solver(Criterion::Esr, &g, 0.0), Solver::Exact);
        assert_eq!(default_criterion(Family::Discount), Criterion::PerGamma);
    }

    #[test]
    fn shipped_reference_records_all_parameters() {
        let (_, r) = shipped("mining-world", &BTreeMap::from([("p_hi".to_string(), "0.4".to_string())])).unwrap();
        assert_eq!(r.params["p_hi"], "0.4");
        assert_eq!(r.params["horizon"], "5");
        assert_eq!(r.digest.len(), 64);
    }
}
