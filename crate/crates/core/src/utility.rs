//! Parameterised utility functions and parameter grids.
//!
//! Each family maps some view of an episode to a scalar: the total return
//! (identity, affine, mining contract, satisficing target), the return
//! distribution (CVaR), or the per-step reward sequence (discounting).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::decimal;
use crate::distribution::ReturnDistribution;
use crate::error::{Error, Result};

/// Slack below the contract quantity before a mining return counts as a
/// breach, absorbing rounding in decimal reward sums.
pub const BREACH_TOL: f64 = 1e-9;
const QUANTILE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Identity,
    Affine,
    Mining,
    Cvar,
    Discount,
    Satisficing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AppliesTo {
    ScalarReturn,
    Distribution,
    RewardSequence,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Identity => "identity",
            Family::Affine => "affine",
            Family::Mining => "mining",
            Family::Cvar => "cvar",
            Family::Discount => "discount",
            Family::Satisficing => "satisficing",
        }
    }

    pub fn applies_to(self) -> AppliesTo {
        match self {
            Family::Identity | Family::Affine | Family::Mining | Family::Satisficing => AppliesTo::ScalarReturn,
            Family::Cvar => AppliesTo::Distribution,
            Family::Discount => AppliesTo::RewardSequence,
        }
    }

    /// Name of the parameter a grid over this family varies.
    pub fn param_name(self) -> &'static str {
        match self {
            Family::Identity => "none",
            Family::Affine => "scale",
            Family::Mining => "harm",
            Family::Cvar => "alpha",
            Family::Discount => "gamma",
            Family::Satisficing => "target",
        }
    }

    /// The family with its default fixed parameters and the varying
    /// parameter at `value`.
    pub fn default_spec(self, value: f64) -> UtilitySpec {
        match self {
            Family::Identity => UtilitySpec::Identity,
            Family::Affine => UtilitySpec::Affine { scale: value, offset: 0.0 },
            Family::Mining => UtilitySpec::Mining { price: 1.0, penalty: 4.0, harm: value, contract_qty: 10.0 },
            Family::Cvar => UtilitySpec::Cvar { alpha: value },
            Family::Discount => UtilitySpec::Discount { gamma: value },
            Family::Satisficing => UtilitySpec::Satisficing { target: value },
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => Family::Identity,
            "affine" => Family::Affine,
            "mining" => Family::Mining,
            "cvar" => Family::Cvar,
            "discount" => Family::Discount,
            "satisficing" => Family::Satisficing,
            other => return Err(Error::InvalidUtility(format!("unknown utility family `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "kebab-case")]
pub enum UtilitySpec {
    Identity,
    /// `scale * x + offset`.
    Affine {
        #[serde(with = "decimal")]
        scale: f64,
        #[serde(with = "decimal")]
        offset: f64,
    },
    /// Revenue `price * x`, minus `penalty + harm` when the mined quantity
    /// falls short of `contract_qty`.
    Mining {
        #[serde(with = "decimal")]
        price: f64,
        #[serde(with = "decimal")]
        penalty: f64,
        #[serde(with = "decimal")]
        harm: f64,
        #[serde(with = "decimal")]
        contract_qty: f64,
    },
    Cvar {
        #[serde(with = "decimal")]
        alpha: f64,
    },
    Discount {
        #[serde(with = "decimal")]
        gamma: f64,
    },
    /// `-|target - x|`.
    Satisficing {
        #[serde(with = "decimal")]
        target: f64,
    },
}

impl UtilitySpec {
    pub fn family(&self) -> Family {
        match self {
            UtilitySpec::Identity => Family::Identity,
            UtilitySpec::Affine { .. } => Family::Affine,
            UtilitySpec::Mining { .. } => Family::Mining,
            UtilitySpec::Cvar { .. } => Family::Cvar,
            UtilitySpec::Discount { .. } => Family::Discount,
            UtilitySpec::Satisficing { .. } => Family::Satisficing,
        }
    }

    pub fn applies_to(&self) -> AppliesTo {
        self.family().applies_to()
    }

    /// Linear in the return with positive slope, so SER and ESR coincide.
    pub fn is_linear(&self) -> bool {
        match *self {
            UtilitySpec::Identity => true,
            UtilitySpec::Affine { scale, .. } => scale > 0.0,
            _ => false,
        }
    }

    /// The parameter a grid varies.
    pub fn param(&self) -> f64 {
        match *self {
            UtilitySpec::Identity => 0.0,
            UtilitySpec::Affine { scale, .. } => scale,
            UtilitySpec::Mining { harm, .. } => harm,
            UtilitySpec::Cvar { alpha } => alpha,
            UtilitySpec::Discount { gamma } => gamma,
            UtilitySpec::Satisficing { target } => target,
        }
    }

    pub fn with_param(&self, value: f64) -> UtilitySpec {
        let mut out = self.clone();
        match &mut out {
            UtilitySpec::Identity => {}
            UtilitySpec::Affine { scale, .. } => *scale = value,
            UtilitySpec::Mining { harm, .. } => *harm = value,
            UtilitySpec::Cvar { alpha } => *alpha = value,
            UtilitySpec::Discount { gamma } => *gamma = value,
            UtilitySpec::Satisficing { target } => *target = value,
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidUtility(format!("{name} must be finite")))
            }
        };
        match *self {
            UtilitySpec::Identity => Ok(()),
            UtilitySpec::Affine { scale, offset } => {
                finite("scale", scale)?;
                finite("offset", offset)
            }
            UtilitySpec::Mining { price, penalty, harm, contract_qty } => {
                for (n, v) in [("price", price), ("penalty", penalty), ("harm", harm), ("contract_qty", contract_qty)] {
                    finite(n, v)?;
                }
                for (n, v) in [("price", price), ("penalty", penalty), ("contract_qty", contract_qty)] {
                    if v < 0.0 {
                        return Err(Error::InvalidUtility(format!("{n} must be non-negative, got {v}")));
                    }
                }
                Ok(())
            }
            UtilitySpec::Cvar { alpha } => {
                if alpha > 0.0 && alpha <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidAlpha(alpha))
                }
            }
            UtilitySpec::Discount { gamma } => {
                if (0.0..=1.0).contains(&gamma) {
                    Ok(())
                } else {
                    Err(Error::InvalidUtility(format!("discount gamma must lie in [0, 1], got {gamma}")))
                }
            }
            UtilitySpec::Satisficing { target } => finite("target", target),
        }
    }

    fn wrong(&self, reason: &'static str) -> Error {
        Error::WrongFamily { family: self.family().name(), reason }
    }
}

/// Utility of a total (discounted) return.
pub fn eval_scalar_utility(spec: &UtilitySpec, total_return: f64) -> Result<f64> {
    let x = total_return;
    Ok(match *spec {
        UtilitySpec::Identity => x,
        UtilitySpec::Affine { scale, offset } => scale * x + offset,
        UtilitySpec::Mining { price, penalty, harm, contract_qty } => {
            let breach = if x < contract_qty - BREACH_TOL { 1.0 } else { 0.0 };
            price * x - breach * (penalty + harm)
        }
        UtilitySpec::Satisficing { target } => 0.0 - (target - x).abs(),
        UtilitySpec::Cvar { .. } => return Err(spec.wrong("CVaR applies to return distributions")),
        UtilitySpec::Discount { .. } => return Err(spec.wrong("discounting applies to reward sequences")),
    })
}

/// Lower-quantile value at risk, `min { z : P(Z <= z) >= alpha }`.
pub fn value_at_risk(alpha: f64, dist: &ReturnDistribution) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if dist.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let mut cum = 0.0;
    for atom in dist.atoms() {
        cum += atom.prob;
        if cum >= alpha - QUANTILE_TOL {
            return Ok(atom.value);
        }
    }
    Ok(dist.max())
}

/// `E[Z | Z <= VaR_alpha(Z)]`.
pub fn cvar(alpha: f64, dist: &ReturnDistribution) -> Result<f64> {
    let var = value_at_risk(alpha, dist)?;
    let (mass, weighted) = dist
        .atoms()
        .iter()
        .take_while(|a| a.value <= var)
        .fold((0.0, 0.0), |(m, w), a| (m + a.prob, w + a.prob * a.value));
    Ok(weighted / mass)
}

pub fn eval_cvar(spec: &UtilitySpec, dist: &ReturnDistribution) -> Result<f64> {
    match *spec {
        UtilitySpec::Cvar { alpha } => cvar(alpha, dist),
        _ => Err(spec.wrong("only the CVaR family evaluates distributions")),
    }
}

/// `sum_i gamma^i r_i` with the utility's own discount.
pub fn eval_discount_utility(spec: &UtilitySpec, rewards: &[f64]) -> Result<f64> {
    match *spec {
        UtilitySpec::Discount { gamma } => {
            let mut d = 1.0;
            let mut total = 0.0;
            for r in rewards {
                total += d * r;
                d *= gamma;
            }
            Ok(total)
        }
        _ => Err(spec.wrong("only the discount family evaluates reward sequences")),
    }
}

/// An ordered set of utility parameterisations that differ in one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterGrid {
    pub template: UtilitySpec,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    points: Vec<UtilitySpec>,
}

impl ParameterGrid {
    /// Evenly spaced inclusive grid over the template's varying parameter.
    pub fn new(template: UtilitySpec, lo: f64, hi: f64, count: usize) -> Result<Self> {
        let family = template.family();
        if count == 0 {
            return Err(Error::InvalidRange("grid needs at least one point".into()));
        }
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::InvalidRange(format!("need lo <= hi, got [{lo}, {hi}]")));
        }
        if family == Family::Identity && count != 1 {
            return Err(Error::InvalidRange("the identity utility has no parameter; use a single point".into()));
        }
        if count > 1 && lo == hi {
            return Err(Error::InvalidRange("a grid with several points needs lo < hi".into()));
        }
        let values: Vec<f64> = if count == 1 {
            vec![lo]
        } else {
            let n = (count - 1) as f64;
            (0..count)
                .map(|i| decimal::snap((lo * (n - i as f64) + hi * i as f64) / n))
                .collect()
        };
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidRange("grid points are not strictly increasing".into()));
        }
        let points: Vec<UtilitySpec> = values.iter().map(|&v| template.with_param(v)).collect();
        for p in &points {
            p.validate().map_err(|e| Error::InvalidRange(e.to_string()))?;
        }
        Ok(Self { template, lo, hi, count, points })
    }

    pub fn family(&self) -> Family {
        self.template.family()
    }

    pub fn points(&self) -> &[UtilitySpec] {
        &self.points
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(UtilitySpec::param).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_spec(&self) -> GridSpec {
        GridSpec {
            family: self.family(),
            lo: self.lo,
            hi: self.hi,
            count: self.count,
            base: match self.family() {
                Family::Mining | Family::Affine => Some(self.template.clone()),
                _ => None,
            },
        }
    }
}

/// `make_grid` with the family's default fixed parameters.
pub fn make_grid(family: Family, lo: f64, hi: f64, count: usize) -> Result<ParameterGrid> {
    ParameterGrid::new(family.default_spec(lo), lo, hi, count)
}

/// Serialised grid description: `{"family", "lo", "hi", "count"}`, plus the
/// fixed parameters for families that have them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub family: Family,
    #[serde(with = "decimal")]
    pub lo: f64,
    #[serde(with = "decimal")]
    pub hi: f64,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<UtilitySpec>,
}

impl GridSpec {
    pub fn build(&self) -> Result<ParameterGrid> {
        let template = match &self.base {
            Some(base) if base.family() == self.family => base.clone(),
            Some(base) => {
                return Err(Error::InvalidUtility(format!(
                    "grid family {} does not match base family {}",
                    self.family,
                    base.family()
                )))
            }
            None => self.family.default_spec(self.lo),
        };
        ParameterGrid::new(template, self.lo, self.hi, self.count)
    }
}
