use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::decimal;
use crate::error::{Error, Result};

/// Values closer than this are merged into one atom.
pub const MERGE_TOL: f64 = 1e-12;
/// Allowed deviation of the total probability from one.
pub const MASS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    #[serde(with = "decimal")]
    pub value: f64,
    #[serde(with = "decimal")]
    pub prob: f64,
}

/// A finite categorical distribution over scalar returns, atoms sorted by
/// strictly increasing value.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnDistribution {
    atoms: Vec<Atom>,
}

impl ReturnDistribution {
    /// Sorts, merges near-equal values and drops zero-probability atoms.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut raw: Vec<(f64, f64)> = pairs.into_iter().filter(|&(_, p)| p != 0.0).collect();
        if raw.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if raw.iter().any(|&(v, p)| !v.is_finite() || !p.is_finite() || p < 0.0) {
            return Err(Error::InvalidDistribution("non-finite value or negative probability".into()));
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<Atom> = Vec::with_capacity(raw.len());
        for (value, prob) in raw {
            match atoms.last_mut() {
                Some(last) if value - last.value <= MERGE_TOL => last.prob += prob,
                _ => atoms.push(Atom { value, prob }),
            }
        }
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        Ok(Self { atoms })
    }

    pub fn point(value: f64) -> Self {
        Self { atoms: vec![Atom { value, prob: 1.0 }] }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.value * a.prob).sum()
    }

    pub fn min(&self) -> f64 {
        self.atoms[0].value
    }

    pub fn max(&self) -> f64 {
        self.atoms[self.atoms.len() - 1].value
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob).sum()
    }

    /// `P(Z <= z)`.
    pub fn cdf(&self, z: f64) -> f64 {
        self.atoms.iter().take_while(|a| a.value <= z + MERGE_TOL).map(|a| a.prob).sum()
    }

    /// Total variation distance; atoms within `tol` are treated as the same
    /// point.
    pub fn total_variation(&self, other: &Self, tol: f64) -> f64 {
        let (a, b) = (&self.atoms, &other.atoms);
        let (mut i, mut j, mut sum) = (0, 0, 0.0);
        while i < a.len() || j < b.len() {
            if j >= b.len() || (i < a.len() && a[i].value < b[j].value - tol) {
                sum += a[i].prob;
                i += 1;
            } else if i >= a.len() || b[j].value < a[i].value - tol {
                sum += b[j].prob;
                j += 1;
            } else {
                sum += (a[i].prob - b[j].prob).abs();
                i += 1;
                j += 1;
            }
        }
        0.5 * sum
    }
}

impl Serialize for ReturnDistribution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.atoms.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ReturnDistribution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let atoms = Vec::<Atom>::deserialize(d)?;
        // Stored distributions are already canonical; keep atoms verbatim so
        // a load/save cycle is bit-exact.
        if atoms.is_empty() {
            return Err(serde::de::Error::custom("empty return distribution"));
        }
        Ok(Self { atoms })
    }
}
