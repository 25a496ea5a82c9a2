use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Number of candidate features drawn at each node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    /// Fraction of the feature count in (0, 1].
    Fraction(f64),
}

impl MaxFeatures {
    /// Candidate count for `n_features` features: rounded down, at least 1.
    pub fn count(self, n_features: usize) -> usize {
        let d = n_features as f64;
        let k = match self {
            MaxFeatures::Sqrt => d.sqrt(),
            MaxFeatures::Log2 => d.log2(),
            MaxFeatures::Fraction(f) => f * d,
        };
        // tiny slack so that e.g. 0.6 * 5 = 3.0000000000000004 or 2.9999999999999996 floors to 3
        ((k + 1e-9).floor() as usize).clamp(1, n_features.max(1))
    }

    pub fn validate(self) -> Result<()> {
        match self {
            MaxFeatures::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                Err(Error::invalid(format!("max_features fraction must lie in (0, 1], got {f}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MaxFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaxFeatures::Sqrt => f.write_str("sqrt"),
            MaxFeatures::Log2 => f.write_str("log2"),
            MaxFeatures::Fraction(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for MaxFeatures {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let m = match s.trim() {
            "sqrt" => MaxFeatures::Sqrt,
            "log2" => MaxFeatures::Log2,
            other => MaxFeatures::Fraction(
                other
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad max_features `{other}`")))?,
            ),
        };
        m.validate()?;
        Ok(m)
    }
}

impl Serialize for MaxFeatures {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MaxFeatures::Fraction(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for MaxFeatures {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Name(String),
        }
        let m = match Repr::deserialize(d)? {
            Repr::Num(v) => MaxFeatures::Fraction(v),
            Repr::Name(s) => s.parse().map_err(serde::de::Error::custom)?,
        };
        m.validate().map_err(serde::de::Error::custom)?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until the other stopping rules apply.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Fraction(1.0),
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_split < 2 {
            return Err(Error::invalid("min_samples_split must be >= 2"));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::invalid("min_samples_leaf must be >= 1"));
        }
        if self.max_depth == Some(0) {
            return Err(Error::invalid("max_depth must be >= 1"));
        }
        self.max_features.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            tree: TreeParams::default(),
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::invalid("n_estimators must be >= 1"));
        }
        self.tree.validate()
    }
}
