use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Domain of one hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Real {
        low: f64,
        high: f64,
        #[serde(default)]
        log: bool,
    },
    Int {
        low: i64,
        high: i64,
        #[serde(default)]
        log: bool,
    },
    Categorical { choices: Vec<String> },
}

impl Domain {
    pub fn real(low: f64, high: f64) -> Self {
        Domain::Real { low, high, log: false }
    }

    pub fn log_real(low: f64, high: f64) -> Self {
        Domain::Real { low, high, log: true }
    }

    pub fn int(low: i64, high: i64) -> Self {
        Domain::Int { low, high, log: false }
    }

    pub fn categorical<S: Into<String>>(choices: impl IntoIterator<Item = S>) -> Self {
        Domain::Categorical { choices: choices.into_iter().map(Into::into).collect() }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("parameter `{name}`: {m}")));
        match *self {
            Domain::Real { low, high, log } => {
                if !(low < high) {
                    return bad("lower bound must be below upper bound");
                }
                if log && low <= 0.0 {
                    return bad("log-scaled domain needs a positive lower bound");
                }
            }
            Domain::Int { low, high, log } => {
                if low >= high {
                    return bad("lower bound must be below upper bound");
                }
                if log && low <= 0 {
                    return bad("log-scaled domain needs a positive lower bound");
                }
            }
            Domain::Categorical { ref choices } => {
                if choices.is_empty() {
                    return bad("categorical domain has no choices");
                }
            }
        }
        Ok(())
    }

    /// Bounds of the continuous search coordinate (log scale when requested;
    /// integers are widened by half a unit on the linear scale).
    pub(crate) fn internal_bounds(&self) -> Option<(f64, f64)> {
        match *self {
            Domain::Real { low, high, log: false } => Some((low, high)),
            Domain::Real { low, high, log: true } => Some((low.ln(), high.ln())),
            Domain::Int { low, high, log: false } => Some((low as f64 - 0.5, high as f64 + 0.5)),
            Domain::Int { low, high, log: true } => {
                Some(((low as f64 - 0.5).max(0.5).ln(), (high as f64 + 0.5).ln()))
            }
            Domain::Categorical { .. } => None,
        }
    }

    /// Internal coordinate of a value.
    pub(crate) fn to_internal(&self, v: &ParamValue) -> Option<f64> {
        match (self, v) {
            (Domain::Real { log, .. }, ParamValue::Real(x)) => Some(if *log { x.ln() } else { *x }),
            (Domain::Int { log, .. }, ParamValue::Int(i)) => {
                Some(if *log { (*i as f64).ln() } else { *i as f64 })
            }
            _ => None,
        }
    }

    pub(crate) fn from_internal(&self, u: f64) -> ParamValue {
        match *self {
            Domain::Real { low, high, log } => {
                let x = if log { u.exp() } else { u };
                ParamValue::Real(x.clamp(low, high))
            }
            Domain::Int { low, high, log } => {
                let x = if log { u.exp() } else { u };
                ParamValue::Int((x.round() as i64).clamp(low, high))
            }
            Domain::Categorical { .. } => unreachable!("categorical has no internal coordinate"),
        }
    }

    pub(crate) fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamValue {
        match self {
            Domain::Categorical { choices } => {
                ParamValue::Cat(choices[rng.random_range(0..choices.len())].clone())
            }
            Domain::Int { low, high, log: false } => ParamValue::Int(rng.random_range(*low..=*high)),
            _ => {
                let (a, b) = self.internal_bounds().expect("numeric");
                self.from_internal(a + (b - a) * rng.random::<f64>())
            }
        }
    }

    pub(crate) fn cardinality(&self) -> Option<usize> {
        match self {
            Domain::Categorical { choices } => Some(choices.len()),
            Domain::Int { low, high, .. } => Some((high - low + 1) as usize),
            Domain::Real { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Cat(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Real(x) => Some(*x),
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Cat(_) => None,
        }
    }
}

/// An assignment of values to named parameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Params(pub BTreeMap<String, ParamValue>);

impl Params {
    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.0.get(name)
    }

    pub fn f64_or(&self, name: &str, default: f64) -> f64 {
        self.get(name).and_then(ParamValue::as_f64).unwrap_or(default)
    }

    pub fn usize_or(&self, name: &str, default: usize) -> usize {
        match self.get(name) {
            Some(ParamValue::Int(i)) => (*i).max(0) as usize,
            Some(ParamValue::Real(x)) => x.round().max(0.0) as usize,
            _ => default,
        }
    }

    pub fn str_or<'a>(&'a self, name: &str, default: &'a str) -> &'a str {
        match self.get(name) {
            Some(ParamValue::Cat(s)) => s,
            _ => default,
        }
    }

    pub fn set(&mut self, name: &str, v: ParamValue) {
        self.0.insert(name.to_string(), v);
    }
}

/// Named hyperparameter domains, iterated in name order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace(pub BTreeMap<String, Domain>);

impl SearchSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, domain: Domain) -> Self {
        self.0.insert(name.to_string(), domain);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::Config("search space is empty".into()));
        }
        self.0.iter().try_for_each(|(n, d)| d.validate(n))
    }

    /// Number of distinct points, if finite.
    pub fn cardinality(&self) -> Option<usize> {
        self.0
            .values()
            .try_fold(1usize, |acc, d| d.cardinality().map(|c| acc.saturating_mul(c)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Domain)> {
        self.0.iter()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Params {
        Params(
            self.0
                .iter()
                .map(|(n, d)| (n.clone(), d.sample_uniform(rng)))
                .collect(),
        )
    }
}
