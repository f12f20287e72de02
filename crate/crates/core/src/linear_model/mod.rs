//! Fixed-effects linear model over categorical factors with sum-to-zero
//! coding, marginal or sequential F tests, and least-squares means.

mod anova;
mod design;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::LinalgError;

pub use anova::{anova_table, fit_least_squares, fit_model, ls_means, AnovaRow, AnovaTable, FTest, FitResult, LsMean, SsType};
pub use design::{encode_design, Design};

pub const MAX_INTERACTION_ORDER: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown factor {0:?}")]
    UnknownFactor(String),
    #[error("factor {0:?} has a single observed level")]
    SingleLevel(String),
    #[error("invalid term {0:?}")]
    BadTerm(String),
    #[error("term {term:?} uses {factor:?}, which is not a main effect")]
    MissingMainEffect { term: String, factor: String },
    #[error("duplicate term {0:?}")]
    DuplicateTerm(String),
    #[error("factor {factor:?} has {got} labels for {rows} responses")]
    RowMismatch { factor: String, rows: usize, got: usize },
    #[error("degenerate fit: {0}")]
    Degenerate(#[from] LinalgError),
}

/// Main effect (one factor) or interaction (two or three factors).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Term(Vec<String>);

impl Term {
    pub fn main(factor: impl Into<String>) -> Self {
        Term(vec![factor.into()])
    }

    pub fn factors(&self) -> &[String] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, factor: &str) -> bool {
        self.0.iter().any(|f| f == factor)
    }

    fn canonical(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.0.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("*"))
    }
}

impl FromStr for Term {
    type Err = ModelError;

    /// `"image"` or `"image*size"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<String> = s.split('*').map(|p| p.trim().to_string()).collect();
        if parts.iter().any(String::is_empty) || parts.len() > MAX_INTERACTION_ORDER {
            return Err(ModelError::BadTerm(s.to_string()));
        }
        let mut sorted = parts.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != parts.len() {
            return Err(ModelError::BadTerm(s.to_string()));
        }
        Ok(Term(parts))
    }
}

impl Serialize for Term {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered list of model terms; the intercept is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelSpec {
    terms: Vec<Term>,
}

impl ModelSpec {
    pub fn new(terms: Vec<Term>) -> Result<Self, ModelError> {
        let mut seen = std::collections::BTreeSet::new();
        for t in &terms {
            if !seen.insert(t.canonical()) {
                return Err(ModelError::DuplicateTerm(t.to_string()));
            }
        }
        for t in terms.iter().filter(|t| t.order() > 1) {
            for f in t.factors() {
                if !terms.iter().any(|m| m.order() == 1 && m.contains(f)) {
                    return Err(ModelError::MissingMainEffect { term: t.to_string(), factor: f.clone() });
                }
            }
        }
        Ok(Self { terms })
    }

    pub fn parse<S: AsRef<str>>(terms: &[S]) -> Result<Self, ModelError> {
        Self::new(terms.iter().map(|t| t.as_ref().parse()).collect::<Result<_, _>>()?)
    }

    pub fn intercept_only() -> Self {
        Self { terms: vec![] }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn main_effects(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().filter(|t| t.order() == 1).map(|t| t.0[0].as_str())
    }

    /// Spec with every term mentioning `factor` removed.
    pub fn without_factor(&self, factor: &str) -> Self {
        Self { terms: self.terms.iter().filter(|t| !t.contains(factor)).cloned().collect() }
    }
}

/// Response plus one categorical label column per factor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub response: Vec<f64>,
    pub factors: BTreeMap<String, Vec<String>>,
}

impl Dataset {
    pub fn new(response: Vec<f64>) -> Self {
        Self { response, factors: BTreeMap::new() }
    }

    pub fn with_factor<S: Into<String>>(mut self, name: &str, labels: impl IntoIterator<Item = S>) -> Self {
        self.factors.insert(name.to_string(), labels.into_iter().map(Into::into).collect());
        self
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    /// Number of distinct labels of `factor`.
    pub fn level_count(&self, factor: &str) -> Option<usize> {
        self.factors.get(factor).map(|l| l.iter().collect::<std::collections::BTreeSet<_>>().len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_terms() {
        let spec = ModelSpec::parse(&["image", "size", "image*size"]).unwrap();
        assert_eq!(spec.terms().len(), 3);
        assert_eq!(spec.terms()[2].to_string(), "image*size");
        assert_eq!(spec.main_effects().collect::<Vec<_>>(), ["image", "size"]);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(ModelSpec::parse(&["image*size"]), Err(ModelError::MissingMainEffect { .. })));
        assert!(matches!(
            ModelSpec::parse(&["a", "b", "a*b", "b*a"]),
            Err(ModelError::DuplicateTerm(_))
        ));
        assert!(matches!("a*a".parse::<Term>(), Err(ModelError::BadTerm(_))));
        assert!(matches!("a*b*c*d".parse::<Term>(), Err(ModelError::BadTerm(_))));
        assert!(matches!("a**b".parse::<Term>(), Err(ModelError::BadTerm(_))));
    }

    #[test]
    fn drops_factor_terms() {
        let spec = ModelSpec::parse(&["image", "size", "image*size"]).unwrap();
        assert_eq!(spec.without_factor("image"), ModelSpec::parse(&["size"]).unwrap());
    }
}
