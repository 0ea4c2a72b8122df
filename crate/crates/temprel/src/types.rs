//! Core value types shared across the pipeline.
//!
//! The constructors here are the crate's validation choke points: once a
//! value is wrapped in [`Logits`], [`Categorical`] or [`DirichletParams`] the
//! numeric code downstream can assume finiteness / simplex membership /
//! positivity without re-checking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The reserved abstention label. Never a member of a [`LabelSet`].
pub const VAGUE: &str = "Vague";

/// How far a [`Categorical`]'s coordinates may sum away from 1.
///
/// Wide enough to re-admit distributions whose coordinates were rounded to
/// nine significant digits on their way through a JSON artifact.
pub const SIMPLEX_SUM_TOL: f64 = 1e-7;

/// The closed label set `R` of directed relations the classifier scores.
///
/// `Vague` is deliberately *not* a member: abstention is a decision the
/// pipeline makes, not a class the model scores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::Config(format!(
                "label set needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::Config(format!("label {i} is empty")));
            }
            if l == VAGUE {
                return Err(Error::Config(format!(
                    "label set must not contain the reserved abstention label {VAGUE:?}"
                )));
            }
            if labels[..i].contains(l) {
                return Err(Error::Config(format!("duplicate label {l:?}")));
            }
        }
        Ok(LabelSet { labels })
    }

    /// Number of labels `K`.
    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Index for a gold annotation that may be the abstention label:
    /// `Ok(None)` means `Vague`, `Ok(Some(i))` a real relation.
    pub fn gold_index(&self, label: &str) -> Result<Option<usize>> {
        if label == VAGUE {
            return Ok(None);
        }
        self.index_of(label).map(Some).ok_or_else(|| {
            Error::Record(format!("unknown label {label:?} (expected one of {:?} or {VAGUE:?})", self.labels))
        })
    }
}

impl Default for LabelSet {
    /// The three directed temporal relations used throughout: the pairwise
    /// classifier orders event 1 against event 2.
    fn default() -> Self {
        LabelSet::new(vec![
            "Before".to_string(),
            "After".to_string(),
            "Simultaneous".to_string(),
        ])
        .expect("default label set is valid")
    }
}

/// A finite real vector of per-class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(Vec<f64>);

impl Logits {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::Domain("logit vector is empty".into()));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logits"));
        }
        Ok(Logits(z))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// A point on the probability simplex: entries in `[0, 1]` summing to 1
/// within [`SIMPLEX_SUM_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical(Vec<f64>);

impl Categorical {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidDistribution("empty vector".into()));
        }
        let mut sum = 0.0;
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidDistribution(format!(
                    "coordinate {i} = {v} is outside [0, 1]"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "coordinates sum to {sum}, not 1"
            )));
        }
        Ok(Categorical(y))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidDistribution("empty vector".into()));
        }
        Ok(Categorical(vec![1.0 / k as f64; k]))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest coordinate; the first one on exact ties.
    pub fn argmax(&self) -> usize {
        crate::numeric::argmax(&self.0)
    }

    /// The largest coordinate, i.e. the confidence of the argmax decision.
    pub fn max_prob(&self) -> f64 {
        self.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Concentration parameters of a Dirichlet distribution: strictly positive
/// finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams(Vec<f64>);

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::Domain(format!(
                "Dirichlet needs at least 2 concentrations, got {}",
                alpha.len()
            )));
        }
        for (i, &a) in alpha.iter().enumerate() {
            if !a.is_finite() || a <= 0.0 {
                return Err(Error::Domain(format!(
                    "concentration {i} = {a} is not a positive finite real"
                )));
            }
        }
        Ok(DirichletParams(alpha))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total concentration `α₀ = Σ αₖ`.
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// What the pipeline ultimately emits for one event pair: commit to a
/// relation or abstain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Predict(usize),
    Vague,
}

impl Decision {
    pub fn is_vague(&self) -> bool {
        matches!(self, Decision::Vague)
    }

    /// Render against a label set (`Vague` for abstention).
    pub fn label<'a>(&self, labels: &'a LabelSet) -> &'a str {
        match self {
            Decision::Predict(i) => labels.label(*i),
            Decision::Vague => VAGUE,
        }
    }

    /// Parse a rendered decision back to its index form.
    pub fn parse(s: &str, labels: &LabelSet) -> Result<Self> {
        if s == VAGUE {
            return Ok(Decision::Vague);
        }
        labels
            .index_of(s)
            .map(Decision::Predict)
            .ok_or_else(|| Error::Record(format!("unknown decision label {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_set_rejects_degenerate_inputs() {
        assert!(LabelSet::new(vec!["A".into()]).is_err());
        assert!(LabelSet::new(vec!["A".into(), "A".into()]).is_err());
        assert!(LabelSet::new(vec!["A".into(), VAGUE.into()]).is_err());
        assert!(LabelSet::new(vec!["A".into(), "".into()]).is_err());
        let ls = LabelSet::default();
        assert_eq!(ls.k(), 3);
        assert_eq!(ls.index_of("After"), Some(1));
        assert_eq!(ls.gold_index(VAGUE).unwrap(), None);
        assert_eq!(ls.gold_index("Before").unwrap(), Some(0));
        assert!(ls.gold_index("Until").is_err());
    }

    #[test]
    fn logits_must_be_finite() {
        assert!(Logits::new(vec![0.0, f64::NAN]).is_err());
        assert!(Logits::new(vec![0.0, f64::INFINITY]).is_err());
        assert!(Logits::new(vec![]).is_err());
        assert!(Logits::new(vec![-1e300, 1e300]).is_ok());
    }

    #[test]
    fn categorical_enforces_simplex() {
        assert!(Categorical::new(vec![0.5, 0.5]).is_ok());
        assert!(Categorical::new(vec![0.6, 0.6]).is_err());
        assert!(Categorical::new(vec![-0.1, 1.1]).is_err());
        assert!(Categorical::new(vec![1.0, 0.0]).is_ok());
        // Within tolerance of 1 is accepted.
        assert!(Categorical::new(vec![0.5 + 4e-10, 0.5]).is_ok());
        let u = Categorical::uniform(4).unwrap();
        assert_eq!(u.as_slice(), &[0.25; 4]);
    }

    #[test]
    fn argmax_takes_first_on_ties() {
        let y = Categorical::new(vec![0.25, 0.25, 0.5]).unwrap();
        assert_eq!(y.argmax(), 2);
        let tie = Categorical::new(vec![0.4, 0.4, 0.2]).unwrap();
        assert_eq!(tie.argmax(), 0);
    }

    #[test]
    fn dirichlet_params_require_positive() {
        assert!(DirichletParams::new(vec![1.0, 0.0]).is_err());
        assert!(DirichletParams::new(vec![1.0, -2.0]).is_err());
        assert!(DirichletParams::new(vec![1.0]).is_err());
        let a = DirichletParams::new(vec![2.0, 3.0]).unwrap();
        assert!((a.total() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn decision_round_trips_through_labels() {
        let ls = LabelSet::default();
        let d = Decision::Predict(2);
        assert_eq!(d.label(&ls), "Simultaneous");
        assert_eq!(Decision::parse("Simultaneous", &ls).unwrap(), d);
        assert_eq!(Decision::parse(VAGUE, &ls).unwrap(), Decision::Vague);
        assert!(Decision::parse("nope", &ls).is_err());
    }
}
