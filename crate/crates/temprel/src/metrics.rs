//! Confusion-matrix bookkeeping and F1 scores.
//!
//! Decisions live in a `(K+1)`-class space: the `K` relation labels plus the
//! abstention outcome. Reports need that space sliced three different ways,
//! so the matrix is stored once and scored under a [`Scope`]:
//!
//! * [`Scope::WithVague`] — the `(K+1)`-way report, abstention as its own
//!   class (also what threshold fitting optimizes);
//! * [`Scope::IdOnly`] — the `K`-way report over relation labels, rows with
//!   an abstention on either side excluded;
//! * [`Scope::NonAbstained`] — abstained rows dropped, but rows whose gold is
//!   the abstention label kept: a committed prediction on such a row counts
//!   against precision. This is the scope the β grid search scores.

use crate::error::{Error, Result};
use crate::types::Decision;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    MicroF1,
    MacroF1,
}

impl Metric {
    pub fn parse(s: &str) -> Result<Metric> {
        match s {
            "micro-f1" => Ok(Metric::MicroF1),
            "macro-f1" => Ok(Metric::MacroF1),
            other => Err(Error::Config(format!(
                "unknown metric {other:?} (expected micro-f1 or macro-f1)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    WithVague,
    IdOnly,
    NonAbstained,
}

/// `(K+1) × (K+1)` counts; index `K` is the abstention class on both axes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix {
            k,
            counts: vec![0; (k + 1) * (k + 1)],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn class_of(&self, gold: Option<usize>) -> usize {
        gold.unwrap_or(self.k)
    }

    pub fn record(&mut self, gold: Option<usize>, decision: &Decision) {
        let g = self.class_of(gold);
        let p = match decision {
            Decision::Predict(i) => *i,
            Decision::Vague => self.k,
        };
        debug_assert!(g <= self.k && p <= self.k);
        self.counts[g * (self.k + 1) + p] += 1;
    }

    pub fn count(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold * (self.k + 1) + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn included(&self, scope: Scope, g: usize, p: usize) -> bool {
        match scope {
            Scope::WithVague => true,
            Scope::IdOnly => g < self.k && p < self.k,
            Scope::NonAbstained => p < self.k,
        }
    }

    fn classes(&self, scope: Scope) -> usize {
        match scope {
            Scope::WithVague => self.k + 1,
            Scope::IdOnly | Scope::NonAbstained => self.k,
        }
    }

    /// (true positives, false positives, false negatives) for one class under
    /// a scope.
    fn tally(&self, scope: Scope, c: usize) -> (u64, u64, u64) {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for g in 0..=self.k {
            for p in 0..=self.k {
                if !self.included(scope, g, p) {
                    continue;
                }
                let n = self.count(g, p);
                if g == c && p == c {
                    tp += n;
                } else if p == c {
                    fp += n;
                } else if g == c {
                    fn_ += n;
                }
            }
        }
        (tp, fp, fn_)
    }

    /// Per-class F1 with the 0/0 → 0 convention.
    pub fn class_f1(&self, scope: Scope, c: usize) -> f64 {
        let (tp, fp, fn_) = self.tally(scope, c);
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    }

    /// Unweighted mean of per-class F1 over the scope's class set.
    pub fn macro_f1(&self, scope: Scope) -> f64 {
        let n = self.classes(scope);
        (0..n).map(|c| self.class_f1(scope, c)).sum::<f64>() / n as f64
    }

    /// Pooled F1. For scopes where every included row carries exactly one
    /// gold and one predicted class from the set, this equals accuracy.
    pub fn micro_f1(&self, scope: Scope) -> f64 {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for c in 0..self.classes(scope) {
            let (t, f, n) = self.tally(scope, c);
            tp += t;
            fp += f;
            fn_ += n;
        }
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    }

    pub fn f1(&self, metric: Metric, scope: Scope) -> f64 {
        match metric {
            Metric::MicroF1 => self.micro_f1(scope),
            Metric::MacroF1 => self.macro_f1(scope),
        }
    }

    /// Fraction of rows (within scope) whose prediction equals gold.
    pub fn accuracy(&self, scope: Scope) -> f64 {
        let mut correct = 0;
        let mut total = 0;
        for g in 0..=self.k {
            for p in 0..=self.k {
                if self.included(scope, g, p) {
                    let n = self.count(g, p);
                    total += n;
                    if g == p {
                        correct += n;
                    }
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        }
    }
}

/// Build a matrix from parallel gold/decision rows.
pub fn confusion(k: usize, rows: &[(Option<usize>, Decision)]) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::new(k);
    for (gold, dec) in rows {
        m.record(*gold, dec);
    }
    m
}
