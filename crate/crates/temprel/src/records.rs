//! JSONL record schemas (corpus, predictions, timelines) and the shared
//! line-oriented readers/writers. Floats are stored at 9 significant digits
//! so artifacts diff cleanly and reruns are byte-stable.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::counterfactual::PredictionTriple;
use crate::error::{Error, Result};
use crate::numeric::{round_sig9, round_sig9_vec};
use crate::pipeline::PipelineOutcome;
use crate::preprocess::{featurize_pair, Instance, RawPair};
use crate::types::LabelSet;

/// One classified event pair as stored in corpus JSONL files. `e1`/`e2` are
/// the trigger tokens, each of which must occur exactly once in the
/// document so positions can be recovered from text alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub doc_id: String,
    pub e1: String,
    pub e2: String,
    pub narrative_idx1: u32,
    pub narrative_idx2: u32,
    pub tense1: String,
    pub tense2: String,
    pub sentences: Vec<Vec<String>>,
    pub label: String,
}

impl CorpusRecord {
    pub fn validate(&self, labels: &LabelSet) -> Result<()> {
        labels.gold_index(&self.label)?;
        for (name, v) in [("id", &self.id), ("doc_id", &self.doc_id)] {
            if v.is_empty() {
                return Err(Error::Record(format!("record with empty {name}")));
            }
        }
        if self.e1 == self.e2 {
            return Err(Error::Record(format!(
                "record {}: e1 and e2 are the same token {:?}",
                self.id, self.e1
            )));
        }
        if self.narrative_idx1 >= self.narrative_idx2 {
            return Err(Error::Record(format!(
                "record {}: narrative indices must increase, got {} then {}",
                self.id, self.narrative_idx1, self.narrative_idx2
            )));
        }
        for (name, trig) in [("e1", &self.e1), ("e2", &self.e2)] {
            let n = self
                .sentences
                .iter()
                .flatten()
                .filter(|t| *t == trig)
                .count();
            if n != 1 {
                return Err(Error::Record(format!(
                    "record {}: trigger {name}={trig:?} occurs {n} times, need exactly 1",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Locate the (unique) trigger tokens and rebuild the positional form.
    pub fn to_raw_pair(&self) -> Result<RawPair> {
        let locate = |trig: &str| -> Option<(usize, usize)> {
            for (s, sent) in self.sentences.iter().enumerate() {
                if let Some(t) = sent.iter().position(|tok| tok == trig) {
                    return Some((s, t));
                }
            }
            None
        };
        let e1_pos = locate(&self.e1).ok_or_else(|| {
            Error::Record(format!("record {}: trigger {:?} not found", self.id, self.e1))
        })?;
        let e2_pos = locate(&self.e2).ok_or_else(|| {
            Error::Record(format!("record {}: trigger {:?} not found", self.id, self.e2))
        })?;
        let pair = RawPair {
            doc_id: self.doc_id.clone(),
            sentences: self.sentences.clone(),
            e1_pos,
            e2_pos,
            tense1: self.tense1.clone(),
            tense2: self.tense2.clone(),
        };
        pair.validate()?;
        Ok(pair)
    }

    /// Full preparation: validate, recover positions, featurize.
    pub fn to_instance(&self, labels: &LabelSet) -> Result<Instance> {
        self.validate(labels)?;
        let pair = self.to_raw_pair()?;
        let views = featurize_pair(&pair)?;
        Ok(Instance {
            id: self.id.clone(),
            doc_id: self.doc_id.clone(),
            gold: labels.gold_index(&self.label)?,
            narrative: (self.narrative_idx1, self.narrative_idx2),
            e1: self.e1.clone(),
            e2: self.e2.clone(),
            views,
        })
    }
}

/// One pipeline output line: the three view predictions, the debiased
/// vector, the final calibrated distribution, and the decision taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub y_full: Vec<f64>,
    pub y_trigger: Vec<f64>,
    pub y_empty: Vec<f64>,
    pub y_debiased: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub entropy: f64,
    pub decision: String,
    pub confidence: f64,
}

impl PredictionRecord {
    /// Assemble from pipeline results, rounding every float for storage.
    pub fn from_outcome(
        id: &str,
        triple: &PredictionTriple,
        outcome: &PipelineOutcome,
        labels: &LabelSet,
    ) -> Self {
        PredictionRecord {
            id: id.to_string(),
            y_full: round_sig9_vec(triple.full.as_slice()),
            y_trigger: round_sig9_vec(triple.trigger.as_slice()),
            y_empty: round_sig9_vec(triple.empty.as_slice()),
            y_debiased: round_sig9_vec(&outcome.debiased),
            y_hat: round_sig9_vec(outcome.y_hat.as_slice()),
            entropy: round_sig9(outcome.entropy),
            decision: outcome.decision.label(labels).to_string(),
            confidence: round_sig9(outcome.confidence),
        }
    }

    pub fn validate(&self, labels: &LabelSet) -> Result<()> {
        let k = labels.k();
        for (name, v) in [
            ("y_full", &self.y_full),
            ("y_trigger", &self.y_trigger),
            ("y_empty", &self.y_empty),
            ("y_debiased", &self.y_debiased),
            ("y_hat", &self.y_hat),
        ] {
            if v.len() != k {
                return Err(Error::Record(format!(
                    "prediction {}: {name} has {} entries, label set has {k}",
                    self.id,
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Record(format!(
                    "prediction {}: {name} has a non-finite entry",
                    self.id
                )));
            }
        }
        labels.gold_index(&self.decision)?;
        if !self.entropy.is_finite() || self.entropy < 0.0 {
            return Err(Error::Record(format!(
                "prediction {}: bad entropy {}",
                self.id, self.entropy
            )));
        }
        if !(self.confidence > 0.0 && self.confidence <= 1.0) {
            return Err(Error::Record(format!(
                "prediction {}: confidence {} outside (0, 1]",
                self.id, self.confidence
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedEdgeRecord {
    pub from: String,
    pub to: String,
    pub confidence: f64,
}

/// Per-document timeline result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineRecord {
    pub doc_id: String,
    /// Event ids in predicted temporal order.
    pub timeline: Vec<String>,
    /// Cycle edges deleted during finalization, in removal order.
    pub removed_edges: Vec<RemovedEdgeRecord>,
    /// 1 when the predicted ordering equals gold exactly.
    pub exact_match: u8,
    /// Edit distance between predicted and gold orderings.
    pub med: usize,
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            Error::Record(format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        out.push(item);
    }
    Ok(out)
}
