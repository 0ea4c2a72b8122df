//! Synthetic two-event corpus generator with controllable trigger→label
//! correlation, label-frequency skew, and Vague fraction.
//!
//! Every document is a short mini-article: optional filler sentences around
//! one sentence per event. The TRUE label signal is a single context cue
//! word planted outside the event spans; the trigger pair is drawn from a
//! per-label family with probability `trigger_bias_strength`, which is what
//! a shortcut-prone model can latch onto. Cues come in many synonyms per
//! label while trigger families hold only a few pairs, so the shortcut is
//! statistically concentrated and the honest signal diluted. Vague records
//! plant two contradictory cues (and a mixed trigger pair) — context that
//! genuinely supports no single relation.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::records::CorpusRecord;
use crate::types::{LabelSet, VAGUE};

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    /// ρ_t: probability the trigger pair comes from the gold label's family
    /// (or, on anti-bias splits, from a deliberately wrong family).
    pub trigger_bias_strength: f64,
    /// ρ_l: extra probability mass tilted onto the first label.
    pub label_skew: f64,
    pub vague_fraction: f64,
    /// Reverse the trigger→label correlation on the dev and test splits
    /// while context cues stay truthful. Training data keeps the bias, so a
    /// shortcut-prone model walks into the trap.
    pub anti_bias_test: bool,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_train: 6000,
            n_dev: 1000,
            n_test: 1000,
            trigger_bias_strength: 0.7,
            label_skew: 0.3,
            vague_fraction: 1.0 / 6.0,
            anti_bias_test: false,
            seed: 42,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("n_train", self.n_train),
            ("n_dev", self.n_dev),
            ("n_test", self.n_test),
        ] {
            if n == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, f) in [
            ("trigger_bias_strength", self.trigger_bias_strength),
            ("label_skew", self.label_skew),
            ("vague_fraction", self.vague_fraction),
        ] {
            if !f.is_finite() || !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {f}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplits {
    pub train: Vec<CorpusRecord>,
    pub dev: Vec<CorpusRecord>,
    pub test: Vec<CorpusRecord>,
}

/// Word inventories: per-label cue synonyms, per-label trigger-pair
/// families, label-neutral filler, tense names. The four groups are
/// pairwise disjoint so cue detection and trigger uniqueness are exact.
struct Vocabulary {
    cues: Vec<Vec<String>>,
    trigger_pairs: Vec<Vec<(String, String)>>,
    filler: Vec<String>,
    tenses: Vec<String>,
}

const TENSES: [&str; 6] = [
    "Past Simple",
    "Past Perfect",
    "Present Simple",
    "Present Perfect",
    "Future Simple",
    "Past Progressive",
];

const FILLER: [&str; 40] = [
    "the", "a", "committee", "market", "report", "city", "team", "government", "analysts",
    "residents", "company", "officials", "project", "meeting", "crowd", "leaders", "plan",
    "economy", "students", "weather", "council", "festival", "workers", "investors", "museum",
    "river", "village", "journalists", "season", "parliament", "neighbors", "audience",
    "harvest", "bridge", "factory", "schools", "tourists", "farmers", "critics", "ministers",
];

const BEFORE_CUES: [&str; 12] = [
    "beforehand", "earlier", "previously", "initially", "firstly", "originally", "formerly",
    "antecedently", "foregoing", "erstwhile", "preliminarily", "aforetime",
];
const AFTER_CUES: [&str; 12] = [
    "afterwards", "later", "subsequently", "thereafter", "eventually", "finally", "lastly",
    "thereupon", "henceforth", "ultimately", "belatedly", "posteriorly",
];
const SIMULTANEOUS_CUES: [&str; 12] = [
    "meanwhile", "simultaneously", "concurrently", "together", "jointly", "synchronously",
    "alongside", "contemporaneously", "coevally", "coincidently", "overlappingly", "amid",
];

const BEFORE_PAIRS: [(&str, &str); 4] = [
    ("announced", "launched"),
    ("planned", "built"),
    ("proposed", "adopted"),
    ("trained", "competed"),
];
const AFTER_PAIRS: [(&str, &str); 4] = [
    ("collapsed", "weakened"),
    ("celebrated", "won"),
    ("recovered", "injured"),
    ("apologized", "offended"),
];
const SIMULTANEOUS_PAIRS: [(&str, &str); 4] = [
    ("marched", "chanted"),
    ("rained", "poured"),
    ("negotiated", "debated"),
    ("sang", "danced"),
];

impl Vocabulary {
    fn for_labels(labels: &LabelSet) -> Vocabulary {
        let canonical = ["Before", "After", "Simultaneous"];
        if labels.labels().iter().map(String::as_str).eq(canonical) {
            let own = |words: &[&str]| words.iter().map(|s| s.to_string()).collect::<Vec<_>>();
            let pairs = |ps: &[(&str, &str)]| {
                ps.iter()
                    .map(|(a, b)| (a.to_string(), b.to_string()))
                    .collect::<Vec<_>>()
            };
            return Vocabulary {
                cues: vec![own(&BEFORE_CUES), own(&AFTER_CUES), own(&SIMULTANEOUS_CUES)],
                trigger_pairs: vec![
                    pairs(&BEFORE_PAIRS),
                    pairs(&AFTER_PAIRS),
                    pairs(&SIMULTANEOUS_PAIRS),
                ],
                filler: own(&FILLER),
                tenses: own(&TENSES),
            };
        }
        // Any other label set gets a schematic vocabulary with the same
        // shape: 12 cue synonyms and 4 trigger pairs per label.
        let cues = labels
            .labels()
            .iter()
            .map(|l| (0..12).map(|i| format!("cue-{l}-{i}")).collect())
            .collect();
        let trigger_pairs = labels
            .labels()
            .iter()
            .map(|l| {
                (0..4)
                    .map(|i| (format!("trig-{l}-{i}-a"), format!("trig-{l}-{i}-b")))
                    .collect()
            })
            .collect();
        Vocabulary {
            cues,
            trigger_pairs,
            filler: (0..40).map(|i| format!("filler-{i}")).collect(),
            tenses: TENSES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Generate the three splits from one seeded stream: train first, then dev,
/// then test, so any split's content depends only on (config, label set).
pub fn generate(config: &GenConfig, labels: &LabelSet) -> Result<CorpusSplits> {
    config.validate()?;
    let vocab = Vocabulary::for_labels(labels);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let anti = config.anti_bias_test;
    Ok(CorpusSplits {
        train: gen_split(&mut rng, "train", config.n_train, false, config, labels, &vocab),
        dev: gen_split(&mut rng, "dev", config.n_dev, anti, config, labels, &vocab),
        test: gen_split(&mut rng, "test", config.n_test, anti, config, labels, &vocab),
    })
}

fn gen_split(
    rng: &mut ChaCha8Rng,
    split: &str,
    n: usize,
    anti: bool,
    config: &GenConfig,
    labels: &LabelSet,
    vocab: &Vocabulary,
) -> Vec<CorpusRecord> {
    // Exact Vague count, positions shuffled.
    let n_vague = (n as f64 * config.vague_fraction).round() as usize;
    let mut plan = vec![true; n_vague.min(n)];
    plan.resize(n, false);
    plan.shuffle(rng);
    plan.iter()
        .enumerate()
        .map(|(i, &is_vague)| gen_record(rng, split, i, is_vague, anti, config, labels, vocab))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn gen_record(
    rng: &mut ChaCha8Rng,
    split: &str,
    idx: usize,
    is_vague: bool,
    anti: bool,
    config: &GenConfig,
    labels: &LabelSet,
    vocab: &Vocabulary,
) -> CorpusRecord {
    let k = labels.k();
    // A class other than `base`, uniform over the rest.
    let other = |rng: &mut ChaCha8Rng, base: usize| (base + 1 + rng.random_range(0..k - 1)) % k;

    let (label, cues, trigger1, trigger2) = if is_vague {
        let c1 = rng.random_range(0..k);
        let c2 = other(rng, c1);
        let cue1 = vocab.cues[c1].choose(rng).unwrap().clone();
        let cue2 = vocab.cues[c2].choose(rng).unwrap().clone();
        // Mixed trigger pair: first word from one family, second from the
        // other — the trigger channel is as contradictory as the context.
        let t1 = vocab.trigger_pairs[c1].choose(rng).unwrap().0.clone();
        let t2 = vocab.trigger_pairs[c2].choose(rng).unwrap().1.clone();
        (VAGUE.to_string(), vec![cue1, cue2], t1, t2)
    } else {
        let gold = if rng.random_range(0.0..1.0) < config.label_skew {
            0
        } else {
            rng.random_range(0..k)
        };
        let cue = vocab.cues[gold].choose(rng).unwrap().clone();
        let family = if rng.random_range(0.0..1.0) < config.trigger_bias_strength {
            if anti {
                other(rng, gold)
            } else {
                gold
            }
        } else {
            rng.random_range(0..k)
        };
        let pair = vocab.trigger_pairs[family].choose(rng).unwrap().clone();
        (labels.label(gold).to_string(), vec![cue], pair.0, pair.1)
    };

    // Distribute cue words over the two event sentences.
    let mut cues1 = Vec::new();
    let mut cues2 = Vec::new();
    for cue in cues {
        if rng.random_bool(0.5) {
            cues1.push(cue);
        } else {
            cues2.push(cue);
        }
    }

    let lead = rng.random_bool(0.5);
    let trail = rng.random_bool(0.5);
    let mut sentences = Vec::new();
    if lead {
        sentences.push(filler_sentence(rng, vocab));
    }
    sentences.push(event_sentence(rng, vocab, &trigger1, &cues1));
    sentences.push(event_sentence(rng, vocab, &trigger2, &cues2));
    if trail {
        sentences.push(filler_sentence(rng, vocab));
    }

    let tense1 = vocab.tenses.choose(rng).unwrap().clone();
    let tense2 = vocab.tenses.choose(rng).unwrap().clone();
    let doc_id = format!("{split}-doc-{idx:05}");
    CorpusRecord {
        id: format!("{doc_id}:p0"),
        doc_id,
        e1: trigger1,
        e2: trigger2,
        narrative_idx1: 1,
        narrative_idx2: 2,
        tense1,
        tense2,
        sentences,
        label,
    }
}

fn filler_sentence(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> Vec<String> {
    let len = rng.random_range(4..=8);
    (0..len)
        .map(|_| vocab.filler.choose(rng).unwrap().clone())
        .collect()
}

/// Filler plus the planted cue words plus the trigger, trigger inserted
/// last so its single occurrence is guaranteed.
fn event_sentence(
    rng: &mut ChaCha8Rng,
    vocab: &Vocabulary,
    trigger: &str,
    cues: &[String],
) -> Vec<String> {
    let len = rng.random_range(3..=6);
    let mut toks: Vec<String> = (0..len)
        .map(|_| vocab.filler.choose(rng).unwrap().clone())
        .collect();
    for cue in cues {
        let pos = rng.random_range(0..=toks.len());
        toks.insert(pos, cue.clone());
    }
    let pos = rng.random_range(0..=toks.len());
    toks.insert(pos, trigger.to_string());
    toks
}

/// Generator self-check: a rule that only reads planted context cues. One
/// distinct cue label → that label; two or more → Vague. Must score ≥ 0.99
/// on anything this module generates.
pub fn cheat_accuracy(records: &[CorpusRecord], labels: &LabelSet) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyDataset("cheat-classifier check"));
    }
    let vocab = Vocabulary::for_labels(labels);
    let mut correct = 0usize;
    for r in records {
        let mut found: Vec<usize> = Vec::new();
        for tok in r.sentences.iter().flatten() {
            for (c, cues) in vocab.cues.iter().enumerate() {
                if cues.iter().any(|q| q == tok) && !found.contains(&c) {
                    found.push(c);
                }
            }
        }
        let prediction = match found.len() {
            1 => labels.label(found[0]),
            0 => "",
            _ => VAGUE,
        };
        if prediction == r.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / records.len() as f64)
}
