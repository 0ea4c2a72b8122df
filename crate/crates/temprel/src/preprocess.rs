//! Deterministic text preparation: context-window selection, event-marker
//! enclosure with tense affixes, and hashed feature extraction with
//! counterfactual views.
//!
//! The marked layout for a pair (event 1, event 2) is, token for token:
//!
//! ```text
//! … @ * <tense1 tokens> * <trigger1> @ … # ∧ <tense2 tokens> ∧ <trigger2> # …
//! ```
//!
//! e.g. `People have @ * Present Perfect Simple * predicted @ his demise`.
//! Markers are standalone tokens, so stripping them recovers the original
//! window exactly and feature extraction can treat the two event spans
//! specially without any character-level surgery.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Marker tokens. The generator guarantees corpus tokens never equal these;
/// preprocessing asserts it.
pub const E1_OPEN_CLOSE: &str = "@";
pub const E2_OPEN_CLOSE: &str = "#";
pub const E1_TENSE_DELIM: &str = "*";
pub const E2_TENSE_DELIM: &str = "∧";

const MARKER_TOKENS: [&str; 4] = [E1_OPEN_CLOSE, E2_OPEN_CLOSE, E1_TENSE_DELIM, E2_TENSE_DELIM];

/// One event pair straight out of the corpus: tokenized sentences plus the
/// two trigger positions and their (externally supplied) tense names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPair {
    pub doc_id: String,
    pub sentences: Vec<Vec<String>>,
    /// (sentence index, token index) of the first event's trigger.
    pub e1_pos: (usize, usize),
    /// (sentence index, token index) of the second event's trigger.
    pub e2_pos: (usize, usize),
    pub tense1: String,
    pub tense2: String,
}

impl RawPair {
    pub fn validate(&self) -> Result<()> {
        for (name, (s, t)) in [("e1", self.e1_pos), ("e2", self.e2_pos)] {
            let sent = self.sentences.get(s).ok_or_else(|| {
                Error::Record(format!(
                    "{name} sentence index {s} out of range (doc {})",
                    self.doc_id
                ))
            })?;
            if t >= sent.len() {
                return Err(Error::Record(format!(
                    "{name} token index {t} out of range in sentence {s} (doc {})",
                    self.doc_id
                )));
            }
        }
        // Event 1 is the first event in narrative order.
        if self.e1_pos >= self.e2_pos {
            return Err(Error::Record(format!(
                "event 1 at {:?} does not precede event 2 at {:?} (doc {})",
                self.e1_pos, self.e2_pos, self.doc_id
            )));
        }
        Ok(())
    }

    pub fn trigger1(&self) -> &str {
        &self.sentences[self.e1_pos.0][self.e1_pos.1]
    }

    pub fn trigger2(&self) -> &str {
        &self.sentences[self.e2_pos.0][self.e2_pos.1]
    }
}

/// The contiguous sentence span handed to the featurizer, with trigger
/// positions re-based onto the window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextWindow {
    pub sentences: Vec<Vec<String>>,
    pub e1_pos: (usize, usize),
    pub e2_pos: (usize, usize),
}

impl ContextWindow {
    pub fn flatten(&self) -> Vec<String> {
        self.sentences.iter().flatten().cloned().collect()
    }
}

/// Select the window from the sentence before event 1 through the sentence
/// after event 2, clipped at document boundaries.
pub fn select_context(pair: &RawPair) -> Result<ContextWindow> {
    pair.validate()?;
    let start = pair.e1_pos.0.saturating_sub(1);
    let end = (pair.e2_pos.0 + 1).min(pair.sentences.len() - 1);
    Ok(ContextWindow {
        sentences: pair.sentences[start..=end].to_vec(),
        e1_pos: (pair.e1_pos.0 - start, pair.e1_pos.1),
        e2_pos: (pair.e2_pos.0 - start, pair.e2_pos.1),
    })
}

/// A flat token stream with both event spans marked, validated on
/// construction: exactly one `@ * … * <trigger> @` span and one
/// `# ∧ … ∧ <trigger> #` span, and no stray marker tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedContext {
    tokens: Vec<String>,
    /// Positions of the opening/closing `@` and the inner `*` pair.
    e1_span: (usize, usize),
    /// Positions of the opening/closing `#`.
    e2_span: (usize, usize),
}

fn find_span(tokens: &[String], open_close: &str, delim: &str) -> Result<(usize, usize)> {
    let marks: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.as_str() == open_close)
        .map(|(i, _)| i)
        .collect();
    if marks.len() != 2 {
        return Err(Error::Contract(format!(
            "expected exactly one {open_close}…{open_close} span, found {} marker tokens",
            marks.len()
        )));
    }
    let (open, close) = (marks[0], marks[1]);
    let delims: Vec<usize> = (open + 1..close)
        .filter(|&i| tokens[i] == delim)
        .collect();
    if delims.len() != 2 {
        return Err(Error::Contract(format!(
            "expected two {delim} tense delimiters inside the {open_close} span"
        )));
    }
    if delims[0] != open + 1 {
        return Err(Error::Contract(format!(
            "tense slot must open immediately after {open_close}"
        )));
    }
    // Exactly one trigger token between the closing delimiter and the close.
    if close != delims[1] + 2 {
        return Err(Error::Contract(format!(
            "expected exactly one trigger token before the closing {open_close}"
        )));
    }
    Ok((open, close))
}

impl MarkedContext {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let e1_span = find_span(&tokens, E1_OPEN_CLOSE, E1_TENSE_DELIM)?;
        let e2_span = find_span(&tokens, E2_OPEN_CLOSE, E2_TENSE_DELIM)?;
        if e1_span.1 > e2_span.0 && e2_span.1 > e1_span.0 {
            return Err(Error::Contract("event spans overlap".into()));
        }
        // No marker tokens outside their own span roles: the two span scans
        // account for all @/#; tense delimiters may only appear inside spans.
        for (i, t) in tokens.iter().enumerate() {
            let in_e1 = i >= e1_span.0 && i <= e1_span.1;
            let in_e2 = i >= e2_span.0 && i <= e2_span.1;
            if MARKER_TOKENS.contains(&t.as_str()) && !(in_e1 || in_e2) {
                return Err(Error::Contract(format!(
                    "marker token {t:?} collides with a corpus token at position {i}"
                )));
            }
            if in_e1 && t == E2_TENSE_DELIM || in_e2 && t == E1_TENSE_DELIM {
                return Err(Error::Contract(format!(
                    "marker token {t:?} inside the wrong event span"
                )));
            }
        }
        Ok(MarkedContext { tokens, e1_span, e2_span })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    fn span_parts(&self, span: (usize, usize)) -> (&[String], &str) {
        // span layout: open, delim, tense…, delim, trigger, close
        let tense = &self.tokens[span.0 + 2..span.1 - 2];
        let trigger = &self.tokens[span.1 - 1];
        (tense, trigger)
    }

    pub fn tense1_tokens(&self) -> &[String] {
        self.span_parts(self.e1_span).0
    }

    pub fn trigger1(&self) -> &str {
        self.span_parts(self.e1_span).1
    }

    pub fn tense2_tokens(&self) -> &[String] {
        self.span_parts(self.e2_span).0
    }

    pub fn trigger2(&self) -> &str {
        self.span_parts(self.e2_span).1
    }

    /// Window tokens outside both event spans.
    pub fn context_tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().enumerate().filter_map(|(i, t)| {
            let in_e1 = i >= self.e1_span.0 && i <= self.e1_span.1;
            let in_e2 = i >= self.e2_span.0 && i <= self.e2_span.1;
            if in_e1 || in_e2 {
                None
            } else {
                Some(t.as_str())
            }
        })
    }
}

/// Flatten the window and wrap both triggers with their markers and tense
/// affixes. Errors if a trigger position falls outside the window or any
/// window/tense token collides with a marker token.
pub fn affix_markers(window: &ContextWindow, pair: &RawPair) -> Result<MarkedContext> {
    for (name, (s, t)) in [("e1", window.e1_pos), ("e2", window.e2_pos)] {
        if window.sentences.get(s).is_none_or(|sent| t >= sent.len()) {
            return Err(Error::Contract(format!(
                "{name} trigger position {:?} outside the selected window",
                (s, t)
            )));
        }
    }
    for tok in window.sentences.iter().flatten() {
        if MARKER_TOKENS.contains(&tok.as_str()) {
            return Err(Error::Contract(format!(
                "corpus token {tok:?} collides with a marker token"
            )));
        }
    }
    for tense in [&pair.tense1, &pair.tense2] {
        if tense.split_whitespace().any(|t| MARKER_TOKENS.contains(&t)) {
            return Err(Error::Contract(format!(
                "tense {tense:?} contains a marker token"
            )));
        }
    }

    let mut out = Vec::new();
    for (s, sent) in window.sentences.iter().enumerate() {
        for (t, tok) in sent.iter().enumerate() {
            if (s, t) == window.e1_pos {
                out.push(E1_OPEN_CLOSE.to_string());
                out.push(E1_TENSE_DELIM.to_string());
                out.extend(pair.tense1.split_whitespace().map(str::to_string));
                out.push(E1_TENSE_DELIM.to_string());
                out.push(tok.clone());
                out.push(E1_OPEN_CLOSE.to_string());
            } else if (s, t) == window.e2_pos {
                out.push(E2_OPEN_CLOSE.to_string());
                out.push(E2_TENSE_DELIM.to_string());
                out.extend(pair.tense2.split_whitespace().map(str::to_string));
                out.push(E2_TENSE_DELIM.to_string());
                out.push(tok.clone());
                out.push(E2_OPEN_CLOSE.to_string());
            } else {
                out.push(tok.clone());
            }
        }
    }
    MarkedContext::new(out)
}

/// Remove markers and tense affixes, recovering the flattened window exactly.
pub fn strip_markers(marked: &MarkedContext) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(marked.tokens.len());
    let (e1, e2) = (marked.e1_span, marked.e2_span);
    for (i, t) in marked.tokens.iter().enumerate() {
        let in_e1 = i >= e1.0 && i <= e1.1;
        let in_e2 = i >= e2.0 && i <= e2.1;
        if in_e1 && i != e1.1 - 1 || in_e2 && i != e2.1 - 1 {
            continue; // span furniture; keep only the trigger itself
        }
        out.push(t.clone());
    }
    out
}

// ---------------------------------------------------------------------------
// Hashed features
// ---------------------------------------------------------------------------

/// Buckets per namespace; total feature dimension is `5 × 1024`.
pub const NAMESPACE_BUCKETS: usize = 1024;
pub const TOTAL_FEATURES: usize = NAMESPACE_BUCKETS * 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Namespace {
    Context,
    Trigger1,
    Trigger2,
    Tense,
    Bias,
}

impl Namespace {
    pub const ALL: [Namespace; 5] = [
        Namespace::Context,
        Namespace::Trigger1,
        Namespace::Trigger2,
        Namespace::Tense,
        Namespace::Bias,
    ];

    fn ordinal(self) -> usize {
        match self {
            Namespace::Context => 0,
            Namespace::Trigger1 => 1,
            Namespace::Trigger2 => 2,
            Namespace::Tense => 3,
            Namespace::Bias => 4,
        }
    }

    pub fn offset(self) -> u32 {
        (self.ordinal() * NAMESPACE_BUCKETS) as u32
    }

    /// Which namespace a flat feature index belongs to.
    pub fn of_index(idx: u32) -> Namespace {
        Namespace::ALL[idx as usize / NAMESPACE_BUCKETS]
    }
}

/// 64-bit FNV-1a.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Flat index of `token` hashed into `ns`.
pub fn bucket_of(ns: Namespace, token: &str) -> u32 {
    ns.offset() + (fnv1a64(token.as_bytes()) % NAMESPACE_BUCKETS as u64) as u32
}

/// Sparse bag-of-buckets vector: (flat index, count), sorted by index.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn from_counts(counts: BTreeMap<u32, f64>) -> Self {
        FeatureVector {
            entries: counts.into_iter().collect(),
        }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    /// Keep only entries whose namespace passes the filter.
    pub fn mask(&self, keep: impl Fn(Namespace) -> bool) -> FeatureVector {
        FeatureVector {
            entries: self
                .entries
                .iter()
                .filter(|(idx, _)| keep(Namespace::of_index(*idx)))
                .cloned()
                .collect(),
        }
    }
}

/// Hash a marked context into the five namespaces.
///
/// Window tokens outside the event spans land in `context`; each trigger goes
/// (only) to its own namespace; the full tense strings go to `tense` with a
/// slot prefix so the two events' tenses stay distinguishable; `bias` is a
/// single always-on feature — the hook the empty view hangs on to.
pub fn featurize(marked: &MarkedContext) -> FeatureVector {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for tok in marked.context_tokens() {
        *counts.entry(bucket_of(Namespace::Context, tok)).or_insert(0.0) += 1.0;
    }
    *counts
        .entry(bucket_of(Namespace::Trigger1, marked.trigger1()))
        .or_insert(0.0) += 1.0;
    *counts
        .entry(bucket_of(Namespace::Trigger2, marked.trigger2()))
        .or_insert(0.0) += 1.0;
    let tense1 = format!("t1={}", marked.tense1_tokens().join(" "));
    let tense2 = format!("t2={}", marked.tense2_tokens().join(" "));
    *counts.entry(bucket_of(Namespace::Tense, &tense1)).or_insert(0.0) += 1.0;
    *counts.entry(bucket_of(Namespace::Tense, &tense2)).or_insert(0.0) += 1.0;
    *counts.entry(Namespace::Bias.offset()).or_insert(0.0) += 1.0;
    FeatureVector::from_counts(counts)
}

/// The three model inputs per instance: everything, triggers without their
/// context, and the constant bias-only input.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureViews {
    pub full: FeatureVector,
    pub trigger_only: FeatureVector,
    pub empty: FeatureVector,
}

/// Mask the full feature vector down to the counterfactual views: the
/// trigger-only view zeroes the context namespace (triggers, tenses and bias
/// survive); the empty view keeps only the bias feature.
pub fn derive_views(full: &FeatureVector) -> FeatureViews {
    FeatureViews {
        full: full.clone(),
        trigger_only: full.mask(|ns| ns != Namespace::Context),
        empty: full.mask(|ns| ns == Namespace::Bias),
    }
}

/// A fully prepared instance: identity, gold label (`None` = no defined
/// relation), narrative indices, and the three feature views.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub doc_id: String,
    pub gold: Option<usize>,
    pub narrative: (u32, u32),
    pub e1: String,
    pub e2: String,
    pub views: FeatureViews,
}

/// Run the whole preparation chain for one pair.
pub fn featurize_pair(pair: &RawPair) -> Result<FeatureViews> {
    let window = select_context(pair)?;
    let marked = affix_markers(&window, pair)?;
    Ok(derive_views(&featurize(&marked)))
}
