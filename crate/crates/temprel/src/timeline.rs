//! Timeline construction from pairwise decisions: build a confidence-weighted
//! directed graph, greedily delete the weakest cycle edges until it is a DAG,
//! topologically sort, and score predicted orderings against gold.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use crate::error::{Error, Result};
use crate::types::{Decision, LabelSet, VAGUE};

/// One event mention: a document-unique id plus its position in narrative
/// order (used for deterministic tie-breaking).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRef {
    pub id: String,
    pub narrative_index: u32,
}

/// How a pairwise decision acts on the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationCall {
    /// Event 1 precedes event 2: edge e₁ → e₂.
    Before,
    /// Event 2 precedes event 1: edge e₂ → e₁.
    After,
    /// No direction a linear timeline can host; contributes no edge.
    Simultaneous,
    /// Abstention; contributes no edge.
    Vague,
}

impl RelationCall {
    /// Map a label string onto its graph action. Timeline construction only
    /// understands the three canonical relation names (plus abstention);
    /// other label vocabularies have no defined direction here.
    pub fn from_label(label: &str) -> Result<Self> {
        match label {
            "Before" => Ok(RelationCall::Before),
            "After" => Ok(RelationCall::After),
            "Simultaneous" => Ok(RelationCall::Simultaneous),
            VAGUE => Ok(RelationCall::Vague),
            other => Err(Error::Config(format!(
                "label {other:?} has no timeline direction"
            ))),
        }
    }

    pub fn from_decision(decision: &Decision, labels: &LabelSet) -> Result<Self> {
        match decision {
            Decision::Vague => Ok(RelationCall::Vague),
            Decision::Predict(i) => RelationCall::from_label(labels.label(*i)),
        }
    }
}

/// One classified event pair, as consumed by [`build_graph`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairObservation {
    pub e1: EventRef,
    pub e2: EventRef,
    pub call: RelationCall,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineEdge {
    pub from: String,
    pub to: String,
    pub confidence: f64,
    pub relation: RelationCall,
}

/// Directed relation graph over a document's events.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineGraph {
    /// Sorted by (narrative index, id).
    vertices: Vec<EventRef>,
    edges: Vec<TimelineEdge>,
}

impl TimelineGraph {
    pub fn vertices(&self) -> &[EventRef] {
        &self.vertices
    }

    pub fn edges(&self) -> &[TimelineEdge] {
        &self.edges
    }

    fn index_of(&self, id: &str) -> usize {
        self.vertices
            .iter()
            .position(|v| v.id == id)
            .expect("edge endpoints are vertices")
    }

    /// Adjacency over vertex indices.
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            adj[self.index_of(&e.from)].push(self.index_of(&e.to));
        }
        adj
    }
}

/// Assemble the graph: Before-calls add a forward edge, After-calls a
/// backward edge, Simultaneous and abstentions add none. Every mentioned
/// event becomes a vertex either way. Rejects self-pairs, duplicate pairs
/// (in either orientation), inconsistent narrative indices, and confidences
/// outside `(0, 1]`.
pub fn build_graph(pairs: &[PairObservation]) -> Result<TimelineGraph> {
    let mut narrative: BTreeMap<String, u32> = BTreeMap::new();
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    let mut edges = Vec::new();
    for p in pairs {
        if p.e1.id == p.e2.id {
            return Err(Error::Record(format!(
                "pair relates event {:?} to itself",
                p.e1.id
            )));
        }
        if !p.confidence.is_finite() || p.confidence <= 0.0 || p.confidence > 1.0 {
            return Err(Error::Record(format!(
                "confidence {} outside (0, 1] on pair ({}, {})",
                p.confidence, p.e1.id, p.e2.id
            )));
        }
        for ev in [&p.e1, &p.e2] {
            match narrative.get(&ev.id) {
                None => {
                    narrative.insert(ev.id.clone(), ev.narrative_index);
                }
                Some(&idx) if idx != ev.narrative_index => {
                    return Err(Error::Record(format!(
                        "event {:?} appears with narrative indices {idx} and {}",
                        ev.id, ev.narrative_index
                    )));
                }
                Some(_) => {}
            }
        }
        let key = if p.e1.id <= p.e2.id {
            (p.e1.id.clone(), p.e2.id.clone())
        } else {
            (p.e2.id.clone(), p.e1.id.clone())
        };
        if !seen.insert(key) {
            return Err(Error::DuplicatePair(p.e1.id.clone(), p.e2.id.clone()));
        }
        let edge = match p.call {
            RelationCall::Before => Some((p.e1.id.clone(), p.e2.id.clone())),
            RelationCall::After => Some((p.e2.id.clone(), p.e1.id.clone())),
            RelationCall::Simultaneous | RelationCall::Vague => None,
        };
        if let Some((from, to)) = edge {
            edges.push(TimelineEdge {
                from,
                to,
                confidence: p.confidence,
                relation: p.call,
            });
        }
    }
    let mut vertices: Vec<EventRef> = narrative
        .into_iter()
        .map(|(id, narrative_index)| EventRef { id, narrative_index })
        .collect();
    vertices.sort_by(|a, b| (a.narrative_index, &a.id).cmp(&(b.narrative_index, &b.id)));
    Ok(TimelineGraph { vertices, edges })
}

/// Strongly connected component id per vertex (iterative Tarjan).
fn scc_ids(n: usize, adj: &[Vec<usize>]) -> Vec<usize> {
    const UNSET: usize = usize::MAX;
    let mut index = vec![UNSET; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut comp = vec![UNSET; n];
    let mut next_index = 0usize;
    let mut next_comp = 0usize;

    for start in 0..n {
        if index[start] != UNSET {
            continue;
        }
        let mut frames: Vec<(usize, usize)> = vec![(start, 0)];
        while let Some(frame) = frames.last_mut() {
            let v = frame.0;
            if frame.1 == 0 {
                index[v] = next_index;
                low[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if frame.1 < adj[v].len() {
                let w = adj[v][frame.1];
                frame.1 += 1;
                if index[w] == UNSET {
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
                frames.pop();
                if let Some(parent) = frames.last() {
                    let pv = parent.0;
                    low[pv] = low[pv].min(low[v]);
                }
            }
        }
    }
    comp
}

/// Delete edges until the graph is acyclic: at each step, among edges lying
/// on at least one cycle (endpoints in a common strongly connected
/// component), remove the one with globally minimum confidence, ties broken
/// by lexicographically smallest `(from, to)`. Returns the DAG and the
/// removals in order.
pub fn make_acyclic(g: &TimelineGraph) -> (TimelineGraph, Vec<TimelineEdge>) {
    let mut g = g.clone();
    let mut removed = Vec::new();
    loop {
        let adj = g.adjacency();
        let comp = scc_ids(g.vertices.len(), &adj);
        let candidate = g
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| comp[g.index_of(&e.from)] == comp[g.index_of(&e.to)])
            .min_by(|(_, a), (_, b)| {
                a.confidence
                    .partial_cmp(&b.confidence)
                    .expect("confidences are finite")
                    .then_with(|| (&a.from, &a.to).cmp(&(&b.from, &b.to)))
            })
            .map(|(i, _)| i);
        match candidate {
            Some(i) => removed.push(g.edges.remove(i)),
            None => break,
        }
    }
    (g, removed)
}

/// A linear ordering of a document's events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timeline {
    pub order: Vec<String>,
}

/// Kahn's algorithm: repeatedly emit the in-degree-zero vertex with the
/// smallest narrative index (then smallest id). Errors if the graph still
/// holds a cycle — callers must finalize with [`make_acyclic`] first.
pub fn topo_sort(g: &TimelineGraph) -> Result<Timeline> {
    let n = g.vertices.len();
    let adj = g.adjacency();
    let mut indegree = vec![0usize; n];
    for targets in &adj {
        for &t in targets {
            indegree[t] += 1;
        }
    }
    // Min-heap keyed by (narrative index, id).
    let mut ready: BinaryHeap<std::cmp::Reverse<(u32, String, usize)>> = (0..n)
        .filter(|&v| indegree[v] == 0)
        .map(|v| {
            std::cmp::Reverse((g.vertices[v].narrative_index, g.vertices[v].id.clone(), v))
        })
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(std::cmp::Reverse((_, id, v))) = ready.pop() {
        order.push(id);
        for &w in &adj[v] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                ready.push(std::cmp::Reverse((
                    g.vertices[w].narrative_index,
                    g.vertices[w].id.clone(),
                    w,
                )));
            }
        }
    }
    if order.len() != n {
        return Err(Error::CycleDetected);
    }
    Ok(Timeline { order })
}

/// Unit-cost Levenshtein distance over whole tokens.
pub fn levenshtein(a: &[String], b: &[String]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for (i, ai) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, bj) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ai != bj);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimelineScore {
    pub exact_match: bool,
    /// Minimum edit distance between the two orderings.
    pub med: usize,
}

/// Compare a predicted ordering against gold. Both must order the same event
/// set.
pub fn timeline_metrics(pred: &Timeline, gold: &Timeline) -> Result<TimelineScore> {
    let mut a: Vec<&String> = pred.order.iter().collect();
    let mut b: Vec<&String> = gold.order.iter().collect();
    a.sort();
    b.sort();
    if a != b {
        return Err(Error::MismatchedEvents);
    }
    let med = levenshtein(&pred.order, &gold.order);
    Ok(TimelineScore {
        exact_match: pred.order == gold.order,
        med,
    })
}
