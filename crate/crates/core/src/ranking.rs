//! Backend scoring: Clifford-canary fidelity and subgraph-embedding topology
//! cost. Lower scores are better.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{cliffordize, topology_to_circuit, Circuit, GateKind, TopologyGraph};
use crate::device::Backend;
use crate::sim::{
    hellinger_fidelity, ideal_probabilities, sim_clifford_noisy, NoiseModel, Probabilities, SimError,
};
use crate::transpile::{to_clifford_basis, transpile, TranspileError};

/// Weight of the canary-infidelity tie-break term in fidelity scores.
pub const FIDELITY_LAMBDA: f64 = 1e-3;
pub const EMBEDDING_LIMIT: usize = 10_000;
pub const EMBEDDING_BUDGET: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RankingError {
    #[error("circuit needs {needed} qubits but the backend has {available}")]
    TooFewQubits { needed: usize, available: usize },
    #[error("embedding is not valid for this backend: {0}")]
    InvalidEmbedding(String),
    #[error(transparent)]
    Transpile(#[from] TranspileError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    #[serde(flatten)]
    pub detail: ScoreDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase")]
pub enum ScoreDetail {
    Fidelity {
        f_canary: f64,
        shots: u64,
        swaps: usize,
    },
    Topology {
        /// Error-product cost of the best placement found.
        cost: f64,
        /// Best embedding (pattern node -> physical qubit), when one exists.
        embedding: Option<Vec<usize>>,
        embeddings_found: usize,
        truncated: bool,
        /// True when no embedding exists and the pattern was routed with SWAPs.
        routed: bool,
        /// True for requests larger than the backend.
        oversized: bool,
    },
}

impl Score {
    pub fn f_canary(&self) -> Option<f64> {
        match self.detail {
            ScoreDetail::Fidelity { f_canary, .. } => Some(f_canary),
            ScoreDetail::Topology { .. } => None,
        }
    }
}

/// Embeddings found by [`vf2_embeddings`]; `truncated` when a cap stopped the search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Embeddings {
    pub maps: Vec<Vec<usize>>,
    pub truncated: bool,
}

/// Pattern nodes in search order: each next node has the most already-ordered
/// neighbours (then higher degree, then lower index).
fn search_order(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    let mut links = vec![0usize; n];
    for _ in 0..n {
        let next = (0..n)
            .filter(|&v| !placed[v])
            .max_by_key(|&v| (links[v], adj[v].len(), std::cmp::Reverse(v)))
            .expect("unplaced node remains");
        placed[next] = true;
        order.push(next);
        for &w in &adj[next] {
            links[w] += 1;
        }
    }
    order
}

struct Search<'a> {
    p_adj: &'a [Vec<usize>],
    h_adj: &'a [Vec<usize>],
    host: &'a TopologyGraph,
    order: Vec<usize>,
    map: Vec<usize>,
    used: Vec<bool>,
    out: Vec<Vec<usize>>,
    limit: usize,
    deadline: Instant,
    steps: u64,
    truncated: bool,
}

impl Search<'_> {
    fn run(&mut self, depth: usize) {
        if self.truncated {
            return;
        }
        if depth == self.order.len() {
            self.out.push(self.map.clone());
            if self.out.len() >= self.limit {
                self.truncated = true;
            }
            return;
        }
        self.steps += 1;
        if self.steps % 1024 == 0 && Instant::now() >= self.deadline {
            self.truncated = true;
            return;
        }
        let u = self.order[depth];
        let anchor = self.p_adj[u].iter().find(|&&w| self.map[w] != usize::MAX).copied();
        let candidates: Vec<usize> = match anchor {
            Some(w) => self.h_adj[self.map[w]].clone(),
            None => (0..self.h_adj.len()).collect(),
        };
        for h in candidates {
            if self.used[h] || self.h_adj[h].len() < self.p_adj[u].len() {
                continue;
            }
            let consistent =
                self.p_adj[u].iter().all(|&w| self.map[w] == usize::MAX || self.host.has_edge(h, self.map[w]));
            if !consistent {
                continue;
            }
            self.map[u] = h;
            self.used[h] = true;
            self.run(depth + 1);
            self.map[u] = usize::MAX;
            self.used[h] = false;
            if self.truncated {
                return;
            }
        }
    }
}

/// Enumerates non-induced subgraph embeddings of `pattern` into `host` in a
/// deterministic order, stopping after `limit` results or `budget` time.
pub fn vf2_embeddings(pattern: &TopologyGraph, host: &TopologyGraph, limit: usize, budget: Duration) -> Embeddings {
    if pattern.num_nodes() > host.num_nodes() || limit == 0 {
        return Embeddings { maps: Vec::new(), truncated: limit == 0 };
    }
    let p_adj = pattern.adjacency();
    let h_adj = host.adjacency();
    let mut search = Search {
        order: search_order(&p_adj),
        p_adj: &p_adj,
        h_adj: &h_adj,
        host,
        map: vec![usize::MAX; pattern.num_nodes()],
        used: vec![false; host.num_nodes()],
        out: Vec::new(),
        limit,
        deadline: Instant::now() + budget,
        steps: 0,
        truncated: false,
    };
    search.run(0);
    Embeddings { maps: search.out, truncated: search.truncated }
}

/// `1 - prod(1 - eps)` over the gates and measurements of a circuit on
/// physical qubits of `b`. A SWAP contributes three CX factors.
pub fn circuit_cost(c: &Circuit, b: &Backend) -> Result<f64, RankingError> {
    let mut keep = 1.0f64;
    for g in &c.gates {
        match g.kind {
            GateKind::Barrier => {}
            GateKind::Cx | GateKind::Swap => {
                let (a, q) = (g.qubits[0], g.qubits[1]);
                let e = b
                    .edge_error(a, q)
                    .ok_or_else(|| RankingError::InvalidEmbedding(format!("[{a},{q}] is not a coupler")))?;
                let reps = if g.kind == GateKind::Swap { 3 } else { 1 };
                keep *= (1.0 - e).powi(reps);
            }
            GateKind::Ccx => return Err(RankingError::InvalidEmbedding("ccx must be decomposed".into())),
            _ => {
                let q = g.qubits[0];
                let e = b.err1q.get(q).ok_or_else(|| RankingError::InvalidEmbedding(format!("qubit {q}")))?;
                keep *= 1.0 - e;
            }
        }
    }
    for &(q, _) in &c.measures {
        let r = b.readout_err.get(q).ok_or_else(|| RankingError::InvalidEmbedding(format!("qubit {q}")))?;
        keep *= 1.0 - r;
    }
    Ok((1.0 - keep).clamp(0.0, 1.0))
}

/// Error-product cost of `pattern_circuit` placed by embedding `e`.
pub fn layout_cost(e: &[usize], pattern_circuit: &Circuit, b: &Backend) -> Result<f64, RankingError> {
    if e.len() != pattern_circuit.num_qubits {
        return Err(RankingError::InvalidEmbedding(format!(
            "embedding covers {} qubits, circuit has {}",
            e.len(),
            pattern_circuit.num_qubits
        )));
    }
    if let Some(&p) = e.iter().find(|&&p| p >= b.num_qubits) {
        return Err(RankingError::InvalidEmbedding(format!("physical qubit {p} does not exist")));
    }
    let mut mapped = Circuit::new(b.num_qubits, pattern_circuit.num_clbits);
    for g in &pattern_circuit.gates {
        let mut g = g.clone();
        g.qubits.iter_mut().for_each(|q| *q = e[*q]);
        mapped.gates.push(g);
    }
    mapped.measures = pattern_circuit.measures.iter().map(|&(q, c)| (e[q], c)).collect();
    circuit_cost(&mapped, b)
}

/// Cost of the pattern circuit after greedy placement and SWAP routing.
pub fn routed_cost(pattern_circuit: &Circuit, b: &Backend) -> Result<f64, RankingError> {
    let mapped = transpile(pattern_circuit, b)?;
    circuit_cost(&mapped.circuit, b)
}

pub fn topology_score(t: &TopologyGraph, b: &Backend) -> Score {
    topology_score_with(t, b, EMBEDDING_LIMIT, EMBEDDING_BUDGET)
}

pub fn topology_score_with(t: &TopologyGraph, b: &Backend, limit: usize, budget: Duration) -> Score {
    if t.num_nodes() > b.num_qubits {
        return Score {
            value: 1.0 + (t.num_nodes() - b.num_qubits) as f64,
            detail: ScoreDetail::Topology {
                cost: 1.0,
                embedding: None,
                embeddings_found: 0,
                truncated: false,
                routed: false,
                oversized: true,
            },
        };
    }
    let circuit = topology_to_circuit(t);
    let found = vf2_embeddings(t, &b.topology(), limit, budget);
    let mut best: Option<(f64, &Vec<usize>)> = None;
    for e in &found.maps {
        let cost = layout_cost(e, &circuit, b).expect("embeddings map pattern edges onto couplers");
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, e));
        }
    }
    let (cost, embedding, routed) = match best {
        Some((cost, e)) => (cost, Some(e.clone()), false),
        None => {
            let cost = routed_cost(&circuit, b).expect("backends are connected and large enough");
            (cost, None, true)
        }
    };
    Score {
        value: cost,
        detail: ScoreDetail::Topology {
            cost,
            embedding,
            embeddings_found: found.maps.len(),
            truncated: found.truncated,
            routed,
            oversized: false,
        },
    }
}

/// A job circuit's Clifford canary and its exact noiseless distribution,
/// computed once and scored against many backends.
#[derive(Debug, Clone)]
pub struct Canary {
    pub circuit: Circuit,
    pub ideal: Probabilities,
}

impl Canary {
    pub fn new(c: &Circuit) -> Result<Self, RankingError> {
        let circuit = cliffordize(c);
        let ideal = ideal_probabilities(&circuit)?;
        Ok(Canary { circuit, ideal })
    }

    /// Noisy canary fidelity on `b`, plus the number of routing SWAPs.
    pub fn fidelity_on(&self, b: &Backend, shots: u64, seed: u64) -> Result<(f64, usize), RankingError> {
        if self.circuit.num_qubits > b.num_qubits {
            return Err(RankingError::TooFewQubits { needed: self.circuit.num_qubits, available: b.num_qubits });
        }
        let mapped = transpile(&self.circuit, b)?;
        let basis = to_clifford_basis(&mapped.circuit)?;
        let noisy = sim_clifford_noisy(&basis, &NoiseModel::from_backend(b), shots, seed)?;
        Ok((hellinger_fidelity(&self.ideal, &noisy.probabilities())?, mapped.swap_count()))
    }

    pub fn score(&self, f_req: f64, b: &Backend, shots: u64, seed: u64) -> Result<Score, RankingError> {
        let (f, swaps) = self.fidelity_on(b, shots, seed)?;
        Ok(Score {
            value: fidelity_value(f_req, f),
            detail: ScoreDetail::Fidelity { f_canary: f, shots, swaps },
        })
    }
}

/// `max(0, f_req - f) + lambda * (1 - f)`.
pub fn fidelity_value(f_req: f64, f_canary: f64) -> f64 {
    (f_req - f_canary).max(0.0) + FIDELITY_LAMBDA * (1.0 - f_canary)
}

pub fn fidelity_score(c: &Circuit, f_req: f64, b: &Backend, shots: u64, seed: u64) -> Result<Score, RankingError> {
    if c.num_qubits > b.num_qubits {
        return Err(RankingError::TooFewQubits { needed: c.num_qubits, available: b.num_qubits });
    }
    Canary::new(c)?.score(f_req, b, shots, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Gate;

    fn graph(n: usize, edges: &[(usize, usize)]) -> TopologyGraph {
        TopologyGraph::new(n, edges.iter().copied()).unwrap()
    }

    const FOREVER: Duration = Duration::from_secs(3600);

    #[test]
    fn triangle_counts() {
        let tri = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(vf2_embeddings(&tri, &tri, 100, FOREVER).maps.len(), 6);
        let path = graph(3, &[(0, 1), (1, 2)]);
        assert_eq!(vf2_embeddings(&path, &tri, 100, FOREVER).maps.len(), 6);
        let five = graph(5, &[]);
        assert!(vf2_embeddings(&five, &graph(4, &[]), 100, FOREVER).maps.is_empty());
    }

    #[test]
    fn limit_sets_truncation_flag() {
        let tri = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        let e = vf2_embeddings(&tri, &tri, 4, FOREVER);
        assert_eq!((e.maps.len(), e.truncated), (4, true));
        let e = vf2_embeddings(&tri, &tri, 6, FOREVER);
        assert!(e.truncated);
        let e = vf2_embeddings(&tri, &tri, 7, FOREVER);
        assert!(!e.truncated);
    }

    #[test]
    fn layout_cost_examples() {
        let zero = Backend::uniform("z", 2, &[(0, 1)], 0.0, 0.0, 0.0);
        let mut c = Circuit::new(2, 2);
        c.push(Gate::cx(0, 1));
        assert_eq!(layout_cost(&[0, 1], &c, &zero).unwrap(), 0.0);

        let b = Backend::uniform("b", 2, &[(0, 1)], 0.1, 0.0, 0.05);
        assert!((layout_cost(&[0, 1], &c, &b).unwrap() - 0.1).abs() < 1e-12);
        c.measure(0, 0).measure(1, 1);
        assert!((layout_cost(&[1, 0], &c, &b).unwrap() - 0.18775).abs() < 1e-12);

        let line = Backend::uniform("l", 3, &[(0, 1), (1, 2)], 0.1, 0.0, 0.0);
        let mut c = Circuit::new(2, 0);
        c.push(Gate::cx(0, 1));
        assert!(matches!(layout_cost(&[0, 2], &c, &line), Err(RankingError::InvalidEmbedding(_))));
    }

    #[test]
    fn single_node_scores_best_readout() {
        let mut b = Backend::uniform("b", 3, &[(0, 1), (1, 2)], 0.1, 0.1, 0.15);
        b.readout_err[2] = 0.05;
        let s = topology_score(&TopologyGraph::empty(1), &b);
        assert!((s.value - 0.05).abs() < 1e-12);
    }

    #[test]
    fn oversized_requests_are_penalized() {
        let b = Backend::uniform("b", 3, &[(0, 1), (1, 2)], 0.7, 0.7, 0.15);
        let s = topology_score(&TopologyGraph::empty(5), &b);
        assert_eq!(s.value, 3.0);
        assert!(s.value > 1.0);
    }

    #[test]
    fn ring_falls_back_to_routing_on_a_line() {
        let line = Backend::uniform("l", 4, &[(0, 1), (1, 2), (2, 3)], 0.05, 0.01, 0.02);
        let ring = graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        let s = topology_score(&ring, &line);
        match s.detail {
            ScoreDetail::Topology { routed, embeddings_found, .. } => assert!(routed && embeddings_found == 0),
            _ => unreachable!(),
        }
        let ring_dev = Backend::uniform("r", 4, &[(0, 1), (1, 2), (2, 3), (0, 3)], 0.05, 0.01, 0.02);
        assert!(topology_score(&ring, &ring_dev).value < s.value);
    }

    #[test]
    fn noiseless_backend_gives_perfect_canary() {
        let b = Backend::uniform("b", 3, &[(0, 1), (1, 2)], 0.0, 0.0, 0.0);
        let mut c = Circuit::new(3, 3);
        c.push(Gate::h(0)).push(Gate::cx(0, 1)).push(Gate::cx(1, 2));
        c.measure_all();
        let s = fidelity_score(&c, 0.9, &b, 4096, 1).unwrap();
        let f = s.f_canary().unwrap();
        assert!(f > 0.999, "{f}");
        assert!(s.value < 1e-5);
    }

    #[test]
    fn score_json_shape() {
        let s = Score { value: 0.25, detail: ScoreDetail::Fidelity { f_canary: 0.75, shots: 10, swaps: 0 } };
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v["strategy"], "fidelity");
        assert_eq!(v["f_canary"], 0.75);
        let back: Score = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
    }
}
