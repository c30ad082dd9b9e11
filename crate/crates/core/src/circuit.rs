//! Gate-list circuit IR, Clifford classification, Clifford canaries and
//! interaction graphs.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transpile;

/// Angles within this distance of a multiple of pi/2 count as Clifford.
pub const CLIFFORD_ANGLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    S,
    Sdg,
    T,
    Tdg,
    Rx,
    Ry,
    Rz,
    U1,
    U2,
    U3,
    Cx,
    Swap,
    Ccx,
    Barrier,
    Reset,
}

impl GateKind {
    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Y => "y",
            GateKind::Z => "z",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::T => "t",
            GateKind::Tdg => "tdg",
            GateKind::Rx => "rx",
            GateKind::Ry => "ry",
            GateKind::Rz => "rz",
            GateKind::U1 => "u1",
            GateKind::U2 => "u2",
            GateKind::U3 => "u3",
            GateKind::Cx => "cx",
            GateKind::Swap => "swap",
            GateKind::Ccx => "ccx",
            GateKind::Barrier => "barrier",
            GateKind::Reset => "reset",
        }
    }

    pub fn from_name(name: &str) -> Option<GateKind> {
        let kind = match name {
            "h" => GateKind::H,
            "x" => GateKind::X,
            "y" => GateKind::Y,
            "z" => GateKind::Z,
            "s" => GateKind::S,
            "sdg" => GateKind::Sdg,
            "t" => GateKind::T,
            "tdg" => GateKind::Tdg,
            "rx" => GateKind::Rx,
            "ry" => GateKind::Ry,
            "rz" => GateKind::Rz,
            "u1" => GateKind::U1,
            "u2" => GateKind::U2,
            "u3" => GateKind::U3,
            "cx" | "CX" => GateKind::Cx,
            "swap" => GateKind::Swap,
            "ccx" => GateKind::Ccx,
            "barrier" => GateKind::Barrier,
            "reset" => GateKind::Reset,
            _ => return None,
        };
        Some(kind)
    }

    /// Number of angle parameters.
    pub fn num_params(self) -> usize {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::U1 => 1,
            GateKind::U2 => 2,
            GateKind::U3 => 3,
            _ => 0,
        }
    }

    /// Number of qubit operands; `None` for the variadic barrier.
    pub fn num_qubits(self) -> Option<usize> {
        match self {
            GateKind::Cx | GateKind::Swap => Some(2),
            GateKind::Ccx => Some(3),
            GateKind::Barrier => None,
            _ => Some(1),
        }
    }

    /// Directives carry no unitary action on the outcome statistics we model.
    pub fn is_directive(self) -> bool {
        matches!(self, GateKind::Barrier)
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub params: Vec<f64>,
    pub qubits: Vec<usize>,
}

impl Gate {
    pub fn new(kind: GateKind, params: Vec<f64>, qubits: Vec<usize>) -> Self {
        Gate { kind, params, qubits }
    }

    pub fn single(kind: GateKind, q: usize) -> Self {
        Gate::new(kind, Vec::new(), vec![q])
    }

    pub fn h(q: usize) -> Self {
        Gate::single(GateKind::H, q)
    }

    pub fn x(q: usize) -> Self {
        Gate::single(GateKind::X, q)
    }

    pub fn z(q: usize) -> Self {
        Gate::single(GateKind::Z, q)
    }

    pub fn s(q: usize) -> Self {
        Gate::single(GateKind::S, q)
    }

    pub fn sdg(q: usize) -> Self {
        Gate::single(GateKind::Sdg, q)
    }

    pub fn t(q: usize) -> Self {
        Gate::single(GateKind::T, q)
    }

    pub fn tdg(q: usize) -> Self {
        Gate::single(GateKind::Tdg, q)
    }

    pub fn rz(theta: f64, q: usize) -> Self {
        Gate::new(GateKind::Rz, vec![theta], vec![q])
    }

    pub fn cx(control: usize, target: usize) -> Self {
        Gate::new(GateKind::Cx, Vec::new(), vec![control, target])
    }

    pub fn swap(a: usize, b: usize) -> Self {
        Gate::new(GateKind::Swap, Vec::new(), vec![a, b])
    }

    pub fn ccx(a: usize, b: usize, target: usize) -> Self {
        Gate::new(GateKind::Ccx, Vec::new(), vec![a, b, target])
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(self.kind, GateKind::Cx | GateKind::Swap)
    }

    pub fn is_single_qubit_unitary(&self) -> bool {
        !self.kind.is_directive() && self.kind != GateKind::Reset && self.qubits.len() == 1
    }

    pub fn is_clifford(&self) -> bool {
        match self.kind {
            GateKind::T | GateKind::Tdg | GateKind::Ccx => false,
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::U1 | GateKind::U2 | GateKind::U3 => {
                self.params.iter().all(|&a| quarter_turns(a).is_some())
            }
            _ => true,
        }
    }
}

/// Returns `k` when `angle` is within [`CLIFFORD_ANGLE_TOL`] of `k * pi/2`.
pub fn quarter_turns(angle: f64) -> Option<i64> {
    let k = (angle / FRAC_PI_2).round();
    if (angle - k * FRAC_PI_2).abs() <= CLIFFORD_ANGLE_TOL {
        Some(k as i64)
    } else {
        None
    }
}

/// Nearest multiple of pi/2 (in quarter turns); exact half-way ties go toward zero.
pub fn snap_quarter_turns(angle: f64) -> i64 {
    let x = angle / FRAC_PI_2;
    let trunc = x.trunc();
    if ((x - trunc).abs() - 0.5).abs() <= CLIFFORD_ANGLE_TOL {
        trunc as i64
    } else {
        x.round() as i64
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CircuitError {
    #[error("gate {index} ({kind}) expects {expected} parameter(s), got {got}")]
    ParamArity { index: usize, kind: GateKind, expected: usize, got: usize },
    #[error("gate {index} ({kind}) expects {expected} qubit(s), got {got}")]
    QubitArity { index: usize, kind: GateKind, expected: usize, got: usize },
    #[error("gate {index} ({kind}) repeats qubit {qubit}")]
    RepeatedQubit { index: usize, kind: GateKind, qubit: usize },
    #[error("qubit {qubit} out of range for a {num_qubits}-qubit circuit")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },
    #[error("classical bit {clbit} out of range ({num_clbits} declared)")]
    ClbitOutOfRange { clbit: usize, num_clbits: usize },
    #[error("classical bit {clbit} is the target of more than one measurement")]
    DuplicateClbit { clbit: usize },
}

/// A circuit: ordered gates followed by terminal measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub num_qubits: usize,
    pub num_clbits: usize,
    pub gates: Vec<Gate>,
    /// `(qubit, clbit)` pairs.
    pub measures: Vec<(usize, usize)>,
}

impl Circuit {
    pub fn new(num_qubits: usize, num_clbits: usize) -> Self {
        Circuit { num_qubits, num_clbits, gates: Vec::new(), measures: Vec::new() }
    }

    pub fn push(&mut self, gate: Gate) -> &mut Self {
        self.gates.push(gate);
        self
    }

    pub fn measure(&mut self, qubit: usize, clbit: usize) -> &mut Self {
        self.measures.push((qubit, clbit));
        self
    }

    /// Measures qubit `i` into clbit `i` for every qubit, growing the classical register.
    pub fn measure_all(&mut self) -> &mut Self {
        self.num_clbits = self.num_clbits.max(self.num_qubits);
        for q in 0..self.num_qubits {
            self.measures.push((q, q));
        }
        self
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        for (index, g) in self.gates.iter().enumerate() {
            let expected = g.kind.num_params();
            if g.params.len() != expected {
                return Err(CircuitError::ParamArity { index, kind: g.kind, expected, got: g.params.len() });
            }
            if let Some(expected) = g.kind.num_qubits() {
                if g.qubits.len() != expected {
                    return Err(CircuitError::QubitArity { index, kind: g.kind, expected, got: g.qubits.len() });
                }
            }
            let mut seen = BTreeSet::new();
            for &q in &g.qubits {
                if q >= self.num_qubits {
                    return Err(CircuitError::QubitOutOfRange { qubit: q, num_qubits: self.num_qubits });
                }
                if !seen.insert(q) {
                    return Err(CircuitError::RepeatedQubit { index, kind: g.kind, qubit: q });
                }
            }
        }
        let mut clbits = BTreeSet::new();
        for &(q, c) in &self.measures {
            if q >= self.num_qubits {
                return Err(CircuitError::QubitOutOfRange { qubit: q, num_qubits: self.num_qubits });
            }
            if c >= self.num_clbits {
                return Err(CircuitError::ClbitOutOfRange { clbit: c, num_clbits: self.num_clbits });
            }
            if !clbits.insert(c) {
                return Err(CircuitError::DuplicateClbit { clbit: c });
            }
        }
        Ok(())
    }

    pub fn is_clifford(&self) -> bool {
        self.gates.iter().all(Gate::is_clifford)
    }

    pub fn two_qubit_gate_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_two_qubit()).count()
    }

    pub fn count(&self, kind: GateKind) -> usize {
        self.gates.iter().filter(|g| g.kind == kind).count()
    }
}

/// True iff every gate is Clifford (rotations at multiples of pi/2 included).
pub fn is_clifford(c: &Circuit) -> bool {
    c.is_clifford()
}

/// Builds the Clifford canary of `c`: three-qubit gates are decomposed, every
/// non-Clifford rotation angle is snapped to the nearest multiple of pi/2, and
/// rotations that snap to the identity are dropped. Two-qubit gates and the
/// measurement list are untouched.
pub fn cliffordize(c: &Circuit) -> Circuit {
    let decomposed = transpile::decompose_3q(c).expect("ccx is the only three-qubit gate in the IR");
    let mut out = Circuit::new(decomposed.num_qubits, decomposed.num_clbits);
    out.measures = decomposed.measures.clone();
    for g in decomposed.gates {
        if g.is_clifford() {
            out.gates.push(g);
            continue;
        }
        match g.kind {
            // +-pi/4 is a tie and rounds to the identity.
            GateKind::T | GateKind::Tdg => {}
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::U1 | GateKind::U2 | GateKind::U3 => {
                let turns: Vec<i64> = g.params.iter().map(|&a| snap_quarter_turns(a)).collect();
                let identity = g.kind != GateKind::U2 && turns.iter().all(|k| k.rem_euclid(4) == 0);
                if !identity {
                    let params = turns.iter().map(|&k| k as f64 * FRAC_PI_2).collect();
                    out.gates.push(Gate::new(g.kind, params, g.qubits));
                }
            }
            _ => unreachable!("{} is Clifford or decomposed", g.kind),
        }
    }
    out
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("edge [{a},{b}] is a self-loop")]
    SelfLoop { a: usize, b: usize },
    #[error("edge [{a},{b}] references a node >= {num_nodes}")]
    NodeOutOfRange { a: usize, b: usize, num_nodes: usize },
}

/// Undirected simple graph on nodes `0..num_nodes`. Edges are stored as `(lo, hi)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTopology", into = "RawTopology")]
pub struct TopologyGraph {
    num_nodes: usize,
    edges: BTreeSet<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct RawTopology {
    nodes: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<RawTopology> for TopologyGraph {
    type Error = TopologyError;

    fn try_from(raw: RawTopology) -> Result<Self, Self::Error> {
        TopologyGraph::new(raw.nodes, raw.edges.into_iter().map(|[a, b]| (a, b)))
    }
}

impl From<TopologyGraph> for RawTopology {
    fn from(t: TopologyGraph) -> Self {
        RawTopology { nodes: t.num_nodes, edges: t.edges.iter().map(|&(a, b)| [a, b]).collect() }
    }
}

impl TopologyGraph {
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, TopologyError> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(TopologyError::SelfLoop { a, b });
            }
            if a >= num_nodes || b >= num_nodes {
                return Err(TopologyError::NodeOutOfRange { a, b, num_nodes });
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(TopologyGraph { num_nodes, edges: set })
    }

    pub fn empty(num_nodes: usize) -> Self {
        TopologyGraph { num_nodes, edges: BTreeSet::new() }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Sorted neighbour lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.num_nodes];
        let mut out = Vec::new();
        for start in 0..self.num_nodes {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                        queue.push_back(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.num_nodes <= 1 || self.components().len() == 1
    }

    /// All-pairs hop distances (`usize::MAX` when unreachable).
    pub fn distances(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        (0..self.num_nodes)
            .map(|src| {
                let mut dist = vec![usize::MAX; self.num_nodes];
                dist[src] = 0;
                let mut queue = VecDeque::from([src]);
                while let Some(v) = queue.pop_front() {
                    for &w in &adj[v] {
                        if dist[w] == usize::MAX {
                            dist[w] = dist[v] + 1;
                            queue.push_back(w);
                        }
                    }
                }
                dist
            })
            .collect()
    }
}

/// Graph of qubit pairs that share a two- or three-qubit gate.
pub fn interaction_graph(c: &Circuit) -> TopologyGraph {
    let mut edges = Vec::new();
    for g in &c.gates {
        match g.kind {
            GateKind::Cx | GateKind::Swap => edges.push((g.qubits[0], g.qubits[1])),
            GateKind::Ccx => {
                let q = &g.qubits;
                edges.extend([(q[0], q[1]), (q[0], q[2]), (q[1], q[2])]);
            }
            _ => {}
        }
    }
    TopologyGraph::new(c.num_qubits, edges).expect("validated circuit operands are distinct and in range")
}

/// One CX per edge (lower index controls), edges in lexicographic order, then
/// every qubit measured into the classical bit of the same index.
pub fn topology_to_circuit(t: &TopologyGraph) -> Circuit {
    let mut c = Circuit::new(t.num_nodes(), t.num_nodes());
    for (a, b) in t.edges() {
        c.push(Gate::cx(a, b));
    }
    c.measure_all();
    c
}
