//! A small deterministic transpiler: three-qubit decomposition, greedy
//! placement, shortest-path SWAP routing and Clifford basis translation.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{interaction_graph, quarter_turns, Circuit, Gate, GateKind};
use crate::device::Backend;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TranspileError {
    #[error("gate {index} ({kind}) acts on {arity} qubits and has no decomposition")]
    Unsupported3QGate { index: usize, kind: GateKind, arity: usize },
    #[error("circuit needs {needed} qubits but the backend has {available}")]
    TooFewQubits { needed: usize, available: usize },
    #[error("gate {index} ({kind}) is not Clifford")]
    NotClifford { index: usize, kind: GateKind },
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("gate {index} must be decomposed before routing")]
    Undecomposed { index: usize },
    #[error("physical qubits {a} and {b} are not connected")]
    Unreachable { a: usize, b: usize },
}

/// Logical-to-physical qubit assignment (`map[logical] = physical`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Layout {
    pub map: Vec<usize>,
}

impl Layout {
    pub fn trivial(n: usize) -> Self {
        Layout { map: (0..n).collect() }
    }

    pub fn phys(&self, logical: usize) -> usize {
        self.map[logical]
    }

    pub fn validate(&self, num_physical: usize) -> Result<(), TranspileError> {
        let mut used = vec![false; num_physical];
        for (l, &p) in self.map.iter().enumerate() {
            if p >= num_physical {
                return Err(TranspileError::InvalidLayout(format!("logical {l} maps to missing physical {p}")));
            }
            if std::mem::replace(&mut used[p], true) {
                return Err(TranspileError::InvalidLayout(format!("physical {p} used twice")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedCircuit {
    /// Circuit over physical qubit indices.
    pub circuit: Circuit,
    pub layout: Layout,
    pub final_layout: Layout,
    pub backend_id: String,
}

impl MappedCircuit {
    /// Routing SWAPs plus any user SWAPs.
    pub fn swap_count(&self) -> usize {
        self.circuit.count(GateKind::Swap)
    }
}

fn ccx_gates(a: usize, b: usize, c: usize) -> [Gate; 15] {
    [
        Gate::h(c),
        Gate::cx(b, c),
        Gate::tdg(c),
        Gate::cx(a, c),
        Gate::t(c),
        Gate::cx(b, c),
        Gate::tdg(c),
        Gate::cx(a, c),
        Gate::t(b),
        Gate::t(c),
        Gate::h(c),
        Gate::cx(a, b),
        Gate::t(a),
        Gate::tdg(b),
        Gate::cx(a, b),
    ]
}

/// Replaces every `ccx` with the standard 6-CX Toffoli decomposition.
pub fn decompose_3q(c: &Circuit) -> Result<Circuit, TranspileError> {
    let mut out = Circuit::new(c.num_qubits, c.num_clbits);
    out.measures = c.measures.clone();
    for (index, g) in c.gates.iter().enumerate() {
        match g.kind {
            GateKind::Ccx => out.gates.extend(ccx_gates(g.qubits[0], g.qubits[1], g.qubits[2])),
            GateKind::Barrier => out.gates.push(g.clone()),
            kind if g.qubits.len() >= 3 => {
                return Err(TranspileError::Unsupported3QGate { index, kind, arity: g.qubits.len() })
            }
            _ => out.gates.push(g.clone()),
        }
    }
    Ok(out)
}

/// Greedy placement: logical qubits in descending interaction degree, each
/// next to its already-placed partners at minimum summed distance.
pub fn place(c: &Circuit, b: &Backend) -> Result<Layout, TranspileError> {
    if c.num_qubits > b.num_qubits {
        return Err(TranspileError::TooFewQubits { needed: c.num_qubits, available: b.num_qubits });
    }
    let ig = interaction_graph(c);
    let logical_adj = ig.adjacency();
    let host = b.topology();
    let host_adj = host.adjacency();
    let dist = host.distances();

    let mut order: Vec<usize> = (0..c.num_qubits).collect();
    order.sort_by_key(|&q| (std::cmp::Reverse(logical_adj[q].len()), q));

    let mut map = vec![usize::MAX; c.num_qubits];
    let mut used = vec![false; b.num_qubits];
    let mut placed_phys: Vec<usize> = Vec::new();
    for (i, &q) in order.iter().enumerate() {
        let p = if i == 0 {
            (0..b.num_qubits).max_by_key(|&p| (host_adj[p].len(), std::cmp::Reverse(p))).expect("backend has qubits")
        } else {
            let partners: Vec<usize> =
                logical_adj[q].iter().filter(|&&r| map[r] != usize::MAX).map(|&r| map[r]).collect();
            let near = |anchors: &[usize]| -> Vec<usize> {
                let mut v: Vec<usize> =
                    anchors.iter().flat_map(|&a| host_adj[a].iter().copied()).filter(|&p| !used[p]).collect();
                v.sort_unstable();
                v.dedup();
                v
            };
            let mut candidates = near(&partners);
            if candidates.is_empty() {
                candidates = near(&placed_phys);
            }
            if candidates.is_empty() {
                candidates = (0..b.num_qubits).filter(|&p| !used[p]).collect();
            }
            let cost = |p: usize| partners.iter().map(|&r| dist[p][r].min(b.num_qubits)).sum::<usize>();
            *candidates.iter().min_by_key(|&&p| (cost(p), p)).expect("a free physical qubit remains")
        };
        map[q] = p;
        used[p] = true;
        placed_phys.push(p);
    }
    Ok(Layout { map })
}

/// BFS shortest path, lowest-index neighbours explored first.
fn shortest_path(adj: &[Vec<usize>], from: usize, to: usize) -> Option<Vec<usize>> {
    let mut prev = vec![usize::MAX; adj.len()];
    prev[from] = from;
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        if v == to {
            let mut path = vec![to];
            let mut cur = to;
            while cur != from {
                cur = prev[cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        for &w in &adj[v] {
            if prev[w] == usize::MAX {
                prev[w] = v;
                queue.push_back(w);
            }
        }
    }
    None
}

/// Routes `c` onto `b` starting from `layout`, inserting SWAPs that move the
/// first operand of each non-adjacent two-qubit gate toward the second.
pub fn route(c: &Circuit, layout: &Layout, b: &Backend) -> Result<MappedCircuit, TranspileError> {
    if layout.map.len() != c.num_qubits {
        return Err(TranspileError::InvalidLayout(format!(
            "layout covers {} qubits, circuit has {}",
            layout.map.len(),
            c.num_qubits
        )));
    }
    layout.validate(b.num_qubits)?;
    let host = b.topology();
    let adj = host.adjacency();
    let mut cur = layout.map.clone();
    let mut logical_at: Vec<Option<usize>> = vec![None; b.num_qubits];
    for (l, &p) in cur.iter().enumerate() {
        logical_at[p] = Some(l);
    }

    let mut out = Circuit::new(b.num_qubits, c.num_clbits);
    for (index, g) in c.gates.iter().enumerate() {
        match g.kind {
            GateKind::Ccx => return Err(TranspileError::Undecomposed { index }),
            GateKind::Cx | GateKind::Swap => {
                let (pa, pb) = (cur[g.qubits[0]], cur[g.qubits[1]]);
                if !host.has_edge(pa, pb) {
                    let path = shortest_path(&adj, pa, pb).ok_or(TranspileError::Unreachable { a: pa, b: pb })?;
                    for w in path[..path.len() - 1].windows(2) {
                        let (x, y) = (w[0], w[1]);
                        out.gates.push(Gate::swap(x, y));
                        logical_at.swap(x, y);
                        for p in [x, y] {
                            if let Some(l) = logical_at[p] {
                                cur[l] = p;
                            }
                        }
                    }
                }
                let qubits = g.qubits.iter().map(|&q| cur[q]).collect();
                out.gates.push(Gate::new(g.kind, g.params.clone(), qubits));
            }
            _ => {
                let qubits = g.qubits.iter().map(|&q| cur[q]).collect();
                out.gates.push(Gate::new(g.kind, g.params.clone(), qubits));
            }
        }
    }
    out.measures = c.measures.iter().map(|&(q, cl)| (cur[q], cl)).collect();
    Ok(MappedCircuit {
        circuit: out,
        layout: layout.clone(),
        final_layout: Layout { map: cur },
        backend_id: b.id.clone(),
    })
}

/// decompose_3q, place and route in one call.
pub fn transpile(c: &Circuit, b: &Backend) -> Result<MappedCircuit, TranspileError> {
    let flat = decompose_3q(c)?;
    let layout = place(&flat, b)?;
    route(&flat, &layout, b)
}

fn rz_word(k: i64, q: usize, out: &mut Vec<Gate>) {
    match k.rem_euclid(4) {
        0 => {}
        1 => out.push(Gate::s(q)),
        2 => out.push(Gate::z(q)),
        _ => out.push(Gate::sdg(q)),
    }
}

fn ry_word(k: i64, q: usize, out: &mut Vec<Gate>) {
    if k.rem_euclid(4) == 0 {
        return;
    }
    out.push(Gate::sdg(q));
    out.push(Gate::h(q));
    rz_word(k, q, out);
    out.push(Gate::h(q));
    out.push(Gate::s(q));
}

/// Rewrites a Clifford circuit over `{h, s, sdg, x, z, cx}` (equal up to global phase).
pub fn to_clifford_basis(c: &Circuit) -> Result<Circuit, TranspileError> {
    let mut out = Circuit::new(c.num_qubits, c.num_clbits);
    out.measures = c.measures.clone();
    for (index, g) in c.gates.iter().enumerate() {
        let not_clifford = || TranspileError::NotClifford { index, kind: g.kind };
        let turns = || -> Result<Vec<i64>, TranspileError> {
            g.params.iter().map(|&a| quarter_turns(a).ok_or_else(not_clifford)).collect()
        };
        let w = &mut out.gates;
        match g.kind {
            GateKind::H | GateKind::X | GateKind::Z | GateKind::S | GateKind::Sdg | GateKind::Cx => w.push(g.clone()),
            GateKind::Barrier | GateKind::Reset => w.push(g.clone()),
            GateKind::Y => {
                w.push(Gate::z(g.qubits[0]));
                w.push(Gate::x(g.qubits[0]));
            }
            GateKind::Swap => {
                let (a, b) = (g.qubits[0], g.qubits[1]);
                w.extend([Gate::cx(a, b), Gate::cx(b, a), Gate::cx(a, b)]);
            }
            GateKind::Rz | GateKind::U1 => rz_word(turns()?[0], g.qubits[0], w),
            GateKind::Rx => {
                let k = turns()?[0];
                if k.rem_euclid(4) != 0 {
                    w.push(Gate::h(g.qubits[0]));
                    rz_word(k, g.qubits[0], w);
                    w.push(Gate::h(g.qubits[0]));
                }
            }
            GateKind::Ry => ry_word(turns()?[0], g.qubits[0], w),
            GateKind::U2 | GateKind::U3 => {
                let t = turns()?;
                let (theta, phi, lambda) = if g.kind == GateKind::U2 { (1, t[0], t[1]) } else { (t[0], t[1], t[2]) };
                let q = g.qubits[0];
                rz_word(lambda, q, w);
                ry_word(theta, q, w);
                rz_word(phi, q, w);
            }
            GateKind::T | GateKind::Tdg | GateKind::Ccx => return Err(not_clifford()),
        }
    }
    Ok(out)
}
