#![allow(dead_code)]

use std::f64::consts::FRAC_PI_4;

use proptest::prelude::*;
use qorc_core::circuit::{Circuit, Gate, GateKind, TopologyGraph};
use qorc_core::device::{generate_backend, Backend, GenParams};

pub const CLIFFORD_KINDS: [GateKind; 8] =
    [GateKind::H, GateKind::X, GateKind::Y, GateKind::Z, GateKind::S, GateKind::Sdg, GateKind::Cx, GateKind::Swap];

pub const ALL_KINDS: [GateKind; 17] = [
    GateKind::H,
    GateKind::X,
    GateKind::Y,
    GateKind::Z,
    GateKind::S,
    GateKind::Sdg,
    GateKind::T,
    GateKind::Tdg,
    GateKind::Rx,
    GateKind::Ry,
    GateKind::Rz,
    GateKind::U1,
    GateKind::U2,
    GateKind::U3,
    GateKind::Cx,
    GateKind::Swap,
    GateKind::Ccx,
];

/// Raw material for one gate; resolved against the circuit width later.
type GateSeed = (usize, [usize; 3], [f64; 3], bool);

fn gate_seed() -> impl Strategy<Value = GateSeed> {
    (any::<usize>(), any::<[usize; 3]>(), [-7.0..7.0f64, -7.0..7.0f64, -7.0..7.0f64], any::<bool>())
}

fn distinct(n: usize, raw: [usize; 3], k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    (0..k).map(|i| pool.remove(raw[i] % pool.len())).collect()
}

fn build(n: usize, kinds: &[GateKind], seeds: Vec<GateSeed>, measure: bool) -> Circuit {
    let mut c = Circuit::new(n, n);
    for (k, raw, angles, snap) in seeds {
        let kind = kinds[k % kinds.len()];
        let arity = kind.num_qubits().unwrap_or(1);
        if arity > n {
            continue;
        }
        // Half the rotations land on multiples of pi/4 to exercise snapping ties.
        let params = (0..kind.num_params())
            .map(|i| if snap { (angles[i] / FRAC_PI_4).round() * FRAC_PI_4 } else { angles[i] })
            .collect();
        c.push(Gate::new(kind, params, distinct(n, raw, arity)));
    }
    if measure {
        c.measure_all();
    }
    c
}

pub fn circuit(max_qubits: usize, max_gates: usize, kinds: &'static [GateKind]) -> impl Strategy<Value = Circuit> {
    (1..=max_qubits, prop::collection::vec(gate_seed(), 0..=max_gates), any::<bool>())
        .prop_map(move |(n, seeds, m)| build(n, kinds, seeds, m))
}

pub fn clifford_circuit(max_qubits: usize, max_gates: usize) -> impl Strategy<Value = Circuit> {
    (1..=max_qubits, prop::collection::vec(gate_seed(), 0..=max_gates))
        .prop_map(|(n, seeds)| build(n, &CLIFFORD_KINDS, seeds, true))
}

pub fn graph(max_nodes: usize) -> impl Strategy<Value = TopologyGraph> {
    (1..=max_nodes).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        prop::collection::vec(any::<bool>(), pairs.len()).prop_map(move |keep| {
            let edges = pairs.iter().zip(keep).filter(|(_, k)| *k).map(|(e, _)| *e);
            TopologyGraph::new(n, edges).unwrap()
        })
    })
}

/// A connected, degree-capped random device.
pub fn device(min_qubits: usize, max_qubits: usize) -> impl Strategy<Value = Backend> {
    (min_qubits.max(2)..=max_qubits, 0.0..1.0f64, any::<u64>())
        .prop_map(|(n, p, seed)| generate_backend("dev", &GenParams::setup(n, p, seed)).unwrap())
}

/// Every injective node map carrying pattern edges onto host edges.
pub fn brute_force_embeddings(pattern: &TopologyGraph, host: &TopologyGraph) -> Vec<Vec<usize>> {
    fn extend(p: &TopologyGraph, h: &TopologyGraph, map: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if map.len() == p.num_nodes() {
            if p.edges().all(|(a, b)| h.has_edge(map[a], map[b])) {
                out.push(map.clone());
            }
            return;
        }
        for v in 0..h.num_nodes() {
            if !used[v] {
                used[v] = true;
                map.push(v);
                extend(p, h, map, used, out);
                map.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    if pattern.num_nodes() <= host.num_nodes() {
        extend(pattern, host, &mut Vec::new(), &mut vec![false; host.num_nodes()], &mut out);
    }
    out.sort();
    out
}

/// The same device with every error probability multiplied by `alpha`.
pub fn scaled_backend(b: &Backend, alpha: f64) -> Backend {
    let mut s = b.clone();
    s.err2q.values_mut().for_each(|e| *e *= alpha);
    s.err1q.iter_mut().for_each(|e| *e *= alpha);
    s.readout_err.iter_mut().for_each(|e| *e *= alpha);
    s
}
