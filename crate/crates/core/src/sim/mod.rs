//! Noiseless and Pauli-noisy simulation: a stabilizer engine for Clifford
//! circuits, a statevector engine for small general circuits, and Hellinger
//! fidelity between outcome distributions.
//!
//! Circuits are first lowered to a [`Program`] over *wires*: SWAPs become
//! relabelings (their noise is kept), operations outside the backward light
//! cone of the measurements are dropped, and only the remaining wires get
//! simulator storage. Each shot uses its own ChaCha stream, so results depend
//! only on `(circuit, noise, shots, seed)`.

pub mod statevector;
pub mod tableau;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, Gate, GateKind};
use crate::device::Backend;
use crate::transpile::{decompose_3q, to_clifford_basis};
use statevector::{matrix, Mat2, StateVector};
use tableau::Tableau;

/// Largest number of live wires the statevector engine accepts.
pub const MAX_STATEVECTOR_QUBITS: usize = 14;
/// Largest number of random measurement outcomes enumerated exactly.
pub const MAX_EXACT_RANDOM_BITS: usize = 24;
pub const SCORING_SHOTS: u64 = 4096;
pub const ORACLE_SHOTS: u64 = 100_000;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("gate {index} ({kind}) is not Clifford")]
    NotClifford { index: usize, kind: GateKind },
    #[error("no two-qubit error rate for pair [{a},{b}]")]
    MissingEdgeRate { a: usize, b: usize },
    #[error("no error rate for qubit {qubit}")]
    MissingQubitRate { qubit: usize },
    #[error("{live} live qubits exceed the statevector limit of {max}")]
    TooManyQubits { live: usize, max: usize },
    #[error("distribution is empty")]
    EmptyDistribution,
    #[error("{bits} random outcome bits are too many to enumerate exactly")]
    TooManyOutcomes { bits: usize },
    #[error("invalid circuit: {0}")]
    InvalidCircuit(#[from] CircuitError),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
}

/// Stochastic Pauli noise: per-qubit gate and readout error, per-coupler two-qubit error.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    pub p1: Vec<f64>,
    #[serde(with = "crate::device::edge_map")]
    pub p2: BTreeMap<(usize, usize), f64>,
    pub p_read: Vec<f64>,
}

impl NoiseModel {
    pub fn from_backend(b: &Backend) -> Self {
        NoiseModel { p1: b.err1q.clone(), p2: b.err2q.clone(), p_read: b.readout_err.clone() }
    }

    /// Every rate multiplied by `alpha` (clamped to 1).
    pub fn scaled(&self, alpha: f64) -> Self {
        let s = |p: f64| (p * alpha).min(1.0);
        NoiseModel {
            p1: self.p1.iter().map(|&p| s(p)).collect(),
            p2: self.p2.iter().map(|(&e, &p)| (e, s(p))).collect(),
            p_read: self.p_read.iter().map(|&p| s(p)).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let all = self.p1.iter().chain(self.p2.values()).chain(&self.p_read);
        if let Some(p) = all.into_iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(SimError::InvalidNoise(format!("probability {p} outside [0, 1]")));
        }
        Ok(())
    }

    fn p1(&self, q: usize) -> Result<f64, SimError> {
        self.p1.get(q).copied().ok_or(SimError::MissingQubitRate { qubit: q })
    }

    fn p_read(&self, q: usize) -> Result<f64, SimError> {
        self.p_read.get(q).copied().ok_or(SimError::MissingQubitRate { qubit: q })
    }

    fn p2(&self, a: usize, b: usize) -> Result<f64, SimError> {
        self.p2.get(&(a.min(b), a.max(b))).copied().ok_or(SimError::MissingEdgeRate { a, b })
    }
}

/// Measured counts keyed by bitstring, highest classical bit leftmost.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "BTreeMap<String, u64>", into = "BTreeMap<String, u64>")]
pub struct OutcomeDistribution {
    pub shots: u64,
    pub counts: BTreeMap<String, u64>,
}

impl From<BTreeMap<String, u64>> for OutcomeDistribution {
    fn from(counts: BTreeMap<String, u64>) -> Self {
        OutcomeDistribution { shots: counts.values().sum(), counts }
    }
}

impl From<OutcomeDistribution> for BTreeMap<String, u64> {
    fn from(d: OutcomeDistribution) -> Self {
        d.counts
    }
}

impl OutcomeDistribution {
    pub fn probabilities(&self) -> Probabilities {
        let total = self.shots as f64;
        self.counts.iter().map(|(k, &v)| (k.clone(), v as f64 / total)).collect()
    }

    pub fn get(&self, key: &str) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    /// `{'00': 12, '11': 9}` with keys in sorted order.
    pub fn to_python_dict(&self) -> String {
        let mut s = String::from("{");
        for (i, (k, v)) in self.counts.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            let _ = write!(s, "'{k}': {v}");
        }
        s.push('}');
        s
    }
}

/// Outcome probabilities keyed like [`OutcomeDistribution`].
pub type Probabilities = BTreeMap<String, f64>;

/// Hellinger fidelity `(sum_x sqrt(p(x) q(x)))^2` between normalized distributions.
pub fn hellinger_fidelity(p: &Probabilities, q: &Probabilities) -> Result<f64, SimError> {
    let (np, nq) = (p.values().sum::<f64>(), q.values().sum::<f64>());
    if p.is_empty() || q.is_empty() || np <= 0.0 || nq <= 0.0 {
        return Err(SimError::EmptyDistribution);
    }
    let bc: f64 = p.iter().filter_map(|(k, &pk)| q.get(k).map(|&qk| (pk / np * qk / nq).sqrt())).sum();
    Ok((bc * bc).clamp(0.0, 1.0))
}

pub fn fidelity(ideal: &OutcomeDistribution, observed: &OutcomeDistribution) -> Result<f64, SimError> {
    hellinger_fidelity(&ideal.probabilities(), &observed.probabilities())
}

/// Half the L1 distance between normalized distributions.
pub fn total_variation(p: &Probabilities, q: &Probabilities) -> f64 {
    let keys: std::collections::BTreeSet<&String> = p.keys().chain(q.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    H(usize),
    S(usize),
    Sdg(usize),
    X(usize),
    Y(usize),
    Z(usize),
    Cx(usize, usize),
    Reset(usize),
    U(usize, Mat2),
    Noise1(usize, f64),
    /// Uniform non-identity two-qubit Pauli; a `None` side lies outside the light cone.
    Noise2(Option<usize>, Option<usize>, f64),
}

impl Op {
    fn wires(&self) -> [Option<usize>; 2] {
        match *self {
            Op::H(w) | Op::S(w) | Op::Sdg(w) | Op::X(w) | Op::Y(w) | Op::Z(w) | Op::Reset(w) => [Some(w), None],
            Op::U(w, _) | Op::Noise1(w, _) => [Some(w), None],
            Op::Cx(a, b) => [Some(a), Some(b)],
            Op::Noise2(a, b, _) => [a, b],
        }
    }

    fn remap(self, f: impl Fn(usize) -> usize) -> Op {
        match self {
            Op::H(w) => Op::H(f(w)),
            Op::S(w) => Op::S(f(w)),
            Op::Sdg(w) => Op::Sdg(f(w)),
            Op::X(w) => Op::X(f(w)),
            Op::Y(w) => Op::Y(f(w)),
            Op::Z(w) => Op::Z(f(w)),
            Op::Reset(w) => Op::Reset(f(w)),
            Op::U(w, m) => Op::U(f(w), m),
            Op::Noise1(w, p) => Op::Noise1(f(w), p),
            Op::Cx(a, b) => Op::Cx(f(a), f(b)),
            Op::Noise2(a, b, p) => Op::Noise2(a.map(&f), b.map(&f), p),
        }
    }

    fn is_noise(&self) -> bool {
        matches!(self, Op::Noise1(..) | Op::Noise2(..))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Measure {
    wire: usize,
    p_read: f64,
}

/// A circuit lowered to compact wires.
#[derive(Debug, Clone)]
pub struct Program {
    num_wires: usize,
    ops: Vec<Op>,
    /// Ordered by classical bit, highest first (the bitstring order).
    measures: Vec<Measure>,
    first_non_clifford: Option<(usize, GateKind)>,
}

impl Program {
    pub fn num_wires(&self) -> usize {
        self.num_wires
    }

    pub fn is_clifford(&self) -> bool {
        self.first_non_clifford.is_none()
    }

    fn has_reset(&self) -> bool {
        self.ops.iter().any(|op| matches!(op, Op::Reset(_)))
    }

    fn is_noisy(&self) -> bool {
        self.ops.iter().any(Op::is_noise) || self.measures.iter().any(|m| m.p_read > 0.0)
    }

    fn require_clifford(&self) -> Result<(), SimError> {
        match self.first_non_clifford {
            Some((index, kind)) => Err(SimError::NotClifford { index, kind }),
            None => Ok(()),
        }
    }
}

fn push_word(g: &Gate, w: usize, ops: &mut Vec<Op>) {
    match g.kind {
        GateKind::H => ops.push(Op::H(w)),
        GateKind::S => ops.push(Op::S(w)),
        GateKind::Sdg => ops.push(Op::Sdg(w)),
        GateKind::X => ops.push(Op::X(w)),
        GateKind::Y => ops.push(Op::Y(w)),
        GateKind::Z => ops.push(Op::Z(w)),
        _ => unreachable!("basis translation emits h/s/sdg/x/z only"),
    }
}

/// Lowers `c` (with optional noise) to a [`Program`].
pub fn lower(c: &Circuit, nm: Option<&NoiseModel>) -> Result<Program, SimError> {
    c.validate()?;
    if let Some(nm) = nm {
        nm.validate()?;
    }
    let mut first_non_clifford = c.gates.iter().enumerate().find(|(_, g)| !g.is_clifford()).map(|(i, g)| (i, g.kind));
    let flat = decompose_3q(c).expect("validated circuits contain only ccx as a three-qubit gate");
    let mut wire_of: Vec<usize> = (0..c.num_qubits).collect();
    let mut ops = Vec::with_capacity(flat.gates.len() * 2);

    for g in &flat.gates {
        match g.kind {
            GateKind::Barrier => {}
            GateKind::Reset => ops.push(Op::Reset(wire_of[g.qubits[0]])),
            GateKind::Swap => {
                let (a, b) = (g.qubits[0], g.qubits[1]);
                wire_of.swap(a, b);
                if let Some(nm) = nm {
                    // Conjugating a uniform non-identity Pauli by CX leaves it
                    // uniform, so all three CX draws can sit after the relabel.
                    let p = nm.p2(a, b)?;
                    if p > 0.0 {
                        for _ in 0..3 {
                            ops.push(Op::Noise2(Some(wire_of[a]), Some(wire_of[b]), p));
                        }
                    }
                }
            }
            GateKind::Cx => {
                let (a, b) = (g.qubits[0], g.qubits[1]);
                ops.push(Op::Cx(wire_of[a], wire_of[b]));
                if let Some(nm) = nm {
                    let p = nm.p2(a, b)?;
                    if p > 0.0 {
                        ops.push(Op::Noise2(Some(wire_of[a]), Some(wire_of[b]), p));
                    }
                }
            }
            _ => {
                let q = g.qubits[0];
                let w = wire_of[q];
                if g.is_clifford() {
                    let mut single = Circuit::new(q + 1, 0);
                    single.gates.push(g.clone());
                    let word = to_clifford_basis(&single).expect("Clifford single-qubit gate translates");
                    for h in &word.gates {
                        push_word(h, w, &mut ops);
                    }
                } else {
                    ops.push(Op::U(w, matrix(g).expect("single-qubit gate has a matrix")));
                    first_non_clifford.get_or_insert((0, g.kind));
                }
                if let Some(nm) = nm {
                    let p = nm.p1(q)?;
                    if p > 0.0 {
                        ops.push(Op::Noise1(w, p));
                    }
                }
            }
        }
    }

    let mut by_clbit: Vec<(usize, usize)> = c.measures.iter().map(|&(q, cl)| (cl, q)).collect();
    by_clbit.sort_by(|a, b| b.0.cmp(&a.0));
    let mut measures = Vec::with_capacity(by_clbit.len());
    for (_, q) in by_clbit {
        let p_read = match nm {
            Some(nm) => nm.p_read(q)?,
            None => 0.0,
        };
        measures.push(Measure { wire: wire_of[q], p_read });
    }

    // Backward light cone of the measurements.
    let mut alive = vec![false; c.num_qubits];
    for m in &measures {
        alive[m.wire] = true;
    }
    let mut kept = Vec::with_capacity(ops.len());
    for op in ops.into_iter().rev() {
        let keep = match op {
            Op::Cx(a, b) => {
                let live = alive[a] || alive[b];
                alive[a] |= live;
                alive[b] |= live;
                live.then_some(op)
            }
            Op::Noise2(a, b, p) => {
                let a = a.filter(|&w| alive[w]);
                let b = b.filter(|&w| alive[w]);
                (a.is_some() || b.is_some()).then_some(Op::Noise2(a, b, p))
            }
            _ => op.wires()[0].filter(|&w| alive[w]).map(|_| op),
        };
        if let Some(op) = keep {
            kept.push(op);
        }
    }
    kept.reverse();

    let mut index = vec![usize::MAX; c.num_qubits];
    let mut num_wires = 0;
    let mut touch = |w: usize, index: &mut Vec<usize>| {
        if index[w] == usize::MAX {
            index[w] = num_wires;
            num_wires += 1;
        }
    };
    for op in &kept {
        for w in op.wires().into_iter().flatten() {
            touch(w, &mut index);
        }
    }
    for m in &measures {
        touch(m.wire, &mut index);
    }
    let ops = kept.into_iter().map(|op| op.remap(|w| index[w])).collect();
    let measures = measures.into_iter().map(|m| Measure { wire: index[m.wire], ..m }).collect();
    Ok(Program { num_wires, ops, measures, first_non_clifford })
}

fn shot_rng(seed: u64, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot);
    rng
}

/// Fixed-width bit vector over the measurement list.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Bits(Vec<u64>);

impl Bits {
    fn zeros(len: usize) -> Self {
        Bits(vec![0; len.div_ceil(64)])
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn flip(&mut self, i: usize) {
        self.0[i / 64] ^= 1 << (i % 64);
    }

    fn xor(&mut self, other: &Bits) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a ^= b;
        }
    }

    fn is_zero(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }

    fn key(&self, len: usize) -> String {
        (0..len).map(|i| if self.get(i) { '1' } else { '0' }).collect()
    }
}

/// Measurement outcomes of a stabilizer state form an affine space
/// `v0 + span(gens)`, sampled uniformly.
struct AffineOutcomes {
    v0: Bits,
    gens: Vec<Bits>,
}

fn affine_outcomes(t: &Tableau, measures: &[Measure]) -> AffineOutcomes {
    let run = |flip: Option<usize>| {
        let mut t = t.clone();
        let mut bits = Bits::zeros(measures.len());
        let mut random = Vec::new();
        for (i, m) in measures.iter().enumerate() {
            let (b, was_random) = t.measure(m.wire, || flip == Some(i));
            if was_random {
                random.push(i);
            }
            if b {
                bits.flip(i);
            }
        }
        (bits, random)
    };
    let (v0, random) = run(None);
    let gens = random
        .into_iter()
        .map(|i| {
            let mut g = run(Some(i)).0;
            g.xor(&v0);
            g
        })
        .collect();
    AffineOutcomes { v0, gens }
}

fn evolve_tableau(prog: &Program) -> Tableau {
    let mut t = Tableau::new(prog.num_wires);
    for op in &prog.ops {
        apply_tableau(&mut t, op, &mut || false);
    }
    t
}

fn apply_tableau(t: &mut Tableau, op: &Op, coin: &mut dyn FnMut() -> bool) {
    match *op {
        Op::H(w) => t.h(w),
        Op::S(w) => t.s(w),
        Op::Sdg(w) => t.sdg(w),
        Op::X(w) => t.x(w),
        Op::Y(w) => t.y(w),
        Op::Z(w) => t.z(w),
        Op::Cx(a, b) => t.cx(a, b),
        Op::Reset(w) => t.reset(w, coin),
        Op::U(..) => unreachable!("stabilizer programs are Clifford"),
        Op::Noise1(..) | Op::Noise2(..) => {}
    }
}

/// Pauli code 0..4 = I, X, Y, Z.
fn pauli_x(code: usize) -> bool {
    code == 1 || code == 2
}

fn pauli_z(code: usize) -> bool {
    code == 2 || code == 3
}

/// Which measured bits an X or Z error on each wire would flip, for each
/// noise location (computed by backward propagation through the Cliffords).
struct NoiseSite {
    p: f64,
    /// Flip masks indexed by Pauli code (X, Y, Z) per side.
    a: Option<[Bits; 3]>,
    b: Option<[Bits; 3]>,
    two_qubit: bool,
}

fn noise_sites(prog: &Program) -> Vec<NoiseSite> {
    let m = prog.measures.len();
    let mut sx: Vec<Bits> = vec![Bits::zeros(m); prog.num_wires];
    let mut sz: Vec<Bits> = vec![Bits::zeros(m); prog.num_wires];
    for (i, meas) in prog.measures.iter().enumerate() {
        sx[meas.wire].flip(i);
    }
    let masks = |w: usize, sx: &[Bits], sz: &[Bits]| {
        let mut y = sx[w].clone();
        y.xor(&sz[w]);
        [sx[w].clone(), y, sz[w].clone()]
    };
    let mut sites = Vec::new();
    for op in prog.ops.iter().rev() {
        match *op {
            Op::H(w) => std::mem::swap(&mut sx[w], &mut sz[w]),
            Op::S(w) | Op::Sdg(w) => {
                let z = sz[w].clone();
                sx[w].xor(&z);
            }
            Op::Cx(c, t) => {
                let xt = sx[t].clone();
                sx[c].xor(&xt);
                let zc = sz[c].clone();
                sz[t].xor(&zc);
            }
            Op::X(_) | Op::Y(_) | Op::Z(_) => {}
            Op::Noise1(w, p) => sites.push(NoiseSite { p, a: Some(masks(w, &sx, &sz)), b: None, two_qubit: false }),
            Op::Noise2(a, b, p) => sites.push(NoiseSite {
                p,
                a: a.map(|w| masks(w, &sx, &sz)),
                b: b.map(|w| masks(w, &sx, &sz)),
                two_qubit: true,
            }),
            Op::Reset(_) | Op::U(..) => unreachable!("frame sampling needs a reset-free Clifford program"),
        }
    }
    sites.reverse();
    sites.retain(|s| s.a.iter().chain(&s.b).any(|m| m.iter().any(|b| !b.is_zero())));
    sites
}

fn apply_readout(bits: &mut Bits, measures: &[Measure], rng: &mut ChaCha8Rng) {
    for (i, m) in measures.iter().enumerate() {
        if m.p_read > 0.0 && rng.gen::<f64>() < m.p_read {
            bits.flip(i);
        }
    }
}

fn tally(counts: HashMap<Bits, u64>, len: usize, shots: u64) -> OutcomeDistribution {
    let counts = counts.into_iter().map(|(b, n)| (b.key(len), n)).collect();
    OutcomeDistribution { shots, counts }
}

fn run_stabilizer(prog: &Program, shots: u64, seed: u64) -> OutcomeDistribution {
    let m = prog.measures.len();
    let mut counts: HashMap<Bits, u64> = HashMap::new();
    if prog.has_reset() {
        for shot in 0..shots {
            let mut rng = shot_rng(seed, shot);
            let mut t = Tableau::new(prog.num_wires);
            for op in &prog.ops {
                match *op {
                    Op::Noise1(w, p) => {
                        if rng.gen::<f64>() < p {
                            apply_pauli_tableau(&mut t, w, rng.gen_range(1..4));
                        }
                    }
                    Op::Noise2(a, b, p) => {
                        if rng.gen::<f64>() < p {
                            let idx = rng.gen_range(1..16usize);
                            if let Some(a) = a {
                                apply_pauli_tableau(&mut t, a, idx % 4);
                            }
                            if let Some(b) = b {
                                apply_pauli_tableau(&mut t, b, idx / 4);
                            }
                        }
                    }
                    _ => apply_tableau(&mut t, op, &mut || rng.gen::<bool>()),
                }
            }
            let mut bits = Bits::zeros(m);
            for (i, meas) in prog.measures.iter().enumerate() {
                if t.measure(meas.wire, || rng.gen::<bool>()).0 {
                    bits.flip(i);
                }
            }
            apply_readout(&mut bits, &prog.measures, &mut rng);
            *counts.entry(bits).or_default() += 1;
        }
        return tally(counts, m, shots);
    }

    let affine = affine_outcomes(&evolve_tableau(prog), &prog.measures);
    let sites = if prog.is_noisy() { noise_sites(prog) } else { Vec::new() };
    for shot in 0..shots {
        let mut rng = shot_rng(seed, shot);
        let mut bits = affine.v0.clone();
        for g in &affine.gens {
            if rng.gen::<bool>() {
                bits.xor(g);
            }
        }
        for site in &sites {
            if rng.gen::<f64>() >= site.p {
                continue;
            }
            let (ca, cb) = if site.two_qubit {
                let idx = rng.gen_range(1..16usize);
                (idx % 4, idx / 4)
            } else {
                (rng.gen_range(1..4usize), 0)
            };
            if let (Some(masks), true) = (&site.a, ca > 0) {
                bits.xor(&masks[ca - 1]);
            }
            if let (Some(masks), true) = (&site.b, cb > 0) {
                bits.xor(&masks[cb - 1]);
            }
        }
        apply_readout(&mut bits, &prog.measures, &mut rng);
        *counts.entry(bits).or_default() += 1;
    }
    tally(counts, m, shots)
}

fn apply_pauli_tableau(t: &mut Tableau, w: usize, code: usize) {
    match code {
        1 => t.x(w),
        2 => t.y(w),
        3 => t.z(w),
        _ => {}
    }
}

fn apply_pauli_sv(sv: &mut StateVector, w: usize, code: usize) {
    if pauli_z(code) {
        sv.z(w);
    }
    if pauli_x(code) {
        sv.x(w);
    }
}

fn apply_sv(sv: &mut StateVector, op: &Op, rng: &mut ChaCha8Rng) {
    const R: f64 = std::f64::consts::FRAC_1_SQRT_2;
    const H: Mat2 = [
        num_complex::Complex64::new(R, 0.0),
        num_complex::Complex64::new(R, 0.0),
        num_complex::Complex64::new(R, 0.0),
        num_complex::Complex64::new(-R, 0.0),
    ];
    let phase = |im: f64| {
        let c = num_complex::Complex64::new;
        [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, im)]
    };
    match *op {
        Op::H(w) => sv.apply1(w, &H),
        Op::S(w) => sv.apply1(w, &phase(1.0)),
        Op::Sdg(w) => sv.apply1(w, &phase(-1.0)),
        Op::X(w) => sv.x(w),
        Op::Y(w) => sv.y(w),
        Op::Z(w) => sv.z(w),
        Op::Cx(a, b) => sv.cx(a, b),
        Op::U(w, m) => sv.apply1(w, &m),
        Op::Reset(w) => sv.reset(w, rng.gen::<f64>()),
        Op::Noise1(w, p) => {
            if rng.gen::<f64>() < p {
                apply_pauli_sv(sv, w, rng.gen_range(1..4));
            }
        }
        Op::Noise2(a, b, p) => {
            if rng.gen::<f64>() < p {
                let idx = rng.gen_range(1..16usize);
                if let Some(a) = a {
                    apply_pauli_sv(sv, a, idx % 4);
                }
                if let Some(b) = b {
                    apply_pauli_sv(sv, b, idx / 4);
                }
            }
        }
    }
}

/// Outcome probabilities of the final state, as (bits, p) sorted by bits.
fn sv_marginal(sv: &StateVector, measures: &[Measure]) -> Vec<(Bits, f64)> {
    let mut acc: HashMap<Bits, f64> = HashMap::new();
    for (idx, a) in sv.amplitudes().iter().enumerate() {
        let p = a.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let mut bits = Bits::zeros(measures.len());
        for (i, m) in measures.iter().enumerate() {
            if idx >> m.wire & 1 == 1 {
                bits.flip(i);
            }
        }
        *acc.entry(bits).or_default() += p;
    }
    let mut out: Vec<(Bits, f64)> = acc.into_iter().collect();
    out.sort_by(|a, b| a.0 .0.cmp(&b.0 .0));
    out
}

fn sample_from(table: &[(Bits, f64)], u: f64) -> &Bits {
    let total: f64 = table.iter().map(|e| e.1).sum();
    let target = u * total;
    let mut acc = 0.0;
    for (bits, p) in table {
        acc += p;
        if target < acc {
            return bits;
        }
    }
    &table.last().expect("non-empty outcome table").0
}

fn check_sv_width(prog: &Program) -> Result<(), SimError> {
    if prog.num_wires > MAX_STATEVECTOR_QUBITS {
        return Err(SimError::TooManyQubits { live: prog.num_wires, max: MAX_STATEVECTOR_QUBITS });
    }
    Ok(())
}

fn run_statevector(prog: &Program, shots: u64, seed: u64) -> Result<OutcomeDistribution, SimError> {
    check_sv_width(prog)?;
    let m = prog.measures.len();
    let mut counts: HashMap<Bits, u64> = HashMap::new();
    if !prog.is_noisy() && !prog.has_reset() {
        let mut sv = StateVector::new(prog.num_wires);
        let mut unused = shot_rng(seed, u64::MAX);
        for op in &prog.ops {
            apply_sv(&mut sv, op, &mut unused);
        }
        let table = sv_marginal(&sv, &prog.measures);
        for shot in 0..shots {
            let mut rng = shot_rng(seed, shot);
            *counts.entry(sample_from(&table, rng.gen::<f64>()).clone()).or_default() += 1;
        }
        return Ok(tally(counts, m, shots));
    }
    for shot in 0..shots {
        let mut rng = shot_rng(seed, shot);
        let mut sv = StateVector::new(prog.num_wires);
        for op in &prog.ops {
            apply_sv(&mut sv, op, &mut rng);
        }
        let table = sv_marginal(&sv, &prog.measures);
        let mut bits = sample_from(&table, rng.gen::<f64>()).clone();
        apply_readout(&mut bits, &prog.measures, &mut rng);
        *counts.entry(bits).or_default() += 1;
    }
    Ok(tally(counts, m, shots))
}

/// Noiseless stabilizer sampling.
pub fn sim_clifford(c: &Circuit, shots: u64, seed: u64) -> Result<OutcomeDistribution, SimError> {
    let prog = lower(c, None)?;
    prog.require_clifford()?;
    Ok(run_stabilizer(&prog, shots, seed))
}

/// Stabilizer sampling with per-shot Pauli trajectories.
pub fn sim_clifford_noisy(
    c: &Circuit,
    nm: &NoiseModel,
    shots: u64,
    seed: u64,
) -> Result<OutcomeDistribution, SimError> {
    let prog = lower(c, Some(nm))?;
    prog.require_clifford()?;
    Ok(run_stabilizer(&prog, shots, seed))
}

pub fn sim_statevector(c: &Circuit, shots: u64, seed: u64) -> Result<OutcomeDistribution, SimError> {
    run_statevector(&lower(c, None)?, shots, seed)
}

pub fn sim_statevector_noisy(
    c: &Circuit,
    nm: &NoiseModel,
    shots: u64,
    seed: u64,
) -> Result<OutcomeDistribution, SimError> {
    run_statevector(&lower(c, Some(nm))?, shots, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Stabilizer,
    Statevector,
}

/// Noisy run on whichever engine fits: stabilizer for Clifford programs,
/// statevector for small non-Clifford ones.
pub fn run_noisy(
    c: &Circuit,
    nm: &NoiseModel,
    shots: u64,
    seed: u64,
) -> Result<(OutcomeDistribution, Engine), SimError> {
    let prog = lower(c, Some(nm))?;
    if prog.is_clifford() {
        Ok((run_stabilizer(&prog, shots, seed), Engine::Stabilizer))
    } else {
        Ok((run_statevector(&prog, shots, seed)?, Engine::Statevector))
    }
}

/// Exact noiseless outcome probabilities.
///
/// Clifford circuits enumerate the affine outcome space of the stabilizer
/// state; other circuits read `|amplitude|^2` from the statevector. Circuits
/// with mid-circuit resets fall back to [`ORACLE_SHOTS`] samples.
pub fn ideal_probabilities(c: &Circuit) -> Result<Probabilities, SimError> {
    let prog = lower(c, None)?;
    let m = prog.measures.len();
    if prog.has_reset() {
        let d = if prog.is_clifford() {
            run_stabilizer(&prog, ORACLE_SHOTS, 0)
        } else {
            run_statevector(&prog, ORACLE_SHOTS, 0)?
        };
        return Ok(d.probabilities());
    }
    if prog.is_clifford() {
        let affine = affine_outcomes(&evolve_tableau(&prog), &prog.measures);
        let k = affine.gens.len();
        if k > MAX_EXACT_RANDOM_BITS {
            return Err(SimError::TooManyOutcomes { bits: k });
        }
        let p = 0.5f64.powi(k as i32);
        let mut out = Probabilities::new();
        for combo in 0u64..1 << k {
            let mut bits = affine.v0.clone();
            for (j, g) in affine.gens.iter().enumerate() {
                if combo >> j & 1 == 1 {
                    bits.xor(g);
                }
            }
            *out.entry(bits.key(m)).or_default() += p;
        }
        return Ok(out);
    }
    check_sv_width(&prog)?;
    let mut sv = StateVector::new(prog.num_wires);
    let mut unused = shot_rng(0, u64::MAX);
    for op in &prog.ops {
        apply_sv(&mut sv, op, &mut unused);
    }
    Ok(sv_marginal(&sv, &prog.measures).into_iter().map(|(b, p)| (b.key(m), p)).collect())
}
