//! The benchmark circuits used by the fidelity experiment.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::{Circuit, Gate};
use crate::qasm::{parse_qasm, SourceProgram};

pub const NAMES: [&str; 6] = ["bv", "hsp", "grover", "rep", "circ", "circ2"];

const BV: &str = include_str!("../benchmarks/bv.qasm");
const HSP: &str = include_str!("../benchmarks/hsp.qasm");
const GROVER: &str = include_str!("../benchmarks/grover.qasm");
const REP: &str = include_str!("../benchmarks/rep.qasm");

/// Fixed generator seeds so `circ` and `circ2` never change.
const CIRC_SEED: u64 = 0x0c1c_0007;
const CIRC2_SEED: u64 = 0x0c1c_0008;

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: &'static str,
    pub circuit: Circuit,
}

fn parsed(name: &'static str, text: &str) -> Circuit {
    parse_qasm(&SourceProgram::from_file(text, format!("benchmarks/{name}.qasm")))
        .unwrap_or_else(|e| panic!("bundled benchmark {name}: {e}"))
}

/// Random 7-qubit circuit with T and arbitrary-angle rz gates.
pub fn circ() -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(CIRC_SEED);
    let n = 7;
    let mut c = Circuit::new(n, n);
    for q in 0..n {
        c.push(Gate::h(q));
    }
    for _ in 0..30 {
        let q = rng.gen_range(0..n);
        match rng.gen_range(0..6) {
            0 => c.push(Gate::t(q)),
            1 => c.push(Gate::tdg(q)),
            2 => c.push(Gate::rz(rng.gen_range(0.0..std::f64::consts::TAU), q)),
            3 => c.push(Gate::h(q)),
            _ => {
                let mut r = rng.gen_range(0..n - 1);
                if r >= q {
                    r += 1;
                }
                c.push(Gate::cx(q, r))
            }
        };
    }
    c.measure_all();
    c
}

/// Random 8-qubit Clifford circuit with exactly 12 CX gates.
pub fn circ2() -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(CIRC2_SEED);
    let n = 8;
    let mut c = Circuit::new(n, n);
    let singles: [fn(usize) -> Gate; 5] = [Gate::h, Gate::s, Gate::sdg, Gate::x, Gate::z];
    let qubits: Vec<usize> = (0..n).collect();
    for _ in 0..12 {
        for _ in 0..2 {
            let q = rng.gen_range(0..n);
            c.push(singles.choose(&mut rng).unwrap()(q));
        }
        let pair: Vec<usize> = qubits.choose_multiple(&mut rng, 2).copied().collect();
        c.push(Gate::cx(pair[0], pair[1]));
    }
    c.measure_all();
    c
}

pub fn get(name: &str) -> Option<Benchmark> {
    let (name, circuit) = match name {
        "bv" => ("bv", parsed("bv", BV)),
        "hsp" => ("hsp", parsed("hsp", HSP)),
        "grover" => ("grover", parsed("grover", GROVER)),
        "rep" => ("rep", parsed("rep", REP)),
        "circ" => ("circ", circ()),
        "circ2" => ("circ2", circ2()),
        _ => return None,
    };
    Some(Benchmark { name, circuit })
}

pub fn all() -> Vec<Benchmark> {
    NAMES.iter().map(|n| get(n).unwrap()).collect()
}
