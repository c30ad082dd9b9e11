//! Dense statevector engine. Qubit `q` is bit `q` of the amplitude index.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use crate::circuit::{Circuit, Gate, GateKind};
use crate::transpile::decompose_3q;

pub type Mat2 = [Complex64; 4];

const fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Row-major 2x2 unitary of a single-qubit gate (Qiskit conventions).
pub fn matrix(g: &Gate) -> Option<Mat2> {
    let p = &g.params;
    let u3 = |theta: f64, phi: f64, lambda: f64| {
        let (ct, st) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        [
            c(ct, 0.0),
            -Complex64::from_polar(st, lambda),
            Complex64::from_polar(st, phi),
            Complex64::from_polar(ct, phi + lambda),
        ]
    };
    let phase = |lambda: f64| [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), Complex64::from_polar(1.0, lambda)];
    let m = match g.kind {
        GateKind::H => [c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0), c(-FRAC_1_SQRT_2, 0.0)],
        GateKind::X => [c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        GateKind::Y => [c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)],
        GateKind::Z => phase(std::f64::consts::PI),
        GateKind::S => [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)],
        GateKind::Sdg => [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -1.0)],
        GateKind::T => phase(std::f64::consts::FRAC_PI_4),
        GateKind::Tdg => phase(-std::f64::consts::FRAC_PI_4),
        GateKind::U1 => phase(p[0]),
        GateKind::Rz => {
            let h = p[0] / 2.0;
            [Complex64::from_polar(1.0, -h), c(0.0, 0.0), c(0.0, 0.0), Complex64::from_polar(1.0, h)]
        }
        GateKind::Rx => {
            let (co, si) = ((p[0] / 2.0).cos(), (p[0] / 2.0).sin());
            [c(co, 0.0), c(0.0, -si), c(0.0, -si), c(co, 0.0)]
        }
        GateKind::Ry => {
            let (co, si) = ((p[0] / 2.0).cos(), (p[0] / 2.0).sin());
            [c(co, 0.0), c(-si, 0.0), c(si, 0.0), c(co, 0.0)]
        }
        GateKind::U2 => u3(std::f64::consts::FRAC_PI_2, p[0], p[1]),
        GateKind::U3 => u3(p[0], p[1], p[2]),
        _ => return None,
    };
    Some(m)
}

#[derive(Debug, Clone)]
pub struct StateVector {
    n: usize,
    amp: Vec<Complex64>,
}

impl StateVector {
    pub fn new(n: usize) -> Self {
        let mut amp = vec![c(0.0, 0.0); 1 << n];
        amp[0] = c(1.0, 0.0);
        StateVector { n, amp }
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amp
    }

    pub fn apply1(&mut self, q: usize, m: &Mat2) {
        let bit = 1usize << q;
        for i in 0..self.amp.len() {
            if i & bit == 0 {
                let (a0, a1) = (self.amp[i], self.amp[i | bit]);
                self.amp[i] = m[0] * a0 + m[1] * a1;
                self.amp[i | bit] = m[2] * a0 + m[3] * a1;
            }
        }
    }

    pub fn x(&mut self, q: usize) {
        let bit = 1usize << q;
        for i in 0..self.amp.len() {
            if i & bit == 0 {
                self.amp.swap(i, i | bit);
            }
        }
    }

    pub fn z(&mut self, q: usize) {
        let bit = 1usize << q;
        for (i, a) in self.amp.iter_mut().enumerate() {
            if i & bit != 0 {
                *a = -*a;
            }
        }
    }

    /// Y up to global phase (i * X * Z).
    pub fn y(&mut self, q: usize) {
        self.z(q);
        self.x(q);
    }

    pub fn cx(&mut self, ctrl: usize, tgt: usize) {
        let (cb, tb) = (1usize << ctrl, 1usize << tgt);
        for i in 0..self.amp.len() {
            if i & cb != 0 && i & tb == 0 {
                self.amp.swap(i, i | tb);
            }
        }
    }

    pub fn prob_one(&self, q: usize) -> f64 {
        let bit = 1usize << q;
        self.amp.iter().enumerate().filter(|(i, _)| i & bit != 0).map(|(_, a)| a.norm_sqr()).sum()
    }

    /// Projective Z measurement given a uniform draw `u` in [0, 1).
    pub fn measure(&mut self, q: usize, u: f64) -> bool {
        let p1 = self.prob_one(q);
        let outcome = u < p1;
        let bit = 1usize << q;
        let norm = if outcome { p1 } else { 1.0 - p1 }.sqrt();
        for (i, a) in self.amp.iter_mut().enumerate() {
            if (i & bit != 0) == outcome {
                *a /= norm;
            } else {
                *a = c(0.0, 0.0);
            }
        }
        outcome
    }

    pub fn reset(&mut self, q: usize, u: f64) {
        if self.measure(q, u) {
            self.x(q);
        }
    }
}

/// Noiseless final state of `c` over all of its qubits (measurements ignored,
/// resets collapse toward outcome 0 when possible). For oracle checks.
pub fn state_of(c: &Circuit) -> Vec<Complex64> {
    assert!(c.num_qubits <= 20, "state_of is for small oracle circuits");
    let c = decompose_3q(c).expect("ccx is the only three-qubit gate");
    let mut sv = StateVector::new(c.num_qubits);
    for g in &c.gates {
        match g.kind {
            GateKind::Barrier => {}
            GateKind::Cx => sv.cx(g.qubits[0], g.qubits[1]),
            GateKind::Swap => {
                let (a, b) = (g.qubits[0], g.qubits[1]);
                sv.cx(a, b);
                sv.cx(b, a);
                sv.cx(a, b);
            }
            GateKind::Reset => sv.reset(g.qubits[0], 1.0),
            _ => sv.apply1(g.qubits[0], &matrix(g).expect("single-qubit gate")),
        }
    }
    sv.amp
}

/// |<a|b>|^2 for normalized states.
pub fn state_fidelity(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm_sqr()
}

pub fn states_equal_up_to_phase(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
    state_fidelity(a, b) >= 1.0 - tol
}

/// Relabels qubits of a state: amplitude of `i` moves to the index whose bit
/// `perm[q]` equals bit `q` of `i`. `out_qubits` may exceed the input width
/// (extra qubits stay |0>).
pub fn permute_state(state: &[Complex64], perm: &[usize], out_qubits: usize) -> Vec<Complex64> {
    let mut out = vec![c(0.0, 0.0); 1 << out_qubits];
    for (i, &a) in state.iter().enumerate() {
        let mut j = 0usize;
        for (q, &p) in perm.iter().enumerate() {
            if i >> q & 1 == 1 {
                j |= 1 << p;
            }
        }
        out[j] = a;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Gate;
    use std::f64::consts::PI;

    #[test]
    fn rz_half_pi_matches_s_up_to_phase() {
        let mut a = Circuit::new(1, 0);
        a.push(Gate::h(0)).push(Gate::rz(PI / 2.0, 0));
        let mut b = Circuit::new(1, 0);
        b.push(Gate::h(0)).push(Gate::s(0));
        assert!(states_equal_up_to_phase(&state_of(&a), &state_of(&b), 1e-12));
    }

    #[test]
    fn u3_special_cases() {
        let cases = [
            (Gate::new(GateKind::U3, vec![PI, 0.0, PI], vec![0]), Gate::x(0)),
            (Gate::new(GateKind::U2, vec![0.0, PI], vec![0]), Gate::h(0)),
            (Gate::new(GateKind::Ry, vec![PI], vec![0]), Gate::single(GateKind::Y, 0)),
            (Gate::new(GateKind::Rx, vec![PI], vec![0]), Gate::x(0)),
        ];
        for (u, expect) in cases {
            for prep in [GateKind::H, GateKind::S, GateKind::X] {
                let mut a = Circuit::new(1, 0);
                a.push(Gate::h(0)).push(Gate::single(prep, 0)).push(u.clone());
                let mut b = Circuit::new(1, 0);
                b.push(Gate::h(0)).push(Gate::single(prep, 0)).push(expect.clone());
                assert!(states_equal_up_to_phase(&state_of(&a), &state_of(&b), 1e-12), "{u:?}");
            }
        }
    }

    #[test]
    fn permutation_moves_bits() {
        let mut c = Circuit::new(2, 0);
        c.push(Gate::x(0));
        let s = permute_state(&state_of(&c), &[2, 0], 3);
        assert_eq!(s[0b100], Complex64::new(1.0, 0.0));
    }
}
