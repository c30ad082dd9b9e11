//! OpenQASM 2.0 subset: parser and emitter.
//!
//! Registers are flattened into one index space in declaration order, for
//! both quantum and classical bits. Whole-register operands broadcast.
//! Custom `gate`/`opaque` definitions and classical control are rejected.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::circuit::{Circuit, Gate, GateKind};

/// Program text together with where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceProgram {
    pub text: String,
    /// File name or `"inline"`.
    pub origin: String,
}

impl SourceProgram {
    pub fn inline(text: impl Into<String>) -> Self {
        SourceProgram { text: text.into(), origin: "inline".to_string() }
    }

    pub fn from_file(text: impl Into<String>, origin: impl Into<String>) -> Self {
        SourceProgram { text: text.into(), origin: origin.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QasmError {
    #[error("{pos}: syntax error: {message}")]
    Syntax { pos: Position, message: String },
    #[error("{pos}: unsupported gate `{name}`")]
    UnsupportedGate { pos: Position, name: String },
    #[error("{pos}: index {index} out of range for register `{register}` of size {size}")]
    Index { pos: Position, register: String, index: usize, size: usize },
}

impl QasmError {
    pub fn position(&self) -> Position {
        match self {
            QasmError::Syntax { pos, .. }
            | QasmError::UnsupportedGate { pos, .. }
            | QasmError::Index { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u64),
    Real(f64),
    Str(String),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::Real(r) => write!(f, "`{r}`"),
            Tok::Str(s) => write!(f, "\"{s}\""),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

const SYMBOLS: [&str; 13] = ["->", ";", ",", "[", "]", "(", ")", "{", "}", "+", "-", "*", "/"];

fn lex(text: &str) -> Result<Vec<(Tok, Position)>, QasmError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let pos = Position { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            let mut is_real = false;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                is_real = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    is_real = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let lit: String = chars[start..i].iter().collect();
            col += i - start;
            let tok = if is_real {
                Tok::Real(lit.parse().map_err(|_| syntax(pos, format!("bad number `{lit}`")))?)
            } else {
                Tok::Int(lit.parse().map_err(|_| syntax(pos, format!("bad integer `{lit}`")))?)
            };
            out.push((tok, pos));
            continue;
        }
        if c == '"' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && chars[j] != '"' && chars[j] != '\n' {
                j += 1;
            }
            if j >= chars.len() || chars[j] != '"' {
                return Err(syntax(pos, "unterminated string"));
            }
            out.push((Tok::Str(chars[start..j].iter().collect()), pos));
            col += j + 1 - i;
            i = j + 1;
            continue;
        }
        let rest: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                out.push((Tok::Sym(sym), pos));
                i += sym.len();
                col += sym.len();
            }
            None => return Err(syntax(pos, format!("unexpected character `{c}`"))),
        }
    }
    out.push((Tok::Eof, Position { line, col }));
    Ok(out)
}

fn syntax(pos: Position, message: impl Into<String>) -> QasmError {
    QasmError::Syntax { pos, message: message.into() }
}

struct Register {
    name: String,
    offset: usize,
    size: usize,
}

/// Operand: a whole register or one element of it (already flattened).
#[derive(Clone, Copy)]
enum Operand {
    Whole { offset: usize, size: usize },
    Single(usize),
}

struct Parser {
    toks: Vec<(Tok, Position)>,
    at: usize,
    qregs: Vec<Register>,
    cregs: Vec<Register>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Position {
        self.toks[self.at].1
    }

    fn next(&mut self) -> (Tok, Position) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect_sym(&mut self, sym: &'static str) -> Result<(), QasmError> {
        match self.next() {
            (Tok::Sym(s), _) if s == sym => Ok(()),
            (t, pos) => Err(syntax(pos, format!("expected `{sym}`, found {t}"))),
        }
    }

    fn eat_sym(&mut self, sym: &'static str) -> bool {
        if matches!(self.peek(), Tok::Sym(s) if *s == sym) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_ident(&mut self) -> Result<(String, Position), QasmError> {
        match self.next() {
            (Tok::Ident(s), pos) => Ok((s, pos)),
            (t, pos) => Err(syntax(pos, format!("expected identifier, found {t}"))),
        }
    }

    fn expect_int(&mut self) -> Result<usize, QasmError> {
        match self.next() {
            (Tok::Int(i), _) => Ok(i as usize),
            (t, pos) => Err(syntax(pos, format!("expected integer, found {t}"))),
        }
    }

    fn header(&mut self) -> Result<(), QasmError> {
        match self.next() {
            (Tok::Ident(s), _) if s == "OPENQASM" => {}
            (t, pos) => return Err(syntax(pos, format!("expected `OPENQASM 2.0;` header, found {t}"))),
        }
        match self.next() {
            (Tok::Real(v), _) if v == 2.0 => {}
            (Tok::Int(2), _) => {}
            (t, pos) => return Err(syntax(pos, format!("unsupported OpenQASM version {t}"))),
        }
        self.expect_sym(";")
    }

    fn declare(&mut self, quantum: bool) -> Result<(), QasmError> {
        let (name, pos) = self.expect_ident()?;
        self.expect_sym("[")?;
        let size = self.expect_int()?;
        self.expect_sym("]")?;
        self.expect_sym(";")?;
        if self.qregs.iter().chain(&self.cregs).any(|r| r.name == name) {
            return Err(syntax(pos, format!("register `{name}` declared twice")));
        }
        let regs = if quantum { &mut self.qregs } else { &mut self.cregs };
        let offset = regs.iter().map(|r| r.size).sum();
        regs.push(Register { name, offset, size });
        Ok(())
    }

    fn operand(&mut self, quantum: bool) -> Result<Operand, QasmError> {
        let (name, pos) = self.expect_ident()?;
        let regs = if quantum { &self.qregs } else { &self.cregs };
        let Some(reg) = regs.iter().find(|r| r.name == name) else {
            let kind = if quantum { "quantum" } else { "classical" };
            return Err(syntax(pos, format!("undeclared {kind} register `{name}`")));
        };
        let (offset, size) = (reg.offset, reg.size);
        if self.eat_sym("[") {
            let idx_pos = self.pos();
            let index = self.expect_int()?;
            self.expect_sym("]")?;
            if index >= size {
                return Err(QasmError::Index { pos: idx_pos, register: name, index, size });
            }
            Ok(Operand::Single(offset + index))
        } else {
            Ok(Operand::Whole { offset, size })
        }
    }

    fn operand_list(&mut self) -> Result<Vec<Operand>, QasmError> {
        let mut ops = vec![self.operand(true)?];
        while self.eat_sym(",") {
            ops.push(self.operand(true)?);
        }
        Ok(ops)
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<f64, QasmError> {
        let mut v = self.term()?;
        loop {
            if self.eat_sym("+") {
                v += self.term()?;
            } else if self.eat_sym("-") {
                v -= self.term()?;
            } else {
                return Ok(v);
            }
        }
    }

    fn term(&mut self) -> Result<f64, QasmError> {
        let mut v = self.unary()?;
        loop {
            if self.eat_sym("*") {
                v *= self.unary()?;
            } else if self.eat_sym("/") {
                let pos = self.pos();
                let d = self.unary()?;
                if d == 0.0 {
                    return Err(syntax(pos, "division by zero in angle"));
                }
                v /= d;
            } else {
                return Ok(v);
            }
        }
    }

    fn unary(&mut self) -> Result<f64, QasmError> {
        if self.eat_sym("-") {
            return Ok(-self.unary()?);
        }
        if self.eat_sym("+") {
            return self.unary();
        }
        match self.next() {
            (Tok::Int(i), _) => Ok(i as f64),
            (Tok::Real(r), _) => Ok(r),
            (Tok::Ident(s), _) if s == "pi" => Ok(PI),
            (Tok::Sym("("), _) => {
                let v = self.expr()?;
                self.expect_sym(")")?;
                Ok(v)
            }
            (t, pos) => Err(syntax(pos, format!("expected angle expression, found {t}"))),
        }
    }

    fn statement(&mut self, circuit: &mut Circuit) -> Result<(), QasmError> {
        let (word, pos) = self.expect_ident()?;
        match word.as_str() {
            "include" => {
                match self.next() {
                    (Tok::Str(s), _) if s == "qelib1.inc" => {}
                    (t, p) => return Err(syntax(p, format!("only \"qelib1.inc\" may be included, found {t}"))),
                }
                self.expect_sym(";")
            }
            "qreg" => {
                self.declare(true)?;
                circuit.num_qubits = self.qregs.iter().map(|r| r.size).sum();
                Ok(())
            }
            "creg" => {
                self.declare(false)?;
                circuit.num_clbits = self.cregs.iter().map(|r| r.size).sum();
                Ok(())
            }
            "gate" | "opaque" => {
                let name = match self.peek() {
                    Tok::Ident(n) => n.clone(),
                    _ => String::new(),
                };
                Err(QasmError::UnsupportedGate { pos, name: format!("{word} {name}").trim_end().to_string() })
            }
            "if" => Err(syntax(pos, "classical control (`if`) is not supported")),
            "measure" => {
                let q = self.operand(true)?;
                self.expect_sym("->")?;
                let c_pos = self.pos();
                let c = self.operand(false)?;
                self.expect_sym(";")?;
                let pairs = broadcast(&[q, c]).ok_or_else(|| syntax(c_pos, "register sizes differ in measure"))?;
                for pair in pairs {
                    circuit.measures.push((pair[0], pair[1]));
                }
                Ok(())
            }
            "barrier" => {
                let ops = self.operand_list()?;
                self.expect_sym(";")?;
                let mut qubits = Vec::new();
                for op in ops {
                    match op {
                        Operand::Single(q) => qubits.push(q),
                        Operand::Whole { offset, size } => qubits.extend(offset..offset + size),
                    }
                }
                circuit.gates.push(Gate::new(GateKind::Barrier, Vec::new(), qubits));
                Ok(())
            }
            name => {
                let kind = match GateKind::from_name(name) {
                    Some(k) if !k.is_directive() => k,
                    _ => return Err(QasmError::UnsupportedGate { pos, name: name.to_string() }),
                };
                let mut params = Vec::new();
                if self.eat_sym("(") {
                    if !self.eat_sym(")") {
                        params.push(self.expr()?);
                        while self.eat_sym(",") {
                            params.push(self.expr()?);
                        }
                        self.expect_sym(")")?;
                    }
                }
                if params.len() != kind.num_params() {
                    return Err(syntax(
                        pos,
                        format!("`{name}` takes {} parameter(s), got {}", kind.num_params(), params.len()),
                    ));
                }
                let ops_pos = self.pos();
                let ops = self.operand_list()?;
                self.expect_sym(";")?;
                let arity = kind.num_qubits().unwrap_or(ops.len());
                if ops.len() != arity {
                    return Err(syntax(ops_pos, format!("`{name}` takes {arity} qubit(s), got {}", ops.len())));
                }
                let expanded = broadcast(&ops).ok_or_else(|| syntax(ops_pos, "register sizes differ"))?;
                for qubits in expanded {
                    let mut sorted = qubits.clone();
                    sorted.sort_unstable();
                    sorted.dedup();
                    if sorted.len() != qubits.len() {
                        return Err(syntax(ops_pos, format!("`{name}` applied to a repeated qubit")));
                    }
                    circuit.gates.push(Gate::new(kind, params.clone(), qubits));
                }
                Ok(())
            }
        }
    }
}

/// Expands whole-register operands element-wise. `None` on size mismatch.
fn broadcast(ops: &[Operand]) -> Option<Vec<Vec<usize>>> {
    let mut width = None;
    for op in ops {
        if let Operand::Whole { size, .. } = op {
            match width {
                None => width = Some(*size),
                Some(w) if w != *size => return None,
                _ => {}
            }
        }
    }
    let n = width.unwrap_or(1);
    Some(
        (0..n)
            .map(|i| {
                ops.iter()
                    .map(|op| match *op {
                        Operand::Single(q) => q,
                        Operand::Whole { offset, .. } => offset + i,
                    })
                    .collect()
            })
            .collect(),
    )
}

/// Parses an OpenQASM 2.0 program into a [`Circuit`].
pub fn parse_qasm(src: &SourceProgram) -> Result<Circuit, QasmError> {
    let toks = lex(&src.text)?;
    let mut p = Parser { toks, at: 0, qregs: Vec::new(), cregs: Vec::new() };
    p.header()?;
    let mut circuit = Circuit::new(0, 0);
    while *p.peek() != Tok::Eof {
        p.statement(&mut circuit)?;
    }
    Ok(circuit)
}

/// Shorthand for parsing inline text.
pub fn parse_str(text: &str) -> Result<Circuit, QasmError> {
    parse_qasm(&SourceProgram::inline(text))
}

fn fmt_angle(a: f64) -> String {
    // 17 significant digits round-trip every f64 exactly.
    format!("{a:.16e}")
}

/// Emits `c` as OpenQASM 2.0 over a single `q` and `c` register.
pub fn emit_qasm(c: &Circuit) -> SourceProgram {
    let mut s = String::from("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
    let _ = writeln!(s, "qreg q[{}];", c.num_qubits);
    if c.num_clbits > 0 {
        let _ = writeln!(s, "creg c[{}];", c.num_clbits);
    }
    for g in &c.gates {
        s.push_str(g.kind.name());
        if !g.params.is_empty() {
            let params: Vec<String> = g.params.iter().map(|&a| fmt_angle(a)).collect();
            let _ = write!(s, "({})", params.join(","));
        }
        let qubits: Vec<String> = g.qubits.iter().map(|q| format!("q[{q}]")).collect();
        let _ = writeln!(s, " {};", qubits.join(","));
    }
    for &(q, cl) in &c.measures {
        let _ = writeln!(s, "measure q[{q}] -> c[{cl}];");
    }
    SourceProgram::inline(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    const BELL: &str = "OPENQASM 2.0; qreg q[2]; creg c[2]; h q[0]; cx q[0],q[1]; measure q -> c;";

    #[test]
    fn parses_bell_pair() {
        let c = parse_str(BELL).unwrap();
        assert_eq!(c.num_qubits, 2);
        assert_eq!(c.gates, vec![Gate::h(0), Gate::cx(0, 1)]);
        assert_eq!(c.measures, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn parses_empty_circuit() {
        let c = parse_str("OPENQASM 2.0; qreg q[1];").unwrap();
        assert_eq!((c.num_qubits, c.gates.len(), c.measures.len()), (1, 0, 0));
    }

    #[test]
    fn flattens_registers_in_declaration_order() {
        let src = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg a[2];\nqreg b[3];\ncreg m[1];\ncreg n[2];\ncx a[1],b[2];\nmeasure b[0] -> n[1];\n";
        let c = parse_str(src).unwrap();
        assert_eq!(c.num_qubits, 5);
        assert_eq!(c.num_clbits, 3);
        assert_eq!(c.gates, vec![Gate::cx(1, 4)]);
        assert_eq!(c.measures, vec![(2, 2)]);
    }

    #[test]
    fn angle_expressions() {
        let c = parse_str("OPENQASM 2.0; qreg q[1]; rz(pi/4) q[0]; rx(3*pi/2) q[0]; ry(-0.25) q[0]; u3(pi, -pi/2, 1e-3) q[0]; u2(0,(pi)) q[0];").unwrap();
        assert_eq!(c.gates[0].params, vec![PI / 4.0]);
        assert_eq!(c.gates[1].params, vec![3.0 * PI / 2.0]);
        assert_eq!(c.gates[2].params, vec![-0.25]);
        assert_eq!(c.gates[3].params, vec![PI, -FRAC_PI_2, 1e-3]);
        assert_eq!(c.gates[4].params, vec![0.0, PI]);
    }

    #[test]
    fn broadcasts_single_qubit_gates() {
        let c = parse_str("OPENQASM 2.0; qreg q[3]; h q; barrier q; reset q[1];").unwrap();
        assert_eq!(c.gates.len(), 5);
        assert_eq!(c.gates[3].qubits, vec![0, 1, 2]);
        assert_eq!(c.gates[4], Gate::single(GateKind::Reset, 1));
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse_str("OPENQASM 2.0;\nqreg q[2];\nfoo q[0];").unwrap_err();
        assert_eq!(err, QasmError::UnsupportedGate { pos: Position { line: 3, col: 1 }, name: "foo".into() });

        let err = parse_str("OPENQASM 2.0;\nqreg q[2];\nh q[5];").unwrap_err();
        assert!(matches!(err, QasmError::Index { index: 5, size: 2, .. }));
        assert_eq!(err.position(), Position { line: 3, col: 5 });

        let err = parse_str("OPENQASM 2.0;\nqreg q[2]\nh q[0];").unwrap_err();
        assert!(matches!(err, QasmError::Syntax { .. }));
        assert_eq!(err.position().line, 3);

        let err = parse_str("").unwrap_err();
        assert_eq!(err.position(), Position { line: 1, col: 1 });
    }

    #[test]
    fn rejects_custom_gates_and_control_flow() {
        let err = parse_str("OPENQASM 2.0; qreg q[1]; gate foo a { h a; }").unwrap_err();
        assert!(matches!(err, QasmError::UnsupportedGate { ref name, .. } if name == "gate foo"));
        let err = parse_str("OPENQASM 2.0; qreg q[1]; creg c[1]; if(c==1) x q[0];").unwrap_err();
        assert!(matches!(err, QasmError::Syntax { .. }));
        let err = parse_str("OPENQASM 3.0; qreg q[1];").unwrap_err();
        assert!(matches!(err, QasmError::Syntax { .. }));
    }

    #[test]
    fn rejects_arity_mistakes() {
        assert!(parse_str("OPENQASM 2.0; qreg q[2]; cx q[0];").is_err());
        assert!(parse_str("OPENQASM 2.0; qreg q[2]; rz q[0];").is_err());
        assert!(parse_str("OPENQASM 2.0; qreg q[2]; cx q[0],q[0];").is_err());
        assert!(parse_str("OPENQASM 2.0; qreg q[2]; qreg r[3]; cx q,r;").is_err());
    }

    #[test]
    fn emit_single_h() {
        let mut c = Circuit::new(1, 0);
        c.push(Gate::h(0));
        let text = emit_qasm(&c).text;
        assert_eq!(text.lines().filter(|l| *l == "h q[0];").count(), 1);
    }

    #[test]
    fn round_trips_bell_and_angles() {
        let bell = parse_str(BELL).unwrap();
        assert_eq!(parse_qasm(&emit_qasm(&bell)).unwrap(), bell);

        let mut c = Circuit::new(2, 1);
        c.push(Gate::rz(0.1 + 0.2, 0));
        c.push(Gate::new(GateKind::U3, vec![1e-300, -PI, 7.123456789012345e10], vec![1]));
        c.push(Gate::new(GateKind::Barrier, vec![], vec![1, 0]));
        c.measure(1, 0);
        assert_eq!(parse_qasm(&emit_qasm(&c)).unwrap(), c);
    }

    #[test]
    fn parse_is_deterministic() {
        assert_eq!(parse_str(BELL).unwrap(), parse_str(BELL).unwrap());
    }
}
