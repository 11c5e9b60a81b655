//! Front end for circuit files: the line-oriented `.qc` text format, plus the
//! canonical JSON form (detected by a leading `{`).
//!
//! Ket expressions share one grammar between `state` lines and re-parsing of
//! rendered state readouts: a sum of terms, each an optional amplitude times a
//! product of kets or parenthesized sub-expressions.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::circuit::{Circuit, GateApplication, Instruction, SourceMap, SubroutineDef};
use crate::error::CircuitError;
use crate::gates::{is_unitary, GateKind, Matrix};
use crate::state::{Amplitude, NamedStateRegistry};
use crate::tol;

const BUILTIN_GATE_NAMES: [&str; 15] = [
    "I", "X", "Y", "Z", "H", "S", "T", "RX", "RY", "RZ", "CNOT", "CZ", "CRY", "SWAP", "CCX",
];

/// Parse circuit text (`.qc` DSL or canonical JSON) into a validated circuit.
/// `matrix` declarations load their files relative to the working directory.
pub fn parse_circuit(text: &str) -> Result<Circuit, CircuitError> {
    parse_circuit_with_loader(text, &|path| {
        std::fs::read_to_string(path).map_err(|e| e.to_string())
    })
}

/// Like [`parse_circuit`], with matrix file loading under caller control.
pub fn parse_circuit_with_loader(
    text: &str,
    load: &dyn Fn(&str) -> Result<String, String>,
) -> Result<Circuit, CircuitError> {
    if text.trim_start().starts_with('{') {
        let c: Circuit = serde_json::from_str(text).map_err(|e| CircuitError::Parse {
            line: e.line().max(1),
            col: e.column().max(1),
            msg: format!("invalid circuit JSON: {e}"),
        })?;
        c.validate()?;
        return Ok(c);
    }
    DslParser::new(load).parse(text)
}

/// Evaluate a ket expression (e.g. `0.6|00> + 0.8|11>`) to a dense vector,
/// resolving named kets through `registry`. The result is not normalized.
pub fn parse_state_expression(
    text: &str,
    registry: &NamedStateRegistry,
) -> Result<Vec<Amplitude>, CircuitError> {
    let mut cur = Cursor::new(text, 1);
    let v = parse_expr(&mut cur, registry)?;
    cur.skip_ws();
    if cur.pos < cur.chars.len() {
        return Err(cur.err("unexpected trailing input"));
    }
    Ok(v)
}

struct Cursor {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl Cursor {
    fn new(s: &str, line: usize) -> Self {
        Cursor {
            chars: s.chars().collect(),
            pos: 0,
            line,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn err_at(&self, pos: usize, msg: impl Into<String>) -> CircuitError {
        CircuitError::Parse {
            line: self.line,
            col: pos + 1,
            msg: msg.into(),
        }
    }

    fn err(&self, msg: impl Into<String>) -> CircuitError {
        self.err_at(self.pos, msg)
    }

    fn expect(&mut self, c: char) -> Result<(), CircuitError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    fn ident(&mut self) -> Result<String, CircuitError> {
        if !matches!(self.peek(), Some(c) if c.is_ascii_alphabetic() || c == '_') {
            return Err(self.err("expected an identifier"));
        }
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn integer(&mut self) -> Result<usize, CircuitError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a number"));
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse()
            .map_err(|_| self.err_at(start, format!("invalid integer \"{s}\"")))
    }

    fn number(&mut self) -> Result<f64, CircuitError> {
        let start = self.pos;
        if matches!(self.peek(), Some('+') | Some('-')) {
            self.pos += 1;
        }
        let mut saw_digit = false;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            saw_digit |= self.peek().unwrap().is_ascii_digit();
            self.pos += 1;
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.pos += 1;
            }
            let mut exp_digit = false;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
                exp_digit = true;
            }
            if !exp_digit {
                self.pos = save;
            }
        }
        if !saw_digit {
            return Err(self.err_at(start, "expected a number"));
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse()
            .map_err(|_| self.err_at(start, format!("invalid number \"{s}\"")))
    }
}

fn kron(a: &[Amplitude], b: &[Amplitude]) -> Vec<Amplitude> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x * y);
        }
    }
    out
}

fn parse_expr(
    cur: &mut Cursor,
    registry: &NamedStateRegistry,
) -> Result<Vec<Amplitude>, CircuitError> {
    cur.skip_ws();
    let mut sign = 1.0;
    if cur.peek() == Some('-') {
        cur.pos += 1;
        sign = -1.0;
    } else if cur.peek() == Some('+') {
        cur.pos += 1;
    }
    let mut total = parse_term(cur, registry, sign)?;
    loop {
        cur.skip_ws();
        let sign = match cur.peek() {
            Some('+') => 1.0,
            Some('-') => -1.0,
            _ => break,
        };
        cur.pos += 1;
        let term = parse_term(cur, registry, sign)?;
        if term.len() != total.len() {
            return Err(cur.err("terms cover different numbers of wires"));
        }
        for (t, x) in total.iter_mut().zip(&term) {
            *t += x;
        }
    }
    Ok(total)
}

fn parse_term(
    cur: &mut Cursor,
    registry: &NamedStateRegistry,
    sign: f64,
) -> Result<Vec<Amplitude>, CircuitError> {
    cur.skip_ws();
    let mut coeff = Complex64::new(sign, 0.0);
    match cur.peek() {
        Some(c) if c.is_ascii_digit() || c == '.' => coeff *= cur.number()?,
        Some('(') => {
            if let Some(z) = try_complex_amp(cur) {
                coeff *= z;
            }
        }
        _ => {}
    }
    let mut vec = vec![coeff];
    let mut any_group = false;
    loop {
        cur.skip_ws();
        match cur.peek() {
            Some('|') => {
                let g = parse_ket(cur, registry)?;
                vec = kron(&vec, &g);
                any_group = true;
            }
            Some('(') => {
                cur.pos += 1;
                let g = parse_expr(cur, registry)?;
                cur.expect(')')?;
                vec = kron(&vec, &g);
                any_group = true;
            }
            _ => break,
        }
    }
    if !any_group {
        return Err(cur.err("expected a ket like |0>"));
    }
    Ok(vec)
}

/// Complex amplitude literal `(re+imi)` / `(re-imi)`. Restores the cursor and
/// returns None when the parenthesis is not a complex literal.
fn try_complex_amp(cur: &mut Cursor) -> Option<Complex64> {
    let save = cur.pos;
    let attempt = (|| {
        cur.expect('(').ok()?;
        cur.skip_ws();
        let re = cur.number().ok()?;
        cur.skip_ws();
        let sign = match cur.peek()? {
            '+' => 1.0,
            '-' => -1.0,
            _ => return None,
        };
        cur.pos += 1;
        cur.skip_ws();
        let im = cur.number().ok()?;
        if cur.peek()? != 'i' {
            return None;
        }
        cur.pos += 1;
        cur.skip_ws();
        if cur.peek()? != ')' {
            return None;
        }
        cur.pos += 1;
        Some(Complex64::new(re, sign * im))
    })();
    if attempt.is_none() {
        cur.pos = save;
    }
    attempt
}

fn parse_ket(
    cur: &mut Cursor,
    registry: &NamedStateRegistry,
) -> Result<Vec<Amplitude>, CircuitError> {
    let start = cur.pos;
    cur.expect('|')?;
    let content_start = cur.pos;
    while matches!(cur.peek(), Some(c) if c != '>' && c != '|') {
        cur.pos += 1;
    }
    let content: String = cur.chars[content_start..cur.pos].iter().collect();
    cur.expect('>')?;
    if content.is_empty() {
        return Err(cur.err_at(start, "empty ket"));
    }
    if content.chars().all(|c| c == '0' || c == '1') {
        if content.len() > 20 {
            return Err(cur.err_at(
                start,
                format!("ket |{content}> covers too many wires (limit 20)"),
            ));
        }
        let dim = 1usize << content.len();
        let idx = content
            .chars()
            .fold(0usize, |acc, c| (acc << 1) | (c as usize - '0' as usize));
        let mut v = vec![Complex64::new(0.0, 0.0); dim];
        v[idx] = Complex64::new(1.0, 0.0);
        Ok(v)
    } else {
        registry
            .get(&content)
            .map(|v| v.to_vec())
            .ok_or_else(|| cur.err_at(start, format!("unknown named state \"{content}\"")))
    }
}

struct DslParser<'a> {
    load: &'a dyn Fn(&str) -> Result<String, String>,
    registry: NamedStateRegistry,
    wire_count: Option<usize>,
    initial: Vec<[Amplitude; 2]>,
    initial_lines: Vec<usize>,
    defs: Vec<SubroutineDef>,
    def_lines: Vec<usize>,
    def_body_lines: Vec<Vec<usize>>,
    program: Vec<Instruction>,
    program_lines: Vec<usize>,
    matrices: BTreeMap<String, Matrix>,
    current_def: Option<usize>,
}

impl<'a> DslParser<'a> {
    fn new(load: &'a dyn Fn(&str) -> Result<String, String>) -> Self {
        DslParser {
            load,
            registry: NamedStateRegistry::default(),
            wire_count: None,
            initial: Vec::new(),
            initial_lines: Vec::new(),
            defs: Vec::new(),
            def_lines: Vec::new(),
            def_body_lines: Vec::new(),
            program: Vec::new(),
            program_lines: Vec::new(),
            matrices: BTreeMap::new(),
            current_def: None,
        }
    }

    fn parse(mut self, text: &str) -> Result<Circuit, CircuitError> {
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let content = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            if content.trim().is_empty() {
                continue;
            }
            let indented = content.starts_with(' ') || content.starts_with('\t');
            let mut cur = Cursor::new(content, line_no);
            if indented {
                if self.current_def.is_none() {
                    return Err(cur.err_at(0, "indented line outside a subroutine body"));
                }
                let third = content.chars().nth(2);
                if !content.starts_with("  ") || third.is_none_or(|c| c.is_whitespace()) {
                    return Err(cur.err_at(
                        0,
                        "subroutine body lines must be indented by exactly two spaces",
                    ));
                }
                cur.pos = 2;
                self.parse_body_line(&mut cur)?;
            } else {
                self.current_def = None;
                self.parse_top_line(&mut cur)?;
            }
        }
        let wire_count = self.wire_count.ok_or(CircuitError::Parse {
            line: 1,
            col: 1,
            msg: "expected 'qubits <n>' as the first statement".into(),
        })?;
        let c = Circuit {
            wire_count,
            initial: self.initial,
            defs: self.defs,
            program: self.program,
        };
        let map = SourceMap {
            initial: self.initial_lines,
            defs: self.def_lines,
            def_bodies: self.def_body_lines,
            program: self.program_lines,
        };
        c.validate_with(Some(&map))?;
        Ok(c)
    }

    fn parse_top_line(&mut self, cur: &mut Cursor) -> Result<(), CircuitError> {
        cur.skip_ws();
        let kw_pos = cur.pos;
        let kw = cur.ident()?;
        if self.wire_count.is_none() && kw != "qubits" {
            return Err(cur.err_at(kw_pos, "expected 'qubits <n>' as the first statement"));
        }
        match kw.as_str() {
            "qubits" => self.stmt_qubits(cur),
            "state" => self.stmt_state(cur),
            "gate" => {
                let instr = self.parse_gate(cur, None)?;
                self.finish(cur)?;
                self.program.push(instr);
                self.program_lines.push(cur.line);
                Ok(())
            }
            "call" => {
                let instr = self.parse_call(cur, None)?;
                self.finish(cur)?;
                self.program.push(instr);
                self.program_lines.push(cur.line);
                Ok(())
            }
            "def" => self.stmt_def(cur),
            "matrix" => self.stmt_matrix(cur),
            _ => Err(cur.err_at(kw_pos, format!("unknown statement \"{kw}\""))),
        }
    }

    fn parse_body_line(&mut self, cur: &mut Cursor) -> Result<(), CircuitError> {
        let d = self.current_def.expect("checked by caller");
        cur.skip_ws();
        let kw_pos = cur.pos;
        let kw = cur.ident()?;
        let formals = self.defs[d].formal_wires.clone();
        let instr = match kw.as_str() {
            "gate" => self.parse_gate(cur, Some(&formals))?,
            "call" => self.parse_call(cur, Some(&formals))?,
            _ => {
                return Err(cur.err_at(
                    kw_pos,
                    "only gate and call are allowed in a subroutine body",
                ))
            }
        };
        self.finish(cur)?;
        self.defs[d].body.push(instr);
        self.def_body_lines[d].push(cur.line);
        Ok(())
    }

    fn finish(&self, cur: &mut Cursor) -> Result<(), CircuitError> {
        cur.skip_ws();
        if cur.pos < cur.chars.len() {
            return Err(cur.err("unexpected trailing input"));
        }
        Ok(())
    }

    fn stmt_qubits(&mut self, cur: &mut Cursor) -> Result<(), CircuitError> {
        if self.wire_count.is_some() {
            return Err(cur.err("duplicate qubits line"));
        }
        cur.skip_ws();
        let n = cur.integer()?;
        self.finish(cur)?;
        if n == 0 {
            return Err(CircuitError::validation(
                Some(cur.line),
                "circuit must have at least one qubit",
            ));
        }
        let zero = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        self.wire_count = Some(n);
        self.initial = vec![zero; n];
        self.initial_lines = vec![0; n];
        Ok(())
    }

    fn stmt_state(&mut self, cur: &mut Cursor) -> Result<(), CircuitError> {
        let w = self.wire_index(cur)?;
        let n = self.wire_count.expect("qubits line precedes");
        if w >= n {
            return Err(CircuitError::validation(
                Some(cur.line),
                format!("wire q{w} out of range in state (limit {n})"),
            ));
        }
        if self.initial_lines[w] != 0 {
            return Err(CircuitError::validation(
                Some(cur.line),
                format!("state for q{w} given twice"),
            ));
        }
        cur.skip_ws();
        cur.expect('=')?;
        let v = parse_expr(cur, &self.registry)?;
        self.finish(cur)?;
        if v.len() != 2 {
            return Err(CircuitError::validation(
                Some(cur.line),
                format!("state for q{w} must be a single-qubit expression"),
            ));
        }
        self.initial[w] = [v[0], v[1]];
        self.initial_lines[w] = cur.line;
        Ok(())
    }

    fn stmt_def(&mut self, cur: &mut Cursor) -> Result<(), CircuitError> {
        cur.skip_ws();
        let name = cur.ident()?;
        let mut params = Vec::new();
        loop {
            cur.skip_ws();
            match cur.peek() {
                Some(':') => {
                    cur.pos += 1;
                    self.finish(cur)?;
                    break;
                }
                Some(_) => params.push(cur.ident()?),
                None => return Err(cur.err("def line must end with ':'")),
            }
        }
        self.defs.push(SubroutineDef {
            name,
            formal_wires: params,
            body: Vec::new(),
        });
        self.def_lines.push(cur.line);
        self.def_body_lines.push(Vec::new());
        self.current_def = Some(self.defs.len() - 1);
        Ok(())
    }

    fn stmt_matrix(&mut self, cur: &mut Cursor) -> Result<(), CircuitError> {
        cur.skip_ws();
        let name_pos = cur.pos;
        let name = cur.ident()?;
        if BUILTIN_GATE_NAMES.contains(&name.as_str()) {
            return Err(cur.err_at(name_pos, format!("\"{name}\" is a built-in gate name")));
        }
        if self.matrices.contains_key(&name) {
            return Err(cur.err_at(name_pos, format!("matrix \"{name}\" is declared twice")));
        }
        cur.skip_ws();
        let path: String = cur.chars[cur.pos..]
            .iter()
            .collect::<String>()
            .trim_end()
            .to_string();
        cur.pos = cur.chars.len();
        if path.is_empty() {
            return Err(cur.err("expected a matrix file path"));
        }
        let text = (self.load)(&path).map_err(|e| {
            CircuitError::validation(
                Some(cur.line),
                format!("cannot load matrix file \"{path}\": {e}"),
            )
        })?;
        let rows: Vec<Vec<[f64; 2]>> = serde_json::from_str(&text).map_err(|e| {
            CircuitError::validation(
                Some(cur.line),
                format!("invalid matrix JSON in \"{path}\": {e}"),
            )
        })?;
        let m: Matrix = rows
            .into_iter()
            .map(|r| r.into_iter().map(|p| Complex64::new(p[0], p[1])).collect())
            .collect();
        let dim = m.len();
        if dim < 2 || !dim.is_power_of_two() || m.iter().any(|r: &Vec<Amplitude>| r.len() != dim) {
            return Err(CircuitError::validation(
                Some(cur.line),
                format!("matrix for \"{name}\" must be square with power-of-two size"),
            ));
        }
        if !is_unitary(&m, tol::EPS_UNITARY) {
            return Err(CircuitError::validation(
                Some(cur.line),
                format!("matrix for gate \"{name}\" is not unitary"),
            ));
        }
        self.matrices.insert(name, m);
        Ok(())
    }

    fn wire_index(&self, cur: &mut Cursor) -> Result<usize, CircuitError> {
        cur.skip_ws();
        let p = cur.pos;
        if cur.peek() != Some('q') {
            return Err(cur.err_at(p, "expected a wire like q0"));
        }
        cur.pos += 1;
        cur.integer()
    }

    fn parse_gate(
        &self,
        cur: &mut Cursor,
        formals: Option<&[String]>,
    ) -> Result<Instruction, CircuitError> {
        cur.skip_ws();
        let name_pos = cur.pos;
        let name = cur.ident()?;
        cur.skip_ws();
        let theta = if cur.peek() == Some('(') {
            cur.pos += 1;
            cur.skip_ws();
            let t = cur.number()?;
            cur.skip_ws();
            cur.expect(')')?;
            Some(t)
        } else {
            None
        };
        let kind = self.resolve_kind(&name, theta, cur, name_pos)?;
        let wires = self.parse_wire_list(cur, formals)?;
        Ok(Instruction::Gate(GateApplication::new(kind, wires)))
    }

    fn parse_call(
        &self,
        cur: &mut Cursor,
        formals: Option<&[String]>,
    ) -> Result<Instruction, CircuitError> {
        cur.skip_ws();
        let name = cur.ident()?;
        let wires = self.parse_wire_list(cur, formals)?;
        Ok(Instruction::Call { name, wires })
    }

    fn resolve_kind(
        &self,
        name: &str,
        theta: Option<f64>,
        cur: &Cursor,
        pos: usize,
    ) -> Result<GateKind, CircuitError> {
        let fixed = |k: GateKind| match theta {
            None => Ok(k),
            Some(_) => Err(cur.err_at(pos, format!("gate {name} takes no angle"))),
        };
        let rotation = |k: fn(f64) -> GateKind| match theta {
            Some(t) => Ok(k(t)),
            None => Err(cur.err_at(
                pos,
                format!("gate {name} requires an angle, e.g. {name}(1.5708)"),
            )),
        };
        match name {
            "I" => fixed(GateKind::I),
            "X" => fixed(GateKind::X),
            "Y" => fixed(GateKind::Y),
            "Z" => fixed(GateKind::Z),
            "H" => fixed(GateKind::H),
            "S" => fixed(GateKind::S),
            "T" => fixed(GateKind::T),
            "CNOT" => fixed(GateKind::Cnot),
            "CZ" => fixed(GateKind::Cz),
            "SWAP" => fixed(GateKind::Swap),
            "CCX" => fixed(GateKind::Ccx),
            "RX" => rotation(GateKind::Rx),
            "RY" => rotation(GateKind::Ry),
            "RZ" => rotation(GateKind::Rz),
            "CRY" => rotation(GateKind::Cry),
            _ => match self.matrices.get(name) {
                Some(m) if theta.is_none() => Ok(GateKind::Custom {
                    matrix: m.clone(),
                    name: name.to_string(),
                }),
                Some(_) => Err(cur.err_at(pos, format!("gate {name} takes no angle"))),
                None => Err(cur.err_at(pos, format!("unknown gate {name}"))),
            },
        }
    }

    fn parse_wire_list(
        &self,
        cur: &mut Cursor,
        formals: Option<&[String]>,
    ) -> Result<Vec<usize>, CircuitError> {
        let mut wires = Vec::new();
        loop {
            cur.skip_ws();
            if cur.pos >= cur.chars.len() {
                break;
            }
            match formals {
                None => wires.push(self.wire_index(cur)?),
                Some(f) => {
                    let p = cur.pos;
                    let id = cur.ident()?;
                    let w = f
                        .iter()
                        .position(|x| x == &id)
                        .ok_or_else(|| cur.err_at(p, format!("unknown parameter \"{id}\"")))?;
                    wires.push(w);
                }
            }
        }
        if wires.is_empty() {
            return Err(cur.err("expected at least one wire"));
        }
        Ok(wires)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_files(_: &str) -> Result<String, String> {
        Err("no file access in tests".into())
    }

    fn parse(text: &str) -> Result<Circuit, CircuitError> {
        parse_circuit_with_loader(text, &no_files)
    }

    fn c(re: f64, im: f64) -> Amplitude {
        Complex64::new(re, im)
    }

    const FIG_ONE: &str = "qubits 2\nstate q0 = 0.6|0> + 0.8|1>\nstate q1 = |0>\ngate CNOT q0 q1\n";

    #[test]
    fn parses_two_wire_cnot_circuit() {
        let circuit = parse(FIG_ONE).unwrap();
        assert_eq!(circuit.wire_count, 2);
        assert_eq!(circuit.program.len(), 1);
        assert!((circuit.initial[0][0] - c(0.6, 0.0)).norm() < 1e-12);
        assert!((circuit.initial[0][1] - c(0.8, 0.0)).norm() < 1e-12);
        assert!((circuit.initial[1][0] - c(1.0, 0.0)).norm() < 1e-12);
        match &circuit.program[0] {
            Instruction::Gate(g) => {
                assert_eq!(g.kind, GateKind::Cnot);
                assert_eq!(g.wires, vec![0, 1]);
            }
            other => panic!("expected a gate, got {other:?}"),
        }
    }

    #[test]
    fn omitted_state_line_defaults_to_zero() {
        let circuit = parse("qubits 2\ngate H q1\n").unwrap();
        assert!((circuit.initial[0][0] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(circuit.initial[0][1].norm() < 1e-12);
    }

    #[test]
    fn parses_subroutine_def_and_call() {
        let text = "qubits 3\nstate q0 = 0.6|0> + 0.8|1>\ndef SRC a b c:\n  gate H a\n  gate CNOT a b\n  gate CNOT a c\ncall SRC q0 q1 q2\n";
        let circuit = parse(text).unwrap();
        assert_eq!(circuit.defs.len(), 1);
        let def = &circuit.defs[0];
        assert_eq!(def.name, "SRC");
        assert_eq!(def.formal_wires, vec!["a", "b", "c"]);
        assert_eq!(def.body.len(), 3);
        match &def.body[1] {
            Instruction::Gate(g) => assert_eq!(g.wires, vec![0, 1]),
            other => panic!("expected a gate, got {other:?}"),
        }
        assert_eq!(
            circuit.program,
            vec![Instruction::Call {
                name: "SRC".into(),
                wires: vec![0, 1, 2]
            }]
        );
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text =
            "# full line comment\nqubits 1\n\nstate q0 = |1>  # trailing comment\n   \ngate X q0\n";
        let circuit = parse(text).unwrap();
        assert!((circuit.initial[0][1] - c(1.0, 0.0)).norm() < 1e-12);
        assert_eq!(circuit.program.len(), 1);
    }

    #[test]
    fn state_accepts_complex_amplitudes() {
        let circuit = parse("qubits 1\nstate q0 = (0.6+0.0i)|0> + (0.0+0.8i)|1>\n").unwrap();
        assert!((circuit.initial[0][0] - c(0.6, 0.0)).norm() < 1e-12);
        assert!((circuit.initial[0][1] - c(0.0, 0.8)).norm() < 1e-12);
    }

    #[test]
    fn state_accepts_minus_joiner() {
        let circuit = parse("qubits 1\nstate q0 = 0.6|0> - 0.8|1>\n").unwrap();
        assert!((circuit.initial[0][1] - c(-0.8, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rotation_gates_take_angles() {
        let circuit = parse("qubits 2\ngate CRY(1.0471975511965976) q0 q1\n").unwrap();
        match &circuit.program[0] {
            Instruction::Gate(g) => assert_eq!(g.kind, GateKind::Cry(1.0471975511965976)),
            other => panic!("expected a gate, got {other:?}"),
        }
    }

    fn expect_line(err: CircuitError, want: usize) {
        match err {
            CircuitError::Parse { line, .. } => assert_eq!(line, want),
            CircuitError::Validation { line, .. } => assert_eq!(line, Some(want)),
        }
    }

    #[test]
    fn missing_qubits_line_is_rejected() {
        let err = parse("state q0 = |0>\n").unwrap_err();
        assert!(err.to_string().contains("qubits"), "{err}");
        expect_line(err, 1);
    }

    #[test]
    fn empty_input_is_rejected() {
        let err = parse("# nothing here\n").unwrap_err();
        expect_line(err, 1);
    }

    #[test]
    fn unknown_gate_is_rejected_with_line() {
        let err = parse("qubits 1\ngate FOO q0\n").unwrap_err();
        assert!(err.to_string().contains("unknown gate FOO"), "{err}");
        expect_line(err, 2);
    }

    #[test]
    fn bad_amplitude_syntax_is_rejected_with_line() {
        let err = parse("qubits 1\nstate q0 = 0..6|0>\n").unwrap_err();
        assert!(err.to_string().contains("invalid number"), "{err}");
        expect_line(err, 2);
    }

    #[test]
    fn duplicate_wire_is_rejected_with_line() {
        let err = parse("qubits 1\ngate CNOT q0 q0\n").unwrap_err();
        assert!(err.to_string().contains("duplicate wire q0"), "{err}");
        expect_line(err, 2);
    }

    #[test]
    fn out_of_range_wire_is_rejected_with_line() {
        let err = parse("qubits 2\ngate H q2\n").unwrap_err();
        assert!(err.to_string().contains("out of range"), "{err}");
        expect_line(err, 2);
    }

    #[test]
    fn arity_mismatch_is_rejected_with_line() {
        let err = parse("qubits 3\ngate CNOT q0 q1 q2\n").unwrap_err();
        assert!(err.to_string().contains("expects 2 wires"), "{err}");
        expect_line(err, 2);
    }

    #[test]
    fn non_normalized_state_is_rejected_with_line() {
        let err = parse("qubits 1\nstate q0 = 0.9|0> + 0.9|1>\n").unwrap_err();
        assert!(err.to_string().contains("not normalized"), "{err}");
        expect_line(err, 2);
    }

    #[test]
    fn recursive_def_is_rejected_with_line() {
        let text = "qubits 2\ndef A x y:\n  call A x y\ncall A q0 q1\n";
        let err = parse(text).unwrap_err();
        assert!(err.to_string().contains("recursive"), "{err}");
        expect_line(err, 2);
    }

    #[test]
    fn rotation_without_angle_is_rejected() {
        let err = parse("qubits 1\ngate RY q0\n").unwrap_err();
        assert!(err.to_string().contains("requires an angle"), "{err}");
    }

    #[test]
    fn angle_on_fixed_gate_is_rejected() {
        let err = parse("qubits 1\ngate H(0.5) q0\n").unwrap_err();
        assert!(err.to_string().contains("takes no angle"), "{err}");
    }

    #[test]
    fn unknown_parameter_in_body_is_rejected() {
        let err = parse("qubits 2\ndef D a:\n  gate CNOT a b\ncall D q0\n").unwrap_err();
        assert!(err.to_string().contains("unknown parameter \"b\""), "{err}");
        expect_line(err, 3);
    }

    #[test]
    fn indented_line_outside_body_is_rejected() {
        let err = parse("qubits 1\n  gate X q0\n").unwrap_err();
        assert!(
            err.to_string().contains("outside a subroutine body"),
            "{err}"
        );
    }

    #[test]
    fn duplicate_state_line_is_rejected() {
        let err = parse("qubits 1\nstate q0 = |0>\nstate q0 = |1>\n").unwrap_err();
        assert!(err.to_string().contains("given twice"), "{err}");
        expect_line(err, 3);
    }

    #[test]
    fn matrix_statement_declares_custom_gate() {
        let loader = |path: &str| {
            assert_eq!(path, "g.json");
            Ok("[[[0.0,0.0],[1.0,0.0]],[[1.0,0.0],[0.0,0.0]]]".to_string())
        };
        let circuit =
            parse_circuit_with_loader("qubits 1\nmatrix FLIP g.json\ngate FLIP q0\n", &loader)
                .unwrap();
        match &circuit.program[0] {
            Instruction::Gate(g) => {
                assert_eq!(g.kind.name(), "FLIP");
                assert_eq!(g.kind.arity(), 1);
            }
            other => panic!("expected a gate, got {other:?}"),
        }
    }

    #[test]
    fn non_unitary_matrix_file_is_rejected() {
        let loader = |_: &str| Ok("[[[1.0,0.0],[1.0,0.0]],[[0.0,0.0],[1.0,0.0]]]".to_string());
        let err = parse_circuit_with_loader("qubits 1\nmatrix BAD g.json\ngate BAD q0\n", &loader)
            .unwrap_err();
        assert!(err.to_string().contains("not unitary"), "{err}");
        expect_line(err, 2);
    }

    #[test]
    fn missing_matrix_file_is_rejected() {
        let err = parse("qubits 1\nmatrix M nope.json\n").unwrap_err();
        assert!(err.to_string().contains("cannot load matrix file"), "{err}");
    }

    #[test]
    fn expression_evaluates_basis_sums() {
        let reg = NamedStateRegistry::default();
        let v = parse_state_expression("0.6|00> + 0.8|11>", &reg).unwrap();
        assert_eq!(v.len(), 4);
        assert!((v[0] - c(0.6, 0.0)).norm() < 1e-12);
        assert!((v[3] - c(0.8, 0.0)).norm() < 1e-12);
        assert!(v[1].norm() < 1e-12 && v[2].norm() < 1e-12);
    }

    #[test]
    fn expression_resolves_named_kets() {
        let reg = NamedStateRegistry::default();
        let v = parse_state_expression("|psi+>", &reg).unwrap();
        assert_eq!(v.len(), 8);
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0] - c(s2, 0.0)).norm() < 1e-12);
        assert!((v[7] - c(s2, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn expression_handles_groups_and_products() {
        let reg = NamedStateRegistry::default();
        let v = parse_state_expression("(0.6|0> + 0.8|1>)|1>", &reg).unwrap();
        assert_eq!(v.len(), 4);
        assert!((v[1] - c(0.6, 0.0)).norm() < 1e-12);
        assert!((v[3] - c(0.8, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn expression_handles_leading_minus() {
        let reg = NamedStateRegistry::default();
        let v = parse_state_expression("-0.5|0> + 0.5|1>", &reg).unwrap();
        assert!((v[0] - c(-0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn expression_rejects_unknown_named_state() {
        let reg = NamedStateRegistry::default();
        let err = parse_state_expression("|nope>", &reg).unwrap_err();
        assert!(err.to_string().contains("unknown named state"), "{err}");
    }

    #[test]
    fn expression_rejects_width_mismatch() {
        let reg = NamedStateRegistry::default();
        let err = parse_state_expression("|00> + |1>", &reg).unwrap_err();
        assert!(
            err.to_string().contains("different numbers of wires"),
            "{err}"
        );
    }

    #[test]
    fn json_input_is_parsed_and_validated() {
        let json = r#"{
            "defs": [],
            "initial": [[[1.0, 0.0], [0.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]]],
            "program": [{"Gate": {"kind": "CNOT", "wires": [0, 1]}}],
            "wire_count": 2
        }"#;
        let circuit = parse(json).unwrap();
        assert_eq!(circuit.wire_count, 2);
        assert_eq!(circuit.program.len(), 1);
    }

    #[test]
    fn invalid_json_circuit_fails_validation() {
        let json = r#"{
            "defs": [],
            "initial": [[[1.0, 0.0], [0.0, 0.0]]],
            "program": [{"Gate": {"kind": "CNOT", "wires": [0, 0]}}],
            "wire_count": 1
        }"#;
        let err = parse(json).unwrap_err();
        assert!(err.to_string().contains("duplicate wire"), "{err}");
    }
}
