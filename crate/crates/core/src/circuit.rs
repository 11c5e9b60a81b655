//! Circuit data model: gates, subroutines, validation, and inlining.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer};

use crate::error::CircuitError;
use crate::gates::{is_unitary, GateKind};
use crate::state::Amplitude;
use crate::tol;

/// One gate applied to an ordered list of distinct wires, controls first.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct GateApplication {
    pub kind: GateKind,
    pub wires: Vec<usize>,
}

impl GateApplication {
    pub fn new(kind: GateKind, wires: Vec<usize>) -> Self {
        GateApplication { kind, wires }
    }

    pub fn controls(&self) -> &[usize] {
        &self.wires[..self.kind.control_count()]
    }

    pub fn targets(&self) -> &[usize] {
        &self.wires[self.kind.control_count()..]
    }
}

/// A program step: a gate, or a call into a named subroutine.
///
/// Inside a subroutine body the wire numbers index the formal parameter list
/// rather than physical wires.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub enum Instruction {
    Gate(GateApplication),
    Call { name: String, wires: Vec<usize> },
}

/// A named, reusable sub-circuit over formal wire parameters.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SubroutineDef {
    pub name: String,
    pub formal_wires: Vec<String>,
    pub body: Vec<Instruction>,
}

fn de_initial<'de, D>(d: D) -> Result<Vec<[Amplitude; 2]>, D::Error>
where
    D: Deserializer<'de>,
{
    let rows: Vec<[[f64; 2]; 2]> = Deserialize::deserialize(d)?;
    Ok(rows
        .into_iter()
        .map(|[a, b]| [Complex64::new(a[0], a[1]), Complex64::new(b[0], b[1])])
        .collect())
}

/// A full circuit: wire count, per-wire initial single-qubit states,
/// subroutine definitions, and the top-level program.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Circuit {
    pub wire_count: usize,
    #[serde(deserialize_with = "de_initial")]
    pub initial: Vec<[Amplitude; 2]>,
    pub defs: Vec<SubroutineDef>,
    pub program: Vec<Instruction>,
}

impl Circuit {
    /// Circuit with every wire starting in |0> and an empty program.
    pub fn new(wire_count: usize) -> Self {
        let zero = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        Circuit {
            wire_count,
            initial: vec![zero; wire_count],
            defs: Vec::new(),
            program: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        self.validate_with(None)
    }
}

/// Source lines for the parts of a parsed circuit, so validation failures on
/// text input can point at the offending line. Absent for JSON input.
#[derive(Debug, Default)]
pub(crate) struct SourceMap {
    pub initial: Vec<usize>,
    pub defs: Vec<usize>,
    pub def_bodies: Vec<Vec<usize>>,
    pub program: Vec<usize>,
}

fn line_at(lines: Option<&[usize]>, i: usize) -> Option<usize> {
    lines.and_then(|ls| ls.get(i).copied()).filter(|&l| l > 0)
}

impl Circuit {
    pub(crate) fn validate_with(&self, map: Option<&SourceMap>) -> Result<(), CircuitError> {
        if self.wire_count == 0 {
            return Err(CircuitError::validation(
                None,
                "circuit must have at least one qubit",
            ));
        }
        if self.initial.len() != self.wire_count {
            return Err(CircuitError::validation(
                None,
                format!(
                    "{} initial states for {} qubits",
                    self.initial.len(),
                    self.wire_count
                ),
            ));
        }
        for (w, st) in self.initial.iter().enumerate() {
            let norm = (st[0].norm_sqr() + st[1].norm_sqr()).sqrt();
            if (norm - 1.0).abs() > tol::EPS_NORM {
                return Err(CircuitError::validation(
                    line_at(map.map(|m| m.initial.as_slice()), w),
                    format!("initial state of q{w} is not normalized (norm = {norm})"),
                ));
            }
        }

        let mut def_index: BTreeMap<&str, &SubroutineDef> = BTreeMap::new();
        for (d, def) in self.defs.iter().enumerate() {
            let line = line_at(map.map(|m| m.defs.as_slice()), d);
            if def.name.is_empty() {
                return Err(CircuitError::validation(line, "subroutine name is empty"));
            }
            if def_index.insert(&def.name, def).is_some() {
                return Err(CircuitError::validation(
                    line,
                    format!("subroutine \"{}\" is defined twice", def.name),
                ));
            }
            if def.formal_wires.is_empty() {
                return Err(CircuitError::validation(
                    line,
                    format!("subroutine \"{}\" has no wire parameters", def.name),
                ));
            }
            let mut seen = def.formal_wires.clone();
            seen.sort();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(CircuitError::validation(
                    line,
                    format!("subroutine \"{}\" repeats a parameter name", def.name),
                ));
            }
        }

        for (d, def) in self.defs.iter().enumerate() {
            let body_lines = map.and_then(|m| m.def_bodies.get(d)).map(|v| v.as_slice());
            for (i, instr) in def.body.iter().enumerate() {
                self.check_instruction(
                    instr,
                    def.formal_wires.len(),
                    &def_index,
                    line_at(body_lines, i),
                )?;
            }
        }
        self.check_acyclic(&def_index, map)?;

        let prog_lines = map.map(|m| m.program.as_slice());
        for (i, instr) in self.program.iter().enumerate() {
            self.check_instruction(instr, self.wire_count, &def_index, line_at(prog_lines, i))?;
        }
        Ok(())
    }

    fn check_instruction(
        &self,
        instr: &Instruction,
        wire_limit: usize,
        defs: &BTreeMap<&str, &SubroutineDef>,
        line: Option<usize>,
    ) -> Result<(), CircuitError> {
        let (label, wires) = match instr {
            Instruction::Gate(g) => {
                if let GateKind::Custom { matrix, name } = &g.kind {
                    if !is_unitary(matrix, tol::EPS_UNITARY) {
                        return Err(CircuitError::validation(
                            line,
                            format!("matrix for gate \"{name}\" is not unitary"),
                        ));
                    }
                }
                let arity = g.kind.arity();
                if g.wires.len() != arity {
                    return Err(CircuitError::validation(
                        line,
                        format!(
                            "gate {} expects {} wire{}, got {}",
                            g.kind.name(),
                            arity,
                            if arity == 1 { "" } else { "s" },
                            g.wires.len()
                        ),
                    ));
                }
                (g.kind.name().to_string(), &g.wires)
            }
            Instruction::Call { name, wires } => {
                let def = defs.get(name.as_str()).ok_or_else(|| {
                    CircuitError::validation(
                        line,
                        format!("call to undefined subroutine \"{name}\""),
                    )
                })?;
                if wires.len() != def.formal_wires.len() {
                    return Err(CircuitError::validation(
                        line,
                        format!(
                            "subroutine \"{name}\" expects {} wires, got {}",
                            def.formal_wires.len(),
                            wires.len()
                        ),
                    ));
                }
                (format!("call {name}"), wires)
            }
        };
        let mut sorted = wires.clone();
        sorted.sort_unstable();
        if let Some(pair) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(CircuitError::validation(
                line,
                format!("duplicate wire q{} in {label}", pair[0]),
            ));
        }
        if let Some(&w) = wires.iter().find(|&&w| w >= wire_limit) {
            return Err(CircuitError::validation(
                line,
                format!("wire {w} out of range in {label} (limit {wire_limit})"),
            ));
        }
        Ok(())
    }

    fn check_acyclic(
        &self,
        defs: &BTreeMap<&str, &SubroutineDef>,
        map: Option<&SourceMap>,
    ) -> Result<(), CircuitError> {
        fn visit<'a>(
            name: &'a str,
            defs: &BTreeMap<&'a str, &'a SubroutineDef>,
            visiting: &mut Vec<&'a str>,
            done: &mut Vec<&'a str>,
        ) -> bool {
            if done.contains(&name) {
                return true;
            }
            if visiting.contains(&name) {
                return false;
            }
            visiting.push(name);
            if let Some(def) = defs.get(name) {
                for instr in &def.body {
                    if let Instruction::Call { name: callee, .. } = instr {
                        if !visit(callee, defs, visiting, done) {
                            return false;
                        }
                    }
                }
            }
            visiting.pop();
            done.push(name);
            true
        }
        let mut done = Vec::new();
        for (d, def) in self.defs.iter().enumerate() {
            if !visit(&def.name, defs, &mut Vec::new(), &mut done) {
                return Err(CircuitError::validation(
                    line_at(map.map(|m| m.defs.as_slice()), d),
                    format!("recursive subroutine chain through \"{}\"", def.name),
                ));
            }
        }
        Ok(())
    }
}

/// Replace every call with its definition body, formal wires substituted by
/// the call's actual wires, nested calls expanded depth-first. The result has
/// no defs and a gate-only program.
pub fn inline_subroutines(c: &Circuit) -> Circuit {
    let defs: BTreeMap<&str, &SubroutineDef> =
        c.defs.iter().map(|d| (d.name.as_str(), d)).collect();

    fn expand(
        instr: &Instruction,
        wire_map: Option<&[usize]>,
        defs: &BTreeMap<&str, &SubroutineDef>,
        out: &mut Vec<Instruction>,
    ) {
        let resolve = |w: usize| wire_map.map_or(w, |m| m[w]);
        match instr {
            Instruction::Gate(g) => out.push(Instruction::Gate(GateApplication {
                kind: g.kind.clone(),
                wires: g.wires.iter().map(|&w| resolve(w)).collect(),
            })),
            Instruction::Call { name, wires } => {
                let actuals: Vec<usize> = wires.iter().map(|&w| resolve(w)).collect();
                let def = defs[name.as_str()];
                for body_instr in &def.body {
                    expand(body_instr, Some(&actuals), defs, out);
                }
            }
        }
    }

    let mut program = Vec::new();
    for instr in &c.program {
        expand(instr, None, &defs, &mut program);
    }
    Circuit {
        wire_count: c.wire_count,
        initial: c.initial.clone(),
        defs: Vec::new(),
        program,
    }
}
