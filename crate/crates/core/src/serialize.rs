//! Canonical JSON encoding of the circuit IR.
//!
//! The encoding is byte deterministic: object keys are emitted in a fixed
//! alphabetical order, output is compact (no whitespace), and every float is
//! written with 17 significant digits so a parse of the output reproduces the
//! exact same `f64` values.

use std::fmt::Write as _;

use crate::circuit::{Circuit, GateApplication, Instruction, SubroutineDef};
use crate::gates::{GateKind, Matrix};

/// Encodes a circuit as canonical JSON accepted by `parse_circuit`.
pub fn serialize_ir(c: &Circuit) -> String {
    let mut out = String::new();
    out.push_str("{\"defs\":[");
    for (i, d) in c.defs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_def(&mut out, d);
    }
    out.push_str("],\"initial\":[");
    for (i, st) in c.initial.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push('[');
        write_complex(&mut out, st[0].re, st[0].im);
        out.push(',');
        write_complex(&mut out, st[1].re, st[1].im);
        out.push(']');
    }
    out.push_str("],\"program\":[");
    write_instructions(&mut out, &c.program);
    let _ = write!(out, "],\"wire_count\":{}}}", c.wire_count);
    out
}

fn write_instructions(out: &mut String, instrs: &[Instruction]) {
    for (i, instr) in instrs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        match instr {
            Instruction::Gate(g) => {
                out.push_str("{\"Gate\":");
                write_gate(out, g);
                out.push('}');
            }
            Instruction::Call { name, wires } => {
                out.push_str("{\"Call\":{\"name\":");
                write_string(out, name);
                out.push_str(",\"wires\":");
                write_usizes(out, wires);
                out.push_str("}}");
            }
        }
    }
}

fn write_def(out: &mut String, d: &SubroutineDef) {
    out.push_str("{\"body\":[");
    write_instructions(out, &d.body);
    out.push_str("],\"formal_wires\":[");
    for (i, w) in d.formal_wires.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_string(out, w);
    }
    out.push_str("],\"name\":");
    write_string(out, &d.name);
    out.push('}');
}

fn write_gate(out: &mut String, g: &GateApplication) {
    out.push_str("{\"kind\":");
    write_kind(out, &g.kind);
    out.push_str(",\"wires\":");
    write_usizes(out, &g.wires);
    out.push('}');
}

fn write_kind(out: &mut String, kind: &GateKind) {
    match kind {
        GateKind::Rx(t) => write_angled(out, "RX", *t),
        GateKind::Ry(t) => write_angled(out, "RY", *t),
        GateKind::Rz(t) => write_angled(out, "RZ", *t),
        GateKind::Cry(t) => write_angled(out, "CRY", *t),
        GateKind::Custom { matrix, name } => {
            out.push_str("{\"CUSTOM\":{\"matrix\":");
            write_matrix(out, matrix);
            out.push_str(",\"name\":");
            write_string(out, name);
            out.push_str("}}");
        }
        other => write_string(out, other.name()),
    }
}

fn write_angled(out: &mut String, tag: &str, theta: f64) {
    out.push_str("{\"");
    out.push_str(tag);
    out.push_str("\":");
    write_float(out, theta);
    out.push('}');
}

fn write_matrix(out: &mut String, m: &Matrix) {
    out.push('[');
    for (r, row) in m.iter().enumerate() {
        if r > 0 {
            out.push(',');
        }
        out.push('[');
        for (c, z) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            write_complex(out, z.re, z.im);
        }
        out.push(']');
    }
    out.push(']');
}

fn write_complex(out: &mut String, re: f64, im: f64) {
    out.push('[');
    write_float(out, re);
    out.push(',');
    write_float(out, im);
    out.push(']');
}

pub(crate) fn write_float(out: &mut String, x: f64) {
    // 17 significant digits round-trip any finite f64 exactly.
    let _ = write!(out, "{:.16e}", x);
}

fn write_usizes(out: &mut String, xs: &[usize]) {
    out.push('[');
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{x}");
    }
    out.push(']');
}

pub(crate) fn write_string(out: &mut String, s: &str) {
    // Names are plain identifiers, but escape defensively anyway.
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}
