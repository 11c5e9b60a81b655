//! Text output: algebraic state readouts, compact circuit diagrams, the
//! per-branch extended diagrams, and a machine-readable trace.
//!
//! All output is deterministic. Layout rules are frozen for golden tests:
//! gate columns are two characters wider than their longest cell, glyphs are
//! `●` (control), `⊕` (flip target), `✕` (swap), `[NAME]` (boxed gates), and
//! subgraphs are joined by lines containing a single `+`.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::circuit::{Circuit, GateApplication, Instruction};
use crate::engine::{RunResult, TraceEvent};
use crate::gates::GateKind;
use crate::serialize::{write_float, write_string};
use crate::state::{Amplitude, Factor, NamedStateRegistry, Superposition};
use crate::tol;

/// Output selector for commands that can emit either a diagram or JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Json,
}

/// Rendering knobs shared by all text output.
#[derive(Debug, Clone)]
pub struct DiagramOptions {
    pub format: OutputFormat,
    /// Significant digits for amplitudes; valid range 1..=17.
    pub precision: usize,
    /// Substitute registered names (|psi+> etc.) for matching factors.
    pub use_named_kets: bool,
}

impl Default for DiagramOptions {
    fn default() -> Self {
        DiagramOptions {
            format: OutputFormat::Text,
            precision: 6,
            use_named_kets: true,
        }
    }
}

/// Plain decimal with the given number of significant digits, trailing
/// zeros trimmed ("0.6", "1", "-0.141421").
pub(crate) fn fmt_real(x: f64, precision: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.*e}", precision.saturating_sub(1), x);
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("scientific exponent");
    let neg = mant.starts_with('-');
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    let point = exp + 1;
    let mut s = String::new();
    if neg {
        s.push('-');
    }
    if point <= 0 {
        s.push_str("0.");
        for _ in 0..(-point) {
            s.push('0');
        }
        s.push_str(&digits);
    } else if (point as usize) >= digits.len() {
        s.push_str(&digits);
        for _ in 0..(point as usize - digits.len()) {
            s.push('0');
        }
    } else {
        s.push_str(&digits[..point as usize]);
        s.push('.');
        s.push_str(&digits[point as usize..]);
    }
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.');
        s.truncate(trimmed.len());
    }
    s
}

/// Real numbers as-is; anything with an imaginary part as "(re+imi)".
pub(crate) fn fmt_complex(z: Amplitude, precision: usize) -> String {
    let re = fmt_real(z.re, precision);
    let im = fmt_real(z.im, precision);
    if im == "0" {
        return re;
    }
    let (sign, magnitude) = match im.strip_prefix('-') {
        Some(rest) => ('-', rest),
        None => ('+', im.as_str()),
    };
    format!("({re}{sign}{magnitude}i)")
}

/// Accumulates "a|x> + b|y> - c|z>" style sums. Negative real coefficients
/// join with " - ", everything else with " + "; unit coefficients are elided.
#[derive(Default)]
struct TermSum {
    out: String,
}

impl TermSum {
    fn push(&mut self, coeff: Amplitude, body: &str, precision: usize) {
        let cs = fmt_complex(coeff, precision);
        if self.out.is_empty() {
            match cs.as_str() {
                "1" => {}
                "-1" => self.out.push('-'),
                _ => self.out.push_str(&cs),
            }
            self.out.push_str(body);
            return;
        }
        match cs.strip_prefix('-') {
            Some(rest) => {
                self.out.push_str(" - ");
                if rest != "1" {
                    self.out.push_str(rest);
                }
            }
            None => {
                self.out.push_str(" + ");
                if cs != "1" {
                    self.out.push_str(&cs);
                }
            }
        }
        self.out.push_str(body);
    }

    fn finish(self) -> String {
        if self.out.is_empty() {
            "0".to_string()
        } else {
            self.out
        }
    }
}

/// Ket text for one factor: definite bit, registered name, or an explicit
/// parenthesized amplitude sum over the factor's own wires.
fn factor_ket(f: &Factor, registry: &NamedStateRegistry, opts: &DiagramOptions) -> String {
    if let Some(bit) = f.definite_bit() {
        return format!("|{bit}>");
    }
    if opts.use_named_kets {
        if let Some((name, phase)) = registry.match_named_state(f, tol::EPS_NAMED_MATCH) {
            if (phase - Complex64::new(1.0, 0.0)).norm() <= tol::EPS_NAMED_MATCH {
                return format!("|{name}>");
            }
        }
    }
    factor_group(f, opts)
}

fn factor_group(f: &Factor, opts: &DiagramOptions) -> String {
    let k = f.width();
    let mut sum = TermSum::default();
    for (idx, a) in f.amplitudes.iter().enumerate() {
        if a.norm() <= tol::EPS_PRUNE {
            continue;
        }
        let mut bits = String::with_capacity(k);
        for p in (0..k).rev() {
            bits.push(if (idx >> p) & 1 == 1 { '1' } else { '0' });
        }
        sum.push(*a, &format!("|{bits}>"), opts.precision);
    }
    format!("({})", sum.finish())
}

/// Concatenated kets of one branch; runs of definite wires share one ket
/// ("|010>" rather than "|0>|1>|0>").
fn branch_kets(factors: &[Factor], registry: &NamedStateRegistry, opts: &DiagramOptions) -> String {
    let mut out = String::new();
    let mut run = String::new();
    for f in factors {
        if let Some(bit) = f.definite_bit() {
            run.push(char::from(b'0' + bit));
            continue;
        }
        if !run.is_empty() {
            let _ = write!(out, "|{run}>");
            run.clear();
        }
        out.push_str(&factor_ket(f, registry, opts));
    }
    if !run.is_empty() {
        let _ = write!(out, "|{run}>");
    }
    out
}

/// Algebraic readout of a superposition, branches in their given order.
///
/// The output re-parses under the ket expression grammar, so `0.6|00> +
/// 0.8|11>` round-trips back to the same vector (up to display precision).
pub fn render_state(
    s: &Superposition,
    registry: &NamedStateRegistry,
    opts: &DiagramOptions,
) -> String {
    let mut sum = TermSum::default();
    for b in &s.branches {
        sum.push(
            b.coefficient,
            &branch_kets(&b.factors, registry, opts),
            opts.precision,
        );
    }
    sum.finish()
}

fn fill_cell(content: &str, width: usize, fill: char) -> String {
    let len = content.chars().count();
    let pad = width.saturating_sub(len);
    let left = pad / 2;
    let mut s = String::with_capacity(width);
    for _ in 0..left {
        s.push(fill);
    }
    s.push_str(content);
    for _ in 0..(pad - left) {
        s.push(fill);
    }
    s
}

fn pad_with(line: &mut String, width: usize, fill: char) {
    let len = line.chars().count();
    for _ in len..width {
        line.push(fill);
    }
}

fn mark_span(col: &mut [String], wires: &[usize]) {
    let lo = *wires.iter().min().expect("gate wires nonempty");
    let hi = *wires.iter().max().expect("gate wires nonempty");
    // Empty when lo and hi coincide or are adjacent.
    for cell in col.iter_mut().take(hi).skip(lo + 1) {
        if cell.is_empty() {
            *cell = "│".to_string();
        }
    }
}

fn gate_glyphs(col: &mut [String], g: &GateApplication) {
    match &g.kind {
        GateKind::Cnot | GateKind::Ccx => {
            for &c in g.controls() {
                col[c] = "●".to_string();
            }
            col[g.targets()[0]] = "⊕".to_string();
        }
        GateKind::Cz => {
            for &w in &g.wires {
                col[w] = "●".to_string();
            }
        }
        GateKind::Cry(_) => {
            col[g.wires[0]] = "●".to_string();
            col[g.wires[1]] = format!("[{}]", g.kind.base().expect("controlled").label());
        }
        GateKind::Swap => {
            col[g.wires[0]] = "✕".to_string();
            col[g.wires[1]] = "✕".to_string();
        }
        _ if g.wires.len() > 1 => {
            for &w in &g.wires {
                col[w] = format!("[{}]", g.kind.label());
            }
        }
        _ => {
            col[g.wires[0]] = format!("[{}]", g.kind.label());
        }
    }
    mark_span(col, &g.wires);
}

fn compact_column(instr: &Instruction, n: usize) -> Vec<String> {
    let mut col = vec![String::new(); n];
    match instr {
        Instruction::Gate(g) => gate_glyphs(&mut col, g),
        Instruction::Call { name, wires } => {
            for &w in wires {
                col[w] = format!("[{name}]");
            }
            mark_span(&mut col, wires);
        }
    }
    col
}

/// One row per wire, one column per top-level instruction. Subroutine calls
/// render as boxes named after the subroutine; they are not inlined.
pub fn render_compact(c: &Circuit, opts: &DiagramOptions) -> String {
    let registry = NamedStateRegistry::default();
    let n = c.wire_count;
    let labels: Vec<String> = (0..n)
        .map(|w| {
            let f = Factor::new(vec![w], c.initial[w].to_vec());
            format!("q{w}: {} ", factor_ket(&f, &registry, opts))
        })
        .collect();
    let label_w = labels.iter().map(|l| l.chars().count()).max().unwrap_or(0);
    let cols: Vec<Vec<String>> = c.program.iter().map(|i| compact_column(i, n)).collect();
    let widths: Vec<usize> = cols
        .iter()
        .map(|col| col.iter().map(|s| s.chars().count()).max().unwrap_or(0) + 2)
        .collect();
    let mut out = String::new();
    for w in 0..n {
        let mut line = labels[w].clone();
        pad_with(&mut line, label_w, '─');
        for (j, col) in cols.iter().enumerate() {
            line.push_str(&fill_cell(&col[w], widths[j], '─'));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// The extended diagram: one subgraph per surviving branch, with the same
/// geometry as the compact graph but gate cells showing each branch's
/// effective action and every wire segment labeled with its ket.
pub fn render_extended(
    r: &RunResult,
    registry: &NamedStateRegistry,
    opts: &DiagramOptions,
) -> String {
    let n = r.wire_count;
    let m = r.program.len();
    // kets[b][t][w]: ket text on wire w after stage t.
    let kets: Vec<Vec<Vec<String>>> = r
        .branches
        .iter()
        .map(|bt| {
            bt.stage_states
                .iter()
                .map(|fs| {
                    let mut per_wire = vec![String::new(); n];
                    for f in fs {
                        let s = factor_ket(f, registry, opts);
                        for &w in &f.wires {
                            per_wire[w] = s.clone();
                        }
                    }
                    per_wire
                })
                .collect()
        })
        .collect();
    // cells[b][j][w]: gate cell on wire w at stage j+1.
    let cells: Vec<Vec<Vec<String>>> = r
        .branches
        .iter()
        .map(|bt| {
            (1..=m)
                .map(|stage| {
                    let g = &r.program[stage - 1];
                    let mut col = vec![String::new(); n];
                    let ev = bt
                        .lineage
                        .iter()
                        .find(|e| e.stage == stage && !e.effective_label.starts_with("merge("));
                    match ev {
                        Some(e) if e.collapsed_controls.is_some() => {
                            // Effective action: the controls are definite, so
                            // only the target wires carry a label.
                            for &t in g.targets() {
                                col[t] = e.effective_label.clone();
                            }
                        }
                        _ => gate_glyphs(&mut col, g),
                    }
                    col
                })
                .collect()
        })
        .collect();
    let ket_w: Vec<usize> = (0..=m)
        .map(|t| {
            kets.iter()
                .flat_map(|b| &b[t])
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let cell_w: Vec<usize> = (0..m)
        .map(|j| {
            cells
                .iter()
                .flat_map(|b| &b[j])
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
                + 2
        })
        .collect();
    let label_w = (0..n)
        .map(|w| format!("q{w}: ").chars().count())
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    for (bi, _) in r.branches.iter().enumerate() {
        if bi > 0 {
            out.push_str("+\n");
        }
        let coeff = r.final_state.branches[bi].coefficient;
        let _ = writeln!(
            out,
            "subgraph {}: coefficient {}",
            bi + 1,
            fmt_complex(coeff, opts.precision)
        );
        for w in 0..n {
            let mut line = format!("q{w}: ");
            pad_with(&mut line, label_w, ' ');
            line.push_str(&fill_cell(&kets[bi][0][w], ket_w[0], ' '));
            for j in 0..m {
                line.push(' ');
                line.push_str(&fill_cell(&cells[bi][j][w], cell_w[j], '─'));
                line.push(' ');
                line.push_str(&fill_cell(&kets[bi][j + 1][w], ket_w[j + 1], ' '));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
    }
    let _ = writeln!(
        out,
        "output: {}",
        render_state(&r.final_state, registry, opts)
    );
    out
}

/// Trace JSON under the default registry at 6 significant digits.
pub fn export_trace_json(r: &RunResult) -> String {
    export_trace_json_with(r, &NamedStateRegistry::default(), 6)
}

/// Trace JSON with explicit registry and precision. Key order is fixed:
/// stages, branches; per branch id, parent, coefficient, lineage, stage_kets.
pub fn export_trace_json_with(
    r: &RunResult,
    registry: &NamedStateRegistry,
    precision: usize,
) -> String {
    let opts = DiagramOptions {
        precision,
        ..DiagramOptions::default()
    };
    let mut out = String::new();
    let _ = write!(out, "{{\"stages\":{},\"branches\":[", r.stage_count());
    for (i, bt) in r.branches.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let coeff = r.final_state.branches[i].coefficient;
        let _ = write!(out, "{{\"id\":{},\"parent\":", bt.id);
        match bt.parent {
            Some(p) => {
                let _ = write!(out, "{p}");
            }
            None => out.push_str("null"),
        }
        out.push_str(",\"coefficient\":[");
        write_float(&mut out, coeff.re);
        out.push(',');
        write_float(&mut out, coeff.im);
        out.push_str("],\"lineage\":[");
        for (k, e) in bt.lineage.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write_event(&mut out, e);
        }
        out.push_str("],\"stage_kets\":[");
        for (t, fs) in bt.stage_states.iter().enumerate() {
            if t > 0 {
                out.push(',');
            }
            out.push('[');
            for (fi, f) in fs.iter().enumerate() {
                if fi > 0 {
                    out.push(',');
                }
                write_string(&mut out, &factor_ket(f, registry, &opts));
            }
            out.push(']');
        }
        out.push_str("]}");
    }
    out.push_str("]}");
    out
}

fn write_event(out: &mut String, e: &TraceEvent) {
    let _ = write!(
        out,
        "{{\"stage\":{},\"branch_id\":{},\"parent_id\":",
        e.stage, e.branch_id
    );
    match e.parent_id {
        Some(p) => {
            let _ = write!(out, "{p}");
        }
        None => out.push_str("null"),
    }
    out.push_str(",\"wires\":[");
    for (i, w) in e.wires.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{w}");
    }
    out.push_str("],\"effective_label\":");
    write_string(out, &e.effective_label);
    out.push_str(",\"collapsed_controls\":");
    match &e.collapsed_controls {
        Some(s) => write_string(out, s),
        None => out.push_str("null"),
    }
    out.push('}');
}
