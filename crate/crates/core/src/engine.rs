//! Branch-by-branch circuit execution.
//!
//! The engine runs a circuit on a sum of product-state branches without ever
//! materializing the dense state vector. Gates act on one branch at a time:
//!
//! * single-qubit gates update the factor containing the target in place;
//! * controlled gates whose controls all sit in single-wire factors are
//!   replaced by their effective actions, one child branch per surviving
//!   control assignment;
//! * everything else (SWAP, multi-wire custom gates, controls caught inside
//!   an entangled block) goes through a dense product of the touched factors,
//!   which is refactorized afterwards.
//!
//! After every gate the branch list is merged (equal factor lists combine,
//! coefficients add) and pruned. Branch coefficients are never renormalized;
//! summing the branches always reproduces the exact state vector.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::circuit::{inline_subroutines, Circuit, GateApplication, Instruction};
use crate::error::EngineError;
use crate::gates::{gate_unitary, Matrix};
use crate::state::{
    branch_sort_key, canonicalize_factor, factors_equal_within, Amplitude, Branch, Factor, SortKey,
    Superposition,
};
use crate::tol;

/// How a branch reacts to a gate it cannot absorb into a single product term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    /// Split into one branch per term; factors stay single-wire.
    Split,
    /// Keep each branch whole; inseparable remainders become block factors.
    Block,
}

impl PolicyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyMode::Split => "split",
            PolicyMode::Block => "block",
        }
    }
}

impl fmt::Display for PolicyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "split" => Ok(PolicyMode::Split),
            "block" => Ok(PolicyMode::Block),
            other => Err(format!(
                "unknown policy \"{other}\" (expected split or block)"
            )),
        }
    }
}

/// Execution policy: the splitting mode plus the branch budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Policy {
    pub mode: PolicyMode,
    /// Hard cap on live branches; exceeding it aborts the run.
    pub max_branches: usize,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            mode: PolicyMode::Split,
            max_branches: 4096,
        }
    }
}

impl Policy {
    pub fn new(mode: PolicyMode) -> Self {
        Policy {
            mode,
            ..Policy::default()
        }
    }

    pub fn with_max_branches(mut self, max_branches: usize) -> Self {
        self.max_branches = max_branches;
        self
    }
}

/// One recorded action of a gate (or merge) on a branch.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    /// 1-based gate position; merges carry the stage of the gate that
    /// triggered them.
    pub stage: usize,
    /// Branch the event applies to (the child, for splits).
    pub branch_id: usize,
    /// Parent branch when this event created a new branch.
    pub parent_id: Option<usize>,
    /// Wires of the gate as written; empty for merges.
    pub wires: Vec<usize>,
    /// What actually happened on this branch: "I", "X", "RY(1.047)",
    /// a gate name for dense applications, or "merge(<id>)".
    pub effective_label: String,
    /// For effective actions: the definite values taken by the control
    /// wires, one character per control in listed order.
    pub collapsed_controls: Option<String>,
}

/// Per-branch history kept alongside the final state.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchTrace {
    pub id: usize,
    pub parent: Option<usize>,
    pub lineage: Vec<TraceEvent>,
    /// Factor snapshot after every stage; index 0 is the initial state.
    pub stage_states: Vec<Vec<Factor>>,
}

/// Everything a run produces: the final decomposition plus the full trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub wire_count: usize,
    /// The executed gate list with subroutine calls inlined.
    pub program: Vec<GateApplication>,
    pub final_state: Superposition,
    /// Surviving branches in the same order as `final_state.branches`.
    pub branches: Vec<BranchTrace>,
    pub events: Vec<TraceEvent>,
}

impl RunResult {
    /// Number of state columns in the trace: one per gate plus the initial.
    pub fn stage_count(&self) -> usize {
        self.program.len() + 1
    }
}

struct Action {
    assignment: String,
    label: String,
    weight: Amplitude,
    all_ones: bool,
}

/// Enumerates the effective actions of a controlled gate on one branch.
///
/// Requires every control wire to sit in a single-wire factor; a control
/// inside a larger block fails with [`EngineError::ControlEntangled`]. Each
/// surviving control assignment yields `(assignment bits, label, weight)`
/// where the weight is the product of the control amplitudes and the label is
/// the base gate for the all-ones assignment, identity otherwise. Assignments
/// come out in ascending binary order; negligible weights are dropped.
pub fn effective_actions(
    b: &Branch,
    g: &GateApplication,
) -> Result<Vec<(String, String, Amplitude)>, EngineError> {
    let actions = control_actions(&b.factors, g, tol::EPS_PRUNE)?;
    Ok(actions
        .into_iter()
        .map(|a| (a.assignment, a.label, a.weight))
        .collect())
}

fn control_actions(
    factors: &[Factor],
    g: &GateApplication,
    eps_prune: f64,
) -> Result<Vec<Action>, EngineError> {
    let controls = g.controls();
    debug_assert!(!controls.is_empty(), "gate has no controls");
    let mut ctrl_amps: Vec<[Amplitude; 2]> = Vec::with_capacity(controls.len());
    for &cw in controls {
        let f = factors
            .iter()
            .find(|f| f.wires.contains(&cw))
            .expect("factors partition the wires");
        if !f.is_single_wire() {
            return Err(EngineError::ControlEntangled { wire: cw });
        }
        ctrl_amps.push([f.amplitudes[0], f.amplitudes[1]]);
    }
    let m = controls.len();
    let base_label = g.kind.base().expect("controlled gate has a base").label();
    let mut actions = Vec::new();
    for a in 0..(1usize << m) {
        let mut weight = Complex64::new(1.0, 0.0);
        let mut assignment = String::with_capacity(m);
        for (p, amps) in ctrl_amps.iter().enumerate() {
            let bit = (a >> (m - 1 - p)) & 1;
            assignment.push(if bit == 1 { '1' } else { '0' });
            weight *= amps[bit];
        }
        if weight.norm() <= eps_prune {
            continue;
        }
        let all_ones = a == (1 << m) - 1;
        let label = if all_ones {
            base_label.clone()
        } else {
            "I".to_string()
        };
        actions.push(Action {
            assignment,
            label,
            weight,
            all_ones,
        });
    }
    Ok(actions)
}

/// Applies a 2x2 unitary to `wire` inside whichever factor contains it,
/// canonicalizing afterwards. Returns the extracted scalar.
fn apply_single_qubit(factors: &mut [Factor], wire: usize, u: &Matrix) -> Amplitude {
    let f = factors
        .iter_mut()
        .find(|f| f.wires.contains(&wire))
        .expect("factors partition the wires");
    let p = f.wires.iter().position(|&w| w == wire).unwrap();
    let shift = f.wires.len() - 1 - p;
    let mask = 1usize << shift;
    for i0 in 0..f.amplitudes.len() {
        if i0 & mask != 0 {
            continue;
        }
        let i1 = i0 | mask;
        let a0 = f.amplitudes[i0];
        let a1 = f.amplitudes[i1];
        f.amplitudes[i0] = u[0][0] * a0 + u[0][1] * a1;
        f.amplitudes[i1] = u[1][0] * a0 + u[1][1] * a1;
    }
    let (cf, scalar) = canonicalize_factor(f).expect("unitary preserves the norm");
    *f = cf;
    scalar
}

/// Collapses the controls of `g` to the given assignment and, for the all-ones
/// assignment, applies the base gate to the target. Returns the new factor
/// list and the scalar extracted by canonicalization.
fn apply_action(
    factors: &[Factor],
    g: &GateApplication,
    action: &Action,
) -> (Vec<Factor>, Amplitude) {
    let mut fs = factors.to_vec();
    for (p, &cw) in g.controls().iter().enumerate() {
        let bit = action.assignment.as_bytes()[p] - b'0';
        let idx = fs
            .iter()
            .position(|f| f.is_single_wire() && f.wires[0] == cw)
            .expect("controls verified single-wire");
        fs[idx] = Factor::basis(cw, bit);
    }
    let mut scalar = Complex64::new(1.0, 0.0);
    if action.all_ones {
        let base = g.kind.base().expect("controlled gate has a base");
        let u = gate_unitary(&base);
        scalar = apply_single_qubit(&mut fs, g.targets()[0], &u);
    }
    (fs, scalar)
}

/// Kronecker product of the given factors over the sorted wire union.
fn tensor_factors(factors: &[&Factor], union: &[usize]) -> Vec<Amplitude> {
    let k = union.len();
    let mut v = vec![Complex64::new(1.0, 0.0); 1 << k];
    for f in factors {
        let shifts: Vec<usize> = f
            .wires
            .iter()
            .map(|w| k - 1 - union.iter().position(|x| x == w).unwrap())
            .collect();
        for (idx, slot) in v.iter_mut().enumerate() {
            let mut fi = 0usize;
            for &s in &shifts {
                fi = (fi << 1) | ((idx >> s) & 1);
            }
            *slot *= f.amplitudes[fi];
        }
    }
    v
}

/// Applies `u` on the coordinates of `gwires` (listed order, first wire most
/// significant in the gate's index space) within a vector over `union`.
fn apply_unitary_on(
    v: &[Amplitude],
    union: &[usize],
    gwires: &[usize],
    u: &Matrix,
) -> Vec<Amplitude> {
    let k = union.len();
    let a = gwires.len();
    let shifts: Vec<usize> = gwires
        .iter()
        .map(|w| k - 1 - union.iter().position(|x| x == w).unwrap())
        .collect();
    let gate_mask: usize = shifts.iter().map(|s| 1usize << s).sum();
    let spread = |coord: usize| -> usize {
        let mut m = 0usize;
        for (j, &s) in shifts.iter().enumerate() {
            if (coord >> (a - 1 - j)) & 1 == 1 {
                m |= 1 << s;
            }
        }
        m
    };
    let dim = 1usize << a;
    let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
    let mut tmp = vec![Complex64::new(0.0, 0.0); dim];
    for base in 0..v.len() {
        if base & gate_mask != 0 {
            continue;
        }
        for (col, slot) in tmp.iter_mut().enumerate() {
            *slot = v[base | spread(col)];
        }
        for row in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for col in 0..dim {
                acc += u[row][col] * tmp[col];
            }
            out[base | spread(row)] = acc;
        }
    }
    out
}

/// Splits a unit vector over `wires` into product terms.
///
/// Returns `(scalar, factors)` terms whose weighted sum of Kronecker products
/// reproduces `v`. Under [`PolicyMode::Split`] every factor is single-wire:
/// when the lowest remaining wire is not separable it is expanded in the
/// computational basis, one term per non-negligible half. Under
/// [`PolicyMode::Block`] separable wires are peeled wherever they sit and the
/// inseparable remainder stays a single block factor, so the result is always
/// exactly one term.
pub fn refactorize(
    v: &[Amplitude],
    wires: &[usize],
    mode: PolicyMode,
) -> Vec<(Amplitude, Vec<Factor>)> {
    debug_assert_eq!(v.len(), 1 << wires.len());
    debug_assert!(wires.windows(2).all(|w| w[0] < w[1]));
    let mut out = Vec::new();
    refactorize_rec(
        v.to_vec(),
        wires.to_vec(),
        mode,
        Complex64::new(1.0, 0.0),
        Vec::new(),
        &mut out,
    );
    out
}

fn refactorize_rec(
    mut v: Vec<Amplitude>,
    mut wires: Vec<usize>,
    mode: PolicyMode,
    mut scalar: Amplitude,
    mut acc: Vec<Factor>,
    out: &mut Vec<(Amplitude, Vec<Factor>)>,
) {
    loop {
        if wires.len() == 1 {
            let f = Factor::new(wires.clone(), v.clone());
            let (cf, s) = canonicalize_factor(&f).expect("refactorized vectors stay unit norm");
            acc.push(cf);
            out.push((scalar * s, acc));
            return;
        }
        if let Some((single, rest)) = try_peel(&v, 0) {
            let f = Factor::new(vec![wires[0]], single.to_vec());
            let (cf, s) = canonicalize_factor(&f).expect("peeled factor is unit norm");
            acc.push(cf);
            scalar *= s;
            v = rest;
            wires.remove(0);
            continue;
        }
        match mode {
            PolicyMode::Split => {
                let half = v.len() / 2;
                let rest_wires = wires[1..].to_vec();
                for bit in 0..2u8 {
                    let sub = if bit == 0 { &v[..half] } else { &v[half..] };
                    let nrm = sub.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                    if nrm <= tol::EPS_ZERO {
                        continue;
                    }
                    let normalized: Vec<Amplitude> = sub.iter().map(|a| a / nrm).collect();
                    let mut acc2 = acc.clone();
                    acc2.push(Factor::basis(wires[0], bit));
                    refactorize_rec(
                        normalized,
                        rest_wires.clone(),
                        mode,
                        scalar * nrm,
                        acc2,
                        out,
                    );
                }
                return;
            }
            PolicyMode::Block => {
                let mut peeled = false;
                for p in 1..wires.len() {
                    if let Some((single, rest)) = try_peel(&v, p) {
                        let f = Factor::new(vec![wires[p]], single.to_vec());
                        let (cf, s) = canonicalize_factor(&f).expect("peeled factor is unit norm");
                        acc.push(cf);
                        scalar *= s;
                        v = rest;
                        wires.remove(p);
                        peeled = true;
                        break;
                    }
                }
                if !peeled {
                    let f = Factor::new(wires.clone(), v.clone());
                    let (cf, s) = canonicalize_factor(&f).expect("block remainder stays unit norm");
                    acc.push(cf);
                    out.push((scalar * s, acc));
                    return;
                }
            }
        }
    }
}

/// Tries to factor wire position `p` out of `v` as a single-qubit state.
///
/// Separability is decided from the 2x2 Gram matrix of the two rows of the
/// position-`p` unfolding: the smaller singular value must be below the
/// separability threshold. Returns the peeled amplitudes and the remainder
/// vector (which keeps the norm of `v`).
fn try_peel(v: &[Amplitude], p: usize) -> Option<([Amplitude; 2], Vec<Amplitude>)> {
    let k = v.len().trailing_zeros() as usize;
    let shift = k - 1 - p;
    let mask = 1usize << shift;
    let mut g00 = 0.0f64;
    let mut g11 = 0.0f64;
    let mut g01 = Complex64::new(0.0, 0.0);
    for i0 in 0..v.len() {
        if i0 & mask != 0 {
            continue;
        }
        let a = v[i0];
        let b = v[i0 | mask];
        g00 += a.norm_sqr();
        g11 += b.norm_sqr();
        g01 += a * b.conj();
    }
    let tr = g00 + g11;
    let disc = ((g00 - g11).powi(2) + 4.0 * g01.norm_sqr()).sqrt();
    let hi = (tr + disc) / 2.0;
    let lo = ((tr - disc) / 2.0).max(0.0);
    if lo.sqrt() > tol::EPS_SEP {
        return None;
    }
    let u = if g01.norm() > tol::EPS_ZERO {
        let raw = [g01, Complex64::new(hi - g00, 0.0)];
        let n = (raw[0].norm_sqr() + raw[1].norm_sqr()).sqrt();
        [raw[0] / n, raw[1] / n]
    } else if g00 >= g11 {
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
    } else {
        [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]
    };
    let mut rest = Vec::with_capacity(v.len() / 2);
    for i0 in 0..v.len() {
        if i0 & mask != 0 {
            continue;
        }
        rest.push(u[0].conj() * v[i0] + u[1].conj() * v[i0 | mask]);
    }
    Some((u, rest))
}

struct WorkBranch {
    id: usize,
    parent: Option<usize>,
    coefficient: Amplitude,
    factors: Vec<Factor>,
    lineage: Vec<TraceEvent>,
    stage_states: Vec<Vec<Factor>>,
}

struct Runner<'a> {
    policy: &'a Policy,
    eps_merge: f64,
    eps_prune: f64,
    next_id: usize,
    events: Vec<TraceEvent>,
}

impl Runner<'_> {
    fn stage(
        &mut self,
        work: Vec<WorkBranch>,
        g: &GateApplication,
        stage: usize,
    ) -> Result<Vec<WorkBranch>, EngineError> {
        let mut children: Vec<WorkBranch> = Vec::with_capacity(work.len());
        for wb in work {
            self.apply_to_branch(wb, g, stage, &mut children)?;
        }
        if children.len() > self.policy.max_branches {
            return Err(EngineError::BranchBudgetExceeded {
                needed: children.len(),
                limit: self.policy.max_branches,
            });
        }
        let mut merged = merge_work(
            children,
            self.eps_merge,
            self.eps_prune,
            stage,
            &mut self.events,
        );
        for wb in &mut merged {
            wb.stage_states.push(wb.factors.clone());
        }
        Ok(merged)
    }

    fn apply_to_branch(
        &mut self,
        mut wb: WorkBranch,
        g: &GateApplication,
        stage: usize,
        out: &mut Vec<WorkBranch>,
    ) -> Result<(), EngineError> {
        if g.wires.len() == 1 {
            let u = gate_unitary(&g.kind);
            let scalar = apply_single_qubit(&mut wb.factors, g.wires[0], &u);
            wb.coefficient *= scalar;
            let ev = TraceEvent {
                stage,
                branch_id: wb.id,
                parent_id: None,
                wires: g.wires.clone(),
                effective_label: g.kind.label(),
                collapsed_controls: None,
            };
            self.record(&mut wb, ev);
            out.push(wb);
            return Ok(());
        }
        if g.kind.control_count() > 0 {
            match control_actions(&wb.factors, g, self.eps_prune) {
                Ok(actions) => {
                    // The block policy only takes the shortcut when the
                    // controls are definite; a genuinely superposed control
                    // keeps the branch whole via the dense path.
                    if self.policy.mode == PolicyMode::Split || actions.len() == 1 {
                        self.apply_fast(wb, g, stage, actions, out);
                        return Ok(());
                    }
                }
                Err(EngineError::ControlEntangled { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        self.apply_dense(wb, g, stage, out);
        Ok(())
    }

    fn apply_fast(
        &mut self,
        wb: WorkBranch,
        g: &GateApplication,
        stage: usize,
        actions: Vec<Action>,
        out: &mut Vec<WorkBranch>,
    ) {
        let split = actions.len() > 1;
        for action in actions {
            let (factors, scalar) = apply_action(&wb.factors, g, &action);
            let id = if split {
                let id = self.next_id;
                self.next_id += 1;
                id
            } else {
                wb.id
            };
            let mut child = WorkBranch {
                id,
                parent: if split { Some(wb.id) } else { wb.parent },
                coefficient: wb.coefficient * action.weight * scalar,
                factors,
                lineage: wb.lineage.clone(),
                stage_states: wb.stage_states.clone(),
            };
            self.record(
                &mut child,
                TraceEvent {
                    stage,
                    branch_id: id,
                    parent_id: if split { Some(wb.id) } else { None },
                    wires: g.wires.clone(),
                    effective_label: action.label,
                    collapsed_controls: Some(action.assignment),
                },
            );
            out.push(child);
        }
    }

    fn apply_dense(
        &mut self,
        wb: WorkBranch,
        g: &GateApplication,
        stage: usize,
        out: &mut Vec<WorkBranch>,
    ) {
        let (touched, untouched): (Vec<&Factor>, Vec<&Factor>) = wb
            .factors
            .iter()
            .partition(|f| f.wires.iter().any(|w| g.wires.contains(w)));
        let mut union: Vec<usize> = touched
            .iter()
            .flat_map(|f| f.wires.iter().copied())
            .collect();
        union.sort_unstable();
        let v = tensor_factors(&touched, &union);
        let u = gate_unitary(&g.kind);
        let w = apply_unitary_on(&v, &union, &g.wires, &u);
        let untouched: Vec<Factor> = untouched.into_iter().cloned().collect();
        let terms = refactorize(&w, &union, self.policy.mode);
        let split = terms.len() > 1;
        for (scalar, term_factors) in terms {
            let mut factors = untouched.clone();
            factors.extend(term_factors);
            factors.sort_by_key(|f| f.wires[0]);
            let id = if split {
                let id = self.next_id;
                self.next_id += 1;
                id
            } else {
                wb.id
            };
            let mut child = WorkBranch {
                id,
                parent: if split { Some(wb.id) } else { wb.parent },
                coefficient: wb.coefficient * scalar,
                factors,
                lineage: wb.lineage.clone(),
                stage_states: wb.stage_states.clone(),
            };
            self.record(
                &mut child,
                TraceEvent {
                    stage,
                    branch_id: id,
                    parent_id: if split { Some(wb.id) } else { None },
                    wires: g.wires.clone(),
                    effective_label: g.kind.label(),
                    collapsed_controls: None,
                },
            );
            out.push(child);
        }
    }

    fn record(&mut self, wb: &mut WorkBranch, ev: TraceEvent) {
        wb.lineage.push(ev.clone());
        self.events.push(ev);
    }
}

fn merge_work(
    children: Vec<WorkBranch>,
    eps_merge: f64,
    eps_prune: f64,
    stage: usize,
    events: &mut Vec<TraceEvent>,
) -> Vec<WorkBranch> {
    let mut keyed: Vec<(SortKey, WorkBranch)> = children
        .into_iter()
        .map(|wb| (branch_sort_key(&wb.factors), wb))
        .collect();
    // Id as tiebreak keeps the survivor of every merge group the oldest branch.
    keyed.sort_by(|(ka, a), (kb, b)| ka.cmp(kb).then(a.id.cmp(&b.id)));
    let mut out: Vec<WorkBranch> = Vec::new();
    for (_, wb) in keyed {
        match out.last_mut() {
            Some(last) if factors_equal_within(&last.factors, &wb.factors, eps_merge) => {
                last.coefficient += wb.coefficient;
                let ev = TraceEvent {
                    stage,
                    branch_id: last.id,
                    parent_id: None,
                    wires: Vec::new(),
                    effective_label: format!("merge({})", wb.id),
                    collapsed_controls: None,
                };
                last.lineage.push(ev.clone());
                events.push(ev);
            }
            _ => out.push(wb),
        }
    }
    out.retain(|wb| wb.coefficient.norm() > eps_prune);
    out
}

/// Builds the starting branch list from the per-wire initial states.
///
/// Wires in a genuine superposition are expanded immediately, one branch per
/// basis assignment with the amplitude folded into the coefficient; definite
/// wires keep their (canonicalized) single-wire factor. Branches come out in
/// canonical order with ids assigned in that order.
fn initial_branches(
    c: &Circuit,
    policy: &Policy,
    eps_prune: f64,
) -> Result<Vec<WorkBranch>, EngineError> {
    let n = c.wire_count;
    let superposed: Vec<usize> = (0..n)
        .filter(|&w| c.initial[w][0].norm() > eps_prune && c.initial[w][1].norm() > eps_prune)
        .collect();
    let needed = 1usize
        .checked_shl(superposed.len() as u32)
        .unwrap_or(usize::MAX);
    if needed > policy.max_branches {
        return Err(EngineError::BranchBudgetExceeded {
            needed,
            limit: policy.max_branches,
        });
    }
    let mut raw = Vec::with_capacity(needed);
    for a in 0..needed {
        let mut coeff = Complex64::new(1.0, 0.0);
        let mut factors = Vec::with_capacity(n);
        for w in 0..n {
            if let Some(p) = superposed.iter().position(|&x| x == w) {
                let bit = (a >> (superposed.len() - 1 - p)) & 1;
                coeff *= c.initial[w][bit];
                factors.push(Factor::basis(w, bit as u8));
            } else {
                let f = Factor::new(vec![w], c.initial[w].to_vec());
                let (cf, s) = canonicalize_factor(&f).expect("initial states are unit norm");
                coeff *= s;
                factors.push(cf);
            }
        }
        if coeff.norm() <= eps_prune {
            continue;
        }
        raw.push((branch_sort_key(&factors), coeff, factors));
    }
    raw.sort_by(|(ka, ..), (kb, ..)| ka.cmp(kb));
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(id, (_, coefficient, factors))| WorkBranch {
            id,
            parent: None,
            coefficient,
            stage_states: vec![factors.clone()],
            factors,
            lineage: Vec::new(),
        })
        .collect())
}

/// Applies one gate to a superposition, merging and pruning afterwards.
///
/// Returns the new superposition together with the events recorded for this
/// application (stage is always 1). Branch ids are positions in the input.
pub fn apply_gate(
    s: &Superposition,
    g: &GateApplication,
    policy: &Policy,
) -> Result<(Superposition, Vec<TraceEvent>), EngineError> {
    let mut runner = Runner {
        policy,
        eps_merge: tol::EPS_MERGE,
        eps_prune: tol::EPS_PRUNE,
        next_id: s.branches.len(),
        events: Vec::new(),
    };
    let work: Vec<WorkBranch> = s
        .branches
        .iter()
        .enumerate()
        .map(|(id, b)| WorkBranch {
            id,
            parent: None,
            coefficient: b.coefficient,
            factors: b.factors.clone(),
            lineage: Vec::new(),
            stage_states: vec![b.factors.clone()],
        })
        .collect();
    let done = runner.stage(work, g, 1)?;
    let sup = Superposition::new(
        s.wire_count,
        done.iter()
            .map(|wb| Branch::new(wb.coefficient, wb.factors.clone()))
            .collect(),
    );
    Ok((sup, runner.events))
}

/// Runs a validated circuit under the default tolerances.
pub fn run_circuit(c: &Circuit, policy: &Policy) -> Result<RunResult, EngineError> {
    run_circuit_with(c, policy, tol::EPS_MERGE, tol::EPS_PRUNE)
}

/// Runs a validated circuit with explicit merge and prune thresholds.
pub fn run_circuit_with(
    c: &Circuit,
    policy: &Policy,
    eps_merge: f64,
    eps_prune: f64,
) -> Result<RunResult, EngineError> {
    let flat = inline_subroutines(c);
    let program: Vec<GateApplication> = flat
        .program
        .iter()
        .map(|i| match i {
            Instruction::Gate(g) => g.clone(),
            Instruction::Call { .. } => unreachable!("inline_subroutines removes calls"),
        })
        .collect();
    let mut runner = Runner {
        policy,
        eps_merge,
        eps_prune,
        next_id: 0,
        events: Vec::new(),
    };
    let mut work = initial_branches(&flat, policy, eps_prune)?;
    runner.next_id = work.len();
    for (j, g) in program.iter().enumerate() {
        work = runner.stage(work, g, j + 1)?;
    }
    let final_state = Superposition::new(
        flat.wire_count,
        work.iter()
            .map(|wb| Branch::new(wb.coefficient, wb.factors.clone()))
            .collect(),
    );
    let branches = work
        .into_iter()
        .map(|wb| BranchTrace {
            id: wb.id,
            parent: wb.parent,
            lineage: wb.lineage,
            stage_states: wb.stage_states,
        })
        .collect();
    Ok(RunResult {
        wire_count: flat.wire_count,
        program,
        final_state,
        branches,
        events: runner.events,
    })
}
