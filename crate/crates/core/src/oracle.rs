//! Independent dense statevector simulator and fidelity checks.
//!
//! This module is the reference the branch engine is verified against. It
//! shares only the circuit IR and the gate matrices with the engine: state
//! storage, gate application, and subroutine call evaluation are all separate
//! code, so a bug in the branch machinery cannot hide here.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::circuit::{Circuit, Instruction, SubroutineDef};
use crate::engine::{run_circuit_with, Policy, PolicyMode};
use crate::error::OracleError;
use crate::gates::{gate_unitary, Matrix};
use crate::state::{reconstruct_statevector, Amplitude};
use crate::tol;

/// Largest wire count the dense oracle will materialize (2^20 amplitudes).
pub const MAX_DENSE_WIRES: usize = 20;

/// A full state vector over `wire_count` wires.
///
/// Index convention matches `reconstruct_statevector`: wire 0 is the most
/// significant bit of the basis index.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    pub wire_count: usize,
    pub amplitudes: Vec<Amplitude>,
}

/// Simulates a validated circuit on the full state vector.
///
/// Subroutine calls are evaluated recursively through wire maps rather than
/// by textual inlining, which keeps this path independent of the engine's
/// preprocessing.
pub fn run_dense(c: &Circuit) -> Result<DenseState, OracleError> {
    let n = c.wire_count;
    if n > MAX_DENSE_WIRES {
        return Err(OracleError::TooManyQubits(n));
    }
    let mut state = vec![Complex64::new(1.0, 0.0)];
    for w in 0..n {
        let mut next = Vec::with_capacity(state.len() * 2);
        for s in &state {
            next.push(s * c.initial[w][0]);
            next.push(s * c.initial[w][1]);
        }
        state = next;
    }
    let defs: BTreeMap<&str, &SubroutineDef> =
        c.defs.iter().map(|d| (d.name.as_str(), d)).collect();
    exec(&c.program, None, &defs, &mut state, n);
    Ok(DenseState {
        wire_count: n,
        amplitudes: state,
    })
}

fn exec(
    instrs: &[Instruction],
    wire_map: Option<&[usize]>,
    defs: &BTreeMap<&str, &SubroutineDef>,
    state: &mut [Amplitude],
    n: usize,
) {
    let resolve = |w: usize| match wire_map {
        Some(m) => m[w],
        None => w,
    };
    for instr in instrs {
        match instr {
            Instruction::Gate(g) => {
                let wires: Vec<usize> = g.wires.iter().map(|&w| resolve(w)).collect();
                apply_dense(state, n, &gate_unitary(&g.kind), &wires);
            }
            Instruction::Call { name, wires } => {
                let d = defs.get(name.as_str()).expect("validated call target");
                let actual: Vec<usize> = wires.iter().map(|&w| resolve(w)).collect();
                exec(&d.body, Some(&actual), defs, state, n);
            }
        }
    }
}

/// Applies `u` to the listed wires of the full vector in place. The first
/// listed wire is the most significant bit of the gate's own index space.
fn apply_dense(state: &mut [Amplitude], n: usize, u: &Matrix, wires: &[usize]) {
    let a = wires.len();
    let dim = 1usize << a;
    let shifts: Vec<usize> = wires.iter().map(|&w| n - 1 - w).collect();
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
    let mut tmp = vec![Complex64::new(0.0, 0.0); dim];
    for base in 0..state.len() {
        if base & gate_mask != 0 {
            continue;
        }
        for (col, slot) in tmp.iter_mut().enumerate() {
            *slot = state[base | spread(col)];
        }
        for row in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for col in 0..dim {
                acc += u[row][col] * tmp[col];
            }
            state[base | spread(row)] = acc;
        }
    }
}

/// Squared overlap |<u|v>|^2 of two states over the same wires.
pub fn fidelity(u: &DenseState, v: &DenseState) -> Result<f64, OracleError> {
    if u.wire_count != v.wire_count {
        return Err(OracleError::DimensionMismatch(u.wire_count, v.wire_count));
    }
    Ok(overlap_sq(&u.amplitudes, &v.amplitudes))
}

fn overlap_sq(u: &[Amplitude], v: &[Amplitude]) -> f64 {
    let ip: Complex64 = u.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
    ip.norm_sqr()
}

/// Outcome of checking a branch run against the dense oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub fidelity: f64,
    pub branch_count: usize,
    pub policy: PolicyMode,
    pub pass: bool,
}

impl VerifyReport {
    /// Compact JSON with a fixed key order.
    pub fn to_json(&self) -> String {
        format!(
            "{{\"fidelity\":{:.16e},\"branch_count\":{},\"policy\":\"{}\",\"pass\":{}}}",
            self.fidelity, self.branch_count, self.policy, self.pass
        )
    }
}

/// Runs the circuit both ways and compares, under default tolerances.
pub fn verify(c: &Circuit, policy: &Policy, tol: f64) -> Result<VerifyReport, OracleError> {
    verify_with(c, policy, tol, tol::EPS_MERGE, tol::EPS_PRUNE)
}

/// Runs the circuit both ways and compares, with explicit engine thresholds.
pub fn verify_with(
    c: &Circuit,
    policy: &Policy,
    tol: f64,
    eps_merge: f64,
    eps_prune: f64,
) -> Result<VerifyReport, OracleError> {
    let r = run_circuit_with(c, policy, eps_merge, eps_prune)?;
    let dense = run_dense(c)?;
    let recon = reconstruct_statevector(&r.final_state);
    let f = overlap_sq(&recon, &dense.amplitudes);
    Ok(VerifyReport {
        fidelity: f,
        branch_count: r.final_state.branches.len(),
        policy: policy.mode,
        pass: f >= 1.0 - tol,
    })
}
