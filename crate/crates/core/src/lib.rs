//! Simulation of quantum circuits as explicit sums of product-state branches.
//!
//! A conventional statevector simulator keeps one dense amplitude vector. This
//! crate instead keeps a [`Superposition`]: a list of [`Branch`]es, each a
//! complex coefficient times a tensor product of per-wire (or small block)
//! [`Factor`]s. Controlled gates acting on a superposed control split a branch
//! into children, one per control value, and each child records the gate's
//! *effective action* on it (a CNOT becomes `I` in the control-0 child and `X`
//! in the control-1 child). The resulting branch set, together with its trace,
//! is enough to draw an extended circuit diagram: one subgraph per branch with
//! every wire segment labeled by its ket.
//!
//! Modules:
//! - [`state`] — amplitudes, factors, branches, superpositions, named states
//! - [`circuit`] — the circuit IR, validation, and subroutine inlining
//! - [`parser`] — the `.qc` text format (and canonical JSON) front end
//! - [`serialize`] — canonical JSON encoding of the IR
//! - [`gates`] — built-in gate unitaries
//! - [`engine`] — branch-by-branch gate application and refactorization
//! - [`oracle`] — independent dense simulator used to verify equivalence
//! - [`render`] — compact and extended diagrams, state readouts, trace JSON

pub mod circuit;
pub mod engine;
pub mod error;
pub mod gates;
pub mod oracle;
pub mod parser;
pub mod render;
pub mod serialize;
pub mod state;
pub mod tol;

pub use circuit::{inline_subroutines, Circuit, GateApplication, Instruction, SubroutineDef};
pub use engine::{
    apply_gate, effective_actions, refactorize, run_circuit, run_circuit_with, BranchTrace, Policy,
    PolicyMode, RunResult, TraceEvent,
};
pub use error::{CircuitError, EngineError, OracleError, StateError};
pub use gates::{gate_unitary, GateKind, Matrix};
pub use oracle::{fidelity, run_dense, verify, verify_with, DenseState, VerifyReport};
pub use parser::{parse_circuit, parse_circuit_with_loader, parse_state_expression};
pub use render::{
    export_trace_json, export_trace_json_with, render_compact, render_extended, render_state,
    DiagramOptions, OutputFormat,
};
pub use serialize::serialize_ir;
pub use state::{
    canonicalize_factor, merge_and_prune, reconstruct_statevector, Amplitude, Branch, Factor,
    NamedStateRegistry, Superposition,
};
