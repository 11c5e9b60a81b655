//! Acceptance gate: seven checks covering the reference circuits, the
//! randomized equivalence suite, parser round-trips, and CLI determinism.
//! Each test prints one `[PASS]`/`[FAIL]` line naming its criterion.

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qx_core::gates::mat_mul;
use qx_core::{
    apply_gate, fidelity, gate_unitary, parse_circuit, reconstruct_statevector, run_circuit,
    run_dense, serialize_ir, Amplitude as Complex64, Branch, Circuit, DenseState, DiagramOptions,
    GateApplication, GateKind, Instruction, Matrix, NamedStateRegistry, Policy, PolicyMode,
    RunResult,
};

fn corpus_path(name: &str) -> String {
    format!("{}/../../circuits/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn load_corpus(name: &str) -> Circuit {
    let path = corpus_path(name);
    let src = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {path}: {e}"));
    let dir = Path::new(&path).parent().unwrap().to_path_buf();
    let loader = |rel: &str| -> Result<String, String> {
        std::fs::read_to_string(dir.join(rel)).map_err(|e| e.to_string())
    };
    qx_core::parse_circuit_with_loader(&src, &loader)
        .unwrap_or_else(|e| panic!("parse {path}: {e}"))
}

fn run(c: &Circuit, mode: PolicyMode) -> RunResult {
    run_circuit(c, &Policy::new(mode)).expect("run")
}

fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Bit read on each wire, for branches whose factors are all definite.
fn branch_bits(b: &Branch, n: usize) -> String {
    let mut bits = vec![b'?'; n];
    for f in &b.factors {
        if let Some(bit) = f.definite_bit() {
            bits[f.wires[0]] = b'0' + bit;
        }
    }
    String::from_utf8(bits).unwrap()
}

#[test]
fn criterion_1_two_wire_fan_out() {
    let t0 = Instant::now();
    let circuit = load_corpus("fig1.qc");
    let r = run(&circuit, PolicyMode::Split);
    assert_eq!(
        r.final_state.branches.len(),
        2,
        "[FAIL] criterion 1: expected 2 branches, got {}",
        r.final_state.branches.len()
    );
    let v = reconstruct_statevector(&r.final_state);
    let expected = [c64(0.6, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(0.8, 0.0)];
    for (i, (a, b)) in v.iter().zip(&expected).enumerate() {
        assert!(
            (a - b).norm() <= 1e-12,
            "[FAIL] criterion 1: amplitude {i} is {a}, expected {b}"
        );
    }
    let labels: HashSet<&str> = r
        .events
        .iter()
        .filter(|e| !e.effective_label.starts_with("merge("))
        .map(|e| e.effective_label.as_str())
        .collect();
    assert_eq!(
        labels,
        HashSet::from(["I", "X"]),
        "[FAIL] criterion 1: effective labels {labels:?}"
    );
    let dt = t0.elapsed().as_secs_f64();
    assert!(dt < 0.1, "[FAIL] criterion 1: took {dt:.3}s");
    println!(
        "[PASS] criterion 1: fan-out splits into I and X branches reconstructing (0.6, 0, 0, 0.8)"
    );
}

#[test]
fn criterion_2_three_wire_spread() {
    let t0 = Instant::now();
    let circuit = load_corpus("src.qc");
    let registry = NamedStateRegistry::default();
    let opts = DiagramOptions::default();

    let block = run(&circuit, PolicyMode::Block);
    assert_eq!(
        block.final_state.branches.len(),
        2,
        "[FAIL] criterion 2: block policy produced {} branches",
        block.final_state.branches.len()
    );
    let rendered = qx_core::render_state(&block.final_state, &registry, &opts);
    assert_eq!(
        rendered, "0.6|psi+> + 0.8|psi->",
        "[FAIL] criterion 2: block render was {rendered:?}"
    );

    let split = run(&circuit, PolicyMode::Split);
    assert_eq!(
        split.final_state.branches.len(),
        2,
        "[FAIL] criterion 2: split policy produced {} branches",
        split.final_state.branches.len()
    );
    let v = reconstruct_statevector(&split.final_state);
    let sum = (0.6 + 0.8) / 2.0f64.sqrt();
    let diff = (0.6 - 0.8) / 2.0f64.sqrt();
    assert!(
        (v[0] - c64(sum, 0.0)).norm() <= 1e-9,
        "[FAIL] criterion 2: amplitude on |000> is {}, expected {sum}",
        v[0]
    );
    assert!(
        (v[7] - c64(diff, 0.0)).norm() <= 1e-9,
        "[FAIL] criterion 2: amplitude on |111> is {}, expected {diff}",
        v[7]
    );
    for (i, a) in v.iter().enumerate() {
        if i != 0 && i != 7 {
            assert!(
                a.norm() <= 1e-9,
                "[FAIL] criterion 2: stray amplitude at {i}"
            );
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    assert!(dt < 0.1, "[FAIL] criterion 2: took {dt:.3}s");
    println!("[PASS] criterion 2: spread gives 0.6|psi+> + 0.8|psi-> and merged split coefficients (x±y)/√2");
}

fn kron(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x * y);
        }
    }
    out
}

#[test]
fn criterion_3_nine_wire_encoder() {
    let t0 = Instant::now();
    let circuit = load_corpus("shor.qc");
    let s = 1.0 / 2.0f64.sqrt();
    let mut psi_p = vec![c64(0.0, 0.0); 8];
    psi_p[0] = c64(s, 0.0);
    psi_p[7] = c64(s, 0.0);
    let mut psi_m = psi_p.clone();
    psi_m[7] = c64(-s, 0.0);
    let triple_p = kron(&kron(&psi_p, &psi_p), &psi_p);
    let triple_m = kron(&kron(&psi_m, &psi_m), &psi_m);
    let analytic: Vec<Complex64> = triple_p
        .iter()
        .zip(&triple_m)
        .map(|(p, m)| 0.6 * p + 0.8 * m)
        .collect();
    let reference = DenseState {
        wire_count: 9,
        amplitudes: analytic,
    };

    let block = run(&circuit, PolicyMode::Block);
    let split = run(&circuit, PolicyMode::Split);
    for (label, r) in [("block", &block), ("split", &split)] {
        let recon = DenseState {
            wire_count: 9,
            amplitudes: reconstruct_statevector(&r.final_state),
        };
        let f = fidelity(&recon, &reference).unwrap();
        assert!(
            f >= 1.0 - 1e-10,
            "[FAIL] criterion 3: {label} fidelity against the analytic vector is {f}"
        );
    }
    assert_eq!(
        block.final_state.branches.len(),
        2,
        "[FAIL] criterion 3: block branch count {}",
        block.final_state.branches.len()
    );
    assert_eq!(
        split.final_state.branches.len(),
        8,
        "[FAIL] criterion 3: split branch count {}",
        split.final_state.branches.len()
    );
    let big = (0.6 + 0.8) / 8.0f64.sqrt();
    let small = (0.6 - 0.8) / 8.0f64.sqrt();
    let mut n_big = 0;
    let mut n_small = 0;
    for b in &split.final_state.branches {
        let bits = branch_bits(b, 9);
        let ones_trios = (0..3).filter(|t| &bits[3 * t..3 * t + 3] == "111").count();
        let expected = if ones_trios % 2 == 0 { big } else { small };
        assert!(
            (b.coefficient - c64(expected, 0.0)).norm() <= 1e-9,
            "[FAIL] criterion 3: branch |{bits}> has coefficient {}, expected {expected}",
            b.coefficient
        );
        if ones_trios % 2 == 0 {
            n_big += 1;
        } else {
            n_small += 1;
        }
    }
    assert_eq!(
        (n_big, n_small),
        (4, 4),
        "[FAIL] criterion 3: parity classes were {n_big}/{n_small}"
    );
    let dt = t0.elapsed().as_secs_f64();
    assert!(dt < 1.0, "[FAIL] criterion 3: took {dt:.3}s");
    println!("[PASS] criterion 3: encoder matches 0.6|psi+>^3 + 0.8|psi->^3 with 2 block / 8 split branches");
}

#[test]
fn criterion_4_partial_rotation() {
    let t0 = Instant::now();
    let circuit = load_corpus("damping.qc");
    let r = run(&circuit, PolicyMode::Split);
    let branches = &r.final_state.branches;
    assert_eq!(
        branches.len(),
        3,
        "[FAIL] criterion 4: expected 3 branches, got {}",
        branches.len()
    );
    let theta = std::f64::consts::FRAC_PI_3;
    let expected = [
        (0.6, "00"),
        (0.8 * (theta / 2.0).sin(), "01"),
        (0.8 * (theta / 2.0).cos(), "10"),
    ];
    for (b, (coeff, bits)) in branches.iter().zip(&expected) {
        assert!(
            (b.coefficient - c64(*coeff, 0.0)).norm() <= 1e-9,
            "[FAIL] criterion 4: coefficient {} on |{}>, expected {coeff}",
            b.coefficient,
            branch_bits(b, 2)
        );
        assert_eq!(
            branch_bits(b, 2),
            *bits,
            "[FAIL] criterion 4: branch order {:?}",
            branches
                .iter()
                .map(|b| branch_bits(b, 2))
                .collect::<Vec<_>>()
        );
    }
    let dt = t0.elapsed().as_secs_f64();
    assert!(dt < 0.1, "[FAIL] criterion 4: took {dt:.3}s");
    println!("[PASS] criterion 4: damping circuit ends in 0.6|00> + 0.4|01> + 0.69282|10>");
}

/// Gate-split potential cap per random circuit, controls branch blow-up.
const SPLIT_CAP: u64 = 64;

fn scale(m: &Matrix, z: Complex64) -> Matrix {
    m.iter()
        .map(|row| row.iter().map(|a| z * a).collect())
        .collect()
}

fn kron2(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = vec![vec![c64(0.0, 0.0); 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[2 * i + k][2 * j + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn random_u2(rng: &mut ChaCha8Rng) -> Matrix {
    let (a, b, g, phase) = (
        rng.gen_range(-3.2..3.2),
        rng.gen_range(-3.2..3.2),
        rng.gen_range(-3.2..3.2),
        rng.gen_range(-3.2..3.2),
    );
    let m = mat_mul(
        &gate_unitary(&GateKind::Rz(a)),
        &mat_mul(
            &gate_unitary(&GateKind::Ry(b)),
            &gate_unitary(&GateKind::Rz(g)),
        ),
    );
    scale(&m, Complex64::from_polar(1.0, phase))
}

fn random_u4(rng: &mut ChaCha8Rng) -> Matrix {
    let outer = kron2(&random_u2(rng), &random_u2(rng));
    let inner = kron2(&random_u2(rng), &random_u2(rng));
    mat_mul(&outer, &mat_mul(&gate_unitary(&GateKind::Cnot), &inner))
}

fn distinct_wires(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let i = rng.gen_range(0..pool.len());
        out.push(pool.swap_remove(i));
    }
    out
}

/// One random gate; controlled and entangling kinds draw down `budget`.
fn random_gate(
    rng: &mut ChaCha8Rng,
    n: usize,
    budget: &mut u64,
    used: &mut HashSet<&'static str>,
) -> GateApplication {
    loop {
        let pick = rng.gen_range(0u32..17);
        let (tag, kind, arity, cost): (&'static str, GateKind, usize, u64) = match pick {
            0 => ("I", GateKind::I, 1, 1),
            1 => ("X", GateKind::X, 1, 1),
            2 => ("Y", GateKind::Y, 1, 1),
            3 => ("Z", GateKind::Z, 1, 1),
            4 => ("H", GateKind::H, 1, 1),
            5 => ("S", GateKind::S, 1, 1),
            6 => ("T", GateKind::T, 1, 1),
            7 => ("RX", GateKind::Rx(rng.gen_range(-6.3..6.3)), 1, 1),
            8 => ("RY", GateKind::Ry(rng.gen_range(-6.3..6.3)), 1, 1),
            9 => ("RZ", GateKind::Rz(rng.gen_range(-6.3..6.3)), 1, 1),
            10 => ("SWAP", GateKind::Swap, 2, 1),
            11 => ("CNOT", GateKind::Cnot, 2, 2),
            12 => ("CZ", GateKind::Cz, 2, 2),
            13 => ("CRY", GateKind::Cry(rng.gen_range(-6.3..6.3)), 2, 2),
            14 => ("CCX", GateKind::Ccx, 3, 4),
            15 => (
                "CUSTOM",
                GateKind::Custom {
                    matrix: random_u2(rng),
                    name: "U2A".into(),
                },
                1,
                1,
            ),
            _ => (
                "CUSTOM",
                GateKind::Custom {
                    matrix: random_u4(rng),
                    name: "U4A".into(),
                },
                2,
                2,
            ),
        };
        if arity > n || budget.saturating_mul(cost) > SPLIT_CAP {
            continue;
        }
        *budget *= cost;
        used.insert(tag);
        return GateApplication::new(kind, distinct_wires(rng, n, arity));
    }
}

fn random_circuit(rng: &mut ChaCha8Rng, used: &mut HashSet<&'static str>) -> Circuit {
    let n = rng.gen_range(2..=6);
    let mut circuit = Circuit::new(n);
    for &w in distinct_wires(rng, n, 2).iter() {
        let t: f64 = rng.gen_range(0.2..1.37);
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        circuit.initial[w] = [c64(t.cos(), 0.0), Complex64::from_polar(t.sin(), phi)];
    }
    for w in 0..n {
        if rng.gen_bool(0.3) {
            let one = circuit.initial[w][0].norm() < 1e-12;
            if !one && circuit.initial[w][1].norm() < 1e-12 && rng.gen_bool(0.5) {
                circuit.initial[w] = [c64(0.0, 0.0), c64(1.0, 0.0)];
            }
        }
    }
    let gate_count = rng.gen_range(1..=20);
    let mut budget = 1u64;
    circuit.program = (0..gate_count)
        .map(|_| Instruction::Gate(random_gate(rng, n, &mut budget, used)))
        .collect();
    circuit
}

#[test]
fn criterion_5_randomized_equivalence() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);
    let mut used: HashSet<&'static str> = HashSet::new();
    for case in 0..100 {
        let circuit = random_circuit(&mut rng, &mut used);
        circuit
            .validate()
            .unwrap_or_else(|e| panic!("[FAIL] criterion 5: case {case} invalid: {e}"));
        let dense = run_dense(&circuit)
            .unwrap_or_else(|e| panic!("[FAIL] criterion 5: case {case} dense run: {e}"));
        let policy_of = |mode| Policy::new(mode).with_max_branches(8192);
        let mut recons: Vec<Vec<Complex64>> = Vec::new();
        for mode in [PolicyMode::Split, PolicyMode::Block] {
            let policy = policy_of(mode);
            let r = run_circuit(&circuit, &policy)
                .unwrap_or_else(|e| panic!("[FAIL] criterion 5: case {case} {mode:?}: {e}"));
            let recon = reconstruct_statevector(&r.final_state);
            let f = fidelity(
                &DenseState {
                    wire_count: circuit.wire_count,
                    amplitudes: recon.clone(),
                },
                &dense,
            )
            .unwrap();
            assert!(
                f >= 1.0 - 1e-9,
                "[FAIL] criterion 5: case {case} {mode:?} fidelity {f}"
            );

            // Per-gate norm preservation along the same program.
            let mut empty = circuit.clone();
            empty.program.clear();
            let mut s = run_circuit(&empty, &policy).unwrap().final_state;
            for (gi, instr) in circuit.program.iter().enumerate() {
                let Instruction::Gate(g) = instr else {
                    unreachable!()
                };
                let (next, _) = apply_gate(&s, g, &policy).unwrap_or_else(|e| {
                    panic!("[FAIL] criterion 5: case {case} {mode:?} gate {gi}: {e}")
                });
                s = next;
                let nrm = vec_norm(&reconstruct_statevector(&s));
                assert!(
                    (nrm - 1.0).abs() <= 1e-9,
                    "[FAIL] criterion 5: case {case} {mode:?} norm {nrm} after gate {gi}"
                );
            }
            recons.push(recon);
        }
        for (i, (a, b)) in recons[0].iter().zip(&recons[1]).enumerate() {
            assert!(
                (a - b).norm() <= 1e-9,
                "[FAIL] criterion 5: case {case} policies disagree at amplitude {i}"
            );
        }
    }
    let all_kinds = [
        "I", "X", "Y", "Z", "H", "S", "T", "RX", "RY", "RZ", "CNOT", "CZ", "CRY", "SWAP", "CCX",
        "CUSTOM",
    ];
    for kind in all_kinds {
        assert!(
            used.contains(kind),
            "[FAIL] criterion 5: gate kind {kind} never drawn; adjust the seed"
        );
    }
    let dt = t0.elapsed().as_secs_f64();
    assert!(dt < 10.0, "[FAIL] criterion 5: took {dt:.3}s");
    println!("[PASS] criterion 5: 100 random circuits agree with the dense reference under both policies");
}

#[test]
fn criterion_6_parser_round_trip() {
    // Corpus files: parse → serialize → parse must be structurally identical.
    for name in ["fig1.qc", "src.qc", "shor.qc", "damping.qc"] {
        let circuit = load_corpus(name);
        let json = serialize_ir(&circuit);
        let back = parse_circuit(&json)
            .unwrap_or_else(|e| panic!("[FAIL] criterion 6: reparse of {name}: {e}"));
        assert_eq!(
            back, circuit,
            "[FAIL] criterion 6: round trip changed {name}"
        );
    }

    // Random circuits, including subroutines.
    let mut rng = ChaCha8Rng::seed_from_u64(0x0ff1_ce11);
    let mut used = HashSet::new();
    for case in 0..100 {
        let mut circuit = random_circuit(&mut rng, &mut used);
        if case % 3 == 0 {
            circuit.defs.push(qx_core::SubroutineDef {
                name: "PAIR".into(),
                formal_wires: vec!["a".into(), "b".into()],
                body: vec![
                    Instruction::Gate(GateApplication::new(GateKind::H, vec![0])),
                    Instruction::Gate(GateApplication::new(
                        GateKind::Cry(rng.gen_range(-3.0..3.0)),
                        vec![0, 1],
                    )),
                ],
            });
            let wires = distinct_wires(&mut rng, circuit.wire_count, 2);
            circuit.program.push(Instruction::Call {
                name: "PAIR".into(),
                wires,
            });
        }
        circuit
            .validate()
            .unwrap_or_else(|e| panic!("[FAIL] criterion 6: case {case} invalid: {e}"));
        let json = serialize_ir(&circuit);
        let back = parse_circuit(&json)
            .unwrap_or_else(|e| panic!("[FAIL] criterion 6: case {case} reparse: {e}"));
        assert_eq!(back, circuit, "[FAIL] criterion 6: case {case} round trip");
    }

    // Invalid inputs: each must exit 1 with a line-numbered diagnostic.
    let invalid: [(&str, &str, &str); 10] = [
        ("bad arity", "qubits 3\ngate CNOT q0 q1 q2\n", "line 2"),
        ("out-of-range wire", "qubits 2\ngate H q2\n", "line 2"),
        ("duplicate wire", "qubits 2\ngate CNOT q0 q0\n", "line 2"),
        (
            "non-normalized state",
            "qubits 1\nstate q0 = 0.9|0> + 0.9|1>\n",
            "line 2",
        ),
        (
            "recursive def",
            "qubits 2\ndef A x y:\n  call A x y\ncall A q0 q1\n",
            "line 2",
        ),
        ("unknown gate", "qubits 1\ngate FOO q0\n", "line 2"),
        (
            "bad amplitude syntax",
            "qubits 1\nstate q0 = 0..6|0>\n",
            "line 2",
        ),
        ("missing qubits line", "state q0 = |0>\n", "line 1"),
        (
            "call arity mismatch",
            "qubits 2\ndef D a:\n  gate X a\ncall D q0 q1\n",
            "line 4",
        ),
        ("unknown subroutine", "qubits 1\ncall NOPE q0\n", "line 2"),
    ];
    let dir = tempfile::tempdir().unwrap();
    for (i, (what, text, line_tag)) in invalid.iter().enumerate() {
        let path = dir.path().join(format!("bad{i}.qc"));
        std::fs::write(&path, text).unwrap();
        let output = Command::new(env!("CARGO_BIN_EXE_qx"))
            .args(["run", path.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(
            output.status.code(),
            Some(1),
            "[FAIL] criterion 6: {what} exited {:?}",
            output.status.code()
        );
        let stderr = String::from_utf8_lossy(&output.stderr);
        assert!(
            stderr.contains(line_tag),
            "[FAIL] criterion 6: {what} diagnostic lacks {line_tag:?}: {stderr}"
        );
    }
    println!("[PASS] criterion 6: round trips hold and 10 invalid inputs give line-numbered exits");
}

#[test]
fn criterion_7_byte_deterministic_output() {
    let invocations: [&[&str]; 3] = [
        &["expand", "shor.qc", "--policy", "split"],
        &["expand", "damping.qc", "--format", "json"],
        &["verify", "shor.qc", "--policy", "block"],
    ];
    for args in invocations {
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let mut full = args.to_vec();
            let path = corpus_path(args[1]);
            full[1] = &path;
            let output = Command::new(env!("CARGO_BIN_EXE_qx"))
                .args(&full)
                .env_remove("QX_STATES")
                .output()
                .unwrap();
            assert!(
                output.status.success(),
                "[FAIL] criterion 7: {args:?} exited {:?}",
                output.status.code()
            );
            outputs.push(output.stdout);
        }
        assert_eq!(
            outputs[0], outputs[1],
            "[FAIL] criterion 7: repeated {args:?} runs differ"
        );
    }
    println!("[PASS] criterion 7: repeated expand and verify runs are byte-identical");
}
