//! Factors, branches, superpositions, and the named-state registry.
//!
//! A [`Superposition`] is the full system state: a list of [`Branch`]es, each a
//! coefficient times a product of [`Factor`]s partitioning the wires. All types
//! are immutable values; every operation returns a new value.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::StateError;
use crate::tol;

/// Complex amplitude. Stored amplitudes are always finite.
pub type Amplitude = Complex64;

/// A unit-norm state over one or more wires.
///
/// `wires` is strictly increasing; `amplitudes` has length `2^k` with the bit
/// of the first listed wire most significant. Most factors cover a single
/// wire. A multi-wire factor is an entangled block kept whole under the block
/// policy, such as the three-wire states (|000> ± |111>)/sqrt(2).
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub wires: Vec<usize>,
    pub amplitudes: Vec<Amplitude>,
}

impl Factor {
    pub fn new(wires: Vec<usize>, amplitudes: Vec<Amplitude>) -> Self {
        debug_assert!(
            wires.windows(2).all(|w| w[0] < w[1]),
            "wires must be strictly increasing"
        );
        debug_assert_eq!(amplitudes.len(), 1 << wires.len());
        Factor { wires, amplitudes }
    }

    /// Single-wire factor in the given computational basis state.
    pub fn basis(wire: usize, bit: u8) -> Self {
        let amplitudes = if bit == 0 {
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
        } else {
            vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]
        };
        Factor {
            wires: vec![wire],
            amplitudes,
        }
    }

    /// Number of wires this factor covers.
    pub fn width(&self) -> usize {
        self.wires.len()
    }

    pub fn is_single_wire(&self) -> bool {
        self.wires.len() == 1
    }

    /// For a single-wire factor: `Some(bit)` when the state is a definite
    /// computational basis state (the other amplitude is negligible).
    pub fn definite_bit(&self) -> Option<u8> {
        if !self.is_single_wire() {
            return None;
        }
        if self.amplitudes[1].norm() <= tol::EPS_PRUNE {
            Some(0)
        } else if self.amplitudes[0].norm() <= tol::EPS_PRUNE {
            Some(1)
        } else {
            None
        }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// One product term of the superposition: a coefficient times factors whose
/// wire sets partition `{0..n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub coefficient: Amplitude,
    pub factors: Vec<Factor>,
}

impl Branch {
    pub fn new(coefficient: Amplitude, factors: Vec<Factor>) -> Self {
        Branch {
            coefficient,
            factors,
        }
    }

    /// Canonicalize every factor, folding the extracted scalars into the
    /// coefficient, and keep factors ordered by their first wire.
    pub fn canonicalized(mut self) -> Result<Self, StateError> {
        let mut coeff = self.coefficient;
        for f in &mut self.factors {
            let (cf, scalar) = canonicalize_factor(f)?;
            *f = cf;
            coeff *= scalar;
        }
        self.factors.sort_by_key(|f| f.wires[0]);
        self.coefficient = coeff;
        Ok(self)
    }

    /// The factor containing `wire`, with its position in the factor list.
    pub fn factor_of(&self, wire: usize) -> Option<(usize, &Factor)> {
        self.factors
            .iter()
            .enumerate()
            .find(|(_, f)| f.wires.contains(&wire))
    }
}

/// The full system state: a sum of product-state branches over `wire_count`
/// wires. The branch list is the extended-graph decomposition; summing the
/// branches reproduces the dense state vector exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Superposition {
    pub wire_count: usize,
    pub branches: Vec<Branch>,
}

impl Superposition {
    pub fn new(wire_count: usize, branches: Vec<Branch>) -> Self {
        Superposition {
            wire_count,
            branches,
        }
    }
}

/// Normalize a factor and fix its global phase.
///
/// Returns the canonical factor (unit norm, first non-negligible amplitude
/// real and positive) and the scalar `s` with `s * canonical == original`.
pub fn canonicalize_factor(f: &Factor) -> Result<(Factor, Amplitude), StateError> {
    let norm = f.norm();
    if norm <= tol::EPS_ZERO {
        return Err(StateError::ZeroFactor);
    }
    let pivot = f
        .amplitudes
        .iter()
        .find(|a| a.norm() > tol::EPS_ZERO)
        .expect("norm above threshold implies a non-negligible amplitude");
    let phase = pivot / pivot.norm();
    let scalar = phase * norm;
    let amplitudes = f.amplitudes.iter().map(|a| a / scalar).collect();
    Ok((
        Factor {
            wires: f.wires.clone(),
            amplitudes,
        },
        scalar,
    ))
}

fn quantize(x: f64) -> i64 {
    (x / tol::EPS_MERGE).round() as i64
}

/// Sort key for the canonical branch order.
///
/// Encodes each factor list as a flat integer sequence: factor width, wires,
/// then each amplitude as quantized `(-re, -im)`. Negation makes basis-0
/// components and positive amplitudes sort first, so |00> precedes |11> and
/// |psi+> precedes |psi->. The raw bit pattern breaks quantization ties.
pub(crate) type SortKey = (Vec<i64>, Vec<u64>);

pub(crate) fn branch_sort_key(factors: &[Factor]) -> SortKey {
    let mut primary = Vec::new();
    let mut secondary = Vec::new();
    for f in factors {
        primary.push(f.wires.len() as i64);
        secondary.push(f.wires.len() as u64);
        for &w in &f.wires {
            primary.push(w as i64);
            secondary.push(w as u64);
        }
        for a in &f.amplitudes {
            primary.push(quantize(-a.re));
            primary.push(quantize(-a.im));
            secondary.push(a.re.to_bits());
            secondary.push(a.im.to_bits());
        }
    }
    (primary, secondary)
}

pub(crate) fn factors_equal_within(a: &[Factor], b: &[Factor], eps: f64) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(fa, fb)| {
            fa.wires == fb.wires
                && fa
                    .amplitudes
                    .iter()
                    .zip(&fb.amplitudes)
                    .all(|(x, y)| (x - y).norm() <= eps)
        })
}

/// Combine branches with (elementwise) equal factor lists and drop branches
/// with negligible coefficients. Branches come out in canonical order, so the
/// result is deterministic and merging never changes the reconstructed vector.
pub fn merge_and_prune(s: &Superposition, eps_merge: f64, eps_prune: f64) -> Superposition {
    let mut indexed: Vec<(usize, SortKey)> = s
        .branches
        .iter()
        .enumerate()
        .map(|(i, b)| (i, branch_sort_key(&b.factors)))
        .collect();
    indexed.sort_by(|(ia, ka), (ib, kb)| ka.cmp(kb).then(ia.cmp(ib)));

    let mut merged: Vec<Branch> = Vec::new();
    for (i, _) in indexed {
        let b = &s.branches[i];
        match merged.last_mut() {
            Some(last) if factors_equal_within(&last.factors, &b.factors, eps_merge) => {
                last.coefficient += b.coefficient;
            }
            _ => merged.push(b.clone()),
        }
    }
    merged.retain(|b| b.coefficient.norm() > eps_prune);
    Superposition {
        wire_count: s.wire_count,
        branches: merged,
    }
}

/// Expand the branch decomposition back into a dense state vector.
///
/// Basis index convention: wire 0 is the most significant bit, so index
/// `i` has wire `w` in state `(i >> (n-1-w)) & 1`.
pub fn reconstruct_statevector(s: &Superposition) -> Vec<Amplitude> {
    let n = s.wire_count;
    let mut out = vec![Complex64::new(0.0, 0.0); 1 << n];
    for b in &s.branches {
        for (idx, slot) in out.iter_mut().enumerate() {
            let mut amp = b.coefficient;
            for f in &b.factors {
                let mut fi = 0usize;
                for &w in &f.wires {
                    fi = (fi << 1) | ((idx >> (n - 1 - w)) & 1);
                }
                amp *= f.amplitudes[fi];
                if amp.norm_sqr() == 0.0 {
                    break;
                }
            }
            *slot += amp;
        }
    }
    out
}

/// Registry of named kets used when rendering diagrams and state readouts.
///
/// Ships with |0>, |1>, |+>, |-> and the three-wire block states |psi+>,
/// |psi->; extra states can be registered from a JSON file.
#[derive(Debug, Clone)]
pub struct NamedStateRegistry {
    states: BTreeMap<String, Vec<Amplitude>>,
}

impl Default for NamedStateRegistry {
    fn default() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut r = NamedStateRegistry::empty();
        let c = |re: f64| Complex64::new(re, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        r.register("0", vec![c(1.0), zero]).unwrap();
        r.register("1", vec![zero, c(1.0)]).unwrap();
        r.register("+", vec![c(s), c(s)]).unwrap();
        r.register("-", vec![c(s), c(-s)]).unwrap();
        let mut psi_plus = vec![zero; 8];
        psi_plus[0] = c(s);
        psi_plus[7] = c(s);
        let mut psi_minus = psi_plus.clone();
        psi_minus[7] = c(-s);
        r.register("psi+", psi_plus).unwrap();
        r.register("psi-", psi_minus).unwrap();
        r
    }
}

impl NamedStateRegistry {
    pub fn empty() -> Self {
        NamedStateRegistry {
            states: BTreeMap::new(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Amplitude])> {
        self.states.iter().map(|(n, v)| (n.as_str(), v.as_slice()))
    }

    pub fn get(&self, name: &str) -> Option<&[Amplitude]> {
        self.states.get(name).map(|v| v.as_slice())
    }

    /// Register `vector` under `name`. The stored copy is canonicalized
    /// (unit norm, first non-negligible amplitude real positive).
    pub fn register(&mut self, name: &str, vector: Vec<Amplitude>) -> Result<(), StateError> {
        if name.is_empty() || name.contains(['|', '<', '>']) || name.contains(char::is_whitespace) {
            return Err(StateError::BadName(name.to_string()));
        }
        if self.states.contains_key(name) {
            return Err(StateError::DuplicateName(name.to_string()));
        }
        if vector.len() < 2 || !vector.len().is_power_of_two() {
            return Err(StateError::BadDimension {
                name: name.to_string(),
                len: vector.len(),
            });
        }
        if vector
            .iter()
            .any(|a| !a.re.is_finite() || !a.im.is_finite())
        {
            return Err(StateError::NotNormalized { norm: f64::NAN });
        }
        let norm = vector.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > tol::EPS_NORM {
            return Err(StateError::NotNormalized { norm });
        }
        let pivot = vector
            .iter()
            .find(|a| a.norm() > tol::EPS_ZERO)
            .expect("unit norm implies a non-negligible amplitude");
        let phase = pivot / pivot.norm();
        let canonical: Vec<Amplitude> = vector.iter().map(|a| a / phase).collect();
        self.states.insert(name.to_string(), canonical);
        Ok(())
    }

    /// Load additional states from a JSON object mapping name to a list of
    /// `[re, im]` pairs of length `2^k`, on top of whatever is registered.
    pub fn load_json(&mut self, json: &str) -> Result<(), StateError> {
        let map: BTreeMap<String, Vec<[f64; 2]>> = serde_json::from_str(json)
            .map_err(|e| StateError::BadName(format!("invalid registry JSON: {e}")))?;
        for (name, pairs) in map {
            let vector = pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect();
            self.register(&name, vector)?;
        }
        Ok(())
    }

    /// Find a registered state equal to `f` up to a global phase within
    /// `tolerance`. Ties go to the lexicographically smallest name. Returns
    /// the name and the phase `p` with `f == p * registered`.
    pub fn match_named_state(&self, f: &Factor, tolerance: f64) -> Option<(&str, Amplitude)> {
        for (name, v) in &self.states {
            if v.len() != f.amplitudes.len() {
                continue;
            }
            let (pivot_idx, pivot) = v
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.norm().total_cmp(&b.norm()))
                .expect("registered states are nonempty");
            let phase = f.amplitudes[pivot_idx] / pivot;
            if (phase.norm() - 1.0).abs() > tolerance {
                continue;
            }
            let ok = f
                .amplitudes
                .iter()
                .zip(v)
                .all(|(a, b)| (a - phase * b).norm() <= tolerance);
            if ok {
                return Some((name.as_str(), phase));
            }
        }
        None
    }
}
