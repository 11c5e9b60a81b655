//! Built-in gate set, gate metadata, and unitary matrices.
//!
//! Controlled gates list their control wires first; the first listed wire is
//! the most significant bit of the unitary's index space.

use num_complex::Complex64;
use serde::{Deserialize, Deserializer};

use crate::state::Amplitude;

/// Dense complex matrix in row-major nested vectors.
pub type Matrix = Vec<Vec<Amplitude>>;

fn de_matrix<'de, D>(d: D) -> Result<Matrix, D::Error>
where
    D: Deserializer<'de>,
{
    let rows: Vec<Vec<[f64; 2]>> = Deserialize::deserialize(d)?;
    Ok(rows
        .into_iter()
        .map(|r| r.into_iter().map(|p| Complex64::new(p[0], p[1])).collect())
        .collect())
}

/// A gate kind, either built in or a user-supplied unitary.
///
/// Rotation parameters are in radians. `Custom` carries its matrix inline so
/// circuits stay self-contained after parsing.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub enum GateKind {
    I,
    X,
    Y,
    Z,
    H,
    S,
    T,
    #[serde(rename = "RX")]
    Rx(f64),
    #[serde(rename = "RY")]
    Ry(f64),
    #[serde(rename = "RZ")]
    Rz(f64),
    #[serde(rename = "CNOT")]
    Cnot,
    #[serde(rename = "CZ")]
    Cz,
    #[serde(rename = "CRY")]
    Cry(f64),
    #[serde(rename = "SWAP")]
    Swap,
    #[serde(rename = "CCX")]
    Ccx,
    #[serde(rename = "CUSTOM")]
    Custom {
        #[serde(deserialize_with = "de_matrix")]
        matrix: Matrix,
        name: String,
    },
}

impl GateKind {
    /// Bare gate name as written in circuit files.
    pub fn name(&self) -> &str {
        match self {
            GateKind::I => "I",
            GateKind::X => "X",
            GateKind::Y => "Y",
            GateKind::Z => "Z",
            GateKind::H => "H",
            GateKind::S => "S",
            GateKind::T => "T",
            GateKind::Rx(_) => "RX",
            GateKind::Ry(_) => "RY",
            GateKind::Rz(_) => "RZ",
            GateKind::Cnot => "CNOT",
            GateKind::Cz => "CZ",
            GateKind::Cry(_) => "CRY",
            GateKind::Swap => "SWAP",
            GateKind::Ccx => "CCX",
            GateKind::Custom { name, .. } => name,
        }
    }

    /// Display label; rotation angles are shown to three decimals.
    pub fn label(&self) -> String {
        match self {
            GateKind::Rx(t) | GateKind::Ry(t) | GateKind::Rz(t) | GateKind::Cry(t) => {
                format!("{}({:.3})", self.name(), t)
            }
            _ => self.name().to_string(),
        }
    }

    /// Number of wires the gate acts on.
    pub fn arity(&self) -> usize {
        match self {
            GateKind::Cnot | GateKind::Cz | GateKind::Cry(_) | GateKind::Swap => 2,
            GateKind::Ccx => 3,
            GateKind::Custom { matrix, .. } => matrix.len().trailing_zeros() as usize,
            _ => 1,
        }
    }

    /// Leading wires that act as controls.
    pub fn control_count(&self) -> usize {
        match self {
            GateKind::Cnot | GateKind::Cz | GateKind::Cry(_) => 1,
            GateKind::Ccx => 2,
            _ => 0,
        }
    }

    /// Gate applied to the target wires when every control reads 1.
    pub fn base(&self) -> Option<GateKind> {
        match self {
            GateKind::Cnot | GateKind::Ccx => Some(GateKind::X),
            GateKind::Cz => Some(GateKind::Z),
            GateKind::Cry(t) => Some(GateKind::Ry(*t)),
            _ => None,
        }
    }
}

/// The gate's unitary over `2^arity` dimensions, controls most significant.
pub fn gate_unitary(kind: &GateKind) -> Matrix {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    match kind {
        GateKind::I => from_rows(&[&[c(1.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(1.0, 0.0)]]),
        GateKind::X => from_rows(&[&[c(0.0, 0.0), c(1.0, 0.0)], &[c(1.0, 0.0), c(0.0, 0.0)]]),
        GateKind::Y => from_rows(&[&[c(0.0, 0.0), c(0.0, -1.0)], &[c(0.0, 1.0), c(0.0, 0.0)]]),
        GateKind::Z => from_rows(&[&[c(1.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(-1.0, 0.0)]]),
        GateKind::H => from_rows(&[&[c(s2, 0.0), c(s2, 0.0)], &[c(s2, 0.0), c(-s2, 0.0)]]),
        GateKind::S => from_rows(&[&[c(1.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(0.0, 1.0)]]),
        GateKind::T => {
            let t = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
            from_rows(&[&[c(1.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), t]])
        }
        GateKind::Rx(theta) => {
            let (sin, cos) = (theta / 2.0).sin_cos();
            from_rows(&[&[c(cos, 0.0), c(0.0, -sin)], &[c(0.0, -sin), c(cos, 0.0)]])
        }
        GateKind::Ry(theta) => {
            let (sin, cos) = (theta / 2.0).sin_cos();
            from_rows(&[&[c(cos, 0.0), c(-sin, 0.0)], &[c(sin, 0.0), c(cos, 0.0)]])
        }
        GateKind::Rz(theta) => {
            let e = Complex64::from_polar(1.0, theta / 2.0);
            from_rows(&[&[e.conj(), c(0.0, 0.0)], &[c(0.0, 0.0), e]])
        }
        GateKind::Cnot => controlled(1, &gate_unitary(&GateKind::X)),
        GateKind::Cz => controlled(1, &gate_unitary(&GateKind::Z)),
        GateKind::Cry(theta) => controlled(1, &gate_unitary(&GateKind::Ry(*theta))),
        GateKind::Swap => {
            let mut m = identity_matrix(4);
            m.swap(1, 2);
            m
        }
        GateKind::Ccx => controlled(2, &gate_unitary(&GateKind::X)),
        GateKind::Custom { matrix, .. } => matrix.clone(),
    }
}

fn from_rows(rows: &[&[Amplitude]]) -> Matrix {
    rows.iter().map(|r| r.to_vec()).collect()
}

/// Identity on controls, `base` on the bottom-right block where all controls
/// read 1.
fn controlled(controls: usize, base: &Matrix) -> Matrix {
    let bd = base.len();
    let dim = bd << controls;
    let mut m = identity_matrix(dim);
    let off = dim - bd;
    for r in 0..bd {
        for col in 0..bd {
            m[off + r][off + col] = base[r][col];
        }
    }
    m
}

pub fn identity_matrix(dim: usize) -> Matrix {
    (0..dim)
        .map(|r| {
            (0..dim)
                .map(|col| Complex64::new(if r == col { 1.0 } else { 0.0 }, 0.0))
                .collect()
        })
        .collect()
}

pub fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let dim = a.len();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
    for r in 0..dim {
        for k in 0..dim {
            let ark = a[r][k];
            if ark.norm_sqr() == 0.0 {
                continue;
            }
            for col in 0..dim {
                out[r][col] += ark * b[k][col];
            }
        }
    }
    out
}

pub fn dagger(m: &Matrix) -> Matrix {
    let dim = m.len();
    (0..dim)
        .map(|r| (0..dim).map(|col| m[col][r].conj()).collect())
        .collect()
}

/// Square, power-of-two dimension, and `U† U = I` within `eps` elementwise.
pub fn is_unitary(m: &Matrix, eps: f64) -> bool {
    let dim = m.len();
    if dim < 2 || !dim.is_power_of_two() || m.iter().any(|r| r.len() != dim) {
        return false;
    }
    let prod = mat_mul(&dagger(m), m);
    let id = identity_matrix(dim);
    prod.iter()
        .zip(&id)
        .all(|(pr, ir)| pr.iter().zip(ir).all(|(p, i)| (p - i).norm() <= eps))
}
