//! Numerical tolerances used across the crate.
//!
//! Double precision leaves ample headroom for desk-scale circuits (tens of
//! gates, a handful of wires), so these are fixed rather than configurable
//! except where the CLI explicitly exposes them.

/// Norm checks: state vectors and factors must be unit length within this.
pub const EPS_NORM: f64 = 1e-9;

/// Magnitudes at or below this count as zero when picking the phase-fixing
/// amplitude of a factor.
pub const EPS_ZERO: f64 = 1e-12;

/// Two branches merge when their factor lists agree elementwise within this.
pub const EPS_MERGE: f64 = 1e-9;

/// Branches with |coefficient| at or below this are dropped after merging.
pub const EPS_PRUNE: f64 = 1e-12;

/// Separability test: a wire peels off when the second singular value of the
/// 2 x 2^(k-1) unfolding is at or below this.
pub const EPS_SEP: f64 = 1e-9;

/// Named-state lookup tolerance (elementwise, up to global phase).
pub const EPS_NAMED_MATCH: f64 = 1e-9;

/// Unitarity requirement for user-supplied custom gate matrices.
pub const EPS_UNITARY: f64 = 1e-9;
