//! Numerical tolerances shared across the crate.

/// Tolerance record used by constructors and checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Hermiticity, unitarity, normalization checks.
    pub structural: f64,
    /// Pure arithmetic identities (inner products, probability bookkeeping).
    pub arithmetic: f64,
    /// |<chi|psi>| at or below this makes the weak value undefined.
    pub orthogonal: f64,
    /// Eigenvector and eigenvalue checks for observables.
    pub spectral: f64,
    /// Maximum number of amplitudes in any tensor-product state.
    pub max_amplitudes: usize,
}

pub const TOLERANCES: Tolerances = Tolerances {
    structural: 1e-12,
    arithmetic: 1e-14,
    orthogonal: 1e-12,
    spectral: 1e-10,
    max_amplitudes: 1 << 20,
};
