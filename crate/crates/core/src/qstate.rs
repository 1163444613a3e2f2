//! Dense complex linear algebra over labeled tensor-product Hilbert spaces.
//!
//! A [`StateVector`] stores its amplitudes in row-major order over an ordered
//! list of subsystems: the first label is the most significant digit of the
//! basis index. Subsystems are always addressed by label, never by position.
//!
//! States are allowed to be unnormalized. A postselection residual carries
//! the outcome probability in its squared norm.

pub use nalgebra::DMatrix;
use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::TOLERANCES;
use crate::error::{Error, Result};

pub type Complex = Complex64;

pub const ZERO: Complex = Complex::new(0.0, 0.0);
pub const ONE: Complex = Complex::new(1.0, 0.0);
pub const I: Complex = Complex::new(0.0, 1.0);

/// Label given to the one-dimensional factor left when every subsystem has
/// been projected away.
pub const SCALAR_LABEL: &str = "scalar";

/// Builds a complex number, rejecting NaN and infinities.
pub fn complex(re: f64, im: f64) -> Result<Complex> {
    if re.is_finite() && im.is_finite() {
        Ok(Complex::new(re, im))
    } else {
        Err(Error::NonFinite("complex number"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    labels: Vec<String>,
    dims: Vec<usize>,
    amps: Vec<Complex>,
}

fn check_capacity(requested: usize) -> Result<()> {
    let limit = TOLERANCES.max_amplitudes;
    if requested > limit {
        Err(Error::Capacity { requested, limit })
    } else {
        Ok(())
    }
}

fn checked_product(dims: &[usize]) -> Result<usize> {
    dims.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d).ok_or(Error::Capacity {
            requested: usize::MAX,
            limit: TOLERANCES.max_amplitudes,
        })
    })
}

impl StateVector {
    pub fn new<S: AsRef<str>>(labels: &[S], dims: &[usize], amps: Vec<Complex>) -> Result<Self> {
        if labels.len() != dims.len() || dims.is_empty() {
            return Err(Error::InvalidParameter {
                field: "labels".into(),
                reason: format!("{} labels for {} dimensions", labels.len(), dims.len()),
            });
        }
        if let Some(&d) = dims.iter().find(|&&d| d == 0) {
            return Err(Error::InvalidParameter {
                field: "dims".into(),
                reason: format!("subsystem dimension {d} must be positive"),
            });
        }
        let size = checked_product(dims)?;
        check_capacity(size)?;
        if amps.len() != size {
            return Err(Error::DimensionMismatch {
                expected: vec![size],
                found: vec![amps.len()],
            });
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite("state amplitudes"));
        }
        let labels: Vec<String> = labels.iter().map(|l| l.as_ref().to_owned()).collect();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        Ok(StateVector {
            labels,
            dims: dims.to_vec(),
            amps,
        })
    }

    /// Single-subsystem state from amplitudes.
    pub fn single(label: &str, amps: Vec<Complex>) -> Result<Self> {
        let dim = amps.len();
        Self::new(&[label], &[dim], amps)
    }

    /// Single-subsystem state from real amplitudes.
    pub fn from_real(label: &str, amps: &[f64]) -> Result<Self> {
        Self::single(label, amps.iter().map(|&a| Complex::new(a, 0.0)).collect())
    }

    /// Computational basis vector `|index>` of a single subsystem.
    pub fn basis(label: &str, dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidParameter {
                field: "index".into(),
                reason: format!("basis index {index} out of range for dimension {dim}"),
            });
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Self::single(label, amps)
    }

    pub fn zeros<S: AsRef<str>>(labels: &[S], dims: &[usize]) -> Result<Self> {
        let size = checked_product(dims)?;
        check_capacity(size)?;
        Self::new(labels, dims, vec![ZERO; size])
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amps(&self) -> &[Complex] {
        &self.amps
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= TOLERANCES.structural
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(self.scaled(Complex::new(1.0 / n, 0.0)))
    }

    pub fn scaled(&self, c: Complex) -> Self {
        StateVector {
            labels: self.labels.clone(),
            dims: self.dims.clone(),
            amps: self.amps.iter().map(|a| a * c).collect(),
        }
    }

    /// Linear combination `a·self + b·other`; both states must share labels and dims.
    pub fn combine(&self, a: Complex, other: &StateVector, b: Complex) -> Result<Self> {
        self.check_same_space(other)?;
        Ok(StateVector {
            labels: self.labels.clone(),
            dims: self.dims.clone(),
            amps: self
                .amps
                .iter()
                .zip(&other.amps)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    /// Same amplitudes under new subsystem labels.
    pub fn relabeled<S: AsRef<str>>(&self, labels: &[S]) -> Result<Self> {
        Self::new(labels, &self.dims, self.amps.clone())
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_owned()))
    }

    /// Largest elementwise modulus of the difference to `other`.
    pub fn max_abs_diff(&self, other: &StateVector) -> Result<f64> {
        self.check_same_space(other)?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max))
    }

    fn check_same_space(&self, other: &StateVector) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims.clone(),
                found: other.dims.clone(),
            });
        }
        Ok(())
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.dims[k + 1];
        }
        strides
    }

    /// Splits the basis into offsets over the target subsystems (in the
    /// order given) and offsets over the remaining subsystems.
    fn split_offsets(&self, targets: &[&str]) -> Result<Split> {
        let mut positions = Vec::with_capacity(targets.len());
        for t in targets {
            let p = self.position(t)?;
            if positions.contains(&p) {
                return Err(Error::DuplicateLabel((*t).to_owned()));
            }
            positions.push(p);
        }
        let strides = self.strides();
        let rest: Vec<usize> = (0..self.dims.len())
            .filter(|p| !positions.contains(p))
            .collect();
        Ok(Split {
            target_dims: positions.iter().map(|&p| self.dims[p]).collect(),
            target_offsets: offsets(&positions, &self.dims, &strides),
            rest_offsets: offsets(&rest, &self.dims, &strides),
            rest,
        })
    }
}

struct Split {
    target_dims: Vec<usize>,
    target_offsets: Vec<usize>,
    rest: Vec<usize>,
    rest_offsets: Vec<usize>,
}

/// Flat offsets of every multi-index over `positions`, row-major in the
/// order the positions are listed.
fn offsets(positions: &[usize], dims: &[usize], strides: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for &p in positions {
        let mut next = Vec::with_capacity(out.len() * dims[p]);
        for &base in &out {
            for d in 0..dims[p] {
                next.push(base + d * strides[p]);
            }
        }
        out = next;
    }
    out
}

/// Kronecker product `a ⊗ b`. Labels and dims are concatenated.
pub fn tensor(a: &StateVector, b: &StateVector) -> Result<StateVector> {
    let size = a.len().checked_mul(b.len()).ok_or(Error::Capacity {
        requested: usize::MAX,
        limit: TOLERANCES.max_amplitudes,
    })?;
    check_capacity(size)?;
    let mut amps = Vec::with_capacity(size);
    for x in &a.amps {
        for y in &b.amps {
            amps.push(x * y);
        }
    }
    let labels: Vec<&str> = a.labels.iter().chain(&b.labels).map(String::as_str).collect();
    let dims: Vec<usize> = a.dims.iter().chain(&b.dims).copied().collect();
    StateVector::new(&labels, &dims, amps)
}

/// Tensor product of several factors, left to right.
pub fn tensor_all(factors: &[&StateVector]) -> Result<StateVector> {
    let (first, rest) = factors.split_first().ok_or(Error::InvalidParameter {
        field: "factors".into(),
        reason: "at least one factor required".into(),
    })?;
    rest.iter()
        .try_fold((*first).clone(), |acc, f| tensor(&acc, f))
}

/// `<bra|ket>`, conjugate-linear in `bra`.
pub fn inner(bra: &StateVector, ket: &StateVector) -> Result<Complex> {
    bra.check_same_space(ket)?;
    Ok(bra
        .amps
        .iter()
        .zip(&ket.amps)
        .map(|(b, k)| b.conj() * k)
        .sum())
}

/// Applies `op` to the subsystems named in `targets` (in that order),
/// acting as the identity elsewhere.
pub fn apply(op: &Operator, targets: &[&str], s: &StateVector) -> Result<StateVector> {
    let split = s.split_offsets(targets)?;
    if split.target_dims != op.dims {
        return Err(Error::DimensionMismatch {
            expected: op.dims.clone(),
            found: split.target_dims,
        });
    }
    let n = split.target_offsets.len();
    let mut out = vec![ZERO; s.len()];
    let mut v = DVector::<Complex>::zeros(n);
    for &r in &split.rest_offsets {
        for (i, &t) in split.target_offsets.iter().enumerate() {
            v[i] = s.amps[r + t];
        }
        let w = &op.matrix * &v;
        for (i, &t) in split.target_offsets.iter().enumerate() {
            out[r + t] = w[i];
        }
    }
    Ok(StateVector {
        labels: s.labels.clone(),
        dims: s.dims.clone(),
        amps: out,
    })
}

/// Applies `op` to the whole state, with subsystems in the state's own order.
pub fn apply_full(op: &Operator, s: &StateVector) -> Result<StateVector> {
    let labels: Vec<&str> = s.labels.iter().map(String::as_str).collect();
    apply(op, &labels, s)
}

/// Contracts `bra` against the `targets` subsystems of `s`, returning the
/// unnormalized residual on the remaining subsystems. Its squared norm is the
/// probability of the postselection outcome given `s`.
pub fn partial_project(bra: &StateVector, targets: &[&str], s: &StateVector) -> Result<StateVector> {
    let split = s.split_offsets(targets)?;
    if split.target_dims != bra.dims {
        return Err(Error::DimensionMismatch {
            expected: split.target_dims,
            found: bra.dims.clone(),
        });
    }
    let amps: Vec<Complex> = split
        .rest_offsets
        .iter()
        .map(|&r| {
            split
                .target_offsets
                .iter()
                .zip(&bra.amps)
                .map(|(&t, b)| b.conj() * s.amps[r + t])
                .sum()
        })
        .collect();
    if split.rest.is_empty() {
        return StateVector::new(&[SCALAR_LABEL], &[1], amps);
    }
    let labels: Vec<&str> = split.rest.iter().map(|&p| s.labels[p].as_str()).collect();
    let dims: Vec<usize> = split.rest.iter().map(|&p| s.dims[p]).collect();
    StateVector::new(&labels, &dims, amps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Hermitian,
    Unitary,
    General,
}

/// Dense square operator over an ordered list of subsystem dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    dims: Vec<usize>,
    matrix: DMatrix<Complex>,
    kind: OperatorKind,
}

impl Operator {
    /// Validates shape, finiteness, and the property implied by `kind`.
    pub fn new(dims: &[usize], matrix: DMatrix<Complex>, kind: OperatorKind) -> Result<Self> {
        let side = checked_product(dims)?;
        if matrix.nrows() != side || matrix.ncols() != side {
            return Err(Error::DimensionMismatch {
                expected: vec![side, side],
                found: vec![matrix.nrows(), matrix.ncols()],
            });
        }
        if matrix.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite("operator entries"));
        }
        let op = Operator {
            dims: dims.to_vec(),
            matrix,
            kind,
        };
        match kind {
            OperatorKind::Hermitian if op.hermiticity_defect() > TOLERANCES.structural => {
                Err(Error::OperatorKind("hermitian"))
            }
            OperatorKind::Unitary if op.unitarity_defect() > TOLERANCES.structural => {
                Err(Error::OperatorKind("unitary"))
            }
            _ => Ok(op),
        }
    }

    pub fn hermitian(dims: &[usize], matrix: DMatrix<Complex>) -> Result<Self> {
        Self::new(dims, matrix, OperatorKind::Hermitian)
    }

    pub fn unitary(dims: &[usize], matrix: DMatrix<Complex>) -> Result<Self> {
        Self::new(dims, matrix, OperatorKind::Unitary)
    }

    pub fn general(dims: &[usize], matrix: DMatrix<Complex>) -> Result<Self> {
        Self::new(dims, matrix, OperatorKind::General)
    }

    /// The identity is both hermitian and unitary; it is tagged unitary.
    pub fn identity(dims: &[usize]) -> Result<Self> {
        let side = checked_product(dims)?;
        Self::new(dims, DMatrix::identity(side, side), OperatorKind::Unitary)
    }

    /// `|ket><bra|` over the ket's subsystems.
    pub fn outer(ket: &StateVector, bra: &StateVector) -> Result<Self> {
        ket.check_same_space(bra)?;
        let n = ket.len();
        let m = DMatrix::from_fn(n, n, |i, j| ket.amps[i] * bra.amps[j].conj());
        let kind = if ket == bra {
            OperatorKind::Hermitian
        } else {
            OperatorKind::General
        };
        Self::new(&ket.dims, m, kind)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &DMatrix<Complex> {
        &self.matrix
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn side(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Operator {
            dims: self.dims.clone(),
            matrix: self.matrix.adjoint(),
            kind: self.kind,
        }
    }

    /// Operator product `self · other`.
    pub fn compose(&self, other: &Operator) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims.clone(),
                found: other.dims.clone(),
            });
        }
        let kind = match (self.kind, other.kind) {
            (OperatorKind::Unitary, OperatorKind::Unitary) => OperatorKind::Unitary,
            _ => OperatorKind::General,
        };
        Ok(Operator {
            dims: self.dims.clone(),
            matrix: &self.matrix * &other.matrix,
            kind,
        })
    }

    /// Real linear combination `a·self + b·other`; stays hermitian when both are.
    pub fn linear_combination(&self, a: f64, other: &Operator, b: f64) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims.clone(),
                found: other.dims.clone(),
            });
        }
        let kind = match (self.kind, other.kind) {
            (OperatorKind::Hermitian, OperatorKind::Hermitian) => OperatorKind::Hermitian,
            _ => OperatorKind::General,
        };
        let m = self.matrix.map(|z| z * a) + other.matrix.map(|z| z * b);
        Ok(Operator {
            dims: self.dims.clone(),
            matrix: m,
            kind,
        })
    }

    /// `self ⊗ other`.
    pub fn kron(&self, other: &Operator) -> Result<Self> {
        let side = self.side() * other.side();
        check_capacity(side * side)?;
        let kind = if self.kind == other.kind {
            self.kind
        } else {
            OperatorKind::General
        };
        let dims: Vec<usize> = self.dims.iter().chain(&other.dims).copied().collect();
        Ok(Operator {
            dims,
            matrix: self.matrix.kronecker(&other.matrix),
            kind,
        })
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn unitarity_defect(&self) -> f64 {
        let n = self.side();
        (&self.matrix * self.matrix.adjoint() - DMatrix::<Complex>::identity(n, n))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// `<bra|self|ket>` where the operator acts on the full space of `ket`.
    pub fn matrix_element(&self, bra: &StateVector, ket: &StateVector) -> Result<Complex> {
        inner(bra, &apply_full(self, ket)?)
    }
}

/// Single-qubit and projector building blocks.
pub mod ops {
    use super::*;

    pub fn pauli_x() -> Operator {
        let m = DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        Operator {
            dims: vec![2],
            matrix: m,
            kind: OperatorKind::Hermitian,
        }
    }

    pub fn pauli_y() -> Operator {
        let m = DMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]);
        Operator {
            dims: vec![2],
            matrix: m,
            kind: OperatorKind::Hermitian,
        }
    }

    pub fn pauli_z() -> Operator {
        let m = DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
        Operator {
            dims: vec![2],
            matrix: m,
            kind: OperatorKind::Hermitian,
        }
    }

    /// `|index><index|` on a single subsystem of dimension `dim`.
    pub fn basis_projector(dim: usize, index: usize) -> Operator {
        let mut m = DMatrix::zeros(dim, dim);
        m[(index, index)] = ONE;
        Operator {
            dims: vec![dim],
            matrix: m,
            kind: OperatorKind::Hermitian,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    fn spin_up() -> StateVector {
        StateVector::basis("spin", 2, 0).unwrap()
    }

    fn spin_down() -> StateVector {
        StateVector::basis("spin", 2, 1).unwrap()
    }

    #[test]
    fn rejects_non_finite_complex() {
        assert!(complex(f64::NAN, 0.0).is_err());
        assert!(complex(0.0, f64::INFINITY).is_err());
        assert_eq!(complex(1.0, -2.0).unwrap(), c(1.0, -2.0));
    }

    #[test]
    fn constructor_checks_length_and_labels() {
        assert!(matches!(
            StateVector::new(&["a"], &[3], vec![ONE; 2]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            StateVector::new(&["a", "a"], &[1, 1], vec![ONE]),
            Err(Error::DuplicateLabel(_))
        ));
        assert!(matches!(
            StateVector::new(&["a"], &[1], vec![c(f64::NAN, 0.0)]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn tensor_of_basis_vectors() {
        let a = StateVector::basis("a", 2, 0).unwrap();
        let b = StateVector::basis("b", 2, 1).unwrap();
        let ab = tensor(&a, &b).unwrap();
        assert_eq!(ab.dims(), &[2, 2]);
        assert_eq!(ab.labels(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ab.amps(), &[ZERO, ONE, ZERO, ZERO]);
        assert_eq!(ab.norm(), 1.0);
    }

    #[test]
    fn tensor_capacity_limit() {
        let a = StateVector::zeros(&["a"], &[1 << 11]).unwrap();
        let b = StateVector::zeros(&["b"], &[1 << 10]).unwrap();
        assert!(matches!(tensor(&a, &b), Err(Error::Capacity { .. })));
        let b = StateVector::zeros(&["b"], &[1 << 9]).unwrap();
        assert_eq!(tensor(&a, &b).unwrap().len(), 1 << 20);
    }

    #[test]
    fn tensor_rejects_label_collision() {
        assert!(tensor(&spin_up(), &spin_down()).is_err());
    }

    #[test]
    fn identity_and_pauli_actions() {
        let s = StateVector::single("q", vec![c(0.3, 0.1), c(-0.2, 0.9)]).unwrap();
        let id = Operator::identity(&[2]).unwrap();
        assert_eq!(apply(&id, &["q"], &s).unwrap(), s);
        let flipped = apply(&ops::pauli_x(), &["spin"], &spin_up()).unwrap();
        assert_eq!(flipped, spin_down());
    }

    #[test]
    fn apply_errors() {
        let s = tensor(&StateVector::basis("path", 2, 0).unwrap(), &spin_up()).unwrap();
        assert!(matches!(
            apply(&ops::pauli_x(), &["nope"], &s),
            Err(Error::UnknownLabel(_))
        ));
        let big = Operator::identity(&[4]).unwrap();
        assert!(matches!(
            apply(&big, &["spin"], &s),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn inner_products_of_spin_states() {
        assert_eq!(inner(&spin_up(), &spin_up()).unwrap(), ONE);
        assert_eq!(inner(&spin_down(), &spin_up()).unwrap(), ZERO);
        let three = StateVector::basis("spin", 3, 0).unwrap();
        assert!(inner(&three, &spin_up()).is_err());
    }

    #[test]
    fn partial_projection_on_product_state() {
        let phi = StateVector::single("ptr", vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let s = tensor(&StateVector::basis("sys", 2, 0).unwrap(), &phi).unwrap();
        let keep = partial_project(&StateVector::basis("x", 2, 0).unwrap(), &["sys"], &s).unwrap();
        assert_eq!(keep, phi);
        let gone = partial_project(&StateVector::basis("x", 2, 1).unwrap(), &["sys"], &s).unwrap();
        assert_eq!(gone.norm(), 0.0);
    }

    #[test]
    fn projecting_everything_leaves_a_scalar() {
        let r = partial_project(&spin_up(), &["spin"], &spin_up()).unwrap();
        assert_eq!(r.dims(), &[1]);
        assert_eq!(r.labels(), &[SCALAR_LABEL.to_string()]);
        assert_eq!(r.amps(), &[ONE]);
    }

    #[test]
    fn cheshire_postselection_residual_without_coupling() {
        // (|I>+|II>)|+z>|phi>/√2 projected on (|I>|+z> + |II>|-z>)/√2.
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let path = StateVector::from_real("path", &[h, h]).unwrap();
        let sys = tensor(&path, &spin_up()).unwrap();
        let phi = StateVector::single("pointerI", vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let total = tensor(&sys, &phi).unwrap();
        let chi = StateVector::new(&["path", "spin"], &[2, 2], vec![c(h, 0.0), ZERO, ZERO, c(h, 0.0)])
            .unwrap();
        let r = partial_project(&chi, &["path", "spin"], &total).unwrap();
        let expected = phi.scaled(c(0.5, 0.0));
        assert!(r.max_abs_diff(&expected).unwrap() < 1e-15);
    }

    #[test]
    fn operator_kind_validation() {
        let not_herm = DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
        assert!(Operator::hermitian(&[2], not_herm.clone()).is_err());
        assert!(Operator::unitary(&[2], not_herm.clone()).is_err());
        assert!(Operator::general(&[2], not_herm).is_ok());
        assert!(Operator::unitary(&[2], ops::pauli_y().matrix().clone()).is_ok());
        assert!(matches!(
            Operator::general(&[3], DMatrix::zeros(2, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn serializes_as_complex_pairs() {
        let s = StateVector::single("q", vec![c(1.0, 0.0), c(0.0, -1.0)]).unwrap();
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v["amps"][1][1], -1.0);
        assert_eq!(v["dims"][0], 2);
        let back: StateVector = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
    }

    // --- oracles ---

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn random_amps(n: usize, seed: &mut u64) -> Vec<Complex> {
        (0..n).map(|_| c(lcg(seed), lcg(seed))).collect()
    }

    fn random_unitary(n: usize, seed: &mut u64) -> DMatrix<Complex> {
        let m = DMatrix::from_vec(n, n, random_amps(n * n, seed));
        m.qr().q()
    }

    #[test]
    fn tensor_matches_double_loop() {
        let mut seed = 7;
        let a = StateVector::single("a", random_amps(2, &mut seed)).unwrap();
        let b = StateVector::single("b", random_amps(3, &mut seed)).unwrap();
        let ab = tensor(&a, &b).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(ab.amps()[i * 3 + j], a.amps()[i] * b.amps()[j]);
            }
        }
    }

    #[test]
    fn apply_pair_matches_full_space_matrix() {
        let mut seed = 11;
        let s = StateVector::new(&["a", "b", "c"], &[3, 2, 2], random_amps(12, &mut seed)).unwrap();
        let u = random_unitary(4, &mut seed);
        let op = Operator::unitary(&[2, 2], u.clone()).unwrap();

        // adjacent pair (b, c): full = 1_3 ⊗ U
        let got = apply(&op, &["b", "c"], &s).unwrap();
        let mut full = DMatrix::<Complex>::zeros(12, 12);
        for a in 0..3 {
            for i in 0..4 {
                for j in 0..4 {
                    full[(a * 4 + i, a * 4 + j)] = u[(i, j)];
                }
            }
        }
        let want = &full * DVector::from_vec(s.amps().to_vec());
        for k in 0..12 {
            assert!((got.amps()[k] - want[k]).norm() < 1e-12);
        }

        // reversed pair (c, b): U acts with c as its leading factor
        let got = apply(&op, &["c", "b"], &s).unwrap();
        let mut full = DMatrix::<Complex>::zeros(12, 12);
        for a in 0..3 {
            for b in 0..2 {
                for cc in 0..2 {
                    for b2 in 0..2 {
                        for c2 in 0..2 {
                            full[(a * 4 + b * 2 + cc, a * 4 + b2 * 2 + c2)] = u[(cc * 2 + b, c2 * 2 + b2)];
                        }
                    }
                }
            }
        }
        let want = &full * DVector::from_vec(s.amps().to_vec());
        for k in 0..12 {
            assert!((got.amps()[k] - want[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn inner_matches_direct_sum() {
        let mut seed = 5;
        let a = StateVector::new(&["x", "y"], &[2, 3], random_amps(6, &mut seed)).unwrap();
        let b = StateVector::new(&["x", "y"], &[2, 3], random_amps(6, &mut seed)).unwrap();
        let mut want = ZERO;
        for k in 0..6 {
            want += c(a.amps()[k].re, -a.amps()[k].im) * b.amps()[k];
        }
        assert!((inner(&a, &b).unwrap() - want).norm() < 1e-14);
    }

    fn arb_amps(n: usize) -> impl Strategy<Value = Vec<Complex>> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
            .prop_map(|v| v.into_iter().map(|(r, i)| c(r, i)).collect())
    }

    proptest! {
        #[test]
        fn unitary_apply_preserves_norm(amps in arb_amps(8), seed in 1u64..1000) {
            let mut seed = seed;
            let s = StateVector::new(&["a", "b", "c"], &[2, 2, 2], amps).unwrap();
            let op = Operator::unitary(&[2, 2], random_unitary(4, &mut seed)).unwrap();
            let out = apply(&op, &["c", "a"], &s).unwrap();
            prop_assert!((out.norm() - s.norm()).abs() <= 1e-12);
        }

        #[test]
        fn self_inner_is_norm_squared(amps in arb_amps(6)) {
            let s = StateVector::new(&["a", "b"], &[3, 2], amps).unwrap();
            let z = inner(&s, &s).unwrap();
            prop_assert!(z.im.abs() <= 1e-14);
            prop_assert!((z.re - s.norm_sqr()).abs() <= 1e-14);
        }

        #[test]
        fn projection_probabilities_sum_to_norm(amps in arb_amps(12), seed in 1u64..1000) {
            let mut seed = seed;
            let s = StateVector::new(&["a", "b"], &[4, 3], amps).unwrap();
            let basis = random_unitary(4, &mut seed);
            let total: f64 = (0..4)
                .map(|k| {
                    let bra = StateVector::single("a", basis.column(k).iter().copied().collect()).unwrap();
                    partial_project(&bra, &["a"], &s).unwrap().norm_sqr()
                })
                .sum();
            prop_assert!((total - s.norm_sqr()).abs() <= 1e-12);
        }

        #[test]
        fn tensor_commutes_with_local_apply(a in arb_amps(2), b in arb_amps(3), seed in 1u64..1000) {
            let mut seed = seed;
            let a = StateVector::single("a", a).unwrap();
            let b = StateVector::single("b", b).unwrap();
            let op = Operator::unitary(&[3], random_unitary(3, &mut seed)).unwrap();
            let left = apply(&op, &["b"], &tensor(&a, &b).unwrap()).unwrap();
            let right = tensor(&a, &apply(&op, &["b"], &b).unwrap()).unwrap();
            prop_assert!(left.max_abs_diff(&right).unwrap() <= 1e-12);
        }

        #[test]
        fn tensor_norm_is_multiplicative(a in arb_amps(3), b in arb_amps(2)) {
            let a = StateVector::single("a", a).unwrap();
            let b = StateVector::single("b", b).unwrap();
            let ab = tensor(&a, &b).unwrap();
            prop_assert!((ab.norm() - a.norm() * b.norm()).abs() <= 1e-12);
        }
    }
}
