//! Pre/postselected weak measurements: weak values, transition elements and
//! the exact postselected pointer state.
//!
//! The coupling `exp(-i g A P)` is applied through the spectral decomposition
//! of `A`: each eigenspace translates the Gaussian pointer rigidly by
//! `g·a_k`. No expansion in `g` is made anywhere in this module; the
//! linear-response quantities are computed alongside the exact ones so the
//! two can be compared.

use serde::Serialize;

use crate::config::TOLERANCES;
use crate::error::{Error, Result};
use crate::pointer::GaussianPointerState;
use crate::qstate::{apply_full, inner, Complex, Operator, OperatorKind, StateVector, ZERO};

/// A hermitian operator together with a complete orthonormal eigenbasis.
#[derive(Debug, Clone)]
pub struct Observable {
    labels: Vec<String>,
    op: Operator,
    eigvals: Vec<f64>,
    eigvecs: Vec<StateVector>,
}

impl Observable {
    /// Diagonalizes a hermitian operator acting on the subsystems `labels`.
    pub fn new<S: AsRef<str>>(labels: &[S], op: Operator) -> Result<Self> {
        if op.hermiticity_defect() > TOLERANCES.structural {
            return Err(Error::OperatorKind("hermitian"));
        }
        if labels.len() != op.dims().len() {
            return Err(Error::InvalidObservable(format!(
                "{} labels for {} subsystems",
                labels.len(),
                op.dims().len()
            )));
        }
        let eig = op.matrix().clone().symmetric_eigen();
        let mut eigvecs = Vec::with_capacity(op.side());
        for col in eig.eigenvectors.column_iter() {
            eigvecs.push(StateVector::new(labels, op.dims(), col.iter().copied().collect())?);
        }
        let eigvals = eig.eigenvalues.iter().copied().collect();
        Self::checked(labels, op, eigvals, eigvecs)
    }

    /// Builds `Σ a_k |a_k><a_k|` from an explicit complete spectrum.
    pub fn from_spectrum(spectrum: Vec<(f64, StateVector)>) -> Result<Self> {
        let first = spectrum
            .first()
            .ok_or_else(|| Error::InvalidObservable("empty spectrum".into()))?;
        let labels = first.1.labels().to_vec();
        let dims = first.1.dims().to_vec();
        let n = first.1.len();
        let mut m = nalgebra::DMatrix::<Complex>::zeros(n, n);
        for (a, v) in &spectrum {
            if v.dims() != dims.as_slice() || v.labels() != labels.as_slice() {
                return Err(Error::DimensionMismatch {
                    expected: dims.clone(),
                    found: v.dims().to_vec(),
                });
            }
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += v.amps()[i] * v.amps()[j].conj() * *a;
                }
            }
        }
        // Symmetrize away rounding so the hermitian tag is exact.
        let m = (&m + m.adjoint()) * Complex::new(0.5, 0.0);
        let op = Operator::new(&dims, m, OperatorKind::Hermitian)?;
        let (eigvals, eigvecs) = spectrum.into_iter().unzip();
        Self::checked(&labels, op, eigvals, eigvecs)
    }

    pub fn identity<S: AsRef<str>>(labels: &[S], dims: &[usize]) -> Result<Self> {
        let n: usize = dims.iter().product();
        let mut spectrum = Vec::with_capacity(n);
        for k in 0..n {
            let mut amps = vec![ZERO; n];
            amps[k] = Complex::new(1.0, 0.0);
            spectrum.push((1.0, StateVector::new(labels, dims, amps)?));
        }
        Self::from_spectrum(spectrum)
    }

    fn checked<S: AsRef<str>>(
        labels: &[S],
        op: Operator,
        eigvals: Vec<f64>,
        eigvecs: Vec<StateVector>,
    ) -> Result<Self> {
        let tol = TOLERANCES.spectral;
        if eigvecs.len() != op.side() {
            return Err(Error::IncompleteBasis {
                found: eigvecs.len(),
                dim: op.side(),
            });
        }
        for (i, v) in eigvecs.iter().enumerate() {
            for (j, w) in eigvecs.iter().enumerate().take(i + 1) {
                let expected = if i == j { 1.0 } else { 0.0 };
                if (inner(w, v)? - Complex::new(expected, 0.0)).norm() > tol {
                    return Err(Error::InvalidObservable(format!(
                        "eigenvectors {j} and {i} are not orthonormal"
                    )));
                }
            }
            let av = apply_full(&op, v)?;
            if av.max_abs_diff(&v.scaled(Complex::new(eigvals[i], 0.0)))? > tol {
                return Err(Error::InvalidObservable(format!(
                    "vector {i} is not an eigenvector for eigenvalue {}",
                    eigvals[i]
                )));
            }
        }
        Ok(Observable {
            labels: labels.iter().map(|l| l.as_ref().to_owned()).collect(),
            op,
            eigvals,
            eigvecs,
        })
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dims(&self) -> &[usize] {
        self.op.dims()
    }

    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn eigvecs(&self) -> &[StateVector] {
        &self.eigvecs
    }

    /// Eigenvalues with the indices of their eigenvectors, degenerate
    /// eigenvalues (within the spectral tolerance) merged.
    pub fn eigenspaces(&self) -> Vec<(f64, Vec<usize>)> {
        let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
        for (k, &a) in self.eigvals.iter().enumerate() {
            match groups
                .iter_mut()
                .find(|(b, _)| (a - *b).abs() <= TOLERANCES.spectral)
            {
                Some((_, idx)) => idx.push(k),
                None => groups.push((a, vec![k])),
            }
        }
        groups
    }

    /// `a·self + b·other`, re-diagonalized.
    pub fn linear_combination(&self, a: f64, other: &Observable, b: f64) -> Result<Self> {
        Observable::new(&self.labels, self.op.linear_combination(a, &other.op, b)?)
    }

    /// `self²` sharing the eigenbasis.
    pub fn squared(&self) -> Result<Self> {
        Self::from_spectrum(
            self.eigvals
                .iter()
                .zip(&self.eigvecs)
                .map(|(a, v)| (a * a, v.clone()))
                .collect(),
        )
    }
}

/// Preselected state, system evolutions before and after the coupling time,
/// and the postselected state.
#[derive(Debug, Clone)]
pub struct PrePostContext {
    psi_i: StateVector,
    u_wi: Operator,
    u_fw: Operator,
    chi_f: StateVector,
    psi_w: StateVector,
    chi_w: StateVector,
}

impl PrePostContext {
    pub fn new(psi_i: StateVector, u_wi: Operator, u_fw: Operator, chi_f: StateVector) -> Result<Self> {
        if psi_i.dims() != chi_f.dims() || psi_i.labels() != chi_f.labels() {
            return Err(Error::DimensionMismatch {
                expected: psi_i.dims().to_vec(),
                found: chi_f.dims().to_vec(),
            });
        }
        for (name, s) in [("psi_i", &psi_i), ("chi_f", &chi_f)] {
            if !s.is_normalized() {
                return Err(Error::InvalidParameter {
                    field: name.into(),
                    reason: format!("norm {} is not 1", s.norm()),
                });
            }
        }
        for u in [&u_wi, &u_fw] {
            if u.unitarity_defect() > TOLERANCES.structural {
                return Err(Error::OperatorKind("unitary"));
            }
        }
        let psi_w = apply_full(&u_wi, &psi_i)?;
        let chi_w = apply_full(&u_fw.adjoint(), &chi_f)?;
        Ok(PrePostContext {
            psi_i,
            u_wi,
            u_fw,
            chi_f,
            psi_w,
            chi_w,
        })
    }

    /// Context with trivial evolutions: `ψ(t_w) = ψ_i`, `χ(t_w) = χ_f`.
    pub fn without_evolution(psi: StateVector, chi: StateVector) -> Result<Self> {
        let id = Operator::identity(psi.dims())?;
        Self::new(psi, id.clone(), id, chi)
    }

    pub fn psi_i(&self) -> &StateVector {
        &self.psi_i
    }

    pub fn chi_f(&self) -> &StateVector {
        &self.chi_f
    }

    pub fn u_wi(&self) -> &Operator {
        &self.u_wi
    }

    pub fn u_fw(&self) -> &Operator {
        &self.u_fw
    }

    /// `|ψ(t_w)> = U(t_w, t_i)|ψ(t_i)>`.
    pub fn psi_w(&self) -> &StateVector {
        &self.psi_w
    }

    /// `|χ(t_w)> = U(t_f, t_w)†|χ(t_f)>`.
    pub fn chi_w(&self) -> &StateVector {
        &self.chi_w
    }

    pub fn labels(&self) -> &[String] {
        self.psi_i.labels()
    }

    pub fn dims(&self) -> &[usize] {
        self.psi_i.dims()
    }

    /// `<χ(t_w)|ψ(t_w)>`, equal to `<χ(t_f)|ψ(t_f)>`.
    pub fn overlap(&self) -> Complex {
        inner(&self.chi_w, &self.psi_w).expect("context spaces agree by construction")
    }

    /// `|<χ(t_f)|ψ(t_f)>|²` without any coupling.
    pub fn postselect_prob(&self) -> f64 {
        self.overlap().norm_sqr()
    }

    fn check_observable(&self, a: &Observable) -> Result<()> {
        if a.dims() != self.dims() || a.labels() != self.labels() {
            return Err(Error::DimensionMismatch {
                expected: self.dims().to_vec(),
                found: a.dims().to_vec(),
            });
        }
        Ok(())
    }

    /// `<χ(t_w)|a_k><a_k|ψ(t_w)>` summed within each eigenspace of `a`.
    pub fn branch_amplitudes(&self, a: &Observable) -> Result<Vec<(f64, Complex)>> {
        self.check_observable(a)?;
        a.eigenspaces()
            .into_iter()
            .map(|(val, idx)| {
                let mut amp = ZERO;
                for k in idx {
                    let v = &a.eigvecs()[k];
                    amp += inner(&self.chi_w, v)? * inner(v, &self.psi_w)?;
                }
                Ok((val, amp))
            })
            .collect()
    }
}

/// `<χ(t_w)|A|ψ(t_w)>`. Defined even when the postselection is orthogonal.
pub fn transition_element(ctx: &PrePostContext, a: &Observable) -> Result<Complex> {
    ctx.check_observable(a)?;
    a.op().matrix_element(ctx.chi_w(), ctx.psi_w())
}

/// `A^w = <χ(t_w)|A|ψ(t_w)> / <χ(t_w)|ψ(t_w)>`.
pub fn weak_value(ctx: &PrePostContext, a: &Observable) -> Result<Complex> {
    let t = transition_element(ctx, a)?;
    let d = ctx.overlap();
    if d.norm() <= TOLERANCES.orthogonal {
        return Err(Error::OrthogonalPostselection(d.norm()));
    }
    Ok(t / d)
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakMeasurementResult {
    /// `None` when the postselection is orthogonal to the preselection.
    pub weak_value: Option<Complex>,
    pub transition_element: Complex,
    /// `|<χ(t_f)|ψ(t_f)>|²` with the coupling switched off.
    pub postselect_prob_unperturbed: f64,
    /// Postselection probability with the coupling on, `‖φ(t_f)‖²`.
    pub postselect_prob: f64,
    /// Unnormalized pointer state after successful postselection.
    pub pointer_final: GaussianPointerState,
    pub g: f64,
}

/// Exact premeasurement followed by postselection:
/// `φ(t_f) = Σ_k <χ(t_w)|a_k><a_k|ψ(t_w)> · exp(-i g a_k P) φ0`.
pub fn couple_and_postselect(
    ctx: &PrePostContext,
    a: &Observable,
    phi0: &GaussianPointerState,
    g: f64,
) -> Result<WeakMeasurementResult> {
    if !g.is_finite() {
        return Err(Error::NonFinite("coupling g"));
    }
    let transition = transition_element(ctx, a)?;
    let pointer_final = if g == 0.0 {
        phi0.scaled(ctx.overlap())
    } else {
        let branches = ctx.branch_amplitudes(a)?;
        let mut comps = Vec::new();
        for (val, amp) in branches {
            comps.extend_from_slice(phi0.translate(g * val, amp).components());
        }
        GaussianPointerState::from_components(phi0.width(), comps)?.compacted()
    };
    let weak_value = weak_value(ctx, a).ok();
    Ok(WeakMeasurementResult {
        weak_value,
        transition_element: transition,
        postselect_prob_unperturbed: ctx.postselect_prob(),
        postselect_prob: pointer_final.norm_sqr(),
        pointer_final,
        g,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearResponse {
    pub weak_value: Complex,
    /// `<x>_final − <x>_initial` from the exact pointer state.
    pub exact_shift: f64,
    /// `g·Re(A^w)`.
    pub predicted_shift: f64,
    pub abs_error: f64,
    /// `exact_shift / predicted_shift`, absent when the prediction is zero.
    pub ratio: Option<f64>,
}

pub fn linear_response_report(
    ctx: &PrePostContext,
    a: &Observable,
    phi0: &GaussianPointerState,
    g: f64,
) -> Result<LinearResponse> {
    let wv = weak_value(ctx, a)?;
    let res = couple_and_postselect(ctx, a, phi0, g)?;
    let exact_shift = res.pointer_final.mean_position()? - phi0.mean_position()?;
    let predicted_shift = g * wv.re;
    Ok(LinearResponse {
        weak_value: wv,
        exact_shift,
        predicted_shift,
        abs_error: (exact_shift - predicted_shift).abs(),
        ratio: (predicted_shift != 0.0).then(|| exact_shift / predicted_shift),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionCheck {
    /// `<ψ|A|ψ>`.
    pub lhs: f64,
    /// `Σ_f |<χ_f|ψ>|² A^w_f`.
    pub rhs: Complex,
    pub abs_diff: f64,
}

/// Checks `<ψ|A|ψ> = Σ_f |<b_f|ψ>|² A^w(<b_f|, |ψ>)` over the eigenbasis of `b`.
pub fn expectation_decomposition_check(psi: &StateVector, a: &Observable, b: &Observable) -> Result<DecompositionCheck> {
    expectation_decomposition_in_basis(psi, a, b.eigvecs())
}

/// As [`expectation_decomposition_check`], over an explicit postselection basis.
/// Terms whose postselection overlap vanishes are evaluated in the
/// transition-element form `conj(<b|ψ>)·<b|A|ψ>`.
pub fn expectation_decomposition_in_basis(
    psi: &StateVector,
    a: &Observable,
    basis: &[StateVector],
) -> Result<DecompositionCheck> {
    if basis.len() != psi.len() {
        return Err(Error::IncompleteBasis {
            found: basis.len(),
            dim: psi.len(),
        });
    }
    for (i, v) in basis.iter().enumerate() {
        for w in &basis[..i] {
            if inner(w, v)?.norm() > TOLERANCES.spectral {
                return Err(Error::IncompleteBasis {
                    found: i,
                    dim: psi.len(),
                });
            }
        }
    }
    let a_psi = apply_full(a.op(), psi)?;
    let lhs = inner(psi, &a_psi)?.re;
    let mut rhs = ZERO;
    for b in basis {
        let amp = inner(b, psi)?;
        let t = inner(b, &a_psi)?;
        rhs += if amp.norm() > TOLERANCES.orthogonal {
            amp.norm_sqr() * (t / amp)
        } else {
            amp.conj() * t
        };
    }
    Ok(DecompositionCheck {
        lhs,
        rhs,
        abs_diff: (rhs - lhs).norm(),
    })
}

/// Label of the single qubit in [`tilted_spin_context`].
pub const SPIN_LABEL: &str = "spin";

/// Preselection `|+z>`, postselection `cos θ <+z| + sin θ <−z|` with
/// `tan θ = tan_theta`. The weak value of `σx` is `tan θ`.
pub fn tilted_spin_context(tan_theta: f64) -> Result<PrePostContext> {
    if !tan_theta.is_finite() {
        return Err(Error::NonFinite("tan_theta"));
    }
    let th = tan_theta.atan();
    let pre = StateVector::from_real(SPIN_LABEL, &[1.0, 0.0])?;
    let post = StateVector::from_real(SPIN_LABEL, &[th.cos(), th.sin()])?;
    PrePostContext::without_evolution(pre, post)
}

/// `σx` on the qubit of [`tilted_spin_context`].
pub fn spin_sigma_x() -> Observable {
    Observable::new(&[SPIN_LABEL], crate::qstate::ops::pauli_x()).expect("pauli x is hermitian")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidityMargin {
    /// `|g|·|A^w| / (2σ)`.
    pub margin: f64,
    /// `|g|·|<χ|A²|ψ>| / (2σ·|<χ|A|ψ>|)`: size of the second-order term
    /// relative to the first; absent when the transition element vanishes.
    pub second_order_ratio: Option<f64>,
    pub linear_regime: bool,
}

/// How deep the coupling sits in the linear-response regime, using the
/// Gaussian momentum spread `1/(2σ)` as the momentum scale.
pub fn validity_margin(
    ctx: &PrePostContext,
    a: &Observable,
    phi0: &GaussianPointerState,
    g: f64,
) -> Result<ValidityMargin> {
    let wv = weak_value(ctx, a)?;
    let p_scale = 1.0 / (2.0 * phi0.width());
    let margin = g.abs() * p_scale * wv.norm();
    let first = transition_element(ctx, a)?;
    let second = transition_element(ctx, &a.squared()?)?;
    let second_order_ratio =
        (first.norm() > TOLERANCES.orthogonal).then(|| g.abs() * p_scale * second.norm() / first.norm());
    Ok(ValidityMargin {
        margin,
        second_order_ratio,
        linear_regime: margin < 1.0,
    })
}
