//! The ideal two-arm Quantum Cheshire Cat configuration.
//!
//! System space is `path(2) ⊗ spin(2)` with basis `|I>, |II>` and
//! `|+z>, |−z>`. Beam splitters and the spin flipper are folded into the
//! states at the coupling time:
//!
//! ```text
//! ψ(t_w) = (|I> + |II>) |+z> / √2
//! χ_f    = (|I>|+z> + |II>|−z>) / √2
//! ```
//!
//! One Gaussian pointer may sit on each arm, coupled to either the arm
//! projector `Π_j = |j><j| ⊗ 1` or the arm-local spin component
//! `(σx)_j = |j><j| ⊗ σx`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointer::{matrix_elements, GaussianComponent, GaussianPointerState};
use crate::qstate::{inner, Complex, StateVector, ZERO};
use crate::weakmeas::{couple_and_postselect, validity_margin, weak_value, Observable, PrePostContext};

pub const PATH: &str = "path";
pub const SPIN: &str = "spin";
pub const POINTER_I: &str = "pointerI";
pub const POINTER_II: &str = "pointerII";

/// Validity margins at or above this set the report warning flag.
pub const MARGIN_WARNING: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    I,
    II,
}

impl Arm {
    pub fn index(self) -> usize {
        match self {
            Arm::I => 0,
            Arm::II => 1,
        }
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::I => Arm::II,
            Arm::II => Arm::I,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::I => "I",
            Arm::II => "II",
        })
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "1" => Ok(Arm::I),
            "II" | "2" => Ok(Arm::II),
            _ => Err(Error::InvalidParameter {
                field: "arm".into(),
                reason: format!("`{s}` is not one of I, II"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmObservable {
    Projector,
    SigmaX,
}

impl fmt::Display for ArmObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArmObservable::Projector => "projector",
            ArmObservable::SigmaX => "sigma_x",
        })
    }
}

impl FromStr for ArmObservable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projector" | "pi" => Ok(ArmObservable::Projector),
            "sigma_x" | "sigma-x" | "sx" => Ok(ArmObservable::SigmaX),
            _ => Err(Error::InvalidParameter {
                field: "observable".into(),
                reason: format!("`{s}` is not one of projector, sigma_x"),
            }),
        }
    }
}

fn system_state(amps: [f64; 4]) -> StateVector {
    StateVector::new(&[PATH, SPIN], &[2, 2], amps.iter().map(|&a| Complex::new(a, 0.0)).collect())
        .expect("fixed 2x2 system state")
}

/// `ψ(t_w) = (|I> + |II>)|+z>/√2`.
pub fn preselected_state() -> StateVector {
    let h = FRAC_1_SQRT_2;
    system_state([h, 0.0, h, 0.0])
}

/// Postselected state with `|−z>` on `flipped` and `|+z>` on the other arm.
pub fn postselected_state(flipped: Arm) -> StateVector {
    let h = FRAC_1_SQRT_2;
    match flipped {
        Arm::II => system_state([h, 0.0, 0.0, h]),
        Arm::I => system_state([0.0, h, h, 0.0]),
    }
}

/// Pre/postselection of the standard configuration (spin flipped on arm II).
pub fn build_prepost() -> PrePostContext {
    build_prepost_flipped(Arm::II)
}

/// Pre/postselection with the postselected spin flipped on `flipped`.
pub fn build_prepost_flipped(flipped: Arm) -> PrePostContext {
    PrePostContext::without_evolution(preselected_state(), postselected_state(flipped))
        .expect("fixed normalized states")
}

/// `Π_j` or `(σx)_j` with its exact spectrum.
pub fn observable(arm: Arm, kind: ArmObservable) -> Observable {
    let h = FRAC_1_SQRT_2;
    let j = arm.index();
    let mut spectrum = Vec::with_capacity(4);
    let vec = |path: usize, spin: [f64; 2]| {
        let mut amps = [0.0; 4];
        amps[2 * path] = spin[0];
        amps[2 * path + 1] = spin[1];
        system_state(amps)
    };
    match kind {
        ArmObservable::Projector => {
            spectrum.push((1.0, vec(j, [1.0, 0.0])));
            spectrum.push((1.0, vec(j, [0.0, 1.0])));
        }
        ArmObservable::SigmaX => {
            spectrum.push((1.0, vec(j, [h, h])));
            spectrum.push((-1.0, vec(j, [h, -h])));
        }
    }
    let k = arm.other().index();
    spectrum.push((0.0, vec(k, [1.0, 0.0])));
    spectrum.push((0.0, vec(k, [0.0, 1.0])));
    Observable::from_spectrum(spectrum).expect("fixed orthonormal spectrum")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QccConfig {
    pub observable_i: ArmObservable,
    pub observable_ii: ArmObservable,
    pub g_i: f64,
    pub g_ii: f64,
    pub pointer_width: f64,
    /// Arm whose postselected spin is `|−z>`.
    pub flipped_arm: Arm,
}

impl Default for QccConfig {
    fn default() -> Self {
        QccConfig {
            observable_i: ArmObservable::Projector,
            observable_ii: ArmObservable::SigmaX,
            g_i: 0.02,
            g_ii: 0.02,
            pointer_width: 1.0,
            flipped_arm: Arm::II,
        }
    }
}

impl QccConfig {
    pub fn violations(&self) -> Vec<Error> {
        let mut out = Vec::new();
        if !(self.pointer_width > 0.0 && self.pointer_width.is_finite()) {
            out.push(Error::InvalidParameter {
                field: "pointer_width".into(),
                reason: format!("must be positive and finite, got {}", self.pointer_width),
            });
        }
        for (field, g) in [("g_I", self.g_i), ("g_II", self.g_ii)] {
            if !g.is_finite() {
                out.push(Error::InvalidParameter {
                    field: field.into(),
                    reason: format!("must be finite, got {g}"),
                });
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QccReport {
    pub wv_pi_i: Complex,
    pub wv_sigma_i: Complex,
    pub wv_pi_ii: Complex,
    pub wv_sigma_ii: Complex,
    pub shift_i: f64,
    pub shift_ii: f64,
    pub postselect_amp: Complex,
    pub postselect_prob: f64,
    /// Postselection probability with only the arm-I pointer coupled.
    pub postselect_prob_coupled_i: f64,
    /// Postselection probability with only the arm-II pointer coupled.
    pub postselect_prob_coupled_ii: f64,
    pub margin_i: f64,
    pub margin_ii: f64,
    pub warning: bool,
}

/// Flat JSON layout of a [`QccReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QccRecord {
    #[serde(rename = "wv_pi_I_re")]
    pub wv_pi_i_re: f64,
    #[serde(rename = "wv_pi_I_im")]
    pub wv_pi_i_im: f64,
    #[serde(rename = "wv_sigma_I_re")]
    pub wv_sigma_i_re: f64,
    #[serde(rename = "wv_sigma_I_im")]
    pub wv_sigma_i_im: f64,
    #[serde(rename = "wv_pi_II_re")]
    pub wv_pi_ii_re: f64,
    #[serde(rename = "wv_pi_II_im")]
    pub wv_pi_ii_im: f64,
    #[serde(rename = "wv_sigma_II_re")]
    pub wv_sigma_ii_re: f64,
    #[serde(rename = "wv_sigma_II_im")]
    pub wv_sigma_ii_im: f64,
    #[serde(rename = "shift_I")]
    pub shift_i: f64,
    #[serde(rename = "shift_II")]
    pub shift_ii: f64,
    pub postselect_amp_re: f64,
    pub postselect_amp_im: f64,
    pub postselect_prob: f64,
    #[serde(rename = "postselect_prob_coupled_I")]
    pub postselect_prob_coupled_i: f64,
    #[serde(rename = "postselect_prob_coupled_II")]
    pub postselect_prob_coupled_ii: f64,
    #[serde(rename = "validity_margin_I")]
    pub margin_i: f64,
    #[serde(rename = "validity_margin_II")]
    pub margin_ii: f64,
    pub warning: bool,
}

impl From<&QccReport> for QccRecord {
    fn from(r: &QccReport) -> Self {
        QccRecord {
            wv_pi_i_re: r.wv_pi_i.re,
            wv_pi_i_im: r.wv_pi_i.im,
            wv_sigma_i_re: r.wv_sigma_i.re,
            wv_sigma_i_im: r.wv_sigma_i.im,
            wv_pi_ii_re: r.wv_pi_ii.re,
            wv_pi_ii_im: r.wv_pi_ii.im,
            wv_sigma_ii_re: r.wv_sigma_ii.re,
            wv_sigma_ii_im: r.wv_sigma_ii.im,
            shift_i: r.shift_i,
            shift_ii: r.shift_ii,
            postselect_amp_re: r.postselect_amp.re,
            postselect_amp_im: r.postselect_amp.im,
            postselect_prob: r.postselect_prob,
            postselect_prob_coupled_i: r.postselect_prob_coupled_i,
            postselect_prob_coupled_ii: r.postselect_prob_coupled_ii,
            margin_i: r.margin_i,
            margin_ii: r.margin_ii,
            warning: r.warning,
        }
    }
}

/// The four weak values `Π_I^w, (σx)_I^w, Π_II^w, (σx)_II^w` of `ctx`.
pub fn weak_values(ctx: &PrePostContext) -> Result<[Complex; 4]> {
    Ok([
        weak_value(ctx, &observable(Arm::I, ArmObservable::Projector))?,
        weak_value(ctx, &observable(Arm::I, ArmObservable::SigmaX))?,
        weak_value(ctx, &observable(Arm::II, ArmObservable::Projector))?,
        weak_value(ctx, &observable(Arm::II, ArmObservable::SigmaX))?,
    ])
}

/// Each arm's pointer coupled on its own, followed by postselection.
pub fn run_ideal_qcc(cfg: &QccConfig) -> Result<QccReport> {
    cfg.validate()?;
    let ctx = build_prepost_flipped(cfg.flipped_arm);
    let [wv_pi_i, wv_sigma_i, wv_pi_ii, wv_sigma_ii] = weak_values(&ctx)?;
    let phi0 = GaussianPointerState::gaussian(0.0, cfg.pointer_width)?;

    let arm_i = observable(Arm::I, cfg.observable_i);
    let arm_ii = observable(Arm::II, cfg.observable_ii);
    let res_i = couple_and_postselect(&ctx, &arm_i, &phi0, cfg.g_i)?;
    let res_ii = couple_and_postselect(&ctx, &arm_ii, &phi0, cfg.g_ii)?;
    let margin_i = validity_margin(&ctx, &arm_i, &phi0, cfg.g_i)?.margin;
    let margin_ii = validity_margin(&ctx, &arm_ii, &phi0, cfg.g_ii)?.margin;

    let amp = ctx.overlap();
    Ok(QccReport {
        wv_pi_i,
        wv_sigma_i,
        wv_pi_ii,
        wv_sigma_ii,
        shift_i: res_i.pointer_final.mean_position()? - phi0.mean_position()?,
        shift_ii: res_ii.pointer_final.mean_position()? - phi0.mean_position()?,
        postselect_amp: amp,
        postselect_prob: amp.norm_sqr(),
        postselect_prob_coupled_i: res_i.postselect_prob,
        postselect_prob_coupled_ii: res_ii.postselect_prob,
        margin_i,
        margin_ii,
        warning: margin_i >= MARGIN_WARNING || margin_ii >= MARGIN_WARNING,
    })
}

/// One term `c · φ(x_I − a) φ(x_II − b)` of the two-pointer state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointTerm {
    pub coeff: Complex,
    pub center_i: f64,
    pub center_ii: f64,
}

/// Postselected (unnormalized) state of the two arm pointers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointPointerState {
    width: f64,
    terms: Vec<JointTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingOrder {
    /// Arm-I coupling acts first.
    IThenII,
    /// Arm-II coupling acts first.
    IIThenI,
}

impl JointPointerState {
    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn terms(&self) -> &[JointTerm] {
        &self.terms
    }

    fn component(&self, center: f64) -> GaussianComponent {
        GaussianComponent {
            coeff: Complex::new(1.0, 0.0),
            center,
            momentum_center: 0.0,
        }
    }

    /// Sums `conj(c_p) c_q · f(p, q)` over all term pairs, where `f` gets the
    /// per-pointer matrix elements.
    fn bilinear(&self, f: impl Fn(&(Complex, Complex, Complex), &(Complex, Complex, Complex)) -> Complex) -> Complex {
        let mut acc = ZERO;
        for p in &self.terms {
            for q in &self.terms {
                let mi = matrix_elements(self.width, &self.component(p.center_i), &self.component(q.center_i));
                let mii = matrix_elements(self.width, &self.component(p.center_ii), &self.component(q.center_ii));
                acc += p.coeff.conj() * q.coeff * f(&mi, &mii);
            }
        }
        acc
    }

    pub fn norm_sqr(&self) -> f64 {
        self.bilinear(|a, b| a.0 * b.0).re
    }

    /// Marginal `<x_I>`.
    pub fn mean_position_i(&self) -> Result<f64> {
        let n = self.norm_sqr();
        if n <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(self.bilinear(|a, b| a.1 * b.0).re / n)
    }

    /// Marginal `<x_II>`.
    pub fn mean_position_ii(&self) -> Result<f64> {
        let n = self.norm_sqr();
        if n <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(self.bilinear(|a, b| a.0 * b.1).re / n)
    }

    /// Unnormalized marginal density of pointer I at `x`.
    pub fn marginal_density_i(&self, x: f64) -> f64 {
        let single = |center: f64| GaussianPointerState::gaussian(center, self.width).map(|p| p.amplitude(x));
        let mut acc = ZERO;
        for p in &self.terms {
            for q in &self.terms {
                let (s_ii, _, _) =
                    matrix_elements(self.width, &self.component(p.center_ii), &self.component(q.center_ii));
                let (Ok(ap), Ok(aq)) = (single(p.center_i), single(q.center_i)) else {
                    continue;
                };
                acc += p.coeff.conj() * q.coeff * ap.conj() * aq * s_ii;
            }
        }
        acc.re
    }

    /// Largest coefficient difference against another state with the same
    /// term layout.
    pub fn max_abs_diff(&self, other: &JointPointerState) -> Option<f64> {
        if self.terms.len() != other.terms.len() {
            return None;
        }
        let mut worst = 0.0f64;
        for (a, b) in self.terms.iter().zip(&other.terms) {
            if a.center_i != b.center_i || a.center_ii != b.center_ii {
                return None;
            }
            worst = worst.max((a.coeff - b.coeff).norm());
        }
        Some(worst)
    }

    /// Common axis range used by [`JointPointerState::to_grid`]: every term
    /// center (and the origin) widened by the coverage margin.
    pub fn grid_domain(&self) -> (f64, f64) {
        let pad = crate::pointer::COVERAGE_WIDTHS * self.width;
        let centers = || self.terms.iter().flat_map(|t| [t.center_i, t.center_ii]);
        (centers().fold(0.0f64, f64::min) - pad, centers().fold(0.0f64, f64::max) + pad)
    }

    /// Samples the joint wavefunction on an `n × n` grid over the common
    /// support, as a `pointerI ⊗ pointerII` state vector.
    pub fn to_grid(&self, n_points: usize) -> Result<StateVector> {
        let size = n_points.saturating_mul(n_points);
        let limit = crate::config::TOLERANCES.max_amplitudes;
        if size > limit {
            return Err(Error::Capacity { requested: size, limit });
        }
        if n_points < 2 {
            return Err(Error::InvalidGrid(format!("{n_points} points per axis")));
        }
        let (lo, hi) = self.grid_domain();
        let dx = (hi - lo) / (n_points - 1) as f64;
        let base = GaussianPointerState::gaussian(0.0, self.width)?;
        let mut amps = vec![ZERO; size];
        for t in &self.terms {
            let fi: Vec<Complex> = (0..n_points).map(|i| base.amplitude(lo + i as f64 * dx - t.center_i)).collect();
            let fii: Vec<Complex> = (0..n_points).map(|i| base.amplitude(lo + i as f64 * dx - t.center_ii)).collect();
            for (i, a) in fi.iter().enumerate() {
                for (j, b) in fii.iter().enumerate() {
                    amps[i * n_points + j] += t.coeff * a * b;
                }
            }
        }
        StateVector::new(&[POINTER_I, POINTER_II], &[n_points, n_points], amps)
    }
}

/// Amplitude `<χ| Q |ψ>` where `Q` is a product of eigenspace projectors
/// applied right to left.
fn projected_amplitude(ctx: &PrePostContext, projections: &[(&Observable, &[usize])]) -> Result<Complex> {
    let mut v = ctx.psi_w().clone();
    for (obs, idx) in projections {
        let mut next = v.scaled(ZERO);
        for &k in *idx {
            let e = &obs.eigvecs()[k];
            next = next.combine(Complex::new(1.0, 0.0), e, inner(e, &v)?)?;
        }
        v = next;
    }
    inner(ctx.chi_w(), &v)
}

/// Both pointers coupled within a single evolution on
/// `path ⊗ spin ⊗ pointerI ⊗ pointerII`, then one postselection.
pub fn joint_pointer_state(cfg: &QccConfig, order: CouplingOrder) -> Result<JointPointerState> {
    cfg.validate()?;
    let ctx = build_prepost_flipped(cfg.flipped_arm);
    let a_i = observable(Arm::I, cfg.observable_i);
    let a_ii = observable(Arm::II, cfg.observable_ii);
    let mut terms = Vec::new();
    for (val_i, idx_i) in a_i.eigenspaces() {
        for (val_ii, idx_ii) in a_ii.eigenspaces() {
            let coeff = match order {
                CouplingOrder::IThenII => {
                    projected_amplitude(&ctx, &[(&a_i, &idx_i), (&a_ii, &idx_ii)])?
                }
                CouplingOrder::IIThenI => {
                    projected_amplitude(&ctx, &[(&a_ii, &idx_ii), (&a_i, &idx_i)])?
                }
            };
            terms.push(JointTerm {
                coeff,
                center_i: cfg.g_i * val_i,
                center_ii: cfg.g_ii * val_ii,
            });
        }
    }
    Ok(JointPointerState {
        width: cfg.pointer_width,
        terms,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct JointReport {
    pub weak_values: QccRecord,
    #[serde(rename = "shift_I")]
    pub shift_i: f64,
    #[serde(rename = "shift_II")]
    pub shift_ii: f64,
    pub postselect_prob: f64,
    pub postselect_prob_unperturbed: f64,
    pub state: JointPointerState,
}

pub fn run_joint_pointers(cfg: &QccConfig) -> Result<JointReport> {
    let single = run_ideal_qcc(cfg)?;
    let state = joint_pointer_state(cfg, CouplingOrder::IThenII)?;
    Ok(JointReport {
        weak_values: QccRecord::from(&single),
        shift_i: state.mean_position_i()?,
        shift_ii: state.mean_position_ii()?,
        postselect_prob: state.norm_sqr(),
        postselect_prob_unperturbed: single.postselect_prob,
        state,
    })
}
