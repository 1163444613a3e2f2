//! The weak quantum pointer as an exact superposition of Gaussian wavepackets.
//!
//! Every component shares one position width `σ` and has the form
//!
//! ```text
//! c · (2πσ²)^(-1/4) · exp(-(x - x0)² / (4σ²) + i·k0·(x - x0))
//! ```
//!
//! so that `|φ|²` of a single unit-coefficient component is a normal density
//! with standard deviation `σ`. The translation `exp(-i·a·P)` maps
//! `φ(x) → φ(x - a)`, which only moves `x0`: pointer evolution under the
//! von Neumann coupling is exact in this representation.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{Complex, ONE, ZERO};

/// Half-width of the region, in units of `σ`, that must be covered by any
/// grid export or tabulation.
pub const COVERAGE_WIDTHS: f64 = 8.0;

/// Grid boundary density must stay below this fraction of the peak density.
pub const WRAP_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub coeff: Complex,
    pub center: f64,
    pub momentum_center: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPointerState {
    width: f64,
    components: Vec<GaussianComponent>,
}

fn check_width(width: f64) -> Result<()> {
    if width > 0.0 && width.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidWidth(width))
    }
}

/// Closed-form `<j|k>`, `<j|x|k>` and `<j|P|k>` for two components of
/// common width.
pub(crate) fn matrix_elements(width: f64, j: &GaussianComponent, k: &GaussianComponent) -> (Complex, Complex, Complex) {
    let s2 = width * width;
    let (a, p) = (j.center, j.momentum_center);
    let (b, q) = (k.center, k.momentum_center);
    let dk = q - p;
    let mid = 0.5 * (a + b);
    let overlap = Complex::from_polar(
        (-(a - b) * (a - b) / (8.0 * s2) - 0.5 * s2 * dk * dk).exp(),
        dk * mid + p * a - q * b,
    );
    let x = overlap * Complex::new(mid, s2 * dk);
    let mom = overlap * Complex::new(0.5 * (p + q), (a - b) / (4.0 * s2));
    (overlap, x, mom)
}

impl GaussianPointerState {
    /// A normalized wavepacket centered at `center` with zero mean momentum.
    pub fn gaussian(center: f64, width: f64) -> Result<Self> {
        Self::boosted(center, width, 0.0)
    }

    /// A normalized wavepacket with mean momentum `momentum`.
    pub fn boosted(center: f64, width: f64, momentum: f64) -> Result<Self> {
        check_width(width)?;
        if !center.is_finite() || !momentum.is_finite() {
            return Err(Error::NonFinite("pointer center"));
        }
        Ok(GaussianPointerState {
            width,
            components: vec![GaussianComponent {
                coeff: ONE,
                center,
                momentum_center: momentum,
            }],
        })
    }

    pub fn from_components(width: f64, components: Vec<GaussianComponent>) -> Result<Self> {
        check_width(width)?;
        let finite = components.iter().all(|c| {
            c.coeff.re.is_finite() && c.coeff.im.is_finite() && c.center.is_finite() && c.momentum_center.is_finite()
        });
        if !finite {
            return Err(Error::NonFinite("pointer component"));
        }
        Ok(GaussianPointerState { width, components })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// `coeff · exp(-i·shift·P) |self>`, exact.
    pub fn translate(&self, shift: f64, coeff: Complex) -> Self {
        GaussianPointerState {
            width: self.width,
            components: self
                .components
                .iter()
                .map(|c| GaussianComponent {
                    coeff: c.coeff * coeff,
                    center: c.center + shift,
                    momentum_center: c.momentum_center,
                })
                .collect(),
        }
    }

    pub fn scaled(&self, coeff: Complex) -> Self {
        self.translate(0.0, coeff)
    }

    /// `self + other`. Components are concatenated; the widths must agree.
    pub fn superpose(&self, other: &GaussianPointerState) -> Result<Self> {
        if self.width != other.width {
            return Err(Error::InvalidWidth(other.width));
        }
        let mut components = self.components.clone();
        components.extend_from_slice(&other.components);
        Ok(GaussianPointerState {
            width: self.width,
            components,
        })
    }

    /// Merges components that sit at the same center with the same momentum.
    pub fn compacted(&self) -> Self {
        let mut out: Vec<GaussianComponent> = Vec::with_capacity(self.components.len());
        for c in &self.components {
            match out
                .iter_mut()
                .find(|o| o.center == c.center && o.momentum_center == c.momentum_center)
            {
                Some(o) => o.coeff += c.coeff,
                None => out.push(*c),
            }
        }
        GaussianPointerState {
            width: self.width,
            components: out,
        }
    }

    fn bilinear(&self, other: &GaussianPointerState, pick: impl Fn((Complex, Complex, Complex)) -> Complex) -> Complex {
        let mut acc = ZERO;
        for j in &self.components {
            for k in &other.components {
                acc += j.coeff.conj() * k.coeff * pick(matrix_elements(self.width, j, k));
            }
        }
        acc
    }

    /// `<self|other>`; both states must share the same width.
    pub fn inner(&self, other: &GaussianPointerState) -> Result<Complex> {
        if self.width != other.width {
            return Err(Error::InvalidWidth(other.width));
        }
        Ok(self.bilinear(other, |m| m.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.bilinear(self, |m| m.0).re.max(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `‖self − other‖`.
    pub fn distance(&self, other: &GaussianPointerState) -> Result<f64> {
        let cross = self.inner(other)?.re;
        Ok((self.norm_sqr() + other.norm_sqr() - 2.0 * cross).max(0.0).sqrt())
    }

    fn checked_norm_sqr(&self) -> Result<f64> {
        let n = self.norm_sqr();
        if n > 0.0 {
            Ok(n)
        } else {
            Err(Error::ZeroNorm)
        }
    }

    /// `<x> = <φ|x|φ> / <φ|φ>`.
    pub fn mean_position(&self) -> Result<f64> {
        let n = self.checked_norm_sqr()?;
        Ok(self.bilinear(self, |m| m.1).re / n)
    }

    /// `<P> = <φ|P|φ> / <φ|φ>` with `P = -i d/dx`.
    pub fn mean_momentum(&self) -> Result<f64> {
        let n = self.checked_norm_sqr()?;
        Ok(self.bilinear(self, |m| m.2).re / n)
    }

    pub fn amplitude(&self, x: f64) -> Complex {
        let s2 = self.width * self.width;
        let norm = (2.0 * PI * s2).powf(-0.25);
        self.components
            .iter()
            .map(|c| {
                let d = x - c.center;
                c.coeff * Complex::from_polar(norm * (-d * d / (4.0 * s2)).exp(), c.momentum_center * d)
            })
            .sum()
    }

    pub fn density(&self, x: f64) -> f64 {
        self.amplitude(x).norm_sqr()
    }

    /// Interval holding every component center widened by `COVERAGE_WIDTHS·σ`.
    pub fn support(&self) -> (f64, f64) {
        let lo = self.components.iter().map(|c| c.center).fold(f64::INFINITY, f64::min);
        let hi = self.components.iter().map(|c| c.center).fold(f64::NEG_INFINITY, f64::max);
        let pad = COVERAGE_WIDTHS * self.width;
        if lo.is_finite() {
            (lo - pad, hi + pad)
        } else {
            (-pad, pad)
        }
    }

    /// Samples the wavefunction on `n_points` equally spaced points spanning
    /// `[xmin, xmax]` inclusive.
    pub fn to_grid(&self, xmin: f64, xmax: f64, n_points: usize) -> Result<GridPointerState> {
        let (need_min, need_max) = self.support();
        if !(xmin <= need_min && xmax >= need_max) {
            return Err(Error::DomainTooSmall {
                xmin,
                xmax,
                need_min,
                need_max,
            });
        }
        check_grid_shape(xmin, xmax, n_points)?;
        let dx = (xmax - xmin) / (n_points - 1) as f64;
        let amps = (0..n_points).map(|i| self.amplitude(xmin + i as f64 * dx)).collect();
        GridPointerState::new(xmin, xmax, amps)
    }
}

fn check_grid_shape(xmin: f64, xmax: f64, n_points: usize) -> Result<()> {
    if !n_points.is_power_of_two() || n_points < 2 {
        return Err(Error::InvalidGrid(format!("{n_points} points is not a power of two >= 2")));
    }
    if !(xmin.is_finite() && xmax.is_finite() && xmax > xmin) {
        return Err(Error::InvalidGrid(format!("bad domain [{xmin}, {xmax}]")));
    }
    Ok(())
}

/// Pointer wavefunction sampled on a uniform grid, endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointerState {
    xmin: f64,
    xmax: f64,
    amps: Vec<Complex>,
}

impl GridPointerState {
    pub fn new(xmin: f64, xmax: f64, amps: Vec<Complex>) -> Result<Self> {
        check_grid_shape(xmin, xmax, amps.len())?;
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite("grid amplitudes"));
        }
        let peak = amps.iter().map(|a| a.norm_sqr()).fold(0.0, f64::max);
        let edge = amps[0].norm_sqr().max(amps[amps.len() - 1].norm_sqr());
        if peak > 0.0 && edge >= WRAP_GUARD * peak {
            return Err(Error::InvalidGrid(format!(
                "boundary density {edge:e} is not below {WRAP_GUARD:e} of the peak {peak:e}"
            )));
        }
        Ok(GridPointerState { xmin, xmax, amps })
    }

    pub fn n_points(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[Complex] {
        &self.amps
    }

    pub fn spacing(&self) -> f64 {
        (self.xmax - self.xmin) / (self.amps.len() - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.xmin + i as f64 * self.spacing()
    }

    /// Trapezoidal `∫|φ|² dx`.
    pub fn norm_sqr(&self) -> f64 {
        let n = self.amps.len();
        let inner: f64 = self.amps.iter().map(|a| a.norm_sqr()).sum();
        let ends = 0.5 * (self.amps[0].norm_sqr() + self.amps[n - 1].norm_sqr());
        (inner - ends) * self.spacing()
    }

    pub fn argmax(&self) -> usize {
        self.amps
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, a)| {
                if a.norm_sqr() > best.1 {
                    (i, a.norm_sqr())
                } else {
                    best
                }
            })
            .0
    }

    /// CSV with header `x,re,im,prob_density`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,re,im,prob_density")?;
        for (i, a) in self.amps.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                crate::report::fmt_g17(self.x(i)),
                crate::report::fmt_g17(a.re),
                crate::report::fmt_g17(a.im),
                crate::report::fmt_g17(a.norm_sqr())
            )?;
        }
        Ok(())
    }
}
