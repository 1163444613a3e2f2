//! Finite-statistics emulation of the experiments.
//!
//! Trial `i` of a run with seed `s` draws from a ChaCha8 generator seeded
//! with `s` on stream `i`, so every trial's outcome is fixed by `(s, i)`
//! alone and the batch does not depend on how trials are spread over
//! threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neutron::{
    infer_projector_weak_value, infer_spin_weak_value_modulus, intensity_absorber, intensity_magnetic,
    AbsorberConfig, MagneticConfig,
};
use crate::pointer::GaussianPointerState;
use crate::report::{csv_string, Cell};
use crate::qcc;
use crate::weakmeas::{couple_and_postselect, weak_value, Observable, PrePostContext};

/// Points in the density tabulation used for inverse-CDF sampling.
pub const TABULATION_POINTS: usize = 4096;

fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Inverse-CDF sampler over a tabulated pointer density, linear between
/// tabulation points.
#[derive(Debug, Clone)]
pub struct PositionSampler {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl PositionSampler {
    /// Tabulates `|φ(x)|²` on `TABULATION_POINTS` points across
    /// [`GaussianPointerState::support`].
    pub fn new(state: &GaussianPointerState) -> Result<Self> {
        let (lo, hi) = state.support();
        let n = TABULATION_POINTS;
        let dx = (hi - lo) / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|i| lo + i as f64 * dx).collect();
        let dens: Vec<f64> = xs.iter().map(|&x| state.density(x)).collect();
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in dens.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * dx;
            cdf.push(acc);
        }
        if !(acc > 0.0 && acc.is_finite()) {
            return Err(Error::ZeroNorm);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Ok(PositionSampler { xs, cdf })
    }

    /// Maps `u ∈ [0, 1)` to a position.
    pub fn sample(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        if c1 > c0 {
            x0 + (u - c0) / (c1 - c0) * (x1 - x0)
        } else {
            x0
        }
    }

    pub fn range(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialBatch {
    pub n_total: u64,
    pub n_postselected: u64,
    /// Readouts of the postselected trials, in trial order.
    pub positions: Vec<f64>,
    /// Trial index of each entry of `positions`.
    pub postselected_indices: Vec<u64>,
    pub seed: u64,
}

/// Runs `n` independent trials: couple, postselect with the exact coupled
/// probability, and on success read the pointer position.
pub fn sample_trials(
    ctx: &PrePostContext,
    a: &Observable,
    phi0: &GaussianPointerState,
    g: f64,
    n: u64,
    seed: u64,
) -> Result<TrialBatch> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            field: "n".into(),
            reason: "at least one trial is required".into(),
        });
    }
    let coupled = couple_and_postselect(ctx, a, phi0, g)?;
    let p = coupled.postselect_prob.min(1.0);
    let sampler = if p > 0.0 {
        Some(PositionSampler::new(&coupled.pointer_final)?)
    } else {
        None
    };

    let outcomes: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sampler = sampler.as_ref()?;
            let mut rng = trial_rng(seed, i);
            let u_post: f64 = rng.random();
            let u_pos: f64 = rng.random();
            (u_post < p).then(|| sampler.sample(u_pos))
        })
        .collect();

    let mut positions = Vec::new();
    let mut indices = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        if let Some(x) = o {
            positions.push(x);
            indices.push(i as u64);
        }
    }
    Ok(TrialBatch {
        n_total: n,
        n_postselected: positions.len() as u64,
        positions,
        postselected_indices: indices,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorReport {
    pub mean_shift: f64,
    pub std_error: f64,
    pub estimated_wv_re: f64,
    pub postselect_rate: f64,
    pub n_total: u64,
    pub n_postselected: u64,
}

/// `Re(A^w) ≈ (mean readout − <x>_0) / g` with its standard error.
pub fn estimate_weak_value(batch: &TrialBatch, phi0: &GaussianPointerState, g: f64) -> Result<EstimatorReport> {
    if g == 0.0 {
        return Err(Error::ZeroCoupling);
    }
    let k = batch.positions.len();
    if k < 2 {
        return Err(Error::InsufficientStatistics(k));
    }
    let kf = k as f64;
    let mean = batch.positions.iter().sum::<f64>() / kf;
    let var = batch.positions.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (kf - 1.0);
    let mean_shift = mean - phi0.mean_position()?;
    Ok(EstimatorReport {
        mean_shift,
        std_error: var.sqrt() / kf.sqrt() / g.abs(),
        estimated_wv_re: mean_shift / g,
        postselect_rate: batch.n_postselected as f64 / batch.n_total as f64,
        n_total: batch.n_total,
        n_postselected: batch.n_postselected,
    })
}

pub const BATCH_HEADER: [&str; 3] = ["trial_index", "postselected", "position"];

/// One row per trial; `position` is empty for rejected trials.
pub fn batch_csv(batch: &TrialBatch) -> String {
    let mut rows = Vec::with_capacity(batch.n_total as usize);
    let mut next = batch.postselected_indices.iter().zip(&batch.positions).peekable();
    for i in 0..batch.n_total {
        match next.peek() {
            Some((&j, &x)) if j == i => {
                rows.push(vec![Cell::Int(i), Cell::Int(1), Cell::Float(x)]);
                next.next();
            }
            _ => rows.push(vec![Cell::Int(i), Cell::Int(0), Cell::Empty]),
        }
    }
    csv_string(&BATCH_HEADER, &rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntensityScenario {
    Absorber(AbsorberConfig),
    Magnetic(MagneticConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntensityCounts {
    pub n: u64,
    pub seed: u64,
    pub p_reference: f64,
    pub p_perturbed: f64,
    pub count_reference: u64,
    pub count_perturbed: u64,
    /// `count_perturbed / count_reference`, absent without reference counts.
    pub ratio: Option<f64>,
    /// Delta-method standard error of `ratio`.
    pub ratio_std_error: Option<f64>,
    /// Pooled two-proportion z statistic of perturbed against reference.
    pub z_two_proportion: Option<f64>,
    /// Weak value inferred from `ratio` as in [`crate::neutron`].
    pub inferred_weak_value: Option<f64>,
}

/// `n` reference and `n` perturbed detection attempts, each a Bernoulli
/// trial with the exact postselected intensity.
pub fn sample_intensity_experiment(scenario: &IntensityScenario, n: u64, seed: u64) -> Result<IntensityCounts> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            field: "n".into(),
            reason: "at least one trial is required".into(),
        });
    }
    let exact = match scenario {
        IntensityScenario::Absorber(c) => intensity_absorber(c)?,
        IntensityScenario::Magnetic(c) => intensity_magnetic(c)?,
    };
    let (p_ref, p_pert) = (exact.i0, exact.i_perturbed);
    let (count_ref, count_pert) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let r: f64 = rng.random();
            let q: f64 = rng.random();
            ((r < p_ref) as u64, (q < p_pert) as u64)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    let nf = n as f64;
    let (ph_ref, ph_pert) = (count_ref as f64 / nf, count_pert as f64 / nf);
    let ratio = (count_ref > 0).then(|| count_pert as f64 / count_ref as f64);
    let ratio_std_error = ratio.and_then(|r| {
        (count_pert > 0).then(|| r * ((1.0 - ph_pert) / count_pert as f64 + (1.0 - ph_ref) / count_ref as f64).sqrt())
    });
    let pooled = 0.5 * (ph_ref + ph_pert);
    let denom = (pooled * (1.0 - pooled) * 2.0 / nf).sqrt();
    let z = (denom > 0.0).then(|| (ph_pert - ph_ref) / denom);
    let inferred = ratio.and_then(|r| match scenario {
        IntensityScenario::Absorber(c) if c.m > 0.0 => infer_projector_weak_value(c.arm, c.m, r).ok(),
        IntensityScenario::Magnetic(c) if c.alpha != 0.0 => {
            let pi = qcc::observable(c.arm, qcc::ArmObservable::Projector);
            let pi_w = weak_value(&qcc::build_prepost(), &pi).ok()?.re;
            infer_spin_weak_value_modulus(c.arm, c.alpha, r, pi_w).ok()
        }
        _ => None,
    });
    Ok(IntensityCounts {
        n,
        seed,
        p_reference: p_ref,
        p_perturbed: p_pert,
        count_reference: count_ref,
        count_perturbed: count_pert,
        ratio,
        ratio_std_error,
        z_two_proportion: z,
        inferred_weak_value: inferred,
    })
}
