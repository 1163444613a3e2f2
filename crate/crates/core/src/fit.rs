//! Power-law fits used to check convergence orders.

/// Slack allowed when comparing a fitted exponent against an asymptotic
/// order. A quantity that is exactly `C·g^n·(1 − k·g²)` fits slightly below
/// `n` on any finite grid.
pub const ORDER_TOLERANCE: f64 = 0.01;

/// Least-squares slope of `ln y` against `ln x`.
///
/// Returns `None` when fewer than two points are given or any value is not
/// strictly positive and finite.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let ok = |v: &f64| v.is_finite() && *v > 0.0;
    if !xs.iter().all(ok) || !ys.iter().all(ok) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Outcome of a convergence-order check on a sequence of errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderCheck {
    /// Every error is at or below the floor: the quantity vanishes identically.
    Vanishing,
    /// Fitted exponent.
    Slope(f64),
    /// Some but not all errors are below the floor, so no fit is possible.
    Degenerate,
}

impl OrderCheck {
    pub fn at_least(&self, order: f64) -> bool {
        match self {
            OrderCheck::Vanishing => true,
            OrderCheck::Slope(s) => *s >= order - ORDER_TOLERANCE,
            OrderCheck::Degenerate => false,
        }
    }
}

/// Fits the convergence order of `errors` against `params`, treating errors
/// at or below `floor` as exact zeros.
pub fn convergence_order(params: &[f64], errors: &[f64], floor: f64) -> OrderCheck {
    if errors.iter().all(|e| e.abs() <= floor) {
        return OrderCheck::Vanishing;
    }
    match loglog_slope(params, errors) {
        Some(s) if errors.iter().all(|e| e.abs() > floor) => OrderCheck::Slope(s),
        _ => OrderCheck::Degenerate,
    }
}
