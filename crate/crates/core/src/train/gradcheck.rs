use crate::error::{shape_err, Error, Result};

/// Default central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Absolute floor of the relative-error denominator.
pub const GRADCHECK_FLOOR: f64 = 1e-8;

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR)
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn numeric_gradient<F>(mut f: F, point: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::Argument(format!("step must be positive, got {step}")));
    }
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let up = f(&x)?;
        x[i] = orig - step;
        let down = f(&x)?;
        x[i] = orig;
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::Numeric(format!("non-finite evaluation around coordinate {i}")));
        }
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Relative uncertainty of the numeric value at the worst coordinate:
    /// the larger of the disagreement between steps `h` and `2h` and the
    /// rounding floor `eps |f| / h`. When it is not well below the tolerance
    /// the finite differences cannot resolve that coordinate (rounding noise
    /// or curvature dominate a tiny derivative) and the point says nothing
    /// about the analytic gradient.
    pub oracle_spread: f64,
}

impl GradcheckReport {
    /// Whether the numeric oracle is an order of magnitude tighter than `tol`
    /// at the worst coordinate.
    pub fn oracle_resolves(&self, tol: f64) -> bool {
        self.oracle_spread < 0.1 * tol
    }
}

/// Compares an analytic gradient of `f` at `point` with central differences.
pub fn gradcheck<F>(f: F, analytic: &[f64], point: &[f64], step: f64) -> Result<GradcheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if analytic.len() != point.len() {
        return Err(shape_err!(
            "analytic gradient has {} entries for a {}-dimensional point",
            analytic.len(),
            point.len()
        ));
    }
    if analytic.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite analytic gradient".into()));
    }
    let mut f = f;
    let numeric = numeric_gradient(&mut f, point, step)?;
    let mut report = GradcheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: analytic.first().copied().unwrap_or(0.0),
        numeric: numeric.first().copied().unwrap_or(0.0),
        oracle_spread: 0.0,
    };
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let e = relative_error(a, n);
        if e > report.max_relative_error {
            report = GradcheckReport {
                max_relative_error: e,
                worst_index: i,
                analytic: a,
                numeric: n,
                oracle_spread: 0.0,
            };
        }
    }
    if !point.is_empty() {
        let i = report.worst_index;
        let mut x = point.to_vec();
        x[i] = point[i] + 2.0 * step;
        let up = f(&x)?;
        x[i] = point[i] - 2.0 * step;
        let down = f(&x)?;
        let coarse = (up - down) / (4.0 * step);
        let rounding = f64::EPSILON * up.abs().max(down.abs()) / step;
        let scale = report.numeric.abs().max(GRADCHECK_FLOOR);
        report.oracle_spread = relative_error(coarse, report.numeric).max(rounding / scale);
    }
    Ok(report)
}

/// [`gradcheck`] restricted to the listed coordinates (for large tensors).
pub fn gradcheck_coords<F>(
    mut f: F,
    analytic: &[f64],
    point: &[f64],
    coords: &[usize],
    step: f64,
) -> Result<GradcheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if analytic.len() != point.len() {
        return Err(shape_err!(
            "analytic gradient has {} entries for a {}-dimensional point",
            analytic.len(),
            point.len()
        ));
    }
    if let Some(&bad) = coords.iter().find(|&&i| i >= point.len()) {
        return Err(shape_err!("coordinate {bad} outside a {}-dimensional point", point.len()));
    }
    let mut x = point.to_vec();
    let sub_point: Vec<f64> = coords.iter().map(|&i| point[i]).collect();
    let sub_analytic: Vec<f64> = coords.iter().map(|&i| analytic[i]).collect();
    let mut report = gradcheck(
        |v: &[f64]| {
            for (&i, &vi) in coords.iter().zip(v) {
                x[i] = vi;
            }
            f(&x)
        },
        &sub_analytic,
        &sub_point,
        step,
    )?;
    report.worst_index = coords.get(report.worst_index).copied().unwrap_or(0);
    Ok(report)
}
