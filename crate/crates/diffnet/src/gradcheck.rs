//! Central finite-difference verification of backward rules.

use crate::error::{DiffnetError, Result};
use crate::net::Net;
use crate::tensor::Tensor;

/// Central difference `(f(x+ε) − f(x−ε)) / 2ε`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, at: f64, eps: f64) -> f64 {
    (f(at + eps) - f(at - eps)) / (2.0 * eps)
}

/// Relative error with the `1e-12` floor used by every gradient check here.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-12);
    (analytic - numeric).abs() / denom
}

/// Fixed projection weights turning a network output into a scalar loss.
fn projection(len: usize) -> Vec<f64> {
    // Deterministic, sign-varying, never zero, and dyadic so the projection
    // itself adds no rounding.
    (0..len)
        .map(|k| (1 + (k * 5) % 8) as f64 / 8.0 * if k % 2 == 0 { 1.0 } else { -1.0 })
        .collect()
}

/// One evaluation of the projected loss: value, `Σ|c_k·y_k|`, relu pattern.
struct Probe {
    loss: f64,
    magnitude: f64,
    pattern: Vec<bool>,
}

fn scalar_loss(net: &Net, input: &Tensor, weights: &[f64]) -> Result<Probe> {
    let (y, pattern) = net.infer_with_pattern(input)?;
    let loss: f64 = y.data().iter().zip(weights).map(|(a, b)| a * b).sum();
    let magnitude: f64 = y.data().iter().zip(weights).map(|(a, b)| (a * b).abs()).sum();
    if !loss.is_finite() {
        return Err(DiffnetError::Numeric("non-finite loss during gradient check".into()));
    }
    Ok(Probe { loss, magnitude, pattern })
}

/// Roundoff bound of a difference quotient between two loss evaluations:
/// one unit roundoff of each evaluation's magnitude, over the step taken.
pub fn difference_resolution(magnitude_a: f64, magnitude_b: f64, step: f64) -> f64 {
    f64::EPSILON * (magnitude_a + magnitude_b) / step
}

/// Relative error after discounting the difference quotient's roundoff
/// bound: `max(|a − n| − r, 0) / max(|a|, |n|, 1e-12)`.
pub fn resolved_error(analytic: f64, numeric: f64, resolution: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-12);
    ((analytic - numeric).abs() - resolution).max(0.0) / denom
}

/// Compares backward-pass gradients of `L = Σ c_k·y_k` against central
/// differences for every scalar parameter and returns the maximum relative
/// error `|a − n| / max(|a|, |n|, 1e-12)`.
///
/// A central difference whose ±ε probes land on different sides of a relu
/// kink does not estimate the derivative at the base point. Such probes are
/// replaced by the one-sided difference on the side that stays in the base
/// region; parameters where both sides cross are counted and skipped.
pub fn finite_difference_check(net: &mut Net, input: &Tensor, eps: f64) -> Result<f64> {
    Ok(finite_difference_report(net, input, eps)?.max_relative_error)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_param: String,
    /// Largest [`resolved_error`]: the discrepancy left after removing the
    /// floating-point resolution of each difference quotient.
    pub max_resolved_error: f64,
    /// Parameters whose relative error exceeds 1e-4 while their absolute
    /// discrepancy is within the difference quotient's roundoff bound.
    pub below_resolution: usize,
    pub checked: usize,
    /// Parameters checked with a one-sided difference because one probe crossed a kink.
    pub one_sided: usize,
    /// Parameters whose probes crossed kinks on both sides.
    pub skipped: usize,
}

pub fn finite_difference_report(net: &mut Net, input: &Tensor, eps: f64) -> Result<GradCheckReport> {
    if !(eps > 0.0) {
        return Err(DiffnetError::Numeric(format!("step size must be positive, got {eps}")));
    }
    if !net.params().all_finite() {
        return Err(DiffnetError::Numeric("non-finite parameters".into()));
    }
    let out = net.forward(input)?;
    let weights = projection(out.data().len());
    let upstream = Tensor::new(out.shape().to_vec(), weights.clone())?;
    net.backward_params(&upstream)?;

    let base = scalar_loss(net, input, &weights)?;
    let mut report = GradCheckReport::empty();
    for pi in 0..net.params().len() {
        let (name, p) = net.params().by_index(pi);
        let name = name.to_string();
        let analytic = p.grad().to_vec();
        for (j, a) in analytic.iter().enumerate() {
            let orig = net.params().by_index(pi).1.value()[j];
            let (hi, lo) = (orig + eps, orig - eps);
            net.params_mut().by_index_mut(pi).value_mut()[j] = hi;
            let plus = scalar_loss(net, input, &weights)?;
            net.params_mut().by_index_mut(pi).value_mut()[j] = lo;
            let minus = scalar_loss(net, input, &weights)?;
            net.params_mut().by_index_mut(pi).value_mut()[j] = orig;
            let Some((numeric, resolution)) = kink_aware_difference(&base, &plus, &minus, hi - orig, orig - lo, &mut report)
            else {
                continue;
            };
            report.record(&name, j, *a, numeric, resolution);
        }
    }
    Ok(report)
}

impl GradCheckReport {
    pub fn empty() -> Self {
        Self {
            max_relative_error: 0.0,
            worst_param: String::new(),
            max_resolved_error: 0.0,
            below_resolution: 0,
            checked: 0,
            one_sided: 0,
            skipped: 0,
        }
    }

    /// Folds one parameter's comparison into the report.
    pub fn record(&mut self, name: &str, index: usize, analytic: f64, numeric: f64, resolution: f64) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if err > 1e-4 && (analytic - numeric).abs() <= resolution {
            self.below_resolution += 1;
        }
        self.max_resolved_error = self.max_resolved_error.max(resolved_error(analytic, numeric, resolution));
        if err > self.max_relative_error {
            self.max_relative_error = err;
            self.worst_param = format!("{name}[{index}]");
        }
    }

    /// Combines reports of independent checks.
    pub fn merge(&mut self, other: &GradCheckReport, tag: &str) {
        if other.max_relative_error > self.max_relative_error || self.worst_param.is_empty() {
            self.max_relative_error = other.max_relative_error;
            self.worst_param = format!("{tag}{}", other.worst_param);
        }
        self.max_resolved_error = self.max_resolved_error.max(other.max_resolved_error);
        self.below_resolution += other.below_resolution;
        self.checked += other.checked;
        self.one_sided += other.one_sided;
        self.skipped += other.skipped;
    }
}

/// Difference quotient and its roundoff bound, falling back to a one-sided
/// quotient when one probe changes the relu pattern; `None` when both do.
/// Steps are the ones actually taken, not the nominal ε.
fn kink_aware_difference(
    base: &Probe,
    plus: &Probe,
    minus: &Probe,
    up: f64,
    down: f64,
    report: &mut GradCheckReport,
) -> Option<(f64, f64)> {
    match (plus.pattern == base.pattern, minus.pattern == base.pattern) {
        (true, true) => Some((
            (plus.loss - minus.loss) / (up + down),
            difference_resolution(plus.magnitude, minus.magnitude, up + down),
        )),
        (true, false) => {
            report.one_sided += 1;
            Some(((plus.loss - base.loss) / up, difference_resolution(plus.magnitude, base.magnitude, up)))
        }
        (false, true) => {
            report.one_sided += 1;
            Some(((base.loss - minus.loss) / down, difference_resolution(base.magnitude, minus.magnitude, down)))
        }
        (false, false) => {
            report.skipped += 1;
            None
        }
    }
}
