use crate::error::{AdeError, Result};

/// Outcome of a central-difference gradient comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max over parameters of |analytic − numeric| / max(1, |analytic|)
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// Compares the analytic gradient returned by `op` at `point` against central
/// differences of its scalar output.
///
/// `op` maps a flat parameter vector to `(value, gradient)`.
pub fn finite_diff_check<F>(mut op: F, point: &[f64], step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    if !(1e-6..=1e-4).contains(&step) {
        return Err(AdeError::config(format!(
            "finite-difference step {step} outside [1e-6, 1e-4]"
        )));
    }
    let (_, analytic) = op(point);
    if analytic.len() != point.len() {
        return Err(AdeError::shape(format!(
            "gradient has {} entries for {} parameters",
            analytic.len(),
            point.len()
        )));
    }
    if let Some(index) = analytic.iter().position(|g| !g.is_finite()) {
        return Err(AdeError::GradCheck {
            index,
            detail: format!("analytic gradient is {}", analytic[index]),
        });
    }

    let mut probe = point.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        tolerance,
    };
    for i in 0..point.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = op(&probe).0;
        probe[i] = orig - step;
        let minus = op(&probe).0;
        probe[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        if !numeric.is_finite() {
            return Err(AdeError::GradCheck {
                index: i,
                detail: format!("numeric gradient is {numeric}"),
            });
        }
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(1.0);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    Ok(report)
}
