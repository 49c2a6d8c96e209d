use super::params::{ParamId, ParamSet};
use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};

/// Outcome of a central-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index attaining the maximum.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Central differences at eps ~1e-4 carry about 1e-9 absolute error
/// (truncation near stationary points, plus rounding), so gradients smaller
/// than this are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

/// Relative error used by the check: `|a − b| / max(REL_ERROR_FLOOR, |a| + |b|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares reverse-mode gradients against central differences for every
/// scalar of the parameters in `ids`.
///
/// `build` records the loss on a fresh tape; it is re-run for each perturbed
/// point with the same tape seed, so dropout masks repeat exactly.
pub fn finite_diff_check<F>(
    params: &mut ParamSet,
    ids: &[ParamId],
    eps: f64,
    seed: u64,
    mut build: F,
) -> Result<FdReport>
where
    F: FnMut(&mut Tape<'_>) -> Result<NodeId>,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!("finite difference step must be > 0, got {eps}")));
    }
    let analytic = {
        let mut tape = Tape::new(params, seed);
        let loss = build(&mut tape)?;
        tape.backward(loss)?.into_params()
    };

    let mut eval = |params: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new(params, seed);
        let loss = build(&mut tape)?;
        Ok(tape.value(loss).item())
    };

    let mut report = FdReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for &id in ids {
        let cols = params.get(id).cols();
        for i in 0..params.get(id).len() {
            let orig = params.get(id).data()[i];
            params.get_mut(id).data_mut()[i] = orig + eps;
            let plus = eval(params);
            params.get_mut(id).data_mut()[i] = orig - eps;
            let minus = eval(params);
            params.get_mut(id).data_mut()[i] = orig;
            let (plus, minus) = (plus?, minus?);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFiniteCheck {
                    param: params.name(id).to_string(),
                    index: i,
                });
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let bp = analytic.get(id).map_or(0.0, |g| g.at(i, cols));
            let err = relative_error(bp, numeric);
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= report.max_rel_error {
                    report.worst = Some((params.name(id).to_string(), i));
                }
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
