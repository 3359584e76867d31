//! Central finite-difference comparison for reverse-mode gradients.

use super::{Gradients, ParamSet};
use crate::Result;

/// Magnitudes below this are compared absolutely rather than relatively.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Compares `analytic` against `(f(p + eps) - f(p - eps)) / 2 eps` for every
/// entry of every trainable parameter (at most `limit` entries per parameter,
/// evenly strided, when given). Parameters are restored afterwards.
pub fn check_gradients<F>(
    params: &mut ParamSet,
    analytic: &Gradients,
    mut loss: F,
    eps: f64,
    limit: Option<usize>,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    let mut report = GradCheckReport::default();
    let ids: Vec<_> = params.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    for id in ids {
        let n = params.get(id).tensor.numel();
        let stride = limit.map_or(1, |l| n.div_ceil(l.max(1)).max(1));
        for k in (0..n).step_by(stride) {
            let orig = params.get(id).tensor.data()[k];
            params.get_mut(id).tensor.data_mut()[k] = orig + eps;
            let up = loss(params)?;
            params.get_mut(id).tensor.data_mut()[k] = orig - eps;
            let down = loss(params)?;
            params.get_mut(id).tensor.data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.get(id).map_or(0.0, |g| g.data()[k]);
            let e = rel_err(a, numeric);
            report.checked += 1;
            if e > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(e);
                if e >= report.max_rel_err {
                    report.worst = Some((params.get(id).name.clone(), k));
                }
            }
        }
    }
    Ok(report)
}
