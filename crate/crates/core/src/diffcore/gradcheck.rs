use super::params::NetworkParams;
use crate::Result;

/// Per-parameter outcome of a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// (tensor name, max relative error over its elements)
    pub per_param: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_param.iter().map(|&(_, e)| e).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error() < tolerance
    }
}

/// Compares analytic gradients against central finite differences in f64.
///
/// `loss_fn` must be a deterministic function of the parameters. `analytic`
/// holds one gradient vector per parameter entry, in order.
pub fn grad_check(
    params: &NetworkParams<f64>,
    mut loss_fn: impl FnMut(&NetworkParams<f64>) -> Result<f64>,
    analytic: &[Vec<f64>],
    h: f64,
) -> Result<GradCheckReport> {
    let mut work = params.clone();
    let mut per_param = Vec::with_capacity(params.len());
    for idx in 0..params.len() {
        let name = params.entries()[idx].0.clone();
        let n = params.entries()[idx].1.numel();
        let mut max_err = 0.0f64;
        for i in 0..n {
            let orig = work.entries()[idx].1.data()[i];
            work.entries_mut()[idx].1.data_mut()[i] = orig + h;
            let plus = loss_fn(&work)?;
            work.entries_mut()[idx].1.data_mut()[i] = orig - h;
            let minus = loss_fn(&work)?;
            work.entries_mut()[idx].1.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[idx][i];
            let err = (a - numeric).abs() / f64::max(1e-12, a.abs() + numeric.abs());
            max_err = max_err.max(err);
        }
        per_param.push((name, max_err));
    }
    Ok(GradCheckReport { per_param })
}
