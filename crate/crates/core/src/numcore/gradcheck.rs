use super::NumError;

/// Central-difference gradient of `f` at `theta`:
/// `(f(θ + h·e_k) − f(θ − h·e_k)) / 2h` for every coordinate `k`.
pub fn finite_diff_grad<F>(mut f: F, theta: &[f64], step: f64) -> Result<Vec<f64>, NumError>
where
    F: FnMut(&[f64]) -> Result<f64, NumError>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(NumError::InvalidStep(step));
    }
    let mut probe = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for k in 0..theta.len() {
        let original = probe[k];
        probe[k] = original + step;
        let up = f(&probe)?;
        probe[k] = original - step;
        let down = f(&probe)?;
        probe[k] = original;
        if !up.is_finite() || !down.is_finite() {
            return Err(NumError::NonFinite { what: format!("objective at coordinate {k}") });
        }
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}
