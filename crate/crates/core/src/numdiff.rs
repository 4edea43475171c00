//! Central finite differences with the step policy shared by every FD path.

use crate::error::Result;

/// Step for first derivatives: `cbrt(ε)·max(1, |x|)`.
pub fn first_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// Step for second derivatives taken as differences of differences: `ε^¼·max(1, |x|)`.
pub fn second_step(x: f64) -> f64 {
    f64::EPSILON.powf(0.25) * x.abs().max(1.0)
}

/// Jacobian of `f` with respect to `y`, layout `[component][q]`.
///
/// `step` maps a coordinate value to the step used for it.
pub fn jacobian<F>(y: &[f64], step: fn(f64) -> f64, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = y.len();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut probe = y.to_vec();
    for q in 0..n {
        let h = step(y[q]);
        probe[q] = y[q] + h;
        let up = f(&probe)?;
        let hp = probe[q] - y[q];
        probe[q] = y[q] - h;
        let down = f(&probe)?;
        let hm = y[q] - probe[q];
        probe[q] = y[q];
        cols.push(up.iter().zip(&down).map(|(a, b)| (a - b) / (hp + hm)).collect());
    }
    let m = cols.first().map_or(0, Vec::len);
    let mut out = vec![0.0; m * n];
    for (q, col) in cols.iter().enumerate() {
        for (c, d) in col.iter().enumerate() {
            out[c * n + q] = *d;
        }
    }
    Ok(out)
}
