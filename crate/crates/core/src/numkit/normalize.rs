use super::matrix::{dot, norm};
use super::NumError;

/// Inputs with a smaller Euclidean norm have no usable direction.
pub const NORM_FLOOR: f64 = 1e-8;

/// Projects `v` onto the unit sphere.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>, NumError> {
    let n = norm(v);
    if !(n > NORM_FLOOR) {
        return Err(NumError::DegenerateNorm { norm: n });
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Vector-Jacobian product of [`l2_normalize`]: maps the gradient with
/// respect to the unit output `u` back to the raw input, `(I - u uᵀ) g / ‖v‖`.
pub fn l2_normalize_backward(unit: &[f64], input_norm: f64, grad_unit: &[f64]) -> Vec<f64> {
    let along = dot(unit, grad_unit);
    unit.iter()
        .zip(grad_unit)
        .map(|(u, g)| (g - u * along) / input_norm)
        .collect()
}
