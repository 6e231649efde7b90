use super::{Graph, Tensor, TensorError, Var};

/// Relative errors are measured against `max(|analytic|, |numeric|, FLOOR)`
/// so coordinates with vanishing gradient are compared absolutely.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-4;

/// Compares reverse-mode gradients of `f` at `point` with central
/// differences of width `2 * step`, returning the largest relative error
/// over all coordinates.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64, TensorError>
where
    F: FnMut(&mut Graph, Var) -> Result<Var, TensorError>,
{
    let coords: Vec<usize> = (0..point.len()).collect();
    grad_check_coords(f, point, step, &coords)
}

/// [`grad_check`] restricted to the listed flat coordinates.
pub fn grad_check_coords<F>(mut f: F, point: &Tensor, step: f64, coords: &[usize]) -> Result<f64, TensorError>
where
    F: FnMut(&mut Graph, Var) -> Result<Var, TensorError>,
{
    if !(step > 0.0 && step <= 1e-2) {
        return Err(TensorError::InvalidArgument(format!("finite-difference step {step} outside (0, 1e-2]")));
    }
    let mut g = Graph::new();
    let x = g.param(point.clone());
    let y = f(&mut g, x)?;
    let grads = g.backward(y)?;
    let analytic = grads.get_or_zeros(x, point);

    let mut eval = |p: Tensor| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let x = g.param(p);
        let y = f(&mut g, x)?;
        if !g.value(y).is_scalar() {
            return Err(TensorError::NonScalarLoss { shape: g.shape(y).to_vec() });
        }
        Ok(g.value(y).item())
    };

    let mut worst: f64 = 0.0;
    for &i in coords {
        let mut plus = point.clone();
        plus.data_mut()[i] += step;
        let mut minus = point.clone();
        minus.data_mut()[i] -= step;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * step);
        let a = analytic.data()[i];
        let denom = a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
