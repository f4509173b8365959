use super::layers::{copy_parameters, Module};
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Finite-difference step for 32-bit checks.
pub const STEP: f32 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f32,
    /// `(parameter name, flat index)` of the worst entry.
    pub worst: Option<(String, usize)>,
    pub entries_checked: usize,
    pub tolerance: f32,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient of every parameter entry with central
/// finite differences computed in the model's own precision.
///
/// `forward(model, backprop)` must return the scalar loss; when `backprop`
/// is set it must also accumulate gradients into the model's parameters.
/// The forward has to be deterministic (no dropout).
///
/// The step is [`STEP`]. `f64` models use the five-point stencil, which
/// brings truncation error low enough for tolerances near 1e-5.
pub fn grad_check<T, M, F>(model: &mut M, mut forward: F, tolerance: f32) -> Result<GradCheckReport>
where
    T: Scalar,
    M: Module<T>,
    F: FnMut(&mut M, bool) -> Result<f64>,
{
    let analytic = analytic_gradients(model, &mut forward, tolerance)?;
    compare(&analytic, model, forward, T::FIVE_POINT_STENCIL, tolerance)
}

/// Like [`grad_check`], but the finite differences (step [`STEP`], five-point
/// stencil) are taken on `reference`, a higher-precision replica that
/// receives `model`'s parameter values.
///
/// In `f32`, rounding inside a deep forward pass leaves a loss noise floor
/// that swamps central differences for small gradient entries; evaluating
/// them in `f64` removes that floor while still checking the `f32` backward
/// pass. The wider stencil keeps truncation error from sharply curved layer
/// norms at tiny widths out of the comparison.
pub fn grad_check_mixed<M, F, R, G>(
    model: &mut M,
    mut forward: F,
    reference: &mut R,
    reference_forward: G,
    tolerance: f32,
) -> Result<GradCheckReport>
where
    M: Module<f32>,
    F: FnMut(&mut M, bool) -> Result<f64>,
    R: Module<f64>,
    G: FnMut(&mut R, bool) -> Result<f64>,
{
    let analytic = analytic_gradients(model, &mut forward, tolerance)?;
    copy_parameters(model, reference)?;
    compare(&analytic, reference, reference_forward, true, tolerance)
}

fn analytic_gradients<T, M, F>(model: &mut M, forward: &mut F, tolerance: f32) -> Result<Vec<Vec<f64>>>
where
    T: Scalar,
    M: Module<T>,
    F: FnMut(&mut M, bool) -> Result<f64>,
{
    if tolerance <= 0.0 {
        return Err(Error::Config("grad_check tolerance must be positive".into()));
    }
    model.zero_grad();
    let loss = forward(model, true)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let grads = model
        .parameters()
        .iter()
        .map(|p| p.grad.data().iter().map(|g| g.as_f64()).collect())
        .collect();
    model.zero_grad();
    Ok(grads)
}

fn compare<T, M, F>(
    analytic: &[Vec<f64>],
    model: &mut M,
    mut forward: F,
    five_point: bool,
    tolerance: f32,
) -> Result<GradCheckReport>
where
    T: Scalar,
    M: Module<T>,
    F: FnMut(&mut M, bool) -> Result<f64>,
{
    let h = STEP as f64;
    let mut worst = 0f64;
    let mut worst_at = None;
    let mut checked = 0;
    for (pi, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let original = model.parameters()[pi].value.data()[j];
            let mut at = |offset: f64| -> Result<f64> {
                set_entry(model, pi, j, original + T::from_f64(offset));
                let loss = forward(model, false)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss);
                }
                Ok(loss)
            };
            let numeric = if five_point {
                (8.0 * (at(h)? - at(-h)?) - (at(2.0 * h)? - at(-2.0 * h)?)) / (12.0 * h)
            } else {
                (at(h)? - at(-h)?) / (2.0 * h)
            };
            set_entry(model, pi, j, original);
            let err = relative_error(a, numeric);
            checked += 1;
            if err > worst || worst_at.is_none() {
                worst = err;
                worst_at = Some((model.parameters()[pi].name.clone(), j));
            }
        }
    }
    Ok(GradCheckReport {
        max_relative_error: worst as f32,
        worst: worst_at,
        entries_checked: checked,
        tolerance,
    })
}

fn set_entry<T: Scalar, M: Module<T>>(model: &mut M, param: usize, index: usize, value: T) {
    model.parameters_mut()[param].value.data_mut()[index] = value;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::layers::{cross_entropy, Linear, Parameter};
    use crate::neural::matrix::Matrix;
    use crate::neural::rng::RandomSource;

    struct Single(Parameter);

    impl Module for Single {
        fn parameters(&self) -> Vec<&Parameter> {
            vec![&self.0]
        }
        fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn identity_loss_has_unit_gradient() {
        let mut m = Single(Parameter::new("x", Matrix::filled(1, 1, 0.7)));
        let report = grad_check(
            &mut m,
            |m, backprop| {
                if backprop {
                    m.0.grad.set(0, 0, 1.0);
                }
                Ok(m.0.value.get(0, 0) as f64)
            },
            1e-2,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-3, "{report:?}");
    }

    #[test]
    fn linear_cross_entropy_matches_finite_differences() {
        let mut rng = RandomSource::new(11);
        let mut layer = Linear::new("lin", 4, 3, &mut rng);
        let mut x = Matrix::zeros(5, 4);
        x.data_mut().iter_mut().for_each(|v| *v = rng.normal());
        let targets = [0, 2, 1, 1, 0];
        let report = grad_check(
            &mut layer,
            |layer, backprop| {
                let logits = layer.forward(&x)?;
                let (loss, dlogits) = cross_entropy(&logits, &targets, &[true; 5])?;
                if backprop {
                    layer.backward(&x, &dlogits)?;
                }
                Ok(loss)
            },
            1e-2,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut m = Single(Parameter::new("x", Matrix::filled(1, 1, 0.0)));
        let err = grad_check(&mut m, |_, _| Ok(f64::NAN), 1e-2).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss));
    }
}
