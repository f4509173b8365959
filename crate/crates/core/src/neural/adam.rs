use super::layers::{Module, Parameter};
use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const BETA1: f32 = 0.9;
pub const BETA2: f32 = 0.999;
pub const EPSILON: f32 = 1e-8;

/// Adam moments for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Matrix,
    pub v: Matrix,
}

/// Adam optimizer state over a fixed, ordered parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub t: u64,
    moments: Vec<Moments>,
}

impl AdamState {
    pub fn new(lr: f32, params: &[&Parameter]) -> Self {
        AdamState {
            lr,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            t: 0,
            moments: params
                .iter()
                .map(|p| Moments {
                    m: Matrix::zeros(p.value.rows(), p.value.cols()),
                    v: Matrix::zeros(p.value.rows(), p.value.cols()),
                })
                .collect(),
        }
    }

    pub fn for_module(lr: f32, module: &impl Module) -> Self {
        AdamState::new(lr, &module.parameters())
    }

    pub fn moments(&self) -> &[Moments] {
        &self.moments
    }

    /// Applies one bias-corrected Adam update and zeroes the gradients.
    ///
    /// `frozen` parameters (by index) keep their value but still get their
    /// gradients cleared.
    pub fn step_masked(&mut self, params: Vec<&mut Parameter>, frozen: &[bool]) -> Result<()> {
        if params.len() != self.moments.len() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                left: (params.len(), 0),
                right: (self.moments.len(), 0),
            });
        }
        self.t += 1;
        let bc1 = 1.0 - (self.beta1 as f64).powi(self.t as i32);
        let bc2 = 1.0 - (self.beta2 as f64).powi(self.t as i32);
        let step = (self.lr as f64 / bc1) as f32;
        let bc2_sqrt = bc2.sqrt() as f32;
        for (i, (p, mom)) in params.into_iter().zip(&mut self.moments).enumerate() {
            if p.value.shape() != mom.m.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    left: p.value.shape(),
                    right: mom.m.shape(),
                });
            }
            if frozen.get(i).copied().unwrap_or(false) {
                p.zero_grad();
                continue;
            }
            let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
            let grads = p.grad.data();
            let values = p.value.data_mut();
            let ms = mom.m.data_mut();
            let vs = mom.v.data_mut();
            for j in 0..values.len() {
                let g = grads[j];
                if g == 0.0 && ms[j] == 0.0 && vs[j] == 0.0 {
                    continue;
                }
                ms[j] = b1 * ms[j] + (1.0 - b1) * g;
                vs[j] = b2 * vs[j] + (1.0 - b2) * g * g;
                values[j] -= step * ms[j] / (vs[j].sqrt() / bc2_sqrt + eps);
            }
            p.zero_grad();
        }
        Ok(())
    }

    pub fn step(&mut self, params: Vec<&mut Parameter>) -> Result<()> {
        self.step_masked(params, &[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(value: f32, grad: f32) -> Parameter {
        let mut p = Parameter::new("w", Matrix::filled(1, 1, value));
        p.grad.set(0, 0, grad);
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = scalar(0.25, 0.0);
        let mut adam = AdamState::new(0.1, &[&p]);
        adam.step(vec![&mut p]).unwrap();
        assert_eq!(p.value.get(0, 0), 0.25);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = 1, v̂ = 1 at t = 1, so the update is lr / (1 + eps).
        let mut p = scalar(1.0, 1.0);
        let mut adam = AdamState::new(0.1, &[&p]);
        adam.step(vec![&mut p]).unwrap();
        assert!((p.value.get(0, 0) - 0.9).abs() < 1e-6);
        assert_eq!(p.grad.get(0, 0), 0.0);
    }

    #[test]
    fn frozen_parameters_keep_values() {
        let mut a = scalar(1.0, 1.0);
        let mut b = scalar(1.0, 1.0);
        let mut adam = AdamState::new(0.1, &[&a, &b]);
        adam.step_masked(vec![&mut a, &mut b], &[true, false]).unwrap();
        assert_eq!(a.value.get(0, 0), 1.0);
        assert_eq!(a.grad.get(0, 0), 0.0);
        assert!(b.value.get(0, 0) < 1.0);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut p = scalar(0.5, 0.0);
            let mut adam = AdamState::new(0.01, &[&p]);
            for i in 0..2 {
                p.grad.set(0, 0, 0.3 * (i as f32 + 1.0));
                adam.step(vec![&mut p]).unwrap();
            }
            p.value.get(0, 0).to_bits()
        };
        assert_eq!(run(), run());
    }
}
