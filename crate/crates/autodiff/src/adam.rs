use crate::error::{AutodiffError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// What to do when a gradient contains NaN or infinity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NonFinitePolicy {
    /// Leave parameters and moments untouched and report `Ok(false)`.
    #[default]
    Skip,
    Fail,
}

/// Adam with bias correction. One instance per parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first: Vec<Tensor<T>>,
    pub second: Vec<Tensor<T>>,
    pub policy: NonFinitePolicy,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64, shapes: &[[usize; 2]]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: shapes.iter().map(|s| Tensor::zeros(s[0], s[1])).collect(),
            second: shapes.iter().map(|s| Tensor::zeros(s[0], s[1])).collect(),
            policy: NonFinitePolicy::Skip,
        }
    }

    pub fn for_params(lr: f64, params: &[&Tensor<T>]) -> Self {
        let shapes: Vec<_> = params.iter().map(|p| p.shape()).collect();
        Self::new(lr, &shapes)
    }

    /// Apply one update. Missing gradients count as zero. Returns `false` when
    /// the step was skipped because of a non-finite gradient.
    pub fn update(&mut self, params: &mut [&mut Tensor<T>], grads: &[Option<&Tensor<T>>]) -> Result<bool> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(AutodiffError::InvalidArgument {
                op: "adam",
                msg: format!(
                    "{} params / {} grads for {} moment slots",
                    params.len(),
                    grads.len(),
                    self.first.len()
                ),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.first[i].shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "adam",
                    lhs: p.shape(),
                    rhs: self.first[i].shape(),
                });
            }
            if let Some(g) = g {
                if g.shape() != p.shape() {
                    return Err(AutodiffError::ShapeMismatch {
                        op: "adam",
                        lhs: g.shape(),
                        rhs: p.shape(),
                    });
                }
                if !g.all_finite() {
                    return match self.policy {
                        NonFinitePolicy::Skip => {
                            log::warn!("adam: non-finite gradient in slot {i}, step skipped");
                            Ok(false)
                        }
                        NonFinitePolicy::Fail => Err(AutodiffError::NonFinite(format!("gradient slot {i}"))),
                    };
                }
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::c(self.beta1), T::c(self.beta2));
        let c1 = T::c(1.0 - self.beta1.powi(t));
        let c2 = T::c(1.0 - self.beta2.powi(t));
        let lr = T::c(self.lr);
        let eps = T::c(self.eps);
        let one = T::one();
        for (i, p) in params.iter_mut().enumerate() {
            let Some(g) = grads[i] else {
                // zero gradient: moments decay, parameters move only by the decayed momentum
                let m = self.first[i].data_mut();
                let v = self.second[i].data_mut();
                for ((x, mi), vi) in p.data_mut().iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi *= b1;
                    *vi *= b2;
                    let mhat = *mi / c1;
                    let vhat = *vi / c2;
                    if *mi != T::zero() {
                        *x -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
                continue;
            };
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((x, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *x -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Tensor::<f64>::from_f64(1, 3, &[1.0, -2.0, 0.5]).unwrap();
        let g = Tensor::from_f64(1, 3, &[0.7, -3.0, 1e-3]).unwrap();
        let mut adam = Adam::for_params(1e-3, &[&p]);
        adam.update(&mut [&mut p], &[Some(&g)]).unwrap();
        // first step: mhat = g, vhat = g^2, so the move is lr * g / (|g| + eps)
        let expect = [1.0 - 1e-3 * 0.7 / (0.7 + 1e-8), -2.0 + 1e-3 * 3.0 / (3.0 + 1e-8), 0.5 - 1e-3 * 1e-3 / (1e-3 + 1e-8)];
        for (a, b) in p.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::<f64>::from_f64(1, 2, &[1.0, 2.0]).unwrap();
        let before = p.clone();
        let g = Tensor::zeros(1, 2);
        let mut adam = Adam::for_params(1e-2, &[&p]);
        adam.update(&mut [&mut p], &[Some(&g)]).unwrap();
        adam.update(&mut [&mut p], &[None]).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.step, 2);
    }

    #[test]
    fn non_finite_gradient_policy() {
        let mut p = Tensor::<f64>::from_f64(1, 2, &[1.0, 2.0]).unwrap();
        let before = p.clone();
        let g = Tensor::from_f64(1, 2, &[f64::NAN, 1.0]).unwrap();
        let mut adam = Adam::for_params(1e-2, &[&p]);
        assert!(!adam.update(&mut [&mut p], &[Some(&g)]).unwrap());
        assert_eq!(p, before);
        assert_eq!(adam.step, 0);
        adam.policy = NonFinitePolicy::Fail;
        assert!(matches!(adam.update(&mut [&mut p], &[Some(&g)]), Err(AutodiffError::NonFinite(_))));
    }
}
