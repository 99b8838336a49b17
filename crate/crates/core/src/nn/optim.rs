use crate::autodiff::Tensor;

/// A gradient entry was NaN or infinite; no parameter was touched.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NonFiniteGradient;

/// SGD with heavy-ball momentum: `v ← μ·v + g`, `p ← p − lr·v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<(), NonFiniteGradient> {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        if grads.iter().any(|g| !g.all_finite()) {
            return Err(NonFiniteGradient);
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            assert_eq!(p.shape(), g.shape(), "gradient shape must match its parameter");
            for ((pv, gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vv = self.momentum * *vv + gv;
                *pv -= self.lr * *vv;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn plain_step() {
        let mut p = Tensor::scalar(1.0);
        let g = Tensor::scalar(2.0);
        Sgd::new(0.1, 0.0).step(&mut [&mut p], &[&g]).unwrap();
        assert_relative_eq!(p.item(), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::vector(vec![0.3, -1.0]);
        let g = Tensor::zeros(&[2]);
        let mut opt = Sgd::new(0.5, 0.9);
        opt.step(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(p.data(), &[0.3, -1.0]);
    }

    #[test]
    fn two_momentum_steps() {
        // v1 = g1 = 1, p1 = 1 - 0.1·1 = 0.9
        // v2 = 0.9·1 + 0.5 = 1.4, p2 = 0.9 - 0.1·1.4 = 0.76
        let mut p = Tensor::scalar(1.0);
        let mut opt = Sgd::new(0.1, 0.9);
        opt.step(&mut [&mut p], &[&Tensor::scalar(1.0)]).unwrap();
        assert_relative_eq!(p.item(), 0.9, epsilon = 1e-15);
        opt.step(&mut [&mut p], &[&Tensor::scalar(0.5)]).unwrap();
        assert_relative_eq!(p.item(), 0.76, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_refused() {
        let mut p = Tensor::scalar(1.0);
        let g = Tensor::scalar(f64::NAN);
        assert_eq!(Sgd::new(0.1, 0.0).step(&mut [&mut p], &[&g]), Err(NonFiniteGradient));
        assert_eq!(p.item(), 1.0);
    }
}
