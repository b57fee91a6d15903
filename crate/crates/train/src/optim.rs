use hadanet::Scalar;

/// `v ← momentum·v + grad`, then `param ← param − lr·v`.
pub fn sgd_momentum_step<S: Scalar>(param: &mut [S], velocity: &mut [S], grad: &[S], lr: S, momentum: S) {
    assert!(param.len() == velocity.len() && param.len() == grad.len(), "sgd operand lengths differ");
    for ((p, v), &g) in param.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

/// SGD with momentum over a fixed list of parameter vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd<S> {
    pub lr: S,
    pub momentum: S,
    velocity: Vec<Vec<S>>,
}

impl<S: Scalar> Sgd<S> {
    pub fn new(lr: S, momentum: S) -> Self {
        Self {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }

    /// Velocity buffers are created on the first call.
    pub fn step(&mut self, params: Vec<&mut Vec<S>>, grads: &[Vec<S>]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter vector");
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![S::zero(); p.len()]).collect();
        }
        for ((p, v), g) in params.into_iter().zip(&mut self.velocity).zip(grads) {
            sgd_momentum_step(p, v, g, self.lr, self.momentum);
        }
    }

    pub fn velocity(&self) -> &[Vec<S>] {
        &self.velocity
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_gradient_step() {
        let (mut p, mut v) = (vec![1.0f64, 2.0], vec![0.0; 2]);
        sgd_momentum_step(&mut p, &mut v, &[0.5, -1.0], 1.0, 0.0);
        assert_eq!(p, vec![0.5, 3.0]);
    }

    #[test]
    fn zero_grad_decays_velocity() {
        let (mut p, mut v) = (vec![1.0f64], vec![2.0]);
        sgd_momentum_step(&mut p, &mut v, &[0.0], 0.1, 0.9);
        assert!((v[0] - 1.8).abs() < 1e-15);
        assert!((p[0] - (1.0 - 0.18)).abs() < 1e-15);
    }

    #[test]
    fn two_steps_with_constant_gradient() {
        let g = 0.7f64;
        let (mut p, mut v) = (vec![0.0], vec![0.0]);
        for _ in 0..2 {
            sgd_momentum_step(&mut p, &mut v, &[g], 0.005, 0.9);
        }
        assert!((p[0] + 0.005 * (g + 1.9 * g)).abs() < 1e-15);
    }
}
