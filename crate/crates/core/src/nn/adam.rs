use super::param::Param;
use crate::linalg::Mat;

/// Adam with bias correction; gradients are cleared after every step.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Parameters must be passed in the same order on every call.
    pub fn step(&mut self, params: &mut [&mut Param]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Mat::zeros(p.value.rows(), p.value.cols())).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter list changed between steps");
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(p.value.shape(), m.shape(), "moment shape for {}", p.name);
            let grads = p.grad.as_slice().to_vec();
            for (((x, g), mi), vi) in p
                .value
                .as_mut_slice()
                .iter_mut()
                .zip(&grads)
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                *x -= self.lr * (*mi / bc1) / ((*vi / bc2).sqrt() + self.eps);
            }
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Param::new("x", Mat::filled(1, 1, 2.0));
        p.grad = Mat::filled(1, 1, 1.0);
        let mut adam = Adam::new(0.1);
        adam.step(&mut [&mut p]);
        assert!((p.value[(0, 0)] - 1.9).abs() < 1e-7);
        assert_eq!(p.grad[(0, 0)], 0.0);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = Param::new("x", Mat::filled(2, 2, 0.3));
        let mut adam = Adam::new(0.1);
        adam.step(&mut [&mut p]);
        assert_eq!(p.value, Mat::filled(2, 2, 0.3));
    }
}
