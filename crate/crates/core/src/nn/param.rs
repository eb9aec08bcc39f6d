use rand::Rng as _;

use crate::linalg::Mat;
use crate::rng::Rng;

/// A named trainable tensor with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Mat,
    pub grad: Mat,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Mat) -> Self {
        let grad = Mat::zeros(value.rows(), value.cols());
        Param {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Param::new(name, Mat::zeros(rows, cols))
    }

    /// Glorot-uniform initialization for a `fan_in × fan_out` map.
    pub fn glorot(name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Param::new(name, Mat::from_vec(fan_in, fan_out, data))
    }

    pub fn numel(&self) -> usize {
        self.value.rows() * self.value.cols()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}
