use rand::seq::index::sample;
use serde::Serialize;

use super::param::Param;
use crate::error::Result;
use crate::rng;

/// A scalar loss over a fixed list of parameters.
pub trait Objective {
    fn n_params(&self) -> usize;
    fn param(&self, i: usize) -> &Param;
    fn param_mut(&mut self, i: usize) -> &mut Param;
    fn loss(&self) -> Result<f64>;
    /// Clears and fills every parameter's `grad`; returns the loss.
    fn backward(&mut self) -> Result<f64>;
}

pub const MAX_COORDS_PER_PARAM: usize = 50;
/// Differences below this are treated as agreement regardless of scale.
pub const GRAD_ATOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Central-difference comparison on up to 50 sampled coordinates per param.
pub fn finite_diff_check(
    obj: &mut impl Objective,
    step: f64,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    obj.backward()?;
    let analytic: Vec<_> = (0..obj.n_params()).map(|i| obj.param(i).grad.clone()).collect();
    let mut rng = rng::seeded(seed);
    let mut params = Vec::with_capacity(obj.n_params());
    for (pi, grad) in analytic.iter().enumerate() {
        let numel = obj.param(pi).numel();
        let coords = sample(&mut rng, numel, numel.min(MAX_COORDS_PER_PARAM)).into_vec();
        let mut worst = 0.0f64;
        let mut worst_abs = 0.0f64;
        for &c in &coords {
            let orig = obj.param(pi).value.as_slice()[c];
            obj.param_mut(pi).value.as_mut_slice()[c] = orig + step;
            let up = obj.loss()?;
            obj.param_mut(pi).value.as_mut_slice()[c] = orig - step;
            let down = obj.loss()?;
            obj.param_mut(pi).value.as_mut_slice()[c] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = grad.as_slice()[c];
            let diff = (a - numeric).abs();
            worst_abs = worst_abs.max(diff);
            if diff > GRAD_ATOL {
                worst = worst.max(diff / a.abs().max(numeric.abs()));
            }
        }
        params.push(ParamCheck {
            name: obj.param(pi).name.clone(),
            checked: coords.len(),
            max_rel_error: worst,
            max_abs_error: worst_abs,
        });
    }
    let max_rel_error = params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max);
    let max_abs_error = params.iter().map(|p| p.max_abs_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        params,
        max_rel_error,
        max_abs_error,
        tolerance,
        passed: max_rel_error < tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    struct Quadratic(Param);

    impl Objective for Quadratic {
        fn n_params(&self) -> usize {
            1
        }
        fn param(&self, _: usize) -> &Param {
            &self.0
        }
        fn param_mut(&mut self, _: usize) -> &mut Param {
            &mut self.0
        }
        fn loss(&self) -> Result<f64> {
            Ok(self.0.value.as_slice().iter().map(|v| v * v).sum())
        }
        fn backward(&mut self) -> Result<f64> {
            self.0.grad = self.0.value.scaled(2.0);
            self.loss()
        }
    }

    #[test]
    fn quadratic_gradient_is_recovered() {
        let mut q = Quadratic(Param::new("p", Mat::from_rows(&[[0.3, -1.2, 4.0]])));
        let report = finite_diff_check(&mut q, 1e-5, 1e-6, 1).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.params[0].checked, 3);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        struct Wrong(Quadratic);
        impl Objective for Wrong {
            fn n_params(&self) -> usize {
                1
            }
            fn param(&self, i: usize) -> &Param {
                self.0.param(i)
            }
            fn param_mut(&mut self, i: usize) -> &mut Param {
                self.0.param_mut(i)
            }
            fn loss(&self) -> Result<f64> {
                self.0.loss()
            }
            fn backward(&mut self) -> Result<f64> {
                self.0 .0.grad = self.0 .0.value.scaled(3.0);
                self.0.loss()
            }
        }
        let mut w = Wrong(Quadratic(Param::new("p", Mat::from_rows(&[[1.0, 2.0]]))));
        assert!(!finite_diff_check(&mut w, 1e-5, 1e-4, 0).unwrap().passed);
    }
}
