use super::param::Param;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng::Rng;

pub const PRELU_INIT: f64 = 0.25;

#[derive(Clone, Debug, PartialEq)]
pub enum Activation {
    Identity,
    /// Single shared negative slope.
    PRelu(Param),
}

/// `act(X·W + b)`
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer {
    pub w: Param,
    pub b: Param,
    pub activation: Activation,
}

/// Values kept from the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct LinearCache {
    pub pre: Mat,
}

impl LinearLayer {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, prelu: bool, rng: &mut Rng) -> Self {
        let activation = if prelu {
            Activation::PRelu(Param::new(format!("{name}.alpha"), Mat::filled(1, 1, PRELU_INIT)))
        } else {
            Activation::Identity
        };
        LinearLayer {
            w: Param::glorot(format!("{name}.weight"), in_dim, out_dim, rng),
            b: Param::zeros(format!("{name}.bias"), 1, out_dim),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.value.cols()
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = vec![&self.w, &self.b];
        if let Activation::PRelu(a) = &self.activation {
            out.push(a);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = vec![&mut self.w, &mut self.b];
        if let Activation::PRelu(a) = &mut self.activation {
            out.push(a);
        }
        out
    }

    fn alpha(&self) -> Option<f64> {
        match &self.activation {
            Activation::Identity => None,
            Activation::PRelu(a) => Some(a.value.as_slice()[0]),
        }
    }

    pub fn forward(&self, x: &Mat) -> Result<(Mat, LinearCache)> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape("linear_forward", self.in_dim(), x.cols()));
        }
        let mut pre = x.matmul(&self.w.value);
        pre.add_row_vector(self.b.value.as_slice());
        let out = match self.alpha() {
            None => pre.clone(),
            Some(a) => pre.map(|v| if v >= 0.0 { v } else { a * v }),
        };
        Ok((out, LinearCache { pre }))
    }

    /// Gradient with respect to the pre-activation, from the output gradient.
    fn pre_grad(&self, cache: &LinearCache, upstream: &Mat) -> Mat {
        match self.alpha() {
            None => upstream.clone(),
            Some(a) => {
                let mut g = upstream.clone();
                for (gv, &p) in g.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
                    if p < 0.0 {
                        *gv *= a;
                    }
                }
                g
            }
        }
    }

    /// Accumulates parameter gradients and returns `∂loss/∂X`.
    pub fn backward(&mut self, x: &Mat, cache: &LinearCache, upstream: &Mat) -> Result<Mat> {
        self.backward_params(x, cache, upstream)?;
        self.input_grad(cache, upstream)
    }

    /// Accumulates parameter gradients only.
    pub fn backward_params(&mut self, x: &Mat, cache: &LinearCache, upstream: &Mat) -> Result<()> {
        if upstream.shape() != cache.pre.shape() || x.rows() != upstream.rows() {
            return Err(Error::shape(
                "linear_backward",
                format!("{:?}", cache.pre.shape()),
                format!("{:?}", upstream.shape()),
            ));
        }
        if let Activation::PRelu(a) = &mut self.activation {
            let mut da = 0.0;
            for (&u, &p) in upstream.as_slice().iter().zip(cache.pre.as_slice()) {
                if p < 0.0 {
                    da += u * p;
                }
            }
            a.grad.as_mut_slice()[0] += da;
        }
        let g = self.pre_grad(cache, upstream);
        self.w.grad.add_assign(&x.matmul_tn(&g));
        for (db, s) in self.b.grad.as_mut_slice().iter_mut().zip(g.col_sums()) {
            *db += s;
        }
        Ok(())
    }

    /// `∂loss/∂X` without touching any parameter gradient.
    pub fn input_grad(&self, cache: &LinearCache, upstream: &Mat) -> Result<Mat> {
        if upstream.shape() != cache.pre.shape() {
            return Err(Error::shape(
                "linear_input_grad",
                format!("{:?}", cache.pre.shape()),
                format!("{:?}", upstream.shape()),
            ));
        }
        Ok(self.pre_grad(cache, upstream).matmul_nt(&self.w.value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn identity_layer_passes_through() {
        let mut layer = LinearLayer::new("l", 3, 3, false, &mut rng::seeded(0));
        layer.w.value = Mat::identity(3);
        let x = Mat::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.0, -1.0]]);
        assert_eq!(layer.forward(&x).unwrap().0, x);
    }

    #[test]
    fn prelu_with_unit_slope_is_identity() {
        let mut layer = LinearLayer::new("l", 2, 2, true, &mut rng::seeded(0));
        layer.w.value = Mat::identity(2);
        if let Activation::PRelu(a) = &mut layer.activation {
            a.value = Mat::filled(1, 1, 1.0);
        }
        let x = Mat::from_rows(&[[-1.0, 2.0]]);
        assert_eq!(layer.forward(&x).unwrap().0, x);
        assert!(layer.forward(&Mat::zeros(1, 3)).is_err());
    }
}
