//! Two-class contextual stochastic block model with tunable edge homophily.
//!
//! Node `i` carries a class sign `y_i ∈ {−1, +1}` (the first half of the nodes
//! is `−1`, mapped to label 0). Features are
//! `x_i = √(μ/n)·y_i·u + w_i/√f` with a shared direction `u ~ N(0, I/f)` and
//! white noise `w_i`. Each unordered pair is joined independently with
//! probability `(d ± σ√d)/n` (plus within a class) where `σ = √d·(2h − 1)`,
//! so the expected degree is `d` and the expected edge homophily is `h`.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Labels};
use crate::linalg::Mat;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsbmParams {
    pub n: usize,
    pub f: usize,
    pub d_avg: f64,
    pub mu: f64,
    pub h: f64,
    pub seed: u64,
}

impl Default for CsbmParams {
    fn default() -> Self {
        CsbmParams {
            n: 3000,
            f: 128,
            d_avg: 50.0,
            mu: 10.0,
            h: 0.5,
            seed: 0,
        }
    }
}

impl CsbmParams {
    /// `(p_intra, p_inter)`; validated.
    pub fn edge_probabilities(&self) -> Result<(f64, f64)> {
        self.validate()?;
        Ok(self.raw_probabilities())
    }

    fn raw_probabilities(&self) -> (f64, f64) {
        let n = self.n as f64;
        // σ√d written as d·(2h − 1) so h = 1 gives an exact zero below
        let shift = self.d_avg * (2.0 * self.h - 1.0);
        ((self.d_avg + shift) / n, (self.d_avg - shift) / n)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n < 2 || self.n % 2 != 0 {
            return bad(format!("n must be even and at least 2, got {}", self.n));
        }
        if self.f == 0 {
            return bad("feature dimension must be positive".into());
        }
        if !(self.d_avg >= 1.0) || !self.d_avg.is_finite() {
            return bad(format!("average degree must be at least 1, got {}", self.d_avg));
        }
        if !(0.0..=1.0).contains(&self.h) {
            return bad(format!("homophily must lie in [0, 1], got {}", self.h));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return bad(format!("mu must be finite and nonnegative, got {}", self.mu));
        }
        let (p_in, p_out) = self.raw_probabilities();
        for p in [p_in, p_out] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!(
                    "edge probability {p} outside [0, 1] (d = {}, h = {}, n = {})",
                    self.d_avg, self.h, self.n
                ));
            }
        }
        Ok(())
    }
}

/// Class signs `y_i`: `−1` for the first `n/2` nodes, `+1` afterwards.
pub fn class_signs(n: usize) -> Vec<f64> {
    (0..n).map(|i| if i < n / 2 { -1.0 } else { 1.0 }).collect()
}

pub fn generate(params: &CsbmParams) -> Result<Graph> {
    generate_with_direction(params).map(|(g, _)| g)
}

/// Like [`generate`], also returning the shared feature direction `u`.
pub fn generate_with_direction(params: &CsbmParams) -> Result<(Graph, Vec<f64>)> {
    let (p_in, p_out) = params.edge_probabilities()?;
    let CsbmParams { n, f, mu, .. } = *params;
    let mut rng = rng::seeded(params.seed);
    let inv_sqrt_f = 1.0 / (f as f64).sqrt();

    let u: Vec<f64> = (0..f)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * inv_sqrt_f)
        .collect();
    let y = class_signs(n);
    let signal = (mu / n as f64).sqrt();
    let mut x = Mat::zeros(n, f);
    for (i, yi) in y.iter().enumerate() {
        for (xij, uj) in x.row_mut(i).iter_mut().zip(&u) {
            let w: f64 = rng.sample(StandardNormal);
            *xij = signal * yi * uj + w * inv_sqrt_f;
        }
    }

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if y[i] == y[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    let labels = Labels::dense(y.iter().map(|&s| usize::from(s > 0.0)).collect());
    let name = format!("csbm_n{}_h{}_s{}", n, params.h, params.seed);
    let g = Graph::new(name, n, edges, x, Some(labels))?;
    Ok((g, u))
}

/// One graph per homophily level; graph `i` uses a seed derived from the
/// base seed and `i`.
pub fn sweep(base: &CsbmParams, h_values: &[f64]) -> Result<Vec<Graph>> {
    h_values
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let params = CsbmParams {
                h,
                seed: rng::derive_seed(base.seed, rng::stream::SWEEP, i as u64),
                ..base.clone()
            };
            generate(&params)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(h: f64) -> CsbmParams {
        CsbmParams {
            n: 200,
            f: 8,
            d_avg: 10.0,
            mu: 10.0,
            h,
            seed: 3,
        }
    }

    #[test]
    fn balanced_case_has_equal_probabilities() {
        let (a, b) = small(0.5).edge_probabilities().unwrap();
        assert_eq!(a, b);
        assert_eq!(a, 10.0 / 200.0);
    }

    #[test]
    fn perfect_homophily_has_no_cross_edges() {
        let (_, p_out) = small(1.0).edge_probabilities().unwrap();
        assert_eq!(p_out, 0.0);
        let g = generate(&small(1.0)).unwrap();
        let l = g.labels().unwrap();
        assert!(g.edges().iter().all(|&(u, v)| l.get(u) == l.get(v)));
        assert!(g.n_edges() > 0);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(generate(&CsbmParams { n: 7, ..small(0.5) }).is_err());
        assert!(generate(&CsbmParams { h: 1.2, ..small(0.5) }).is_err());
        assert!(generate(&CsbmParams { d_avg: 150.0, h: 1.0, ..small(0.5) }).is_err());
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let a = generate(&small(0.3)).unwrap();
        let b = generate(&small(0.3)).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.features(), b.features());
        assert!(sweep(&small(0.3), &[]).unwrap().is_empty());
    }
}
