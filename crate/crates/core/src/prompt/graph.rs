use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{laplacian_from_edges, Graph, LaplacianKind};
use crate::linalg::{dot, CsrMatrix, Mat};
use crate::nn::{sigmoid, Param};
use crate::rng::Rng;

/// Floor applied to the prompt's per-column standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// A learnable set of prompt nodes with its edge thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptGraph {
    pub p: Param,
    pub tau_inner: f64,
    pub tau_cross: f64,
}

impl PromptGraph {
    /// Rows drawn column-wise from `N(μ_o, σ_o²)`.
    pub fn init(name: &str, n_prompt: usize, stats: &FeatureStats, tau_inner: f64, tau_cross: f64, rng: &mut Rng) -> Self {
        let d = stats.mean.len();
        let mut p = Mat::zeros(n_prompt, d);
        for i in 0..n_prompt {
            for (j, v) in p.row_mut(i).iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *v = stats.mean[j] + stats.std[j] * z;
            }
        }
        PromptGraph {
            p: Param::new(name, p),
            tau_inner,
            tau_cross,
        }
    }

    pub fn n_prompt(&self) -> usize {
        self.p.value.rows()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("tau_inner", self.tau_inner), ("tau_cross", self.tau_cross)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {t}")));
            }
        }
        if !self.p.value.is_finite() {
            return Err(Error::InvalidParameter(format!("{} has non-finite entries", self.p.name)));
        }
        Ok(())
    }
}

/// Column means and population standard deviations of a feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn of(x: &Mat) -> Self {
        FeatureStats {
            mean: x.col_means(),
            std: x.col_stds(),
        }
    }
}

/// Values kept for [`normalize_backward`].
#[derive(Clone, Debug)]
pub struct NormCache {
    /// `(p − μ_p)/σ_p`
    standardized: Mat,
    sigma: Vec<f64>,
    floored: Vec<bool>,
    target_std: Vec<f64>,
}

/// Column-wise `(p − μ_p)/max(σ_p, floor)·σ_o + μ_o`.
pub fn normalize_prompt(p: &Mat, g: &Graph) -> Mat {
    normalize_with_stats(p, &FeatureStats::of(g.features())).0
}

pub fn normalize_with_stats(p: &Mat, target: &FeatureStats) -> (Mat, NormCache) {
    let (n, d) = p.shape();
    assert_eq!(d, target.mean.len(), "prompt feature dimension");
    let (mu, raw_sigma) = if n == 0 {
        (vec![0.0; d], vec![0.0; d])
    } else {
        (p.col_means(), p.col_stds())
    };
    let floored: Vec<bool> = raw_sigma.iter().map(|&s| s < STD_FLOOR).collect();
    let sigma: Vec<f64> = raw_sigma.iter().map(|&s| s.max(STD_FLOOR)).collect();
    let mut standardized = Mat::zeros(n, d);
    let mut out = Mat::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            let z = (p[(i, j)] - mu[j]) / sigma[j];
            standardized.row_mut(i)[j] = z;
            out.row_mut(i)[j] = z * target.std[j] + target.mean[j];
        }
    }
    let cache = NormCache {
        standardized,
        sigma,
        floored,
        target_std: target.std.clone(),
    };
    (out, cache)
}

/// Pulls `∂loss/∂P'` back to `∂loss/∂P`, including the paths through the
/// prompt's own mean and deviation.
pub fn normalize_backward(cache: &NormCache, d_out: &Mat) -> Mat {
    let (n, d) = d_out.shape();
    let mut dp = Mat::zeros(n, d);
    if n == 0 {
        return dp;
    }
    let nf = n as f64;
    for j in 0..d {
        let dz: Vec<f64> = (0..n).map(|i| d_out[(i, j)] * cache.target_std[j]).collect();
        let mean_dz = dz.iter().sum::<f64>() / nf;
        let mean_dz_z = if cache.floored[j] {
            // σ is the constant floor here
            0.0
        } else {
            (0..n).map(|i| dz[i] * cache.standardized[(i, j)]).sum::<f64>() / nf
        };
        for i in 0..n {
            dp.row_mut(i)[j] = (dz[i] - mean_dz - cache.standardized[(i, j)] * mean_dz_z) / cache.sigma[j];
        }
    }
    dp
}

/// Pairs `(i, j)`, `i < j`, of prompt nodes with `σ(p_i·p_j) > τ`.
pub fn build_inner_edges(p: &Mat, tau: f64) -> Vec<(usize, usize)> {
    let n = p.rows();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if sigmoid(dot(p.row(i), p.row(j))) > tau {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Pairs `(prompt i, node j)` with `σ(p_i·x_j) > τ`.
pub fn build_cross_edges(p: &Mat, x: &Mat, tau: f64) -> Result<Vec<(usize, usize)>> {
    if p.cols() != x.cols() {
        return Err(Error::shape("build_cross_edges", x.cols(), p.cols()));
    }
    let mut edges = Vec::new();
    for i in 0..p.rows() {
        let pi = p.row(i);
        for j in 0..x.rows() {
            if sigmoid(dot(pi, x.row(j))) > tau {
                edges.push((i, j));
            }
        }
    }
    Ok(edges)
}

/// A base graph with prompt nodes appended after the original nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptedGraph {
    pub n_base: usize,
    /// Normalized prompt features, `N_p × d`.
    pub prompt_features: Mat,
    /// Edges among prompt nodes, in prompt-local indices.
    pub inner: Vec<(usize, usize)>,
    /// `(prompt-local index, base node)`.
    pub cross: Vec<(usize, usize)>,
}

impl PromptedGraph {
    pub fn n_prompt(&self) -> usize {
        self.prompt_features.rows()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_base + self.n_prompt()
    }

    /// Base edges followed by inner and cross edges in global indices.
    pub fn edges(&self, base: &Graph) -> Vec<(usize, usize)> {
        let n = self.n_base;
        let mut edges = base.edges().to_vec();
        edges.extend(self.inner.iter().map(|&(a, b)| (n + a, n + b)));
        edges.extend(self.cross.iter().map(|&(p, j)| (j, n + p)));
        edges
    }

    pub fn laplacian(&self, base: &Graph) -> CsrMatrix {
        laplacian_from_edges(self.n_nodes(), &self.edges(base), LaplacianKind::Normalized)
    }

    /// `[X; P']`
    pub fn features(&self, base: &Graph) -> Mat {
        base.features().vstack(&self.prompt_features)
    }

    pub fn degrees(&self, base: &Graph) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes()];
        for (u, v) in self.edges(base) {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }
}

/// Builds the prompted graph from already-normalized prompt features.
pub fn insert_normalized(g: &Graph, p_prime: Mat, tau_inner: f64, tau_cross: f64) -> Result<PromptedGraph> {
    let inner = build_inner_edges(&p_prime, tau_inner);
    let cross = build_cross_edges(&p_prime, g.features(), tau_cross)?;
    Ok(PromptedGraph {
        n_base: g.n_nodes(),
        prompt_features: p_prime,
        inner,
        cross,
    })
}

/// Normalizes `prompt` against `g` (unless `normalize` is off) and inserts it.
pub fn insert_prompt(g: &Graph, prompt: &PromptGraph, normalize: bool) -> Result<PromptedGraph> {
    if prompt.p.value.cols() != g.feature_dim() {
        return Err(Error::shape("insert_prompt", g.feature_dim(), prompt.p.value.cols()));
    }
    let p_prime = if normalize {
        normalize_prompt(&prompt.p.value, g)
    } else {
        prompt.p.value.clone()
    };
    insert_normalized(g, p_prime, prompt.tau_inner, prompt.tau_cross)
}
