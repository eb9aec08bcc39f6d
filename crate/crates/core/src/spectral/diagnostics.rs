use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::decomposition::SpectralDecomposition;
use super::filters::{lambda_grid, SpectralFilter};
use crate::error::{Error, Result};
use crate::graph::{Graph, LaplacianKind};
use crate::linalg::{dot, CsrMatrix};

/// `S_high = xᵀLx / xᵀx`.
pub fn high_freq_area(l: &CsrMatrix, x: &[f64]) -> Result<f64> {
    if l.n_rows() != x.len() {
        return Err(Error::shape("high_freq_area", l.n_rows(), x.len()));
    }
    let energy = dot(x, x);
    if energy == 0.0 {
        return Err(Error::ZeroSignal("high_freq_area"));
    }
    Ok(l.quadratic_form(x) / energy)
}

/// `S_high` of every feature column; zero columns yield `None`.
pub fn high_freq_profile(g: &Graph, kind: LaplacianKind) -> Vec<Option<f64>> {
    let l = g.laplacian(kind);
    let x = g.features();
    (0..x.cols())
        .map(|j| high_freq_area(&l, &x.col(j)).ok())
        .collect()
}

/// Mean over the defined entries of a profile.
pub fn profile_mean(profile: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = profile.iter().flatten().copied().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Mean normalized squared differences across homophilic and heterophilic
/// edges. An expectation over an empty edge category is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassDistances {
    pub intra: Option<f64>,
    pub inter: Option<f64>,
    pub n_intra: usize,
    pub n_inter: usize,
}

pub fn class_distance_expectations(g: &Graph, x: &[f64]) -> Result<ClassDistances> {
    let labels = g.labels().ok_or(Error::LabelsAbsent)?;
    if x.len() != g.n_nodes() {
        return Err(Error::shape("class_distance_expectations", g.n_nodes(), x.len()));
    }
    let energy = dot(x, x);
    if energy == 0.0 {
        return Err(Error::ZeroSignal("class_distance_expectations"));
    }
    let (mut sum_intra, mut sum_inter) = (0.0, 0.0);
    let (mut n_intra, mut n_inter) = (0usize, 0usize);
    for &(u, v) in g.edges() {
        let (Some(a), Some(b)) = (labels.get(u), labels.get(v)) else {
            return Err(Error::InvalidParameter(format!("edge ({u}, {v}) touches an unlabeled node")));
        };
        let d = (x[u] - x[v]).powi(2) / energy;
        if a == b {
            sum_intra += d;
            n_intra += 1;
        } else {
            sum_inter += d;
            n_inter += 1;
        }
    }
    let mean = |s: f64, c: usize| (c > 0).then(|| s / c as f64);
    Ok(ClassDistances {
        intra: mean(sum_intra, n_intra),
        inter: mean(sum_inter, n_inter),
        n_intra,
        n_inter,
    })
}

/// Both sides of the homophily decomposition of `xᵀLx / xᵀx` under the
/// unnormalized Laplacian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Theorem1Report {
    pub lhs: f64,
    /// `|E|·(h·E_intra + (1 − h)·E_inter)` with `|E|` counting each
    /// undirected edge once.
    pub rhs_unnorm: f64,
    /// The same expression with `|E|/2` in front.
    pub rhs_half: f64,
    pub abs_error: f64,
    pub homophily: f64,
    pub n_edges: usize,
    pub distances: ClassDistances,
}

pub fn theorem1_check(g: &Graph, x: &[f64]) -> Result<Theorem1Report> {
    let distances = class_distance_expectations(g, x)?;
    let n_edges = g.n_edges();
    if n_edges == 0 {
        return Err(Error::InvalidParameter("graph has no edges".into()));
    }
    let lhs = high_freq_area(&g.laplacian(LaplacianKind::Unnormalized), x)?;
    let h = distances.n_intra as f64 / n_edges as f64;
    // an absent category carries weight zero
    let bracket = h * distances.intra.unwrap_or(0.0) + (1.0 - h) * distances.inter.unwrap_or(0.0);
    let rhs_unnorm = n_edges as f64 * bracket;
    Ok(Theorem1Report {
        lhs,
        rhs_unnorm,
        rhs_half: rhs_unnorm / 2.0,
        abs_error: (lhs - rhs_unnorm).abs(),
        homophily: h,
        n_edges,
        distances,
    })
}

/// Spectral regression loss between a target spectrum `ŷ` and a filtered
/// signal spectrum `g ⊙ x̂`.
pub fn srl(g_at_eigs: &[f64], x_hat: &[f64], y_hat: &[f64]) -> Result<f64> {
    let n = g_at_eigs.len();
    if x_hat.len() != n || y_hat.len() != n {
        return Err(Error::shape("srl", n, format!("{} and {}", x_hat.len(), y_hat.len())));
    }
    let filtered: Vec<f64> = g_at_eigs.iter().zip(x_hat).map(|(g, x)| g * x).collect();
    let norm = dot(&filtered, &filtered).sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroSignal("srl"));
    }
    let root_n = (n as f64).sqrt();
    Ok(y_hat
        .iter()
        .zip(&filtered)
        .map(|(y, f)| (y / root_n - f / norm).powi(2))
        .sum())
}

/// `x̂_k² / Σ x̂_i²` for each eigenvector.
pub fn spectral_energy(decomp: &SpectralDecomposition, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != decomp.len() {
        return Err(Error::shape("spectral_energy", decomp.len(), x.len()));
    }
    let x_hat = decomp.transform(x);
    let total = dot(&x_hat, &x_hat);
    if total == 0.0 {
        return Err(Error::ZeroSignal("spectral_energy"));
    }
    Ok(x_hat.iter().map(|v| v * v / total).collect())
}

/// `index<TAB>s_high` rows; undefined entries are written as `NA`.
pub fn write_profile_tsv(path: &Path, profile: &[Option<f64>]) -> Result<()> {
    let mut out = String::from("dim\ts_high\n");
    for (j, v) in profile.iter().enumerate() {
        match v {
            Some(v) => out.push_str(&format!("{j}\t{v:.12}\n")),
            None => out.push_str(&format!("{j}\tNA\n")),
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One row per grid frequency with one column per filter.
pub fn write_filter_curves_tsv(path: &Path, filters: &[&dyn SpectralFilter], points: usize) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let header: Vec<String> = std::iter::once("lambda".to_string())
        .chain(filters.iter().map(|f| f.label()))
        .collect();
    let mut body = header.join("\t") + "\n";
    for lambda in lambda_grid(points) {
        body.push_str(&format!("{lambda:.6}"));
        for f in filters {
            body.push_str(&format!("\t{:.12}", f.response_raw(lambda)));
        }
        body.push('\n');
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Labels;
    use crate::linalg::Mat;

    fn path2() -> Graph {
        Graph::new("p", 2, [(0, 1)], Mat::from_rows(&[[1.0], [-1.0]]), Some(Labels::dense(vec![0, 1]))).unwrap()
    }

    #[test]
    fn pure_high_frequency() {
        let g = path2();
        let l = g.laplacian(LaplacianKind::Normalized);
        assert_eq!(high_freq_area(&l, &[1.0, -1.0]).unwrap(), 2.0);
        assert_eq!(high_freq_area(&l, &[3.0, 3.0]).unwrap(), 0.0);
        assert!(matches!(high_freq_area(&l, &[0.0, 0.0]), Err(Error::ZeroSignal(_))));
    }

    #[test]
    fn zero_column_is_missing() {
        let g = Graph::new("z", 2, [(0, 1)], Mat::from_rows(&[[1.0, 0.0], [2.0, 0.0]]), None).unwrap();
        let p = high_freq_profile(&g, LaplacianKind::Normalized);
        assert!(p[0].is_some());
        assert_eq!(p[1], None);
        assert_eq!(profile_mean(&p), p[0]);
    }

    #[test]
    fn two_edge_distances_by_hand() {
        // path 0-1-2, labels 0,0,1, x = (1, 2, 4): xᵀx = 21
        let g = Graph::new("h", 3, [(0, 1), (1, 2)], Mat::zeros(3, 1), Some(Labels::dense(vec![0, 0, 1]))).unwrap();
        let d = class_distance_expectations(&g, &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(d.intra, Some(1.0 / 21.0));
        assert_eq!(d.inter, Some(4.0 / 21.0));
        let t = theorem1_check(&g, &[1.0, 2.0, 4.0]).unwrap();
        assert!((t.lhs - 5.0 / 21.0).abs() < 1e-15);
        assert!(t.abs_error < 1e-15);
    }

    #[test]
    fn all_homophilic_case() {
        let g = Graph::new("h1", 3, [(0, 1), (1, 2)], Mat::zeros(3, 1), Some(Labels::dense(vec![0, 0, 0]))).unwrap();
        let t = theorem1_check(&g, &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(t.distances.inter, None);
        assert_eq!(t.homophily, 1.0);
        assert!((t.rhs_unnorm - 2.0 * t.distances.intra.unwrap()).abs() < 1e-15);
        assert!(t.abs_error < 1e-12);
    }

    #[test]
    fn srl_perfect_fit_and_scale() {
        let g = [0.5, 1.0, 2.0];
        let x = [1.0, -1.0, 0.5];
        let f: Vec<f64> = g.iter().zip(&x).map(|(a, b)| a * b).collect();
        let norm = dot(&f, &f).sqrt();
        let y: Vec<f64> = f.iter().map(|v| v / norm * 3f64.sqrt()).collect();
        assert!(srl(&g, &x, &y).unwrap() < 1e-28);
        let y2 = [1.0, 0.0, -1.0];
        let g2: Vec<f64> = g.iter().map(|v| v * 7.0).collect();
        assert!((srl(&g, &x, &y2).unwrap() - srl(&g2, &x, &y2).unwrap()).abs() < 1e-15);
        assert!(srl(&[0.0; 3], &x, &y2).is_err());
    }
}
