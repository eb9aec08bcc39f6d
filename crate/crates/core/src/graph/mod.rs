//! Attributed undirected graphs: representation, Laplacians, homophily,
//! feature corruption and SVD feature reduction.

mod io;
mod split;

pub use io::{load_graph, load_graph_with_stats, save_graph, DatasetMeta, FeatureTransform};
pub use split::{kshot_split, DatasetSplit};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, CsrMatrix, Mat};
use crate::rng;

/// Node labels: dense 0-based class ids, `None` for unlabeled nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Labels {
    values: Vec<Option<usize>>,
    n_classes: usize,
}

impl Labels {
    pub fn new(values: Vec<Option<usize>>, n_classes: usize) -> Result<Self> {
        if let Some(bad) = values.iter().flatten().find(|&&c| c >= n_classes) {
            return Err(Error::InvalidParameter(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Labels { values, n_classes })
    }

    /// All nodes labeled; `n_classes` is inferred as `max + 1`.
    pub fn dense(values: Vec<usize>) -> Self {
        let n_classes = values.iter().max().map_or(0, |m| m + 1);
        Labels {
            values: values.into_iter().map(Some).collect(),
            n_classes,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<usize> {
        self.values[i]
    }

    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.values
    }

    /// Labeled node indices grouped per class, ascending.
    pub fn by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_classes];
        for (i, c) in self.values.iter().enumerate() {
            if let Some(c) = c {
                out[*c].push(i);
            }
        }
        out
    }

    pub fn masked(&self, hidden: &[usize]) -> Labels {
        let mut values = self.values.clone();
        for &i in hidden {
            values[i] = None;
        }
        Labels {
            values,
            n_classes: self.n_classes,
        }
    }
}

/// Counts of what graph construction had to clean up.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
}

/// Undirected attributed graph. Edges are kept once each as `(min, max)`,
/// sorted; the adjacency is the symmetric CSR expansion.
#[derive(Clone, Debug)]
pub struct Graph {
    name: String,
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    adjacency: CsrMatrix,
    features: Mat,
    labels: Option<Labels>,
}

impl Graph {
    pub fn new(
        name: impl Into<String>,
        n_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Mat,
        labels: Option<Labels>,
    ) -> Result<Self> {
        let (g, stats) = Self::new_with_stats(name, n_nodes, edges, features, labels)?;
        if stats.self_loops_dropped > 0 {
            log::warn!("{}: dropped {} self-loops", g.name, stats.self_loops_dropped);
        }
        Ok(g)
    }

    pub fn new_with_stats(
        name: impl Into<String>,
        n_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Mat,
        labels: Option<Labels>,
    ) -> Result<(Self, BuildStats)> {
        if features.rows() != n_nodes {
            return Err(Error::shape("Graph::new", format!("{n_nodes} feature rows"), features.rows()));
        }
        if !features.is_finite() {
            return Err(Error::InvalidParameter("feature matrix has non-finite entries".into()));
        }
        if let Some(l) = &labels {
            if l.len() != n_nodes {
                return Err(Error::shape("Graph::new", format!("{n_nodes} labels"), l.len()));
            }
        }

        let mut stats = BuildStats::default();
        let mut canon = Vec::new();
        let mut raw = 0usize;
        for (u, v) in edges {
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::InvalidParameter(format!(
                    "edge ({u}, {v}) references a node outside 0..{n_nodes}"
                )));
            }
            if u == v {
                stats.self_loops_dropped += 1;
                continue;
            }
            raw += 1;
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        canon.dedup();
        stats.duplicates_dropped = raw - canon.len();

        let adjacency = adjacency_from_edges(n_nodes, &canon);
        Ok((
            Graph {
                name: name.into(),
                n_nodes,
                edges: canon,
                adjacency,
                features,
                labels,
            },
            stats,
        ))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Canonical undirected edges `(u, v)` with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn features(&self) -> &Mat {
        &self.features
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn with_features(&self, features: Mat) -> Result<Graph> {
        Graph::new(
            self.name.clone(),
            self.n_nodes,
            self.edges.iter().copied(),
            features,
            self.labels.clone(),
        )
    }

    /// Copy with the labels of `hidden` nodes removed.
    pub fn with_hidden_labels(&self, hidden: &[usize]) -> Graph {
        let mut g = self.clone();
        g.labels = self.labels.as_ref().map(|l| l.masked(hidden));
        g
    }

    pub fn laplacian(&self, kind: LaplacianKind) -> CsrMatrix {
        laplacian_from_edges(self.n_nodes, &self.edges, kind)
    }
}

fn adjacency_from_edges(n: usize, edges: &[(usize, usize)]) -> CsrMatrix {
    let mut trip = Vec::with_capacity(2 * edges.len());
    for &(u, v) in edges {
        trip.push((u, v, 1.0));
        trip.push((v, u, 1.0));
    }
    CsrMatrix::from_triplets(n, n, &trip)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaplacianKind {
    /// `I − D^{-1/2} A D^{-1/2}`; isolated nodes keep an identity row.
    Normalized,
    /// `D − A`
    Unnormalized,
}

pub fn laplacian(g: &Graph, kind: LaplacianKind) -> CsrMatrix {
    g.laplacian(kind)
}

/// Laplacian of the simple graph on `n` nodes with the given undirected
/// edges (each listed once, no self-loops).
pub fn laplacian_from_edges(n: usize, edges: &[(usize, usize)], kind: LaplacianKind) -> CsrMatrix {
    let mut deg = vec![0.0f64; n];
    for &(u, v) in edges {
        deg[u] += 1.0;
        deg[v] += 1.0;
    }
    let mut trip = Vec::with_capacity(n + 2 * edges.len());
    match kind {
        LaplacianKind::Normalized => {
            let inv_sqrt: Vec<f64> = deg
                .iter()
                .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
                .collect();
            for i in 0..n {
                trip.push((i, i, 1.0));
            }
            for &(u, v) in edges {
                let w = -inv_sqrt[u] * inv_sqrt[v];
                trip.push((u, v, w));
                trip.push((v, u, w));
            }
        }
        LaplacianKind::Unnormalized => {
            for (i, &d) in deg.iter().enumerate() {
                trip.push((i, i, d));
            }
            for &(u, v) in edges {
                trip.push((u, v, -1.0));
                trip.push((v, u, -1.0));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &trip)
}

/// Fraction of labeled edges whose endpoints share a class.
pub fn edge_homophily(g: &Graph) -> Result<f64> {
    let labels = g.labels().ok_or(Error::LabelsAbsent)?;
    let mut same = 0usize;
    let mut total = 0usize;
    for &(u, v) in g.edges() {
        if let (Some(a), Some(b)) = (labels.get(u), labels.get(v)) {
            total += 1;
            if a == b {
                same += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::InvalidParameter("graph has no edges between labeled nodes".into()));
    }
    Ok(same as f64 / total as f64)
}

/// Row-shuffled copy of the features; the edge structure is untouched.
pub fn corrupt_features(g: &Graph, seed: u64) -> Mat {
    shuffle_rows(g.features(), seed)
}

pub fn shuffle_rows(x: &Mat, seed: u64) -> Mat {
    let mut perm: Vec<usize> = (0..x.rows()).collect();
    perm.shuffle(&mut rng::seeded(seed));
    x.select_rows(&perm)
}

/// Top right-singular subspace of a feature matrix.
#[derive(Clone, Debug)]
pub struct SvdBasis {
    /// `d × dim`, orthonormal columns, descending singular values.
    pub basis: Mat,
    pub singular_values: Vec<f64>,
}

/// Right-singular basis of `x` for the leading `dim` singular values. Each
/// basis vector is signed so its largest-magnitude entry is positive.
pub fn svd_basis(x: &Mat, dim: usize) -> Result<SvdBasis> {
    let (n, d) = x.shape();
    let bound = n.min(d);
    if dim > bound {
        return Err(Error::DimensionTooLarge {
            requested: dim,
            bound,
        });
    }
    let mut basis = Mat::zeros(d, dim);
    let mut singular_values = Vec::with_capacity(dim);
    if d <= n {
        let eig = symmetric_eigen(&x.matmul_tn(x))?;
        for c in 0..dim {
            let src = d - 1 - c;
            singular_values.push(eig.values[src].max(0.0).sqrt());
            basis.set_col(c, &eig.vectors.col(src));
        }
    } else {
        // thin side: eigenvectors of X Xᵀ give v = Xᵀu / s
        let eig = symmetric_eigen(&x.matmul_nt(x))?;
        let scale = eig.values.last().copied().unwrap_or(0.0).max(0.0).sqrt();
        for c in 0..dim {
            let src = n - 1 - c;
            let s = eig.values[src].max(0.0).sqrt();
            singular_values.push(s);
            if s > 1e-12 * scale.max(1.0) {
                let u = eig.vectors.col(src);
                let mut v = vec![0.0; d];
                for (i, ui) in u.iter().enumerate() {
                    crate::linalg::axpy(*ui / s, x.row(i), &mut v);
                }
                basis.set_col(c, &v);
            }
        }
    }
    for c in 0..dim {
        let col = basis.col(c);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            basis.set_col(c, &col.iter().map(|v| -v).collect::<Vec<_>>());
        }
    }
    Ok(SvdBasis {
        basis,
        singular_values,
    })
}

/// Projects `x` onto its top-`dim` right-singular subspace.
pub fn svd_reduce(x: &Mat, dim: usize) -> Result<Mat> {
    let b = svd_basis(x, dim)?;
    Ok(x.matmul(&b.basis))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path2(labels: [usize; 2]) -> Graph {
        Graph::new(
            "p2",
            2,
            [(0, 1)],
            Mat::from_rows(&[[1.0], [-1.0]]),
            Some(Labels::dense(labels.to_vec())),
        )
        .unwrap()
    }

    #[test]
    fn path_normalized_laplacian() {
        let l = path2([0, 1]).laplacian(LaplacianKind::Normalized).to_dense();
        assert_eq!(l, Mat::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]));
    }

    #[test]
    fn triangle_unnormalized_laplacian() {
        let g = Graph::new("tri", 3, [(0, 1), (1, 2), (2, 0)], Mat::zeros(3, 1), None).unwrap();
        let l = g.laplacian(LaplacianKind::Unnormalized).to_dense();
        let expected = Mat::from_rows(&[[2.0, -1.0, -1.0], [-1.0, 2.0, -1.0], [-1.0, -1.0, 2.0]]);
        assert_eq!(l, expected);
    }

    #[test]
    fn isolated_node_keeps_identity_row() {
        let g = Graph::new("iso", 3, [(0, 1)], Mat::zeros(3, 1), None).unwrap();
        let l = g.laplacian(LaplacianKind::Normalized).to_dense();
        assert_eq!(l.row(2), &[0.0, 0.0, 1.0]);
        assert_eq!(l[(0, 2)], 0.0);
    }

    #[test]
    fn duplicate_and_self_loop_cleanup() {
        let (g, stats) =
            Graph::new_with_stats("d", 3, [(0, 1), (1, 0), (2, 2), (1, 2)], Mat::zeros(3, 1), None).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(stats.self_loops_dropped, 1);
        assert_eq!(stats.duplicates_dropped, 1);
        assert_eq!(g.adjacency().nnz(), 4);
        assert!(g.adjacency().max_asymmetry() == 0.0);
    }

    #[test]
    fn homophily_two_nodes() {
        assert_eq!(edge_homophily(&path2([0, 0])).unwrap(), 1.0);
        assert_eq!(edge_homophily(&path2([0, 1])).unwrap(), 0.0);
        let unlabeled = Graph::new("u", 2, [(0, 1)], Mat::zeros(2, 1), None).unwrap();
        assert!(matches!(edge_homophily(&unlabeled), Err(Error::LabelsAbsent)));
    }

    #[test]
    fn corruption_of_single_node_is_identity() {
        let g = Graph::new("one", 1, [], Mat::from_rows(&[[3.0, 4.0]]), None).unwrap();
        assert_eq!(corrupt_features(&g, 9), *g.features());
    }

    #[test]
    fn svd_rank_one_reconstructs() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [0.3, -0.1, 0.7];
        let x = Mat::from_vec(4, 3, u.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect());
        let b = svd_basis(&x, 1).unwrap();
        let recon = x.matmul(&b.basis).matmul_nt(&b.basis);
        assert!(recon.max_abs_diff(&x) < 1e-8);
        assert!(matches!(svd_reduce(&x, 4), Err(Error::DimensionTooLarge { .. })));
    }
}
