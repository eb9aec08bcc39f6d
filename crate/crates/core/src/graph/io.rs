//! Dataset directory reader and writer.
//!
//! A dataset directory holds `meta.json`, `edges.tsv`, either `features.bin`
//! (two little-endian `u64` counts `n, d` followed by `n·d` little-endian
//! `f64` values, row-major) or `features.tsv`, and optionally `labels.tsv`
//! with one label per line (`-1` marks an unlabeled node).

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BuildStats, Graph, Labels};
use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub n_nodes: usize,
    pub feature_dim: usize,
    #[serde(default)]
    pub n_classes: usize,
}

/// Optional preprocessing applied to features right after loading.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureTransform {
    #[default]
    None,
    /// Divide each row by its L1 norm (zero rows untouched).
    RowNormalize,
    /// Map every nonzero entry to 1.
    Binarize,
}

impl FeatureTransform {
    pub fn apply(self, x: &Mat) -> Mat {
        match self {
            FeatureTransform::None => x.clone(),
            FeatureTransform::Binarize => x.map(|v| if v != 0.0 { 1.0 } else { 0.0 }),
            FeatureTransform::RowNormalize => {
                let mut out = x.clone();
                for i in 0..out.rows() {
                    let row = out.row_mut(i);
                    let s: f64 = row.iter().map(|v| v.abs()).sum();
                    if s > 0.0 {
                        row.iter_mut().for_each(|v| *v /= s);
                    }
                }
                out
            }
        }
    }
}

pub fn load_graph(dir: impl AsRef<Path>) -> Result<Graph> {
    let (g, stats) = load_graph_with_stats(dir, FeatureTransform::None)?;
    if stats.self_loops_dropped > 0 {
        log::warn!("{}: dropped {} self-loops", g.name(), stats.self_loops_dropped);
    }
    Ok(g)
}

pub fn load_graph_with_stats(dir: impl AsRef<Path>, transform: FeatureTransform) -> Result<(Graph, BuildStats)> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta: DatasetMeta = serde_json::from_str(&read_text(&meta_path)?).map_err(|e| Error::InvalidDataset {
        path: meta_path.clone(),
        reason: e.to_string(),
    })?;

    let edges = read_edges(&dir.join("edges.tsv"), meta.n_nodes)?;
    let features = read_features(dir, &meta)?;
    let labels_path = dir.join("labels.tsv");
    let labels = if labels_path.exists() {
        Some(read_labels(&labels_path, &meta)?)
    } else {
        None
    };

    Graph::new_with_stats(meta.name.clone(), meta.n_nodes, edges, transform.apply(&features), labels)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedLine {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn read_edges(path: &Path, n_nodes: usize) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    let mut edges = Vec::new();
    for (line_no, line) in content_lines(&text) {
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(malformed(path, line_no, "expected two node ids"));
        };
        let parse = |tok: &str| -> Result<usize> {
            let v: usize = tok
                .parse()
                .map_err(|_| malformed(path, line_no, format!("`{tok}` is not a node id")))?;
            if v >= n_nodes {
                return Err(malformed(path, line_no, format!("node {v} outside 0..{n_nodes}")));
            }
            Ok(v)
        };
        edges.push((parse(a)?, parse(b)?));
    }
    Ok(edges)
}

fn read_features(dir: &Path, meta: &DatasetMeta) -> Result<Mat> {
    let bin = dir.join("features.bin");
    let tsv = dir.join("features.tsv");
    if bin.exists() {
        read_features_bin(&bin, meta)
    } else if tsv.exists() {
        read_features_tsv(&tsv, meta)
    } else {
        Err(Error::MissingFile { path: bin })
    }
}

fn read_features_bin(path: &Path, meta: &DatasetMeta) -> Result<Mat> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let invalid = |reason: String| Error::InvalidDataset {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 16 {
        return Err(invalid("truncated header".into()));
    }
    let n = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let d = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if n != meta.n_nodes {
        return Err(Error::FeatureRowMismatch {
            path: path.to_path_buf(),
            rows: n,
            n_nodes: meta.n_nodes,
        });
    }
    if d != meta.feature_dim {
        return Err(invalid(format!("feature dim {d} but meta declares {}", meta.feature_dim)));
    }
    let body = &bytes[16..];
    if body.len() != n * d * 8 {
        return Err(invalid(format!("expected {} payload bytes, found {}", n * d * 8, body.len())));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Mat::from_vec(n, d, data))
}

fn read_features_tsv(path: &Path, meta: &DatasetMeta) -> Result<Mat> {
    let text = read_text(path)?;
    let mut data = Vec::with_capacity(meta.n_nodes * meta.feature_dim);
    let mut rows = 0;
    for (line_no, line) in content_lines(&text) {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| malformed(path, line_no, format!("`{tok}` is not a number")))?;
            data.push(v);
        }
        if data.len() - before != meta.feature_dim {
            return Err(malformed(
                path,
                line_no,
                format!("expected {} values, found {}", meta.feature_dim, data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != meta.n_nodes {
        return Err(Error::FeatureRowMismatch {
            path: path.to_path_buf(),
            rows,
            n_nodes: meta.n_nodes,
        });
    }
    Ok(Mat::from_vec(rows, meta.feature_dim, data))
}

fn read_labels(path: &Path, meta: &DatasetMeta) -> Result<Labels> {
    let text = read_text(path)?;
    let entries: Vec<(usize, &str)> = content_lines(&text).collect();
    if entries.len() != meta.n_nodes {
        return Err(Error::InvalidDataset {
            path: path.to_path_buf(),
            reason: format!("{} labels for {} nodes", entries.len(), meta.n_nodes),
        });
    }

    let numeric = entries.iter().all(|(_, t)| t.parse::<i64>().is_ok());
    if numeric {
        let mut values = Vec::with_capacity(entries.len());
        let mut max_seen = -1i64;
        for &(line, tok) in &entries {
            let v: i64 = tok.parse().unwrap();
            if v == -1 {
                values.push(None);
                continue;
            }
            if v < 0 || (meta.n_classes > 0 && v as usize >= meta.n_classes) {
                return Err(Error::LabelOutOfRange {
                    path: path.to_path_buf(),
                    line,
                    label: v,
                    n_classes: meta.n_classes,
                });
            }
            max_seen = max_seen.max(v);
            values.push(Some(v as usize));
        }
        let n_classes = if meta.n_classes > 0 {
            meta.n_classes
        } else {
            (max_seen + 1) as usize
        };
        return Labels::new(values, n_classes);
    }

    // arbitrary label strings: dense ids by sorted distinct value
    let distinct: BTreeSet<&str> = entries.iter().map(|(_, t)| *t).filter(|t| *t != "-1").collect();
    let ids: Vec<&str> = distinct.into_iter().collect();
    let values = entries
        .iter()
        .map(|(_, t)| ids.binary_search(t).ok())
        .collect();
    Labels::new(values, ids.len())
}

/// Writes `g` as a dataset directory (binary features). Output bytes depend
/// only on the graph contents.
pub fn save_graph(g: &Graph, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = DatasetMeta {
        name: g.name().to_string(),
        n_nodes: g.n_nodes(),
        feature_dim: g.feature_dim(),
        n_classes: g.labels().map_or(0, Labels::n_classes),
    };
    let mut written = Vec::new();

    let meta_path = dir.join("meta.json");
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;
    written.push(meta_path);

    let edges_path = dir.join("edges.tsv");
    write_with(&edges_path, |w| {
        for &(u, v) in g.edges() {
            writeln!(w, "{u}\t{v}")?;
        }
        Ok(())
    })?;
    written.push(edges_path);

    let feat_path = dir.join("features.bin");
    write_with(&feat_path, |w| {
        w.write_all(&(g.n_nodes() as u64).to_le_bytes())?;
        w.write_all(&(g.feature_dim() as u64).to_le_bytes())?;
        w.write_all(&g.features().to_le_bytes())
    })?;
    written.push(feat_path);

    if let Some(labels) = g.labels() {
        let labels_path = dir.join("labels.tsv");
        write_with(&labels_path, |w| {
            for l in labels.as_slice() {
                match l {
                    Some(c) => writeln!(w, "{c}")?,
                    None => writeln!(w, "-1")?,
                }
            }
            Ok(())
        })?;
        written.push(labels_path);
    }
    Ok(written)
}

fn write_with(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_dataset(dir: &Path, meta: &str, edges: &str, features: &str, labels: Option<&str>) {
        fs::write(dir.join("meta.json"), meta).unwrap();
        fs::write(dir.join("edges.tsv"), edges).unwrap();
        fs::write(dir.join("features.tsv"), features).unwrap();
        if let Some(l) = labels {
            fs::write(dir.join("labels.tsv"), l).unwrap();
        }
    }

    const META2: &str = r#"{"name":"two","n_nodes":2,"feature_dim":1,"n_classes":2}"#;

    #[test]
    fn minimal_two_node_dataset() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(tmp.path(), META2, "0\t1\n", "1\n-1\n", Some("0\n1\n"));
        let g = load_graph(tmp.path()).unwrap();
        assert_eq!(g.n_nodes(), 2);
        assert_eq!(g.n_edges(), 1);
        assert_eq!(g.labels().unwrap().get(1), Some(1));
    }

    #[test]
    fn symmetric_duplicates_collapse() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(tmp.path(), META2, "0\t1\n1\t0\n", "1\n-1\n", None);
        let g = load_graph(tmp.path()).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        assert!(g.labels().is_none());
    }

    #[test]
    fn feature_row_mismatch_is_reported() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(tmp.path(), META2, "0\t1\n", "1\n-1\n3\n", None);
        let err = load_graph(tmp.path()).unwrap_err();
        assert!(matches!(err, Error::FeatureRowMismatch { rows: 3, n_nodes: 2, .. }), "{err}");
    }

    #[test]
    fn distinct_errors_name_file_and_line() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(tmp.path(), META2, "0\t1\n0 x\n", "1\n-1\n", None);
        match load_graph(tmp.path()).unwrap_err() {
            Error::MalformedLine { path, line, .. } => {
                assert!(path.ends_with("edges.tsv"));
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other}"),
        }

        write_dataset(tmp.path(), META2, "0\t1\n", "1\n-1\n", Some("0\n2\n"));
        assert!(matches!(
            load_graph(tmp.path()).unwrap_err(),
            Error::LabelOutOfRange { line: 2, label: 2, .. }
        ));

        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(load_graph(empty.path()).unwrap_err(), Error::MissingFile { .. }));
    }

    #[test]
    fn string_labels_are_remapped() {
        let tmp = tempfile::tempdir().unwrap();
        let meta = r#"{"name":"s","n_nodes":3,"feature_dim":1}"#;
        write_dataset(tmp.path(), meta, "", "0\n0\n0\n", Some("cat\n-1\nbird\n"));
        let g = load_graph(tmp.path()).unwrap();
        let l = g.labels().unwrap();
        assert_eq!(l.as_slice(), &[Some(1), None, Some(0)]);
        assert_eq!(l.n_classes(), 2);
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let tmp = tempfile::tempdir().unwrap();
        let x = Mat::from_rows(&[[0.1, -2.5e-300], [f64::MAX, 3.0]]);
        let g = Graph::new("rt", 2, [(1, 0)], x, Some(Labels::new(vec![Some(0), None], 2).unwrap())).unwrap();
        save_graph(&g, tmp.path()).unwrap();
        let back = load_graph(tmp.path()).unwrap();
        assert_eq!(back.features(), g.features());
        assert_eq!(back.edges(), g.edges());
        assert_eq!(back.labels(), g.labels());
    }

    #[test]
    fn transforms() {
        let x = Mat::from_rows(&[[1.0, -3.0], [0.0, 0.0]]);
        assert_eq!(FeatureTransform::Binarize.apply(&x), Mat::from_rows(&[[1.0, 1.0], [0.0, 0.0]]));
        assert_eq!(
            FeatureTransform::RowNormalize.apply(&x),
            Mat::from_rows(&[[0.25, -0.75], [0.0, 0.0]])
        );
    }
}
