use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{argmax_rows, f1_score, F1Average};
use crate::csbm::{self, CsbmParams};
use crate::error::{Error, Result};
use crate::graph::{Graph, LaplacianKind};
use crate::linalg::Mat;
use crate::nn::{softmax_cross_entropy, Adam, LinearLayer};
use crate::pretrain::FrozenModel;
use crate::rng;
use crate::spectral::{high_freq_profile, profile_mean, ReferenceFilter, SpectralFilter};

/// Settings of the logistic probe used by the filter sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub graph: CsbmParams,
    pub h_values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub lr: f64,
    pub epochs: usize,
    pub metric: F1Average,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            graph: CsbmParams::default(),
            h_values: vec![0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0],
            seeds: vec![0, 1, 2],
            lr: 0.01,
            epochs: 200,
            metric: F1Average::Macro,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub h: f64,
    pub seed: u64,
    pub filter: String,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    pub fn f1(&self, h: f64, seed: u64, filter: ReferenceFilter) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.h == h && c.seed == seed && c.filter == filter.name())
            .map(|c| c.f1)
    }

    /// Filter with the highest F1 for one graph; earlier filters win ties.
    pub fn winner(&self, h: f64, seed: u64) -> Option<ReferenceFilter> {
        let mut best: Option<(ReferenceFilter, f64)> = None;
        for f in ReferenceFilter::ALL {
            if let Some(v) = self.f1(h, seed, f) {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((f, v));
                }
            }
        }
        best.map(|(f, _)| f)
    }

    /// Rows `h`, columns `seed` then one per filter.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        let mut text = String::from("h\tseed");
        for r in ReferenceFilter::ALL {
            text += &format!("\t{}", r.name());
        }
        text.push('\n');
        let mut keys: Vec<(f64, u64)> = Vec::new();
        for c in &self.cells {
            if !keys.contains(&(c.h, c.seed)) {
                keys.push((c.h, c.seed));
            }
        }
        for (h, seed) in keys {
            text += &format!("{h}\t{seed}");
            for r in ReferenceFilter::ALL {
                match self.f1(h, seed, r) {
                    Some(v) => text += &format!("\t{v:.6}"),
                    None => text += "\tNA",
                }
            }
            text.push('\n');
        }
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Random 50/20/30 partition of `0..n`, each part sorted.
pub fn ratio_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let n_train = n / 2;
    let n_val = n / 5;
    let mut train = idx[..n_train].to_vec();
    let mut val = idx[n_train..n_train + n_val].to_vec();
    let mut test = idx[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    (train, val, test)
}

/// Standardizes columns with statistics of the `fit` rows.
fn standardize(x: &Mat, fit: &[usize]) -> Mat {
    let sub = x.select_rows(fit);
    let (mu, sd) = (sub.col_means(), sub.col_stds());
    let mut out = x.clone();
    for i in 0..out.rows() {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = (*v - mu[j]) / sd[j].max(1e-12);
        }
    }
    out
}

/// Trains a softmax-regression probe and returns test F1 at the best
/// validation epoch.
pub fn logistic_probe(
    x: &Mat,
    y: &[usize],
    n_classes: usize,
    split: &(Vec<usize>, Vec<usize>, Vec<usize>),
    cfg: &SweepConfig,
    seed: u64,
) -> Result<f64> {
    let (train, val, test) = split;
    let x = standardize(x, train);
    let mut head = LinearLayer::new("probe", x.cols(), n_classes, false, &mut rng::seeded(seed));
    let mut adam = Adam::new(cfg.lr);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for epoch in 0..cfg.epochs {
        let (logits, cache) = head.forward(&x)?;
        let pred = argmax_rows(&logits);
        let val_f1 = f1_score(cfg.metric, &pred, y, val, n_classes)?;
        if val_f1 > best.0 {
            best = (val_f1, f1_score(cfg.metric, &pred, y, test, n_classes)?);
        }
        let (loss, grad) = softmax_cross_entropy(&logits, y, train)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, loss });
        }
        head.backward_params(&x, &cache, &grad)?;
        adam.step(&mut head.params_mut());
    }
    Ok(best.1)
}

/// F1 of each reference filter on CSBM graphs across homophily levels.
pub fn filter_sweep_study(cfg: &SweepConfig) -> Result<SweepTable> {
    let mut cells = Vec::new();
    for &h in &cfg.h_values {
        for &seed in &cfg.seeds {
            let params = CsbmParams { h, seed, ..cfg.graph.clone() };
            let g = csbm::generate(&params)?;
            cells.extend(sweep_graph(&g, h, seed, cfg)?);
        }
    }
    Ok(SweepTable { cells })
}

fn sweep_graph(g: &Graph, h: f64, seed: u64, cfg: &SweepConfig) -> Result<Vec<SweepCell>> {
    let labels = g.labels().ok_or(Error::LabelsAbsent)?;
    let y: Vec<usize> = (0..g.n_nodes())
        .map(|i| labels.get(i).ok_or(Error::LabelsAbsent))
        .collect::<Result<_>>()?;
    let split = ratio_split(g.n_nodes(), rng::derive_seed(seed, rng::stream::SPLIT, 1));
    let l = g.laplacian(LaplacianKind::Normalized);
    ReferenceFilter::ALL
        .iter()
        .map(|f| {
            let filtered = f.apply(&l, g.features())?;
            let f1 = logistic_probe(&filtered, &y, labels.n_classes(), &split, cfg, rng::derive_seed(seed, rng::stream::HEAD_INIT, 1))?;
            Ok(SweepCell {
                h,
                seed,
                filter: f.name().to_string(),
                f1,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightRow {
    pub dataset: String,
    /// Integration weights averaged over hidden dimensions, one per filter.
    pub weights: Vec<f64>,
    pub filter_ks: Vec<usize>,
    pub mean_s_high: Option<f64>,
}

/// Mean integration weight per filter and mean high-frequency area for
/// each (dataset, model) pair.
pub fn weight_case_study(cases: &[(&Graph, &FrozenModel)]) -> Vec<WeightRow> {
    cases
        .iter()
        .map(|(g, frozen)| {
            let model = frozen.model();
            let s = model.filter_weights();
            let weights = (0..s.rows())
                .map(|k| s.row(k).iter().sum::<f64>() / s.cols() as f64)
                .collect();
            WeightRow {
                dataset: g.name().to_string(),
                weights,
                filter_ks: model.bank().ks(),
                mean_s_high: profile_mean(&high_freq_profile(g, LaplacianKind::Normalized)),
            }
        })
        .collect()
}
