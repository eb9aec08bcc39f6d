use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::metrics::{accuracy, argmax_rows, macro_f1, mean_std, weighted_f1};
use crate::error::{Error, Result};
use crate::graph::{kshot_split, svd_reduce, DatasetSplit, Graph};
use crate::pretrain::{freeze, pretrain, FrozenModel, PretrainConfig};
use crate::prompt::{make_ablation, predict, tune, Pipeline, TuneConfig, Variant};
use crate::rng;

/// Seeds, shots and worker count shared by every runner.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOptions {
    pub k: usize,
    pub seeds: Vec<u64>,
    /// Maximum number of seeds processed concurrently.
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            k: 5,
            seeds: vec![0, 1, 2, 3, 4],
            threads: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub split_seed: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    /// Predicted class of every node.
    #[serde(skip)]
    pub predictions: Vec<usize>,
}

/// Wall-clock spent in each phase of one seed.
#[derive(Clone, Debug, Default, Serialize)]
pub struct PhaseTimings {
    pub seed: u64,
    pub pretrain: Duration,
    pub tune: Duration,
    pub score: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: String,
    pub variant: Variant,
    pub dataset: String,
    pub fingerprint: String,
    pub k: usize,
    pub per_seed: Vec<SeedResult>,
    pub mean_accuracy: f64,
    pub std_accuracy: Option<f64>,
    pub mean_macro_f1: f64,
    pub std_macro_f1: Option<f64>,
    pub mean_weighted_f1: f64,
    pub std_weighted_f1: Option<f64>,
}

impl EvalReport {
    fn aggregate(mode: &str, dataset: &str, pipeline: &Pipeline, k: usize, per_seed: Vec<SeedResult>) -> Self {
        let col = |f: fn(&SeedResult) -> f64| mean_std(&per_seed.iter().map(f).collect::<Vec<_>>());
        let (mean_accuracy, std_accuracy) = col(|r| r.accuracy);
        let (mean_macro_f1, std_macro_f1) = col(|r| r.macro_f1);
        let (mean_weighted_f1, std_weighted_f1) = col(|r| r.weighted_f1);
        EvalReport {
            mode: mode.to_string(),
            variant: pipeline.variant,
            dataset: dataset.to_string(),
            fingerprint: fingerprint(pipeline, k),
            k,
            per_seed,
            mean_accuracy,
            std_accuracy,
            mean_macro_f1,
            std_macro_f1,
            mean_weighted_f1,
            std_weighted_f1,
        }
    }

    pub fn split_seeds(&self) -> Vec<u64> {
        self.per_seed.iter().map(|r| r.split_seed).collect()
    }

    /// Aligned-column summary.
    pub fn to_text(&self) -> String {
        let pm = |m: f64, s: Option<f64>| match s {
            Some(s) => format!("{m:.4} ± {s:.4}"),
            None => format!("{m:.4}"),
        };
        let mut out = format!(
            "{} {} on {} ({}-shot, config {})\n",
            self.mode,
            self.variant,
            self.dataset,
            self.k,
            &self.fingerprint[..12]
        );
        out += &format!("{:>8} {:>10} {:>10} {:>10} {:>10}\n", "seed", "accuracy", "macro_f1", "weighted", "best_ep");
        for r in &self.per_seed {
            out += &format!(
                "{:>8} {:>10.4} {:>10.4} {:>10.4} {:>10}\n",
                r.seed, r.accuracy, r.macro_f1, r.weighted_f1, r.best_epoch
            );
        }
        out += &format!("accuracy  {}\n", pm(self.mean_accuracy, self.std_accuracy));
        out += &format!("macro_f1  {}\n", pm(self.mean_macro_f1, self.std_macro_f1));
        out += &format!("weighted  {}\n", pm(self.mean_weighted_f1, self.std_weighted_f1));
        out
    }
}

/// SHA-256 of the pipeline configuration and shot count.
pub fn fingerprint(pipeline: &Pipeline, k: usize) -> String {
    let json = serde_json::to_vec(&(pipeline, k)).expect("pipeline serializes");
    hex::encode(Sha256::digest(json))
}

pub fn split_seed(seed: u64) -> u64 {
    rng::derive_seed(seed, rng::stream::SPLIT, 0)
}

/// Runs `job` for every seed on at most `threads` workers, keeping seed order.
fn map_seeds<T: Send>(seeds: &[u64], threads: usize, job: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    let threads = threads.max(1).min(seeds.len().max(1));
    if threads == 1 {
        return seeds.iter().map(|&s| job(s)).collect();
    }
    let chunk = seeds.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| {
                let job = &job;
                scope.spawn(move || part.iter().map(|&s| job(s)).collect::<Result<Vec<T>>>())
            })
            .collect();
        let mut out = Vec::with_capacity(seeds.len());
        for h in handles {
            out.extend(h.join().expect("seed worker panicked")?);
        }
        Ok(out)
    })
}

fn with_seed(p: &Pipeline, seed: u64) -> (PretrainConfig, TuneConfig) {
    let mut pre = p.pretrain.clone();
    pre.seed = seed;
    let mut tc = p.tune.clone();
    tc.seed = seed;
    (pre, tc)
}

/// Tunes on `masked` (test labels hidden) and scores against `truth`.
fn tune_and_score(
    masked: &Graph,
    truth: &Graph,
    frozen: &FrozenModel,
    split: &DatasetSplit,
    cfg: &TuneConfig,
    timings: &mut PhaseTimings,
) -> Result<SeedResult> {
    let t = Instant::now();
    let outcome = tune(masked, frozen, split, cfg)?;
    timings.tune += t.elapsed();
    let t = Instant::now();
    let probs = predict(masked, frozen, &outcome.state)?;
    let pred = argmax_rows(&probs);
    let labels = truth.labels().ok_or(Error::LabelsAbsent)?;
    let mut y = vec![0usize; truth.n_nodes()];
    for &i in &split.test_indices {
        y[i] = labels.get(i).ok_or(Error::LabelsAbsent)?;
    }
    let c = labels.n_classes();
    let test = &split.test_indices;
    let result = SeedResult {
        seed: cfg.seed,
        split_seed: split.seed,
        accuracy: accuracy(&pred, &y, test)?,
        macro_f1: macro_f1(&pred, &y, test, c)?,
        weighted_f1: weighted_f1(&pred, &y, test, c)?,
        best_epoch: outcome.best_epoch,
        best_val_f1: outcome.best_val_f1,
        predictions: pred,
    };
    timings.score += t.elapsed();
    Ok(result)
}

fn check_labeled(g: &Graph) -> Result<()> {
    if g.labels().is_none() {
        return Err(Error::LabelsAbsent);
    }
    Ok(())
}

/// Pre-training and downstream graph are the same.
pub fn run_transductive(g: &Graph, pipeline: &Pipeline, opts: &RunOptions) -> Result<EvalReport> {
    Ok(run_transductive_timed(g, pipeline, opts)?.0)
}

pub fn run_transductive_timed(g: &Graph, pipeline: &Pipeline, opts: &RunOptions) -> Result<(EvalReport, Vec<PhaseTimings>)> {
    check_labeled(g)?;
    let results = map_seeds(&opts.seeds, opts.threads, |seed| {
        let split = kshot_split(g, opts.k, split_seed(seed))?;
        run_split(g, &split, pipeline, seed)
    })?;
    let (per_seed, timings) = results.into_iter().unzip();
    Ok((EvalReport::aggregate("transductive", g.name(), pipeline, opts.k, per_seed), timings))
}

/// One transductive seed on a fixed split. Pre-training and tuning see `g`
/// with the split's test labels removed.
pub fn run_split(g: &Graph, split: &DatasetSplit, pipeline: &Pipeline, seed: u64) -> Result<(SeedResult, PhaseTimings)> {
    let mut timings = PhaseTimings { seed, ..Default::default() };
    let (pre, tc) = with_seed(pipeline, seed);
    let masked = g.with_hidden_labels(&split.test_indices);
    let t = Instant::now();
    let frozen = freeze(pretrain(&masked, &pre)?.model);
    timings.pretrain = t.elapsed();
    let r = tune_and_score(&masked, g, &frozen, split, &tc, &mut timings)?;
    Ok((r, timings))
}

/// Pre-trains on `source`, tunes and tests on `target`; both feature sets
/// are reduced to `dim` columns independently.
pub fn run_inductive(source: &Graph, target: &Graph, dim: usize, pipeline: &Pipeline, opts: &RunOptions) -> Result<EvalReport> {
    Ok(run_inductive_timed(source, target, dim, pipeline, opts)?.0)
}

pub fn run_inductive_timed(
    source: &Graph,
    target: &Graph,
    dim: usize,
    pipeline: &Pipeline,
    opts: &RunOptions,
) -> Result<(EvalReport, Vec<PhaseTimings>)> {
    check_labeled(target)?;
    let src = source.with_features(svd_reduce(source.features(), dim)?)?;
    let tgt = target.with_features(svd_reduce(target.features(), dim)?)?;
    let results = map_seeds(&opts.seeds, opts.threads, |seed| {
        let mut timings = PhaseTimings { seed, ..Default::default() };
        let (pre, tc) = with_seed(pipeline, seed);
        let split = kshot_split(&tgt, opts.k, split_seed(seed))?;
        let masked = tgt.with_hidden_labels(&split.test_indices);
        let t = Instant::now();
        let frozen = freeze(pretrain(&src, &pre)?.model);
        timings.pretrain = t.elapsed();
        let r = tune_and_score(&masked, &tgt, &frozen, &split, &tc, &mut timings)?;
        Ok((r, timings))
    })?;
    let (per_seed, timings) = results.into_iter().unzip();
    let name = format!("{}->{}", source.name(), target.name());
    Ok((EvalReport::aggregate("inductive", &name, pipeline, opts.k, per_seed), timings))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationReport {
    pub dataset: String,
    pub rows: Vec<EvalReport>,
}

impl AblationReport {
    pub fn row(&self, v: Variant) -> Option<&EvalReport> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("ablation on {}\n{:<16} {:>18} {:>18}\n", self.dataset, "variant", "macro_f1", "accuracy");
        for r in &self.rows {
            let pm = |m: f64, s: Option<f64>| format!("{m:.4} ± {:.4}", s.unwrap_or(0.0));
            out += &format!(
                "{:<16} {:>18} {:>18}\n",
                r.variant.name(),
                pm(r.mean_macro_f1, r.std_macro_f1),
                pm(r.mean_accuracy, r.std_accuracy)
            );
        }
        out
    }
}

/// Transductive comparison of `variants`. Variants with an identical
/// pre-training configuration share one backbone per seed.
pub fn run_ablation(
    g: &Graph,
    pretrain_cfg: &PretrainConfig,
    tune_cfg: &TuneConfig,
    variants: &[Variant],
    opts: &RunOptions,
) -> Result<AblationReport> {
    check_labeled(g)?;
    let pipelines: Vec<Pipeline> = variants.iter().map(|&v| make_ablation(v, pretrain_cfg, tune_cfg)).collect();
    let per_seed = map_seeds(&opts.seeds, opts.threads, |seed| {
        let split = kshot_split(g, opts.k, split_seed(seed))?;
        let masked = g.with_hidden_labels(&split.test_indices);
        let mut backbones: HashMap<String, FrozenModel> = HashMap::new();
        let mut rows = Vec::with_capacity(pipelines.len());
        for p in &pipelines {
            let (pre, tc) = with_seed(p, seed);
            let key = serde_json::to_string(&pre).expect("config serializes");
            if !backbones.contains_key(&key) {
                let frozen = freeze(pretrain(&masked, &pre)?.model);
                backbones.insert(key.clone(), frozen);
            }
            let frozen = &backbones[&key];
            let mut timings = PhaseTimings::default();
            rows.push(tune_and_score(&masked, g, frozen, &split, &tc, &mut timings)?);
        }
        Ok(rows)
    })?;
    let rows = pipelines
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let results = per_seed.iter().map(|rows| rows[i].clone()).collect();
            EvalReport::aggregate("transductive", g.name(), p, opts.k, results)
        })
        .collect();
    Ok(AblationReport {
        dataset: g.name().to_string(),
        rows,
    })
}
