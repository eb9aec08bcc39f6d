use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::graph::{
    build_cross_edges, build_inner_edges, normalize_backward, normalize_with_stats, FeatureStats, NormCache,
    PromptGraph,
};
use crate::error::{Error, Result};
use crate::eval::{argmax_rows, f1_score, F1Average};
use crate::graph::{laplacian_from_edges, DatasetSplit, Graph, LaplacianKind};
use crate::linalg::{CsrMatrix, Mat};
use crate::nn::{
    softmax_cross_entropy, softmax_rows, Adam, Checkpoint, LinearCache, LinearLayer, Objective, Param,
    FORMAT_VERSION,
};
use crate::pretrain::{integrate, FrozenModel, PretrainConfig, PretrainedModel};
use crate::rng;
use crate::spectral::{beta_filter_apply, beta_filter_apply_rows};

pub const PROMPT_MAGIC: [u8; 8] = *b"HSGPPTPS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    /// Prompt nodes per prompt graph.
    pub n_prompt: usize,
    pub tau_inner: f64,
    pub tau_cross: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Validation F1 is computed every this many epochs and on the last one.
    pub val_every: usize,
    /// One prompt graph shared by all filters.
    pub shared_prompt: bool,
    pub normalize_prompt: bool,
    pub metric: F1Average,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            n_prompt: 10,
            tau_inner: 0.2,
            tau_cross: 0.4,
            lr: 5e-3,
            epochs: 2000,
            val_every: 10,
            shared_prompt: false,
            normalize_prompt: true,
            metric: F1Average::Macro,
            seed: 0,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("tau_inner", self.tau_inner), ("tau_cross", self.tau_cross)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {t}")));
            }
        }
        if self.epochs == 0 || self.val_every == 0 || !(self.lr > 0.0) {
            return Err(Error::InvalidParameter("epochs, val_every and lr must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    LowPassOnly,
    SinglePrompt,
    NoPrompt,
    NoPromptNorm,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::LowPassOnly,
        Variant::SinglePrompt,
        Variant::NoPrompt,
        Variant::NoPromptNorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::LowPassOnly => "low_pass_only",
            Variant::SinglePrompt => "single_prompt",
            Variant::NoPrompt => "no_prompt",
            Variant::NoPromptNorm => "no_prompt_norm",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Pre-training and tuning settings of one model variant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Pipeline {
    pub variant: Variant,
    pub pretrain: PretrainConfig,
    pub tune: TuneConfig,
}

pub fn make_ablation(variant: Variant, pretrain: &PretrainConfig, tune: &TuneConfig) -> Pipeline {
    let mut p = Pipeline {
        variant,
        pretrain: pretrain.clone(),
        tune: tune.clone(),
    };
    match variant {
        Variant::Full => {}
        Variant::LowPassOnly => p.pretrain.ks = Some(vec![0]),
        Variant::SinglePrompt => p.tune.shared_prompt = true,
        Variant::NoPrompt => p.tune.n_prompt = 0,
        Variant::NoPromptNorm => p.tune.normalize_prompt = false,
    }
    p
}

/// Learnable prompt graphs plus the classification head.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptState {
    pub prompts: Vec<PromptGraph>,
    pub shared: bool,
    pub normalize: bool,
    pub head: LinearLayer,
}

impl PromptState {
    pub fn new(model: &PretrainedModel, stats: &FeatureStats, n_classes: usize, cfg: &TuneConfig) -> Self {
        let count = if cfg.shared_prompt { 1 } else { model.n_filters() };
        let prompts = (0..count)
            .map(|i| {
                let mut r = rng::seeded(rng::derive_seed(cfg.seed, rng::stream::PROMPT_INIT, i as u64));
                PromptGraph::init(&format!("prompt{i}"), cfg.n_prompt, stats, cfg.tau_inner, cfg.tau_cross, &mut r)
            })
            .collect();
        let mut r = rng::seeded(rng::derive_seed(cfg.seed, rng::stream::HEAD_INIT, 0));
        PromptState {
            prompts,
            shared: cfg.shared_prompt,
            normalize: cfg.normalize_prompt,
            head: LinearLayer::new("head", model.hidden(), n_classes, false, &mut r),
        }
    }

    /// Prompt used by filter `k` (position in the bank).
    pub fn prompt_index(&self, k: usize) -> usize {
        if self.shared {
            0
        } else {
            k
        }
    }

    pub fn n_classes(&self) -> usize {
        self.head.out_dim()
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out: Vec<&Param> = self.prompts.iter().map(|p| &p.p).collect();
        out.extend(self.head.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = self.prompts.iter_mut().map(|p| &mut p.p).collect();
        out.extend(self.head.params_mut());
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    pub fn prompt_param_count(&self) -> usize {
        self.prompts.iter().map(|p| p.p.numel()).sum()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let first = &self.prompts[0];
        let header = vec![
            self.prompts.len() as u64,
            self.shared as u64,
            self.normalize as u64,
            first.n_prompt() as u64,
            first.p.value.cols() as u64,
            self.head.in_dim() as u64,
            self.head.out_dim() as u64,
            first.tau_inner.to_bits(),
            first.tau_cross.to_bits(),
        ];
        Checkpoint {
            magic: PROMPT_MAGIC,
            version: FORMAT_VERSION,
            header,
            params: self.params().iter().map(|p| (p.name.clone(), p.value.clone())).collect(),
        }
    }

    pub fn from_checkpoint(mut ck: Checkpoint) -> Result<Self> {
        let h = ck.header.clone();
        if h.len() != 9 || h[0] == 0 {
            return Err(Error::Checkpoint("malformed prompt header".into()));
        }
        let (count, n_prompt, d, hidden, classes) = (h[0] as usize, h[3] as usize, h[4] as usize, h[5] as usize, h[6] as usize);
        let (tau_inner, tau_cross) = (f64::from_bits(h[7]), f64::from_bits(h[8]));
        let mut prompts = Vec::with_capacity(count);
        for i in 0..count {
            let name = format!("prompt{i}");
            let value = ck.take_param(&name, n_prompt, d)?;
            prompts.push(PromptGraph {
                p: Param::new(name, value),
                tau_inner,
                tau_cross,
            });
        }
        let mut head = LinearLayer::new("head", hidden, classes, false, &mut rng::seeded(0));
        for p in head.params_mut() {
            let (r, c) = p.value.shape();
            p.value = ck.take_param(&p.name, r, c)?;
        }
        Ok(PromptState {
            prompts,
            shared: h[1] != 0,
            normalize: h[2] != 0,
            head,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        PromptState::from_checkpoint(Checkpoint::load(path, &PROMPT_MAGIC)?)
    }
}

/// One prompt's normalized features and the resulting prompted structure.
#[derive(Clone, Debug)]
struct PromptView {
    p_prime: Mat,
    norm: Option<NormCache>,
    inner: Vec<(usize, usize)>,
    cross: Vec<(usize, usize)>,
    laplacian: Arc<CsrMatrix>,
    /// `[X; P']`
    features: Mat,
}

/// Immutable context shared by every forward pass of one tuning run.
struct Context<'a> {
    g: &'a Graph,
    model: &'a PretrainedModel,
    stats: FeatureStats,
    weights: Mat,
}

impl<'a> Context<'a> {
    fn new(g: &'a Graph, model: &'a PretrainedModel) -> Result<Self> {
        if g.feature_dim() != model.feature_dim() {
            return Err(Error::shape("prompt tuning", model.feature_dim(), g.feature_dim()));
        }
        Ok(Context {
            g,
            model,
            stats: FeatureStats::of(g.features()),
            weights: model.filter_weights(),
        })
    }

    fn normalized(&self, state: &PromptState, i: usize) -> (Mat, Option<NormCache>) {
        let p = &state.prompts[i].p.value;
        if state.normalize {
            let (out, cache) = normalize_with_stats(p, &self.stats);
            (out, Some(cache))
        } else {
            (p.clone(), None)
        }
    }

    /// Builds every prompt view, reusing a previous Laplacian whenever the
    /// edge sets are unchanged.
    fn views(&self, state: &PromptState, previous: Option<&[PromptView]>) -> Result<Vec<PromptView>> {
        let x = self.g.features();
        let mut out = Vec::with_capacity(state.prompts.len());
        for (i, prompt) in state.prompts.iter().enumerate() {
            let (p_prime, norm) = self.normalized(state, i);
            let inner = build_inner_edges(&p_prime, prompt.tau_inner);
            let cross = build_cross_edges(&p_prime, x, prompt.tau_cross)?;
            let reuse = previous
                .and_then(|prev| prev.get(i))
                .filter(|v| v.inner == inner && v.cross == cross && v.p_prime.rows() == p_prime.rows());
            let laplacian = match reuse {
                Some(v) => Arc::clone(&v.laplacian),
                None => Arc::new(self.laplacian(p_prime.rows(), &inner, &cross)),
            };
            out.push(PromptView {
                features: x.vstack(&p_prime),
                p_prime,
                norm,
                inner,
                cross,
                laplacian,
            });
        }
        Ok(out)
    }

    /// Recomputes features from the current prompts while keeping the
    /// structure of `fixed`.
    fn views_with_structure(&self, state: &PromptState, fixed: &[PromptView]) -> Vec<PromptView> {
        fixed
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let (p_prime, norm) = self.normalized(state, i);
                PromptView {
                    features: self.g.features().vstack(&p_prime),
                    p_prime,
                    norm,
                    inner: v.inner.clone(),
                    cross: v.cross.clone(),
                    laplacian: Arc::clone(&v.laplacian),
                }
            })
            .collect()
    }

    fn laplacian(&self, n_prompt: usize, inner: &[(usize, usize)], cross: &[(usize, usize)]) -> CsrMatrix {
        let n = self.g.n_nodes();
        if n_prompt == 0 {
            return self.g.laplacian(LaplacianKind::Normalized);
        }
        let mut edges = self.g.edges().to_vec();
        edges.extend(inner.iter().map(|&(a, b)| (n + a, n + b)));
        edges.extend(cross.iter().map(|&(p, j)| (j, n + p)));
        laplacian_from_edges(n + n_prompt, &edges, LaplacianKind::Normalized)
    }

    /// Integrated embeddings of every original node.
    fn encode_all(&self, state: &PromptState, views: &[PromptView]) -> Result<Mat> {
        let n = self.g.n_nodes();
        let mut per_filter = Vec::with_capacity(self.model.n_filters());
        for (k, (filter, enc)) in self.model.bank().filters().iter().zip(&self.model.encoders).enumerate() {
            let v = &views[state.prompt_index(k)];
            let mut f = beta_filter_apply(&v.laplacian, filter.k, filter.r, &v.features)?;
            if f.rows() != n {
                f = f.select_rows(&(0..n).collect::<Vec<_>>());
            }
            per_filter.push(enc.forward(&f)?.0);
        }
        Ok(integrate(&self.weights, &per_filter))
    }

    /// Integrated embeddings of `rows` through full propagation.
    fn encode_rows(&self, state: &PromptState, views: &[PromptView], rows: &[usize]) -> Result<Mat> {
        let mut per_filter = Vec::with_capacity(self.model.n_filters());
        for (k, (filter, enc)) in self.model.bank().filters().iter().zip(&self.model.encoders).enumerate() {
            let v = &views[state.prompt_index(k)];
            let f = beta_filter_apply_rows(&v.laplacian, filter.k, filter.r, &v.features, rows)?;
            per_filter.push(enc.forward(&f)?.0);
        }
        Ok(integrate(&self.weights, &per_filter))
    }

    /// Forward pass restricted to `rows` of the original graph.
    fn rows_forward(&self, state: &PromptState, views: &[PromptView], rows: &[usize]) -> Result<RowsForward> {
        let n = self.g.n_nodes();
        let mut per_filter = Vec::with_capacity(self.model.n_filters());
        let mut enc_caches = Vec::with_capacity(self.model.n_filters());
        let mut prompt_rows = Vec::with_capacity(self.model.n_filters());
        for (k, (filter, enc)) in self.model.bank().filters().iter().zip(&self.model.encoders).enumerate() {
            let v = &views[state.prompt_index(k)];
            let total = v.features.rows();
            // g(L̃) is symmetric: column c of g(L̃)·E is row rows[c] of g(L̃)
            let mut e = Mat::zeros(total, rows.len());
            for (c, &r) in rows.iter().enumerate() {
                e.row_mut(r)[c] = 1.0;
            }
            let g_rows = beta_filter_apply(&v.laplacian, filter.k, filter.r, &e)?;
            let f = g_rows.matmul_tn(&v.features);
            let prompt_part = if total > n {
                g_rows.select_rows(&(n..total).collect::<Vec<_>>())
            } else {
                Mat::zeros(0, rows.len())
            };
            let (z, cache) = enc.forward(&f)?;
            per_filter.push(z);
            enc_caches.push(cache);
            prompt_rows.push(prompt_part);
        }
        let integrated = integrate(&self.weights, &per_filter);
        let (logits, head_cache) = state.head.forward(&integrated)?;
        Ok(RowsForward {
            enc_caches,
            prompt_rows,
            integrated,
            head_cache,
            logits,
        })
    }

    fn loss_forward(
        &self,
        state: &PromptState,
        views: &[PromptView],
        rows: &[usize],
        labels: &[usize],
    ) -> Result<(f64, Mat, RowsForward)> {
        let fw = self.rows_forward(state, views, rows)?;
        let all: Vec<usize> = (0..rows.len()).collect();
        let (loss, d_logits) = softmax_cross_entropy(&fw.logits, labels, &all)?;
        Ok((loss, d_logits, fw))
    }

    /// Accumulates gradients of prompts and head; the backbone is only read.
    fn backward(&self, state: &mut PromptState, views: &[PromptView], fw: &RowsForward, d_logits: &Mat) -> Result<()> {
        state.head.backward_params(&fw.integrated, &fw.head_cache, d_logits)?;
        let d_z = state.head.input_grad(&fw.head_cache, d_logits)?;

        let mut d_prime: Vec<Mat> = views.iter().map(|v| Mat::zeros(v.p_prime.rows(), v.p_prime.cols())).collect();
        for (k, enc) in self.model.encoders.iter().enumerate() {
            let mut d_zk = d_z.clone();
            let s = self.weights.row(k);
            for i in 0..d_zk.rows() {
                for (v, w) in d_zk.row_mut(i).iter_mut().zip(s) {
                    *v *= w;
                }
            }
            let d_f = enc.input_grad(&fw.enc_caches[k], &d_zk)?;
            let pi = state.prompt_index(k);
            if fw.prompt_rows[k].rows() > 0 {
                d_prime[pi].add_assign(&fw.prompt_rows[k].matmul(&d_f));
            }
        }
        for (i, (d, v)) in d_prime.iter().zip(views).enumerate() {
            let dp = match &v.norm {
                Some(cache) => normalize_backward(cache, d),
                None => d.clone(),
            };
            state.prompts[i].p.grad.add_assign(&dp);
        }
        Ok(())
    }
}

struct RowsForward {
    enc_caches: Vec<LinearCache>,
    /// Prompt-node columns of the selected filter rows, `N_p × |rows|`.
    prompt_rows: Vec<Mat>,
    integrated: Mat,
    head_cache: LinearCache,
    logits: Mat,
}

/// Integrated embeddings `z̃` of the original nodes under the prompts.
pub fn prompted_encode(g: &Graph, frozen: &FrozenModel, state: &PromptState) -> Result<Mat> {
    let ctx = Context::new(g, frozen.model())?;
    check_state(&ctx, state)?;
    let views = ctx.views(state, None)?;
    ctx.encode_all(state, &views)
}

/// Class probabilities for every original node.
pub fn predict(g: &Graph, frozen: &FrozenModel, state: &PromptState) -> Result<Mat> {
    let z = prompted_encode(g, frozen, state)?;
    let (logits, _) = state.head.forward(&z)?;
    Ok(softmax_rows(&logits))
}

fn check_state(ctx: &Context<'_>, state: &PromptState) -> Result<()> {
    let expected = if state.shared { 1 } else { ctx.model.n_filters() };
    if state.prompts.len() != expected {
        return Err(Error::shape("prompt state", format!("{expected} prompt graphs"), state.prompts.len()));
    }
    for p in &state.prompts {
        p.validate()?;
        if p.p.value.cols() != ctx.g.feature_dim() {
            return Err(Error::shape("prompt state", ctx.g.feature_dim(), p.p.value.cols()));
        }
    }
    if state.head.in_dim() != ctx.model.hidden() {
        return Err(Error::shape("prompt head", ctx.model.hidden(), state.head.in_dim()));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct TuneEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub val_f1: Option<f64>,
    /// Wall-clock of the epoch, validation included.
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct TuneOutcome {
    /// State with the best validation F1.
    pub state: PromptState,
    pub history: Vec<TuneEpoch>,
    pub best_epoch: usize,
    pub best_val_f1: f64,
}

fn labels_for(g: &Graph, idx: &[usize]) -> Result<Vec<usize>> {
    let labels = g.labels().ok_or(Error::LabelsAbsent)?;
    idx.iter()
        .map(|&i| {
            labels
                .get(i)
                .ok_or_else(|| Error::InvalidParameter(format!("node {i} is in the split but has no label")))
        })
        .collect()
}

/// Optimizes prompts and head on the split's shots with the backbone frozen.
pub fn tune(g: &Graph, frozen: &FrozenModel, split: &DatasetSplit, cfg: &TuneConfig) -> Result<TuneOutcome> {
    cfg.validate()?;
    frozen.verify()?;
    let ctx = Context::new(g, frozen.model())?;
    let n_classes = g.labels().ok_or(Error::LabelsAbsent)?.n_classes();
    let shots = split.shots();
    let shot_labels = labels_for(g, &shots)?;
    let val = &split.val_indices;
    let val_labels = labels_for(g, val)?;
    let val_local: Vec<usize> = (0..val.len()).collect();

    let mut state = PromptState::new(ctx.model, &ctx.stats, n_classes, cfg);
    check_state(&ctx, &state)?;
    let mut adam = Adam::new(cfg.lr);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, PromptState)> = None;
    let mut views: Option<Vec<PromptView>> = None;

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let current = ctx.views(&state, views.as_deref())?;
        let (loss, d_logits, fw) = ctx.loss_forward(&state, &current, &shots, &shot_labels)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, loss });
        }

        let mut val_f1 = None;
        if epoch % cfg.val_every == 0 || epoch + 1 == cfg.epochs {
            let f1 = if val.is_empty() {
                0.0
            } else {
                let z = ctx.encode_rows(&state, &current, val)?;
                let pred = argmax_rows(&state.head.forward(&z)?.0);
                f1_score(cfg.metric, &pred, &val_labels, &val_local, n_classes)?
            };
            val_f1 = Some(f1);
            if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                best = Some((f1, epoch, state.clone()));
            }
        }
        ctx.backward(&mut state, &current, &fw, &d_logits)?;
        adam.step(&mut state.params_mut());
        history.push(TuneEpoch {
            epoch,
            loss,
            val_f1,
            elapsed: started.elapsed(),
        });
        views = Some(current);
    }
    frozen.verify()?;

    let (best_val_f1, best_epoch, state) = best.expect("at least one validation pass");
    Ok(TuneOutcome {
        state,
        history,
        best_epoch,
        best_val_f1,
    })
}

/// Tuning loss on a fixed set of rows with the edge sets of the starting
/// prompts held constant; used for gradient checking.
pub struct TuneObjective<'a> {
    ctx: Context<'a>,
    fixed: Vec<PromptView>,
    pub state: PromptState,
    rows: Vec<usize>,
    labels: Vec<usize>,
}

impl<'a> TuneObjective<'a> {
    pub fn new(g: &'a Graph, frozen: &'a FrozenModel, state: PromptState, rows: Vec<usize>) -> Result<Self> {
        let ctx = Context::new(g, frozen.model())?;
        check_state(&ctx, &state)?;
        let labels = labels_for(g, &rows)?;
        let fixed = ctx.views(&state, None)?;
        Ok(TuneObjective {
            ctx,
            fixed,
            state,
            rows,
            labels,
        })
    }

    /// Number of (inner, cross) edges in the fixed structure of each prompt.
    pub fn edge_counts(&self) -> Vec<(usize, usize)> {
        self.fixed.iter().map(|v| (v.inner.len(), v.cross.len())).collect()
    }
}

impl Objective for TuneObjective<'_> {
    fn n_params(&self) -> usize {
        self.state.params().len()
    }

    fn param(&self, i: usize) -> &Param {
        self.state.params()[i]
    }

    fn param_mut(&mut self, i: usize) -> &mut Param {
        self.state.params_mut().swap_remove(i)
    }

    fn loss(&self) -> Result<f64> {
        let views = self.ctx.views_with_structure(&self.state, &self.fixed);
        Ok(self.ctx.loss_forward(&self.state, &views, &self.rows, &self.labels)?.0)
    }

    fn backward(&mut self) -> Result<f64> {
        self.state.params_mut().into_iter().for_each(Param::zero_grad);
        let views = self.ctx.views_with_structure(&self.state, &self.fixed);
        let (loss, d_logits, fw) = self.ctx.loss_forward(&self.state, &views, &self.rows, &self.labels)?;
        self.ctx.backward(&mut self.state, &views, &fw, &d_logits)?;
        Ok(loss)
    }
}

/// Embeddings of `rows` through the row-restricted path used in training.
pub fn prompted_encode_rows(g: &Graph, frozen: &FrozenModel, state: &PromptState, rows: &[usize]) -> Result<Mat> {
    let ctx = Context::new(g, frozen.model())?;
    check_state(&ctx, state)?;
    let views = ctx.views(state, None)?;
    Ok(ctx.rows_forward(state, &views, rows)?.integrated)
}
