//! Local-global contrastive pre-training over a Beta-wavelet filter bank.
//!
//! Every filter `k` feeds its own PReLU encoder; the per-filter embeddings are
//! mixed element-wise by softmax weights over the filter axis, mean-pooled
//! into a graph summary, and a bilinear discriminator learns to tell real
//! per-filter node embeddings from those of row-shuffled features.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{shuffle_rows, Graph, LaplacianKind};
use crate::linalg::{axpy, Mat};
use crate::nn::{
    sigmoid, softmax_over_filters, softmax_over_filters_backward, softplus, Adam, Checkpoint, LinearCache,
    LinearLayer, Objective, Param, FORMAT_VERSION,
};
use crate::rng;
use crate::spectral::FilterBank;

pub const MODEL_MAGIC: [u8; 8] = *b"HSGPPTCK";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    /// Filter order `C`; the bank holds `g_{k, C−k}`.
    pub order: usize,
    /// Restrict the bank to these `k`; all `0..=C` when absent.
    pub ks: Option<Vec<usize>>,
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            order: 2,
            ks: None,
            hidden: 64,
            lr: 1e-3,
            epochs: 500,
            patience: 50,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn bank(&self) -> Result<FilterBank> {
        match &self.ks {
            None => Ok(FilterBank::new(self.order)),
            Some(ks) => FilterBank::with_ks(self.order, ks),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bank()?;
        if self.hidden == 0 || self.epochs == 0 || !(self.lr > 0.0) {
            return Err(Error::InvalidParameter(
                "hidden, epochs and lr must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Backbone parameters `θ`: encoders, integration weights, discriminator.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainedModel {
    bank: FilterBank,
    feature_dim: usize,
    hidden: usize,
    pub encoders: Vec<LinearLayer>,
    /// `filters × hidden`, softmax-normalized over the filter axis.
    pub integration: Param,
    pub discriminator: Param,
}

/// Forward products of [`PretrainedModel::encode_filtered`].
#[derive(Clone, Debug)]
pub struct Encoding {
    pub per_filter: Vec<Mat>,
    pub caches: Vec<LinearCache>,
    /// Softmax filter weights, `filters × hidden`.
    pub weights: Mat,
    pub integrated: Mat,
    pub summary: Vec<f64>,
}

/// Element-wise mixture `Σ_k S_k ⊙ Z_k`, rows of `Z_k` weighted by row `k` of `S`.
pub fn integrate(weights: &Mat, per_filter: &[Mat]) -> Mat {
    let (n, h) = per_filter[0].shape();
    let mut z = Mat::zeros(n, h);
    for (k, zk) in per_filter.iter().enumerate() {
        let s = weights.row(k);
        for i in 0..n {
            for ((o, a), w) in z.row_mut(i).iter_mut().zip(zk.row(i)).zip(s) {
                *o += w * a;
            }
        }
    }
    z
}

impl PretrainedModel {
    pub fn new(bank: FilterBank, feature_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(rng::derive_seed(seed, rng::stream::MODEL_INIT, 0));
        let encoders = bank
            .filters()
            .iter()
            .map(|f| LinearLayer::new(&format!("encoder{}", f.k), feature_dim, hidden, true, &mut rng))
            .collect();
        let discriminator = Param::glorot("discriminator", hidden, hidden, &mut rng);
        PretrainedModel {
            integration: Param::zeros("integration", bank.len(), hidden),
            bank,
            feature_dim,
            hidden,
            encoders,
            discriminator,
        }
    }

    pub fn bank(&self) -> &FilterBank {
        &self.bank
    }

    pub fn n_filters(&self) -> usize {
        self.bank.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Fixed traversal order used by the optimizer, hashing and checkpoints.
    pub fn params(&self) -> Vec<&Param> {
        let mut out: Vec<&Param> = self.encoders.iter().flat_map(LinearLayer::params).collect();
        out.push(&self.integration);
        out.push(&self.discriminator);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = self.encoders.iter_mut().flat_map(LinearLayer::params_mut).collect();
        out.push(&mut self.integration);
        out.push(&mut self.discriminator);
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    pub fn filter_weights(&self) -> Mat {
        softmax_over_filters(&self.integration.value)
    }

    /// `g_k(L)·X` for every filter of the bank under the normalized Laplacian.
    pub fn precompute(&self, g: &Graph) -> Result<Vec<Mat>> {
        self.filter_features(g, g.features())
    }

    pub fn filter_features(&self, g: &Graph, x: &Mat) -> Result<Vec<Mat>> {
        if x.cols() != self.feature_dim {
            return Err(Error::shape("encode", self.feature_dim, x.cols()));
        }
        self.bank.apply_all(&g.laplacian(LaplacianKind::Normalized), x)
    }

    pub fn encode(&self, g: &Graph) -> Result<Encoding> {
        self.encode_filtered(&self.precompute(g)?)
    }

    pub fn encode_filtered(&self, filtered: &[Mat]) -> Result<Encoding> {
        if filtered.len() != self.n_filters() {
            return Err(Error::shape("encode", self.n_filters(), filtered.len()));
        }
        let mut per_filter = Vec::with_capacity(filtered.len());
        let mut caches = Vec::with_capacity(filtered.len());
        for (enc, f) in self.encoders.iter().zip(filtered) {
            let (z, c) = enc.forward(f)?;
            per_filter.push(z);
            caches.push(c);
        }
        let weights = self.filter_weights();
        let integrated = integrate(&weights, &per_filter);
        let summary = integrated.col_means();
        Ok(Encoding {
            per_filter,
            caches,
            weights,
            integrated,
            summary,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut header = vec![self.bank.order() as u64, self.bank.len() as u64];
        header.extend(self.bank.ks().iter().map(|&k| k as u64));
        header.push(self.feature_dim as u64);
        header.push(self.hidden as u64);
        Checkpoint {
            magic: MODEL_MAGIC,
            version: FORMAT_VERSION,
            header,
            params: self.params().iter().map(|p| (p.name.clone(), p.value.clone())).collect(),
        }
    }

    pub fn from_checkpoint(mut ck: Checkpoint) -> Result<Self> {
        let h = &ck.header;
        let bad = || Error::Checkpoint("malformed model header".into());
        if h.len() < 4 {
            return Err(bad());
        }
        let order = h[0] as usize;
        let n_filters = h[1] as usize;
        if h.len() != n_filters + 4 {
            return Err(bad());
        }
        let ks: Vec<usize> = h[2..2 + n_filters].iter().map(|&k| k as usize).collect();
        let feature_dim = h[2 + n_filters] as usize;
        let hidden = h[3 + n_filters] as usize;
        let bank = FilterBank::with_ks(order, &ks).map_err(|e| Error::Checkpoint(e.to_string()))?;

        let mut model = PretrainedModel::new(bank, feature_dim, hidden, 0);
        for p in model.params_mut() {
            let (r, c) = p.value.shape();
            p.value = ck.take_param(&p.name, r, c)?;
        }
        if let Some((name, _)) = ck.params.first() {
            return Err(Error::Checkpoint(format!("unexpected parameter `{name}`")));
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        PretrainedModel::from_checkpoint(Checkpoint::load(path, &MODEL_MAGIC)?)
    }

    /// SHA-256 over every parameter's name, shape and little-endian bytes.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for k in self.bank.ks() {
            hasher.update((k as u64).to_le_bytes());
        }
        for p in self.params() {
            hasher.update((p.name.len() as u64).to_le_bytes());
            hasher.update(p.name.as_bytes());
            hasher.update((p.value.rows() as u64).to_le_bytes());
            hasher.update((p.value.cols() as u64).to_le_bytes());
            hasher.update(p.value.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Forward state of the contrastive loss.
#[derive(Clone, Debug)]
pub struct LossForward {
    pub loss: f64,
    pub positive: Encoding,
    pub negative: Vec<Mat>,
    negative_caches: Vec<LinearCache>,
    /// `W·z_g`
    probe: Vec<f64>,
    /// Positive and negative logits, `[filter][node]`.
    pub pos_logits: Vec<Vec<f64>>,
    pub neg_logits: Vec<Vec<f64>>,
}

/// Mean over all `filters·N` positive/negative pairs of
/// `−ln σ(z_ik·W·z_g) − ln(1 − σ(z⁻_ik·W·z_g))`.
pub fn loss_forward(model: &PretrainedModel, pos: &[Mat], neg: &[Mat]) -> Result<LossForward> {
    if pos.len() != neg.len() || pos.iter().zip(neg).any(|(a, b)| a.shape() != b.shape()) {
        return Err(Error::shape("pretrain_loss", "matching positive and negative views", "mismatch"));
    }
    let positive = model.encode_filtered(pos)?;
    let mut negative = Vec::with_capacity(neg.len());
    let mut negative_caches = Vec::with_capacity(neg.len());
    for (enc, f) in model.encoders.iter().zip(neg) {
        let (z, c) = enc.forward(f)?;
        negative.push(z);
        negative_caches.push(c);
    }
    let probe = model.discriminator.value.matvec(&positive.summary);
    let logits = |zs: &[Mat]| -> Vec<Vec<f64>> {
        zs.iter()
            .map(|z| (0..z.rows()).map(|i| crate::linalg::dot(z.row(i), &probe)).collect())
            .collect()
    };
    let pos_logits = logits(&positive.per_filter);
    let neg_logits = logits(&negative);

    let mut total = 0.0;
    let mut count = 0usize;
    for (s_k, t_k) in pos_logits.iter().zip(&neg_logits) {
        for (&s, &t) in s_k.iter().zip(t_k) {
            total += softplus(-s) + softplus(t);
            count += 1;
        }
    }
    Ok(LossForward {
        loss: total / count as f64,
        positive,
        negative,
        negative_caches,
        probe,
        pos_logits,
        neg_logits,
    })
}

/// Accumulates every parameter gradient of the loss evaluated in `fw`.
pub fn loss_backward(model: &mut PretrainedModel, pos: &[Mat], neg: &[Mat], fw: &LossForward) -> Result<()> {
    let n_filters = pos.len();
    let (n, h) = fw.positive.per_filter[0].shape();
    let m = (n_filters * n) as f64;

    let mut d_probe = vec![0.0; h];
    let mut d_pos: Vec<Mat> = (0..n_filters).map(|_| Mat::zeros(n, h)).collect();
    let mut d_neg: Vec<Mat> = (0..n_filters).map(|_| Mat::zeros(n, h)).collect();
    for k in 0..n_filters {
        for i in 0..n {
            let ds = (sigmoid(fw.pos_logits[k][i]) - 1.0) / m;
            let dt = sigmoid(fw.neg_logits[k][i]) / m;
            axpy(ds, &fw.probe, d_pos[k].row_mut(i));
            axpy(dt, &fw.probe, d_neg[k].row_mut(i));
            axpy(ds, fw.positive.per_filter[k].row(i), &mut d_probe);
            axpy(dt, fw.negative[k].row(i), &mut d_probe);
        }
    }

    // probe = W·z_g
    let summary = &fw.positive.summary;
    for (a, dpa) in d_probe.iter().enumerate() {
        axpy(*dpa, summary, model.discriminator.grad.row_mut(a));
    }
    let d_summary = model.discriminator.value.transpose().matvec(&d_probe);

    // z_g = mean_i Z_i, Z = Σ_k S_k ⊙ Z_k
    let d_row: Vec<f64> = d_summary.iter().map(|v| v / n as f64).collect();
    let weights = &fw.positive.weights;
    let mut d_weights = Mat::zeros(n_filters, h);
    for k in 0..n_filters {
        let scaled: Vec<f64> = d_row.iter().zip(weights.row(k)).map(|(d, s)| d * s).collect();
        for i in 0..n {
            for (o, s) in d_pos[k].row_mut(i).iter_mut().zip(&scaled) {
                *o += s;
            }
        }
        let col_sums = fw.positive.per_filter[k].col_sums();
        for (dw, (d, cs)) in d_weights.row_mut(k).iter_mut().zip(d_row.iter().zip(&col_sums)) {
            *dw = d * cs;
        }
    }
    let d_integration = softmax_over_filters_backward(weights, &d_weights);
    model.integration.grad.add_assign(&d_integration);

    for k in 0..n_filters {
        model.encoders[k].backward_params(&pos[k], &fw.positive.caches[k], &d_pos[k])?;
        model.encoders[k].backward_params(&neg[k], &fw.negative_caches[k], &d_neg[k])?;
    }
    Ok(())
}

/// Contrastive loss of `model` on `g` against the corrupted features.
pub fn pretrain_loss(model: &PretrainedModel, g: &Graph, corrupted_x: &Mat) -> Result<f64> {
    if corrupted_x.shape() != g.features().shape() {
        return Err(Error::shape(
            "pretrain_loss",
            format!("{:?}", g.features().shape()),
            format!("{:?}", corrupted_x.shape()),
        ));
    }
    let pos = model.precompute(g)?;
    let neg = model.filter_features(g, corrupted_x)?;
    Ok(loss_forward(model, &pos, &neg)?.loss)
}

/// The contrastive loss with both views held fixed.
pub struct PretrainObjective {
    pub model: PretrainedModel,
    pub positive: Vec<Mat>,
    pub negative: Vec<Mat>,
}

impl PretrainObjective {
    pub fn new(model: PretrainedModel, g: &Graph, corrupted_x: &Mat) -> Result<Self> {
        let positive = model.precompute(g)?;
        let negative = model.filter_features(g, corrupted_x)?;
        Ok(PretrainObjective {
            model,
            positive,
            negative,
        })
    }
}

impl Objective for PretrainObjective {
    fn n_params(&self) -> usize {
        self.model.params().len()
    }

    fn param(&self, i: usize) -> &Param {
        self.model.params()[i]
    }

    fn param_mut(&mut self, i: usize) -> &mut Param {
        self.model.params_mut().swap_remove(i)
    }

    fn loss(&self) -> Result<f64> {
        Ok(loss_forward(&self.model, &self.positive, &self.negative)?.loss)
    }

    fn backward(&mut self) -> Result<f64> {
        self.model.params_mut().into_iter().for_each(Param::zero_grad);
        let fw = loss_forward(&self.model, &self.positive, &self.negative)?;
        loss_backward(&mut self.model, &self.positive, &self.negative, &fw)?;
        Ok(fw.loss)
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    /// Parameters at the epoch with the lowest loss.
    pub model: PretrainedModel,
    pub history: Vec<f64>,
    pub best_epoch: usize,
    pub best_loss: f64,
}

/// Trains with a fresh row shuffle of the features every epoch and stops
/// once the loss has not improved for `patience` epochs.
pub fn pretrain(g: &Graph, cfg: &PretrainConfig) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let mut model = PretrainedModel::new(cfg.bank()?, g.feature_dim(), cfg.hidden, cfg.seed);
    let l = g.laplacian(LaplacianKind::Normalized);
    let pos = model.bank().apply_all(&l, g.features())?;
    let mut adam = Adam::new(cfg.lr);

    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.clone());
    for epoch in 0..cfg.epochs {
        let shuffled = shuffle_rows(
            g.features(),
            rng::derive_seed(cfg.seed, rng::stream::CORRUPTION, epoch as u64),
        );
        let neg = model.bank().apply_all(&l, &shuffled)?;
        let fw = loss_forward(&model, &pos, &neg)?;
        if !fw.loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, loss: fw.loss });
        }
        history.push(fw.loss);
        if fw.loss < best.0 {
            best = (fw.loss, epoch, model.clone());
        } else if epoch - best.1 >= cfg.patience {
            log::debug!("early stop at epoch {epoch}, best {} at {}", best.0, best.1);
            break;
        }
        loss_backward(&mut model, &pos, &neg, &fw)?;
        adam.step(&mut model.params_mut());
    }
    let (best_loss, best_epoch, model) = best;
    Ok(PretrainOutcome {
        model,
        history,
        best_epoch,
        best_loss,
    })
}

/// Read-only handle on a trained backbone with its content hash.
#[derive(Clone, Debug)]
pub struct FrozenModel {
    model: PretrainedModel,
    hash: String,
}

pub fn freeze(model: PretrainedModel) -> FrozenModel {
    let hash = model.content_hash();
    FrozenModel { model, hash }
}

impl FrozenModel {
    pub fn model(&self) -> &PretrainedModel {
        &self.model
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Recomputes the content hash and compares it with the recorded one.
    pub fn verify(&self) -> Result<()> {
        let found = self.model.content_hash();
        if found == self.hash {
            Ok(())
        } else {
            Err(Error::FrozenViolation {
                expected: self.hash.clone(),
                found,
            })
        }
    }

    /// Always refused: parameters behind a frozen handle cannot be borrowed
    /// mutably.
    pub fn params_mut(&mut self) -> Result<Vec<&mut Param>> {
        Err(Error::Frozen)
    }

    /// Gives up the frozen contract and returns the owned model.
    pub fn into_inner(self) -> PretrainedModel {
        self.model
    }
}
