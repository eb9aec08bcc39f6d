use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Column-wise softmax of a `filters × dim` matrix.
pub fn softmax_over_filters(w: &Mat) -> Mat {
    let (rows, cols) = w.shape();
    let mut out = Mat::zeros(rows, cols);
    for j in 0..cols {
        let max = (0..rows).map(|k| w[(k, j)]).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for k in 0..rows {
            let e = (w[(k, j)] - max).exp();
            out.row_mut(k)[j] = e;
            total += e;
        }
        for k in 0..rows {
            out.row_mut(k)[j] /= total;
        }
    }
    out
}

/// Pulls `∂loss/∂S` back through `S = softmax_over_filters(w)`.
pub fn softmax_over_filters_backward(s: &Mat, ds: &Mat) -> Mat {
    let (rows, cols) = s.shape();
    let mut dw = Mat::zeros(rows, cols);
    for j in 0..cols {
        let inner: f64 = (0..rows).map(|k| s[(k, j)] * ds[(k, j)]).sum();
        for k in 0..rows {
            dw.row_mut(k)[j] = s[(k, j)] * (ds[(k, j)] - inner);
        }
    }
    dw
}

/// `σ(zᵀ·W·s)`
pub fn bilinear_discriminator(z: &[f64], w: &Mat, s: &[f64]) -> Result<f64> {
    if w.rows() != z.len() || w.cols() != s.len() {
        return Err(Error::shape(
            "bilinear_discriminator",
            format!("{}x{}", z.len(), s.len()),
            format!("{}x{}", w.rows(), w.cols()),
        ));
    }
    Ok(sigmoid(dot(z, &w.matvec(s))))
}

/// Gradients of the discriminator score itself.
#[derive(Clone, Debug)]
pub struct BilinearGrad {
    pub score: f64,
    pub dz: Vec<f64>,
    pub dw: Mat,
    pub ds: Vec<f64>,
}

pub fn bilinear_discriminator_grad(z: &[f64], w: &Mat, s: &[f64]) -> Result<BilinearGrad> {
    let score = bilinear_discriminator(z, w, s)?;
    let gate = score * (1.0 - score);
    let ws = w.matvec(s);
    let wtz = w.transpose().matvec(z);
    let mut dw = Mat::zeros(w.rows(), w.cols());
    for (i, zi) in z.iter().enumerate() {
        for (d, sj) in dw.row_mut(i).iter_mut().zip(s) {
            *d = gate * zi * sj;
        }
    }
    Ok(BilinearGrad {
        score,
        dz: ws.iter().map(|v| gate * v).collect(),
        dw,
        ds: wtz.iter().map(|v| gate * v).collect(),
    })
}

pub const SCORE_CLAMP: f64 = 1e-12;

/// `−(1/M)·Σ[ln pos + ln(1 − neg)]` over `M` positive/negative pairs.
pub fn bce_pair_loss(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.len() != neg.len() {
        return Err(Error::shape("bce_pair_loss", pos.len(), neg.len()));
    }
    if pos.is_empty() {
        return Err(Error::EmptyMask);
    }
    let clamp = |p: f64| p.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
    let total: f64 = pos
        .iter()
        .zip(neg)
        .map(|(&p, &q)| clamp(p).ln() + (1.0 - clamp(q)).ln())
        .sum();
    Ok(-total / pos.len() as f64)
}

/// Mean cross-entropy over `mask`, with its gradient (zero off-mask).
pub fn softmax_cross_entropy(logits: &Mat, labels: &[usize], mask: &[usize]) -> Result<(f64, Mat)> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if labels.len() != logits.rows() {
        return Err(Error::shape("softmax_cross_entropy", logits.rows(), labels.len()));
    }
    let c = logits.cols();
    let m = mask.len() as f64;
    let mut grad = Mat::zeros(logits.rows(), c);
    let mut loss = 0.0;
    for &i in mask {
        let y = labels[i];
        if y >= c {
            return Err(Error::InvalidParameter(format!("label {y} out of range for {c} classes")));
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y];
        let g = grad.row_mut(i);
        for (gk, v) in g.iter_mut().zip(row) {
            *gk = (v - log_z).exp() / m;
        }
        g[y] -= 1.0 / m;
    }
    Ok((loss / m, grad))
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Mat) -> Mat {
    softmax_over_filters(&logits.transpose()).transpose()
}
