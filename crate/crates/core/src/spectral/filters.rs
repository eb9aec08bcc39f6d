use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Mat};

/// `1 / (2·B(k+1, r+1)) = (k+r+1)! / (2·k!·r!)`.
///
/// Exact in integer arithmetic while the binomial fits in `u128`, which
/// covers every order this crate uses; larger orders go through log-space.
pub fn beta_constant(k: usize, r: usize) -> f64 {
    match binomial_u128(k + r, k.min(r)).and_then(|b| b.checked_mul((k + r + 1) as u128)) {
        Some(v) => v as f64 / 2.0,
        None => {
            let ln_fact = |m: usize| (1..=m).map(|i| (i as f64).ln()).sum::<f64>();
            (ln_fact(k + r + 1) - ln_fact(k) - ln_fact(r) - std::f64::consts::LN_2).exp()
        }
    }
}

fn binomial_u128(n: usize, k: usize) -> Option<u128> {
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc·(n−i) is divisible by (i+1) at every step
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

fn check_frequency(lambda: f64) -> Result<()> {
    if (0.0..=2.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::FrequencyOutOfRange(lambda))
    }
}

/// A fixed spectral response on `[0, 2]`.
pub trait SpectralFilter {
    /// Response without range checking.
    fn response_raw(&self, lambda: f64) -> f64;

    fn response(&self, lambda: f64) -> Result<f64> {
        check_frequency(lambda)?;
        Ok(self.response_raw(lambda))
    }

    /// `g(L)·X` as a polynomial in the sparse `L`.
    fn apply(&self, l: &CsrMatrix, x: &Mat) -> Result<Mat>;

    fn label(&self) -> String;
}

pub fn filter_response(filter: &impl SpectralFilter, lambda: f64) -> Result<f64> {
    filter.response(lambda)
}

/// One Beta-wavelet kernel `g_{k,r}(λ) = c·(λ/2)^k·(1−λ/2)^r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaFilter {
    pub k: usize,
    pub r: usize,
    pub constant: f64,
}

impl BetaFilter {
    pub fn new(k: usize, r: usize) -> Self {
        BetaFilter {
            k,
            r,
            constant: beta_constant(k, r),
        }
    }
}

impl SpectralFilter for BetaFilter {
    fn response_raw(&self, lambda: f64) -> f64 {
        let t = lambda / 2.0;
        self.constant * t.powi(self.k as i32) * (1.0 - t).powi(self.r as i32)
    }

    fn apply(&self, l: &CsrMatrix, x: &Mat) -> Result<Mat> {
        beta_filter_apply(l, self.k, self.r, x)
    }

    fn label(&self) -> String {
        format!("g_{}_{}", self.k, self.r)
    }
}

/// `c·(L/2)^k·(I − L/2)^r·X` through `k + r` sparse products.
pub fn beta_filter_apply(l: &CsrMatrix, k: usize, r: usize, x: &Mat) -> Result<Mat> {
    let n = l.n_rows();
    if l.n_cols() != n || x.rows() != n {
        return Err(Error::shape(
            "beta_filter_apply",
            format!("{n}x{n} operator and {n}-row signal"),
            format!("{}x{} operator and {}-row signal", l.n_rows(), l.n_cols(), x.rows()),
        ));
    }
    let mut cur = x.clone();
    let mut tmp = Mat::zeros(n, x.cols());
    for _ in 0..r {
        l.mul_dense_into(&cur, &mut tmp);
        cur.add_scaled(-0.5, &tmp);
    }
    for _ in 0..k {
        l.mul_dense_into(&cur, &mut tmp);
        std::mem::swap(&mut cur, &mut tmp);
        cur.scale(0.5);
    }
    cur.scale(beta_constant(k, r));
    Ok(cur)
}

/// Rows `rows` of [`beta_filter_apply`]; the last propagation step is
/// evaluated on those rows only.
pub fn beta_filter_apply_rows(l: &CsrMatrix, k: usize, r: usize, x: &Mat, rows: &[usize]) -> Result<Mat> {
    let n = l.n_rows();
    if l.n_cols() != n || x.rows() != n {
        return Err(Error::shape(
            "beta_filter_apply_rows",
            format!("{n}x{n} operator and {n}-row signal"),
            format!("{}x{} operator and {}-row signal", l.n_rows(), l.n_cols(), x.rows()),
        ));
    }
    if let Some(&bad) = rows.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidParameter(format!("row {bad} out of range for {n} nodes")));
    }
    let c = beta_constant(k, r);
    if k + r == 0 {
        return Ok(x.select_rows(rows).scaled(c));
    }
    let mut cur = x.clone();
    let mut tmp = Mat::zeros(n, x.cols());
    let (full_r, full_k) = if k > 0 { (r, k - 1) } else { (r - 1, 0) };
    for _ in 0..full_r {
        l.mul_dense_into(&cur, &mut tmp);
        cur.add_scaled(-0.5, &tmp);
    }
    for _ in 0..full_k {
        l.mul_dense_into(&cur, &mut tmp);
        std::mem::swap(&mut cur, &mut tmp);
        cur.scale(0.5);
    }
    let last = l.mul_dense_rows(&cur, rows);
    let mut out = if k > 0 {
        last.scaled(0.5)
    } else {
        let mut o = cur.select_rows(rows);
        o.add_scaled(-0.5, &last);
        o
    };
    out.scale(c);
    Ok(out)
}

/// The family `{g_{k, C−k}}` of Beta kernels of order `C`, possibly restricted
/// to a subset of `k` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    order: usize,
    filters: Vec<BetaFilter>,
}

impl FilterBank {
    /// All `C + 1` kernels, low-pass (`k = 0`) first.
    pub fn new(order: usize) -> Self {
        FilterBank {
            order,
            filters: (0..=order).map(|k| BetaFilter::new(k, order - k)).collect(),
        }
    }

    pub fn with_ks(order: usize, ks: &[usize]) -> Result<Self> {
        if ks.is_empty() {
            return Err(Error::InvalidParameter("filter bank needs at least one filter".into()));
        }
        let mut filters = Vec::with_capacity(ks.len());
        for &k in ks {
            if k > order {
                return Err(Error::InvalidParameter(format!("k = {k} exceeds order {order}")));
            }
            if filters.iter().any(|f: &BetaFilter| f.k == k) {
                return Err(Error::InvalidParameter(format!("k = {k} listed twice")));
            }
            filters.push(BetaFilter::new(k, order - k));
        }
        Ok(FilterBank { order, filters })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn filters(&self) -> &[BetaFilter] {
        &self.filters
    }

    pub fn ks(&self) -> Vec<usize> {
        self.filters.iter().map(|f| f.k).collect()
    }

    /// Every kernel applied to `x`, in bank order.
    pub fn apply_all(&self, l: &CsrMatrix, x: &Mat) -> Result<Vec<Mat>> {
        self.filters.iter().map(|f| f.apply(l, x)).collect()
    }
}

/// Fixed low/mid/high-pass reference kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceFilter {
    /// `1 − λ/2`
    Low,
    /// `1 − (λ − 1)²`
    Mid,
    /// `λ/2`
    High,
}

impl ReferenceFilter {
    pub const ALL: [ReferenceFilter; 3] = [ReferenceFilter::Low, ReferenceFilter::Mid, ReferenceFilter::High];

    pub fn name(self) -> &'static str {
        match self {
            ReferenceFilter::Low => "low",
            ReferenceFilter::Mid => "mid",
            ReferenceFilter::High => "high",
        }
    }
}

impl SpectralFilter for ReferenceFilter {
    fn response_raw(&self, lambda: f64) -> f64 {
        match self {
            ReferenceFilter::Low => 1.0 - lambda / 2.0,
            ReferenceFilter::Mid => 1.0 - (lambda - 1.0) * (lambda - 1.0),
            ReferenceFilter::High => lambda / 2.0,
        }
    }

    fn apply(&self, l: &CsrMatrix, x: &Mat) -> Result<Mat> {
        if l.n_rows() != x.rows() || l.n_cols() != x.rows() {
            return Err(Error::shape("ReferenceFilter::apply", l.n_rows(), x.rows()));
        }
        let lx = l.mul_dense(x);
        Ok(match self {
            ReferenceFilter::Low => {
                let mut out = x.clone();
                out.add_scaled(-0.5, &lx);
                out
            }
            ReferenceFilter::Mid => {
                let llx = l.mul_dense(&lx);
                let mut out = lx.scaled(2.0);
                out.add_scaled(-1.0, &llx);
                out
            }
            ReferenceFilter::High => lx.scaled(0.5),
        })
    }

    fn label(&self) -> String {
        self.name().to_string()
    }
}

pub fn triple_filter_response(which: ReferenceFilter, lambda: f64) -> Result<f64> {
    which.response(lambda)
}

/// `points` evenly spaced frequencies covering `[0, 2]` inclusive.
pub fn lambda_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points).map(|i| 2.0 * i as f64 / (points - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_exact() {
        assert_eq!(beta_constant(0, 2), 1.5);
        assert_eq!(beta_constant(1, 1), 3.0);
        assert_eq!(beta_constant(2, 0), 1.5);
        assert_eq!(beta_constant(0, 0), 0.5);
        // 1/(2B(6,6)) = 11!/(2·5!·5!) = 1386
        assert_eq!(beta_constant(5, 5), 1386.0);
    }

    #[test]
    fn log_space_fallback_is_continuous() {
        let exact = beta_constant(60, 60);
        let ln_fact = |m: usize| (1..=m).map(|i| (i as f64).ln()).sum::<f64>();
        let logged = (ln_fact(121) - 2.0 * ln_fact(60) - std::f64::consts::LN_2).exp();
        assert!((exact - logged).abs() / exact < 1e-10);
        assert!(beta_constant(200, 200).is_finite());
    }

    #[test]
    fn responses_at_endpoints() {
        assert_eq!(BetaFilter::new(0, 2).response(0.0).unwrap(), 1.5);
        assert_eq!(BetaFilter::new(1, 1).response(1.0).unwrap(), 0.75);
        assert_eq!(BetaFilter::new(2, 0).response(2.0).unwrap(), 1.5);
        assert!(matches!(BetaFilter::new(1, 1).response(2.5), Err(Error::FrequencyOutOfRange(_))));
    }

    #[test]
    fn reference_filters() {
        assert_eq!(triple_filter_response(ReferenceFilter::Low, 0.0).unwrap(), 1.0);
        assert_eq!(triple_filter_response(ReferenceFilter::Low, 2.0).unwrap(), 0.0);
        assert_eq!(triple_filter_response(ReferenceFilter::Mid, 1.0).unwrap(), 1.0);
        assert_eq!(triple_filter_response(ReferenceFilter::Mid, 0.0).unwrap(), 0.0);
        assert_eq!(triple_filter_response(ReferenceFilter::High, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn zero_order_halves_signal() {
        let l = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)]);
        let x = Mat::from_rows(&[[2.0, 4.0], [-6.0, 8.0]]);
        assert_eq!(beta_filter_apply(&l, 0, 0, &x).unwrap(), x.scaled(0.5));
        let ones = Mat::from_rows(&[[1.0], [1.0]]);
        assert_eq!(beta_filter_apply(&l, 2, 0, &ones).unwrap(), Mat::zeros(2, 1));
        assert!(beta_filter_apply(&l, 1, 0, &Mat::zeros(3, 1)).is_err());
    }

    #[test]
    fn bank_layout() {
        let bank = FilterBank::new(2);
        assert_eq!(bank.len(), 3);
        assert_eq!(bank.ks(), vec![0, 1, 2]);
        assert!(bank.filters().iter().all(|f| f.k + f.r == 2 && f.constant > 0.0));
        assert!(FilterBank::with_ks(2, &[3]).is_err());
        assert_eq!(FilterBank::with_ks(2, &[0]).unwrap().filters()[0], BetaFilter::new(0, 2));
    }
}
