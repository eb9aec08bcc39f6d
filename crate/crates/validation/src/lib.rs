//! Reference computations that share no code path with the library they
//! check, plus a small PASS/FAIL runner for the acceptance suite.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use hsgppt::linalg::Mat;

/// Cyclic Jacobi rotations on a dense symmetric matrix.
///
/// Returns eigenvalues and a matrix whose columns are the matching
/// orthonormal eigenvectors (unsorted).
pub fn jacobi_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "square input");
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let scale = m.iter().flatten().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in m.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
                for k in 0..n {
                    let (pk, qk) = (m[p][k], m[q][k]);
                    m[p][k] = c * pk - s * qk;
                    m[q][k] = s * pk + c * qk;
                }
                for row in v.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
            }
        }
    }
    let values = (0..n).map(|i| m[i][i]).collect();
    (values, Mat::from_vec(n, n, v.into_iter().flatten().collect()))
}

/// `I − D^{-1/2} A D^{-1/2}` built entry by entry from an edge list.
pub fn dense_normalized_laplacian(n: usize, edges: &[(usize, usize)]) -> Mat {
    let mut a = vec![vec![0.0f64; n]; n];
    for &(u, v) in edges {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let mut l = Mat::identity(n);
    for i in 0..n {
        for j in 0..n {
            if a[i][j] != 0.0 {
                l.row_mut(i)[j] -= a[i][j] / (deg[i] * deg[j]).sqrt();
            }
        }
    }
    l
}

/// `U·diag(g(λ))·Uᵀ·X`.
pub fn spectral_apply(values: &[f64], vectors: &Mat, g: impl Fn(f64) -> f64, x: &Mat) -> Mat {
    let mut coeffs = vectors.transpose().matmul(x);
    for (i, &lambda) in values.iter().enumerate() {
        let w = g(lambda);
        for c in coeffs.row_mut(i) {
            *c *= w;
        }
    }
    vectors.matmul(&coeffs)
}

/// Outcome of one acceptance criterion.
pub struct Verdict {
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Verdict {
            passed,
            detail: detail.into(),
        }
    }
}

pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    /// Wall-clock limit; exceeding it fails the criterion.
    pub budget: Option<Duration>,
    pub run: fn() -> Verdict,
}

/// Runs every criterion (or those whose ids are listed), prints one line
/// each and returns whether all of them passed.
pub fn run_all(criteria: &[Criterion], only: &[u32]) -> bool {
    let mut failed = 0usize;
    let mut ran = 0usize;
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        ran += 1;
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run));
        let elapsed = start.elapsed();
        let mut verdict = outcome.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Verdict::new(false, format!("panicked: {msg}"))
        });
        if let Some(limit) = c.budget {
            if elapsed > limit {
                verdict.passed = false;
                verdict.detail += &format!("; over the {:.0?} budget", limit);
            }
        }
        if !verdict.passed {
            failed += 1;
        }
        println!(
            "{} {:>2} {:<38} {:>8.1}s  {}",
            if verdict.passed { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            elapsed.as_secs_f64(),
            verdict.detail
        );
    }
    println!("{} of {ran} criteria passed", ran - failed);
    failed == 0
}
