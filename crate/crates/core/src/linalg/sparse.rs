use super::dense::{axpy_many, Mat};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed; column
    /// indices within a row end up sorted.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, c, _) in triplets {
            assert!(r < n_rows && c < n_cols, "triplet out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut cursor = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let at = cursor[r];
            cols[at] = c;
            vals[at] = v;
            cursor[r] += 1;
        }

        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..n_rows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            row.sort_unstable_by_key(|&(c, _)| c);
            for &(c, v) in &row {
                if indices.len() > indptr[r] && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.indptr[i]..self.indptr[i + 1];
        match self.indices[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// `out = self · x` for a dense multi-column right-hand side.
    #[inline]
    fn accumulate_row(&self, i: usize, x: &Mat, o: &mut [f64]) {
        let range = self.indptr[i]..self.indptr[i + 1];
        let terms = self.values[range.clone()].iter().zip(&self.indices[range]);
        axpy_many(o, terms.map(|(&v, &j)| (v, x.row(j))));
    }

    pub fn mul_dense_into(&self, x: &Mat, out: &mut Mat) {
        assert_eq!(self.n_cols, x.rows(), "csr matmul: dimension mismatch");
        assert_eq!(out.shape(), (self.n_rows, x.cols()));
        for i in 0..self.n_rows {
            let o = out.row_mut(i);
            o.fill(0.0);
            self.accumulate_row(i, x, o);
        }
    }

    pub fn mul_dense(&self, x: &Mat) -> Mat {
        let mut out = Mat::zeros(self.n_rows, x.cols());
        self.mul_dense_into(x, &mut out);
        out
    }

    /// Rows `rows` of `self · x`, in the given order.
    pub fn mul_dense_rows(&self, x: &Mat, rows: &[usize]) -> Mat {
        assert_eq!(self.n_cols, x.rows(), "csr matmul: dimension mismatch");
        let mut out = Mat::zeros(rows.len(), x.cols());
        for (o, &i) in rows.iter().enumerate() {
            let o = out.row_mut(o);
            self.accumulate_row(i, x, o);
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.n_cols, x.len());
        (0..self.n_rows)
            .map(|i| self.row_entries(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `xᵀ · self · x`
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let y = self.matvec(x);
        super::dense::dot(x, &y)
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row_entries(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Largest `|a_ij − a_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n_rows {
            for (j, v) in self.row_entries(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_are_summed_and_sorted() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 0.5), (1, 1, -1.0)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 2), 1.5);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.row_entries(0).map(|(j, _)| j).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn dense_product_matches_dense_route() {
        let m = CsrMatrix::from_triplets(3, 3, &[(0, 1, 1.0), (1, 0, 1.0), (2, 2, 3.0), (1, 2, -2.0)]);
        let x = Mat::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(m.mul_dense(&x), m.to_dense().matmul(&x));
        assert!(m.max_asymmetry() > 1.0);
    }
}
