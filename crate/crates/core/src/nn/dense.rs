use serde::{Deserialize, Serialize};

use crate::error::{Result, UplError};
use crate::graph::FilterMatrix;

/// Row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

fn shape_error(context: &'static str, expected: String, actual: String) -> UplError {
    UplError::DimensionMismatch {
        context,
        expected,
        actual,
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(shape_error(
                "DenseMatrix::from_vec",
                format!("{} values", rows * cols),
                values.len().to_string(),
            ));
        }
        Ok(Self { rows, cols, values })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(shape_error(
                    "DenseMatrix::from_rows",
                    format!("{cols} columns"),
                    format!("{} in row {i}", row.len()),
                ));
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.values[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self · rhs`. Zero entries of `self` are skipped, which makes this cheap
    /// for sparse bag-of-words feature matrices.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(shape_error(
                "matmul",
                format!("rhs with {} rows", self.cols),
                rhs.rows.to_string(),
            ));
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.values[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs`, skipping zero entries of `self`.
    pub fn transpose_matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != rhs.rows {
            return Err(shape_error(
                "transpose_matmul",
                format!("rhs with {} rows", self.rows),
                rhs.rows.to_string(),
            ));
        }
        let mut out = DenseMatrix::zeros(self.cols, rhs.cols);
        for i in 0..self.rows {
            let rhs_row = rhs.row(i);
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.values[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · rhsᵀ`.
    pub fn matmul_transpose(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.cols {
            return Err(shape_error(
                "matmul_transpose",
                format!("rhs with {} columns", self.cols),
                rhs.cols.to_string(),
            ));
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..rhs.rows {
                out.values[i * rhs.rows + j] = a.iter().zip(rhs.row(j)).map(|(x, y)| x * y).sum();
            }
        }
        Ok(out)
    }

    /// Adds `bias` to every row.
    pub fn add_row_broadcast(&mut self, bias: &[f64]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(shape_error(
                "add_row_broadcast",
                format!("{} bias entries", self.cols),
                bias.len().to_string(),
            ));
        }
        for row in self.values.chunks_exact_mut(self.cols.max(1)) {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        Ok(())
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.values.chunks_exact(self.cols.max(1)) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums
    }

    /// Index of the largest entry of each row; ties go to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// Sparse-dense product `filter · dense`.
///
/// Each output row accumulates its stored entries in column order, so results
/// are bit-reproducible.
pub fn spmm(filter: &FilterMatrix, dense: &DenseMatrix) -> Result<DenseMatrix> {
    if filter.dim() != dense.rows() {
        return Err(shape_error(
            "spmm",
            format!("dense with {} rows", filter.dim()),
            dense.rows().to_string(),
        ));
    }
    let cols = dense.cols();
    let mut out = DenseMatrix::zeros(filter.dim(), cols);
    for i in 0..filter.dim() {
        let (idx, vals) = filter.row(i);
        let out_row = out.row_mut(i);
        for (&j, &a) in idx.iter().zip(vals) {
            for (o, &b) in out_row.iter_mut().zip(dense.row(j)) {
                *o += a * b;
            }
        }
    }
    Ok(out)
}

/// `filterᵀ · dense`, used to backpropagate through an aggregation.
pub fn spmm_transpose(filter: &FilterMatrix, dense: &DenseMatrix) -> Result<DenseMatrix> {
    if filter.dim() != dense.rows() {
        return Err(shape_error(
            "spmm_transpose",
            format!("dense with {} rows", filter.dim()),
            dense.rows().to_string(),
        ));
    }
    let cols = dense.cols();
    let mut out = DenseMatrix::zeros(filter.dim(), cols);
    for i in 0..filter.dim() {
        let (idx, vals) = filter.row(i);
        let src = dense.row(i);
        for (&j, &a) in idx.iter().zip(vals) {
            for (o, &b) in out.row_mut(j).iter_mut().zip(src) {
                *o += a * b;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{apply_filter, FilterKind, SparseGraph};

    fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let s = (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum();
                out.set(i, j, s);
            }
        }
        out
    }

    fn transpose(a: &DenseMatrix) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(a.cols(), a.rows());
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                t.set(j, i, a.get(i, j));
            }
        }
        t
    }

    fn sample(rows: usize, cols: usize, offset: f64) -> DenseMatrix {
        let values = (0..rows * cols)
            .map(|k| if k % 3 == 0 { 0.0 } else { (k as f64 * 0.37 + offset).sin() })
            .collect();
        DenseMatrix::from_vec(rows, cols, values).unwrap()
    }

    #[test]
    fn products_match_naive() {
        let a = sample(4, 3, 0.1);
        let b = sample(3, 5, 0.7);
        let c = sample(4, 5, 1.3);
        let expected = naive_matmul(&a, &b);
        let got = a.matmul(&b).unwrap();
        for (x, y) in got.values().iter().zip(expected.values()) {
            assert!((x - y).abs() < 1e-12);
        }
        let got = a.transpose_matmul(&c).unwrap();
        let expected = naive_matmul(&transpose(&a), &c);
        for (x, y) in got.values().iter().zip(expected.values()) {
            assert!((x - y).abs() < 1e-12);
        }
        let got = c.matmul_transpose(&b).unwrap();
        let expected = naive_matmul(&c, &transpose(&b));
        for (x, y) in got.values().iter().zip(expected.values()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(a.matmul(&c).is_err());
    }

    #[test]
    fn spmm_identity_filter() {
        let f = apply_filter(FilterKind::SymNorm, &SparseGraph::empty(4).unwrap()).unwrap();
        let x = sample(4, 3, 0.2);
        assert_eq!(spmm(&f, &x).unwrap(), x);
        assert!(spmm(&f, &sample(3, 3, 0.0)).is_err());
    }

    #[test]
    fn spmm_mean_agg_preserves_ones() {
        let g = SparseGraph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (1, 4)]).unwrap();
        let f = apply_filter(FilterKind::MeanAgg, &g).unwrap();
        let ones = DenseMatrix::from_vec(5, 1, vec![1.0; 5]).unwrap();
        let out = spmm(&f, &ones).unwrap();
        for &v in out.values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spmm_triangle_basis_column() {
        // every augmented degree is 3, so every stored entry is 1/3
        let g = SparseGraph::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        let f = apply_filter(FilterKind::SymNorm, &g).unwrap();
        let e0 = DenseMatrix::from_vec(3, 1, vec![1.0, 0.0, 0.0]).unwrap();
        let out = spmm(&f, &e0).unwrap();
        for &v in out.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn spmm_transpose_matches_explicit_transpose() {
        let g = SparseGraph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (1, 4)]).unwrap();
        let f = apply_filter(FilterKind::MeanAgg, &g).unwrap();
        let mut dense_t = DenseMatrix::zeros(5, 5);
        for i in 0..5 {
            for j in 0..5 {
                dense_t.set(j, i, f.get(i, j));
            }
        }
        let x = sample(5, 2, 0.4);
        let expected = naive_matmul(&dense_t, &x);
        let got = spmm_transpose(&f, &x).unwrap();
        for (a, b) in got.values().iter().zip(expected.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        let m = DenseMatrix::from_rows(&[vec![0.5, 0.5], vec![0.1, 0.9]]).unwrap();
        assert_eq!(m.argmax_rows(), vec![0, 1]);
    }
}
