//! Dense and sparse linear-algebra helpers.
//!
//! Dense symmetric positive-definite work goes through `faer`'s Cholesky;
//! the coupling operator is held in compressed sparse row form.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, MatRef, Par, Side};

use crate::error::{Error, Result};

pub use faer::Mat as DenseMatrix;

/// Cholesky factor `A = L Lᵀ` of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    llt: faer::linalg::solvers::Llt<f64>,
}

impl SpdFactor {
    pub fn new(a: MatRef<'_, f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::param("matrix to factorize must be square"));
        }
        let llt = faer::linalg::solvers::Llt::new(a, Side::Lower)
            .map_err(|e| Error::numerical(format!("Cholesky factorization failed: {e:?}")))?;
        Ok(SpdFactor { llt })
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    pub fn lower(&self) -> MatRef<'_, f64> {
        self.llt.L()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = col_from_slice(rhs);
        self.llt.solve_in_place(b.as_mut());
        col_to_vec(&b)
    }

    pub fn solve_mat(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        let mut b = rhs.to_owned();
        self.llt.solve_in_place(b.as_mut());
        b
    }

    /// `L⁻¹ B`, overwriting `b`.
    pub fn solve_lower_in_place(&self, b: &mut Mat<f64>) {
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(
            self.llt.L(),
            b.as_mut(),
            Par::Seq,
        );
    }

    /// `L⁻ᵀ b` for a single vector.
    pub fn solve_lower_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = col_from_slice(rhs);
        faer::linalg::triangular_solve::solve_upper_triangular_in_place(
            self.llt.L().transpose(),
            b.as_mut(),
            Par::Seq,
        );
        col_to_vec(&b)
    }

    pub fn inverse(&self) -> Mat<f64> {
        let mut inv = self.llt.inverse();
        symmetrize(&mut inv);
        inv
    }

    pub fn log_det(&self) -> f64 {
        let l = self.llt.L();
        (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
    }

    /// `xᵀ A⁻¹ x` computed as `‖L⁻¹ x‖²`.
    pub fn inv_quad_form(&self, x: &[f64]) -> f64 {
        let mut b = col_from_slice(x);
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(
            self.llt.L(),
            b.as_mut(),
            Par::Seq,
        );
        (0..b.nrows()).map(|i| b[(i, 0)] * b[(i, 0)]).sum()
    }
}

pub(crate) fn col_from_slice(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub(crate) fn col_to_vec(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

pub(crate) fn symmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Dense symmetric matrix-vector product `A x`, column-major traversal.
pub fn dense_matvec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = a.col_as_slice(j);
        for (o, &c) in out.iter_mut().zip(col) {
            *o += c * xj;
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn trace(a: &Mat<f64>) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists. Columns within a row are sorted.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            for (j, v) in row {
                debug_assert!(j < ncols);
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows, ncols, indptr, indices, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(n, (0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn from_dense(a: &Mat<f64>) -> Self {
        let rows = (0..a.nrows())
            .map(|i| {
                (0..a.ncols())
                    .filter(|&j| a[(i, j)] != 0.0)
                    .map(|j| (j, a[(i, j)]))
                    .collect()
            })
            .collect();
        Self::from_rows(a.ncols(), rows)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub(crate) fn scale_rows(&mut self, factors: &[f64]) {
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                self.values[k] *= factors[i];
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate().take(self.nrows) {
            for (j, v) in self.row(i) {
                out[j] += v * xi;
            }
        }
        out
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Dense `AᵀA`, accumulated from row outer products so only the sparsity of `A` is touched.
    pub fn gram(&self) -> Mat<f64> {
        let mut g = Mat::zeros(self.ncols, self.ncols);
        for i in 0..self.nrows {
            let r = self.indptr[i]..self.indptr[i + 1];
            let idx = &self.indices[r.clone()];
            let val = &self.values[r];
            for (a, &ja) in idx.iter().enumerate() {
                for (b, &jb) in idx.iter().enumerate() {
                    g[(ja, jb)] += val[a] * val[b];
                }
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> Mat<f64> {
        Mat::from_fn(3, 3, |i, j| if i == j { 4.0 } else { 1.0 / (1.0 + (i + j) as f64) })
    }

    #[test]
    fn cholesky_solve_and_inverse() {
        let a = spd3();
        let f = SpdFactor::new(a.as_ref()).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = f.solve(&b);
        let ax = dense_matvec(&a, &x);
        for (u, v) in ax.iter().zip(b) {
            assert!((u - v).abs() < 1e-12);
        }
        let prod = &a * f.inverse();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - e).abs() < 1e-12);
            }
        }
        assert!((f.inv_quad_form(&b) - dot(&b, &x)).abs() < 1e-12);
    }

    #[test]
    fn non_pd_is_rejected() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 2.0 });
        assert!(matches!(SpdFactor::new(a.as_ref()), Err(Error::Numerical(_))));
    }

    #[test]
    fn csr_products_match_dense() {
        let d = Mat::from_fn(3, 3, |i, j| if (i + j) % 2 == 0 { (i * 3 + j) as f64 } else { 0.0 });
        let s = CsrMatrix::from_dense(&d);
        let x = [1.0, 2.0, 3.0];
        let dense: Vec<f64> = (0..3).map(|i| (0..3).map(|j| d[(i, j)] * x[j]).sum()).collect();
        assert_eq!(s.matvec(&x), dense);
        let dt: Vec<f64> = (0..3).map(|j| (0..3).map(|i| d[(i, j)] * x[i]).sum()).collect();
        assert_eq!(s.matvec_transpose(&x), dt);
        let g = s.gram();
        let gd = d.transpose() * &d;
        for i in 0..3 {
            for j in 0..3 {
                assert!((g[(i, j)] - gd[(i, j)]).abs() < 1e-12);
            }
        }
        assert_eq!(s.get(0, 1), 0.0);
        assert_eq!(s.get(2, 2), 8.0);
    }
}
