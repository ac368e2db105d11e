//! Dense symmetric linear algebra kernels shared by the rest of the crate:
//! symmetric and generalized eigendecompositions, log-determinants, and the
//! best nonnegative rank-1 factorization.
//!
//! Everything here is deterministic: identical inputs produce bit-identical
//! outputs, which keeps trained models and bitstreams reproducible.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Floor applied to weight-like quantities that must stay strictly positive.
pub const WEIGHT_FLOOR: f64 = 1e-4;

/// Symmetric matrix with a single stored triangle, so `a(i,j) == a(j,i)`
/// holds exactly by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    // Upper triangle including the diagonal, row by row.
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be at least 1");
        SymMatrix {
            dim,
            data: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds from a dense matrix, averaging the two triangles to kill
    /// floating-point asymmetry from upstream products.
    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "dense input must be square");
        SymMatrix::from_fn(a.nrows(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * self.dim - i * (i + 1) / 2 + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let v = self.get(i, j);
                sum += v * v;
            }
        }
        sum.sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }
}

/// Eigendecomposition result. `values` ascend; column `k` of `vectors` is
/// the eigenvector paired with `values[k]`.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Flips a column so the entry of largest absolute value is positive,
/// lowest index winning ties.
pub(crate) fn fix_column_sign(col: &mut [f64]) {
    let mut best = 0usize;
    for (i, v) in col.iter().enumerate() {
        if v.abs() > col[best].abs() {
            best = i;
        }
    }
    if col[best] < 0.0 {
        for v in col.iter_mut() {
            *v = -*v;
        }
    }
}

/// Orders eigenpairs by ascending value; exact ties fall back to comparing
/// the (sign-fixed) vectors at their first differing component, larger
/// entry first. The vector tiebreak keeps repeated eigenvalues in a
/// reproducible order.
fn sort_pairs(values: &mut Vec<f64>, vectors: &mut DMatrix<f64>) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[a].total_cmp(&values[b]).then_with(|| {
            for i in 0..vectors.nrows() {
                let va = vectors[(i, a)];
                let vb = vectors[(i, b)];
                if va != vb {
                    return vb.total_cmp(&va);
                }
            }
            std::cmp::Ordering::Equal
        })
    });
    let sorted_values: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    let sorted_vectors =
        DMatrix::from_fn(vectors.nrows(), n, |i, j| vectors[(i, order[j])]);
    *values = sorted_values;
    *vectors = sorted_vectors;
}

/// Eigendecomposition of a symmetric matrix. Values ascend and every
/// eigenvector carries the deterministic sign convention.
pub fn sym_eig(a: &SymMatrix) -> Result<EigenPair> {
    if !a.is_finite() {
        return Err(Error::InvalidInput(
            "matrix has non-finite entries".into(),
        ));
    }
    let dense = a.to_dense();
    let eig = dense.symmetric_eigen();
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let mut vectors = eig.eigenvectors;
    for mut col in vectors.column_iter_mut() {
        fix_column_sign(col.as_mut_slice());
    }
    sort_pairs(&mut values, &mut vectors);
    Ok(EigenPair { values, vectors })
}

/// Solves `L u = lambda * diag(q) u` by whitening with `diag(q)^{-1/2}`.
/// Returned vectors satisfy `U^T diag(q) U = I`.
pub fn gen_eig_diag(l: &SymMatrix, q: &[f64]) -> Result<EigenPair> {
    let n = l.dim();
    if q.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "weight vector has length {}, matrix dimension is {}",
            q.len(),
            n
        )));
    }
    if q.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidWeight(
            "generalized eigenproblem requires strictly positive finite weights".into(),
        ));
    }
    let inv_sqrt: Vec<f64> = q.iter().map(|&w| 1.0 / w.sqrt()).collect();
    let whitened =
        SymMatrix::from_fn(n, |i, j| inv_sqrt[i] * l.get(i, j) * inv_sqrt[j]);
    let eig = sym_eig(&whitened)?;
    let mut vectors = eig.vectors;
    for j in 0..n {
        for i in 0..n {
            vectors[(i, j)] *= inv_sqrt[i];
        }
    }
    // Rescaling can move the largest-magnitude entry, so re-apply the sign
    // convention in the original coordinates.
    let mut values = eig.values;
    for mut col in vectors.column_iter_mut() {
        fix_column_sign(col.as_mut_slice());
    }
    sort_pairs(&mut values, &mut vectors);
    Ok(EigenPair { values, vectors })
}

/// Best rank-1 approximation `u v^T` of a nonnegative matrix, with both
/// factors nonnegative (the leading singular pair, signs normalized).
/// Entries below [`WEIGHT_FLOOR`] are clamped up to it so the factors can
/// serve as transform weights.
pub fn rank1_nonneg(m: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput(
            "rank-1 factorization requires finite nonnegative entries".into(),
        ));
    }
    if m.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateInput(
            "rank-1 factorization of an all-zero matrix".into(),
        ));
    }
    let svd = m.clone().svd(true, true);
    let u_mat = svd.u.as_ref().expect("svd computed with u");
    let v_mat = svd.v_t.as_ref().expect("svd computed with v_t");
    // Leading singular value is the largest; nalgebra does not guarantee
    // ordering, so locate it.
    let mut lead = 0usize;
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > svd.singular_values[lead] {
            lead = k;
        }
    }
    let sigma = svd.singular_values[lead];
    let scale = sigma.sqrt();
    let mut u: DVector<f64> = u_mat.column(lead).into_owned() * scale;
    let mut v: DVector<f64> = v_mat.row(lead).transpose() * scale;
    // Perron-Frobenius: the leading pair of a nonnegative matrix can be
    // taken entrywise nonnegative. Orient by the dominant entry.
    fix_column_sign(u.as_mut_slice());
    fix_column_sign(v.as_mut_slice());
    for x in u.iter_mut().chain(v.iter_mut()) {
        if *x < WEIGHT_FLOOR {
            *x = WEIGHT_FLOOR;
        }
    }
    Ok((u, v))
}

/// `log det` of a symmetric positive definite matrix via Cholesky.
pub fn logdet_pd(a: &DMatrix<f64>) -> Result<f64> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("matrix is not positive definite".into()))?;
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        acc += chol.l()[(i, i)].ln();
    }
    Ok(2.0 * acc)
}
