//! Small dense and sparse linear-algebra kernels used by the embedding stage.
//!
//! Dense matrices are column-major. All routines are deterministic: loops
//! run in a fixed order and no result depends on thread scheduling.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Mutable views of two distinct columns.
    fn col_pair_mut(&mut self, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
        debug_assert!(p < q);
        let r = self.rows;
        let (left, right) = self.data.split_at_mut(q * r);
        (&mut left[p * r..(p + 1) * r], &mut right[..r])
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for (k, &b) in other.col(j).iter().enumerate() {
                if b != 0.0 {
                    axpy(b, self.col(k), dst);
                }
            }
        }
        out
    }

    /// `self^T * other`.
    pub fn tmatmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.rows, other.rows, "tmatmul dimension mismatch");
        DenseMatrix::from_fn(self.cols, other.cols, |i, j| dot(self.col(i), other.col(j)))
    }

    /// First `cols` columns.
    pub fn leading_cols(&self, cols: usize) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols,
            data: self.data[..self.rows * cols].to_vec(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(dot(&self.data, &self.data))
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale_cols(&mut self, factors: &[f64]) {
        for (j, &f) in factors.iter().enumerate() {
            for x in self.col_mut(j) {
                *x *= f;
            }
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl core::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[j * self.rows + i]
    }
}

impl core::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[j * self.rows + i]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from triplets; duplicates are summed and explicit zeros kept out.
    pub fn from_triplets(rows: usize, cols: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut t: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0; rows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            assert!(i < rows && j < cols, "triplet ({i}, {j}) outside {rows}x{cols}");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut t = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if m[(i, j)] != 0.0 {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.rows(), m.cols(), t)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t = (0..self.rows).flat_map(|i| self.row(i).map(move |(j, v)| (j, i, v)));
        CsrMatrix::from_triplets(self.cols, self.rows, t)
    }

    /// `self * x`.
    pub fn mul_dense(&self, x: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, x.rows());
        let mut out = DenseMatrix::zeros(self.rows, x.cols());
        for k in 0..x.cols() {
            let src = x.col(k);
            let dst = out.col_mut(k);
            for (i, d) in dst.iter_mut().enumerate() {
                *d = self.row(i).map(|(j, v)| v * src[j]).sum();
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(dot(&self.values, &self.values))
    }
}

/// Orthonormalizes the columns of `m` in place by modified Gram-Schmidt with
/// one re-orthogonalization pass. Columns that are numerically dependent on
/// their predecessors are replaced by the first unit vector `e_k` that is
/// not, so the result always has orthonormal columns (requires
/// `cols <= rows`).
pub fn orthonormalize(m: &mut DenseMatrix) {
    let (rows, cols) = (m.rows(), m.cols());
    assert!(cols <= rows, "cannot orthonormalize {cols} columns in dimension {rows}");
    let mut next_unit = 0;
    for k in 0..cols {
        let original = libm::sqrt(dot(m.col(k), m.col(k)));
        let norm = project_out(m, k);
        if original > 0.0 && norm > 1e-10 * original {
            let inv = 1.0 / norm;
            m.col_mut(k).iter_mut().for_each(|x| *x *= inv);
            continue;
        }
        loop {
            assert!(next_unit < rows, "orthonormal completion exhausted");
            let col = m.col_mut(k);
            col.iter_mut().for_each(|x| *x = 0.0);
            col[next_unit] = 1.0;
            next_unit += 1;
            let norm = project_out(m, k);
            if norm > 0.5 {
                let inv = 1.0 / norm;
                m.col_mut(k).iter_mut().for_each(|x| *x *= inv);
                break;
            }
        }
    }
}

/// Removes from column `k` its components along columns `0..k` (two passes)
/// and returns the remaining norm.
fn project_out(m: &mut DenseMatrix, k: usize) -> f64 {
    let rows = m.rows();
    for _ in 0..2 {
        for j in 0..k {
            let (head, tail) = m.data.split_at_mut(k * rows);
            let qj = &head[j * rows..(j + 1) * rows];
            let v = &mut tail[..rows];
            let r = dot(qj, v);
            axpy(-r, qj, v);
        }
    }
    let c = m.col(k);
    libm::sqrt(dot(c, c))
}

/// Thin SVD `m = U diag(s) V^T` of an `r x c` matrix with `r >= c` by
/// one-sided Jacobi rotations. Singular values come back in descending
/// order; `U` (`r x c`) and `V` (`c x c`) have orthonormal columns even when
/// `m` is rank deficient.
pub fn jacobi_svd(m: &DenseMatrix) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
    let (rows, cols) = (m.rows(), m.cols());
    assert!(rows >= cols, "jacobi_svd needs rows >= cols");
    let mut w = m.clone();
    let mut v = DenseMatrix::identity(cols);
    let mut norms: Vec<f64> = (0..cols).map(|j| dot(w.col(j), w.col(j))).collect();
    const MAX_SWEEPS: usize = 80;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (a, b) = (norms[p], norms[q]);
                if a == 0.0 || b == 0.0 {
                    continue;
                }
                let g = dot(w.col(p), w.col(q));
                if g.abs() <= f64::EPSILON * libm::sqrt(a * b) {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
                norms[p] = dot(w.col(p), w.col(p));
                norms[q] = dot(w.col(q), w.col(q));
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<f64> = (0..cols).map(|j| libm::sqrt(dot(w.col(j), w.col(j)))).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]).then(x.cmp(&y)));

    let tol = rows.max(cols) as f64 * f64::EPSILON * sigma.iter().copied().fold(0.0, f64::max);
    let mut u = DenseMatrix::zeros(rows, cols);
    let mut v_sorted = DenseMatrix::zeros(cols, cols);
    let mut s_sorted = Vec::with_capacity(cols);
    for (k, &j) in order.iter().enumerate() {
        let sj = if sigma[j] > tol { sigma[j] } else { 0.0 };
        s_sorted.push(sj);
        if sj > 0.0 {
            let inv = 1.0 / sigma[j];
            for (dst, &src) in u.col_mut(k).iter_mut().zip(w.col(j)) {
                *dst = src * inv;
            }
        }
        v_sorted.col_mut(k).copy_from_slice(v.col(j));
    }
    // zero columns of U get completed to an orthonormal set
    orthonormalize(&mut u);
    (u, s_sorted, v_sorted)
}

fn rotate(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let (cp, cq) = m.col_pair_mut(p, q);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi, descending.
pub fn symmetric_eigenvalues(m: &DenseMatrix) -> Vec<f64> {
    let n = m.rows();
    assert_eq!(n, m.cols());
    let mut a = m.clone();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= f64::EPSILON * f64::EPSILON * diag || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(1.0 + theta * theta));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}
