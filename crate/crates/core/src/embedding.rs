//! Rate matrix to node vectors: normalization, truncated SVD, and scaling.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::inference::RateMatrix;
use crate::linalg::{jacobi_svd, orthonormalize, symmetric_eigenvalues, CsrMatrix, DenseMatrix};

/// How the rate matrix is normalized before factoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Each nonzero row divided by its sum; zero rows stay zero.
    #[default]
    Row,
    /// `a[i, j] / sqrt(rowsum_i * colsum_j)`.
    Symmetric,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EmbedOptions {
    pub normalization: Normalization,
    /// Replace `A` by `(A + A^T) / 2` before normalizing.
    pub symmetrize: bool,
}

pub fn normalize_rates(rates: &RateMatrix, normalization: Normalization) -> CsrMatrix {
    normalize_with(rates, EmbedOptions { normalization, symmetrize: false })
}

fn normalize_with(rates: &RateMatrix, options: EmbedOptions) -> CsrMatrix {
    let n = rates.node_count();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(rates.nnz() * 2);
    for ((i, j), a) in rates.iter() {
        if options.symmetrize {
            triplets.push((i, j, 0.5 * a));
            triplets.push((j, i, 0.5 * a));
        } else {
            triplets.push((i, j, a));
        }
    }
    let base = CsrMatrix::from_triplets(n, n, triplets);
    let mut row_sum = vec![0.0; n];
    let mut col_sum = vec![0.0; n];
    for i in 0..n {
        for (j, v) in base.row(i) {
            row_sum[i] += v;
            col_sum[j] += v;
        }
    }
    let scaled = (0..n).flat_map(|i| {
        let (row_sum, col_sum) = (&row_sum, &col_sum);
        base.row(i).filter_map(move |(j, v)| {
            let w = match options.normalization {
                Normalization::Row => v / row_sum[i],
                Normalization::Symmetric => v / libm::sqrt(row_sum[i] * col_sum[j]),
                Normalization::None => v,
            };
            (w != 0.0).then_some((i, j, w))
        })
    });
    CsrMatrix::from_triplets(n, n, scaled.collect::<Vec<_>>())
}

/// Top singular triplets `A ~ U diag(sigma) V^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
    /// Subspace iterations performed (0 when the sketch covered the whole
    /// space).
    pub iterations: usize,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `Y = U diag(sqrt(sigma))`.
    pub fn embedding(&self) -> Embedding {
        let n = self.u.rows();
        let d = self.rank();
        let roots: Vec<f64> = self.sigma.iter().map(|&s| libm::sqrt(s)).collect();
        let mut data = vec![0.0; n * d];
        for k in 0..d {
            for (i, &x) in self.u.col(k).iter().enumerate() {
                data[i * d + k] = x * roots[k];
            }
        }
        Embedding {
            node_count: n,
            dim: d,
            data,
        }
    }

    /// `W = diag(sqrt(sigma)) V^T`, so that `Y W = U diag(sigma) V^T`.
    pub fn cofactor(&self) -> DenseMatrix {
        let mut w = self.v.transpose();
        let (d, n) = (w.rows(), w.cols());
        for k in 0..d {
            let r = libm::sqrt(self.sigma[k]);
            for j in 0..n {
                w[(k, j)] *= r;
            }
        }
        w
    }

    /// `U diag(sigma) V^T` as a dense matrix.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        us.scale_cols(&self.sigma);
        us.matmul(&self.v.transpose())
    }
}

const MAX_SUBSPACE_ITERATIONS: usize = 300;

/// Sketch width for a rank-`d` request.
fn sketch_width(d: usize, limit: usize) -> usize {
    (d + d.max(10)).min(limit)
}

/// Top-`d` singular triplets of `matrix` by randomized subspace iteration.
///
/// A random `n x l` sketch (`l = d + max(d, 10)`, capped by the matrix
/// size) is refined by alternating products with `A` and `A^T` until the top
/// `d` Ritz values stop changing, then the projected problem is solved
/// exactly with one-sided Jacobi. When `l` reaches `min(m, n)` the sketch
/// spans the whole space and the result is exact. Each left singular vector
/// is signed so that its first entry above `1e-12` in magnitude is positive.
/// Singular values below the numerical rank tolerance are returned as 0.
pub fn truncated_svd<R: Rng + ?Sized>(matrix: &CsrMatrix, d: usize, rng: &mut R) -> Result<SvdResult> {
    let (m, n) = (matrix.rows(), matrix.cols());
    let full = m.min(n);
    if d == 0 || d > full {
        return Err(Error::InvalidParameter(alloc::format!(
            "rank {d} must lie in 1..={full} for a {m}x{n} matrix"
        )));
    }
    if matrix.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix has non-finite entries".into()));
    }
    let l = sketch_width(d, full);
    let at = matrix.transpose();
    let omega = DenseMatrix::from_fn(n, l, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    let mut q = matrix.mul_dense(&omega);
    orthonormalize(&mut q);
    let mut w = at.mul_dense(&q);
    let mut iterations = 0;
    if l < full {
        let mut prev = ritz_values(&w, d);
        while iterations < MAX_SUBSPACE_ITERATIONS {
            iterations += 1;
            orthonormalize(&mut w);
            q = matrix.mul_dense(&w);
            orthonormalize(&mut q);
            w = at.mul_dense(&q);
            let cur = ritz_values(&w, d);
            let top = cur[0].max(0.0);
            let settled = cur
                .iter()
                .zip(&prev)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs() + 1e-13 * top);
            prev = cur;
            if settled {
                break;
            }
        }
    }
    // w = A^T Q = B^T with B = Q^T A
    let (small_u, sigma, small_v) = thin_svd(&w);
    let mut u = q.matmul(&small_v.leading_cols(d));
    let mut v = small_u.leading_cols(d);
    let sigma = sigma[..d].to_vec();
    for k in 0..d {
        let flip = u
            .col(k)
            .iter()
            .find(|x| x.abs() > 1e-12)
            .is_some_and(|&x| x < 0.0);
        if flip {
            u.col_mut(k).iter_mut().for_each(|x| *x = -*x);
            v.col_mut(k).iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(SvdResult {
        u,
        sigma,
        v,
        iterations,
    })
}

/// Squared singular values of `w^T` (equivalently of `w`), top `d`.
fn ritz_values(w: &DenseMatrix, d: usize) -> Vec<f64> {
    let gram = w.tmatmul(w);
    let mut eig = symmetric_eigenvalues(&gram);
    eig.truncate(d);
    eig
}

/// Thin SVD of a tall matrix, through a QR step when that shrinks the
/// Jacobi problem.
fn thin_svd(w: &DenseMatrix) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
    if w.rows() <= 2 * w.cols() {
        return jacobi_svd(w);
    }
    let mut q = w.clone();
    orthonormalize(&mut q);
    let r = q.tmatmul(w);
    let (ur, s, vr) = jacobi_svd(&r);
    (q.matmul(&ur), s, vr)
}

/// Dense `N x d` node representation, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    node_count: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Embedding {
    pub fn from_rows(node_count: usize, dim: usize, data: Vec<f64>) -> Result<Embedding> {
        if data.len() != node_count * dim {
            return Err(Error::DimensionMismatch {
                expected: node_count * dim,
                found: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("embedding has non-finite entries".into()));
        }
        Ok(Embedding {
            node_count,
            dim,
            data,
        })
    }

    pub fn zeros(node_count: usize, dim: usize) -> Embedding {
        Embedding {
            node_count,
            dim,
            data: vec![0.0; node_count * dim],
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Embedding whose row `i` is row `perm[i]` of `self`.
    pub fn permuted_rows(&self, perm: &[usize]) -> Embedding {
        assert_eq!(perm.len(), self.node_count);
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            data.extend_from_slice(self.row(p));
        }
        Embedding {
            node_count: self.node_count,
            dim: self.dim,
            data,
        }
    }
}

/// Normalizes the rates, factors them, and returns `U_d sqrt(Sigma_d)`.
pub fn embed<R: Rng + ?Sized>(rates: &RateMatrix, d: usize, options: EmbedOptions, rng: &mut R) -> Result<Embedding> {
    embed_with_factors(rates, d, options, rng).map(|(e, _)| e)
}

pub fn embed_with_factors<R: Rng + ?Sized>(
    rates: &RateMatrix,
    d: usize,
    options: EmbedOptions,
    rng: &mut R,
) -> Result<(Embedding, SvdResult)> {
    let a = normalize_with(rates, options);
    let svd = truncated_svd(&a, d, rng)?;
    Ok((svd.embedding(), svd))
}
