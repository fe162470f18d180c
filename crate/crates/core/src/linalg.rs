//! Sparse storage, banded direct solves and a symmetric Lanczos eigenvalue
//! bound. Everything here works on plain `f64` slices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DvsError, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from (row, col, value) triplets; duplicates are summed.
    /// Explicit zeros are kept so that matrices assembled over the same
    /// element connectivity share one sparsity pattern.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut data: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < rows && c < cols, "triplet ({r},{c}) outside {rows}x{cols}");
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Position of entry (r, c) in the data array, if it is in the pattern.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let range = self.indptr[r]..self.indptr[r + 1];
        self.indices[range.clone()]
            .binary_search(&c)
            .ok()
            .map(|off| range.start + off)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map(|p| self.data[p]).unwrap_or(0.0)
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.indptr == other.indptr
            && self.indices == other.indices
    }

    /// y = A x
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for r in 0..self.rows {
            let mut acc = 0.0;
            for p in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[p] * x[self.indices[p]];
            }
            y[r] = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// y = Aᵀ x
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            for p in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[p]] += self.data[p] * xr;
            }
        }
        y
    }

    /// xᵀ A y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.rows {
            let mut row = 0.0;
            for p in self.indptr[r]..self.indptr[r + 1] {
                row += self.data[p] * y[self.indices[p]];
            }
            acc += x[r] * row;
        }
        acc
    }

    /// Σ coef_i · A_i over matrices that share this matrix's pattern.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        let (_, first) = terms[0];
        let mut out = first.clone();
        out.data.iter_mut().for_each(|v| *v = 0.0);
        for (coef, m) in terms {
            assert!(out.same_pattern(m), "linear combination requires a shared pattern");
            for (o, v) in out.data.iter_mut().zip(&m.data) {
                *o += coef * v;
            }
        }
        out
    }

    /// self += alpha · other (same pattern).
    pub fn add_scaled(&mut self, alpha: f64, other: &CsrMatrix) {
        assert!(self.same_pattern(other), "add_scaled requires a shared pattern");
        for (o, v) in self.data.iter_mut().zip(&other.data) {
            *o += alpha * v;
        }
    }

    /// Symmetric part ½(A + Aᵀ). The pattern must be structurally symmetric.
    pub fn symmetric_part(&self) -> CsrMatrix {
        let mut out = self.clone();
        for r in 0..self.rows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[p];
                let t = self.get(c, r);
                out.data[p] = 0.5 * (self.data[p] + t);
            }
        }
        out
    }

    /// Lower and upper bandwidths of the pattern.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for r in 0..self.rows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[p];
                if c < r {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        (kl, ku)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for r in 0..self.rows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                d[r][self.indices[p]] += self.data[p];
            }
        }
        d
    }

    /// Largest absolute row sum, used to scale pivot and residual checks.
    pub fn max_row_abs_sum(&self) -> f64 {
        (0..self.rows)
            .map(|r| {
                self.data[self.indptr[r]..self.indptr[r + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

/// LU factorization in band storage without pivoting.
///
/// Step matrices here are dominated by the scaled mass matrix, so the
/// diagonal stays safely away from zero; a vanishing pivot is reported as a
/// singular system rather than silently pivoted around.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    band: Vec<f64>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> std::result::Result<Self, (usize, f64)> {
        assert_eq!(a.rows(), a.cols());
        let n = a.rows();
        let (kl, ku) = a.bandwidths();
        let width = kl + ku + 1;
        let mut band = vec![0.0; n * width];
        for r in 0..n {
            for p in a.indptr[r]..a.indptr[r + 1] {
                let c = a.indices[p];
                band[r * width + (c + kl - r)] += a.data[p];
            }
        }
        let scale = a.max_row_abs_sum().max(f64::MIN_POSITIVE);
        let tiny = 1e-14 * scale;
        for k in 0..n {
            let pivot = band[k * width + kl];
            if !(pivot.abs() > tiny) {
                return Err((k, pivot));
            }
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku).min(n - 1);
            for i in (k + 1)..=last_row {
                let ik = i * width + (k + kl - i);
                let l = band[ik] / pivot;
                band[ik] = l;
                if l == 0.0 {
                    continue;
                }
                let row_i = i * width + kl - i;
                let row_k = k * width + kl - k;
                for j in (k + 1)..=last_col {
                    band[row_i + j] -= l * band[row_k + j];
                }
            }
        }
        Ok(BandedLu {
            n,
            kl,
            ku,
            width,
            band,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let (n, kl, ku, w) = (self.n, self.kl, self.ku, self.width);
        for i in 0..n {
            let first = i.saturating_sub(kl);
            let base = i * w + kl - i;
            let mut acc = x[i];
            for j in first..i {
                acc -= self.band[base + j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let last = (i + ku).min(n - 1);
            let base = i * w + kl - i;
            let mut acc = x[i];
            for j in (i + 1)..=last {
                acc -= self.band[base + j] * x[j];
            }
            x[i] = acc / self.band[base + i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Largest eigenvalue of a symmetric tridiagonal matrix by Sturm bisection.
pub fn tridiagonal_max_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    let m = diag.len();
    assert!(m >= 1 && off.len() + 1 >= m);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < m { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    // number of eigenvalues strictly below x
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut q = 1.0f64;
        for i in 0..m {
            let b2 = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
            q = diag[i] - x - if i > 0 { b2 / q } else { 0.0 };
            if q == 0.0 {
                q = -f64::EPSILON * (x.abs() + 1.0);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(mid) < m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest eigenvalue λ of the symmetric generalized problem S v = λ M v,
/// with M symmetric positive definite and `m_lu` its factorization.
///
/// Lanczos in the M-inner product with full reorthogonalization. The
/// iteration stops when the top Ritz value is stable to `tol` for three
/// consecutive steps, when the Krylov space is exhausted, or with
/// [`DvsError::EigenNotConverged`] after `max_iter` steps.
pub fn generalized_max_eigenvalue(
    s: &CsrMatrix,
    m: &CsrMatrix,
    m_lu: &BandedLu,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<f64> {
    let n = s.rows();
    assert_eq!(m.rows(), n);
    if n == 0 {
        return Err(DvsError::Config("empty operator".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = m.bilinear(&q, &q).sqrt();
    q.iter_mut().for_each(|v| *v /= norm);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut m_basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut theta_prev = f64::NAN;
    let mut stable = 0;
    let limit = max_iter.min(n);

    for j in 0..limit {
        let sq = s.matvec(&q);
        let alpha = dot(&q, &sq);
        let mut w = m_lu.solve(&sq);
        axpy(-alpha, &q, &mut w);
        if j > 0 {
            axpy(-betas[j - 1], &basis[j - 1], &mut w);
        }
        let mq = m.matvec(&q);
        basis.push(q.clone());
        m_basis.push(mq);
        alphas.push(alpha);
        for _ in 0..2 {
            for (v, mv) in basis.iter().zip(&m_basis) {
                let c = dot(mv, &w);
                axpy(-c, v, &mut w);
            }
        }
        let beta = m.bilinear(&w, &w).max(0.0).sqrt();
        let theta = tridiagonal_max_eigenvalue(&alphas, &betas);
        let scale = alphas.iter().map(|a| a.abs()).fold(0.0, f64::max) + betas.iter().map(|b| b.abs()).fold(0.0, f64::max);
        if (theta - theta_prev).abs() <= tol * theta.abs().max(1e-12 * scale.max(1e-300)) {
            stable += 1;
        } else {
            stable = 0;
        }
        theta_prev = theta;
        if stable >= 3 || beta <= 1e-13 * scale.max(f64::MIN_POSITIVE) || j + 1 == n {
            return Ok(theta);
        }
        betas.push(beta);
        q = w.iter().map(|v| v / beta).collect();
    }
    Err(DvsError::EigenNotConverged { iterations: limit })
}
