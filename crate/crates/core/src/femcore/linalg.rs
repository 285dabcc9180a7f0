use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Compressed sparse row matrix with sorted, deduplicated columns.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries. Explicit zeros are kept.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[fill[r]] = c;
            vals[fill[r]] = v;
            fill[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|e| e.0);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        match cols.binary_search(&c) {
            Ok(k) => self.values[self.row_ptr[r] + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows).flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v))).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// `Aᵀ x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        y
    }

    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.ncols);
        let mut y = DMatrix::zeros(self.nrows, x.ncols());
        for j in 0..x.ncols() {
            let col = x.column(j);
            for r in 0..self.nrows {
                y[(r, j)] = self.row(r).map(|(c, v)| v * col[c]).sum();
            }
        }
        y
    }

    /// Sparse product `self · other`.
    pub fn mul(&self, other: &CsrMatrix) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut acc = vec![0.0; other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut pattern: Vec<usize> = Vec::new();
        for r in 0..self.nrows {
            pattern.clear();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = 0.0;
                        pattern.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            pattern.sort_unstable();
            for &c in &pattern {
                col_idx.push(c);
                values.push(acc[c]);
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows: self.nrows, ncols: other.ncols, row_ptr, col_idx, values }
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn add(&self, other: &CsrMatrix) -> Self {
        assert!(self.nrows == other.nrows && self.ncols == other.ncols);
        let mut t = self.triplets();
        t.extend(other.triplets());
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(self.matvec(y)).map(|(a, b)| a * b).sum()
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows).map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Submatrix with the given rows and columns (in the given order).
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut t = Vec::new();
        for (i, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                if col_map[c] != usize::MAX {
                    t.push((i, col_map[c], v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), &t)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[(r, c)] += v;
            }
        }
        d
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<Triplet<usize, usize, f64>> =
            self.triplets().into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| Error::InvalidInput(format!("sparse matrix construction failed: {e:?}")))
    }
}

/// Sparse LU factorization with a residual-checked solve.
///
/// A singular matrix does not always make the factorization fail; instead the
/// solve produces non-finite values or a large residual, both of which are
/// reported as [`Error::SingularSystem`].
pub struct SparseDirectSolver {
    matrix: CsrMatrix,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    tolerance: f64,
}

impl SparseDirectSolver {
    pub fn new(matrix: CsrMatrix) -> Result<Self> {
        if matrix.nrows != matrix.ncols {
            return Err(Error::DimensionMismatch { expected: matrix.nrows, actual: matrix.ncols });
        }
        let lu = matrix.to_faer()?.sp_lu().map_err(|e| Error::SingularSystem {
            residual: f64::INFINITY,
            detail: format!("factorization failed: {e:?}"),
        })?;
        Ok(Self { matrix, lu, tolerance: 1e-10 })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let m = DMatrix::from_column_slice(rhs.len(), 1, rhs);
        Ok(self.solve_columns(&m)?.column(0).iter().copied().collect())
    }

    /// Solves for every column of `rhs`, with one step of iterative refinement.
    pub fn solve_columns(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if rhs.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: rhs.nrows() });
        }
        let k = rhs.ncols();
        let b = Mat::<f64>::from_fn(n, k, |i, j| rhs[(i, j)]);
        let x = self.lu.solve(&b);
        let mut out = DMatrix::from_fn(n, k, |i, j| x[(i, j)]);
        let residual = |out: &DMatrix<f64>| {
            let ax = self.matrix.mul_dense(out);
            rhs - ax
        };
        let r = residual(&out);
        let corr = self.lu.solve(&Mat::<f64>::from_fn(n, k, |i, j| r[(i, j)]));
        for j in 0..k {
            for i in 0..n {
                out[(i, j)] += corr[(i, j)];
            }
        }
        let r = residual(&out);
        for j in 0..k {
            let bn = rhs.column(j).norm();
            let rn = r.column(j).norm();
            let finite = out.column(j).iter().all(|v| v.is_finite());
            if !finite || rn > self.tolerance * bn.max(f64::MIN_POSITIVE) && rn > 0.0 {
                let rel = if bn > 0.0 { rn / bn } else { rn };
                return Err(Error::SingularSystem {
                    residual: if finite { rel } else { f64::INFINITY },
                    detail: format!("direct solve of a {n}x{n} system did not reach the residual tolerance"),
                });
            }
        }
        Ok(out)
    }
}

/// Solves the saddle-point system `[A Bᵀ; B 0] [x; y] = [f; g]`.
pub fn sparse_saddle_solve(a: &CsrMatrix, b: &CsrMatrix, f: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, m) = (a.nrows, b.nrows);
    if a.ncols != n || b.ncols != n || f.len() != n || g.len() != m {
        return Err(Error::DimensionMismatch { expected: n, actual: b.ncols });
    }
    let mut t = a.triplets();
    for (r, c, v) in b.triplets() {
        t.push((n + r, c, v));
        t.push((c, n + r, v));
    }
    let kkt = CsrMatrix::from_triplets(n + m, n + m, &t);
    let rhs: Vec<f64> = f.iter().chain(g).copied().collect();
    let sol = SparseDirectSolver::new(kkt)?.solve(&rhs)?;
    Ok((sol[..n].to_vec(), sol[n..].to_vec()))
}

/// Eigenpairs of a symmetric-definite pencil.
#[derive(Clone, Debug)]
pub struct GeneralizedEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// `S`-orthonormal eigenvectors, one per column.
    pub vectors: DMatrix<f64>,
}

/// Lower Cholesky factor, failing when a pivot drops below `floor`.
fn cholesky(s: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    let n = s.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return Err(Error::NotPositiveDefinite(format!(
                "Cholesky pivot {j} is {d:e}, below the floor {floor:e}"
            )));
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / dj;
        }
    }
    Ok(l)
}

/// Solves `A φ = λ S φ` for symmetric `A` and symmetric positive-definite `S`.
pub fn dense_generalized_eigensolve(a: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<GeneralizedEigen> {
    let n = a.nrows();
    if a.ncols() != n || s.nrows() != n || s.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: s.nrows() });
    }
    if n == 0 {
        return Ok(GeneralizedEigen { values: Vec::new(), vectors: DMatrix::zeros(0, 0) });
    }
    let floor = 1e-12 * s.trace() / n as f64;
    let l = cholesky(s, floor)?;
    let x = l.solve_lower_triangular(a).expect("nonzero diagonal");
    let mut c = l.solve_lower_triangular(&x.transpose()).expect("nonzero diagonal");
    c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let v = DMatrix::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    let vectors = l.transpose().solve_upper_triangular(&v).expect("nonzero diagonal");
    Ok(GeneralizedEigen { values, vectors })
}

/// Orthonormal basis of the column span, dropping directions whose singular
/// value is below `rel_tol` times the largest.
pub fn orthonormal_columns(x: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if x.ncols() == 0 || x.nrows() == 0 {
        return DMatrix::zeros(x.nrows(), 0);
    }
    let svd = x.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > rel_tol * smax && smax > 0.0)
        .collect();
    DMatrix::from_fn(x.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}

/// Principal angles (radians, ascending) between the column spans of `x`
/// and `y`, one per dimension of the smaller span.
///
/// Computed from sines, so angles near zero are resolved to roundoff.
pub fn principal_angles(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Vec<f64> {
    let qx = orthonormal_columns(x, 1e-12);
    let qy = orthonormal_columns(y, 1e-12);
    let (small, big) = if qx.ncols() <= qy.ncols() { (qx, qy) } else { (qy, qx) };
    if small.ncols() == 0 {
        return Vec::new();
    }
    let residual = &small - &big * (big.transpose() * &small);
    let sv: DVector<f64> = residual.svd(false, false).singular_values;
    let mut angles: Vec<f64> = sv.iter().map(|s| s.min(1.0).asin()).collect();
    angles.sort_by(f64::total_cmp);
    angles
}
