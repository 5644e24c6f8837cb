//! Small dense linear algebra: a row-major matrix, one-sided Jacobi SVD,
//! cyclic Jacobi symmetric eigendecomposition and a couple of direct solvers.
//!
//! Everything here is sized for the tiny, well-scaled matrices that show up
//! in divergence-transition analysis (a few dozen rows at most). All routines
//! use a fixed sweep order, so identical inputs give bit-identical outputs.

use std::fmt;
use std::ops::{Index, IndexMut};

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
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
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row vectors. Returns `None` on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        Some(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Option<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return None;
        }
        Some(Self::from_fn(rows, columns.len(), |r, c| columns[c][r]))
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|c| self.column(c)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Matrix) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `selfᵀ · y`.
    pub fn tr_matvec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, y.len(), "tr_matvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (r, yr) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a * yr;
            }
        }
        out
    }

    /// `selfᵀ · self`.
    pub fn gram(&self) -> Self {
        self.transpose().matmul(self)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// In-place `self += s * other`.
    pub fn add_scaled(&mut self, s: f64, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Horizontal concatenation `[a b c ...]`. All blocks must share a row count.
    pub fn hstack(blocks: &[&Matrix]) -> Option<Self> {
        let rows = blocks.first()?.rows;
        if blocks.iter().any(|b| b.rows != rows) {
            return None;
        }
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for b in blocks {
                out.data[r * cols + offset..r * cols + offset + b.cols].copy_from_slice(b.row(r));
                offset += b.cols;
            }
        }
        Some(out)
    }

    /// Symmetric part `(A + Aᵀ)/2`.
    pub fn symmetrized(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |r, c| 0.5 * (self[(r, c)] + self[(c, r)]))
    }

    /// `Σ_ij a_ij b_ij`, i.e. `tr(Aᵀ B)`.
    pub fn frobenius_inner(&self, other: &Matrix) -> f64 {
        dot(&self.data, &other.data)
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn normalized(a: &[f64]) -> Vec<f64> {
    let n = norm(a);
    scale(a, 1.0 / n)
}

/// Outer product `a bᵀ`.
pub fn outer(a: &[f64], b: &[f64]) -> Matrix {
    Matrix::from_fn(a.len(), b.len(), |r, c| a[r] * b[c])
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ` with
/// `k = min(rows, cols)` singular triplets, sorted by descending value.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `rows × k`, orthonormal columns.
    pub u: Matrix,
    pub s: Vec<f64>,
    /// `cols × k`, orthonormal columns.
    pub v: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD.
///
/// Columns of a working copy are orthogonalized by plane rotations until every
/// pair is orthogonal to within machine precision relative to their norms.
/// Left vectors belonging to numerically zero singular values are completed
/// to an orthonormal set by Gram–Schmidt against the standard basis.
pub fn svd(a: &Matrix) -> Svd {
    if a.rows < a.cols {
        let t = svd(&a.transpose());
        return Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }
    let (m, n) = (a.rows, a.cols);
    // Work column-major for cache-friendly column rotations.
    let mut cols: Vec<Vec<f64>> = a.columns();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut triplets: Vec<(f64, Vec<f64>, Vec<f64>)> = cols
        .into_iter()
        .zip(v)
        .map(|(col, vc)| (norm(&col), col, vc))
        .collect();
    // Stable sort keeps the deterministic sweep order for exact ties.
    triplets.sort_by(|a, b| b.0.total_cmp(&a.0));

    let smax = triplets.first().map_or(0.0, |t| t.0);
    let zero_tol = smax * 1e-13;
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (j, (sv, col, _)) in triplets.iter().enumerate() {
        if *sv > zero_tol && *sv > f64::MIN_POSITIVE {
            u_cols.push(scale(col, 1.0 / sv));
        } else {
            u_cols.push(Vec::new());
            pending.push(j);
        }
    }
    if !pending.is_empty() {
        let mut basis: Vec<Vec<f64>> = u_cols.iter().filter(|c| !c.is_empty()).cloned().collect();
        let mut fill = complete_basis(&mut basis, m).into_iter();
        for j in pending {
            u_cols[j] = fill.next().expect("completion yields enough vectors");
        }
    }

    let s: Vec<f64> = triplets.iter().map(|t| t.0).collect();
    let v_cols: Vec<Vec<f64>> = triplets.into_iter().map(|t| t.2).collect();
    Svd {
        u: Matrix::from_columns(&u_cols).unwrap_or_else(|| Matrix::zeros(m, 0)),
        s,
        v: Matrix::from_columns(&v_cols).unwrap_or_else(|| Matrix::zeros(n, 0)),
    }
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Extends `basis` (orthonormal vectors in `R^dim`) with standard-basis
/// candidates orthogonalized by two passes of modified Gram–Schmidt. Returns
/// only the newly added vectors.
pub fn complete_basis(basis: &mut Vec<Vec<f64>>, dim: usize) -> Vec<Vec<f64>> {
    let mut added = Vec::new();
    for e in 0..dim {
        if basis.len() >= dim {
            break;
        }
        let mut cand = vec![0.0; dim];
        cand[e] = 1.0;
        for _ in 0..2 {
            for b in basis.iter() {
                let proj = dot(&cand, b);
                for (c, bv) in cand.iter_mut().zip(b) {
                    *c -= proj * bv;
                }
            }
        }
        let n = norm(&cand);
        if n > 1e-8 {
            let unit = scale(&cand, 1.0 / n);
            basis.push(unit.clone());
            added.push(unit);
        }
    }
    added
}

/// Orthonormal basis of the orthogonal complement of `span(vectors)`,
/// returned as the columns of a `dim × (dim − rank)` matrix.
pub fn orthonormal_complement(vectors: &[Vec<f64>], dim: usize) -> Matrix {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let proj = dot(&w, b);
                for (x, bv) in w.iter_mut().zip(b) {
                    *x -= proj * bv;
                }
            }
        }
        let n = norm(&w);
        if n > 1e-12 {
            basis.push(scale(&w, 1.0 / n));
        }
    }
    let added = complete_basis(&mut basis, dim);
    Matrix::from_columns(&added).unwrap_or_else(|| Matrix::zeros(dim, 0))
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: Matrix,
}

impl SymEigen {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.column(i)
    }
}

/// Cyclic Jacobi eigenvalue algorithm for symmetric matrices. The input is
/// symmetrized first.
pub fn sym_eigen(a: &Matrix) -> SymEigen {
    assert_eq!(a.rows, a.cols, "sym_eigen needs a square matrix");
    let n = a.rows;
    let mut m = a.symmetrized();
    let mut vecs = Matrix::identity(n);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| m[(p, q)] * m[(p, q)])
            .sum();
        let scale_sq: f64 = m.data.iter().map(|v| v * v).sum();
        if off <= scale_sq * 1e-34 || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = vecs[(k, p)];
                    let vkq = vecs[(k, q)];
                    vecs[(k, p)] = c * vkp - s * vkq;
                    vecs[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    SymEigen {
        values: order.iter().map(|&i| m[(i, i)]).collect(),
        vectors: Matrix::from_fn(n, n, |r, c| vecs[(r, order[c])]),
    }
}

/// Cholesky factor `L` with `A = L Lᵀ`, or `None` if `A` is not numerically
/// positive definite.
pub fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Inverse of a symmetric positive definite matrix through its Cholesky factor.
pub fn spd_inverse(a: &Matrix) -> Option<Matrix> {
    let l = cholesky(a)?;
    let n = a.rows;
    let mut inv = Matrix::zeros(n, n);
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        // forward solve L y = e
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = e[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        // back solve Lᵀ x = y
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        for r in 0..n {
            inv[(r, col)] = x[r];
        }
    }
    Some(inv.symmetrized())
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows;
    assert_eq!(a.cols, n);
    assert_eq!(b.len(), n);
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale_ref = m.max_abs().max(f64::MIN_POSITIVE);
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| m[(i, k)].abs().total_cmp(&m[(j, k)].abs()))?;
        if m[(piv, k)].abs() <= scale_ref * 1e-300 {
            return None;
        }
        if piv != k {
            for c in 0..n {
                let tmp = m[(k, c)];
                m[(k, c)] = m[(piv, c)];
                m[(piv, c)] = tmp;
            }
            x.swap(k, piv);
        }
        for i in (k + 1)..n {
            let f = m[(i, k)] / m[(k, k)];
            if f == 0.0 {
                continue;
            }
            for c in k..n {
                m[(i, c)] -= f * m[(k, c)];
            }
            x[i] -= f * x[k];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for c in (i + 1)..n {
            s -= m[(i, c)] * x[c];
        }
        x[i] = s / m[(i, i)];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Least-squares solution of an overdetermined system via normal equations
/// with a tiny Tikhonov shift. Intended for well-conditioned Newton steps.
pub fn least_squares(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let ata = a.gram();
    let atb = a.tr_matvec(b);
    let shift = 1e-14 * ata.trace().max(1e-300);
    let reg = ata.add(&Matrix::identity(ata.rows).scaled(shift));
    solve(&reg, &atb)
}
