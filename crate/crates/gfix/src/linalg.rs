//! Dense row-major matrices and a one-sided Jacobi SVD.
//!
//! All computation happens in `f64` regardless of the dtype of the tensor a
//! matrix was built from; the modulation fit stacks several factor products
//! and single precision would compound error too quickly.

use crate::error::{Error, Result};

/// Relative off-diagonal threshold below which a Jacobi rotation is skipped.
pub const JACOBI_REL_TOL: f64 = 1e-12;
/// Sweep cap; one-sided Jacobi on the matrices we care about converges in
/// well under ten sweeps, so hitting this means something is wrong.
pub const MAX_SWEEPS: usize = 60;

/// Dense `f64` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidShape("matrix dimensions must be positive".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidShape(format!(
                "{}x{} matrix needs {} elements, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                detail: format!("{}x{} * {}x{}", self.rows, self.cols, rhs.rows, rhs.cols),
            });
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        // i-k-j order keeps the inner loop contiguous on both operands.
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.data[i * self.cols + k];
                if aik == 0.0 {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, r) in dst.iter_mut().zip(row) {
                    *o += aik * r;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    fn zip_with(&self, rhs: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != rhs.shape() {
            return Err(Error::DimensionMismatch {
                op,
                detail: format!("{:?} vs {:?}", self.shape(), rhs.shape()),
            });
        }
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| f(*a, *b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Scales column `j` by `s[j]`; this is `self * diag(s)`.
    pub fn scale_cols(&self, s: &[f64]) -> Matrix {
        assert_eq!(s.len(), self.cols);
        let mut m = self.clone();
        for row in m.data.chunks_exact_mut(self.cols) {
            for (v, scale) in row.iter_mut().zip(s) {
                *v *= scale;
            }
        }
        m
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Singular value decomposition `w = u * diag(d) * v^T`.
///
/// `u` is m-by-k and `v` is n-by-k with orthonormal columns; `d` is sorted
/// non-increasing. The sign convention forces the largest-magnitude entry of
/// every `u` column non-negative so that factors are bit-reproducible.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: Matrix,
    pub d: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactors {
    pub fn k(&self) -> usize {
        self.d.len()
    }

    /// Keeps the first `r` singular triplets.
    pub fn truncate(&self, r: usize) -> Result<SvdFactors> {
        if r < 1 || r > self.k() {
            return Err(Error::RankOutOfRange { rank: r, max: self.k() });
        }
        Ok(SvdFactors {
            u: take_cols(&self.u, r),
            d: self.d[..r].to_vec(),
            v: take_cols(&self.v, r),
        })
    }

    pub fn reconstruct(&self) -> Matrix {
        self.u
            .scale_cols(&self.d)
            .matmul(&self.v.transpose())
            .expect("factor shapes are consistent by construction")
    }
}

fn take_cols(m: &Matrix, r: usize) -> Matrix {
    Matrix::from_fn(m.rows(), r, |i, j| m.get(i, j))
}

/// Full SVD via one-sided Jacobi, k = min(m, n).
pub fn svd(w: &Matrix) -> Result<SvdFactors> {
    if !w.is_finite() {
        return Err(Error::NonFiniteInput("svd"));
    }
    let (mut u_cols, d, mut v_cols, m, n) = if w.rows() >= w.cols() {
        let (a, d, v) = jacobi_tall(w)?;
        (a, d, v, w.rows(), w.cols())
    } else {
        // Orthogonalize the transpose and swap the roles of u and v.
        let (a, d, v) = jacobi_tall(&w.transpose())?;
        (v, d, a, w.rows(), w.cols())
    };
    apply_sign_convention(&mut u_cols, &mut v_cols);
    Ok(SvdFactors {
        u: cols_to_matrix(m, &u_cols),
        d,
        v: cols_to_matrix(n, &v_cols),
    })
}

/// Normalized left columns, singular values (sorted non-increasing) and
/// right columns.
type JacobiFactors = (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>);

/// One-sided Jacobi on an m-by-n matrix with m >= n.
fn jacobi_tall(w: &Matrix) -> Result<JacobiFactors> {
    let m = w.rows();
    let n = w.cols();
    debug_assert!(m >= n);

    let mut a: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| w.get(i, j)).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (app, aqq, apq) = column_moments(&a[p], &a[q]);
                if apq == 0.0 {
                    continue;
                }
                let denom = (app * aqq).sqrt();
                if apq.abs() <= JACOBI_REL_TOL * denom {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut a, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { sweeps: MAX_SWEEPS });
    }

    let norms: Vec<f64> = a.iter().map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut v_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut d: Vec<f64> = Vec::with_capacity(n);
    let mut pending_zero = Vec::new();
    for &j in &order {
        d.push(norms[j]);
        v_cols.push(v[j].clone());
        if norms[j] > 0.0 {
            u_cols.push(a[j].iter().map(|x| x / norms[j]).collect());
        } else {
            pending_zero.push(u_cols.len());
            u_cols.push(Vec::new()); // placeholder, filled below
        }
    }
    for slot in pending_zero {
        u_cols[slot] = complete_orthonormal(&u_cols, m);
    }
    Ok((u_cols, d, v_cols))
}

#[inline]
fn column_moments(p: &[f64], q: &[f64]) -> (f64, f64, f64) {
    let mut app = 0.0;
    let mut aqq = 0.0;
    let mut apq = 0.0;
    for (x, y) in p.iter().zip(q) {
        app += x * x;
        aqq += y * y;
        apq += x * y;
    }
    (app, aqq, apq)
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = c * *x - s * *y;
        let yq = s * *x + c * *y;
        *x = xp;
        *y = yq;
    }
}

/// Deterministic orthonormal completion: projects out the built columns from
/// the coordinate axis with the largest residual (first index on ties).
fn complete_orthonormal(built: &[Vec<f64>], m: usize) -> Vec<f64> {
    let filled: Vec<&Vec<f64>> = built.iter().filter(|c| !c.is_empty()).collect();
    let mut k_best = 0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..m {
        // built columns are orthonormal, so the residual energy of e_k
        // is 1 - sum of squared k-th components
        let est = 1.0 - filled.iter().map(|c| c[k] * c[k]).sum::<f64>();
        if est > best {
            best = est;
            k_best = k;
        }
    }
    let mut r = vec![0.0; m];
    r[k_best] = 1.0;
    for _ in 0..2 {
        for col in &filled {
            let coef: f64 = r.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            for (ri, ci) in r.iter_mut().zip(col.iter()) {
                *ri -= coef * ci;
            }
        }
    }
    let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    debug_assert!(norm > 0.0, "completion axis fully spanned; residual estimate was {best}");
    r.into_iter().map(|x| x / norm).collect()
}

fn apply_sign_convention(u_cols: &mut [Vec<f64>], v_cols: &mut [Vec<f64>]) {
    for (uc, vc) in u_cols.iter_mut().zip(v_cols.iter_mut()) {
        let mut imax = 0;
        let mut best = -1.0;
        for (i, x) in uc.iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                imax = i;
            }
        }
        if uc[imax] < 0.0 {
            for x in uc.iter_mut() {
                *x = -*x;
            }
            for x in vc.iter_mut() {
                *x = -*x;
            }
        }
    }
}

fn cols_to_matrix(rows: usize, cols: &[Vec<f64>]) -> Matrix {
    Matrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}
