//! Small dense linear algebra used by the bound calculators.
//!
//! Everything here targets tiny matrices (state dimension up to about 8,
//! a few dozen neuronal units). Matrices are stored row-major; vectors are
//! plain `f64` slices.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use thiserror::Error;

/// Largest column count accepted by [`cube_norm`] and [`box_norm`].
pub const CUBE_NORM_MAX_COLS: usize = 24;

const JACOBI_OFF_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix has a non-finite entry")]
    NonFinite,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (smallest eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("Lyapunov equation has no positive definite solution; the matrix is not Hurwitz")]
    NotHurwitz,
    #[error("linear system is singular")]
    Singular,
    #[error("{cols} columns exceed the vertex enumeration budget of {max}")]
    DimensionTooLarge { cols: usize, max: usize },
    #[error("target is not in the conic hull of the columns (residual {residual:e})")]
    Infeasible { residual: f64 },
}

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            if r > 0 {
                write!(f, "; ")?;
            }
            for c in 0..self.cols {
                if c > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self[(r, c)])?;
            }
        }
        write!(f, "]")
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Mat::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting bad lengths and non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows * cols != data.len() {
            return Err(LinalgError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Mat { rows, cols, data })
    }

    /// Convenience constructor for literals. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), n_cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Mat { rows: n_rows, cols: n_cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
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

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// `y = self * x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|a_ij - a_ji|`; infinite for non-square matrices.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for r in 0..self.rows {
            for c in r + 1..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)]).abs());
            }
        }
        worst
    }

    pub fn symmetrized(&self) -> Mat {
        let t = self.transpose();
        (self + &t).scale(0.5)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    fn check_same_shape(&self, other: &Mat) {
        assert!(
            self.rows == other.rows && self.cols == other.cols,
            "shape mismatch: {}x{} vs {}x{}",
            self.rows,
            self.cols,
            other.rows,
            other.cols
        );
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        self.check_same_shape(rhs);
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }
}

impl Sub for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        self.check_same_shape(rhs);
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }
}

impl Mul for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// LU factorisation with partial pivoting, kept for repeated solves.
struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(a: &Mat) -> Result<Lu, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::NotSquare { rows: a.rows, cols: a.cols });
        }
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|r| (r, lu[r * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= scale * 1e-14 {
                return Err(LinalgError::Singular);
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let d = lu[k * n + k];
            for r in k + 1..n {
                let f = lu[r * n + k] / d;
                lu[r * n + k] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        lu[r * n + c] -= f * lu[k * n + c];
                    }
                }
            }
        }
        Ok(Lu { n, lu, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let s: f64 = (0..r).map(|c| self.lu[r * n + c] * y[c]).sum();
            y[r] -= s;
        }
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| self.lu[r * n + c] * y[c]).sum();
            y[r] = (y[r] - s) / self.lu[r * n + r];
        }
        y
    }
}

/// Solves `A x = b` with one round of iterative refinement.
pub fn solve(a: &Mat, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if b.len() != a.rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "rhs has {} entries for a {}x{} system",
            b.len(),
            a.rows,
            a.cols
        )));
    }
    let lu = Lu::factor(a)?;
    let mut x = lu.solve(b);
    let ax = a.mul_vec(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let dx = lu.solve(&r);
    for (xi, d) in x.iter_mut().zip(dx) {
        *xi += d;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::Singular);
    }
    Ok(x)
}

pub fn inverse(a: &Mat) -> Result<Mat, LinalgError> {
    let n = a.rows;
    let lu = Lu::factor(a)?;
    let mut inv = Mat::zeros(n, n);
    let mut e = vec![0.0; n];
    for c in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[c] = 1.0;
        let col = lu.solve(&e);
        for r in 0..n {
            inv[(r, c)] = col[r];
        }
    }
    Ok(inv)
}

/// Solves `P M + Mᵀ P = -Q` for symmetric positive definite `P`.
///
/// The equation is linearised into an n²×n² system; fine for the small
/// state dimensions this crate deals with. A singular system or a solution
/// that is not positive definite means `M` is not Hurwitz.
pub fn solve_lyapunov(m: &Mat, q: &Mat) -> Result<Mat, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.rows, cols: m.cols });
    }
    let n = m.rows;
    if q.rows != n || q.cols != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "M is {n}x{n} but Q is {}x{}",
            q.rows, q.cols
        )));
    }
    if m.data.iter().chain(&q.data).any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let asym = q.asymmetry();
    if asym > SYMMETRY_TOL * q.max_abs().max(1.0) {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    let q_eigs = sym_eig(&q.symmetrized())?;
    if q_eigs[0] <= 0.0 {
        return Err(LinalgError::NotPositiveDefinite { min_eig: q_eigs[0] });
    }

    // Row (i, j) of the system: sum_k P_ik M_kj + sum_k M_ki P_kj = -Q_ij.
    let nn = n * n;
    let mut sys = Mat::zeros(nn, nn);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..n {
                sys[(row, i * n + k)] += m[(k, j)];
                sys[(row, k * n + j)] += m[(k, i)];
            }
        }
    }
    let rhs: Vec<f64> = q.data.iter().map(|v| -v).collect();
    let p = match solve(&sys, &rhs) {
        Ok(p) => p,
        Err(LinalgError::Singular) => return Err(LinalgError::NotHurwitz),
        Err(e) => return Err(e),
    };
    let p = Mat { rows: n, cols: n, data: p }.symmetrized();
    let eigs = sym_eig(&p)?;
    if eigs[0] <= 0.0 {
        return Err(LinalgError::NotHurwitz);
    }
    Ok(p)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eig(s: &Mat) -> Result<Vec<f64>, LinalgError> {
    sym_eig_vectors(s).map(|(vals, _)| vals)
}

/// Eigenvalues (ascending) and the matching eigenvectors as columns, by
/// cyclic Jacobi rotations.
pub fn sym_eig_vectors(s: &Mat) -> Result<(Vec<f64>, Mat), LinalgError> {
    if !s.is_square() {
        return Err(LinalgError::NotSquare { rows: s.rows, cols: s.cols });
    }
    let asym = s.asymmetry();
    if asym > SYMMETRY_TOL * s.max_abs().max(1.0) {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    let n = s.rows;
    let mut a = s.symmetrized();
    let mut v = Mat::identity(n);
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 =
            (0..n).flat_map(|p| (p + 1..n).map(move |q| (p, q))).map(|(p, q)| a[(p, q)].powi(2)).sum();
        if off.sqrt() <= JACOBI_OFF_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let vals = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vecs[(k, dst)] = v[(k, src)];
        }
    }
    Ok((vals, vecs))
}

/// Largest singular value.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.rows == 0 || m.cols == 0 {
        return 0.0;
    }
    let mt = m.transpose();
    let gram = if m.cols <= m.rows { &mt * m } else { m * &mt };
    let top = sym_eig(&gram).map(|e| e.last().copied().unwrap_or(0.0)).unwrap_or(0.0);
    top.max(0.0).sqrt()
}

/// `sup_{s ∈ [0,1]^N} ‖B s‖`, by enumerating the hypercube vertices.
///
/// The norm is convex in `s`, so the supremum sits on a vertex.
pub fn cube_norm(b: &Mat) -> Result<f64, LinalgError> {
    let lo = vec![0.0; b.cols];
    let hi = vec![1.0; b.cols];
    box_norm(b, &lo, &hi)
}

/// `sup ‖M s‖` over the box `lo ≤ s ≤ hi` (elementwise).
pub fn box_norm(m: &Mat, lo: &[f64], hi: &[f64]) -> Result<f64, LinalgError> {
    let n = m.cols;
    if lo.len() != n || hi.len() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "box bounds must have {n} entries"
        )));
    }
    if n > CUBE_NORM_MAX_COLS {
        return Err(LinalgError::DimensionTooLarge { cols: n, max: CUBE_NORM_MAX_COLS });
    }
    // Gray-code walk: each step flips one coordinate between lo and hi.
    let mut ms = m.mul_vec(lo);
    let mut at_hi = vec![false; n];
    let mut best = norm(&ms);
    for step in 1u64..(1u64 << n) {
        let j = step.trailing_zeros() as usize;
        let delta = if at_hi[j] { lo[j] - hi[j] } else { hi[j] - lo[j] };
        at_hi[j] = !at_hi[j];
        for (r, v) in ms.iter_mut().enumerate() {
            *v += m[(r, j)] * delta;
        }
        best = best.max(norm(&ms));
    }
    Ok(best)
}

/// Least squares `min ‖A x - b‖` via Householder QR. `A` must have full column rank.
pub fn lstsq(a: &Mat, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let (m, n) = (a.rows, a.cols);
    if b.len() != m {
        return Err(LinalgError::DimensionMismatch(format!("rhs has {} entries, need {m}", b.len())));
    }
    if n > m {
        return Err(LinalgError::Singular);
    }
    let mut r = a.clone();
    let mut y = b.to_vec();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for k in 0..n {
        let alpha_norm = (k..m).map(|i| r[(i, k)].powi(2)).sum::<f64>().sqrt();
        if alpha_norm <= scale * 1e-13 {
            return Err(LinalgError::Singular);
        }
        let alpha = if r[(k, k)] > 0.0 { -alpha_norm } else { alpha_norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for c in k..n {
                let proj: f64 = (k..m).map(|i| v[i - k] * r[(i, c)]).sum::<f64>() * 2.0 / vnorm2;
                for i in k..m {
                    r[(i, c)] -= proj * v[i - k];
                }
            }
            let proj: f64 = (k..m).map(|i| v[i - k] * y[i]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..m {
                y[i] -= proj * v[i - k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| r[(k, c)] * x[c]).sum();
        x[k] = (y[k] - s) / r[(k, k)];
    }
    Ok(x)
}

/// Nonnegative least squares by the Lawson–Hanson active-set method.
///
/// Returns `q ≥ 0` with `‖A q - b‖ ≤ 1e-9·max(1, ‖b‖)`; a larger residual
/// floor means `b` is outside the conic hull of the columns.
pub fn nnls(a: &Mat, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let (m, n) = (a.rows, a.cols);
    if b.len() != m {
        return Err(LinalgError::DimensionMismatch(format!("rhs has {} entries, need {m}", b.len())));
    }
    let tol = 1e-12 * a.max_abs().max(1.0) * norm(b).max(1.0);
    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    let max_outer = 3 * n + 10;

    let residual = |x: &[f64]| -> Vec<f64> {
        let ax = a.mul_vec(x);
        b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect()
    };
    // Solve the unconstrained problem restricted to the passive set.
    let sub_solve = |passive: &[bool]| -> Result<Vec<f64>, LinalgError> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let mut sub = Mat::zeros(m, idx.len());
        for (c, &j) in idx.iter().enumerate() {
            for r in 0..m {
                sub[(r, c)] = a[(r, j)];
            }
        }
        let zs = lstsq(&sub, b)?;
        let mut z = vec![0.0; n];
        for (c, &j) in idx.iter().enumerate() {
            z[j] = zs[c];
        }
        Ok(z)
    };

    for _ in 0..max_outer {
        let r = residual(&x);
        let w = a.transpose().mul_vec(&r);
        let cand = (0..n).filter(|&j| !passive[j] && w[j] > tol).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = cand else { break };
        passive[j] = true;

        loop {
            let z = match sub_solve(&passive) {
                Ok(z) => z,
                Err(_) => {
                    // Dependent column: drop it and stop growing the set.
                    passive[j] = false;
                    break;
                }
            };
            if (0..n).filter(|&k| passive[k]).all(|k| z[k] > 0.0) {
                x = z;
                break;
            }
            let mut step = 1.0_f64;
            for k in (0..n).filter(|&k| passive[k] && z[k] <= 0.0) {
                let denom = x[k] - z[k];
                if denom > 0.0 {
                    step = step.min(x[k] / denom);
                }
            }
            for k in 0..n {
                x[k] += step * (z[k] - x[k]);
            }
            for k in 0..n {
                if passive[k] && x[k] <= tol {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
    }

    for v in x.iter_mut() {
        *v = v.max(0.0);
    }
    let res = norm(&residual(&x));
    if res > 1e-9 * norm(b).max(1.0) {
        return Err(LinalgError::Infeasible { residual: res });
    }
    Ok(x)
}
