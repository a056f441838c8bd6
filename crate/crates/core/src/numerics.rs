//! Dense complex linear algebra.
//!
//! Only what the link model and the baselines need: products, Hermitian
//! factorizations through Cholesky and a one-sided Jacobi SVD. Storage is
//! row-major and every operation allocates its result.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;

/// Relative tolerance used to decide whether a matrix is Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("matrix is not Hermitian (max deviation {deviation:.3e}, scale {scale:.3e})")]
    NotHermitian { deviation: f64, scale: f64 },
    #[error("matrix is not positive definite (pivot {index} = {pivot:.3e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    DimensionMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("SVD did not converge within {iterations} sweeps")]
    ConvergenceFailure { iterations: usize },
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch {
                op: "from_row_major",
                lhs: (rows, cols),
                rhs: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Column vector from a slice.
    pub fn column_vector(v: &[C64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn diag(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn matmul(&self, rhs: &CMat) -> Result<CMat> {
        if self.cols != rhs.rows {
            return Err(NumericsError::DimensionMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let mut out = CMat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, rhs: &CMat) -> Result<CMat> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &CMat) -> Result<CMat> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    fn zip_with(&self, rhs: &CMat, op: &'static str, f: impl Fn(C64, C64) -> C64) -> Result<CMat> {
        if self.shape() != rhs.shape() {
            return Err(NumericsError::DimensionMismatch {
                op,
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        Ok(CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn scale(&self, s: C64) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> CMat {
        self.scale(C64::new(s, 0.0))
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `[vec(Re(m)); vec(Im(m))]` with column-major vectorization.
    pub fn vectorize_reim(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.push(self[(r, c)].re);
            }
        }
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.push(self[(r, c)].im);
            }
        }
        out
    }

    /// Inverse of [`CMat::vectorize_reim`].
    pub fn from_reim(rows: usize, cols: usize, v: &[f64]) -> Result<CMat> {
        let n = rows * cols;
        if v.len() != 2 * n {
            return Err(NumericsError::DimensionMismatch {
                op: "from_reim",
                lhs: (rows, cols),
                rhs: (v.len(), 1),
            });
        }
        Ok(CMat::from_fn(rows, cols, |r, c| {
            let k = c * rows + r;
            C64::new(v[k], v[n + k])
        }))
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

fn check_hermitian(m: &CMat) -> Result<()> {
    if !m.is_square() {
        return Err(NumericsError::DimensionMismatch {
            op: "hermitian",
            lhs: m.shape(),
            rhs: (m.cols, m.rows),
        });
    }
    let scale = m.max_abs();
    let mut deviation: f64 = 0.0;
    for r in 0..m.rows {
        for c in r..m.cols {
            deviation = deviation.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    if deviation > HERMITIAN_TOL * scale {
        return Err(NumericsError::NotHermitian { deviation, scale });
    }
    Ok(())
}

/// Lower-triangular Cholesky factor `L` with `m = L Lᴴ`.
///
/// Only the lower triangle of `m` is read after the Hermitian check.
pub fn cholesky(m: &CMat) -> Result<CMat> {
    check_hermitian(m)?;
    let n = m.rows;
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return Err(NumericsError::NotPositiveDefinite { index: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = C64::new(ljj, 0.0);
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn forward_solve(l: &CMat, b: &CMat) -> Result<CMat> {
    if !l.is_square() || l.rows != b.rows {
        return Err(NumericsError::DimensionMismatch {
            op: "forward_solve",
            lhs: l.shape(),
            rhs: b.shape(),
        });
    }
    let n = l.rows;
    let mut x = b.clone();
    for c in 0..b.cols {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Solves `Lᴴ X = B` for lower-triangular `L`.
pub fn backward_solve_adjoint(l: &CMat, b: &CMat) -> Result<CMat> {
    if !l.is_square() || l.rows != b.rows {
        return Err(NumericsError::DimensionMismatch {
            op: "backward_solve_adjoint",
            lhs: l.shape(),
            rhs: b.shape(),
        });
    }
    let n = l.rows;
    let mut x = b.clone();
    for c in 0..b.cols {
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)].conj() * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)].conj();
        }
    }
    Ok(x)
}

/// Natural log of the determinant of a Hermitian positive-definite matrix.
pub fn hermitian_logdet(m: &CMat) -> Result<f64> {
    let l = cholesky(m)?;
    Ok(2.0 * (0..l.rows).map(|i| l[(i, i)].re.ln()).sum::<f64>())
}

/// Inverse of a Hermitian positive-definite matrix. The result is exactly
/// Hermitian.
pub fn hermitian_inverse(m: &CMat) -> Result<CMat> {
    let l = cholesky(m)?;
    let y = forward_solve(&l, &CMat::identity(m.rows))?;
    let x = backward_solve_adjoint(&l, &y)?;
    let n = m.rows;
    Ok(CMat::from_fn(n, n, |r, c| {
        if r == c {
            C64::new(x[(r, r)].re, 0.0)
        } else {
            0.5 * (x[(r, c)] + x[(c, r)].conj())
        }
    }))
}

/// Thin singular value decomposition `m = U diag(s) Vᴴ`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows × k` with orthonormal columns, `k = min(rows, cols)`.
    pub u: CMat,
    /// Descending, nonnegative.
    pub s: Vec<f64>,
    /// `cols × k` with orthonormal columns.
    pub v: CMat,
}

impl Svd {
    pub fn reconstruct(&self) -> CMat {
        let k = self.s.len();
        CMat::from_fn(self.u.rows, self.v.rows, |r, c| {
            (0..k)
                .map(|i| self.u[(r, i)] * self.s[i] * self.v[(c, i)].conj())
                .sum()
        })
    }
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Sweeps are capped at `100 * max(rows, cols)`.
pub fn svd(m: &CMat) -> Result<Svd> {
    if m.rows < m.cols {
        let t = svd_tall(&m.adjoint())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    svd_tall(m)
}

fn svd_tall(m: &CMat) -> Result<Svd> {
    let (rows, cols) = m.shape();
    // Column-major working copies: a[j] is column j.
    let mut a: Vec<Vec<C64>> = (0..cols).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<C64>> = (0..cols)
        .map(|j| {
            let mut e = vec![C64::new(0.0, 0.0); cols];
            e[j] = C64::new(1.0, 0.0);
            e
        })
        .collect();

    let cap = 100 * rows.max(cols);
    let eps = 1e-15;
    let mut converged = cols < 2;
    let mut sweep = 0;
    while !converged {
        if sweep >= cap {
            return Err(NumericsError::ConvergenceFailure { iterations: cap });
        }
        sweep += 1;
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha: f64 = a[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = a[q].iter().map(|z| z.norm_sqr()).sum();
                let gamma: C64 = a[p].iter().zip(&a[q]).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if g == 0.0 || g <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let pc = phase.conj();
                for (xp, xq) in split_pair(&mut a, p, q) {
                    let yq = *xq * pc;
                    let np = *xp * c - yq * s;
                    *xq = *xp * s + yq * c;
                    *xp = np;
                }
                for (xp, xq) in split_pair(&mut v, p, q) {
                    let yq = *xq * pc;
                    let np = *xp * c - yq * s;
                    *xq = *xp * s + yq * c;
                    *xp = np;
                }
            }
        }
        converged = !rotated;
    }

    let mut norms: Vec<(usize, f64)> = a
        .iter()
        .enumerate()
        .map(|(j, col)| (j, col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()))
        .collect();
    norms.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));

    let smax = norms.first().map_or(0.0, |x| x.1);
    let tiny = smax * 1e-14 * rows.max(cols) as f64;
    let mut u_cols: Vec<Vec<C64>> = Vec::with_capacity(cols);
    let mut s = Vec::with_capacity(cols);
    let mut v_out = CMat::zeros(cols, cols);
    for (k, &(j, norm)) in norms.iter().enumerate() {
        for r in 0..cols {
            v_out[(r, k)] = v[j][r];
        }
        if norm > tiny && norm > 0.0 {
            u_cols.push(a[j].iter().map(|z| z / norm).collect());
        } else {
            u_cols.push(complete_basis(&u_cols, rows));
        }
        s.push(norm);
    }
    let u = CMat::from_fn(rows, cols, |r, c| u_cols[c][r]);
    Ok(Svd { u, s, v: v_out })
}

fn split_pair<'a>(
    cols: &'a mut [Vec<C64>],
    p: usize,
    q: usize,
) -> impl Iterator<Item = (&'a mut C64, &'a mut C64)> {
    debug_assert!(p < q);
    let (lo, hi) = cols.split_at_mut(q);
    lo[p].iter_mut().zip(hi[0].iter_mut())
}

/// A unit vector orthogonal to every vector in `basis` (Gram-Schmidt against
/// the standard basis).
fn complete_basis(basis: &[Vec<C64>], dim: usize) -> Vec<C64> {
    let mut best: Option<(f64, Vec<C64>)> = None;
    for e in 0..dim {
        let mut x = vec![C64::new(0.0, 0.0); dim];
        x[e] = C64::new(1.0, 0.0);
        for _ in 0..2 {
            for b in basis {
                let proj: C64 = b.iter().zip(&x).map(|(bi, xi)| bi.conj() * xi).sum();
                for (xi, bi) in x.iter_mut().zip(b) {
                    *xi -= proj * bi;
                }
            }
        }
        let n = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if best.as_ref().map_or(true, |(bn, _)| n > *bn) {
            best = Some((n, x));
        }
        if n > 0.5 {
            break;
        }
    }
    let (n, x) = best.expect("dimension is at least one");
    x.into_iter().map(|z| z / n).collect()
}

/// `ln det(I + E Eᴴ)` for a small matrix `E`, through Cholesky.
pub fn logdet_identity_plus_gram(e: &CMat) -> Result<f64> {
    let n = e.rows;
    let mut g = CMat::identity(n);
    for i in 0..n {
        for j in 0..=i {
            let s: C64 = e.row(i).iter().zip(e.row(j)).map(|(a, b)| a * b.conj()).sum();
            g[(i, j)] += s;
            if i != j {
                g[(j, i)] = g[(i, j)].conj();
            }
        }
    }
    hermitian_logdet(&g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn logdet_identity_is_zero() {
        assert_eq!(hermitian_logdet(&CMat::identity(3)).unwrap(), 0.0);
    }

    #[test]
    fn logdet_diagonal() {
        let m = CMat::from_diag(&[c(2.0, 0.0), c(3.0, 0.0)]);
        assert!((hermitian_logdet(&m).unwrap() - 6f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn inverse_of_diagonal() {
        let m = CMat::from_diag(&[c(2.0, 0.0), c(4.0, 0.0)]);
        // the inverse goes through a Cholesky factor, so 1/2 arrives as (1/√2)²
        let close = |a: &CMat, b: &CMat| a.data.iter().zip(&b.data).all(|(x, y)| (x - y).norm() < 1e-15);
        let inv = hermitian_inverse(&m).unwrap();
        assert!(close(&inv, &CMat::from_diag(&[c(0.5, 0.0), c(0.25, 0.0)])), "{inv:?}");
        let id = hermitian_inverse(&CMat::identity(3)).unwrap();
        assert!(close(&id, &CMat::identity(3)), "{id:?}");
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = CMat::identity(2);
        m[(0, 1)] = c(0.5, 0.0);
        assert!(matches!(
            hermitian_logdet(&m),
            Err(NumericsError::NotHermitian { .. })
        ));
    }

    #[test]
    fn rejects_indefinite() {
        let m = CMat::from_diag(&[c(1.0, 0.0), c(-1.0, 0.0)]);
        assert!(matches!(
            hermitian_inverse(&m),
            Err(NumericsError::NotPositiveDefinite { index: 1, .. })
        ));
        assert!(matches!(
            hermitian_logdet(&CMat::zeros(2, 2)),
            Err(NumericsError::NotPositiveDefinite { index: 0, .. })
        ));
    }

    #[test]
    fn svd_of_diagonal() {
        let m = CMat::from_diag(&[c(3.0, 0.0), c(2.0, 0.0)]);
        let d = svd(&m).unwrap();
        assert!((d.s[0] - 3.0).abs() < 1e-15 && (d.s[1] - 2.0).abs() < 1e-15);
        let m = CMat::from_diag(&[c(2.0, 0.0), c(3.0, 0.0)]);
        let d = svd(&m).unwrap();
        assert!((d.s[0] - 3.0).abs() < 1e-15 && (d.s[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn svd_rank_one() {
        let a = [c(1.0, 2.0), c(-0.5, 0.0), c(0.0, 1.0)];
        let b = [c(0.3, -1.0), c(2.0, 0.5)];
        let m = CMat::from_fn(3, 2, |r, col| a[r] * b[col].conj());
        let d = svd(&m).unwrap();
        let na = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let nb = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((d.s[0] - na * nb).abs() < 1e-12);
        assert!(d.s[1] < 1e-12);
        let uhu = d.u.adjoint().matmul(&d.u).unwrap();
        assert!(uhu.sub(&CMat::identity(2)).unwrap().max_abs() < 1e-12);
        assert!(d.reconstruct().sub(&m).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn svd_of_zero_matrix() {
        let d = svd(&CMat::zeros(3, 2)).unwrap();
        assert_eq!(d.s, vec![0.0, 0.0]);
        let uhu = d.u.adjoint().matmul(&d.u).unwrap();
        assert!(uhu.sub(&CMat::identity(2)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn vectorize_reim_scalar() {
        let m = CMat::column_vector(&[c(2.0, 3.0)]);
        assert_eq!(m.vectorize_reim(), vec![2.0, 3.0]);
    }

    #[test]
    fn vectorize_is_column_major() {
        let m = CMat::from_row_major(2, 2, vec![c(1.0, 5.0), c(2.0, 6.0), c(3.0, 7.0), c(4.0, 8.0)])
            .unwrap();
        assert_eq!(m.vectorize_reim(), vec![1.0, 3.0, 2.0, 4.0, 5.0, 7.0, 6.0, 8.0]);
        assert_eq!(CMat::from_reim(2, 2, &m.vectorize_reim()).unwrap(), m);
    }

    #[test]
    fn matmul_identity_and_mismatch() {
        let a = CMat::from_fn(3, 2, |r, col| c(r as f64, col as f64 - 1.0));
        assert_eq!(CMat::identity(3).matmul(&a).unwrap(), a);
        assert!(matches!(
            a.matmul(&a),
            Err(NumericsError::DimensionMismatch { op: "matmul", .. })
        ));
        assert!(a.add(&CMat::zeros(2, 3)).is_err());
    }
}
