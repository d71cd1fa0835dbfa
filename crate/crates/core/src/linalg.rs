//! Small dense matrices (`N <= 3`) and a sparse symmetric solver.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::{Vector, MAX_DIM};

/// Dense `n x n` matrix stored in a fixed `MAX_DIM x MAX_DIM` block.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mat {
    pub n: usize,
    pub m: [[f64; MAX_DIM]; MAX_DIM],
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        debug_assert!(n <= MAX_DIM);
        Mat {
            n,
            m: [[0.0; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut a = Self::zeros(n);
        for i in 0..n {
            a.m[i][i] = 1.0;
        }
        a
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut a = Self::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            a.m[i][i] = *v;
        }
        a
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn mul_vec(&self, x: &Vector) -> Vector {
        let mut y = [0.0; MAX_DIM];
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            *yi = (0..self.n).map(|j| self.m[i][j] * x[j]).sum();
        }
        y
    }

    pub fn mul(&self, b: &Mat) -> Mat {
        let mut c = Mat::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                c.m[i][j] = (0..self.n).map(|k| self.m[i][k] * b.m[k][j]).sum();
            }
        }
        c
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.m[i][j] = self.m[j][i];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Mat {
        let mut c = *self;
        for row in c.m.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        c
    }

    pub fn add(&self, b: &Mat) -> Mat {
        let mut c = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                c.m[i][j] += b.m[i][j];
            }
        }
        c
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.m[i][i]).sum()
    }

    /// `<A x, y>`.
    pub fn form(&self, x: &Vector, y: &Vector) -> f64 {
        let ax = self.mul_vec(x);
        (0..self.n).map(|i| ax[i] * y[i]).sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.m[i][j] - self.m[j][i]).abs());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, b: &Mat) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                worst = worst.max((self.m[i][j] - b.m[i][j]).abs());
            }
        }
        worst
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    ///
    /// Returns eigenvalues and a matrix whose columns are the eigenvectors.
    pub fn symmetric_eigen(&self) -> (Vector, Mat) {
        let n = self.n;
        let mut a = *self;
        let mut v = Mat::identity(n);
        for _sweep in 0..64 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a.m[p][q] * a.m[p][q];
                }
            }
            if off < 1e-300 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.m[p][q];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a.m[q][q] - a.m[p][p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + sqrt(theta * theta + 1.0));
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / sqrt(t * t + 1.0);
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.m[k][p];
                        let akq = a.m[k][q];
                        a.m[k][p] = c * akp - s * akq;
                        a.m[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a.m[p][k];
                        let aqk = a.m[q][k];
                        a.m[p][k] = c * apk - s * aqk;
                        a.m[q][k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v.m[k][p];
                        let vkq = v.m[k][q];
                        v.m[k][p] = c * vkp - s * vkq;
                        v.m[k][q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut vals = [0.0; MAX_DIM];
        for (i, val) in vals.iter_mut().enumerate().take(n) {
            *val = a.m[i][i];
        }
        (vals, v)
    }

    /// Applies `g` to the spectrum of a symmetric matrix.
    fn spectral_map(&self, g: impl Fn(f64) -> f64) -> Result<Mat> {
        if self.max_asymmetry() > 1e-12 * (1.0 + self.trace().abs()) {
            return Err(Error::NotPositiveDefinite);
        }
        let (vals, v) = self.symmetric_eigen();
        if vals.iter().take(self.n).any(|&l| l <= 0.0 || !l.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let mut d = Mat::zeros(self.n);
        for i in 0..self.n {
            d.m[i][i] = g(vals[i]);
        }
        Ok(v.mul(&d).mul(&v.transpose()))
    }

    /// Principal square root of a symmetric positive definite matrix.
    pub fn spd_sqrt(&self) -> Result<Mat> {
        self.spectral_map(sqrt)
    }

    pub fn spd_inv_sqrt(&self) -> Result<Mat> {
        self.spectral_map(|l| 1.0 / sqrt(l))
    }

    pub fn spd_inverse(&self) -> Result<Mat> {
        self.spectral_map(|l| 1.0 / l)
    }

    /// Smallest and largest eigenvalue of a symmetric matrix.
    pub fn eigen_bounds(&self) -> (f64, f64) {
        let (vals, _) = self.symmetric_eigen();
        let vals = &vals[..self.n];
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    pub nrows: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Assembles from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr { nrows, row_ptr, cols, vals }
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows];
        for (i, di) in d.iter_mut().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.cols[k] == i {
                    *di = self.vals[k];
                }
            }
        }
        d
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                let aji = self.entry(j, i);
                worst = worst.max((self.vals[k] - aji).abs());
            }
        }
        worst
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(pos) => self.vals[self.row_ptr[i] + pos],
            Err(_) => 0.0,
        }
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone, Copy)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for SPD systems; `x` holds the
/// initial guess on entry.
pub fn conjugate_gradient(a: &Csr, b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> Result<CgStats> {
    let n = a.nrows;
    let diag = a.diagonal();
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let mut r = vec![0.0; n];
    a.mul_vec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let bnorm = sqrt(b.iter().map(|v| v * v).sum::<f64>()).max(1e-300);
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut rnorm = sqrt(r.iter().map(|v| v * v).sum::<f64>());
    if rnorm / bnorm <= rel_tol {
        return Ok(CgStats {
            iterations: 0,
            relative_residual: rnorm / bnorm,
        });
    }
    for it in 1..=max_iter {
        a.mul_vec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = sqrt(r.iter().map(|v| v * v).sum::<f64>());
        if rnorm / bnorm <= rel_tol {
            return Ok(CgStats {
                iterations: it,
                relative_residual: rnorm / bnorm,
            });
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolve {
        iterations: max_iter,
        residual: rnorm / bnorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_of_diagonal() {
        let a = Mat::diag(&[4.0, 1.0]);
        let s = a.spd_sqrt().unwrap();
        assert!((s.get(0, 0) - 2.0).abs() < 1e-14);
        assert!((s.get(1, 1) - 1.0).abs() < 1e-14);
        assert!(s.get(0, 1).abs() < 1e-14);
    }

    #[test]
    fn sqrt_squares_back() {
        let mut a = Mat::zeros(3);
        a.m = [[3.0, 0.5, 0.2], [0.5, 2.0, -0.3], [0.2, -0.3, 1.5]];
        let s = a.spd_sqrt().unwrap();
        assert!(s.mul(&s).max_abs_diff(&a) < 1e-13);
        let si = a.spd_inv_sqrt().unwrap();
        assert!(si.mul(&a).mul(&si).max_abs_diff(&Mat::identity(3)) < 1e-13);
    }

    #[test]
    fn indefinite_rejected() {
        let a = Mat::diag(&[1.0, -1.0]);
        assert_eq!(a.spd_sqrt(), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn cg_solves_tridiagonal() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        let a = Csr::from_triplets(n, t);
        assert_eq!(a.max_asymmetry(), 0.0);
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&xs, &mut b);
        let mut x = vec![0.0; n];
        conjugate_gradient(&a, &b, &mut x, 1e-13, 500).unwrap();
        for i in 0..n {
            assert!((x[i] - xs[i]).abs() < 1e-10);
        }
    }
}
