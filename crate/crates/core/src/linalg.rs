//! Dense symmetric linear algebra on row-major `n x n` slices.
//!
//! The eigensolver reduces the matrix to tridiagonal form with Householder
//! reflections and diagonalizes the tridiagonal matrix with implicit-shift QL
//! iterations. The QL plane rotations are recorded so that eigenvector
//! coordinates of a single vector can be obtained in `O(n^2)` without forming
//! the eigenvector matrix; the adaptive beamformers rely on this to project
//! weights onto the dominant subspace at every pixel.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Cholesky factorization in place (lower triangle holds `L`).
fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::Numerical(format!(
                "matrix is not positive definite (pivot {j} = {diag:e})"
            )));
        }
        let d = diag.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let (row_i, row_j) = (i * n, j * n);
            let mut s = a[row_i + j];
            for k in 0..j {
                s -= a[row_i + k] * a[row_j + k];
            }
            a[row_i + j] = s / d;
        }
    }
    Ok(())
}

/// Solves `A x = b` for symmetric positive definite `A` without forming `A^-1`.
/// `a` is overwritten with its Cholesky factor.
pub fn cholesky_solve_in_place(a: &mut [f64], n: usize, b: &mut [f64]) -> Result<()> {
    cholesky_in_place(a, n)?;
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Ok(())
}

/// A recorded QL rotation acting on coordinates `i` and `i + 1`.
#[derive(Debug, Clone, Copy)]
struct Rotation {
    i: usize,
    c: f64,
    s: f64,
}

/// Householder reduction `A = Q T Q^T` plus QL diagonalization `T = Z D Z^T`,
/// with `Q` and `Z` kept in factored form.
#[derive(Debug, Default, Clone)]
pub struct SymmetricSolver {
    n: usize,
    /// Householder vectors, `v_k` stored in row `k` at columns `k+1..n`.
    reflectors: Vec<f64>,
    betas: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
    rotations: Vec<Rotation>,
}

const MAX_QL_SWEEPS: usize = 60;

impl SymmetricSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Eigenvalues in solver order (not sorted), valid after [`Self::factor`].
    pub fn eigenvalues(&self) -> &[f64] {
        &self.diag
    }

    /// Factors the symmetric matrix `a` (row-major, `n x n`). Only the values
    /// are read; `a` is used as scratch and left overwritten.
    pub fn factor(&mut self, a: &mut [f64], n: usize) -> Result<()> {
        self.n = n;
        self.tridiagonalize(a, n);
        self.ql()
    }

    fn tridiagonalize(&mut self, a: &mut [f64], n: usize) {
        self.reflectors.clear();
        self.reflectors.resize(n * n, 0.0);
        self.betas.clear();
        self.betas.resize(n, 0.0);
        self.diag.clear();
        self.diag.resize(n, 0.0);
        self.off.clear();
        self.off.resize(n, 0.0);
        let mut p = vec![0.0; n];

        for k in 0..n.saturating_sub(2) {
            let start = k + 1;
            // x = A[k+1.., k]
            let mut norm2 = 0.0;
            for i in start..n {
                norm2 += a[i * n + k] * a[i * n + k];
            }
            let x0 = a[start * n + k];
            let norm = norm2.sqrt();
            self.diag[k] = a[k * n + k];
            if norm == 0.0 {
                self.off[k] = 0.0;
                self.betas[k] = 0.0;
                continue;
            }
            let alpha = if x0 > 0.0 { -norm } else { norm };
            // v = x - alpha e1, beta = 2 / (v^T v)
            let v = &mut self.reflectors[k * n..(k + 1) * n];
            for i in start..n {
                v[i] = a[i * n + k];
            }
            v[start] -= alpha;
            let vtv = norm2 - 2.0 * alpha * x0 + alpha * alpha;
            let beta = 2.0 / vtv;
            self.betas[k] = beta;
            self.off[k] = alpha;

            // p = beta A22 v
            for i in start..n {
                let row = &a[i * n + start..i * n + n];
                let mut s = 0.0;
                for (aij, vj) in row.iter().zip(&v[start..n]) {
                    s += aij * vj;
                }
                p[i] = beta * s;
            }
            // w = p - (beta/2)(p^T v) v, stored back in p
            let mut ptv = 0.0;
            for i in start..n {
                ptv += p[i] * v[i];
            }
            let kappa = 0.5 * beta * ptv;
            for i in start..n {
                p[i] -= kappa * v[i];
            }
            // A22 -= v w^T + w v^T
            for i in start..n {
                let (vi, wi) = (v[i], p[i]);
                let row = &mut a[i * n + start..i * n + n];
                for ((aij, vj), wj) in row.iter_mut().zip(&v[start..n]).zip(&p[start..n]) {
                    *aij -= vi * wj + wi * vj;
                }
            }
        }
        if n >= 2 {
            self.diag[n - 2] = a[(n - 2) * n + n - 2];
            self.diag[n - 1] = a[(n - 1) * n + n - 1];
            self.off[n - 2] = a[(n - 1) * n + n - 2];
        } else if n == 1 {
            self.diag[0] = a[0];
        }
        if n > 0 {
            self.off[n - 1] = 0.0;
        }
    }

    /// Implicit-shift QL on `(diag, off)`, recording every plane rotation.
    fn ql(&mut self) -> Result<()> {
        let n = self.n;
        self.rotations.clear();
        let d = &mut self.diag;
        let e = &mut self.off;
        let eps = f64::EPSILON;
        let mut f = 0.0;
        let mut tst1: f64 = 0.0;
        for l in 0..n {
            tst1 = tst1.max(d[l].abs() + e[l].abs());
            let mut m = l;
            while m < n {
                if e[m].abs() <= eps * tst1 {
                    break;
                }
                m += 1;
            }
            if m > l {
                let mut sweeps = 0;
                loop {
                    sweeps += 1;
                    if sweeps > MAX_QL_SWEEPS {
                        return Err(Error::Numerical(format!(
                            "QL iteration did not converge for eigenvalue {l}"
                        )));
                    }
                    let g = d[l];
                    let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                    let mut r = p.hypot(1.0);
                    if p < 0.0 {
                        r = -r;
                    }
                    d[l] = e[l] / (p + r);
                    d[l + 1] = e[l] * (p + r);
                    let dl1 = d[l + 1];
                    let mut h = g - d[l];
                    for di in d.iter_mut().take(n).skip(l + 2) {
                        *di -= h;
                    }
                    f += h;

                    p = d[m];
                    let mut c = 1.0;
                    let mut c2 = c;
                    let mut c3 = c;
                    let el1 = e[l + 1];
                    let mut s = 0.0;
                    let mut s2 = 0.0;
                    for i in (l..m).rev() {
                        c3 = c2;
                        c2 = c;
                        s2 = s;
                        let g = c * e[i];
                        h = c * p;
                        r = p.hypot(e[i]);
                        e[i + 1] = s * r;
                        s = e[i] / r;
                        c = p / r;
                        p = c * d[i] - s * g;
                        d[i + 1] = h + s * (c * g + s * d[i]);
                        self.rotations.push(Rotation { i, c, s });
                    }
                    p = -s * s2 * c3 * el1 * e[l] / dl1;
                    e[l] = s * p;
                    d[l] = c * p;
                    if !(e[l].abs() > eps * tst1) {
                        break;
                    }
                }
            }
            d[l] += f;
            e[l] = 0.0;
        }
        Ok(())
    }

    /// `u <- Q^T u` (reflectors applied first to last).
    fn apply_qt(&self, u: &mut [f64]) {
        let n = self.n;
        for k in 0..n.saturating_sub(2) {
            let beta = self.betas[k];
            if beta == 0.0 {
                continue;
            }
            let v = &self.reflectors[k * n + k + 1..(k + 1) * n];
            let tail = &mut u[k + 1..];
            let dot: f64 = v.iter().zip(tail.iter()).map(|(a, b)| a * b).sum();
            let scale = beta * dot;
            for (t, vi) in tail.iter_mut().zip(v) {
                *t -= scale * vi;
            }
        }
    }

    /// `u <- Q u` (reflectors applied last to first).
    fn apply_q(&self, u: &mut [f64]) {
        let n = self.n;
        for k in (0..n.saturating_sub(2)).rev() {
            let beta = self.betas[k];
            if beta == 0.0 {
                continue;
            }
            let v = &self.reflectors[k * n + k + 1..(k + 1) * n];
            let tail = &mut u[k + 1..];
            let dot: f64 = v.iter().zip(tail.iter()).map(|(a, b)| a * b).sum();
            let scale = beta * dot;
            for (t, vi) in tail.iter_mut().zip(v) {
                *t -= scale * vi;
            }
        }
    }

    /// `u <- Z^T u`.
    fn apply_zt(&self, u: &mut [f64]) {
        for r in &self.rotations {
            let h = u[r.i + 1];
            u[r.i + 1] = r.s * u[r.i] + r.c * h;
            u[r.i] = r.c * u[r.i] - r.s * h;
        }
    }

    /// `u <- Z u`.
    fn apply_z(&self, u: &mut [f64]) {
        for r in self.rotations.iter().rev() {
            let (a, b) = (u[r.i], u[r.i + 1]);
            u[r.i] = r.c * a + r.s * b;
            u[r.i + 1] = -r.s * a + r.c * b;
        }
    }

    /// Coordinates of `u` in the eigenbasis (solver order), in place.
    pub fn to_eigen_coords(&self, u: &mut [f64]) {
        self.apply_qt(u);
        self.apply_zt(u);
    }

    /// Inverse of [`Self::to_eigen_coords`].
    pub fn from_eigen_coords(&self, u: &mut [f64]) {
        self.apply_z(u);
        self.apply_q(u);
    }

    /// Eigenvector matrix in solver order, one eigenvector per column.
    pub fn eigenvectors(&self) -> Array2<f64> {
        let n = self.n;
        let mut e = Array2::zeros((n, n));
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.from_eigen_coords(&mut col);
            for i in 0..n {
                e[[i, j]] = col[i];
            }
        }
        e
    }

    /// Projects `w` onto the span of eigenvectors whose eigenvalue is at least
    /// `threshold * lambda_max`; the principal eigenvector is always kept.
    pub fn project_dominant(&self, w: &mut [f64], threshold: f64) {
        let (imax, lmax) =
            self.diag
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                });
        let cut = threshold * lmax;
        self.to_eigen_coords(w);
        for (i, (coord, &lambda)) in w.iter_mut().zip(&self.diag).enumerate() {
            if i != imax && lambda < cut {
                *coord = 0.0;
            }
        }
        self.from_eigen_coords(w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_small_system() {
        let mut a = vec![4.0, 2.0, 2.0, 3.0];
        let mut b = vec![2.0, 1.0];
        cholesky_solve_in_place(&mut a, 2, &mut b).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-15 && b[1].abs() < 1e-15);
    }

    #[test]
    fn cholesky_rejects_singular() {
        let mut a = vec![0.0; 9];
        let mut b = vec![1.0; 3];
        assert!(matches!(
            cholesky_solve_in_place(&mut a, 3, &mut b),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn coordinate_round_trip() {
        let n = 7;
        let mut a: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                ((i + j) as f64 * 0.37).sin() + if i == j { 3.0 } else { 0.0 }
            })
            .collect();
        let mut s = SymmetricSolver::new();
        s.factor(&mut a, n).unwrap();
        let orig: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
        let mut u = orig.clone();
        s.to_eigen_coords(&mut u);
        s.from_eigen_coords(&mut u);
        for (x, y) in u.iter().zip(&orig) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn tiny_sizes() {
        let mut s = SymmetricSolver::new();
        let mut a = vec![5.0];
        s.factor(&mut a, 1).unwrap();
        assert_eq!(s.eigenvalues(), &[5.0]);
        let mut a = vec![2.0, 1.0, 1.0, 2.0];
        s.factor(&mut a, 2).unwrap();
        let mut ev = s.eigenvalues().to_vec();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }
}
