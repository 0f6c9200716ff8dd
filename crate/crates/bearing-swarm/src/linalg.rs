//! Small dense linear algebra: plane vectors, 2x2 symmetric matrices, and a
//! self-contained cyclic Jacobi eigensolver for the graph-sized symmetric
//! matrices used elsewhere in the crate.
//!
//! The Jacobi routine is deliberately dependency-free: it sweeps the strict
//! upper triangle in a fixed row-major order, so results are deterministic
//! for a given input on a given platform.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tol;

/// Point or direction in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Counterclockwise quarter turn: (x, y) -> (-y, x).
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Dense 2x2 matrix in row-major order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub fn new(m00: f64, m01: f64, m10: f64, m11: f64) -> Self {
        Mat2 {
            m: [[m00, m01], [m10, m11]],
        }
    }

    pub fn identity() -> Self {
        Mat2::new(1.0, 0.0, 0.0, 1.0)
    }

    pub fn zero() -> Self {
        Mat2::new(0.0, 0.0, 0.0, 0.0)
    }

    /// Rank-one outer product v * v^T.
    pub fn outer(v: Vec2) -> Self {
        Mat2::new(v.x * v.x, v.x * v.y, v.y * v.x, v.y * v.y)
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    pub fn max_abs(&self) -> f64 {
        self.m
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y,
            self.m[1][0] * v.x + self.m[1][1] * v.y,
        )
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.m[0][0] + o.m[0][0],
            self.m[0][1] + o.m[0][1],
            self.m[1][0] + o.m[1][0],
            self.m[1][1] + o.m[1][1],
        )
    }

    pub fn sub(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.m[0][0] - o.m[0][0],
            self.m[0][1] - o.m[0][1],
            self.m[1][0] - o.m[1][0],
            self.m[1][1] - o.m[1][1],
        )
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(
            self.m[0][0] * s,
            self.m[0][1] * s,
            self.m[1][0] * s,
            self.m[1][1] * s,
        )
    }

    /// Solve self * x = b by the adjugate formula. None when the
    /// determinant is exactly zero.
    pub fn solve(&self, b: Vec2) -> Option<Vec2> {
        let det = self.det();
        if det == 0.0 {
            return None;
        }
        Some(Vec2::new(
            (self.m[1][1] * b.x - self.m[0][1] * b.y) / det,
            (-self.m[1][0] * b.x + self.m[0][0] * b.y) / det,
        ))
    }

    /// Eigenvalues of a symmetric 2x2 matrix, ascending. Uses the closed
    /// form; only the symmetric part (m01 + m10)/2 participates.
    pub fn sym_eigenvalues(&self) -> (f64, f64) {
        let b = 0.5 * (self.m[0][1] + self.m[1][0]);
        let tr = self.trace();
        let diff = self.m[0][0] - self.m[1][1];
        let disc = (diff * diff + 4.0 * b * b).sqrt();
        (0.5 * (tr - disc), 0.5 * (tr + disc))
    }

    /// Ratio of largest to smallest eigenvalue magnitude of the symmetric
    /// part; infinite for singular matrices.
    pub fn sym_condition(&self) -> f64 {
        let (lo, hi) = self.sym_eigenvalues();
        let (lo, hi) = (lo.abs(), hi.abs());
        let max = lo.max(hi);
        let min = lo.min(hi);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("jacobi sweep did not converge after {0} sweeps")]
    NoConvergence(usize),
}

/// Eigendecomposition of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues, ascending.
    pub values: Array1<f64>,
    /// Orthonormal eigenvectors as columns, matching `values`.
    pub vectors: Array2<f64>,
}

impl SymEigen {
    /// Rebuild V * diag(values) * V^T; used by tests to bound the
    /// decomposition residual.
    pub fn reconstruct(&self) -> Array2<f64> {
        let lam = Array2::from_diag(&self.values);
        self.vectors.dot(&lam).dot(&self.vectors.t())
    }
}

const JACOBI_MAX_SWEEPS: usize = 64;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps the strict upper triangle in row-major order until the
/// off-diagonal Frobenius norm drops below
/// `tol::JACOBI_OFF_TOL * max(1, ||A||_F)`. The caller must pass a
/// symmetric matrix; only the upper triangle is read.
pub fn sym_eigen(a: &Array2<f64>) -> Result<SymEigen, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::NotSquare {
            rows: n,
            cols: a.ncols(),
        });
    }
    let mut d = a.clone();
    let mut v = Array2::<f64>::eye(n);
    if n < 2 {
        return Ok(SymEigen {
            values: d.diag().to_owned(),
            vectors: v,
        });
    }

    let fro = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = tol::JACOBI_OFF_TOL * fro.max(1.0);

    for sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += d[[p, q]] * d[[p, q]];
            }
        }
        if (2.0 * off).sqrt() <= target {
            return Ok(sort_eigen(d, v));
        }
        let _ = sweep;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = d[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                // Classic Jacobi rotation annihilating d[p][q].
                let theta = 0.5 * (d[[q, q]] - d[[p, p]]) / apq;
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                let dpp = d[[p, p]];
                let dqq = d[[q, q]];
                d[[p, p]] = dpp - t * apq;
                d[[q, q]] = dqq + t * apq;
                d[[p, q]] = 0.0;
                d[[q, p]] = 0.0;
                for i in 0..n {
                    if i != p && i != q {
                        let dip = d[[i, p]];
                        let diq = d[[i, q]];
                        d[[i, p]] = dip - s * (diq + tau * dip);
                        d[[i, q]] = diq + s * (dip - tau * diq);
                        d[[p, i]] = d[[i, p]];
                        d[[q, i]] = d[[i, q]];
                    }
                }
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = vip - s * (viq + tau * vip);
                    v[[i, q]] = viq + s * (vip - tau * viq);
                }
            }
        }
    }
    Err(LinalgError::NoConvergence(JACOBI_MAX_SWEEPS))
}

fn sort_eigen(d: Array2<f64>, v: Array2<f64>) -> SymEigen {
    let n = d.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[[i, i]].partial_cmp(&d[[j, j]]).unwrap());
    let mut values = Array1::<f64>::zeros(n);
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = d[[src, src]];
        for r in 0..n {
            vectors[[r, dst]] = v[[r, src]];
        }
    }
    SymEigen { values, vectors }
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix via its
/// eigendecomposition. Eigenvalues with magnitude below
/// `tol::PINV_RANK_CUT * max |eig|` are treated as zero.
pub fn sym_pseudo_inverse(a: &Array2<f64>) -> Result<Array2<f64>, LinalgError> {
    let eig = sym_eigen(a)?;
    let max_mag = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cut = tol::PINV_RANK_CUT * max_mag;
    let inv: Array1<f64> = eig
        .values
        .iter()
        .map(|&lam| if lam.abs() > cut { 1.0 / lam } else { 0.0 })
        .collect();
    let lam = Array2::from_diag(&inv);
    Ok(eig.vectors.dot(&lam).dot(&eig.vectors.t()))
}

/// Largest absolute entry of a matrix.
pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
