//! Small dense symmetric matrices (n <= 3) and the eigen-solvers the
//! operators need: closed form for n = 2, cyclic Jacobi for n = 3.

use crate::error::{domain, Result};
use serde::{Deserialize, Serialize};

pub const MAX_DIM: usize = 3;

/// Symmetric matrix of dimension `n <= 3`, stored densely.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMat {
    n: usize,
    a: [[f64; MAX_DIM]; MAX_DIM],
}

impl SymMat {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n), "dimension {n} unsupported");
        Self {
            n,
            a: [[0.0; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.a[i][i] = v;
        }
        m
    }

    /// Builds from rows, rejecting asymmetry above 1e-10 (absolute).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if !(1..=MAX_DIM).contains(&n) {
            return domain(format!("matrix dimension {n} unsupported"));
        }
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return domain("matrix is not square");
            }
            for (j, &v) in row.iter().enumerate() {
                m.a[i][j] = v;
            }
        }
        for i in 0..n {
            for j in 0..i {
                if (m.a[i][j] - m.a[j][i]).abs() > 1e-10 {
                    return domain(format!(
                        "matrix is not symmetric: entry ({i},{j}) = {} vs ({j},{i}) = {}",
                        m.a[i][j], m.a[j][i]
                    ));
                }
                let s = 0.5 * (m.a[i][j] + m.a[j][i]);
                m.a[i][j] = s;
                m.a[j][i] = s;
            }
        }
        Ok(m)
    }

    /// Outer product `v v^T`.
    pub fn outer(v: &[f64]) -> Self {
        let mut m = Self::zeros(v.len());
        for i in 0..v.len() {
            for j in 0..v.len() {
                m.a[i][j] = v[i] * v[j];
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    /// Sets entries (i,j) and (j,i).
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i][j] = v;
        self.a[j][i] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.a[i][i]).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] *= s;
            }
        }
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] += other.a[i][j];
            }
        }
        m
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// Frobenius inner product `tr(self * other)`.
    pub fn dot(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.a[i][j] * other.a[i][j];
            }
        }
        s
    }

    /// Quadratic form `v^T M v`.
    pub fn quad(&self, v: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += v[i] * self.a[i][j] * v[j];
            }
        }
        s
    }

    /// `Q^T M Q` for an orthonormal frame `Q` given by its columns.
    pub fn congruence(&self, q: &Frame) -> Self {
        let n = self.n;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.a[i][j] = self.quad_pair(q.col(i), q.col(j));
            }
        }
        m
    }

    /// `Q M Q^T`: the inverse of [`SymMat::congruence`].
    pub fn conjugate(&self, q: &Frame) -> Self {
        self.congruence(&q.transpose())
    }

    fn quad_pair(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += u[i] * self.a[i][j] * v[j];
            }
        }
        s
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev = match self.n {
            1 => vec![self.a[0][0]],
            2 => {
                let (a, b, c) = (self.a[0][0], self.a[0][1], self.a[1][1]);
                let mean = 0.5 * (a + c);
                let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                vec![mean - r, mean + r]
            }
            _ => jacobi_eigen(self).0,
        };
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ev
    }

    /// Eigenvalues (ascending) with unit eigenvectors.
    pub fn eigen(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (vals, vecs) = match self.n {
            1 => (vec![self.a[0][0]], vec![vec![1.0]]),
            2 => {
                let (a, b, c) = (self.a[0][0], self.a[0][1], self.a[1][1]);
                let theta = 0.5 * (2.0 * b).atan2(a - c);
                let (s, co) = theta.sin_cos();
                let v1 = vec![co, s];
                let v2 = vec![-s, co];
                (vec![self.quad(&v1), self.quad(&v2)], vec![v1, v2])
            }
            _ => jacobi_eigen(self),
        };
        let mut idx: Vec<usize> = (0..vals.len()).collect();
        idx.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap());
        (
            idx.iter().map(|&i| vals[i]).collect(),
            idx.iter().map(|&i| vecs[i].clone()).collect(),
        )
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.eigenvalues()[0] >= -tol
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max(self.a[i][j].abs());
            }
        }
        m
    }
}

/// Cyclic Jacobi sweeps until the off-diagonal mass drops below 1e-12.
fn jacobi_eigen(m: &SymMat) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.n;
    let mut a = m.a;
    let mut v = [[0.0; MAX_DIM]; MAX_DIM];
    for (i, row) in v.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    let scale = m.max_abs().max(1e-300);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off.sqrt() <= 1e-12 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut().take(n) {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = (0..n).map(|i| a[i][i]).collect();
    let vecs = (0..n).map(|j| (0..n).map(|i| v[i][j]).collect()).collect();
    (vals, vecs)
}

/// Orthonormal frame stored by columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    cols: Vec<Vec<f64>>,
}

impl Frame {
    pub fn identity(n: usize) -> Self {
        let cols = (0..n)
            .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { cols }
    }

    /// Frame whose last column is the unit vector `nu`; the remaining
    /// columns complete it to a right-handed orthonormal basis.
    pub fn with_last_column(nu: &[f64]) -> Self {
        let n = nu.len();
        let norm = nu.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nu: Vec<f64> = nu.iter().map(|x| x / norm).collect();
        if n == 1 {
            return Self { cols: vec![nu] };
        }
        if n == 2 {
            return Self {
                cols: vec![vec![nu[1], -nu[0]], nu],
            };
        }
        // Gram-Schmidt against the coordinate axes, least aligned first.
        let mut axes: Vec<usize> = (0..n).collect();
        axes.sort_by(|&i, &j| nu[i].abs().partial_cmp(&nu[j].abs()).unwrap());
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        for &ax in axes.iter().take(n - 1) {
            let mut v: Vec<f64> = (0..n).map(|i| if i == ax { 1.0 } else { 0.0 }).collect();
            for u in cols.iter().chain(std::iter::once(&nu)) {
                let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= d * ui;
                }
            }
            let l = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            cols.push(v.iter().map(|x| x / l).collect());
        }
        cols.push(nu);
        let mut f = Self { cols };
        if f.det() < 0.0 {
            for x in f.cols[0].iter_mut() {
                *x = -*x;
            }
        }
        f
    }

    /// Frame from explicit columns, rejecting non-orthonormal input.
    pub fn from_columns(cols: Vec<Vec<f64>>) -> Result<Self> {
        let n = cols.len();
        if !(1..=MAX_DIM).contains(&n) || cols.iter().any(|c| c.len() != n) {
            return domain("frame must be square with n <= 3");
        }
        let f = Self { cols };
        if f.orthonormality_defect() > 1e-9 {
            return domain("frame columns are not orthonormal");
        }
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.cols.len()
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.cols[j]
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim();
        let cols = (0..n).map(|j| (0..n).map(|i| self.cols[i][j]).collect()).collect();
        Self { cols }
    }

    /// `Q xi`.
    pub fn apply(&self, xi: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for (j, &x) in xi.iter().enumerate() {
            for i in 0..n {
                out[i] += self.cols[j][i] * x;
            }
        }
        out
    }

    /// `Q^T y`.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        self.cols
            .iter()
            .map(|c| c.iter().zip(y).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Largest deviation of `Q^T Q` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d: f64 = self.cols[i].iter().zip(&self.cols[j]).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((d - target).abs());
            }
        }
        worst
    }

    fn det(&self) -> f64 {
        let c = &self.cols;
        match self.dim() {
            1 => c[0][0],
            2 => c[0][0] * c[1][1] - c[0][1] * c[1][0],
            _ => {
                c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1]) - c[1][0] * (c[0][1] * c[2][2] - c[0][2] * c[2][1])
                    + c[2][0] * (c[0][1] * c[1][2] - c[0][2] * c[1][1])
            }
        }
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
