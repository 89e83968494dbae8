//! Sparse symmetric matrices on grid stencils and their linear solvers.
//!
//! Every matrix here has the shape `diag(d) − s · W`, where `W` is the
//! symmetric non-negative face-weight matrix of a [`Stencil`]. With `d`
//! large enough these are M-matrices; the solvers keep non-negative right
//! hand sides non-negative.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Face, Grid};

/// Face weights plus a CSR view of cell neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    n: usize,
    faces: Vec<Face>,
    weights: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    row_weights: Vec<f64>,
    tridiagonal: bool,
}

impl Stencil {
    pub fn new(grid: &Grid, faces: Vec<Face>, weights: Vec<f64>) -> Self {
        assert_eq!(faces.len(), weights.len());
        let n = grid.len();
        let mut counts = vec![0usize; n];
        for f in &faces {
            counts[f.lo] += 1;
            counts[f.hi] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        for k in 0..n {
            row_ptr[k + 1] = row_ptr[k] + counts[k];
        }
        let mut fill = row_ptr.clone();
        let mut cols = vec![0usize; row_ptr[n]];
        let mut row_weights = vec![0.0; row_ptr[n]];
        for (f, &w) in faces.iter().zip(&weights) {
            for (a, b) in [(f.lo, f.hi), (f.hi, f.lo)] {
                cols[fill[a]] = b;
                row_weights[fill[a]] = w;
                fill[a] += 1;
            }
        }
        let tridiagonal = grid.dim() == 1;
        Self {
            n,
            faces,
            weights,
            row_ptr,
            cols,
            row_weights,
            tridiagonal,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_tridiagonal(&self) -> bool {
        self.tridiagonal
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ_j w_ij` for every row.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row_weights[self.row_ptr[i]..self.row_ptr[i + 1]].iter().sum())
            .collect()
    }

    fn neighbours(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.row_weights[r].iter().copied())
    }
}

/// `diag(d) − off_scale · W`.
#[derive(Debug, Clone)]
pub struct SymMatrix {
    stencil: Arc<Stencil>,
    diag: Vec<f64>,
    off_scale: f64,
}

impl SymMatrix {
    pub fn new(stencil: Arc<Stencil>, diag: Vec<f64>, off_scale: f64) -> Self {
        assert_eq!(diag.len(), stencil.len());
        Self {
            stencil,
            diag,
            off_scale,
        }
    }

    pub fn stencil(&self) -> &Arc<Stencil> {
        &self.stencil
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off_scale(&self) -> f64 {
        self.off_scale
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Infinity norm `max_i |d_i| + s Σ_j w_ij`.
    pub fn norm_inf(&self) -> f64 {
        self.stencil
            .row_sums()
            .iter()
            .zip(&self.diag)
            .map(|(w, d)| d.abs() + self.off_scale.abs() * w)
            .fold(0.0, f64::max)
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let st = &*self.stencil;
        for i in 0..self.diag.len() {
            let mut acc = 0.0;
            for (j, w) in st.neighbours(i) {
                acc += w * x[j];
            }
            y[i] = self.diag[i] * x[i] - self.off_scale * acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply_into(x, &mut y);
        y
    }

    /// Dense copy, row-major; test and debugging aid.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            for (j, w) in self.stencil.neighbours(i) {
                m[i][j] -= self.off_scale * w;
            }
        }
        m
    }

    /// Solves `self · x = b`. The matrix must be symmetric positive
    /// definite. With `nonnegative`, negative round-off entries from the
    /// iterative path are removed by Gauss–Seidel polishing, which keeps
    /// iterates non-negative for M-matrices with `b ≥ 0`.
    pub fn solve(&self, b: &[f64], x0: Option<&[f64]>, nonnegative: bool) -> Result<Vec<f64>> {
        if self.stencil.tridiagonal {
            return TridiagonalLu::factor(self)?.solve(b);
        }
        let mut x = pcg(self, b, x0, 1e-12, 20 * self.len().max(50))?;
        if nonnegative && x.iter().any(|&v| v < 0.0) {
            for v in &mut x {
                *v = v.max(0.0);
            }
            self.gauss_seidel(b, &mut x, 2);
        }
        Ok(x)
    }

    fn gauss_seidel(&self, b: &[f64], x: &mut [f64], sweeps: usize) {
        let n = self.len();
        let st = &*self.stencil;
        let relax = |i: usize, x: &mut [f64]| {
            let mut acc = b[i];
            for (j, w) in st.neighbours(i) {
                acc += self.off_scale * w * x[j];
            }
            x[i] = acc / self.diag[i];
        };
        for _ in 0..sweeps {
            for i in 0..n {
                relax(i, x);
            }
            for i in (0..n).rev() {
                relax(i, x);
            }
        }
    }
}

/// LU factors of a symmetric tridiagonal matrix (no pivoting; the matrices
/// solved here are diagonally dominant).
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    /// Off-diagonal entries `a_{k,k+1}`.
    off: Vec<f64>,
    /// Pivots.
    piv: Vec<f64>,
}

impl TridiagonalLu {
    pub fn factor(m: &SymMatrix) -> Result<Self> {
        let n = m.len();
        let mut off = vec![0.0; n.saturating_sub(1)];
        for (f, &w) in m.stencil.faces.iter().zip(&m.stencil.weights) {
            if f.hi != f.lo + 1 {
                return Err(Error::LinearSolve("stencil is not tridiagonal".into()));
            }
            off[f.lo] = -m.off_scale * w;
        }
        let mut piv = vec![0.0; n];
        piv[0] = m.diag[0];
        for k in 1..n {
            if piv[k - 1] == 0.0 || !piv[k - 1].is_finite() {
                return Err(Error::LinearSolve(format!("zero pivot at row {}", k - 1)));
            }
            piv[k] = m.diag[k] - off[k - 1] * off[k - 1] / piv[k - 1];
        }
        if !(piv[n - 1] != 0.0 && piv[n - 1].is_finite()) {
            return Err(Error::LinearSolve("singular tridiagonal matrix".into()));
        }
        Ok(Self { off, piv })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.piv.len();
        let mut y = b.to_vec();
        for k in 1..n {
            y[k] -= self.off[k - 1] / self.piv[k - 1] * y[k - 1];
        }
        y[n - 1] /= self.piv[n - 1];
        for k in (0..n - 1).rev() {
            y[k] = (y[k] - self.off[k] * y[k + 1]) / self.piv[k];
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("non-finite solution".into()));
        }
        Ok(y)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients, stopping at
/// `‖r‖₂ ≤ rel_tol · ‖b‖₂`.
pub fn pcg(m: &SymMatrix, b: &[f64], x0: Option<&[f64]>, rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = m.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let inv_diag: Vec<f64> = m.diag.iter().map(|d| 1.0 / d).collect();
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    let mut r = m.apply(&x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let target = rel_tol * bnorm;
    for _ in 0..max_iter {
        if dot(&r, &r).sqrt() <= target {
            return Ok(x);
        }
        m.apply_into(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::LinearSolve(
                "conjugate gradients met a non-positive curvature direction".into(),
            ));
        }
        let step = rz / pq;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * q[i];
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = dot(&r, &r).sqrt();
    if res <= target {
        Ok(x)
    } else {
        Err(Error::NonConvergence {
            what: "conjugate gradients",
            iterations: max_iter,
            residual: res / bnorm,
        })
    }
}
