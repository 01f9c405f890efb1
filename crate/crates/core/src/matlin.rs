//! Dense real linear algebra for the rotation parameterization.
//!
//! A covariance `Q = V Λ Vᵀ` is carried as a proper rotation `V` and a
//! diagonal `Λ`. The rotation itself is a fixed-order product of Givens
//! factors
//!
//! ```text
//! V = V₁₂ V₁₃ … V₁ₙ V₂₃ … V₍ₙ₋₁₎ₙ
//! ```
//!
//! so `n(n-1)/2` angles describe it completely. Indices in this module are
//! zero-based: the pair `(i, j)` with `i < j` rotates coordinate `i` towards
//! coordinate `j`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Off-diagonal Frobenius norm, relative to the full norm, at which Jacobi stops.
pub const JACOBI_THRESHOLD: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 50;

const SYMMETRY_TOL: f64 = 1e-10;
const ORTHONORMAL_TOL: f64 = 1e-8;

/// Rotation angles in the canonical order `(0,1), (0,2), …, (0,n-1), (1,2), …`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GivensAngleSet {
    nt: usize,
    angles: Vec<f64>,
}

impl GivensAngleSet {
    /// Number of angles for `nt` antennas.
    pub const fn count(nt: usize) -> usize {
        nt * nt.saturating_sub(1) / 2
    }

    pub fn zeros(nt: usize) -> Self {
        Self {
            nt,
            angles: vec![0.0; Self::count(nt)],
        }
    }

    pub fn from_vec(nt: usize, angles: Vec<f64>) -> Result<Self> {
        if angles.len() != Self::count(nt) {
            return Err(Error::argument(format!(
                "expected {} angles for nt = {nt}, got {}",
                Self::count(nt),
                angles.len()
            )));
        }
        Ok(Self { nt, angles })
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.angles
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.angles
    }

    /// Flat position of pair `(i, j)`.
    pub fn offset(nt: usize, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < nt);
        i * (2 * nt - i - 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.angles[Self::offset(self.nt, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, theta: f64) {
        let k = Self::offset(self.nt, i, j);
        self.angles[k] = theta;
    }

    /// Index pairs in canonical order.
    pub fn pairs(nt: usize) -> impl Iterator<Item = (usize, usize)> {
        (0..nt.saturating_sub(1)).flat_map(move |i| (i + 1..nt).map(move |j| (i, j)))
    }
}

fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// `max |a - b|` over all entries.
pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// `‖V Vᵀ − I‖_max`.
pub fn orthonormality_error(v: &Matrix) -> f64 {
    let n = v.nrows();
    max_abs_diff(&(v * v.transpose()), &Matrix::identity(n, n))
}

fn asymmetry(q: &Matrix) -> f64 {
    max_abs_diff(q, &q.transpose())
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Reassemble `V diag(λ) Vᵀ`, symmetrized.
pub fn reconstruct(v: &Matrix, lambda: &[f64]) -> Matrix {
    let n = v.nrows();
    assert_eq!(lambda.len(), v.ncols());
    let mut scaled = v.clone();
    for (k, &l) in lambda.iter().enumerate() {
        scaled.column_mut(k).scale_mut(l);
    }
    let q = scaled * v.transpose();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = 0.5 * (q[(i, j)] + q[(j, i)]);
        }
    }
    out
}

/// Symmetric eigendecomposition by cyclic Jacobi sweeps.
///
/// Eigenvalues come back in descending order. Each eigenvector is signed so
/// that its largest-magnitude component is positive, which makes the output
/// a deterministic function of the input.
pub fn sym_eig(q: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let n = q.nrows();
    if n == 0 || q.ncols() != n {
        return Err(Error::argument(format!(
            "sym_eig needs a non-empty square matrix, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::argument("sym_eig input has non-finite entries"));
    }
    let scale = max_abs(q).max(1.0);
    let asym = asymmetry(q);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Contract(format!(
            "sym_eig input is not symmetric (max asymmetry {asym:.3e})"
        )));
    }

    let mut a = (q + q.transpose()) * 0.5;
    let mut v = Matrix::identity(n, n);
    let total = a.norm();
    let mut converged = total == 0.0;
    let mut sweeps = 0;

    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= JACOBI_THRESHOLD * total {
            converged = true;
            break;
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for r in p + 1..n {
                let apr = a[(p, r)];
                if apr == 0.0 {
                    continue;
                }
                let theta = (a[(r, r)] - a[(p, p)]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akr = a[(k, r)];
                    a[(k, p)] = c * akp - s * akr;
                    a[(k, r)] = s * akp + c * akr;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let ark = a[(r, k)];
                    a[(p, k)] = c * apk - s * ark;
                    a[(r, k)] = s * apk + c * ark;
                }
                a[(p, r)] = 0.0;
                a[(r, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkr = v[(k, r)];
                    v[(k, p)] = c * vkp - s * vkr;
                    v[(k, r)] = s * vkp + c * vkr;
                }
            }
        }
    }
    if !converged {
        let off = off_diagonal_norm(&a);
        if off > JACOBI_THRESHOLD * total {
            return Err(Error::numerical(
                "sym_eig",
                format!(
                    "no convergence after {sweeps} sweeps: off-diagonal norm {off:.3e}, matrix norm {total:.3e}"
                ),
            ));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(y, y)].total_cmp(&a[(x, x)]).then(x.cmp(&y)));

    let mut vectors = Matrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(a[(src, src)]);
        let col = v.column(src);
        let mut pivot = 0;
        for k in 1..n {
            if col[k].abs() > col[pivot].abs() {
                pivot = k;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vectors[(k, dst)] = sign * col[k];
        }
    }
    Ok((vectors, values))
}

/// The `nt × nt` Givens matrix for pair `(i, j)`: identity except
/// `(i,i) = (j,j) = cos θ`, `(i,j) = −sin θ`, `(j,i) = sin θ`.
pub fn givens(nt: usize, i: usize, j: usize, theta: f64) -> Result<Matrix> {
    if !(i < j && j < nt) {
        return Err(Error::argument(format!(
            "givens index pair ({i}, {j}) invalid for nt = {nt}"
        )));
    }
    let mut g = Matrix::identity(nt, nt);
    let (s, c) = theta.sin_cos();
    g[(i, i)] = c;
    g[(j, j)] = c;
    g[(i, j)] = -s;
    g[(j, i)] = s;
    Ok(g)
}

/// `m ← m · G(i, j, θ)`, touching only columns `i` and `j`.
#[inline]
pub(crate) fn rotate_columns(m: &mut Matrix, i: usize, j: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let a = m[(r, i)];
        let b = m[(r, j)];
        m[(r, i)] = c * a + s * b;
        m[(r, j)] = c * b - s * a;
    }
}

/// `m ← G(i, j, θ)ᵀ · m`, touching only rows `i` and `j`.
#[inline]
fn rotate_rows_transposed(m: &mut Matrix, i: usize, j: usize, c: f64, s: f64) {
    for k in 0..m.ncols() {
        let a = m[(i, k)];
        let b = m[(j, k)];
        m[(i, k)] = c * a + s * b;
        m[(j, k)] = c * b - s * a;
    }
}

/// Product of all Givens factors in canonical order.
pub fn compose_rotation(angles: &GivensAngleSet) -> Matrix {
    compose_from_slice(angles.nt(), angles.as_slice())
}

/// [`compose_rotation`] on a bare angle slice of length `nt(nt-1)/2`.
pub(crate) fn compose_from_slice(nt: usize, angles: &[f64]) -> Matrix {
    debug_assert_eq!(angles.len(), GivensAngleSet::count(nt));
    let mut v = Matrix::identity(nt, nt);
    for ((i, j), &theta) in GivensAngleSet::pairs(nt).zip(angles) {
        let (s, c) = theta.sin_cos();
        rotate_columns(&mut v, i, j, c, s);
    }
    v
}

/// Recover the angles of an orthonormal matrix.
///
/// Improper input (determinant −1) has its first two columns exchanged
/// first and the returned flag is set; the angles then describe the
/// exchanged matrix. For `nt = 1` an improper `[-1]` is negated instead.
/// When both pivot entries are zero the angle is 0, the `atan2(0, 0)`
/// convention.
pub fn extract_angles(v: &Matrix) -> Result<(GivensAngleSet, bool)> {
    let nt = v.nrows();
    if nt == 0 || v.ncols() != nt {
        return Err(Error::argument(
            "extract_angles needs a non-empty square matrix",
        ));
    }
    let err = orthonormality_error(v);
    if !(err <= ORTHONORMAL_TOL) {
        return Err(Error::Contract(format!(
            "extract_angles input is not orthonormal (‖VVᵀ−I‖max = {err:.3e})"
        )));
    }
    let mut w = v.clone();
    let swapped = w.determinant() < 0.0;
    if swapped {
        if nt == 1 {
            w[(0, 0)] = -w[(0, 0)];
        } else {
            w.swap_columns(0, 1);
        }
    }

    let mut angles = GivensAngleSet::zeros(nt);
    for (i, j) in GivensAngleSet::pairs(nt) {
        let mut theta = -f64::atan2(-w[(j, i)], w[(i, i)]);
        if theta == -std::f64::consts::PI {
            theta = std::f64::consts::PI;
        }
        let (s, c) = theta.sin_cos();
        rotate_rows_transposed(&mut w, i, j, c, s);
        angles.set(i, j, theta);
    }
    Ok((angles, swapped))
}

/// Outcome of [`repair_improper`].
#[derive(Clone, Debug)]
pub struct ImproperRepair {
    pub v: Matrix,
    pub lambda: Vec<f64>,
    /// False when the input was already a proper rotation and nothing changed.
    pub applied: bool,
}

/// Turn an improper eigenvector matrix into a proper one without changing
/// `V Λ Vᵀ`, by exchanging the first two eigenvectors and their eigenvalues.
pub fn repair_improper(v: &Matrix, lambda: &[f64]) -> Result<ImproperRepair> {
    let nt = v.nrows();
    if v.ncols() != nt || lambda.len() != nt || nt == 0 {
        return Err(Error::argument(
            "repair_improper needs a square V and one eigenvalue per column",
        ));
    }
    let mut v = v.clone();
    let mut lambda = lambda.to_vec();
    if v.determinant() >= 0.0 {
        return Ok(ImproperRepair {
            v,
            lambda,
            applied: false,
        });
    }
    if nt == 1 {
        v[(0, 0)] = -v[(0, 0)];
    } else {
        v.swap_columns(0, 1);
        lambda.swap(0, 1);
    }
    Ok(ImproperRepair {
        v,
        lambda,
        applied: true,
    })
}
