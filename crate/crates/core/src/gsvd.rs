//! Generalized SVD precoder and its power allocation.
//!
//! `gsvd_decompose` finds `E` with `HE = Ψr C`, `GE = Ψe D` and
//! `CᵀC + DᵀD = I`: a Householder QR of the stacked matrix `[H; G]`, then a
//! cosine-sine split of the orthonormal factor through the eigenvectors of
//! the Gram matrix of its larger block. Runs of equal cosines are aligned
//! with the receive antennas. Rank-deficient stacks fall back to a
//! rank-revealing SVD.
//! Columns are ordered by `c_i` descending.

use nalgebra::SVD;

use crate::channel::{self, ChannelPair, PrecoderSolution};
use crate::error::{Error, Result};
use crate::matlin::{self, Matrix};
use crate::rectifier::RotationParams;

/// Residual ceiling for `HE − ΨrC`, `GE − ΨeD` and `c + d − 1`.
pub const FACTOR_TOL: f64 = 1e-8;
/// Columns of `HE` or `GE` with squared norm below this are treated as zero.
const COLUMN_TOL: f64 = 1e-10;
/// Eigenvalues of the cosine-sine Gram matrix closer than this form one run.
const CLUSTER_TOL: f64 = 1e-9;

const MU_LO: f64 = 1e-12;
const MU_HI: f64 = 1e6;
const MU_EXPAND: f64 = 1e3;
const MU_EXPANSIONS: usize = 20;
const MU_ITERS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct GsvdFactors {
    /// `nt × q` precoder.
    pub e: Matrix,
    pub psi_r: Matrix,
    pub psi_e: Matrix,
    /// `nr × q`, equal to `Ψrᵀ H E`.
    pub c_mat: Matrix,
    /// `ne × q`, equal to `Ψeᵀ G E`.
    pub d_mat: Matrix,
    /// `diag(CᵀC)`
    pub c: Vec<f64>,
    /// `diag(DᵀD)`
    pub d: Vec<f64>,
    /// `diag(EᵀE)`
    pub e_sq: Vec<f64>,
}

/// Worst-case deviations from the factorization identities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GsvdResiduals {
    pub h: f64,
    pub g: f64,
    pub unit_sum: f64,
}

impl GsvdFactors {
    pub fn q(&self) -> usize {
        self.c.len()
    }

    pub fn residuals(&self, ch: &ChannelPair) -> GsvdResiduals {
        GsvdResiduals {
            h: matlin::max_abs_diff(&(ch.h() * &self.e), &(&self.psi_r * &self.c_mat)),
            g: matlin::max_abs_diff(&(ch.g() * &self.e), &(&self.psi_e * &self.d_mat)),
            unit_sum: self
                .c
                .iter()
                .zip(&self.d)
                .fold(0.0_f64, |m, (c, d)| m.max((c + d - 1.0).abs())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GsvdPowerAllocation {
    pub p: Vec<f64>,
    /// `None` when no subchannel favours the legitimate receiver, or `Pt = 0`.
    pub mu: Option<f64>,
}

impl GsvdPowerAllocation {
    pub fn is_zero(&self) -> bool {
        self.p.iter().all(|&p| p == 0.0)
    }
}

/// Orthonormal `n × n` basis whose leading columns span the non-negligible
/// columns of `a` (which are mutually orthogonal up to rounding).
fn complete_basis(a: &Matrix, norms_sq: &[f64]) -> Matrix {
    let n = a.nrows();
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(n);
    let push = |mut v: nalgebra::DVector<f64>, basis: &mut Vec<nalgebra::DVector<f64>>| {
        for _ in 0..2 {
            for b in basis.iter() {
                let proj = b.dot(&v);
                v.axpy(-proj, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            basis.push(v / norm);
        }
    };
    for (k, &ns) in norms_sq.iter().enumerate() {
        if basis.len() == n {
            break;
        }
        if ns > COLUMN_TOL {
            push(a.column(k).into_owned(), &mut basis);
        }
    }
    for k in 0..n {
        if basis.len() == n {
            break;
        }
        let mut unit = nalgebra::DVector::zeros(n);
        unit[k] = 1.0;
        push(unit, &mut basis);
    }
    Matrix::from_columns(&basis)
}

fn column_norms_sq(m: &Matrix) -> Vec<f64> {
    m.column_iter().map(|c| c.norm_squared()).collect()
}

pub fn gsvd_decompose(ch: &ChannelPair) -> Result<GsvdFactors> {
    let (nt, nr, ne) = (ch.nt(), ch.nr(), ch.ne());
    let mut k_mat = Matrix::zeros(nr + ne, nt);
    k_mat.rows_mut(0, nr).copy_from(ch.h());
    k_mat.rows_mut(nr, ne).copy_from(ch.g());

    if let Some(e) = stacked_qr_basis(&k_mat, nr) {
        if let Ok(f) = finish(ch, e) {
            return Ok(f);
        }
    }
    let e = stacked_svd_basis(k_mat, nr)?;
    finish(ch, e)
}

/// `E = R⁺Z` from `[H; G] = QR` and the right singular vectors `Z` of the
/// top block of `Q` (the bottom block when `nr < ne`). `None` when `R` does
/// not have full rank.
fn stacked_qr_basis(k_mat: &Matrix, nr: usize) -> Option<Matrix> {
    let (m, nt) = k_mat.shape();
    let q = m.min(nt);
    if q == 0 {
        return None;
    }
    let qr = k_mat.clone().qr();
    let (qm, r) = (qr.q(), qr.r());
    let diag: Vec<f64> = (0..q).map(|i| r[(i, i)].abs()).collect();
    let rmax = diag.iter().fold(0.0_f64, |a, &b| a.max(b));
    let tol = (m.max(nt) as f64) * f64::EPSILON * rmax.max(k_mat.norm());
    if diag.iter().any(|&v| !(v > tol)) {
        return None;
    }

    let block = if nr >= m - nr {
        qm.rows(0, nr).into_owned()
    } else {
        qm.rows(nr, m - nr).into_owned()
    };
    let gram = block.transpose() * &block;
    let gram = (&gram + gram.transpose()) * 0.5;
    let (z, w) = matlin::sym_eig(&gram).ok()?;
    // Repeated cosines leave the basis free inside the run; pin it to the
    // receive antennas in order, then to the coordinate axes.
    let mut seeds = Matrix::zeros(q, nr + q);
    seeds
        .columns_mut(0, nr)
        .copy_from(&qm.rows(0, nr).transpose());
    seeds.columns_mut(nr, q).copy_from(&Matrix::identity(q, q));
    let z = align_clusters(z, &w, &seeds);

    let r_pinv = if m >= nt {
        r.try_inverse()?
    } else {
        let rrt = &r * r.transpose();
        r.transpose() * rrt.try_inverse()?
    };
    Some(r_pinv * z)
}

/// Within each run of equal eigenvalues, replace the eigenvectors by the
/// Gram-Schmidt sequence of the projections of `seeds` columns onto the run.
fn align_clusters(mut z: Matrix, w: &[f64], seeds: &Matrix) -> Matrix {
    let n = w.len();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (w[start] - w[end]).abs() <= CLUSTER_TOL {
            end += 1;
        }
        if end - start > 1 {
            let s = z.columns(start, end - start).into_owned();
            let mut chosen: Vec<nalgebra::DVector<f64>> = Vec::new();
            for k in 0..seeds.ncols() {
                if chosen.len() == end - start {
                    break;
                }
                let seed = seeds.column(k);
                let mut v = &s * (s.transpose() * seed);
                for _ in 0..2 {
                    for b in &chosen {
                        let p = b.dot(&v);
                        v.axpy(-p, b, 1.0);
                    }
                }
                let norm = v.norm();
                if norm > 1e-6 * seed.norm().max(f64::MIN_POSITIVE) {
                    chosen.push(v / norm);
                }
            }
            for (off, v) in chosen.iter().enumerate() {
                z.column_mut(start + off).copy_from(v);
            }
        }
        start = end;
    }
    z
}

/// Rank-revealing fallback: thin SVD of `[H; G]` restricted to its numerical
/// rank, then an eigendecomposition of the top-block Gram matrix.
fn stacked_svd_basis(k_mat: Matrix, nr: usize) -> Result<Matrix> {
    let (m, nt) = k_mat.shape();
    let svd = SVD::try_new(k_mat, true, true, 5.0 * f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("gsvd_decompose", "SVD of [H; G] did not converge"))?;
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested Vᵀ");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().fold(0.0_f64, |a, &s| a.max(s));
    let tol = (m.max(nt) as f64) * f64::EPSILON * smax;
    let mut keep: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] > tol).collect();
    keep.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    if keep.is_empty() {
        return Ok(Matrix::zeros(nt, 0));
    }

    let p = u.select_columns(&keep);
    let p1 = p.rows(0, nr).into_owned();
    let gram = p1.transpose() * &p1;
    let gram = (&gram + gram.transpose()) * 0.5;
    let (z, _) = matlin::sym_eig(&gram)?;

    let mut w = vt.select_rows(&keep).transpose();
    for (col, &idx) in keep.iter().enumerate() {
        w.column_mut(col).scale_mut(1.0 / sigma[idx]);
    }
    Ok(w * z)
}

fn finish(ch: &ChannelPair, e: Matrix) -> Result<GsvdFactors> {
    let (nr, ne) = (ch.nr(), ch.ne());
    let q = e.ncols();
    if q == 0 {
        return Ok(GsvdFactors {
            e,
            psi_r: Matrix::identity(nr, nr),
            psi_e: Matrix::identity(ne, ne),
            c_mat: Matrix::zeros(nr, 0),
            d_mat: Matrix::zeros(ne, 0),
            c: Vec::new(),
            d: Vec::new(),
            e_sq: Vec::new(),
        });
    }
    let c_unsorted = column_norms_sq(&(ch.h() * &e));
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| c_unsorted[b].total_cmp(&c_unsorted[a]).then(a.cmp(&b)));
    let e = e.select_columns(&order);
    let he = ch.h() * &e;
    let ge = ch.g() * &e;
    let c = column_norms_sq(&he);
    let d = column_norms_sq(&ge);
    let e_sq = column_norms_sq(&e);

    let cross = he.transpose() * &he + ge.transpose() * &ge;
    let ortho = matlin::max_abs_diff(&cross, &Matrix::identity(q, q));
    if !(ortho <= FACTOR_TOL) {
        return Err(Error::numerical(
            "gsvd_decompose",
            format!("‖(HE)ᵀHE + (GE)ᵀGE − I‖max = {ortho:.3e} exceeds {FACTOR_TOL:e}"),
        ));
    }

    let psi_r = complete_basis(&he, &c);
    let psi_e = complete_basis(&ge, &d);
    let c_mat = psi_r.transpose() * &he;
    let d_mat = psi_e.transpose() * &ge;
    let f = GsvdFactors {
        e,
        psi_r,
        psi_e,
        c_mat,
        d_mat,
        c,
        d,
        e_sq,
    };
    let r = f.residuals(ch);
    let worst = r.h.max(r.g).max(r.unit_sum);
    if !(worst <= FACTOR_TOL) {
        return Err(Error::numerical(
            "gsvd_decompose",
            format!(
                "factor residuals H {:.3e}, G {:.3e}, c+d−1 {:.3e} exceed {FACTOR_TOL:e}",
                r.h, r.g, r.unit_sum
            ),
        ));
    }
    Ok(f)
}

/// Per-subchannel power at multiplier `mu`.
fn powers_at(f: &GsvdFactors, mu: f64) -> Vec<f64> {
    f.c.iter()
        .zip(&f.d)
        .zip(&f.e_sq)
        .map(|((&c, &d), &e)| {
            if !(c > d && e > 0.0) {
                return 0.0;
            }
            let a = (c - d) / (mu * e);
            let disc = 1.0 - 4.0 * c * d + 4.0 * a * c * d;
            if !(disc >= 0.0) {
                return 0.0;
            }
            let p = (2.0 * a - 2.0) / (1.0 + disc.sqrt());
            if p.is_finite() {
                p.max(0.0)
            } else {
                0.0
            }
        })
        .collect()
}

fn trace_of(f: &GsvdFactors, p: &[f64]) -> f64 {
    p.iter().zip(&f.e_sq).map(|(p, e)| p * e).sum()
}

/// Powers satisfying `tr(E P Eᵀ) = Pt`, with `μ` found by bisection in log space.
pub fn gsvd_power_alloc(f: &GsvdFactors, pt: f64) -> Result<GsvdPowerAllocation> {
    if !(pt >= 0.0 && pt.is_finite()) {
        return Err(Error::argument(format!(
            "Pt must be finite and ≥ 0, got {pt}"
        )));
    }
    let q = f.q();
    let active =
        f.c.iter()
            .zip(&f.d)
            .zip(&f.e_sq)
            .any(|((c, d), e)| c > d && *e > 0.0);
    if pt == 0.0 || !active {
        return Ok(GsvdPowerAllocation {
            p: vec![0.0; q],
            mu: None,
        });
    }
    let trace = |mu: f64| trace_of(f, &powers_at(f, mu));

    let mut lo = MU_LO;
    let mut hi = MU_HI;
    let mut n = 0;
    while trace(lo) < pt {
        if n == MU_EXPANSIONS {
            return Err(Error::numerical(
                "gsvd_power_alloc",
                format!("no μ with tr(EPEᵀ) ≥ {pt} down to μ = {lo:e}"),
            ));
        }
        lo /= MU_EXPAND;
        n += 1;
    }
    n = 0;
    while trace(hi) > pt {
        if n == MU_EXPANSIONS {
            return Err(Error::numerical(
                "gsvd_power_alloc",
                format!("no μ with tr(EPEᵀ) ≤ {pt} up to μ = {hi:e}"),
            ));
        }
        hi *= MU_EXPAND;
        n += 1;
    }
    for _ in 0..MU_ITERS {
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            break;
        }
        if trace(mid) > pt {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (p_lo, p_hi) = (powers_at(f, lo), powers_at(f, hi));
    let (mu, p) = if (trace_of(f, &p_lo) - pt).abs() < (trace_of(f, &p_hi) - pt).abs() {
        (lo, p_lo)
    } else {
        (hi, p_hi)
    };
    Ok(GsvdPowerAllocation { p, mu: Some(mu) })
}

/// GSVD covariance `E P Eᵀ` as rotation parameters and a solution.
pub fn gsvd_init(ch: &ChannelPair, pt: f64) -> Result<(RotationParams, PrecoderSolution)> {
    let nt = ch.nt();
    let f = gsvd_decompose(ch)?;
    let alloc = gsvd_power_alloc(&f, pt)?;
    let mut scaled = f.e.clone();
    for (k, &p) in alloc.p.iter().enumerate() {
        scaled.column_mut(k).scale_mut(p);
    }
    let q0 = scaled * f.e.transpose();
    let q0 = (&q0 + q0.transpose()) * 0.5;
    let (v, lambda) = matlin::sym_eig(&q0)?;
    let fixed = matlin::repair_improper(&v, &lambda)?;
    let (theta, _) = matlin::extract_angles(&fixed.v)?;
    let rate = channel::secrecy_rate_q(ch, &q0)?;
    let params = RotationParams {
        lambda: fixed.lambda.clone(),
        theta: theta.clone(),
    };
    let sol = PrecoderSolution {
        q: q0,
        v: fixed.v,
        lambda: fixed.lambda,
        theta,
        rate,
        iterations: 0,
        converged: true,
    };
    debug_assert_eq!(sol.v.nrows(), nt);
    Ok((params, sol))
}
