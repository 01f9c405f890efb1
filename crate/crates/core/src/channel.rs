//! Channel pairs, random draws, and the secrecy-rate objective.
//!
//! With real Gaussian inputs the secrecy rate of a covariance `Q` is
//!
//! ```text
//! R(Q) = ½ log₂ det(I + H Q Hᵀ) − ½ log₂ det(I + G Q Gᵀ)
//! ```
//!
//! and, by Sylvester's identity, for `Q = V Λ Vᵀ`
//!
//! ```text
//! R = ½ log₂ det(I + Λ^½ Vᵀ HᵀH V Λ^½) − ½ log₂ det(I + Λ^½ Vᵀ GᵀG V Λ^½).
//! ```
//!
//! Both arguments are symmetric positive definite, so log-determinants are
//! taken from Cholesky pivots.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matlin::{self, GivensAngleSet, Matrix};

const PSD_TOL: f64 = 1e-6;
const Q_SYMMETRY_TOL: f64 = 1e-9;

/// Legitimate channel `H` (`nr × nt`) and eavesdropper channel `G` (`ne × nt`).
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelPair {
    h: Matrix,
    g: Matrix,
}

impl ChannelPair {
    pub fn new(h: Matrix, g: Matrix) -> Result<Self> {
        if h.nrows() == 0 || g.nrows() == 0 || h.ncols() == 0 {
            return Err(Error::argument(
                "channel matrices need at least one row and column",
            ));
        }
        if h.ncols() != g.ncols() {
            return Err(Error::argument(format!(
                "H has {} columns but G has {}; both must equal nt",
                h.ncols(),
                g.ncols()
            )));
        }
        if h.iter().chain(g.iter()).any(|x| !x.is_finite()) {
            return Err(Error::argument(
                "channel matrices contain non-finite entries",
            ));
        }
        Ok(Self { h, g })
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn g(&self) -> &Matrix {
        &self.g
    }

    pub fn nt(&self) -> usize {
        self.h.ncols()
    }

    pub fn nr(&self) -> usize {
        self.h.nrows()
    }

    pub fn ne(&self) -> usize {
        self.g.nrows()
    }

    /// Cached Gram matrices for repeated rate evaluation.
    pub fn rate_evaluator(&self) -> RateEvaluator {
        RateEvaluator {
            hth: self.h.transpose() * &self.h,
            gtg: self.g.transpose() * &self.g,
        }
    }
}

/// i.i.d. `N(0, 1)` channel pair from a ChaCha8 stream seeded with `seed`.
///
/// `H` is filled row-major first, then `G`.
pub fn draw_channel(nt: usize, nr: usize, ne: usize, seed: u64) -> Result<ChannelPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_channel_with(nt, nr, ne, &mut rng)
}

pub fn draw_channel_with<R: Rng + ?Sized>(
    nt: usize,
    nr: usize,
    ne: usize,
    rng: &mut R,
) -> Result<ChannelPair> {
    if nt == 0 || nr == 0 || ne == 0 {
        return Err(Error::argument("antenna counts must be at least 1"));
    }
    let mut fill = |rows: usize| {
        let data: Vec<f64> = (0..rows * nt).map(|_| rng.sample(StandardNormal)).collect();
        Matrix::from_row_slice(rows, nt, &data)
    };
    let h = fill(nr);
    let g = fill(ne);
    ChannelPair::new(h, g)
}

/// Natural log-determinant of a symmetric positive-definite matrix.
///
/// Returns `None` when a Cholesky pivot is not positive.
pub fn log_det_spd(a: &Matrix) -> Option<f64> {
    let n = a.nrows();
    let mut l = a.clone();
    let mut acc = 0.0;
    for j in 0..n {
        let mut d = l[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return None;
        }
        let pivot = d.sqrt();
        l[(j, j)] = pivot;
        acc += d.ln();
        for i in j + 1..n {
            let mut s = l[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / pivot;
        }
    }
    Some(acc)
}

/// Secrecy rate evaluator with `HᵀH` and `GᵀG` precomputed.
#[derive(Clone, Debug)]
pub struct RateEvaluator {
    hth: Matrix,
    gtg: Matrix,
}

impl RateEvaluator {
    pub fn nt(&self) -> usize {
        self.hth.nrows()
    }

    /// Rate in bits/s/Hz for `Q = V diag(λ) Vᵀ`. Entries of `λ` must be ≥ 0.
    pub fn rate(&self, v: &Matrix, lambda: &[f64]) -> f64 {
        let mut b = v.clone();
        for (k, &l) in lambda.iter().enumerate() {
            b.column_mut(k).scale_mut(l.max(0.0).sqrt());
        }
        let num = log_det_shifted(&b, &self.hth);
        let den = log_det_shifted(&b, &self.gtg);
        (num - den) / (2.0 * std::f64::consts::LN_2)
    }
}

/// `ln det(I + Bᵀ A B)` for PSD `A`.
fn log_det_shifted(b: &Matrix, a: &Matrix) -> f64 {
    let n = b.ncols();
    let mut m = b.transpose() * (a * b);
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
        m[(i, i)] += 1.0;
    }
    log_det_spd(&m).unwrap_or(f64::NAN)
}

/// Secrecy rate of the rotation parameterization `(V, Λ)`.
pub fn secrecy_rate(ch: &ChannelPair, v: &Matrix, lambda: &[f64]) -> Result<f64> {
    let nt = ch.nt();
    if v.shape() != (nt, nt) || lambda.len() != nt {
        return Err(Error::argument(format!(
            "expected a {nt}x{nt} V and {nt} eigenvalues, got {}x{} and {}",
            v.nrows(),
            v.ncols(),
            lambda.len()
        )));
    }
    if v.iter().chain(lambda).any(|x| !x.is_finite()) {
        return Err(Error::argument("V or Λ contains non-finite entries"));
    }
    if let Some(l) = lambda.iter().find(|&&l| l < 0.0) {
        return Err(Error::argument(format!("eigenvalue {l} is negative")));
    }
    Ok(ch.rate_evaluator().rate(v, lambda))
}

/// Secrecy rate of an explicit covariance, through the determinant ratio
/// `det(I + HQHᵀ) / det(I + GQGᵀ)`.
pub fn secrecy_rate_q(ch: &ChannelPair, q: &Matrix) -> Result<f64> {
    let nt = ch.nt();
    if q.shape() != (nt, nt) {
        return Err(Error::argument(format!(
            "Q must be {nt}x{nt}, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::argument("Q contains non-finite entries"));
    }
    let scale = q.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    if matlin::max_abs_diff(q, &q.transpose()) > Q_SYMMETRY_TOL * scale {
        return Err(Error::argument("Q is not symmetric"));
    }
    let (_, eig) = matlin::sym_eig(q)?;
    let min = eig.last().copied().unwrap_or(0.0);
    if min < -PSD_TOL {
        return Err(Error::argument(format!(
            "Q has eigenvalue {min:.3e} below −{PSD_TOL:e}"
        )));
    }
    let spd = |m: &Matrix| {
        let n = m.nrows();
        let mut a = m * q * m.transpose();
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = s;
                a[(j, i)] = s;
            }
            a[(i, i)] += 1.0;
        }
        log_det_spd(&a)
    };
    match (spd(ch.h()), spd(ch.g())) {
        (Some(num), Some(den)) => Ok((num - den) / (2.0 * std::f64::consts::LN_2)),
        _ => Err(Error::numerical(
            "secrecy_rate_q",
            "I + AQAᵀ is not positive definite",
        )),
    }
}

/// A covariance together with its rotation parameters and achieved rate.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecoderSolution {
    pub q: Matrix,
    pub v: Matrix,
    pub lambda: Vec<f64>,
    pub theta: GivensAngleSet,
    /// bits/s/Hz
    pub rate: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl PrecoderSolution {
    /// The all-zero covariance, which always achieves rate 0.
    pub fn zero_power(nt: usize, iterations: usize, converged: bool) -> Self {
        Self {
            q: Matrix::zeros(nt, nt),
            v: Matrix::identity(nt, nt),
            lambda: vec![0.0; nt],
            theta: GivensAngleSet::zeros(nt),
            rate: 0.0,
            iterations,
            converged,
        }
    }

    pub fn total_power(&self) -> f64 {
        self.q.trace()
    }
}
