//! Quasi-Newton pieces: forward-difference gradients, the BFGS inverse
//! Hessian recursion and a golden-section line search.
//!
//! Steps are taken as `x − α d` with `d = M g`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matlin::Matrix;

/// How the line search grows its initial bracket `[0, α_init]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BracketMode {
    /// Multiply the far end by `τ₁` while it is still worse than the start.
    #[default]
    Verbatim,
    /// Multiply the far end by `τ₁` while the probes keep decreasing.
    Descent,
}

impl fmt::Display for BracketMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BracketMode::Verbatim => "verbatim",
            BracketMode::Descent => "descent",
        })
    }
}

impl FromStr for BracketMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "verbatim" => Ok(BracketMode::Verbatim),
            "descent" => Ok(BracketMode::Descent),
            other => Err(Error::argument(format!(
                "unknown bracket mode {other:?} (expected verbatim or descent)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSearchConfig {
    pub eps2: f64,
    pub eps3: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub alpha_init: f64,
    pub alpha_cap: f64,
    pub bracket_mode: BracketMode,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            eps2: 1e-4,
            eps3: 5e-4,
            tau1: 3.0,
            tau2: 0.382,
            tau3: 0.618,
            alpha_init: 0.1,
            alpha_cap: 20.0,
            bracket_mode: BracketMode::Verbatim,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    /// `f(x − α d)`, or `f_x` when `α = 0`.
    pub value: f64,
    pub evaluations: usize,
    pub expansions: usize,
    /// Far end of the bracket after expansion.
    pub bracket: f64,
}

/// Iterate of the quasi-Newton loop.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub x: Vec<f64>,
    pub m: Matrix,
    pub g: Vec<f64>,
    pub f: f64,
    pub k: usize,
}

impl OptimizerState {
    /// State at `x` with `M = I`.
    pub fn new(x: Vec<f64>, f: f64, g: Vec<f64>) -> Self {
        let n = x.len();
        Self {
            x,
            m: Matrix::identity(n, n),
            g,
            f,
            k: 0,
        }
    }

    /// Search direction `M g`.
    pub fn direction(&self) -> Vec<f64> {
        let g = nalgebra::DVector::from_column_slice(&self.g);
        (&self.m * g).iter().copied().collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Forward differences with step `eps1`; exactly `x.len()` calls to `f`.
pub fn numeric_gradient<F>(mut f: F, x: &[f64], f_x: f64, eps1: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + eps1;
        let v = f(&probe);
        probe[i] = x[i];
        if !v.is_finite() {
            return Err(Error::numerical(
                "numeric_gradient",
                format!("objective is {v} at coordinate {i} probe"),
            ));
        }
        g.push((v - f_x) / eps1);
    }
    Ok(g)
}

/// One BFGS inverse-Hessian update
///
/// ```text
/// M′ = (I − δx δgᵀ/ρ) M (I − δg δxᵀ/ρ) + δx δxᵀ/ρ,   ρ = δgᵀ δx
/// ```
///
/// The second value is false when the update was skipped because
/// `ρ ≤ 1e-12 ‖δg‖ ‖δx‖`.
pub fn bfgs_update(m: &Matrix, dx: &[f64], dg: &[f64]) -> (Matrix, bool) {
    let n = dx.len();
    assert_eq!(dg.len(), n);
    assert_eq!(m.shape(), (n, n));
    let rho: f64 = dx.iter().zip(dg).map(|(a, b)| a * b).sum();
    if !(rho > 1e-12 * norm(dx) * norm(dg)) || !rho.is_finite() {
        return (m.clone(), false);
    }
    let s = nalgebra::DVector::from_column_slice(dx);
    let y = nalgebra::DVector::from_column_slice(dg);
    let a = Matrix::identity(n, n) - (&s * y.transpose()) / rho;
    let next = &a * m * a.transpose() + (&s * s.transpose()) / rho;
    (((&next + next.transpose()) * 0.5), true)
}

fn argmin(f: &[f64; 4]) -> usize {
    let mut m = 0;
    for k in 1..4 {
        if f[k] < f[m] {
            m = k;
        }
    }
    m
}

fn spread(f: &[f64; 4]) -> f64 {
    let hi = f.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lo = f.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    hi - lo
}

/// Golden-section search for `α` minimizing `f(x − α d)`.
///
/// Four points `α₁ ≤ α₂ ≤ α₃ ≤ α₄` are tracked with their values. After
/// bracketing, the bracket is narrowed to the neighbours of the current best
/// point until it is shorter than `ε₃` or the four values agree within
/// `ε₂`. The best of the four tracked points is returned, so the result is
/// never worse than `f_x`. Non-finite probe values count as `+∞`.
pub fn golden_section_search<F>(
    mut f: F,
    x: &[f64],
    d: &[f64],
    f_x: f64,
    cfg: &LineSearchConfig,
) -> LineSearchOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x.len(), d.len());
    let dn = norm(d);
    if dn == 0.0 || !dn.is_finite() {
        return LineSearchOutcome {
            alpha: 0.0,
            value: f_x,
            evaluations: 0,
            expansions: 0,
            bracket: 0.0,
        };
    }
    let mut evaluations = 0;
    let mut trial = vec![0.0; x.len()];
    let mut phi = |alpha: f64| {
        for k in 0..x.len() {
            trial[k] = x[k] - alpha * d[k];
        }
        evaluations += 1;
        let v = f(&trial);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut a = [0.0, 0.0, 0.0, cfg.alpha_init];
    let mut fv = [f_x, f_x, f_x, phi(cfg.alpha_init)];
    let mut expansions = 0;
    match cfg.bracket_mode {
        BracketMode::Verbatim => {
            while a[3] < cfg.alpha_cap && fv[0] < fv[3] {
                a[3] *= cfg.tau1;
                fv[3] = phi(a[3]);
                expansions += 1;
            }
        }
        BracketMode::Descent => {
            if fv[3] < fv[0] {
                while a[3] < cfg.alpha_cap {
                    let next = a[3] * cfg.tau1;
                    let value = phi(next);
                    expansions += 1;
                    let improving = value < fv[3];
                    a[3] = next;
                    fv[3] = value;
                    if !improving {
                        break;
                    }
                }
            }
        }
    }
    let bracket = a[3];

    a[1] = cfg.tau2 * a[3];
    a[2] = cfg.tau3 * a[3];
    fv[1] = phi(a[1]);
    fv[2] = phi(a[2]);

    while a[3] - a[0] > cfg.eps3 && spread(&fv) > cfg.eps2 {
        let m = argmin(&fv);
        let q1 = m.saturating_sub(1);
        let q2 = (m + 1).min(3);
        let (old_a2, old_f2, old_a3, old_f3) = (a[1], fv[1], a[2], fv[2]);
        a[0] = a[q1];
        fv[0] = fv[q1];
        a[3] = a[q2];
        fv[3] = fv[q2];
        let width = a[3] - a[0];
        match m {
            1 => {
                a[2] = old_a2;
                fv[2] = old_f2;
                a[1] = a[0] + cfg.tau2 * width;
                fv[1] = phi(a[1]);
            }
            2 => {
                a[1] = old_a3;
                fv[1] = old_f3;
                a[2] = a[0] + cfg.tau3 * width;
                fv[2] = phi(a[2]);
            }
            _ => {
                a[1] = a[0] + cfg.tau2 * width;
                a[2] = a[0] + cfg.tau3 * width;
                fv[1] = phi(a[1]);
                fv[2] = phi(a[2]);
            }
        }
    }

    let m = argmin(&fv);
    let (alpha, value) = if fv[m] < f_x {
        (a[m], fv[m])
    } else {
        (0.0, f_x)
    };
    LineSearchOutcome {
        alpha,
        value,
        evaluations,
        expansions,
        bracket,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn along<F: Fn(f64) -> f64>(phi: F) -> impl FnMut(&[f64]) -> f64 {
        move |y: &[f64]| phi(y[0])
    }

    #[test]
    fn gradient_of_linear_function_is_exact() {
        let c = [1.5, -2.0, 0.25];
        let f = |x: &[f64]| x.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
        let x = [0.3, 0.2, -1.0];
        let g = numeric_gradient(f, &x, f(&x), 1e-4).unwrap();
        for (a, b) in g.iter().zip(&c) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_of_quadratic_has_forward_bias() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let x = [0.7, -1.3];
        let mut calls = 0;
        let g = numeric_gradient(
            |y| {
                calls += 1;
                f(y)
            },
            &x,
            f(&x),
            1e-4,
        )
        .unwrap();
        assert_eq!(calls, 2);
        for (gi, xi) in g.iter().zip(&x) {
            assert!((gi - 2.0 * xi).abs() <= 1.1e-4);
        }
    }

    #[test]
    fn gradient_reports_non_finite_probe() {
        let f = |x: &[f64]| if x[1] > 0.5 { f64::NAN } else { 0.0 };
        match numeric_gradient(f, &[0.0, 0.5], 0.0, 1e-4) {
            Err(Error::Numerical { detail, .. }) => assert!(detail.contains("coordinate 1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn update_with_equal_differences_keeps_identity() {
        let (m, applied) = bfgs_update(&Matrix::identity(3, 3), &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        assert!(applied);
        assert!(crate::matlin::max_abs_diff(&m, &Matrix::identity(3, 3)) < 1e-15);
    }

    #[test]
    fn update_satisfies_secant_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let n = rng.random_range(1..8);
            let b = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let m = &b * b.transpose() + Matrix::identity(n, n);
            let dx: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            // δg = A δx with A SPD keeps the curvature positive.
            let a = &b.transpose() * &b + Matrix::identity(n, n);
            let dg: Vec<f64> = (&a * nalgebra::DVector::from_column_slice(&dx))
                .iter()
                .copied()
                .collect();
            let (next, applied) = bfgs_update(&m, &dx, &dg);
            assert!(applied);
            let img = &next * nalgebra::DVector::from_column_slice(&dg);
            for k in 0..n {
                assert!((img[k] - dx[k]).abs() <= 1e-8);
            }
            assert!(crate::matlin::max_abs_diff(&next, &next.transpose()) <= 1e-10);
        }
    }

    #[test]
    fn update_skips_degenerate_curvature() {
        let m = Matrix::identity(2, 2) * 2.0;
        let (next, applied) = bfgs_update(&m, &[1.0, 0.0], &[0.0, 1.0]);
        assert!(!applied);
        assert_eq!(next, m);
        let (_, applied) = bfgs_update(&m, &[1.0, 0.0], &[-1.0, 0.0]);
        assert!(!applied);
    }

    #[test]
    fn descent_bracket_finds_distant_minimum() {
        let cfg = LineSearchConfig {
            bracket_mode: BracketMode::Descent,
            ..Default::default()
        };
        let out = golden_section_search(along(|a| (a - 2.0).powi(2)), &[0.0], &[-1.0], 4.0, &cfg);
        assert!((out.alpha - 2.0).abs() <= 5e-4, "{out:?}");
    }

    #[test]
    fn verbatim_bracket_finds_minimum_inside_initial_interval() {
        let cfg = LineSearchConfig::default();
        let phi = |a: f64| 1e6 * (a - 0.07).powi(2);
        let out = golden_section_search(along(phi), &[0.0], &[-1.0], phi(0.0), &cfg);
        assert!((out.alpha - 0.07).abs() <= 5e-4, "{out:?}");
        assert_eq!(out.expansions, 0);
    }

    #[test]
    fn ascent_direction_returns_zero() {
        for mode in [BracketMode::Verbatim, BracketMode::Descent] {
            let cfg = LineSearchConfig {
                bracket_mode: mode,
                ..Default::default()
            };
            let out = golden_section_search(along(|a| a), &[0.0], &[-1.0], 0.0, &cfg);
            assert_eq!(out.alpha, 0.0);
            assert_eq!(out.value, 0.0);
        }
    }

    #[test]
    fn constant_function_returns_zero() {
        let out =
            golden_section_search(|_| 1.0, &[0.0, 0.0], &[1.0, 1.0], 1.0, &Default::default());
        assert_eq!(out.alpha, 0.0);
        assert_eq!(out.evaluations, 3);
    }

    #[test]
    fn zero_direction_is_a_no_op() {
        let mut calls = 0;
        let out = golden_section_search(
            |_| {
                calls += 1;
                0.0
            },
            &[1.0],
            &[0.0],
            5.0,
            &Default::default(),
        );
        assert_eq!((out.alpha, out.value, calls), (0.0, 5.0, 0));
    }

    #[test]
    fn non_finite_probes_are_avoided() {
        let phi = |a: f64| {
            if a > 0.05 {
                f64::NAN
            } else {
                (a - 0.03).powi(2)
            }
        };
        let out = golden_section_search(along(phi), &[0.0], &[-1.0], phi(0.0), &Default::default());
        assert!(out.value.is_finite() && out.value <= phi(0.0));
    }

    #[test]
    fn bracket_mode_parses() {
        assert_eq!(
            "descent".parse::<BracketMode>().unwrap(),
            BracketMode::Descent
        );
        assert_eq!(BracketMode::Verbatim.to_string(), "verbatim");
        assert!("x".parse::<BracketMode>().is_err());
    }

    #[test]
    fn state_direction_is_m_times_g() {
        let mut s = OptimizerState::new(vec![0.0, 0.0], 0.0, vec![1.0, 2.0]);
        assert_eq!(s.direction(), vec![1.0, 2.0]);
        s.m[(0, 1)] = 1.0;
        assert_eq!(s.direction(), vec![3.0, 2.0]);
    }

    proptest::proptest! {
        #[test]
        fn evaluation_budget(
            c in -1.0f64..30.0,
            log_s in -3.0f64..3.0,
            w in 0.0f64..5.0,
            descent in proptest::bool::ANY,
        ) {
            let mode = if descent { BracketMode::Descent } else { BracketMode::Verbatim };
            let cfg = LineSearchConfig { bracket_mode: mode, ..Default::default() };
            let s = 10f64.powf(log_s);
            let phi = move |a: f64| s * (a - c).powi(2) + w * (3.0 * a).sin();
            let out = golden_section_search(along(phi), &[0.0], &[-1.0], phi(0.0), &cfg);
            let steps = ((out.bracket / cfg.eps3).ln() / (1.0 / cfg.tau3).ln()).ceil().max(0.0) as usize;
            // the initial probe, plus endpoint-best steps that spend two probes per τ₂ shrink
            proptest::prop_assert!(out.evaluations <= 5 + steps + out.expansions, "{out:?}");
        }
    }
}
