//! The rotation-BFGS solver and a brute-force reference for small `nt`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bfgs::{self, BracketMode, LineSearchConfig};
use crate::channel::{ChannelPair, PrecoderSolution};
use crate::error::{Error, Result};
use crate::gsvd;
use crate::matlin::{self, GivensAngleSet, Matrix};
use crate::rectifier::{self, Objective, RotationParams};

/// Starting point of the optimizer.
#[derive(Clone, Debug, PartialEq)]
pub enum InitStrategy {
    /// The GSVD precoder with its optimal power allocation.
    Gsvd,
    /// `V = I` and equal power on every eigenvalue.
    Identity,
    Explicit(RotationParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub pt: f64,
    /// Forward-difference step.
    pub eps1: f64,
    /// Stop when successive objective values differ by less than this.
    pub eps2: f64,
    pub max_iters: usize,
    pub init: InitStrategy,
    /// Line-search constants. Its `eps2` is replaced by the solver's.
    pub line_search: LineSearchConfig,
}

impl SolveConfig {
    pub fn new(pt: f64) -> Self {
        Self {
            pt,
            eps1: 1e-4,
            eps2: 1e-4,
            max_iters: 500,
            init: InitStrategy::Gsvd,
            line_search: LineSearchConfig::default(),
        }
    }

    pub fn with_init(mut self, init: InitStrategy) -> Self {
        self.init = init;
        self
    }

    pub fn with_bracket_mode(mut self, mode: BracketMode) -> Self {
        self.line_search.bracket_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pt > 0.0 && self.pt.is_finite()) {
            return Err(Error::argument(format!(
                "Pt must be positive and finite, got {}",
                self.pt
            )));
        }
        for (name, v) in [
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("eps3", self.line_search.eps3),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::argument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::argument("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub f: f64,
    pub rate: f64,
    pub alpha: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    /// Record 0 is the starting point; record `k` follows iteration `k`.
    pub records: Vec<IterationRecord>,
    pub duration: Duration,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn initial_point(ch: &ChannelPair, cfg: &SolveConfig) -> Result<Vec<f64>> {
    let nt = ch.nt();
    let params = match &cfg.init {
        InitStrategy::Gsvd => gsvd::gsvd_init(ch, cfg.pt)?.0,
        InitStrategy::Identity => RotationParams {
            lambda: vec![cfg.pt / nt as f64; nt],
            theta: GivensAngleSet::zeros(nt),
        },
        InitStrategy::Explicit(p) => {
            if p.lambda.len() != nt || p.theta.nt() != nt {
                return Err(Error::argument(format!(
                    "explicit start has nt = {} but the channel has nt = {nt}",
                    p.lambda.len()
                )));
            }
            p.clone()
        }
    };
    Ok(params.to_coordinates())
}

/// Run rotation-BFGS on `ch` under total power `cfg.pt`.
///
/// If the optimized rate is negative, which happens only when every
/// direction favours the eavesdropper, the zero covariance is returned
/// instead, since it achieves rate 0.
pub fn solve(ch: &ChannelPair, cfg: &SolveConfig) -> Result<(PrecoderSolution, SolveTrace)> {
    cfg.validate()?;
    let start = Instant::now();
    let mut trace = SolveTrace::default();
    let fail = |source: Error, mut trace: SolveTrace| {
        trace.duration = start.elapsed();
        Error::Solve {
            source: Box::new(source),
            trace: Box::new(trace),
        }
    };

    let nt = ch.nt();
    let obj = Objective::new(ch, cfg.pt);
    let value = |y: &[f64]| obj.value(y);
    let mut ls = cfg.line_search;
    ls.eps2 = cfg.eps2;

    let mut x = match initial_point(ch, cfg) {
        Ok(x) => x,
        Err(e) => return Err(fail(e, trace)),
    };
    let mut f = value(&x);
    if !f.is_finite() {
        return Err(fail(
            Error::numerical("solve", "objective is not finite at the start"),
            trace,
        ));
    }
    let mut g = match bfgs::numeric_gradient(value, &x, f, cfg.eps1) {
        Ok(g) => g,
        Err(e) => return Err(fail(e, trace)),
    };
    trace.records.push(IterationRecord {
        k: 0,
        f,
        rate: -f,
        alpha: 0.0,
        grad_norm: norm(&g),
    });

    let n = x.len();
    let mut m = Matrix::identity(n, n);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let d: Vec<f64> = (&m * nalgebra::DVector::from_column_slice(&g))
            .iter()
            .copied()
            .collect();
        let step = bfgs::golden_section_search(value, &x, &d, f, &ls);
        let x_next: Vec<f64> = x
            .iter()
            .zip(&d)
            .map(|(xi, di)| xi - step.alpha * di)
            .collect();
        let f_next = if step.alpha == 0.0 { f } else { value(&x_next) };
        let g_next = match bfgs::numeric_gradient(value, &x_next, f_next, cfg.eps1) {
            Ok(g) => g,
            Err(e) => return Err(fail(e, trace)),
        };
        let dx: Vec<f64> = x_next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        m = bfgs::bfgs_update(&m, &dx, &dg).0;
        iterations += 1;
        trace.records.push(IterationRecord {
            k: iterations,
            f: f_next,
            rate: -f_next,
            alpha: step.alpha,
            grad_norm: norm(&g_next),
        });
        let done = (f_next - f).abs() < cfg.eps2;
        x = x_next;
        f = f_next;
        g = g_next;
        if done {
            converged = true;
            break;
        }
    }

    let (v, lambda) = obj.params(&x);
    let rate = -f;
    let solution = if rate < 0.0 {
        PrecoderSolution::zero_power(nt, iterations, converged)
    } else {
        let (_, theta) = rectifier::unpack(&x, nt).expect("coordinate length checked");
        PrecoderSolution {
            q: matlin::reconstruct(&v, &lambda),
            v,
            lambda,
            theta,
            rate,
            iterations,
            converged,
        }
    };
    trace.duration = start.elapsed();
    Ok((solution, trace))
}

/// The GSVD precoder without refinement.
pub fn gsvd_baseline(ch: &ChannelPair, pt: f64) -> Result<PrecoderSolution> {
    Ok(gsvd::gsvd_init(ch, pt)?.1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Points per eigenvalue coordinate and per angle for `nt = 2`.
    pub grid_points: usize,
    /// Random feasible samples for `nt = 3`.
    pub random_samples: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid_points: 200,
            random_samples: 1_000_000,
            seed: 0,
        }
    }
}

const ORACLE_CHUNK: usize = 10_000;

/// Best rate found by exhaustive search (`nt ≤ 2`) or seeded random search
/// (`nt = 3`) over feasible full-power covariances, floored at 0.
///
/// For `nt = 2` the grid is `λ₁ = Pt·i/R`, `i = 0..=R`, and `θ = π j/R`,
/// `j = 0..R`, so doubling `R` only adds points.
pub fn grid_oracle(ch: &ChannelPair, pt: f64, cfg: &OracleConfig) -> Result<f64> {
    if !(pt >= 0.0 && pt.is_finite()) {
        return Err(Error::argument(format!(
            "Pt must be finite and ≥ 0, got {pt}"
        )));
    }
    let eval = ch.rate_evaluator();
    let best = match ch.nt() {
        1 => eval.rate(&Matrix::identity(1, 1), &[pt]),
        2 => {
            let r = cfg.grid_points;
            if r == 0 {
                return Err(Error::argument("grid resolution must be at least 1"));
            }
            (0..=r)
                .into_par_iter()
                .map(|i| {
                    let l1 = pt * i as f64 / r as f64;
                    let lambda = [l1, pt - l1];
                    (0..r)
                        .map(|j| {
                            let theta = std::f64::consts::PI * j as f64 / r as f64;
                            let v = matlin::compose_from_slice(2, &[theta]);
                            eval.rate(&v, &lambda)
                        })
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .reduce(|| f64::NEG_INFINITY, f64::max)
        }
        3 => {
            let n = cfg.random_samples;
            if n == 0 {
                return Err(Error::argument("random search needs at least one sample"));
            }
            let chunks = n.div_ceil(ORACLE_CHUNK);
            (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(c as u64);
                    let count = ORACLE_CHUNK.min(n - c * ORACLE_CHUNK);
                    let mut best = f64::NEG_INFINITY;
                    for _ in 0..count {
                        let (mut u1, mut u2): (f64, f64) = (rng.random(), rng.random());
                        if u1 > u2 {
                            std::mem::swap(&mut u1, &mut u2);
                        }
                        let lambda = [pt * u1, pt * (u2 - u1), pt * (1.0 - u2)];
                        let angles: [f64; 3] =
                            std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU));
                        let v = matlin::compose_from_slice(3, &angles);
                        best = best.max(eval.rate(&v, &lambda));
                    }
                    best
                })
                .reduce(|| f64::NEG_INFINITY, f64::max)
        }
        nt => {
            return Err(Error::Unsupported(format!(
                "grid oracle covers nt ≤ 3, got nt = {nt}"
            )))
        }
    };
    if best.is_nan() {
        return Err(Error::numerical("grid_oracle", "rate evaluation failed"));
    }
    Ok(best.max(0.0))
}
