//! Unconstrained optimizer coordinates and the map back to feasible powers.
//!
//! The optimizer works on `x = [λ̃, θ]`: the first `nt - 1` eigenvalues,
//! left unconstrained, followed by the Givens angles. The last eigenvalue is
//! implied by the power budget. `rectify` clamps negatives, rescales when the
//! budget is exceeded and hands the remainder to the last eigenvalue.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelPair, RateEvaluator};
use crate::error::{Error, Result};
use crate::matlin::{self, GivensAngleSet, Matrix};

/// Feasible rotation parameters: eigenvalues and angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationParams {
    pub lambda: Vec<f64>,
    pub theta: GivensAngleSet,
}

impl RotationParams {
    pub fn nt(&self) -> usize {
        self.lambda.len()
    }

    pub fn rotation(&self) -> Matrix {
        matlin::compose_rotation(&self.theta)
    }

    pub fn covariance(&self) -> Matrix {
        matlin::reconstruct(&self.rotation(), &self.lambda)
    }

    /// Optimizer coordinates for these parameters: the first `nt - 1`
    /// eigenvalues followed by the angles.
    pub fn to_coordinates(&self) -> Vec<f64> {
        let nt = self.nt();
        let mut x = self.lambda[..nt.saturating_sub(1)].to_vec();
        x.extend_from_slice(self.theta.as_slice());
        x
    }
}

/// Length of the coordinate vector for `nt` antennas.
pub const fn coordinate_len(nt: usize) -> usize {
    nt.saturating_sub(1) + GivensAngleSet::count(nt)
}

/// Map `nt - 1` free eigenvalues to `nt` non-negative eigenvalues summing to `pt`.
pub fn rectify(lambda_tilde: &[f64], pt: f64) -> Vec<f64> {
    let mut out: Vec<f64> = lambda_tilde.iter().map(|&l| l.max(0.0)).collect();
    let sum: f64 = out.iter().sum();
    let used = if sum > pt {
        let scale = pt / sum;
        for l in &mut out {
            *l *= scale;
        }
        out.iter().sum()
    } else {
        sum
    };
    out.push((pt - used).max(0.0));
    out
}

pub fn pack(lambda_tilde: &[f64], theta: &GivensAngleSet) -> Result<Vec<f64>> {
    let nt = theta.nt();
    if lambda_tilde.len() + 1 != nt.max(1) {
        return Err(Error::argument(format!(
            "expected {} free eigenvalues for nt = {nt}, got {}",
            nt.saturating_sub(1),
            lambda_tilde.len()
        )));
    }
    let mut x = lambda_tilde.to_vec();
    x.extend_from_slice(theta.as_slice());
    Ok(x)
}

pub fn unpack(x: &[f64], nt: usize) -> Result<(Vec<f64>, GivensAngleSet)> {
    if nt == 0 || x.len() != coordinate_len(nt) {
        return Err(Error::argument(format!(
            "coordinate vector of length {} does not fit nt = {nt} (expected {})",
            x.len(),
            coordinate_len(nt)
        )));
    }
    let (lt, th) = x.split_at(nt - 1);
    Ok((lt.to_vec(), GivensAngleSet::from_vec(nt, th.to_vec())?))
}

/// `f(x) = −R(rectify(λ̃), compose(θ))` with the Gram matrices cached.
#[derive(Clone, Debug)]
pub struct Objective {
    eval: RateEvaluator,
    nt: usize,
    pt: f64,
}

impl Objective {
    pub fn new(ch: &ChannelPair, pt: f64) -> Self {
        Self {
            eval: ch.rate_evaluator(),
            nt: ch.nt(),
            pt,
        }
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn pt(&self) -> f64 {
        self.pt
    }

    pub fn dim(&self) -> usize {
        coordinate_len(self.nt)
    }

    /// Rectified eigenvalues and rotation for `x`. Panics on a wrong length.
    pub fn params(&self, x: &[f64]) -> (Matrix, Vec<f64>) {
        assert_eq!(x.len(), self.dim(), "coordinate length");
        let (lt, th) = x.split_at(self.nt - 1);
        (
            matlin::compose_from_slice(self.nt, th),
            rectify(lt, self.pt),
        )
    }

    /// Objective value; NaN when the rate cannot be evaluated.
    pub fn value(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| !v.is_finite()) {
            return f64::NAN;
        }
        let (v, lambda) = self.params(x);
        -self.eval.rate(&v, &lambda)
    }
}

pub fn objective(x: &[f64], ch: &ChannelPair, pt: f64) -> Result<f64> {
    if x.len() != coordinate_len(ch.nt()) {
        return Err(Error::argument(format!(
            "coordinate vector of length {} does not fit nt = {}",
            x.len(),
            ch.nt()
        )));
    }
    let f = Objective::new(ch, pt).value(x);
    if f.is_finite() {
        Ok(f)
    } else {
        Err(Error::numerical(
            "objective",
            "rate evaluation was not finite",
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channel, secrecy_rate};
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    #[test]
    fn rectify_examples() {
        assert_eq!(rectify(&[-1.0, 4.0], 5.0), vec![0.0, 4.0, 1.0]);
        assert_eq!(rectify(&[-1.0, -1.0], 5.0), vec![0.0, 0.0, 5.0]);
        assert_eq!(rectify(&[6.0, 6.0], 5.0), vec![2.5, 2.5, 0.0]);
        assert_eq!(rectify(&[], 3.0), vec![3.0]);
    }

    #[test]
    fn coordinate_layout() {
        assert_eq!(coordinate_len(1), 0);
        assert_eq!(coordinate_len(2), 2);
        assert_eq!(coordinate_len(3), 5);
        let th = GivensAngleSet::from_vec(2, vec![0.3]).unwrap();
        assert_eq!(pack(&[1.5], &th).unwrap(), vec![1.5, 0.3]);
        assert!(pack(&[1.0, 2.0], &th).is_err());
        assert!(unpack(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(unpack(&[], 0).is_err());
        let (lt, th1) = unpack(&[], 1).unwrap();
        assert!(lt.is_empty() && th1.as_slice().is_empty());
    }

    #[test]
    fn zero_coordinates_put_all_power_last() {
        let ch = draw_channel(3, 2, 1, 17).unwrap();
        let f = objective(&[0.0; 5], &ch, 30.0).unwrap();
        let r = secrecy_rate(&ch, &Matrix::identity(3, 3), &[0.0, 0.0, 30.0]).unwrap();
        assert!((f + r).abs() < 1e-14);
    }

    #[test]
    fn params_round_trip_through_coordinates() {
        let th = GivensAngleSet::from_vec(3, vec![0.1, -0.2, 2.0]).unwrap();
        let p = RotationParams {
            lambda: vec![3.0, 2.0, 1.0],
            theta: th,
        };
        let x = p.to_coordinates();
        assert_eq!(x, vec![3.0, 2.0, 0.1, -0.2, 2.0]);
        let obj = Objective::new(&draw_channel(3, 1, 1, 0).unwrap(), 6.0);
        let (v, l) = obj.params(&x);
        assert_eq!(l, p.lambda);
        assert!(matlin::max_abs_diff(&v, &p.rotation()) < 1e-15);
    }

    #[test]
    fn objective_rejects_wrong_length() {
        let ch = draw_channel(2, 1, 1, 0).unwrap();
        assert!(matches!(
            objective(&[0.0; 3], &ch, 1.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn objective_is_locally_lipschitz() {
        let ch = draw_channel(3, 2, 2, 4).unwrap();
        let obj = Objective::new(&ch, 10.0);
        let x = [2.0, -1.0, 0.3, 1.2, -2.2];
        let f0 = obj.value(&x);
        for k in 0..5 {
            let mut y = x;
            y[k] += 1e-6;
            assert!((obj.value(&y) - f0).abs() <= 100.0 * 1e-6);
        }
    }

    fn finite(range: f64) -> impl Strategy<Value = f64> {
        -range..range
    }

    proptest! {
        #[test]
        fn rectify_lands_on_simplex(lt in proptest::collection::vec(finite(50.0), 0..6), pt in 0.01..100.0f64) {
            let l = rectify(&lt, pt);
            prop_assert_eq!(l.len(), lt.len() + 1);
            prop_assert!(l.iter().all(|&v| v >= 0.0));
            prop_assert!((l.iter().sum::<f64>() - pt).abs() <= 1e-12 * pt.max(1.0));
        }

        #[test]
        fn rectify_is_idempotent(lt in proptest::collection::vec(finite(50.0), 1..6), pt in 0.01..100.0f64) {
            let l = rectify(&lt, pt);
            let again = rectify(&l[..l.len() - 1], pt);
            for (a, b) in l.iter().zip(&again) {
                prop_assert!((a - b).abs() <= 1e-12 * pt.max(1.0));
            }
        }

        #[test]
        fn pack_unpack_bijective(nt in 1usize..6, seed in proptest::collection::vec(finite(10.0), 15)) {
            let x = seed[..coordinate_len(nt)].to_vec();
            let (lt, th) = unpack(&x, nt).unwrap();
            prop_assert_eq!(pack(&lt, &th).unwrap(), x);
        }

        #[test]
        fn objective_periodic_in_each_angle(k in 0usize..3, seed in 0u64..1000) {
            let ch = draw_channel(3, 2, 2, seed).unwrap();
            let obj = Objective::new(&ch, 10.0);
            let x = [1.0, 4.0, 0.3, -1.1, 2.5];
            let mut y = x;
            y[2 + k] += TAU;
            prop_assert!((obj.value(&x) - obj.value(&y)).abs() <= 1e-12);
        }
    }
}
