//! Closed-form BT / BTT probabilities and the preference-strength bias.
//!
//! All functions work on reward differences `delta = r1 - r2`, so they are
//! invariant to adding the same constant to both rewards and never
//! exponentiate a positive argument.

use alloc::format;

use crate::{Error, Result};

/// Tie propensity of the BTT model. `theta = 1` is plain Bradley-Terry.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TieModelParams {
    theta: f64,
}

impl TieModelParams {
    /// The Bradley-Terry special case.
    pub const BT: Self = Self { theta: 1.0 };

    pub fn new(theta: f64) -> Result<Self> {
        if !theta.is_finite() || theta < 1.0 {
            return Err(Error::InvalidParameter(format!("theta must be finite and >= 1, got {theta}")));
        }
        Ok(Self { theta })
    }

    #[inline]
    pub fn theta(&self) -> f64 {
        self.theta
    }

    #[inline]
    pub fn ln_theta(&self) -> f64 {
        libm::log(self.theta)
    }

    /// True when ties carry zero probability.
    #[inline]
    pub fn is_bt(&self) -> bool {
        self.theta == 1.0
    }
}

impl Default for TieModelParams {
    fn default() -> Self {
        Self::BT
    }
}

fn finite(x: f64, what: &'static str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Logistic function, evaluated on the branch that never overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// BT probability that the first response wins given `delta = r1 - r2`.
pub fn bt_win_prob(delta: f64) -> Result<f64> {
    Ok(sigmoid(finite(delta, "bt_win_prob")?))
}

#[inline]
pub(crate) fn btt_win_from_delta(delta: f64, theta: f64) -> f64 {
    // e^r1 / (e^r1 + theta e^r2) after dividing through by e^max(r1, r2)
    if delta >= 0.0 {
        1.0 / (1.0 + theta * libm::exp(-delta))
    } else {
        let e = libm::exp(delta);
        e / (e + theta)
    }
}

#[inline]
pub(crate) fn btt_tie_from_delta(delta: f64, theta: f64) -> f64 {
    if theta == 1.0 {
        return 0.0;
    }
    let e = libm::exp(-libm::fabs(delta));
    (theta * theta - 1.0) * e / ((1.0 + theta * e) * (theta + e))
}

fn check_pair(r1: f64, r2: f64, what: &'static str) -> Result<f64> {
    finite(r1, what)?;
    finite(r2, what)?;
    finite(r1 - r2, what)
}

/// BTT probability that the first response is strictly preferred.
pub fn btt_win_prob(r1: f64, r2: f64, params: TieModelParams) -> Result<f64> {
    let delta = check_pair(r1, r2, "btt_win_prob")?;
    Ok(btt_win_from_delta(delta, params.theta))
}

/// BTT probability of a tie. Exactly zero when `theta = 1`.
pub fn btt_tie_prob(r1: f64, r2: f64, params: TieModelParams) -> Result<f64> {
    let delta = check_pair(r1, r2, "btt_tie_prob")?;
    Ok(btt_tie_from_delta(delta, params.theta))
}

/// Win probability once ties are split evenly between the two responses.
pub fn collapsed_win_prob(r1: f64, r2: f64, params: TieModelParams) -> Result<f64> {
    let delta = check_pair(r1, r2, "collapsed_win_prob")?;
    Ok(btt_win_from_delta(delta, params.theta) + 0.5 * btt_tie_from_delta(delta, params.theta))
}

/// Largest possible absolute bias, `ln((1 + theta^2) / (2 theta))`.
pub fn bias_bound(params: TieModelParams) -> f64 {
    let t = params.theta;
    if params.is_bt() {
        return 0.0;
    }
    libm::log((1.0 + t * t) / (2.0 * t))
}

#[inline]
pub(crate) fn bias_unchecked(delta_star: f64, theta: f64) -> f64 {
    if theta == 1.0 {
        return 0.0;
    }
    // ln(num/den) = ln1p((num - den)/den) with
    // num - den = -(theta - 1)^2 (1 - e^-x) for x = |delta*|; the map is odd.
    let x = libm::fabs(delta_star);
    let e = libm::exp(-x);
    let k = (theta - 1.0) * (theta - 1.0);
    let den = 1.0 + theta * theta + 2.0 * theta * e;
    let magnitude = libm::log1p(k * libm::expm1(-x) / den);
    if delta_star < 0.0 {
        -magnitude
    } else {
        magnitude
    }
}

/// Bias of the BT fit relative to the true strength `delta_star`:
/// `ln((2θ + (1+θ²)e^{-Δ}) / (1+θ² + 2θ e^{-Δ}))`.
pub fn bias_term(delta_star: f64, params: TieModelParams) -> Result<f64> {
    Ok(bias_unchecked(finite(delta_star, "bias_term")?, params.theta))
}

/// Derivative of [`bias_term`] with respect to `delta_star`. Even in its
/// argument, equal to `-((θ-1)/(θ+1))²` at zero and vanishing in the tails.
pub fn bias_term_derivative(delta_star: f64, params: TieModelParams) -> Result<f64> {
    let x = libm::fabs(finite(delta_star, "bias_term_derivative")?);
    let t = params.theta;
    if params.is_bt() {
        return Ok(0.0);
    }
    let e = libm::exp(-x);
    let s = 1.0 + t * t;
    Ok(-s * e / (2.0 * t + s * e) + 2.0 * t * e / (s + 2.0 * t * e))
}

/// Strength recovered by a BT fit on tie-broken data: `Δ* + bias(Δ*)`.
pub fn forward_bias_map(delta_star: f64, params: TieModelParams) -> Result<f64> {
    let x = finite(delta_star, "forward_bias_map")?;
    Ok(x + bias_unchecked(x, params.theta))
}

pub const INVERT_TOLERANCE: f64 = 1e-10;
pub const INVERT_MAX_ITERATIONS: usize = 200;

/// Solves `forward_bias_map(Δ*) = delta_hat` for `Δ*` by bisection.
///
/// The root lies in `[Δ̂ - B, Δ̂ + B]` with `B = bias_bound(θ)`, because the
/// bias never exceeds `B` in absolute value.
pub fn invert_bias_map(delta_hat: f64, params: TieModelParams) -> Result<f64> {
    let y = finite(delta_hat, "invert_bias_map")?;
    if params.is_bt() || y == 0.0 {
        return Ok(y);
    }
    let theta = params.theta;
    let bound = bias_bound(params);
    let residual = |x: f64| x + bias_unchecked(x, theta) - y;

    let (mut lo, mut hi) = (y - bound, y + bound);
    // Rounding in the tails can put an endpoint on the root itself.
    let (r_lo, r_hi) = (residual(lo), residual(hi));
    if r_lo.is_nan() || r_hi.is_nan() {
        return Err(Error::Numerical(format!("bias inversion residual is NaN at {y}")));
    }
    if r_lo >= 0.0 {
        return Ok(lo);
    }
    if r_hi <= 0.0 {
        return Ok(hi);
    }
    // Halve until the bracket collapses to adjacent floats; the tolerance is
    // reached after ~35 halvings and the rest costs a few more evaluations.
    for _ in 0..INVERT_MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            return Ok(mid);
        }
        let r = residual(mid);
        if r == 0.0 {
            return Ok(mid);
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if hi - lo <= INVERT_TOLERANCE {
        return Ok(0.5 * (lo + hi));
    }
    Err(Error::Numerical(format!("bias inversion did not converge for {y} within {INVERT_MAX_ITERATIONS} iterations")))
}

/// `bias_term(Δ*)/Δ*`, filled with its limit `-((θ-1)/(θ+1))²` at zero.
pub fn bias_ratio(delta_star: f64, params: TieModelParams) -> Result<f64> {
    let x = finite(delta_star, "bias_ratio")?;
    if params.is_bt() {
        return Ok(0.0);
    }
    if x == 0.0 {
        let t = params.theta;
        let r = (t - 1.0) / (t + 1.0);
        return Ok(-r * r);
    }
    Ok(bias_unchecked(x, params.theta) / x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::vec::Vec;

    fn p(theta: f64) -> TieModelParams {
        TieModelParams::new(theta).unwrap()
    }

    const THETAS: [f64; 6] = [1.0, 1.5, 2.0, 5.0, 10.0, 100.0];

    #[test]
    fn theta_validation() {
        assert!(TieModelParams::new(0.999).is_err());
        assert!(TieModelParams::new(f64::INFINITY).is_err());
        assert!(TieModelParams::new(f64::NAN).is_err());
        assert!(TieModelParams::new(1.0).unwrap().is_bt());
    }

    #[test]
    fn bt_win_prob_examples() {
        assert_eq!(bt_win_prob(0.0).unwrap(), 0.5);
        let hi = bt_win_prob(50.0).unwrap();
        // 1 - 1e-20 rounds to 1 in binary64
        assert!((1.0 - 1e-20..=1.0).contains(&hi));
        let lo = bt_win_prob(-700.0).unwrap();
        assert!(lo > 0.0 && lo.is_finite());
        // mpmath, 40 digits
        assert!((bt_win_prob(1.0).unwrap() - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!(matches!(bt_win_prob(f64::NAN), Err(Error::NonFinite(_))));
    }

    #[test]
    fn btt_examples() {
        assert_eq!(btt_win_prob(0.3, 0.3, p(1.0)).unwrap(), 0.5);
        assert!((btt_win_prob(0.0, 0.0, p(2.0)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((btt_win_prob(3.0, 3.0, p(5.0)).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((btt_win_prob(5.0, 0.0, p(2.0)).unwrap() - 0.986_703_291_042_268).abs() < 1e-14);
        assert!((btt_tie_prob(0.0, 0.0, p(2.0)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((btt_tie_prob(0.0, 0.0, p(5.0)).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(btt_tie_prob(4.0, -1.0, p(1.0)).unwrap(), 0.0);
        assert!(btt_win_prob(f64::INFINITY, 0.0, p(2.0)).is_err());
        assert!(btt_tie_prob(0.0, f64::NAN, p(2.0)).is_err());
    }

    #[test]
    fn collapsed_examples() {
        assert_eq!(collapsed_win_prob(1.7, 1.7, p(5.0)).unwrap(), 0.5);
        assert!((collapsed_win_prob(0.0, 0.0, p(2.0)).unwrap() - 0.5).abs() < 1e-15);
        for d in [-3.0, -0.2, 0.9, 12.0] {
            assert_eq!(collapsed_win_prob(d, 0.0, p(1.0)).unwrap(), bt_win_prob(d).unwrap());
        }
    }

    #[test]
    fn normalization_grid() {
        let mut r = -20.0;
        while r <= 20.0 {
            let mut s = -20.0;
            while s <= 20.0 {
                for &t in &THETAS {
                    let pr = p(t);
                    let total = btt_win_prob(r, s, pr).unwrap()
                        + btt_win_prob(s, r, pr).unwrap()
                        + btt_tie_prob(r, s, pr).unwrap();
                    assert!((total - 1.0).abs() < 1e-12, "r={r} s={s} theta={t}");
                    let c = collapsed_win_prob(r, s, pr).unwrap() + collapsed_win_prob(s, r, pr).unwrap();
                    assert!((c - 1.0).abs() < 1e-12);
                    assert_eq!(btt_tie_prob(r, s, pr).unwrap(), btt_tie_prob(s, r, pr).unwrap());
                }
                s += 0.75;
            }
            r += 0.75;
        }
    }

    #[test]
    fn bt_reduction() {
        for d in [-30.0, -1.0, 0.0, 0.4, 7.5, 700.0] {
            let a = btt_win_prob(d, 0.0, p(1.0)).unwrap();
            assert!((a - bt_win_prob(d).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn shift_invariance_is_exact_on_representable_shifts() {
        // r + c must be exact in binary for bit identity; quarter steps are.
        for c in [-100.0, 0.0, 100.0] {
            for &(r1, r2) in &[(0.25, -1.5), (3.0, 3.0), (-7.75, 2.5), (19.5, -19.0)] {
                for &t in &THETAS {
                    let pr = p(t);
                    assert_eq!(btt_win_prob(r1 + c, r2 + c, pr).unwrap(), btt_win_prob(r1, r2, pr).unwrap());
                    assert_eq!(btt_tie_prob(r1 + c, r2 + c, pr).unwrap(), btt_tie_prob(r1, r2, pr).unwrap());
                }
            }
        }
    }

    #[test]
    fn bias_examples() {
        for &t in &THETAS {
            assert_eq!(bias_term(0.0, p(t)).unwrap(), 0.0);
        }
        for x in [-5.0, 0.3, 20.0] {
            assert_eq!(bias_term(x, p(1.0)).unwrap(), 0.0);
            assert_eq!(forward_bias_map(x, p(1.0)).unwrap(), x);
        }
        assert!((bias_term(1.5, p(2.0)).unwrap() + 0.141_379_233_598_774_36).abs() < 1e-12);
        assert!((forward_bias_map(1.5, p(2.0)).unwrap() - 1.358_620_766_401_225_6).abs() < 1e-12);
        assert_eq!(forward_bias_map(0.0, p(3.0)).unwrap(), 0.0);
        assert!(bias_term(f64::NAN, p(2.0)).is_err());
    }

    #[test]
    fn bias_bound_examples() {
        assert_eq!(bias_bound(p(1.0)), 0.0);
        assert!((bias_bound(p(5.0)) - 0.955_511_445_027_436_4).abs() < 1e-12);
        assert!((bias_bound(p(2.0)) - 0.223_143_551_314_209_76).abs() < 1e-12);
        for &t in &THETAS[1..] {
            let b = bias_bound(p(t));
            assert!(b > 0.0);
            for x in [-30.0, 30.0] {
                let v = bias_term(x, p(t)).unwrap().abs();
                assert!(v < b && v > 0.999 * b, "theta={t} x={x}");
            }
        }
    }

    #[test]
    fn bias_sign_opposes_strength() {
        for &t in &THETAS[1..] {
            for x in [-4.0, -0.01, 0.01, 2.94] {
                let b = bias_term(x, p(t)).unwrap();
                assert!(b * x < 0.0);
            }
        }
    }

    #[test]
    fn forward_map_is_strictly_increasing() {
        for &t in &THETAS[1..] {
            let pr = p(t);
            let grid: Vec<f64> = (0..10_000).map(|i| -10.0 + 20.0 * i as f64 / 9_999.0).collect();
            let values: Vec<f64> = grid.iter().map(|&x| forward_bias_map(x, pr).unwrap()).collect();
            assert!(values.windows(2).all(|w| w[1] > w[0]), "theta={t}");
        }
    }

    #[test]
    fn forward_map_matches_collapsed_probability() {
        for &t in &THETAS {
            let pr = p(t);
            for &(r1, r2) in &[(0.0, 0.0), (1.5, 0.0), (-2.2, 0.7), (4.0, -3.0), (-0.6, 2.34)] {
                let lhs = bt_win_prob(forward_bias_map(r1 - r2, pr).unwrap()).unwrap();
                let rhs = collapsed_win_prob(r1, r2, pr).unwrap();
                assert!((lhs - rhs).abs() < 1e-10, "theta={t} r1={r1} r2={r2}");
            }
        }
    }

    #[test]
    fn inverse_examples() {
        for &t in &THETAS {
            assert_eq!(invert_bias_map(0.0, p(t)).unwrap(), 0.0);
        }
        assert_eq!(invert_bias_map(1.234, p(1.0)).unwrap(), 1.234);
        for &t in &[2.0, 5.0, 10.0] {
            for x in [-3.0, -0.5, 0.7, 2.94] {
                let y = forward_bias_map(x, p(t)).unwrap();
                assert!((invert_bias_map(y, p(t)).unwrap() - x).abs() < 1e-8);
            }
        }
        assert!((invert_bias_map(1.35862, p(2.0)).unwrap() - 1.5).abs() < 1e-3);
    }

    #[test]
    fn ratio_limit_matches_small_argument() {
        // Oracle: difference quotient at 1e-6; the ratio is even with an O(x^2)
        // correction.
        for &t in &[1.0, 2.0, 5.0, 10.0] {
            let pr = p(t);
            let limit = bias_ratio(0.0, pr).unwrap();
            let quotient = bias_term(1e-6, pr).unwrap() / 1e-6;
            assert!((limit - quotient).abs() < 1e-9, "theta={t}: {limit} vs {quotient}");
        }
        assert!((bias_ratio(0.0, p(2.0)).unwrap() + 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for &t in &[1.5, 2.0, 10.0] {
            let pr = p(t);
            for x in [-6.0, -1.0, 0.0, 0.3, 2.94] {
                let h = 1e-5;
                let fd = (bias_term(x + h, pr).unwrap() - bias_term(x - h, pr).unwrap()) / (2.0 * h);
                assert!((bias_term_derivative(x, pr).unwrap() - fd).abs() < 1e-8);
            }
        }
    }

    proptest! {
        #[test]
        fn forward_map_is_odd(x in -40.0f64..40.0, t in 1.0f64..50.0) {
            let pr = p(t);
            let a = forward_bias_map(-x, pr).unwrap();
            let b = forward_bias_map(x, pr).unwrap();
            prop_assert!((a + b).abs() < 1e-12);
        }

        #[test]
        fn bias_strictly_inside_bound(x in -30.0f64..30.0, t in 1.01f64..100.0) {
            let pr = p(t);
            prop_assert!(bias_term(x, pr).unwrap().abs() < bias_bound(pr));
        }

        #[test]
        fn inversion_round_trip(x in -15.0f64..15.0, t in 1.0f64..100.0) {
            let pr = p(t);
            let y = forward_bias_map(x, pr).unwrap();
            prop_assert!((invert_bias_map(y, pr).unwrap() - x).abs() < 1e-8);
        }
    }
}
