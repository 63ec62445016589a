//! Finite law-of-the-iterated-logarithm deviation bounds.
//!
//! [`phi`] is the anytime deviation radius for the running mean of a
//! sub-Gaussian (scale 1) arm. The confidence level is clamped at
//! [`DELTA_CLAMP`]; for larger levels the radicand can go negative and the
//! anytime guarantee is only stated for the clamped value.

use crate::error::{Error, Result};

/// Confidence levels above this are treated as this value.
pub const DELTA_CLAMP: f64 = 0.1;

/// Pull count and reward sum of one arm.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ArmStats {
    pulls: u64,
    sum: f64,
}

impl ArmStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stats with `pulls` observations averaging `mean`.
    pub fn with_mean(pulls: u64, mean: f64) -> Self {
        Self {
            pulls,
            sum: mean * pulls as f64,
        }
    }

    pub fn push(&mut self, reward: f64) {
        self.pulls += 1;
        self.sum += reward;
    }

    pub fn pulls(&self) -> u64 {
        self.pulls
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    /// Empirical mean, or `None` before the first pull.
    pub fn mean(&self) -> Option<f64> {
        (self.pulls > 0).then(|| self.sum / self.pulls as f64)
    }

    pub(crate) fn checked_mean(&self) -> Result<f64> {
        self.mean()
            .ok_or_else(|| Error::domain("confidence bound requested for an unpulled arm"))
    }
}

/// Deviation radius after `n` samples at confidence `delta`:
///
/// `sqrt((ln(1/d) + 3 ln ln(1/d) + 1.5 ln ln(e n)) / n)` with `d = min(delta, 0.1)`.
pub fn phi(n: u64, delta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("phi requires at least one sample"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!(
            "phi requires delta in (0, 1), got {delta}"
        )));
    }
    Ok(phi_unchecked(n, delta))
}

#[inline]
pub(crate) fn phi_unchecked(n: u64, delta: f64) -> f64 {
    let n = n as f64;
    phi_with_iterated(n, (1.0 + n.ln()).ln(), delta)
}

/// `phi` with `ln(ln(e n)) = ln(1 + ln n)` precomputed; used by the p-value
/// bisection, which evaluates many levels at a fixed `n`.
#[inline]
pub(crate) fn phi_with_iterated(n: f64, ln_ln_en: f64, delta: f64) -> f64 {
    let log_inv = (1.0 / delta.min(DELTA_CLAMP)).ln();
    ((log_inv + 3.0 * log_inv.ln() + 1.5 * ln_ln_en) / n).sqrt()
}

/// Lower bound `mean - phi(n, delta / 2K)`.
pub fn lcb(stats: &ArmStats, delta: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("lcb requires at least one alternative arm"));
    }
    let mean = stats.checked_mean()?;
    Ok(mean - phi(stats.pulls, delta / (2.0 * k as f64))?)
}

/// Upper bound `mean + phi(n, delta / 2)`.
pub fn ucb(stats: &ArmStats, delta: f64) -> Result<f64> {
    let mean = stats.checked_mean()?;
    Ok(mean + phi(stats.pulls, delta / 2.0)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Values from a 40-digit evaluation of the radius formula.
    const PHI_1_010: f64 = 2.191_958_582_806_234;
    const PHI_100_010: f64 = 0.271_849_527_454_070_3;
    const PHI_1_005: f64 = 2.507_448_578_664_942;

    #[test]
    fn phi_reference_values() {
        assert!((phi(1, 0.1).unwrap() - PHI_1_010).abs() < 1e-12);
        assert!((phi(100, 0.1).unwrap() - PHI_100_010).abs() < 1e-12);
        assert!((phi(1, 0.05).unwrap() - PHI_1_005).abs() < 1e-12);
    }

    #[test]
    fn phi_clamps_large_delta() {
        assert_eq!(phi(1, 0.5).unwrap(), phi(1, 0.1).unwrap());
        assert_eq!(phi(37, 0.99).unwrap(), phi(37, 0.1).unwrap());
    }

    #[test]
    fn phi_domain_errors() {
        assert!(matches!(phi(0, 0.05), Err(Error::Domain(_))));
        assert!(phi(1, 0.0).is_err());
        assert!(phi(1, 1.0).is_err());
        assert!(phi(1, f64::NAN).is_err());
    }

    #[test]
    fn phi_strictly_decreasing_in_delta_below_clamp() {
        for n in [1, 10, 1000] {
            let mut prev = f64::INFINITY;
            for i in 1..=1000 {
                let d = 0.1 * i as f64 / 1000.0;
                let v = phi(n, d).unwrap();
                assert!(v < prev);
                prev = v;
            }
        }
    }

    #[test]
    fn phi_decreasing_in_n() {
        let mut prev = f64::INFINITY;
        let mut n = 1u64;
        while n <= 1_000_000 {
            let v = phi(n, 0.05).unwrap();
            assert!(v.is_finite() && v > 0.0);
            assert!(v < prev, "n = {n}");
            prev = v;
            n = if n < 1000 { n + 1 } else { n + 997 };
        }
    }

    #[test]
    fn bounds_at_single_pull() {
        let s = ArmStats::with_mean(1, 0.0);
        assert!((lcb(&s, 0.1, 1).unwrap() + PHI_1_005).abs() < 1e-12);
        assert!((ucb(&s, 0.1).unwrap() - PHI_1_005).abs() < 1e-12);
    }

    #[test]
    fn bounds_bracket_mean_and_shrink() {
        for n in [1u64, 3, 10, 250, 4096] {
            for delta in [0.001, 0.05, 0.3] {
                for k in [1, 5, 50] {
                    let s = ArmStats::with_mean(n, 0.7);
                    let wide = ArmStats::with_mean(4 * n, 0.7);
                    let (lo, hi) = (lcb(&s, delta, k).unwrap(), ucb(&s, delta).unwrap());
                    assert!(lo < 0.7 && 0.7 < hi);
                    assert!(hi - lo > ucb(&wide, delta).unwrap() - lcb(&wide, delta, k).unwrap());
                }
            }
        }
    }

    #[test]
    fn unpulled_arm_is_domain_error() {
        let s = ArmStats::new();
        assert!(matches!(lcb(&s, 0.1, 1), Err(Error::Domain(_))));
        assert!(matches!(ucb(&s, 0.1), Err(Error::Domain(_))));
    }
}
