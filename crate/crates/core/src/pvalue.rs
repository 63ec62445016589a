//! Always-valid p-values obtained by inverting the confidence bounds.
//!
//! The single-arm p-value is the largest level `g` at which the alternative's
//! lower bound (width `phi(n_i, g/2K)`) still sits at or below the control's
//! upper bound (width `phi(n_0, g/2)`) plus `epsilon`. The gap between the
//! two bounds is monotone in `g`, so the admissible levels form an interval
//! starting at zero and bisection finds its right end.
//!
//! The experiment-level p-value is the running minimum over arms and time.

use crate::confidence::{phi_with_iterated, ArmStats};
use crate::error::{Error, Result};

/// Smallest reported p-value.
pub const GAMMA_MIN: f64 = 1e-12;
const BISECTION_STEPS: usize = 60;

#[derive(Clone, Copy)]
struct Side {
    n: f64,
    ln_ln_en: f64,
    mean: f64,
}

impl Side {
    fn new(stats: &ArmStats) -> Result<Self> {
        let mean = stats.checked_mean()?;
        let n = stats.pulls() as f64;
        Ok(Self {
            n,
            ln_ln_en: (1.0 + n.ln()).ln(),
            mean,
        })
    }
}

struct Inversion {
    alt: Side,
    control: Side,
    two_k: f64,
    epsilon: f64,
}

impl Inversion {
    /// Whether level `gamma` is admissible, i.e. LCB_alt <= UCB_control + epsilon.
    #[inline]
    fn holds(&self, gamma: f64) -> bool {
        let lcb =
            self.alt.mean - phi_with_iterated(self.alt.n, self.alt.ln_ln_en, gamma / self.two_k);
        let ucb = self.control.mean
            + phi_with_iterated(self.control.n, self.control.ln_ln_en, gamma / 2.0);
        lcb <= ucb + self.epsilon
    }

    fn solve(&self) -> f64 {
        if self.holds(1.0) {
            return 1.0;
        }
        // The admissible set is never empty for finite stats (the radius
        // diverges as the level goes to zero), so a failure here only means
        // the supremum lies below the reporting floor.
        if !self.holds(GAMMA_MIN) {
            return GAMMA_MIN;
        }
        let (mut lo, mut hi) = (GAMMA_MIN, 1.0);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if self.holds(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::domain(
            "p-value requires at least one alternative arm",
        ));
    }
    Ok(())
}

/// p-value of one alternative against the control.
///
/// Returns the lower end of the final bisection bracket, so the result
/// under-reports the exact supremum by at most the bracket width.
pub fn pvalue_single(alt: &ArmStats, control: &ArmStats, k: usize, epsilon: f64) -> Result<f64> {
    check_k(k)?;
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::domain(format!(
            "epsilon must be non-negative, got {epsilon}"
        )));
    }
    let inv = Inversion {
        alt: Side::new(alt)?,
        control: Side::new(control)?,
        two_k: 2.0 * k as f64,
        epsilon,
    };
    Ok(inv.solve())
}

/// Running-minimum p-value of one experiment.
#[derive(Debug, Clone)]
pub struct PValueState {
    current: f64,
    per_arm_last: Vec<f64>,
    epsilon: f64,
    k: usize,
}

impl PValueState {
    pub fn new(k: usize, epsilon: f64) -> Self {
        Self {
            current: 1.0,
            per_arm_last: vec![1.0; k],
            epsilon,
            k,
        }
    }

    /// Current experiment p-value; 1 before any update.
    pub fn current(&self) -> f64 {
        self.current
    }

    /// Most recent single-arm p-values, indexed by alternative (arm i at i - 1).
    pub fn per_arm_last(&self) -> &[f64] {
        &self.per_arm_last
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Folds the per-arm p-values at the current time into the running minimum.
    /// `alts[i]` holds the stats of arm `i + 1`.
    pub fn update(&mut self, alts: &[ArmStats], control: &ArmStats) -> Result<f64> {
        let all = vec![true; alts.len()];
        self.update_changed(alts, control, &all)
    }

    /// Like [`update`](Self::update) but only re-inverts alternatives flagged in
    /// `changed` (all of them when the control changed). Unchanged arms keep
    /// their last p-value, which is exactly what a full update would recompute.
    pub(crate) fn update_changed(
        &mut self,
        alts: &[ArmStats],
        control: &ArmStats,
        changed: &[bool],
    ) -> Result<f64> {
        if alts.len() != self.k {
            return Err(Error::domain(format!(
                "expected {} alternative arms, got {}",
                self.k,
                alts.len()
            )));
        }
        let control = Side::new(control)?;
        let two_k = 2.0 * self.k as f64;
        for (i, alt) in alts.iter().enumerate() {
            if !changed[i] {
                continue;
            }
            let inv = Inversion {
                alt: Side::new(alt)?,
                control,
                two_k,
                epsilon: self.epsilon,
            };
            let p = inv.solve();
            self.per_arm_last[i] = p;
            self.current = self.current.min(p);
        }
        Ok(self.current)
    }

    /// Folds externally computed single-arm p-values into the running minimum.
    pub fn observe(&mut self, per_arm: &[f64]) {
        for (slot, &p) in self.per_arm_last.iter_mut().zip(per_arm) {
            *slot = p;
            self.current = self.current.min(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence::phi;
    use proptest::prelude::*;

    /// Largest grid level at which the defining inequality holds.
    fn grid_oracle(alt: &ArmStats, control: &ArmStats, k: usize, eps: f64, points: usize) -> f64 {
        let am = alt.mean().unwrap();
        let cm = control.mean().unwrap();
        let mut best = 0.0;
        for i in 1..=points {
            let g = i as f64 / points as f64;
            let lcb = am - phi(alt.pulls(), g / (2.0 * k as f64)).unwrap();
            let ucb = cm + phi(control.pulls(), g / 2.0).unwrap();
            if lcb <= ucb + eps {
                best = g;
            }
        }
        best
    }

    #[test]
    fn identical_arms_give_one() {
        for k in [1, 3, 50] {
            let s = ArmStats::with_mean(25, 0.4);
            assert_eq!(pvalue_single(&s, &s, k, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn separated_arms_reference() {
        // Root of phi(100, g/2) = 1/2 from a 40-digit solve.
        const EXPECTED: f64 = 1.103_050_453_927_082e-6;
        let alt = ArmStats::with_mean(100, 1.0);
        let control = ArmStats::with_mean(100, 0.0);
        let p = pvalue_single(&alt, &control, 1, 0.0).unwrap();
        assert!((p - EXPECTED).abs() < 1e-9, "p = {p}");
        assert!(p <= EXPECTED);
    }

    #[test]
    fn alternative_below_control_gives_one() {
        let alt = ArmStats::with_mean(10, 0.0);
        let control = ArmStats::with_mean(10, 1.0);
        assert_eq!(pvalue_single(&alt, &control, 5, 0.1).unwrap(), 1.0);
    }

    #[test]
    fn huge_separation_floors_at_gamma_min() {
        let alt = ArmStats::with_mean(10_000, 100.0);
        let control = ArmStats::with_mean(10_000, 0.0);
        assert_eq!(pvalue_single(&alt, &control, 1, 0.0).unwrap(), GAMMA_MIN);
    }

    #[test]
    fn unpulled_arm_errors() {
        let s = ArmStats::with_mean(3, 0.0);
        assert!(matches!(
            pvalue_single(&ArmStats::new(), &s, 1, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(pvalue_single(&s, &ArmStats::new(), 1, 0.0).is_err());
        assert!(pvalue_single(&s, &s, 0, 0.0).is_err());
    }

    #[test]
    fn state_starts_at_one_and_tracks_minimum() {
        let mut state = PValueState::new(1, 0.0);
        assert_eq!(state.current(), 1.0);
        for p in [1.0, 0.5, 0.7] {
            state.observe(&[p]);
        }
        assert_eq!(state.current(), 0.5);
        assert_eq!(state.per_arm_last(), &[0.7]);

        let mut two = PValueState::new(2, 0.0);
        two.observe(&[0.3, 0.8]);
        assert!(two.current() <= 0.3);
    }

    #[test]
    fn update_matches_single_arm_minimum() {
        let control = ArmStats::with_mean(40, 0.0);
        let alts = [ArmStats::with_mean(40, 0.9), ArmStats::with_mean(40, 0.2)];
        let mut state = PValueState::new(2, 0.0);
        let p = state.update(&alts, &control).unwrap();
        let expected = alts
            .iter()
            .map(|a| pvalue_single(a, &control, 2, 0.0).unwrap())
            .fold(1.0, f64::min);
        assert_eq!(p, expected);
        assert!(state.update(&alts[..1], &control).is_err());
    }

    #[test]
    fn condition_flips_at_most_once() {
        let cases = [
            (
                ArmStats::with_mean(7, 1.3),
                ArmStats::with_mean(19, 0.1),
                4,
                0.0,
            ),
            (
                ArmStats::with_mean(300, 0.55),
                ArmStats::with_mean(80, 0.2),
                1,
                0.1,
            ),
            (
                ArmStats::with_mean(1, 5.0),
                ArmStats::with_mean(1, 0.0),
                50,
                0.0,
            ),
        ];
        for (alt, control, k, eps) in cases {
            let am = alt.mean().unwrap();
            let cm = control.mean().unwrap();
            let mut flips = 0;
            let mut prev = true;
            for i in 1..=10_000 {
                let g = i as f64 / 10_000.0;
                let holds = am - phi(alt.pulls(), g / (2.0 * k as f64)).unwrap()
                    <= cm + phi(control.pulls(), g / 2.0).unwrap() + eps;
                if holds != prev {
                    flips += 1;
                    assert!(!holds, "condition re-entered at g = {g}");
                }
                prev = holds;
            }
            assert!(flips <= 1);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bisection_agrees_with_grid(
            am in -3.0f64..3.0,
            cm in -3.0f64..3.0,
            na in 1u64..2000,
            nc in 1u64..2000,
            k in 1usize..20,
            eps in prop_oneof![Just(0.0), Just(0.1)],
        ) {
            let alt = ArmStats::with_mean(na, am);
            let control = ArmStats::with_mean(nc, cm);
            let p = pvalue_single(&alt, &control, k, eps).unwrap();
            let g = grid_oracle(&alt, &control, k, eps, 20_000);
            prop_assert!((p - g).abs() <= 1e-4 , "bisection {} grid {}", p, g);
            prop_assert!((GAMMA_MIN..=1.0).contains(&p));
        }

        #[test]
        fn pvalue_monotone_in_separation(
            cm in -1.0f64..1.0,
            gap in 0.0f64..2.0,
            extra in 0.0f64..1.0,
            n in 1u64..500,
        ) {
            let control = ArmStats::with_mean(n, cm);
            let near = pvalue_single(&ArmStats::with_mean(n, cm + gap), &control, 3, 0.0).unwrap();
            let far = pvalue_single(&ArmStats::with_mean(n, cm + gap + extra), &control, 3, 0.0).unwrap();
            prop_assert!(far <= near + 1e-9);
        }
    }
}
