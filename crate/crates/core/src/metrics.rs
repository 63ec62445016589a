//! Error and power metrics over a stream of experiments.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    Null,
    NonNull,
}

impl Truth {
    pub fn as_str(self) -> &'static str {
        match self {
            Truth::Null => "null",
            Truth::NonNull => "nonnull",
        }
    }
}

impl fmt::Display for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Truth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "null" => Ok(Truth::Null),
            "nonnull" => Ok(Truth::NonNull),
            other => Err(Error::data(format!("unknown truth label '{other}'"))),
        }
    }
}

/// Audit row for one hypothesis of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub j: u64,
    pub truth: Truth,
    pub alpha_j: f64,
    pub pvalue: f64,
    pub rejected: bool,
    /// Arm returned by the bandit; `None` when the p-value was drawn directly
    /// without running an experiment.
    pub returned_arm: Option<usize>,
    pub returned_mean: Option<f64>,
    pub control_mean: f64,
    pub best_mean: f64,
    pub samples: u64,
    pub truncated: bool,
    pub wealth_after: f64,
}

impl ExperimentRecord {
    /// Whether this record counts towards the epsilon-best-arm discovery rate.
    pub fn is_best_arm_discovery(&self, epsilon: f64) -> bool {
        if !self.rejected || self.truth != Truth::NonNull {
            return false;
        }
        match self.returned_mean {
            Some(m) => m >= self.best_mean - epsilon && m >= self.control_mean + epsilon,
            None => false,
        }
    }
}

/// Anything carrying a truth label and a rejection decision.
pub trait Decision {
    fn truth(&self) -> Truth;
    fn rejected(&self) -> bool;

    fn false_discovery(&self) -> bool {
        self.rejected() && self.truth() == Truth::Null
    }
}

impl Decision for ExperimentRecord {
    fn truth(&self) -> Truth {
        self.truth
    }

    fn rejected(&self) -> bool {
        self.rejected
    }
}

/// False discovery proportion: rejected nulls over `max(1, rejections)`.
pub fn fdp<D: Decision>(records: &[D]) -> f64 {
    let rejected = records.iter().filter(|r| r.rejected()).count();
    let false_rejections = records.iter().filter(|r| r.false_discovery()).count();
    false_rejections as f64 / rejected.max(1) as f64
}

/// FDP after each hypothesis.
pub fn fdp_trajectory<D: Decision>(records: &[D]) -> Vec<f64> {
    let (mut v, mut r) = (0usize, 0usize);
    records
        .iter()
        .map(|rec| {
            r += rec.rejected() as usize;
            v += rec.false_discovery() as usize;
            v as f64 / r.max(1) as f64
        })
        .collect()
}

fn prefix<D>(run: &[D], j: usize) -> &[D] {
    &run[..j.min(run.len())]
}

/// Monte Carlo mFDR over the first `j` hypotheses of each run:
/// mean false rejections over (mean rejections + 1).
pub fn mfdr_estimate<D: Decision>(runs: &[Vec<D>], j: usize) -> f64 {
    if runs.is_empty() {
        return 0.0;
    }
    let n = runs.len() as f64;
    let (mut v, mut r) = (0usize, 0usize);
    for rec in runs.iter().flat_map(|run| prefix(run, j)) {
        r += rec.rejected() as usize;
        v += rec.false_discovery() as usize;
    }
    (v as f64 / n) / (r as f64 / n + 1.0)
}

/// Monte Carlo FDR: mean of the per-run FDP over the first `j` hypotheses.
pub fn fdr_estimate<D: Decision>(runs: &[Vec<D>], j: usize) -> f64 {
    if runs.is_empty() {
        return 0.0;
    }
    runs.iter().map(|run| fdp(prefix(run, j))).sum::<f64>() / runs.len() as f64
}

/// Epsilon-best-arm discovery rate; 0 when there are no non-nulls.
pub fn bdr(records: &[ExperimentRecord], epsilon: f64) -> f64 {
    let non_nulls = records.iter().filter(|r| r.truth == Truth::NonNull).count();
    if non_nulls == 0 {
        return 0.0;
    }
    let hits = records
        .iter()
        .filter(|r| r.is_best_arm_discovery(epsilon))
        .count();
    hits as f64 / non_nulls as f64
}

/// Alternatives that are within `epsilon` of the best alternative and more
/// than `epsilon` above the control. `means[0]` is the control.
pub fn target_set(means: &[f64], epsilon: f64) -> BTreeSet<usize> {
    let Some(best) = means.iter().skip(1).copied().reduce(f64::max) else {
        return BTreeSet::new();
    };
    let control = means[0];
    means
        .iter()
        .enumerate()
        .skip(1)
        .filter(|&(_, &m)| m >= best - epsilon && m > control + epsilon)
        .map(|(i, _)| i)
        .collect()
}

/// Gap structure of one experiment and the sample size it predicts for the
/// LUCB sampler (up to constants).
#[derive(Debug, Clone, PartialEq)]
pub struct GapDiagnostics {
    /// Gap of each arm to the best arm; the best arm's own entry is its gap
    /// to the runner-up.
    pub deltas: Vec<f64>,
    /// Effective gaps when no alternative is epsilon-superior to the control.
    pub effective_gaps_null: Option<Vec<f64>>,
    /// Effective gaps when the target set is non-empty.
    pub effective_gaps_alt: Option<Vec<f64>>,
    pub predicted_complexity: f64,
}

impl GapDiagnostics {
    pub fn new(means: &[f64], epsilon: f64, delta: f64) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::domain("gap diagnostics need at least two arms"));
        }
        let k = means.len() - 1;
        let control = means[0];
        let best_alt = means[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let leader = means.iter().position(|&m| m == best).unwrap_or(0);
        let runner_up = means
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != leader)
            .map(|(_, &m)| m)
            .fold(f64::NEG_INFINITY, f64::max);
        let deltas: Vec<f64> = means
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                if i == leader {
                    best - runner_up
                } else {
                    best - m
                }
            })
            .collect();

        let (null, alt) = if control > best_alt - epsilon {
            let g: Vec<f64> = std::iter::once(control + epsilon - best_alt)
                .chain(means[1..].iter().map(|&m| control + epsilon - m))
                .collect();
            (Some(g), None)
        } else if !target_set(means, epsilon).is_empty() {
            let lift = best_alt - (control + epsilon);
            let g: Vec<f64> = std::iter::once(lift.min(deltas[0].max(epsilon)))
                .chain(deltas[1..].iter().map(|&d| d.max(lift.min(epsilon))))
                .collect();
            (None, Some(g))
        } else {
            (None, None)
        };

        let predicted_complexity = null
            .as_ref()
            .or(alt.as_ref())
            .map(|gaps| {
                gaps.iter()
                    .map(|&g| {
                        let inv_sq = g.powi(-2);
                        // ln ln is clamped at e so the expression stays defined for wide gaps.
                        inv_sq * (k as f64 * inv_sq.max(std::f64::consts::E).ln() / delta).ln()
                    })
                    .sum()
            })
            .unwrap_or(f64::INFINITY);

        Ok(Self {
            deltas,
            effective_gaps_null: null,
            effective_gaps_alt: alt,
            predicted_complexity,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(truth: Truth, rejected: bool) -> ExperimentRecord {
        ExperimentRecord {
            j: 1,
            truth,
            alpha_j: 0.05,
            pvalue: if rejected { 0.01 } else { 0.5 },
            rejected,
            returned_arm: Some(if rejected { 1 } else { 0 }),
            returned_mean: Some(if rejected { 8.0 } else { 3.0 }),
            control_mean: 3.0,
            best_mean: 8.0,
            samples: 10,
            truncated: false,
            wealth_after: 0.05,
        }
    }

    #[test]
    fn fdp_cases() {
        assert_eq!(
            fdp(&[rec(Truth::NonNull, true), rec(Truth::NonNull, true)]),
            0.0
        );
        assert_eq!(
            fdp(&[rec(Truth::Null, true), rec(Truth::NonNull, true)]),
            0.5
        );
        assert_eq!(
            fdp(&[rec(Truth::Null, false), rec(Truth::NonNull, false)]),
            0.0
        );
        assert_eq!(fdp::<ExperimentRecord>(&[]), 0.0);
    }

    #[test]
    fn fdp_is_order_invariant() {
        let mut rs = vec![
            rec(Truth::Null, true),
            rec(Truth::NonNull, true),
            rec(Truth::NonNull, false),
            rec(Truth::NonNull, true),
        ];
        let a = fdp(&rs);
        rs.reverse();
        assert_eq!(fdp(&rs), a);
        assert_eq!(*fdp_trajectory(&rs).last().unwrap(), a);
    }

    #[test]
    fn mfdr_cases() {
        let none = vec![vec![rec(Truth::Null, false)]; 5];
        assert_eq!(mfdr_estimate(&none, 1), 0.0);
        let one_null = vec![vec![rec(Truth::Null, true), rec(Truth::NonNull, false)]; 7];
        assert_eq!(mfdr_estimate(&one_null, 2), 0.5);
        assert_eq!(fdr_estimate(&one_null, 2), 1.0);
        assert_eq!(mfdr_estimate::<ExperimentRecord>(&[], 3), 0.0);
    }

    #[test]
    fn bdr_cases() {
        assert_eq!(bdr(&[rec(Truth::NonNull, true)], 0.0), 1.0);

        let mut marginal = rec(Truth::NonNull, true);
        marginal.returned_mean = Some(marginal.control_mean + 0.05);
        marginal.best_mean = marginal.control_mean + 0.05;
        assert_eq!(bdr(&[marginal], 0.1), 0.0);

        assert_eq!(
            bdr(&[rec(Truth::Null, true), rec(Truth::Null, false)], 0.0),
            0.0
        );
        assert_eq!(
            bdr(
                &[rec(Truth::NonNull, true), rec(Truth::NonNull, false)],
                0.0
            ),
            0.5
        );
    }

    #[test]
    fn target_set_cases() {
        // Arms 1-3 within eps of the best, only 1 and 2 at least eps above control.
        let eps = 0.1;
        let means = [0.62, 0.8, 0.75, 0.71, 0.3];
        assert_eq!(target_set(&means, eps), BTreeSet::from([1, 2]));

        assert_eq!(target_set(&[0.1, 0.5, 0.9, 0.2], 0.0), BTreeSet::from([2]));
        assert!(target_set(&[0.5, 0.55, 0.6], 0.1).is_empty());
        assert!(target_set(&[0.5], 0.0).is_empty());
    }

    #[test]
    fn gap_diagnostics_cases() {
        let null = GapDiagnostics::new(&[8.0, 5.0, 3.0], 0.0, 0.05).unwrap();
        assert_eq!(null.effective_gaps_null, Some(vec![3.0, 3.0, 5.0]));
        assert!(null.effective_gaps_alt.is_none());
        assert_eq!(null.deltas, vec![3.0, 3.0, 5.0]);

        let alt = GapDiagnostics::new(&[2.0, 8.0, 5.0], 0.0, 0.05).unwrap();
        let g = alt.effective_gaps_alt.clone().unwrap();
        assert_eq!(g, vec![6.0, 3.0, 3.0]);
        assert!(g.iter().all(|&x| x > 0.0));

        let narrow = GapDiagnostics::new(&[0.0, 0.5], 0.0, 0.05).unwrap();
        let wide = GapDiagnostics::new(&[0.0, 1.0], 0.0, 0.05).unwrap();
        assert!(narrow.predicted_complexity > 3.0 * wide.predicted_complexity);
        assert!(GapDiagnostics::new(&[1.0], 0.0, 0.05).is_err());
    }
}
