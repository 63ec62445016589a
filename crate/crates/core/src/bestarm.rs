//! Best-arm identification with a control arm.
//!
//! [`run_lucb`] is the epsilon-precision LUCB sampler: it keeps pulling the
//! empirical leader and its strongest challenger until either the control is
//! separated from every alternative or some alternative is separated from
//! both the field and the control. [`run_uniform`] is the A/B/n comparator
//! that pulls every arm in turn and applies the same stopping rule after
//! each full round. Both keep the always-valid p-value of the experiment up
//! to date as they go.
//!
//! Arm 0 is always the control. Argmax ties go to the lowest index.

use log::trace;

use crate::confidence::{phi_unchecked, ArmStats};
use crate::error::{Error, Result};
use crate::pvalue::PValueState;
use crate::reward::{draw, ArmModel, SeededStream};

/// Settings of one bandit experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BanditConfig {
    /// Confidence level of the bounds (the test level of the experiment).
    pub delta: f64,
    /// Precision slack.
    pub epsilon: f64,
    /// Maximum total pulls; `None` runs until the stopping rule fires.
    pub truncation: Option<u64>,
}

impl BanditConfig {
    pub fn new(delta: f64, epsilon: f64, truncation: Option<u64>) -> Self {
        Self {
            delta,
            epsilon,
            truncation,
        }
    }

    fn validate(&self, arms: usize) -> Result<()> {
        if arms < 2 {
            return Err(Error::config(format!(
                "an experiment needs a control and at least one alternative, got {arms} arms"
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::config(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if let Some(m) = self.truncation {
            if m < arms as u64 {
                return Err(Error::config(format!(
                    "truncation {m} leaves no room to pull all {arms} arms once"
                )));
            }
        }
        Ok(())
    }
}

/// Result of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditOutcome {
    pub returned_arm: usize,
    pub stop_time: u64,
    pub final_pvalue: f64,
    pub pulls_per_arm: Vec<u64>,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ReturnControl,
    ReturnArm(usize),
    Continue,
}

/// Confidence bounds of every arm at the current time.
#[derive(Debug, Clone)]
pub struct Bounds {
    pub means: Vec<f64>,
    pub lcb: Vec<f64>,
    pub ucb: Vec<f64>,
}

impl Bounds {
    pub fn compute(stats: &[ArmStats], delta: f64) -> Result<Self> {
        if stats.len() < 2 {
            return Err(Error::domain(
                "bounds need a control and at least one alternative",
            ));
        }
        let k = (stats.len() - 1) as f64;
        let mut b = Self {
            means: Vec::with_capacity(stats.len()),
            lcb: Vec::with_capacity(stats.len()),
            ucb: Vec::with_capacity(stats.len()),
        };
        for s in stats {
            let mean = s.checked_mean()?;
            b.means.push(mean);
            b.lcb
                .push(mean - phi_unchecked(s.pulls(), delta / (2.0 * k)));
            b.ucb.push(mean + phi_unchecked(s.pulls(), delta / 2.0));
        }
        Ok(b)
    }

    /// Empirical leader over all arms, control included.
    pub fn leader(&self) -> usize {
        argmax(self.means.iter().copied().enumerate())
    }

    /// Highest upper bound among arms other than `leader`.
    pub fn challenger(&self, leader: usize) -> usize {
        argmax(
            self.ucb
                .iter()
                .copied()
                .enumerate()
                .filter(|&(i, _)| i != leader),
        )
    }

    /// Highest upper bound among alternatives.
    pub fn top_alternative_ucb(&self) -> usize {
        argmax(self.ucb.iter().copied().enumerate().skip(1))
    }

    pub fn termination(&self, epsilon: f64) -> Termination {
        let control_lcb = self.lcb[0];
        if self.ucb[1..].iter().all(|&u| control_lcb > u - epsilon) {
            return Termination::ReturnControl;
        }
        let h = self.leader();
        let l = self.challenger(h);
        if self.lcb[h] > self.ucb[l] - epsilon && self.lcb[h] > self.ucb[0] + epsilon {
            Termination::ReturnArm(h)
        } else {
            Termination::Continue
        }
    }
}

/// Lowest index attaining the maximum.
fn argmax(values: impl Iterator<Item = (usize, f64)>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i).unwrap_or(0)
}

/// Stopping rule evaluated on the current arm statistics.
pub fn check_termination(stats: &[ArmStats], delta: f64, epsilon: f64) -> Result<Termination> {
    Ok(Bounds::compute(stats, delta)?.termination(epsilon))
}

struct Experiment<'a> {
    models: &'a [ArmModel],
    streams: &'a mut [SeededStream],
    stats: Vec<ArmStats>,
    changed: Vec<bool>,
    pvalue: PValueState,
    total: u64,
    config: BanditConfig,
}

impl<'a> Experiment<'a> {
    fn new(
        models: &'a [ArmModel],
        config: BanditConfig,
        streams: &'a mut [SeededStream],
    ) -> Result<Self> {
        config.validate(models.len())?;
        if streams.len() != models.len() {
            return Err(Error::config(format!(
                "{} reward streams for {} arms",
                streams.len(),
                models.len()
            )));
        }
        let k = models.len() - 1;
        Ok(Self {
            models,
            streams,
            stats: vec![ArmStats::new(); models.len()],
            changed: vec![true; models.len()],
            pvalue: PValueState::new(k, config.epsilon),
            total: 0,
            config,
        })
    }

    fn exhausted(&self) -> bool {
        self.config.truncation.is_some_and(|m| self.total >= m)
    }

    /// Pulls `arm` once unless the budget is spent.
    fn pull(&mut self, arm: usize) -> bool {
        if self.exhausted() {
            return false;
        }
        let reward = draw(&self.models[arm], &mut self.streams[arm]);
        self.stats[arm].push(reward);
        self.changed[arm] = true;
        self.total += 1;
        true
    }

    fn refresh_pvalue(&mut self) -> Result<()> {
        let control_changed = self.changed[0];
        let changed: Vec<bool> = self.changed[1..]
            .iter()
            .map(|&c| c || control_changed)
            .collect();
        self.pvalue
            .update_changed(&self.stats[1..], &self.stats[0], &changed)?;
        self.changed.iter_mut().for_each(|c| *c = false);
        Ok(())
    }

    fn finish(self, returned_arm: usize, truncated: bool) -> BanditOutcome {
        BanditOutcome {
            returned_arm,
            stop_time: self.total,
            final_pvalue: self.pvalue.current(),
            pulls_per_arm: self.stats.iter().map(ArmStats::pulls).collect(),
            truncated,
        }
    }

    /// Returns the outcome once the stopping rule fires or the budget runs out.
    fn try_stop(&self, bounds: &Bounds) -> Option<(usize, bool)> {
        match bounds.termination(self.config.epsilon) {
            Termination::ReturnControl => Some((0, false)),
            Termination::ReturnArm(h) => Some((h, false)),
            Termination::Continue if self.exhausted() => Some((bounds.leader(), true)),
            Termination::Continue => None,
        }
    }
}

/// Runs the epsilon-LUCB sampler with arm 0 as control.
///
/// `streams[i]` supplies the rewards of `models[i]`. With a finite
/// truncation the run stops after that many total pulls and returns the
/// empirical leader.
pub fn run_lucb(
    models: &[ArmModel],
    config: BanditConfig,
    streams: &mut [SeededStream],
) -> Result<BanditOutcome> {
    let mut exp = Experiment::new(models, config, streams)?;
    for arm in 0..models.len() {
        exp.pull(arm);
    }
    exp.refresh_pvalue()?;

    let mut t: u64 = 1;
    let mut batch = Vec::with_capacity(4);
    loop {
        let bounds = Bounds::compute(&exp.stats, config.delta)?;
        if let Some((arm, truncated)) = exp.try_stop(&bounds) {
            trace!("lucb stop at t = {t}: arm {arm}, truncated = {truncated}");
            return Ok(exp.finish(arm, truncated));
        }
        let h = bounds.leader();
        let l = bounds.challenger(h);
        batch.clear();
        batch.extend([h, l]);
        if config.epsilon > 0.0 {
            batch.extend([0, bounds.top_alternative_ucb()]);
        }
        batch.sort_unstable();
        batch.dedup();
        for &arm in &batch {
            exp.pull(arm);
        }
        exp.refresh_pvalue()?;
        t += 1;
    }
}

/// Runs the round-robin comparator: every arm once per round, stopping rule
/// checked after each round.
pub fn run_uniform(
    models: &[ArmModel],
    config: BanditConfig,
    streams: &mut [SeededStream],
) -> Result<BanditOutcome> {
    let mut exp = Experiment::new(models, config, streams)?;
    loop {
        for arm in 0..models.len() {
            if !exp.pull(arm) {
                break;
            }
        }
        exp.refresh_pvalue()?;
        let bounds = Bounds::compute(&exp.stats, config.delta)?;
        if let Some((arm, truncated)) = exp.try_stop(&bounds) {
            return Ok(exp.finish(arm, truncated));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::arm_streams;

    fn bounds(lcb: &[f64], ucb: &[f64], means: &[f64]) -> Bounds {
        Bounds {
            means: means.to_vec(),
            lcb: lcb.to_vec(),
            ucb: ucb.to_vec(),
        }
    }

    #[test]
    fn control_separated_from_all() {
        let b = bounds(&[0.5, 0.0, 0.1], &[0.9, 0.3, 0.4], &[0.7, 0.15, 0.25]);
        assert_eq!(b.termination(0.0), Termination::ReturnControl);
    }

    #[test]
    fn alternative_separated_with_slack() {
        let b = bounds(&[0.0, 0.2, 0.6], &[0.30, 0.55, 0.9], &[0.15, 0.375, 0.75]);
        assert_eq!(b.leader(), 2);
        assert_eq!(b.challenger(2), 1);
        assert_eq!(b.termination(0.05), Termination::ReturnArm(2));
        // Same geometry without slack.
        assert_eq!(b.termination(0.0), Termination::ReturnArm(2));
        // Slack large enough that the control clause fails.
        assert_eq!(b.termination(0.31), Termination::Continue);
    }

    #[test]
    fn overlapping_bounds_continue() {
        let b = bounds(&[0.0, 0.1, 0.05], &[1.0, 1.1, 1.05], &[0.5, 0.6, 0.55]);
        assert_eq!(b.termination(0.0), Termination::Continue);
    }

    #[test]
    fn control_leader_never_returns_arm() {
        // Leader is the control but it is not separated from arm 1.
        let b = bounds(&[0.5, 0.45, -1.0], &[0.9, 0.95, 0.0], &[0.7, 0.69, -0.5]);
        assert_eq!(b.leader(), 0);
        assert_eq!(b.termination(0.0), Termination::Continue);
    }

    #[test]
    fn argmax_ties_go_to_lowest_index() {
        let b = bounds(&[0.0; 3], &[1.0, 1.0, 1.0], &[0.3, 0.3, 0.3]);
        assert_eq!(b.leader(), 0);
        assert_eq!(b.challenger(0), 1);
        assert_eq!(b.top_alternative_ucb(), 1);
    }

    #[test]
    fn termination_requires_pulled_arms() {
        let stats = vec![ArmStats::with_mean(1, 0.0), ArmStats::new()];
        assert!(matches!(
            check_termination(&stats, 0.1, 0.0),
            Err(Error::Domain(_))
        ));
    }

    fn models(kind: &[f64], bernoulli: bool) -> Vec<ArmModel> {
        kind.iter()
            .map(|&m| {
                if bernoulli {
                    ArmModel::bernoulli(m).unwrap()
                } else {
                    ArmModel::gaussian(m).unwrap()
                }
            })
            .collect()
    }

    #[test]
    fn deterministic_control_wins() {
        let m = models(&[1.0, 0.0], true);
        for run in 0..100 {
            let mut streams = arm_streams(11, run, 0, 2);
            let out = run_lucb(
                &m,
                BanditConfig::new(0.05, 0.0, Some(100_000)),
                &mut streams,
            )
            .unwrap();
            assert_eq!(out.returned_arm, 0);
            assert!(!out.truncated);
            assert_eq!(out.pulls_per_arm.iter().sum::<u64>(), out.stop_time);
        }
    }

    #[test]
    fn identical_arms_truncate() {
        let m = models(&[0.5, 0.5], false);
        let mut streams = arm_streams(3, 0, 0, 2);
        let out = run_lucb(&m, BanditConfig::new(0.05, 0.0, Some(50)), &mut streams).unwrap();
        assert!(out.truncated);
        assert_eq!(out.stop_time, 50);
        assert_eq!(out.pulls_per_arm.iter().sum::<u64>(), 50);
    }

    #[test]
    fn truncation_cuts_batches_in_index_order() {
        let m = models(&[0.5, 0.5, 0.5, 0.5], false);
        for budget in [4u64, 5, 7, 13] {
            let mut streams = arm_streams(5, 0, 0, 4);
            let out =
                run_lucb(&m, BanditConfig::new(0.05, 0.2, Some(budget)), &mut streams).unwrap();
            assert_eq!(out.stop_time, budget);
            assert!(out.pulls_per_arm.iter().all(|&p| p >= 1));
        }
    }

    #[test]
    fn uniform_rounds_are_balanced() {
        let m = models(&[0.5, 0.5, 0.5], false);
        let mut streams = arm_streams(9, 0, 0, 3);
        let out = run_uniform(&m, BanditConfig::new(0.05, 0.0, Some(30)), &mut streams).unwrap();
        assert!(out.truncated);
        assert_eq!(out.pulls_per_arm, vec![10, 10, 10]);

        let mut streams = arm_streams(9, 0, 0, 3);
        let out = run_uniform(&m, BanditConfig::new(0.05, 0.0, Some(31)), &mut streams).unwrap();
        assert_eq!(out.pulls_per_arm, vec![11, 10, 10]);
    }

    #[test]
    fn uniform_separated_returns_control() {
        let m = models(&[1.0, 0.0], true);
        for run in 0..20 {
            let mut streams = arm_streams(2, run, 0, 2);
            let out = run_uniform(&m, BanditConfig::new(0.05, 0.0, None), &mut streams).unwrap();
            assert_eq!(out.returned_arm, 0);
            assert_eq!(out.pulls_per_arm[0], out.pulls_per_arm[1]);
        }
    }

    #[test]
    fn clear_winner_is_found_with_small_pvalue() {
        let m = models(&[0.0, 0.5, 3.0, 1.0], false);
        let mut streams = arm_streams(1, 0, 0, 4);
        let out = run_lucb(&m, BanditConfig::new(0.05, 0.0, None), &mut streams).unwrap();
        assert_eq!(out.returned_arm, 2);
        assert!(out.final_pvalue <= 0.05);
    }

    #[test]
    fn epsilon_branch_also_pulls_control() {
        let m = models(&[0.0, 2.0, 2.05], false);
        let mut streams = arm_streams(4, 0, 0, 3);
        let out = run_lucb(&m, BanditConfig::new(0.05, 0.5, None), &mut streams).unwrap();
        assert!(out.returned_arm == 1 || out.returned_arm == 2);
        assert!(out.pulls_per_arm[0] > 1);
    }

    #[test]
    fn replay_is_deterministic() {
        let m = models(&[0.2, 0.9, 0.4, 0.7], false);
        let run = |seed| {
            let mut streams = arm_streams(seed, 0, 0, 4);
            run_lucb(&m, BanditConfig::new(0.1, 0.0, Some(500)), &mut streams).unwrap()
        };
        assert_eq!(run(17), run(17));
    }

    #[test]
    fn config_validation() {
        let m = models(&[0.0, 1.0], false);
        let mut streams = arm_streams(0, 0, 0, 2);
        assert!(run_lucb(&m, BanditConfig::new(0.0, 0.0, None), &mut streams).is_err());
        assert!(run_lucb(&m, BanditConfig::new(0.1, -1.0, None), &mut streams).is_err());
        assert!(run_lucb(&m, BanditConfig::new(0.1, 0.0, Some(1)), &mut streams).is_err());
        assert!(run_lucb(
            &m[..1],
            BanditConfig::new(0.1, 0.0, None),
            &mut streams[..1]
        )
        .is_err());
        assert!(run_lucb(&m, BanditConfig::new(0.1, 0.0, None), &mut streams[..1]).is_err());
    }
}
