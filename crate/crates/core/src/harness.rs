//! Monte Carlo driver for streams of bandit experiments under online FDR control.
//!
//! A [`Scenario`] fixes the hypothesis sequence (truth labels and arm means)
//! once from the scenario seed; every Monte Carlo run replays that same
//! sequence with fresh reward streams. Within a run, hypotheses are processed
//! strictly in order because each test level depends on earlier decisions.

use std::fmt;
use std::str::FromStr;

use log::{debug, info};
use rand::seq::index::sample;
use rayon::prelude::*;

use crate::bestarm::{run_lucb, run_uniform, BanditConfig, BanditOutcome};
use crate::captions::{caption_pools, CaptionDataset};
use crate::error::{Error, Result};
use crate::metrics::{self, ExperimentRecord, Truth};
use crate::online_fdr::{FdrKind, FdrState};
use crate::reward::{arm_streams, ArmModel, RewardKind, SeededStream, StreamId, StreamPurpose};

/// Smallest confidence level handed to the bandit.
pub const ALPHA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    Bernoulli,
    Caption,
    /// Nulls skip the bandit and draw a uniform p-value; non-nulls are Gaussian.
    UniformNullP,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Bernoulli => "bernoulli",
            Family::Caption => "caption",
            Family::UniformNullP => "uniform-null-p",
        }
    }

    pub fn reward_kind(self) -> RewardKind {
        match self {
            Family::Gaussian | Family::UniformNullP => RewardKind::Gaussian,
            Family::Bernoulli | Family::Caption => RewardKind::Bernoulli,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Family::Gaussian),
            "bernoulli" => Ok(Family::Bernoulli),
            "caption" | "captions" => Ok(Family::Caption),
            "uniform-null-p" | "uniform_null_p" => Ok(Family::UniformNullP),
            other => Err(Error::config(format!("unknown scenario family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// LUCB sampling with online FDR levels.
    MabFdr,
    /// Round-robin sampling with online FDR levels.
    AbFdr,
    /// LUCB sampling, every hypothesis tested at the nominal level.
    MabInd,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::MabFdr => "mab",
            Method::AbFdr => "ab",
            Method::MabInd => "ind",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mab" | "mab-fdr" => Ok(Method::MabFdr),
            "ab" | "ab-fdr" => Ok(Method::AbFdr),
            "ind" | "mab-ind" => Ok(Method::MabInd),
            other => Err(Error::config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub family: Family,
    pub hypotheses: usize,
    pub null_fraction: f64,
    /// Total arms including the control.
    pub arms: usize,
    pub best_mean: f64,
    pub gap: f64,
    pub epsilon: f64,
    pub truncation: Option<u64>,
    pub runs: usize,
    pub seed: u64,
    pub fdr: FdrKind,
    pub method: Method,
    pub alpha: f64,
    /// Initial LORD wealth; `alpha / 2` when unset.
    pub initial_wealth: Option<f64>,
    /// Caption pool size per contest.
    pub top_n: usize,
}

impl ScenarioConfig {
    pub fn new(family: Family) -> Self {
        let (best_mean, gap, hypotheses, truncation) = match family {
            Family::Gaussian | Family::UniformNullP => (8.0, 3.0, 500, Some(300)),
            Family::Bernoulli => (0.4, 0.3, 50, Some(5000)),
            Family::Caption => (0.0, 0.0, 30, Some(130_000)),
        };
        Self {
            family,
            hypotheses,
            null_fraction: 0.6,
            arms: 50,
            best_mean,
            gap,
            epsilon: 0.0,
            truncation,
            runs: 100,
            seed: 0,
            fdr: FdrKind::Lord,
            method: Method::MabFdr,
            alpha: 0.1,
            initial_wealth: None,
            top_n: 10,
        }
    }

    /// The procedure that actually sets the levels: `MabInd` always tests at alpha.
    pub fn effective_fdr(&self) -> FdrKind {
        match self.method {
            Method::MabInd => FdrKind::Independent,
            _ => self.fdr,
        }
    }

    pub fn initial_wealth(&self) -> f64 {
        self.initial_wealth.unwrap_or(self.alpha / 2.0)
    }

    pub fn arm_count(&self) -> usize {
        match self.family {
            Family::Caption => self.top_n,
            _ => self.arms,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.null_fraction) {
            return Err(Error::config(format!(
                "null fraction must lie in [0, 1], got {}",
                self.null_fraction
            )));
        }
        if self.hypotheses == 0 {
            return Err(Error::config("at least one hypothesis is required"));
        }
        if self.runs == 0 {
            return Err(Error::config("at least one run is required"));
        }
        if self.arm_count() < 2 {
            return Err(Error::config(
                "experiments need a control and at least one alternative",
            ));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::config("epsilon must be non-negative"));
        }
        if let Some(m) = self.truncation {
            if m < self.arm_count() as u64 {
                return Err(Error::config(format!(
                    "truncation {m} is smaller than the number of arms {}",
                    self.arm_count()
                )));
            }
        }
        if self.family != Family::Caption {
            if self.gap.is_nan() || self.gap <= 0.0 || self.gap > self.best_mean {
                return Err(Error::config(format!(
                    "gap must lie in (0, best mean = {}], got {}",
                    self.best_mean, self.gap
                )));
            }
            if self.family == Family::Bernoulli && self.best_mean > 1.0 {
                return Err(Error::config(format!(
                    "bernoulli best mean must be at most 1, got {}",
                    self.best_mean
                )));
            }
        }
        FdrState::with_initial_wealth(self.effective_fdr(), self.alpha, self.initial_wealth())?;
        Ok(())
    }

    /// Stable identifier of the scenario for aggregate rows.
    pub fn scenario_id(&self) -> String {
        let m = self
            .truncation
            .map(|m| m.to_string())
            .unwrap_or_else(|| "inf".into());
        format!(
            "{}-arms{}-hyps{}-null{}-m{}-seed{}",
            self.family,
            self.arm_count(),
            self.hypotheses,
            self.null_fraction,
            m,
            self.seed
        )
    }
}

/// One hypothesis of the sequence: its truth label and arm means (control first).
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub truth: Truth,
    pub means: Vec<f64>,
}

impl Hypothesis {
    pub fn control_mean(&self) -> f64 {
        self.means[0]
    }

    /// Best alternative mean.
    pub fn best_mean(&self) -> f64 {
        self.means[1..]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Truth labels with `ceil(null_fraction * count)` nulls at random positions.
pub fn truth_labels(count: usize, null_fraction: f64, seed: u64) -> Vec<Truth> {
    // The small offset keeps products like 0.6 * 50 = 30.000000000000004
    // from rounding up to an extra null.
    let nulls = ((null_fraction * count as f64) - 1e-9).ceil().max(0.0) as usize;
    let nulls = nulls.min(count);
    let mut stream = SeededStream::new(seed, StreamId::new(StreamPurpose::Labels, 0, 0, 0));
    let mut labels = vec![Truth::NonNull; count];
    for i in sample(stream.rng(), count, nulls).into_iter() {
        labels[i] = Truth::Null;
    }
    labels
}

/// Arm means for one synthetic hypothesis.
///
/// Under the alternative one random alternative gets `best_mean`; the other
/// alternatives and the control are uniform on `[0, best_mean - gap]`. Under
/// the null the control gets `best_mean` and all alternatives are uniform on
/// the same range.
pub fn generate_means(
    config: &ScenarioConfig,
    truth: Truth,
    stream: &mut SeededStream,
) -> Result<Vec<f64>> {
    if config.family == Family::Caption {
        return Err(Error::config(
            "caption scenarios take their means from the dataset",
        ));
    }
    if config.family == Family::Bernoulli && config.best_mean > 1.0 {
        return Err(Error::config("bernoulli means must lie in [0, 1]"));
    }
    let arms = config.arms;
    let runner_up = config.best_mean - config.gap;
    let mut means: Vec<f64> = (0..arms)
        .map(|_| stream.uniform_in(0.0, runner_up))
        .collect();
    match truth {
        Truth::Null => means[0] = config.best_mean,
        Truth::NonNull => {
            let winner = 1 + (stream.uniform() * (arms - 1) as f64) as usize;
            means[winner.min(arms - 1)] = config.best_mean;
        }
    }
    Ok(means)
}

/// A fully specified hypothesis sequence, shared by all runs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub hypotheses: Vec<Hypothesis>,
}

impl Scenario {
    /// Draws labels and means for a synthetic family from the scenario seed.
    pub fn generate(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        if config.family == Family::Caption {
            return Err(Error::config(
                "caption scenarios need a dataset (see Scenario::from_captions)",
            ));
        }
        let labels = truth_labels(config.hypotheses, config.null_fraction, config.seed);
        let hypotheses = labels
            .into_iter()
            .enumerate()
            .map(|(idx, truth)| {
                let mut stream = SeededStream::new(
                    config.seed,
                    StreamId::new(StreamPurpose::Means, 0, idx as u64 + 1, 0),
                );
                Ok(Hypothesis {
                    truth,
                    means: generate_means(&config, truth, &mut stream)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, hypotheses })
    }

    /// One hypothesis per usable contest, in contest order, at most
    /// `config.hypotheses` of them.
    ///
    /// Null hypotheses use the best caption of the pool as control; non-nulls
    /// use the worst one.
    pub fn from_captions(mut config: ScenarioConfig, dataset: &CaptionDataset) -> Result<Self> {
        config.family = Family::Caption;
        if config.top_n < 2 {
            return Err(Error::config("caption pools need at least two captions"));
        }
        let mut pools = caption_pools(dataset, config.top_n);
        if pools.is_empty() {
            return Err(Error::data(format!(
                "no contest has at least {} captions",
                config.top_n
            )));
        }
        pools.truncate(config.hypotheses);
        config.hypotheses = pools.len();
        config.arms = config.top_n;
        config.validate()?;
        let labels = truth_labels(pools.len(), config.null_fraction, config.seed);
        let hypotheses = pools
            .into_iter()
            .zip(labels)
            .map(|((_, pool), truth)| {
                // pool is sorted best first
                let control_idx = match truth {
                    Truth::Null => 0,
                    Truth::NonNull => pool.len() - 1,
                };
                let mut means = Vec::with_capacity(pool.len());
                means.push(pool[control_idx]);
                means.extend(
                    pool.iter()
                        .enumerate()
                        .filter(|&(i, _)| i != control_idx)
                        .map(|(_, &m)| m),
                );
                Hypothesis { truth, means }
            })
            .collect();
        Ok(Self { config, hypotheses })
    }

    /// Runs Monte Carlo replicate `run` of the whole hypothesis sequence.
    pub fn run_meta(&self, run: u64) -> Result<Vec<ExperimentRecord>> {
        let cfg = &self.config;
        let mut fdr =
            FdrState::with_initial_wealth(cfg.effective_fdr(), cfg.alpha, cfg.initial_wealth())?;
        let kind = cfg.family.reward_kind();
        let mut records = Vec::with_capacity(self.hypotheses.len());
        for (idx, hyp) in self.hypotheses.iter().enumerate() {
            let j = idx as u64 + 1;
            let alpha_j = fdr.next_alpha();
            let (pvalue, returned_arm, samples, truncated) =
                if cfg.family == Family::UniformNullP && hyp.truth == Truth::Null {
                    let mut s = SeededStream::new(
                        cfg.seed,
                        StreamId::new(StreamPurpose::NullPValue, run, j, 0),
                    );
                    (s.uniform(), None, 0, false)
                } else {
                    let outcome = self.run_bandit(hyp, kind, alpha_j, run, j)?;
                    (
                        outcome.final_pvalue,
                        Some(outcome.returned_arm),
                        outcome.stop_time,
                        outcome.truncated,
                    )
                };
            let rejected = pvalue <= alpha_j && returned_arm != Some(0);
            let snap = fdr.record(rejected)?;
            records.push(ExperimentRecord {
                j,
                truth: hyp.truth,
                alpha_j,
                pvalue,
                rejected,
                returned_arm,
                returned_mean: returned_arm.map(|a| hyp.means[a]),
                control_mean: hyp.control_mean(),
                best_mean: hyp.best_mean(),
                samples,
                truncated,
                wealth_after: snap.wealth_after,
            });
        }
        Ok(records)
    }

    fn run_bandit(
        &self,
        hyp: &Hypothesis,
        kind: RewardKind,
        alpha_j: f64,
        run: u64,
        j: u64,
    ) -> Result<BanditOutcome> {
        let cfg = &self.config;
        let models = hyp
            .means
            .iter()
            .map(|&m| ArmModel::new(kind, m))
            .collect::<Result<Vec<_>>>()?;
        let delta = if alpha_j < ALPHA_FLOOR {
            debug!("run {run}, hypothesis {j}: level {alpha_j:e} floored to {ALPHA_FLOOR:e}");
            ALPHA_FLOOR
        } else {
            alpha_j
        };
        let config = BanditConfig::new(delta, cfg.epsilon, cfg.truncation);
        let mut streams = arm_streams(cfg.seed, run, j, models.len());
        match cfg.method {
            Method::MabFdr | Method::MabInd => run_lucb(&models, config, &mut streams),
            Method::AbFdr => run_uniform(&models, config, &mut streams),
        }
    }

    /// All Monte Carlo runs, ordered by run index regardless of scheduling.
    pub fn run_batch(&self, jobs: usize) -> Result<Vec<Vec<ExperimentRecord>>> {
        info!(
            "running {} x {} hypotheses ({})",
            self.config.runs,
            self.hypotheses.len(),
            self.config.scenario_id()
        );
        let runs = 0..self.config.runs as u64;
        if jobs <= 1 {
            return runs.map(|r| self.run_meta(r)).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::config(format!("cannot start {jobs} worker threads: {e}")))?;
        pool.install(|| runs.into_par_iter().map(|r| self.run_meta(r)).collect())
    }
}

/// One row of the aggregate results table.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: String,
    pub fdr_procedure: String,
    pub scenario_id: String,
    pub hypotheses: usize,
    pub runs: usize,
    pub mfdr: f64,
    pub fdr_mean: f64,
    pub bdr: f64,
    pub mean_samples: f64,
    pub truncation: Option<u64>,
    pub arms: usize,
}

impl AggregateRow {
    /// Metrics over complete runs of `config`'s scenario. `mean_samples` is the
    /// per-run total number of pulls averaged over runs; `bdr` the per-run
    /// best-arm discovery rate averaged over runs.
    pub fn from_runs(config: &ScenarioConfig, runs: &[Vec<ExperimentRecord>]) -> Self {
        let j = runs.iter().map(Vec::len).max().unwrap_or(0);
        let n = runs.len().max(1) as f64;
        Self {
            method: config.method.to_string(),
            fdr_procedure: config.effective_fdr().to_string(),
            scenario_id: config.scenario_id(),
            hypotheses: j,
            runs: runs.len(),
            mfdr: metrics::mfdr_estimate(runs, j),
            fdr_mean: metrics::fdr_estimate(runs, j),
            bdr: runs
                .iter()
                .map(|r| metrics::bdr(r, config.epsilon))
                .sum::<f64>()
                / n,
            mean_samples: runs
                .iter()
                .map(|r| r.iter().map(|rec| rec.samples).sum::<u64>() as f64)
                .sum::<f64>()
                / n,
            truncation: config.truncation,
            arms: config.arm_count(),
        }
    }
}

/// Generates the scenario, runs it and aggregates.
pub fn simulate(
    config: &ScenarioConfig,
    jobs: usize,
) -> Result<(Scenario, Vec<Vec<ExperimentRecord>>, AggregateRow)> {
    let scenario = Scenario::generate(config.clone())?;
    let runs = scenario.run_batch(jobs)?;
    let row = AggregateRow::from_runs(&scenario.config, &runs);
    Ok((scenario, runs, row))
}
