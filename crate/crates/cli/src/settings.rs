//! Scenario flags shared by `simulate` and `sweep`, and the key=value config
//! file that can supply any of them.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Args;
use mabfdr::{Error, Family, FdrKind, Method, ScenarioConfig};

/// A truncation budget: a pull count or `inf` for no truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget(pub Option<u64>);

impl FromStr for Budget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inf" | "none" => Ok(Budget(None)),
            n => n
                .parse()
                .map(|m| Budget(Some(m)))
                .map_err(|_| format!("expected a pull count or 'inf', got '{n}'")),
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(m) => write!(f, "{m}"),
            None => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    /// Reward family: gaussian, bernoulli, caption or uniform-null-p.
    #[arg(long)]
    pub family: Option<Family>,
    /// Arms per experiment, control included.
    #[arg(long)]
    pub arms: Option<usize>,
    /// Hypotheses (experiments) per run.
    #[arg(long)]
    pub hyps: Option<usize>,
    /// Monte Carlo runs.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Level-setting procedure: lord, lord15, bonferroni or independent.
    #[arg(long)]
    pub fdr: Option<FdrKind>,
    /// Experiment design: mab, ab or ind.
    #[arg(long)]
    pub method: Option<Method>,
    /// Pull budget per experiment, or 'inf'.
    #[arg(long)]
    pub truncation: Option<Budget>,
    #[arg(long, env = "MABFDR_SEED")]
    pub seed: Option<u64>,
    /// Fraction of null hypotheses.
    #[arg(long)]
    pub null_fraction: Option<f64>,
    /// Mean of the best arm under the alternative.
    #[arg(long)]
    pub best_mean: Option<f64>,
    /// Gap between the best arm and the other arms.
    #[arg(long)]
    pub gap: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Initial LORD wealth (defaults to alpha / 2).
    #[arg(long)]
    pub w0: Option<f64>,
    /// Caption data file (caption family only).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Captions per contest used as arms (caption family only).
    #[arg(long)]
    pub top_n: Option<usize>,
    /// key=value file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize, path: &Path) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| {
        Error::Config(format!(
            "{}:{line}: bad value for '{key}': {e}",
            path.display()
        ))
        .into()
    })
}

impl ScenarioArgs {
    /// Reads a config file of `key = value` lines; `#` starts a comment.
    /// Keys are flag names without the leading dashes.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut args = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{lineno}: expected key=value",
                    path.display()
                ))
                .into());
            };
            let (key, value) = (key.trim().replace('_', "-"), value.trim());
            match key.as_str() {
                "family" => args.family = Some(parse_value(&key, value, lineno, path)?),
                "arms" => args.arms = Some(parse_value(&key, value, lineno, path)?),
                "hyps" => args.hyps = Some(parse_value(&key, value, lineno, path)?),
                "runs" => args.runs = Some(parse_value(&key, value, lineno, path)?),
                "alpha" => args.alpha = Some(parse_value(&key, value, lineno, path)?),
                "fdr" => args.fdr = Some(parse_value(&key, value, lineno, path)?),
                "method" => args.method = Some(parse_value(&key, value, lineno, path)?),
                "truncation" => args.truncation = Some(parse_value(&key, value, lineno, path)?),
                "seed" => args.seed = Some(parse_value(&key, value, lineno, path)?),
                "null-fraction" => {
                    args.null_fraction = Some(parse_value(&key, value, lineno, path)?)
                }
                "best-mean" => args.best_mean = Some(parse_value(&key, value, lineno, path)?),
                "gap" => args.gap = Some(parse_value(&key, value, lineno, path)?),
                "epsilon" => args.epsilon = Some(parse_value(&key, value, lineno, path)?),
                "w0" => args.w0 = Some(parse_value(&key, value, lineno, path)?),
                "data" => args.data = Some(PathBuf::from(value)),
                "top-n" => args.top_n = Some(parse_value(&key, value, lineno, path)?),
                other => {
                    return Err(Error::Config(format!(
                        "{}:{lineno}: unknown key '{other}'",
                        path.display()
                    ))
                    .into())
                }
            }
        }
        Ok(args)
    }

    /// Field-wise `self` where set, otherwise `fallback`.
    fn or(self, fallback: Self) -> Self {
        Self {
            family: self.family.or(fallback.family),
            arms: self.arms.or(fallback.arms),
            hyps: self.hyps.or(fallback.hyps),
            runs: self.runs.or(fallback.runs),
            alpha: self.alpha.or(fallback.alpha),
            fdr: self.fdr.or(fallback.fdr),
            method: self.method.or(fallback.method),
            truncation: self.truncation.or(fallback.truncation),
            seed: self.seed.or(fallback.seed),
            null_fraction: self.null_fraction.or(fallback.null_fraction),
            best_mean: self.best_mean.or(fallback.best_mean),
            gap: self.gap.or(fallback.gap),
            epsilon: self.epsilon.or(fallback.epsilon),
            w0: self.w0.or(fallback.w0),
            data: self.data.or(fallback.data),
            top_n: self.top_n.or(fallback.top_n),
            config: self.config,
        }
    }

    /// Resolves flags over the config file over the family defaults.
    pub fn resolve(self) -> Result<Resolved> {
        let merged = match &self.config {
            Some(path) => {
                let file = Self::from_file(path)?;
                self.or(file)
            }
            None => self,
        };
        let family = merged.family.unwrap_or(Family::Gaussian);
        let mut cfg = ScenarioConfig::new(family);
        macro_rules! set {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = merged.$field { cfg.$target = v; })*
            };
        }
        set!(
            arms => arms,
            hyps => hypotheses,
            runs => runs,
            alpha => alpha,
            fdr => fdr,
            method => method,
            seed => seed,
            null_fraction => null_fraction,
            best_mean => best_mean,
            gap => gap,
            epsilon => epsilon,
            top_n => top_n,
        );
        if let Some(Budget(m)) = merged.truncation {
            cfg.truncation = m;
        }
        cfg.initial_wealth = merged.w0;
        match (family, &merged.data) {
            (Family::Caption, None) => {
                bail!(Error::Config("the caption family needs --data".into()))
            }
            (Family::Caption, Some(_)) | (_, None) => {}
            (_, Some(_)) => log::warn!("--data is ignored outside the caption family"),
        }
        Ok(Resolved {
            config: cfg,
            data: merged.data,
        })
    }
}

/// A fully resolved scenario plus the caption file, if any.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ScenarioConfig,
    pub data: Option<PathBuf>,
}

impl Resolved {
    pub fn describe(&self) -> String {
        format!(
            "{} with {} arms, {} hypotheses, {} runs, truncation {}",
            self.config.family,
            self.config.arm_count(),
            self.config.hypotheses,
            self.config.runs,
            Budget(self.config.truncation)
        )
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
}
