//! Sweep grids: `start:stop:step` (inclusive) or a comma-separated list.

use std::fmt;
use std::str::FromStr;

use clap::ValueEnum;
use mabfdr::{Error, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Truncation,
    Arms,
    /// Fraction of non-null hypotheses.
    Pi1,
    NullFraction,
}

impl SweepParam {
    fn integral(self) -> bool {
        matches!(self, SweepParam::Truncation | SweepParam::Arms)
    }

    /// Applies one grid value to a scenario.
    pub fn apply(self, config: &mut ScenarioConfig, value: f64) {
        match self {
            SweepParam::Truncation => config.truncation = Some(value as u64),
            SweepParam::Arms => config.arms = value as usize,
            SweepParam::Pi1 => config.null_fraction = 1.0 - value,
            SweepParam::NullFraction => config.null_fraction = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid(Vec<f64>);

impl Grid {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Checks the values make sense for `param`.
    pub fn check(&self, param: SweepParam) -> Result<(), Error> {
        if self.0.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        for &v in &self.0 {
            let ok = if param.integral() {
                v >= 1.0 && v.fract() == 0.0
            } else {
                (0.0..=1.0).contains(&v)
            };
            if !ok {
                return Err(Error::Config(format!(
                    "grid value {v} is invalid for {param}"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.to_possible_value().expect("no skipped variants");
        f.write_str(name.get_name())
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("'{t}' is not a number"))
        };
        let s = s.trim();
        if s.is_empty() {
            return Ok(Grid(Vec::new()));
        }
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            let [start, stop, step] = parts[..] else {
                return Err("range grids take the form start:stop:step".into());
            };
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if step.is_nan() || step <= 0.0 {
                return Err(format!("grid step must be positive, got {step}"));
            }
            // Index-based so accumulated rounding cannot drop the endpoint.
            let count = ((stop - start) / step + 1e-9).floor();
            let values = if count < 0.0 {
                Vec::new()
            } else {
                (0..=count as usize)
                    .map(|i| {
                        let v = start + i as f64 * step;
                        (v * 1e12).round() / 1e12
                    })
                    .collect()
            };
            return Ok(Grid(values));
        }
        s.split(',').map(num).collect::<Result<_, _>>().map(Grid)
    }
}
