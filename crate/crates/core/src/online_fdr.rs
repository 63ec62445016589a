//! Online FDR procedures that turn a rejection history into test levels.
//!
//! * `Lord`: level `gamma(j - tau) * W(tau)`, where `tau` is the index of the
//!   last rejection and `W(tau)` the wealth right after it. Each test spends
//!   its level and each rejection earns `alpha - W(0)`.
//! * `Lord15`: level `alpha * gamma(j - tau)`; wealth resets to `alpha` on
//!   every rejection.
//! * `Bonferroni`: level `6 alpha / (pi^2 j^2)`, which sums to `alpha`.
//! * `Independent`: every hypothesis tested at `alpha`, no correction.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GAMMA_SCALE: f64 = 0.07;

/// Spending sequence `0.07 ln(max(j, 2)) / (j exp(sqrt(ln j)))`, `j >= 1`.
pub fn gamma(j: u64) -> f64 {
    assert!(j >= 1, "gamma is indexed from 1");
    let jf = j as f64;
    GAMMA_SCALE * jf.max(2.0).ln() / (jf * jf.ln().sqrt().exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FdrKind {
    Lord,
    Lord15,
    Bonferroni,
    Independent,
}

impl FdrKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FdrKind::Lord => "lord",
            FdrKind::Lord15 => "lord15",
            FdrKind::Bonferroni => "bonferroni",
            FdrKind::Independent => "independent",
        }
    }
}

impl fmt::Display for FdrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FdrKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lord" => Ok(FdrKind::Lord),
            "lord15" | "lord'15" | "lord-15" => Ok(FdrKind::Lord15),
            "bonferroni" => Ok(FdrKind::Bonferroni),
            "independent" | "ind" | "none" => Ok(FdrKind::Independent),
            other => Err(Error::config(format!("unknown FDR procedure '{other}'"))),
        }
    }
}

/// Audit view of one processed hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdrSnapshot {
    pub j: u64,
    pub alpha_j: f64,
    pub wealth_after: f64,
    pub last_rejection: u64,
    pub rejected: bool,
}

/// State of an online FDR procedure between hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct FdrState {
    kind: FdrKind,
    alpha: f64,
    w0: f64,
    wealth: f64,
    /// Wealth right after the last rejection (`w0` before any rejection).
    wealth_at_rejection: f64,
    last_rejection: u64,
    j: u64,
    history: Vec<bool>,
}

impl FdrState {
    /// State with the default initial wealth `alpha / 2`.
    pub fn new(kind: FdrKind, alpha: f64) -> Result<Self> {
        Self::with_initial_wealth(kind, alpha, alpha / 2.0)
    }

    /// For `Lord`, `w0` is the initial wealth and must lie in `(0, alpha)`.
    /// `Lord15` starts from wealth `alpha` and ignores `w0` beyond validation.
    pub fn with_initial_wealth(kind: FdrKind, alpha: f64, w0: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::config(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        if matches!(kind, FdrKind::Lord | FdrKind::Lord15) && !(w0 > 0.0 && w0 < alpha) {
            return Err(Error::config(format!(
                "initial wealth must lie in (0, alpha = {alpha}), got {w0}"
            )));
        }
        let start = match kind {
            FdrKind::Lord => w0,
            FdrKind::Lord15 => alpha,
            FdrKind::Bonferroni | FdrKind::Independent => 0.0,
        };
        Ok(Self {
            kind,
            alpha,
            w0,
            wealth: start,
            wealth_at_rejection: start,
            last_rejection: 0,
            j: 1,
            history: Vec::new(),
        })
    }

    pub fn kind(&self) -> FdrKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn initial_wealth(&self) -> f64 {
        self.w0
    }

    pub fn wealth(&self) -> f64 {
        self.wealth
    }

    /// Index of the next hypothesis (1-based).
    pub fn j(&self) -> u64 {
        self.j
    }

    /// Index of the most recent rejection, 0 if none.
    pub fn last_rejection(&self) -> u64 {
        self.last_rejection
    }

    pub fn history(&self) -> &[bool] {
        &self.history
    }

    /// Test level for hypothesis `j()`.
    pub fn next_alpha(&self) -> f64 {
        let since = self.j - self.last_rejection;
        match self.kind {
            FdrKind::Lord => gamma(since) * self.wealth_at_rejection,
            FdrKind::Lord15 => self.alpha * gamma(since),
            FdrKind::Bonferroni => {
                let j = self.j as f64;
                6.0 * self.alpha / (PI * PI * j * j)
            }
            FdrKind::Independent => self.alpha,
        }
    }

    /// Records the decision on hypothesis `j()` and advances to the next one.
    pub fn record(&mut self, rejected: bool) -> Result<FdrSnapshot> {
        let alpha_j = self.next_alpha();
        let j = self.j;
        match self.kind {
            FdrKind::Lord => {
                self.wealth -= alpha_j;
                if rejected {
                    self.wealth += self.alpha - self.w0;
                }
            }
            FdrKind::Lord15 => {
                self.wealth = if rejected {
                    self.alpha
                } else {
                    self.wealth - alpha_j
                };
            }
            FdrKind::Bonferroni | FdrKind::Independent => {}
        }
        if self.wealth < 0.0 {
            return Err(Error::Invariant(format!(
                "{} wealth went negative at j = {j}: {}",
                self.kind, self.wealth
            )));
        }
        if rejected {
            self.last_rejection = j;
            self.wealth_at_rejection = self.wealth;
        }
        self.history.push(rejected);
        self.j += 1;
        Ok(FdrSnapshot {
            j,
            alpha_j,
            wealth_after: self.wealth,
            last_rejection: self.last_rejection,
            rejected,
        })
    }
}
