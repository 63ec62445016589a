//! Doubly sequential experimentation: a stream of best-arm bandit
//! experiments, each against a control arm, whose always-valid p-values are
//! tested at levels set by an online false discovery rate procedure.
//!
//! * [`reward`]: arm reward models and seeded, replayable reward streams.
//! * [`confidence`]: anytime deviation bounds.
//! * [`pvalue`]: always-valid p-values from inverted bounds.
//! * [`bestarm`]: LUCB with a control arm, and the round-robin comparator.
//! * [`online_fdr`]: LORD, LORD'15, Bonferroni and uncorrected levels.
//! * [`metrics`]: FDP, mFDR, best-arm discovery rate, gap diagnostics.
//! * [`harness`]: scenario generation and Monte Carlo replication.
//! * [`captions`]: caption-contest input data.
//! * [`audit`]: CSV outputs and replay verification.

pub mod audit;
pub mod bestarm;
pub mod captions;
pub mod confidence;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod online_fdr;
pub mod pvalue;
pub mod reward;

pub use bestarm::{
    check_termination, run_lucb, run_uniform, BanditConfig, BanditOutcome, Termination,
};
pub use confidence::{lcb, phi, ucb, ArmStats};
pub use error::{Error, Result};
pub use harness::{AggregateRow, Family, Method, Scenario, ScenarioConfig};
pub use metrics::{ExperimentRecord, Truth};
pub use online_fdr::{gamma, FdrKind, FdrState};
pub use pvalue::{pvalue_single, PValueState};
pub use reward::{draw, ArmModel, RewardKind, SeededStream, StreamId};
