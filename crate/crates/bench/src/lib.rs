//! Benchmark fixtures shared by the bench targets.

use mabfdr::{ArmModel, ScenarioConfig};

/// Gaussian arms with a control at zero and a best arm `gap` above the rest.
pub fn gaussian_arms(arms: usize, gap: f64) -> Vec<ArmModel> {
    (0..arms)
        .map(|i| {
            let mean = if i == 1 { gap } else { 0.0 };
            ArmModel::gaussian(mean).expect("finite mean")
        })
        .collect()
}

/// A small Gaussian scenario sized for repeated timing.
pub fn small_scenario(arms: usize, truncation: u64) -> ScenarioConfig {
    ScenarioConfig {
        hypotheses: 50,
        arms,
        truncation: Some(truncation),
        runs: 1,
        seed: 1,
        ..ScenarioConfig::new(mabfdr::Family::Gaussian)
    }
}
