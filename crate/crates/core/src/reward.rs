//! Arm reward distributions and the seeded streams they are sampled from.
//!
//! Every random quantity in a simulation is drawn from a [`SeededStream`]
//! whose generator is keyed by the scenario seed plus a [`StreamId`]. A given
//! arm of a given hypothesis in a given Monte Carlo run therefore always sees
//! the same reward sequence, no matter how the sampler interleaves pulls or
//! how runs are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Gaussian,
    Bernoulli,
}

/// Reward distribution of a single arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmModel {
    kind: RewardKind,
    mean: f64,
    scale: f64,
}

impl ArmModel {
    /// Unit-variance Gaussian rewards centred on `mean`.
    pub fn gaussian(mean: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::config(format!(
                "gaussian mean must be finite, got {mean}"
            )));
        }
        Ok(Self {
            kind: RewardKind::Gaussian,
            mean,
            scale: 1.0,
        })
    }

    /// Rewards in {0, 1} with success probability `mean`.
    pub fn bernoulli(mean: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mean) {
            return Err(Error::config(format!(
                "bernoulli mean must lie in [0, 1], got {mean}"
            )));
        }
        Ok(Self {
            kind: RewardKind::Bernoulli,
            mean,
            scale: 0.5,
        })
    }

    pub fn new(kind: RewardKind, mean: f64) -> Result<Self> {
        match kind {
            RewardKind::Gaussian => Self::gaussian(mean),
            RewardKind::Bernoulli => Self::bernoulli(mean),
        }
    }

    pub fn kind(&self) -> RewardKind {
        self.kind
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sub-Gaussian scale of the reward distribution.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            RewardKind::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                self.mean + z
            }
            // gen::<f64>() is in [0, 1): mean 0 never succeeds, mean 1 always does.
            RewardKind::Bernoulli => {
                if rng.gen::<f64>() < self.mean {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// What a stream is used for. Part of the key, so reward streams never
/// collide with the streams used for scenario generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    Reward,
    Means,
    Labels,
    NullPValue,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Reward => 0x5245_5741_5244,
            StreamPurpose::Means => 0x004d_4541_4e53,
            StreamPurpose::Labels => 0x4c41_4245_4c53,
            StreamPurpose::NullPValue => 0x004e_554c_4c50,
        }
    }
}

/// Identity of a random stream within one scenario seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub purpose: StreamPurpose,
    pub run: u64,
    pub hypothesis: u64,
    pub arm: u64,
}

impl StreamId {
    pub fn reward(run: u64, hypothesis: u64, arm: u64) -> Self {
        Self {
            purpose: StreamPurpose::Reward,
            run,
            hypothesis,
            arm,
        }
    }

    pub fn new(purpose: StreamPurpose, run: u64, hypothesis: u64, arm: u64) -> Self {
        Self {
            purpose,
            run,
            hypothesis,
            arm,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_key(seed: u64, id: &StreamId) -> [u8; 32] {
    let mut state = seed;
    for word in [id.purpose.tag(), id.run, id.hypothesis, id.arm] {
        state = splitmix64(&mut state) ^ word;
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Deterministic random stream keyed by `(seed, id)`.
///
/// Draws advance an internal position; replaying from a fresh stream with
/// the same key reproduces the sequence exactly.
#[derive(Debug, Clone)]
pub struct SeededStream {
    seed: u64,
    id: StreamId,
    rng: ChaCha8Rng,
}

impl SeededStream {
    pub fn new(seed: u64, id: StreamId) -> Self {
        Self {
            seed,
            id,
            rng: ChaCha8Rng::from_seed(derive_key(seed, &id)),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen()
    }

    /// Uniform draw in [lo, hi].
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// One reward from `model`, advancing `stream`.
pub fn draw(model: &ArmModel, stream: &mut SeededStream) -> f64 {
    model.sample(&mut stream.rng)
}

/// One reward stream per arm for hypothesis `hypothesis` of run `run`.
pub fn arm_streams(seed: u64, run: u64, hypothesis: u64, arms: usize) -> Vec<SeededStream> {
    (0..arms as u64)
        .map(|arm| SeededStream::new(seed, StreamId::reward(run, hypothesis, arm)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(arm: u64) -> SeededStream {
        SeededStream::new(7, StreamId::reward(0, 0, arm))
    }

    #[test]
    fn degenerate_bernoulli() {
        let zero = ArmModel::bernoulli(0.0).unwrap();
        let one = ArmModel::bernoulli(1.0).unwrap();
        let mut s = stream(0);
        for _ in 0..1000 {
            assert_eq!(draw(&zero, &mut s), 0.0);
            assert_eq!(draw(&one, &mut s), 1.0);
        }
    }

    #[test]
    fn bernoulli_rejects_out_of_range_mean() {
        assert!(matches!(ArmModel::bernoulli(1.2), Err(Error::Config(_))));
        assert!(matches!(ArmModel::bernoulli(-0.1), Err(Error::Config(_))));
        assert!(ArmModel::gaussian(f64::NAN).is_err());
    }

    #[test]
    fn gaussian_sample_mean() {
        let model = ArmModel::gaussian(8.0).unwrap();
        let mut s = stream(1);
        let n = 100_000;
        let mean = (0..n).map(|_| draw(&model, &mut s)).sum::<f64>() / n as f64;
        assert!((mean - 8.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn gaussian_mean_within_four_over_root_n() {
        let model = ArmModel::gaussian(0.0).unwrap();
        for seed in 0..20 {
            let mut s = SeededStream::new(seed, StreamId::reward(3, 4, 5));
            let n = 10_000;
            let mean = (0..n).map(|_| draw(&model, &mut s)).sum::<f64>() / n as f64;
            assert!(mean.abs() <= 4.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn replay_is_identical() {
        let model = ArmModel::gaussian(1.5).unwrap();
        let a: Vec<u64> = {
            let mut s = stream(2);
            (0..256).map(|_| draw(&model, &mut s).to_bits()).collect()
        };
        let b: Vec<u64> = {
            let mut s = stream(2);
            (0..256).map(|_| draw(&model, &mut s).to_bits()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_identities_give_distinct_streams() {
        let mut a = SeededStream::new(1, StreamId::reward(0, 0, 0));
        let mut b = SeededStream::new(1, StreamId::reward(0, 0, 1));
        let mut c = SeededStream::new(1, StreamId::reward(1, 0, 0));
        let mut d = SeededStream::new(1, StreamId::new(StreamPurpose::Means, 0, 0, 0));
        let xs: Vec<f64> = (0..4).map(|_| a.uniform()).collect();
        for other in [&mut b, &mut c, &mut d] {
            let ys: Vec<f64> = (0..4).map(|_| other.uniform()).collect();
            assert_ne!(xs, ys);
        }
    }

    #[test]
    fn interleaving_does_not_perturb_streams() {
        let model = ArmModel::gaussian(0.0).unwrap();
        let mut solo = stream(0);
        let expected: Vec<f64> = (0..10).map(|_| draw(&model, &mut solo)).collect();

        let mut s0 = stream(0);
        let mut s1 = stream(1);
        let mut got = Vec::new();
        for _ in 0..10 {
            draw(&model, &mut s1);
            draw(&model, &mut s1);
            got.push(draw(&model, &mut s0));
        }
        assert_eq!(expected, got);
    }
}
