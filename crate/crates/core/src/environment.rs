//! Context arrivals and noisy rewards with a controlled conditional variance.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::class::FunctionClass;
use crate::error::{Error, Result};

/// Stream ids used to split one run seed into independent ChaCha streams.
pub const CONTEXT_STREAM: u64 = 1;
pub const NOISE_STREAM: u64 = 2;
pub const POLICY_STREAM: u64 = 3;
pub const CLASS_STREAM: u64 = 4;

/// Deterministic ChaCha stream for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// `ξ_t ∈ {−σ_t, +σ_t}` with equal probability.
    Rademacher,
    /// Gaussian with scale `σ_t`, rejection-sampled into `[−B, B]`.
    TruncatedGaussian,
    Zero,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rademacher" => Ok(Self::Rademacher),
            "truncated_gaussian" => Ok(Self::TruncatedGaussian),
            "zero" => Ok(Self::Zero),
            other => Err(Error::Config(format!("unknown noise kind {other:?}"))),
        }
    }
}

/// Per-round noise scale `σ_t` (a standard deviation, not a variance).
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaSchedule {
    Constant(f64),
    /// `σ_t = list[t−1]`.
    Listed(Vec<f64>),
    /// `(last_round, σ)` pieces in increasing order; rounds past the final
    /// breakpoint keep the final value.
    Phases(Vec<(usize, f64)>),
}

impl SigmaSchedule {
    pub fn sigma_at(&self, t: usize) -> f64 {
        match self {
            SigmaSchedule::Constant(s) => *s,
            SigmaSchedule::Listed(list) => list[t - 1],
            SigmaSchedule::Phases(phases) => phases
                .iter()
                .find(|(until, _)| t <= *until)
                .or(phases.last())
                .map(|(_, s)| *s)
                .unwrap_or(0.0),
        }
    }

    /// Largest `σ_t` over rounds `1..=horizon`.
    pub fn max_sigma(&self, horizon: usize) -> f64 {
        (1..=horizon)
            .map(|t| self.sigma_at(t))
            .fold(0.0, f64::max)
    }

    fn check(&self, horizon: usize) -> Result<()> {
        match self {
            SigmaSchedule::Listed(list) if list.len() < horizon => {
                return Err(Error::Config(format!(
                    "sigma_list has {} entries but the horizon is {horizon}",
                    list.len()
                )))
            }
            SigmaSchedule::Phases(phases) => {
                if phases.is_empty() {
                    return Err(Error::Config("sigma_phase needs at least one piece".into()));
                }
                if phases.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(Error::Config(
                        "sigma_phase breakpoints must be strictly increasing".into(),
                    ));
                }
            }
            _ => {}
        }
        for t in 1..=horizon {
            let s = self.sigma_at(t);
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(format!("sigma at round {t} is {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub schedule: SigmaSchedule,
}

impl NoiseModel {
    pub fn zero() -> Self {
        Self {
            kind: NoiseKind::Zero,
            schedule: SigmaSchedule::Constant(0.0),
        }
    }

    pub fn rademacher(sigma: f64) -> Self {
        Self {
            kind: NoiseKind::Rademacher,
            schedule: SigmaSchedule::Constant(sigma),
        }
    }

    /// Conditional standard deviation delivered at round `t`.
    pub fn sigma_at(&self, t: usize) -> f64 {
        match self.kind {
            NoiseKind::Zero => 0.0,
            _ => self.schedule.sigma_at(t),
        }
    }

    /// Draws `ξ_t`.
    pub fn draw<R: Rng + ?Sized>(&self, t: usize, bound: f64, rng: &mut R) -> Result<f64> {
        let sigma = self.sigma_at(t);
        match self.kind {
            NoiseKind::Zero => Ok(0.0),
            NoiseKind::Rademacher => {
                if sigma > bound {
                    return Err(Error::Config(format!(
                        "rademacher sigma {sigma} at round {t} exceeds the bound {bound}"
                    )));
                }
                Ok(if rng.random::<bool>() { sigma } else { -sigma })
            }
            NoiseKind::TruncatedGaussian => {
                if sigma == 0.0 {
                    return Ok(0.0);
                }
                let normal = Normal::new(0.0, sigma)
                    .map_err(|e| Error::Config(format!("gaussian sigma {sigma}: {e}")))?;
                loop {
                    let xi: f64 = normal.sample(rng);
                    if xi.abs() <= bound {
                        return Ok(xi);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContextProcess {
    IidUniform,
    /// `x_t = (t − 1) mod |X|`.
    Cycle,
    /// `x_t = list[t − 1]`.
    Listed(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct EnvironmentSpec {
    pub class: Arc<FunctionClass>,
    pub truth: usize,
    pub contexts: ContextProcess,
    pub noise: NoiseModel,
    pub horizon: usize,
}

/// One realized reward with its evaluation-only ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardDraw {
    pub reward: f64,
    pub truth_mean: f64,
    pub sigma: f64,
}

impl EnvironmentSpec {
    pub fn validate(&self) -> Result<()> {
        let class = &self.class;
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.truth >= class.num_functions() {
            return Err(Error::Config(format!(
                "truth_id {} out of range for {} functions",
                self.truth,
                class.num_functions()
            )));
        }
        if let ContextProcess::Listed(list) = &self.contexts {
            if list.len() < self.horizon {
                return Err(Error::Config(format!(
                    "context list has {} entries but the horizon is {}",
                    list.len(),
                    self.horizon
                )));
            }
            if let Some(bad) = list.iter().find(|x| **x >= class.num_contexts()) {
                return Err(Error::Config(format!("context id {bad} out of range")));
            }
        }
        self.noise.schedule.check(self.horizon)?;
        if self.noise.kind == NoiseKind::Rademacher {
            let max = self.noise.schedule.max_sigma(self.horizon);
            if max > class.bound() {
                return Err(Error::Config(format!(
                    "rademacher sigma {max} exceeds the bound {}",
                    class.bound()
                )));
            }
        }
        Ok(())
    }

    pub fn sample_context<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> usize {
        debug_assert!(t >= 1);
        match &self.contexts {
            ContextProcess::IidUniform => rng.random_range(0..self.class.num_contexts()),
            ContextProcess::Cycle => (t - 1) % self.class.num_contexts(),
            ContextProcess::Listed(list) => list[t - 1],
        }
    }

    pub fn sample_reward<R: Rng + ?Sized>(
        &self,
        t: usize,
        context: usize,
        action: usize,
        rng: &mut R,
    ) -> Result<RewardDraw> {
        let truth_mean = self.class.value(self.truth, context, action);
        let xi = self.noise.draw(t, self.class.bound(), rng)?;
        Ok(RewardDraw {
            reward: truth_mean + xi,
            truth_mean,
            sigma: self.noise.sigma_at(t),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(contexts: ContextProcess, noise: NoiseModel) -> EnvironmentSpec {
        let class = FunctionClass::from_rows(
            4,
            1,
            1.0,
            &[vec![0.5, 0.5, 0.5, 0.5], vec![0.1, 0.2, 0.3, 0.4]],
        )
        .unwrap();
        EnvironmentSpec {
            class: Arc::new(class),
            truth: 0,
            contexts,
            noise,
            horizon: 10,
        }
    }

    #[test]
    fn cycle_and_list_contexts() {
        let mut rng = stream(0, CONTEXT_STREAM);
        let mut s = spec(ContextProcess::Cycle, NoiseModel::zero());
        let two = FunctionClass::from_rows(2, 1, 1.0, &[vec![0.0, 0.0]]).unwrap();
        s.class = Arc::new(two);
        assert_eq!(s.sample_context(3, &mut rng), 0);
        assert_eq!(s.sample_context(2, &mut rng), 1);

        let s = spec(ContextProcess::Listed(vec![2, 0]), NoiseModel::zero());
        assert_eq!(s.sample_context(2, &mut rng), 0);
        assert_eq!(s.sample_context(1, &mut rng), 2);
    }

    #[test]
    fn iid_contexts_replay() {
        let s = spec(ContextProcess::IidUniform, NoiseModel::zero());
        let draw = |seed| {
            let mut rng = stream(seed, CONTEXT_STREAM);
            (1..=20)
                .map(|t| s.sample_context(t, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert!(draw(42).iter().all(|x| *x < 4));
    }

    #[test]
    fn zero_noise_returns_mean() {
        let s = spec(ContextProcess::Cycle, NoiseModel::zero());
        let mut rng = stream(0, NOISE_STREAM);
        let d = s.sample_reward(1, 0, 0, &mut rng).unwrap();
        assert_eq!(d.reward, 0.5);
        assert_eq!(d.sigma, 0.0);
    }

    #[test]
    fn rademacher_support() {
        let s = spec(ContextProcess::Cycle, NoiseModel::rademacher(0.1));
        let mut rng = stream(5, NOISE_STREAM);
        for t in 1..=100 {
            let r = s.sample_reward(1 + t % 10, 0, 0, &mut rng).unwrap().reward;
            assert!((r - 0.4).abs() < 1e-12 || (r - 0.6).abs() < 1e-12, "{r}");
        }
    }

    #[test]
    fn rademacher_above_bound_is_config_error() {
        let s = spec(ContextProcess::Cycle, NoiseModel::rademacher(1.5));
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        let mut rng = stream(0, NOISE_STREAM);
        assert!(matches!(
            s.sample_reward(1, 0, 0, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn phases_and_lists() {
        let p = SigmaSchedule::Phases(vec![(3, 0.2), (6, 0.1)]);
        assert_eq!(p.sigma_at(1), 0.2);
        assert_eq!(p.sigma_at(3), 0.2);
        assert_eq!(p.sigma_at(4), 0.1);
        assert_eq!(p.sigma_at(100), 0.1);
        let l = SigmaSchedule::Listed(vec![0.1, 0.0]);
        assert_eq!(l.sigma_at(2), 0.0);
        let mut s = spec(
            ContextProcess::Cycle,
            NoiseModel {
                kind: NoiseKind::Rademacher,
                schedule: l,
            },
        );
        assert!(s.validate().is_err());
        s.horizon = 2;
        assert!(s.validate().is_ok());
    }

    #[test]
    fn truncated_gaussian_stays_in_bounds() {
        let s = spec(
            ContextProcess::Cycle,
            NoiseModel {
                kind: NoiseKind::TruncatedGaussian,
                schedule: SigmaSchedule::Constant(0.8),
            },
        );
        let mut rng = stream(9, NOISE_STREAM);
        for _ in 0..10_000 {
            let d = s.sample_reward(1, 0, 0, &mut rng).unwrap();
            assert!((d.reward - d.truth_mean).abs() <= 1.0);
        }
    }
}
