//! Per-round decision logic: optimistic action choice and state advancement.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::class::{argmax_lowest, FunctionClass, InteractionRecord, Mask};
use crate::confidence::{ConfidenceState, RadiusParams, UpdateReport};
use crate::environment::{stream, POLICY_STREAM};
use crate::error::{Error, Result};
use crate::regression::{
    cumulative_variance_estimate, least_squares_fit, sigma_hat_initial, sigma_hat_update,
    FilterSpec, StatsBank,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    /// Optimistic least squares with the unfiltered radius.
    Ols,
    /// Threshold-filtered optimistic least squares with a known variance bound `σ²`.
    SolsKnown { sigma2: f64 },
    /// Threshold-filtered optimistic least squares with the online bound `σ̂²_t`.
    SolsEstimated,
    /// Band-filtered optimistic least squares with data-driven radii.
    SolsUnknown,
    /// Plays the argmax of the unfiltered least squares fit.
    Greedy,
    /// Plays uniformly at random.
    Uniform,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Ols => "ols",
            PolicyKind::SolsKnown { .. } => "sols_known",
            PolicyKind::SolsEstimated => "sols_estimated",
            PolicyKind::SolsUnknown => "sols_unknown",
            PolicyKind::Greedy => "greedy",
            PolicyKind::Uniform => "uniform",
        }
    }

    /// Whether the policy acts optimistically over a confidence set.
    pub fn is_optimistic(&self) -> bool {
        !matches!(self, PolicyKind::Greedy | PolicyKind::Uniform)
    }

    /// Whether the global set only ever shrinks.
    pub fn is_nested(&self) -> bool {
        matches!(
            self,
            PolicyKind::SolsKnown { .. } | PolicyKind::SolsEstimated | PolicyKind::SolsUnknown
        )
    }

    /// Parses a policy name; `sols_known` takes its variance bound from `sigma2`.
    pub fn parse(name: &str, sigma2: Option<f64>) -> Result<Self> {
        match name {
            "ols" => Ok(PolicyKind::Ols),
            "sols_known" => {
                let sigma2 = sigma2.ok_or_else(|| {
                    Error::Config("sols_known needs a variance bound (sigma2 = ...)".into())
                })?;
                if !(sigma2.is_finite() && sigma2 >= 0.0) {
                    return Err(Error::Config(format!("sigma2 must be >= 0, got {sigma2}")));
                }
                Ok(PolicyKind::SolsKnown { sigma2 })
            }
            "sols_estimated" => Ok(PolicyKind::SolsEstimated),
            "sols_unknown" => Ok(PolicyKind::SolsUnknown),
            "greedy" => Ok(PolicyKind::Greedy),
            "uniform" => Ok(PolicyKind::Uniform),
            other => Err(Error::Config(format!("unknown policy {other:?}"))),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::parse(s, None)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyParams {
    pub radius: RadiusParams,
    /// Constant of the variance upper-bound sequence.
    pub c_sigma: f64,
}

impl PolicyParams {
    pub fn new(bound: f64, delta: f64) -> Self {
        Self {
            radius: RadiusParams::new(bound, delta),
            c_sigma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.radius.validate()?;
        if !(self.c_sigma.is_finite() && self.c_sigma > 0.0) {
            return Err(Error::Config(format!(
                "c_sigma must be positive, got {}",
                self.c_sigma
            )));
        }
        Ok(())
    }
}

/// Optimistic values `U(x,a) = max_{f∈G} f(x,a)` per action and their argmax (lowest id on ties).
pub fn select_action(
    class: &FunctionClass,
    mask: &Mask,
    context: usize,
) -> Result<(usize, Vec<f64>)> {
    if mask.is_empty() {
        return Err(Error::EmptyMask("select_action"));
    }
    let u: Vec<f64> = (0..class.num_actions())
        .map(|a| class.masked_max(mask, context, a))
        .collect::<Result<_>>()?;
    let (action, _) = argmax_lowest(u.iter().copied()).expect("at least one action");
    Ok((action, u))
}

/// `max_a f_⋆(x,a) − f_⋆(x,a_t)`.
pub fn instant_regret(class: &FunctionClass, truth: usize, context: usize, action: usize) -> f64 {
    let (_, best) = class.best_mean(truth, context);
    best - class.value(truth, context, action)
}

/// The action chosen at one round plus what the learner knew when choosing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub t: usize,
    pub context: usize,
    pub action: usize,
    /// Optimistic value per action (empty for non-optimistic policies).
    pub u_values: Vec<f64>,
    /// Width of the acting set at `(context, action)`.
    pub width_at_play: f64,
    pub set_size: usize,
    pub degenerate: bool,
}

/// One learner instance, owned by a single run.
#[derive(Debug, Clone)]
pub struct Learner {
    kind: PolicyKind,
    class: Arc<FunctionClass>,
    params: PolicyParams,
    state: ConfidenceState,
    bank: StatsBank,
    all_table: usize,
    sigma_hat2: Option<f64>,
    rng: ChaCha8Rng,
    rounds: usize,
}

impl Learner {
    pub fn new(
        kind: PolicyKind,
        class: Arc<FunctionClass>,
        params: PolicyParams,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        let mut bank = StatsBank::new(&class);
        let all_table = bank.ensure(&class, FilterSpec::All);
        Ok(Self {
            kind,
            state: ConfidenceState::new(&class),
            class,
            params,
            bank,
            all_table,
            sigma_hat2: None,
            rng: stream(seed, POLICY_STREAM),
            rounds: 0,
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    /// Set the learner acts on (`F` for non-optimistic baselines).
    pub fn acting_set(&self) -> &Mask {
        self.state.global()
    }

    pub fn state(&self) -> &ConfidenceState {
        &self.state
    }

    pub fn records(&self) -> &[InteractionRecord] {
        self.bank.records()
    }

    /// Current `σ̂²_t` for the estimated-variance policy.
    pub fn sigma_hat2(&self) -> Option<f64> {
        self.sigma_hat2
    }

    /// Advances the confidence state with data through round `t − 1`, then
    /// chooses an action for `context` at round `t = rounds + 1`.
    pub fn policy_step(&mut self, context: usize) -> Result<Decision> {
        let t = self.rounds + 1;
        let class = Arc::clone(&self.class);
        let radius = self.params.radius;
        let report = match self.kind {
            PolicyKind::Ols => {
                let stats = self.bank.table(self.all_table);
                let fit = least_squares_fit(&class, &class.full_mask(), stats)?;
                self.state.update_sets_ols(&class, fit, stats, t, &radius)
            }
            PolicyKind::SolsKnown { sigma2 } => {
                self.state
                    .update_sets_known_var(&class, &mut self.bank, t, sigma2, &radius)?
            }
            PolicyKind::SolsEstimated => {
                // Half of δ goes to the variance bound, half to the sets.
                let half = radius.delta / 2.0;
                let sigma2 = self.advance_sigma_hat(t, half)?;
                self.state.update_sets_known_var(
                    &class,
                    &mut self.bank,
                    t,
                    sigma2,
                    &radius.with_delta(half),
                )?
            }
            PolicyKind::SolsUnknown => {
                self.state
                    .update_sets_unknown_var(&class, &mut self.bank, t, &radius)?
            }
            PolicyKind::Greedy | PolicyKind::Uniform => UpdateReport::default(),
        };

        let mask = self.state.global();
        let (action, u_values) = match self.kind {
            PolicyKind::Greedy => {
                let stats = self.bank.table(self.all_table);
                let fit = least_squares_fit(&class, &class.full_mask(), stats)?;
                let (a, _) =
                    argmax_lowest((0..class.num_actions()).map(|a| class.value(fit, context, a)))
                        .expect("at least one action");
                (a, Vec::new())
            }
            PolicyKind::Uniform => (self.rng.random_range(0..class.num_actions()), Vec::new()),
            _ => select_action(&class, mask, context)?,
        };
        let width_at_play = class.width(mask, context, action)?;
        Ok(Decision {
            t,
            context,
            action,
            u_values,
            width_at_play,
            set_size: mask.count(),
            degenerate: report.degenerate,
        })
    }

    /// Appends the observed reward for `decision`, freezing its width.
    pub fn observe(
        &mut self,
        decision: &Decision,
        reward: f64,
        truth_mean: f64,
        sigma: f64,
    ) -> InteractionRecord {
        debug_assert_eq!(decision.t, self.rounds + 1);
        let record = InteractionRecord {
            t: decision.t,
            context: decision.context,
            action: decision.action,
            reward,
            width_at_play: decision.width_at_play,
            truth_mean,
            sigma,
        };
        self.bank.push(&self.class, record);
        self.rounds += 1;
        record
    }

    fn advance_sigma_hat(&mut self, t: usize, delta_prime: f64) -> Result<f64> {
        let class = &self.class;
        let next = match self.sigma_hat2 {
            None => sigma_hat_initial(class.bound()),
            Some(prev) => {
                let stats = self.bank.table(self.all_table);
                let fit = least_squares_fit(class, &class.full_mask(), stats)?;
                let w = cumulative_variance_estimate(class, fit, stats);
                sigma_hat_update(
                    prev,
                    w,
                    t,
                    class.bound(),
                    class.num_functions(),
                    delta_prime,
                    self.params.c_sigma,
                )?
            }
        };
        self.sigma_hat2 = Some(next);
        Ok(next)
    }
}
