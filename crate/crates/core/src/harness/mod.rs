//! Reproducible experiment runner.
//!
//! A run owns three independent ChaCha streams derived from its seed
//! (contexts, noise, policy randomization), so switching policies never moves
//! the environment draws. Every round is audited against the evaluation-only
//! ground truth; results serialize to versioned CSV.

pub mod config;
pub mod sweep;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::class::FunctionClass;
use crate::environment::{stream, EnvironmentSpec, NoiseKind, CLASS_STREAM, CONTEXT_STREAM, NOISE_STREAM};
use crate::error::{Error, Result};
use crate::policies::{instant_regret, Learner, PolicyKind};

pub use config::{ClassKind, ClassSource, RunConfig};
pub use sweep::{audit_optimism, run_sweep, CheckpointStats, SweepCell, SweepSummary};

/// First line of every CSV written by the harness.
pub const SCHEMA_LINE: &str = "#schema=1";

pub const STEP_HEADER: &str = "t,context,action,reward,instant_regret,cum_regret,width_at_play,width_sum,set_size,optimism_ok,sigma_hat2,degenerate,level_sizes,radii";

pub const SUMMARY_HEADER: &str = "policy,seed,horizon,cum_regret,width_sum,optimism_violation_rounds,degeneracy_events,invariant_violations,reward_out_of_bounds,final_set_size";

/// Floating slack for the per-step inequality audits.
const AUDIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub t: usize,
    pub context: usize,
    pub action: usize,
    pub reward: f64,
    pub instant_regret: f64,
    pub cum_regret: f64,
    pub width_at_play: f64,
    pub width_sum: f64,
    pub set_size: usize,
    /// The true function was in the acting set this round.
    pub optimism_ok: bool,
    pub sigma_hat2: Option<f64>,
    pub degenerate: bool,
    pub level_sizes: Vec<usize>,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub policy: PolicyKind,
    pub seed: u64,
    pub horizon: usize,
    pub cum_regret: f64,
    pub width_sum: f64,
    /// Rounds with the true function outside the acting set.
    pub optimism_violation_rounds: usize,
    pub degeneracy_events: usize,
    /// Failed per-step assertions (optimism, width domination, nestedness, monotone regret).
    pub invariant_violations: usize,
    /// Rounds with `|r_t| > B`; informational only.
    pub reward_out_of_bounds: usize,
    pub final_set_size: usize,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub rows: Vec<StepRow>,
    pub summary: RunSummary,
    pub class: Arc<FunctionClass>,
    pub truth: usize,
}

impl RunResult {
    /// Zero degeneracy events and zero failed assertions.
    pub fn is_clean(&self) -> bool {
        self.summary.degeneracy_events == 0 && self.summary.invariant_violations == 0
    }

    /// The true function stayed in the acting set for every round.
    pub fn optimism_clean(&self) -> bool {
        self.summary.optimism_violation_rounds == 0
    }

    pub fn cum_regret_at(&self, t: usize) -> f64 {
        self.rows[t - 1].cum_regret
    }

    pub fn steps_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 2));
        out.push_str(SCHEMA_LINE);
        out.push('\n');
        out.push_str(STEP_HEADER);
        out.push('\n');
        for r in &self.rows {
            let sigma = r.sigma_hat2.map(|s| s.to_string()).unwrap_or_default();
            let sizes = join(r.level_sizes.iter());
            let radii = join(r.radii.iter());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.context,
                r.action,
                r.reward,
                r.instant_regret,
                r.cum_regret,
                r.width_at_play,
                r.width_sum,
                r.set_size,
                u8::from(r.optimism_ok),
                sigma,
                u8::from(r.degenerate),
                sizes,
                radii
            );
        }
        out
    }

    pub fn summary_row(&self) -> String {
        let s = &self.summary;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            s.policy,
            s.seed,
            s.horizon,
            s.cum_regret,
            s.width_sum,
            s.optimism_violation_rounds,
            s.degeneracy_events,
            s.invariant_violations,
            s.reward_out_of_bounds,
            s.final_set_size
        )
    }

    pub fn summary_csv(&self) -> String {
        format!("{SCHEMA_LINE}\n{SUMMARY_HEADER}\n{}\n", self.summary_row())
    }

    /// Writes `steps.csv` and `summary.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let steps = dir.join("steps.csv");
        fs::write(&steps, self.steps_csv()).map_err(|e| Error::io(&steps, e))?;
        let summary = dir.join("summary.csv");
        fs::write(&summary, self.summary_csv()).map_err(|e| Error::io(&summary, e))?;
        Ok(())
    }
}

fn join<T: ToString>(items: impl Iterator<Item = T>) -> String {
    items.map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// Loads or generates the class and checks every run-level precondition.
pub fn build_environment(config: &RunConfig) -> Result<EnvironmentSpec> {
    if config.horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    let class = match &config.class {
        ClassSource::File(path) => {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "class file {} does not exist",
                    path.display()
                )));
            }
            FunctionClass::read_from(path)?
        }
        ClassSource::Generated {
            kind,
            num_functions,
            num_contexts,
            num_actions,
            bound,
            seed,
        } => {
            let mut rng = stream(seed.unwrap_or(config.seed), CLASS_STREAM);
            let (nf, nx, na, b) = (*num_functions, *num_contexts, *num_actions, *bound);
            match *kind {
                ClassKind::Uniform => FunctionClass::random_uniform(&mut rng, nf, nx, na, b)?,
                ClassKind::Gapped { min_gap } => {
                    FunctionClass::random_gapped(&mut rng, nf, nx, na, b, config.truth, min_gap)?
                }
                ClassKind::Separated { margin } => {
                    FunctionClass::random_separated(&mut rng, nf, nx, na, b, config.truth, margin)?
                }
            }
        }
    };
    let report = class.validate();
    if !report.is_ok() {
        return Err(Error::InvalidClass(report.to_string()));
    }
    let env = EnvironmentSpec {
        class: Arc::new(class),
        truth: config.truth,
        contexts: config.contexts.clone(),
        noise: config.noise.clone(),
        horizon: config.horizon,
    };
    env.validate()?;
    config.policy_params(env.class.bound()).validate()?;
    if let PolicyKind::SolsKnown { sigma2 } = config.policy {
        let max_var = match env.noise.kind {
            NoiseKind::Zero => 0.0,
            _ => env.noise.schedule.max_sigma(env.horizon).powi(2),
        };
        // Relative slack so that e.g. sigma = 0.2 with sigma2 = 0.04 passes.
        if sigma2 < max_var * (1.0 - 1e-12) {
            return Err(Error::Config(format!(
                "sols_known variance bound {sigma2} is below the environment's max variance {max_var}"
            )));
        }
    }
    Ok(env)
}

/// Runs one replication for exactly `horizon` rounds.
pub fn run_once(config: &RunConfig) -> Result<RunResult> {
    let env = build_environment(config)?;
    run_with_environment(config, &env)
}

/// Runs one replication against an already-built environment.
pub fn run_with_environment(config: &RunConfig, env: &EnvironmentSpec) -> Result<RunResult> {
    let started = Instant::now();
    let class = Arc::clone(&env.class);
    let truth = env.truth;
    let kind = config.policy;
    let mut learner = Learner::new(
        kind,
        Arc::clone(&class),
        config.policy_params(class.bound()),
        config.seed,
    )?;
    let mut context_rng = stream(config.seed, CONTEXT_STREAM);
    let mut noise_rng = stream(config.seed, NOISE_STREAM);

    let mut rows = Vec::with_capacity(env.horizon);
    let mut cum_regret = 0.0;
    let mut width_sum = 0.0;
    let mut optimism_violation_rounds = 0;
    let mut invariant_violations = 0;
    let mut reward_out_of_bounds = 0;
    let mut previous_set = class.full_mask();

    for t in 1..=env.horizon {
        let context = env.sample_context(t, &mut context_rng);
        let decision = learner.policy_step(context)?;
        let acting = learner.acting_set();
        let optimism_ok = acting.contains(truth);
        let (_, best) = class.best_mean(truth, context);
        let regret = instant_regret(&class, truth, context, decision.action);

        if kind.is_optimistic() && optimism_ok {
            if decision.u_values[decision.action] + AUDIT_TOL < best {
                invariant_violations += 1;
            }
            if regret > decision.width_at_play + AUDIT_TOL {
                invariant_violations += 1;
            }
        }
        if kind.is_nested() && !acting.is_subset_of(&previous_set) {
            invariant_violations += 1;
        }
        if !optimism_ok {
            optimism_violation_rounds += 1;
        }
        if regret < 0.0 {
            invariant_violations += 1;
        }
        previous_set = acting.clone();
        let state = learner.state();
        let level_sizes = state.levels().iter().map(|l| l.mask.count()).collect();
        let radii = state.radii();

        let draw = env.sample_reward(t, context, decision.action, &mut noise_rng)?;
        if draw.reward.abs() > class.bound() {
            reward_out_of_bounds += 1;
        }
        learner.observe(&decision, draw.reward, draw.truth_mean, draw.sigma);

        cum_regret += regret;
        width_sum += decision.width_at_play;
        rows.push(StepRow {
            t,
            context,
            action: decision.action,
            reward: draw.reward,
            instant_regret: regret,
            cum_regret,
            width_at_play: decision.width_at_play,
            width_sum,
            set_size: decision.set_size,
            optimism_ok,
            sigma_hat2: learner.sigma_hat2(),
            degenerate: decision.degenerate,
            level_sizes,
            radii,
        });
    }

    let summary = RunSummary {
        policy: kind,
        seed: config.seed,
        horizon: env.horizon,
        cum_regret,
        width_sum,
        optimism_violation_rounds,
        degeneracy_events: learner.state().degenerate_events(),
        invariant_violations,
        reward_out_of_bounds,
        final_set_size: learner.acting_set().count(),
        wall_time: started.elapsed(),
    };
    Ok(RunResult {
        rows,
        summary,
        class,
        truth,
    })
}
