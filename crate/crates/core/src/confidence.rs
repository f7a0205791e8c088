//! Confidence radii and confidence-set maintenance.
//!
//! Three set families are supported:
//!
//! - a single set recomputed from scratch each round around the unfiltered
//!   least squares fit (radius [`beta_ols`]);
//! - per-threshold sets built from width-filtered regressions at the dyadic
//!   thresholds `τ_i = B/2^i`, `i ∈ {0, …, q_t}`, with a known variance
//!   bound (radius [`beta_known_var`]);
//! - per-band sets built from regressions on the width bands
//!   `(τ_i, τ_{i−1}]`, `i ∈ {1, …, q_t}`, whose radius adapts to the band's
//!   own residual variance (radius [`radius_unknown_var`]).
//!
//! The last two families are intersected with their previous values, so the
//! global set can only shrink. All logarithms are natural.

use crate::class::{FunctionClass, Mask};
use crate::error::{Error, Result};
use crate::regression::{
    cumulative_variance_estimate, filtered_distance, least_squares_fit, CellStats, FilterSpec,
    StatsBank,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusParams {
    pub bound: f64,
    pub delta: f64,
    /// Constant of the unfiltered least squares radius.
    pub c: f64,
    /// Constant of the band radius.
    pub c_prime: f64,
    /// Use the per-round union-bound share `δ/(4(i+1)²t²)` instead of `δ/(2(i+1)²)`.
    pub per_round_union: bool,
}

impl RadiusParams {
    pub fn new(bound: f64, delta: f64) -> Self {
        Self {
            bound,
            delta,
            c: 1.0,
            c_prime: 1.0,
            per_round_union: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bound.is_finite() && self.bound > 0.0) {
            return Err(Error::Config(format!("bound must be positive, got {}", self.bound)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        for (name, v) in [("c", self.c), ("c_prime", self.c_prime)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Same parameters with `δ` replaced.
    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    /// Confidence share for threshold `i` of the known-variance sets at round `t`.
    pub fn threshold_delta(&self, i: usize, t: usize) -> f64 {
        let k = (i + 1) as f64;
        if self.per_round_union {
            self.delta / (4.0 * k * k * (t * t) as f64)
        } else {
            self.delta / (2.0 * k * k)
        }
    }
}

/// `4·C·B²·ln(t|F|/δ)`.
pub fn beta_ols(t: usize, num_functions: usize, params: &RadiusParams) -> f64 {
    let b = params.bound;
    4.0 * params.c * b * b * (t as f64 * num_functions as f64 / params.delta).ln()
}

/// `(4·min(τB, B²) + 16σ̃²)·ln(t|F|/δ̃)`.
pub fn beta_known_var(
    t: usize,
    tau: f64,
    sigma2: f64,
    num_functions: usize,
    delta_tilde: f64,
    bound: f64,
) -> f64 {
    let lead = 4.0 * (tau * bound).min(bound * bound) + 16.0 * sigma2;
    lead * (t as f64 * num_functions as f64 / delta_tilde).ln()
}

/// `C′τ√(W·L) + C′τB·L` with `L = ln(2i²t|F|/δ)`.
pub fn radius_unknown_var(
    t: usize,
    tau: f64,
    w_band: f64,
    num_functions: usize,
    i: usize,
    params: &RadiusParams,
) -> f64 {
    let ii = i as f64;
    let log = (2.0 * ii * ii * t as f64 * num_functions as f64 / params.delta).ln();
    params.c_prime * tau * (w_band * log).sqrt() + params.c_prime * tau * params.bound * log
}

/// Number of active dyadic thresholds, `⌈log₂ t⌉` (zero at `t = 1`).
pub fn active_levels(t: usize) -> usize {
    if t <= 1 {
        0
    } else {
        (usize::BITS - (t - 1).leading_zeros()) as usize
    }
}

/// `τ_i = B/2^i`.
pub fn threshold(bound: f64, i: usize) -> f64 {
    bound / 2f64.powi(i as i32)
}

/// One threshold (or band) level of the confidence state.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub index: usize,
    pub tau: f64,
    pub filter: FilterSpec,
    pub mask: Mask,
    /// Regression fit used at the latest update.
    pub fit: usize,
    /// Radius used at the latest update.
    pub radius: f64,
    /// Residual variance estimate of the band (band levels only).
    pub w: Option<f64>,
}

/// Outcome of one set update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateReport {
    /// The update emptied the global set, which was reset to `{fallback}`.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceState {
    global: Mask,
    levels: Vec<Level>,
    degenerate_events: usize,
    /// Radius of the unfiltered set at the latest update.
    last_radius: Option<f64>,
}

impl ConfidenceState {
    pub fn new(class: &FunctionClass) -> Self {
        Self {
            global: class.full_mask(),
            levels: Vec::new(),
            degenerate_events: 0,
            last_radius: None,
        }
    }

    /// The acting set `G_t`.
    pub fn global(&self) -> &Mask {
        &self.global
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn degenerate_events(&self) -> usize {
        self.degenerate_events
    }

    /// Radii used in the latest update, in level order (a single entry for the unfiltered set).
    pub fn radii(&self) -> Vec<f64> {
        match self.last_radius {
            Some(r) => vec![r],
            None => self.levels.iter().map(|l| l.radius).collect(),
        }
    }

    /// Recomputes `G_t = {f : Σ (f_t − f)² ≤ β_t}` around the unfiltered fit.
    /// The previous set is discarded, not intersected.
    pub fn update_sets_ols(
        &mut self,
        class: &FunctionClass,
        fit: usize,
        stats: &CellStats,
        t: usize,
        params: &RadiusParams,
    ) -> UpdateReport {
        debug_assert_eq!(stats.filter(), FilterSpec::All);
        let radius = beta_ols(t, class.num_functions(), params);
        self.global = ball(class, fit, stats, radius);
        self.last_radius = Some(radius);
        self.settle(fit)
    }

    /// Threshold sets with a known (or estimated) variance bound `sigma2`.
    pub fn update_sets_known_var(
        &mut self,
        class: &FunctionClass,
        bank: &mut StatsBank,
        t: usize,
        sigma2: f64,
        params: &RadiusParams,
    ) -> Result<UpdateReport> {
        let previous = self.global.clone();
        self.grow_levels(class, active_levels(t), 0, |i| {
            FilterSpec::WidthLe(threshold(params.bound, i))
        });
        let nf = class.num_functions();
        for level in &mut self.levels {
            let table = bank.ensure(class, level.filter);
            let stats = bank.table(table);
            let fit = least_squares_fit(class, &previous, stats)?;
            let delta_i = params.threshold_delta(level.index, t);
            let radius = beta_known_var(t, level.tau, sigma2, nf, delta_i, params.bound);
            level.mask.intersect_with(&ball(class, fit, stats, radius));
            level.fit = fit;
            level.radius = radius;
        }
        self.intersect_levels(previous)
    }

    /// Band sets whose radii use each band's residual variance estimate.
    pub fn update_sets_unknown_var(
        &mut self,
        class: &FunctionClass,
        bank: &mut StatsBank,
        t: usize,
        params: &RadiusParams,
    ) -> Result<UpdateReport> {
        let previous = self.global.clone();
        let bound = params.bound;
        self.grow_levels(class, active_levels(t), 1, |i| FilterSpec::WidthIn {
            lo: threshold(bound, i),
            hi: threshold(bound, i - 1),
        });
        let nf = class.num_functions();
        for level in &mut self.levels {
            let table = bank.ensure(class, level.filter);
            let stats = bank.table(table);
            let fit = least_squares_fit(class, &previous, stats)?;
            let w = cumulative_variance_estimate(class, fit, stats);
            let radius = radius_unknown_var(t, level.tau, w, nf, level.index, params);
            level.mask.intersect_with(&ball(class, fit, stats, radius));
            level.fit = fit;
            level.radius = radius;
            level.w = Some(w);
        }
        self.intersect_levels(previous)
    }

    /// Adds levels `first..=last` not yet present, each starting from the current global set.
    fn grow_levels(
        &mut self,
        class: &FunctionClass,
        last: usize,
        first: usize,
        filter: impl Fn(usize) -> FilterSpec,
    ) {
        let start = self.levels.last().map_or(first, |l| l.index + 1);
        let fallback = self.global.first().unwrap_or(0);
        for i in start..=last {
            if i < first {
                continue;
            }
            self.levels.push(Level {
                index: i,
                tau: threshold(class.bound(), i),
                filter: filter(i),
                mask: self.global.clone(),
                fit: fallback,
                radius: 0.0,
                w: None,
            });
        }
    }

    fn intersect_levels(&mut self, previous: Mask) -> Result<UpdateReport> {
        let mut global = previous;
        for level in &self.levels {
            global.intersect_with(&level.mask);
        }
        self.global = global;
        let fallback = match self.levels.first() {
            Some(level) => level.fit,
            // No active level yet: nothing was filtered, so the set is unchanged.
            None => return Ok(UpdateReport::default()),
        };
        let report = self.settle(fallback);
        if report.degenerate {
            for level in &mut self.levels {
                if level.mask.is_empty() {
                    level.mask.insert(fallback);
                }
            }
        }
        Ok(report)
    }

    fn settle(&mut self, fallback: usize) -> UpdateReport {
        if self.global.is_empty() {
            self.global.insert(fallback);
            self.degenerate_events += 1;
            UpdateReport { degenerate: true }
        } else {
            UpdateReport::default()
        }
    }
}

/// `{f ∈ F : Σ b_ℓ (fit − f)² ≤ radius}`.
fn ball(class: &FunctionClass, fit: usize, stats: &CellStats, radius: f64) -> Mask {
    let nf = class.num_functions();
    let mut mask = Mask::empty(nf);
    for f in 0..nf {
        if filtered_distance(class, fit, f, stats) <= radius {
            mask.insert(f);
        }
    }
    mask
}
