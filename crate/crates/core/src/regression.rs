//! Exact filtered least squares over a finite class.
//!
//! Every filtered sum the learners need reduces to per-cell moments
//! `N = Σ b_ℓ`, `S = Σ b_ℓ r_ℓ`, `Q = Σ b_ℓ r_ℓ²`, where `b_ℓ` is the filter
//! indicator evaluated once, when the record is appended, against its frozen
//! `width_at_play`.

use crate::class::{FunctionClass, InteractionRecord, Mask};
use crate::error::{Error, Result};

/// Which records a regression sees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterSpec {
    All,
    /// `width_at_play ≤ τ`.
    WidthLe(f64),
    /// `lo < width_at_play ≤ hi`.
    WidthIn { lo: f64, hi: f64 },
}

impl FilterSpec {
    #[inline]
    pub fn admits(&self, width: f64) -> bool {
        match *self {
            FilterSpec::All => true,
            FilterSpec::WidthLe(tau) => width <= tau,
            FilterSpec::WidthIn { lo, hi } => lo < width && width <= hi,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CellMoments {
    pub n: u64,
    pub s: f64,
    pub q: f64,
}

/// Per-cell moments of the records admitted by one filter.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    filter: FilterSpec,
    cells: Vec<CellMoments>,
    total: u64,
}

impl CellStats {
    pub fn new(filter: FilterSpec, num_cells: usize) -> Self {
        Self {
            filter,
            cells: vec![CellMoments::default(); num_cells],
            total: 0,
        }
    }

    pub fn from_records(
        class: &FunctionClass,
        filter: FilterSpec,
        records: &[InteractionRecord],
    ) -> Self {
        let mut stats = Self::new(filter, class.num_cells());
        for r in records {
            stats.push(class, r);
        }
        stats
    }

    pub fn filter(&self) -> FilterSpec {
        self.filter
    }

    /// Adds `record` if the filter admits its frozen width. Returns whether it was admitted.
    pub fn push(&mut self, class: &FunctionClass, record: &InteractionRecord) -> bool {
        if !self.filter.admits(record.width_at_play) {
            return false;
        }
        let m = &mut self.cells[class.cell(record.context, record.action)];
        m.n += 1;
        m.s += record.reward;
        m.q += record.reward * record.reward;
        self.total += 1;
        true
    }

    pub fn cell(&self, cell: usize) -> CellMoments {
        self.cells[cell]
    }

    pub fn cells(&self) -> &[CellMoments] {
        &self.cells
    }

    /// Number of admitted records, `Σ b_ℓ`.
    pub fn count(&self) -> u64 {
        self.total
    }

    /// `Σ b_ℓ (f(x_ℓ,a_ℓ) − r_ℓ)²` for one function.
    pub fn squared_loss(&self, class: &FunctionClass, function: usize) -> f64 {
        self.cells
            .iter()
            .zip(class.row(function))
            .filter(|(m, _)| m.n > 0)
            .map(|(m, &f)| m.n as f64 * f * f - 2.0 * f * m.s + m.q)
            .sum()
    }
}

/// Records of one run plus the moment tables for every filter requested so far.
///
/// A table requested late is backfilled from the stored records, which gives
/// the same result as having tracked it from the start because admission
/// only depends on each record's frozen width.
#[derive(Debug, Clone)]
pub struct StatsBank {
    num_cells: usize,
    records: Vec<InteractionRecord>,
    tables: Vec<CellStats>,
}

impl StatsBank {
    pub fn new(class: &FunctionClass) -> Self {
        Self {
            num_cells: class.num_cells(),
            records: Vec::new(),
            tables: Vec::new(),
        }
    }

    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    /// Index of the table for `filter`, creating it on first use.
    pub fn ensure(&mut self, class: &FunctionClass, filter: FilterSpec) -> usize {
        if let Some(i) = self.tables.iter().position(|t| t.filter == filter) {
            return i;
        }
        debug_assert_eq!(self.num_cells, class.num_cells());
        self.tables
            .push(CellStats::from_records(class, filter, &self.records));
        self.tables.len() - 1
    }

    pub fn table(&self, index: usize) -> &CellStats {
        &self.tables[index]
    }

    pub fn push(&mut self, class: &FunctionClass, record: InteractionRecord) {
        for table in &mut self.tables {
            table.push(class, &record);
        }
        self.records.push(record);
    }
}

/// Masked least squares argmin; ties go to the lowest function id.
pub fn least_squares_fit(class: &FunctionClass, mask: &Mask, stats: &CellStats) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for f in mask.iter() {
        let loss = stats.squared_loss(class, f);
        match best {
            Some((_, b)) if loss >= b => {}
            _ => best = Some((f, loss)),
        }
    }
    best.map(|(f, _)| f)
        .ok_or(Error::EmptyMask("least_squares_fit"))
}

/// `Σ b_ℓ (f(x_ℓ,a_ℓ) − g(x_ℓ,a_ℓ))²`.
pub fn filtered_distance(class: &FunctionClass, f: usize, g: usize, stats: &CellStats) -> f64 {
    if f == g {
        return 0.0;
    }
    stats
        .cells
        .iter()
        .zip(class.row(f).iter().zip(class.row(g)))
        .filter(|(m, _)| m.n > 0)
        .map(|(m, (a, b))| {
            let d = a - b;
            m.n as f64 * d * d
        })
        .sum()
}

/// Cumulative variance estimate `W = Σ b_ℓ (r_ℓ − f_fit(x_ℓ,a_ℓ))²`.
pub fn cumulative_variance_estimate(class: &FunctionClass, fit: usize, stats: &CellStats) -> f64 {
    // Q − 2fS + Nf² can round slightly below zero when residuals vanish.
    stats.squared_loss(class, fit).max(0.0)
}

/// One step of the nonincreasing variance upper bound:
/// `σ̂²_t = min(σ̂²_{t−1}, 2W/(t−1) + C·B²·ln(t|F|/δ′)/(t−1))`, with `σ̂²_1 = B²`.
pub fn sigma_hat_update(
    prev: f64,
    w: f64,
    t: usize,
    bound: f64,
    num_functions: usize,
    delta_prime: f64,
    c: f64,
) -> Result<f64> {
    if t < 2 {
        return Err(Error::Precondition(format!(
            "sigma_hat_update needs t >= 2, got {t}"
        )));
    }
    let n = (t - 1) as f64;
    let log = (t as f64 * num_functions as f64 / delta_prime).ln();
    let candidate = 2.0 * w / n + c * bound * bound * log / n;
    Ok(prev.min(candidate))
}

/// Initial value of the variance upper bound, `B²`.
pub fn sigma_hat_initial(bound: f64) -> f64 {
    bound * bound
}
