//! Exhaustive ε-dependence and eluder dimension for small tabular classes.
//!
//! A point `z` is ε-dependent on a prefix `z_1..z_n` when every pair `g, g′`
//! with `√Σ (g(z_i) − g′(z_i))² ≤ ε` also has `g(z) − g′(z) ≤ ε`. The
//! non-monotone dimension is the longest sequence whose every element is
//! ε-independent of its predecessors; the eluder dimension maximizes it over
//! `ε′ ≥ ε`.
//!
//! Search state is the vector of accumulated squared discrepancies of every
//! function pair. Appending an independent point adds more than `ε²` to its
//! witness pair, so every step retires at least one pair and the search is
//! finite. States are memoized.

use std::collections::HashMap;
use std::fmt;

use crate::class::{FunctionClass, Mask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DomainPoint {
    pub context: usize,
    pub action: usize,
}

impl fmt::Display for DomainPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(x{}, a{})", self.context, self.action)
    }
}

/// Every `(context, action)` cell of the class, context-major.
pub fn full_domain(class: &FunctionClass) -> Vec<DomainPoint> {
    (0..class.num_contexts())
        .flat_map(|context| {
            (0..class.num_actions()).map(move |action| DomainPoint { context, action })
        })
        .collect()
}

/// Why a point is ε-independent of its prefix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness {
    pub g: usize,
    pub g_prime: usize,
    /// `√Σ_prefix (g − g′)²`, at most ε.
    pub prefix_discrepancy: f64,
    /// `g(z) − g′(z)`, strictly above ε.
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dependence {
    Dependent,
    Independent(Witness),
}

impl Dependence {
    pub fn is_dependent(&self) -> bool {
        matches!(self, Dependence::Dependent)
    }
}

/// Checks ε-dependence of `z` on `prefix` over all ordered pairs in `mask`.
pub fn is_eps_dependent(
    z: DomainPoint,
    prefix: &[DomainPoint],
    class: &FunctionClass,
    mask: &Mask,
    eps: f64,
) -> Dependence {
    debug_assert!(eps > 0.0);
    for g in mask.iter() {
        for g_prime in mask.iter() {
            let gap = class.value(g, z.context, z.action) - class.value(g_prime, z.context, z.action);
            if gap <= eps {
                continue;
            }
            let sq: f64 = prefix
                .iter()
                .map(|p| {
                    let d = class.value(g, p.context, p.action)
                        - class.value(g_prime, p.context, p.action);
                    d * d
                })
                .sum();
            let prefix_discrepancy = sq.sqrt();
            if prefix_discrepancy <= eps {
                return Dependence::Independent(Witness {
                    g,
                    g_prime,
                    prefix_discrepancy,
                    gap,
                });
            }
        }
    }
    Dependence::Dependent
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateEntry {
    pub point: DomainPoint,
    pub witness: Witness,
}

/// A sequence in which every element is ε-independent of its predecessors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EluderCertificate {
    pub eps: f64,
    pub entries: Vec<CertificateEntry>,
}

impl EluderCertificate {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn points(&self) -> Vec<DomainPoint> {
        self.entries.iter().map(|e| e.point).collect()
    }

    /// Replays every element through [`is_eps_dependent`] and checks the stored witnesses.
    pub fn verify(&self, class: &FunctionClass, mask: &Mask) -> bool {
        let points = self.points();
        self.entries.iter().enumerate().all(|(i, entry)| {
            let independent = !is_eps_dependent(entry.point, &points[..i], class, mask, self.eps)
                .is_dependent();
            let w = entry.witness;
            let gap = class.value(w.g, entry.point.context, entry.point.action)
                - class.value(w.g_prime, entry.point.context, entry.point.action);
            let sq: f64 = points[..i]
                .iter()
                .map(|p| {
                    let d = class.value(w.g, p.context, p.action)
                        - class.value(w.g_prime, p.context, p.action);
                    d * d
                })
                .sum();
            independent
                && mask.contains(w.g)
                && mask.contains(w.g_prime)
                && gap > self.eps
                && sq.sqrt() <= self.eps
        })
    }
}

impl fmt::Display for EluderCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.entries.iter().enumerate() {
            writeln!(
                f,
                "{:>3} {} witness (f{}, f{}) gap={} prefix_discrepancy={}",
                i + 1,
                e.point,
                e.witness.g,
                e.witness.g_prime,
                e.witness.gap,
                e.witness.prefix_discrepancy
            )?;
        }
        Ok(())
    }
}

/// Limits for the exhaustive search; exceeding any of them is an explicit refusal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBudget {
    pub max_domain: usize,
    pub max_functions: usize,
    /// Maximum number of distinct search states expanded per `ε`.
    pub max_states: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            max_domain: 12,
            max_functions: 64,
            max_states: 2_000_000,
        }
    }
}

/// Longest sequence of ε-independent points (repetition allowed), with a certificate.
pub fn nonmonotone_eluder_dim(
    class: &FunctionClass,
    mask: &Mask,
    domain: &[DomainPoint],
    eps: f64,
    budget: &SearchBudget,
) -> Result<(usize, EluderCertificate)> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {eps}")));
    }
    check_budget(mask, domain, budget)?;

    let members: Vec<usize> = mask.iter().collect();
    // Gap magnitude of every unordered pair at every domain point; pairs that
    // can never witness independence are dropped.
    let mut gaps: Vec<Vec<f64>> = Vec::new();
    for (i, &g) in members.iter().enumerate() {
        for &h in &members[i + 1..] {
            let row: Vec<f64> = domain
                .iter()
                .map(|p| class.value(g, p.context, p.action) - class.value(h, p.context, p.action))
                .collect();
            if row.iter().any(|d| d.abs() > eps) {
                gaps.push(row);
            }
        }
    }

    let mut search = Search {
        gaps: &gaps,
        eps,
        eps2: eps * eps,
        domain_len: domain.len(),
        memo: HashMap::new(),
        max_states: budget.max_states,
    };
    let start = vec![0.0; gaps.len()];
    let best = search.longest(&start)?;

    // Walk the memoized choices to rebuild one optimal sequence.
    let mut sequence = Vec::with_capacity(best);
    let mut state = start;
    while let Some(&(_, Some(next))) = search.memo.get(&search.key(&state)) {
        sequence.push(domain[next]);
        state = search.advance(&state, next);
    }
    debug_assert_eq!(sequence.len(), best);

    let mut entries = Vec::with_capacity(sequence.len());
    for (i, &point) in sequence.iter().enumerate() {
        match is_eps_dependent(point, &sequence[..i], class, mask, eps) {
            Dependence::Independent(witness) => entries.push(CertificateEntry { point, witness }),
            Dependence::Dependent => {
                return Err(Error::Precondition(format!(
                    "internal: element {i} of the optimal sequence failed replay"
                )))
            }
        }
    }
    Ok((best, EluderCertificate { eps, entries }))
}

/// Result of maximizing the non-monotone dimension over `ε′ ≥ ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct EluderResult {
    pub dimension: usize,
    /// The `ε′` attaining the maximum.
    pub eps_prime: f64,
    pub certificate: EluderCertificate,
    /// Every `ε′` evaluated.
    pub candidates: Vec<f64>,
}

/// Eluder dimension `max_{ε′ ≥ ε} d̄(ε′)`.
///
/// `d̄(ε′)` can only change where `ε′` crosses a pairwise gap, and between two
/// consecutive gaps it is nondecreasing, so evaluating `ε` and every gap
/// `≥ ε` nudged just below itself covers every piece.
pub fn eluder_dim(
    class: &FunctionClass,
    mask: &Mask,
    domain: &[DomainPoint],
    eps: f64,
    budget: &SearchBudget,
) -> Result<EluderResult> {
    check_budget(mask, domain, budget)?;
    let mut candidates = vec![eps];
    let members: Vec<usize> = mask.iter().collect();
    for (i, &g) in members.iter().enumerate() {
        for &h in &members[i + 1..] {
            for p in domain {
                let gap =
                    (class.value(g, p.context, p.action) - class.value(h, p.context, p.action)).abs();
                let nudged = gap * (1.0 - 1e-9);
                if nudged >= eps {
                    candidates.push(nudged);
                }
            }
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite gaps"));
    candidates.dedup();

    let mut best: Option<(usize, f64, EluderCertificate)> = None;
    for &eps_prime in &candidates {
        let (d, cert) = nonmonotone_eluder_dim(class, mask, domain, eps_prime, budget)?;
        if best.as_ref().is_none_or(|(b, _, _)| d > *b) {
            best = Some((d, eps_prime, cert));
        }
    }
    let (dimension, eps_prime, certificate) = best.expect("at least one candidate");
    Ok(EluderResult {
        dimension,
        eps_prime,
        certificate,
        candidates,
    })
}

fn check_budget(mask: &Mask, domain: &[DomainPoint], budget: &SearchBudget) -> Result<()> {
    if domain.len() > budget.max_domain {
        return Err(Error::Budget(format!(
            "domain has {} points, budget allows {}",
            domain.len(),
            budget.max_domain
        )));
    }
    let n = mask.count();
    if n > budget.max_functions {
        return Err(Error::Budget(format!(
            "mask has {n} functions, budget allows {}",
            budget.max_functions
        )));
    }
    Ok(())
}

struct Search<'a> {
    gaps: &'a [Vec<f64>],
    eps: f64,
    eps2: f64,
    domain_len: usize,
    /// State key → (longest continuation, first point of one optimal continuation).
    memo: HashMap<Vec<u64>, (usize, Option<usize>)>,
    max_states: usize,
}

impl Search<'_> {
    /// Retired pairs collapse to a single key value; their exact totals no longer matter.
    fn key(&self, state: &[f64]) -> Vec<u64> {
        state
            .iter()
            .map(|&d| if d > self.eps2 { u64::MAX } else { d.to_bits() })
            .collect()
    }

    fn advance(&self, state: &[f64], point: usize) -> Vec<f64> {
        state
            .iter()
            .zip(self.gaps)
            .map(|(&d, row)| d + row[point] * row[point])
            .collect()
    }

    fn extendable(&self, state: &[f64], point: usize) -> bool {
        state
            .iter()
            .zip(self.gaps)
            .any(|(&d, row)| d <= self.eps2 && row[point].abs() > self.eps)
    }

    fn longest(&mut self, state: &[f64]) -> Result<usize> {
        let key = self.key(state);
        if let Some(&(len, _)) = self.memo.get(&key) {
            return Ok(len);
        }
        if self.memo.len() >= self.max_states {
            return Err(Error::Budget(format!(
                "exhaustive search exceeded {} states",
                self.max_states
            )));
        }
        let mut best = (0, None);
        for point in 0..self.domain_len {
            if !self.extendable(state, point) {
                continue;
            }
            let next = self.advance(state, point);
            let len = 1 + self.longest(&next)?;
            if len > best.0 {
                best = (len, Some(point));
            }
        }
        self.memo.insert(key, best);
        Ok(best.0)
    }
}
