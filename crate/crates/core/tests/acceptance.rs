//! Acceptance suite. Each test prints one `PASS`/`FAIL` line; run with
//! `cargo test --release --test acceptance -- --nocapture --test-threads 1`
//! to see them in order.

use std::fs;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sols::eluder::{eluder_dim, full_domain, DomainPoint, EluderCertificate, SearchBudget};
use sols::environment::{NoiseModel, SigmaSchedule};
use sols::harness::sweep::median;
use sols::harness::{run_sweep, ClassKind, ClassSource, RunConfig, RunResult, SweepSummary};
use sols::regression::{
    cumulative_variance_estimate, filtered_distance, least_squares_fit, CellStats, FilterSpec,
};
use sols::{FunctionClass, InteractionRecord, Mask};

const PAPER_POLICIES: [&str; 4] = ["ols", "sols_known", "sols_estimated", "sols_unknown"];

fn report(name: &str, pass: bool, detail: &str, elapsed: Duration) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("{verdict} {name}: {detail} [{:.1}s]", elapsed.as_secs_f64());
}

fn generated(kind: ClassKind, horizon: usize) -> RunConfig {
    let mut cfg = RunConfig::new(horizon);
    cfg.class = ClassSource::Generated {
        kind,
        num_functions: 20,
        num_contexts: 4,
        num_actions: 5,
        bound: 1.0,
        seed: None,
    };
    cfg
}

fn sweep(cfg: &RunConfig, seeds: std::ops::Range<u64>, policies: &[&str]) -> SweepSummary {
    let seeds: Vec<u64> = seeds.collect();
    let policies: Vec<String> = policies.iter().map(|s| s.to_string()).collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    run_sweep(cfg, &seeds, &policies, threads).expect("sweep runs")
}

// Oracle equivalence

fn brute_loss(class: &FunctionClass, f: usize, filter: FilterSpec, records: &[InteractionRecord]) -> f64 {
    records
        .iter()
        .filter(|r| filter.admits(r.width_at_play))
        .map(|r| {
            let d = r.reward - class.value(f, r.context, r.action);
            d * d
        })
        .sum()
}

fn brute_fit(class: &FunctionClass, mask: &Mask, filter: FilterSpec, records: &[InteractionRecord]) -> usize {
    let mut best = None::<(usize, f64)>;
    for f in 0..class.num_functions() {
        if !mask.contains(f) {
            continue;
        }
        let loss = brute_loss(class, f, filter, records);
        if best.is_none_or(|(_, b)| loss < b) {
            best = Some((f, loss));
        }
    }
    best.unwrap().0
}

fn brute_distance(class: &FunctionClass, f: usize, g: usize, filter: FilterSpec, records: &[InteractionRecord]) -> f64 {
    records
        .iter()
        .filter(|r| filter.admits(r.width_at_play))
        .map(|r| {
            let d = class.value(f, r.context, r.action) - class.value(g, r.context, r.action);
            d * d
        })
        .sum()
}

fn random_filter(rng: &mut ChaCha8Rng) -> FilterSpec {
    let i = rng.random_range(0..4);
    let tau = 1.0 / f64::from(1u32 << rng.random_range(0..5));
    match i {
        0 => FilterSpec::All,
        1 => FilterSpec::WidthLe(tau),
        _ => FilterSpec::WidthIn { lo: tau / 2.0, hi: tau },
    }
}

#[test]
fn oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut id_mismatch, mut worst) = (0usize, 0.0f64);
    for _ in 0..1000 {
        let nf = rng.random_range(1..=50);
        let nx = rng.random_range(1..=5);
        let na = rng.random_range(1..=25 / nx);
        let bound = rng.random_range(0.5..2.0);
        let class = FunctionClass::random_uniform(&mut rng, nf, nx, na, bound).unwrap();
        let t = rng.random_range(0..=200);
        let records: Vec<InteractionRecord> = (1..=t)
            .map(|t| {
                let context = rng.random_range(0..nx);
                let action = rng.random_range(0..na);
                // Widths on the dyadic grid exercise the filter boundaries.
                let width = if rng.random_bool(0.3) {
                    1.0 / f64::from(1u32 << rng.random_range(0..5))
                } else {
                    rng.random_range(0.0..1.0)
                };
                InteractionRecord {
                    t,
                    context,
                    action,
                    reward: rng.random_range(-2.0 * bound..2.0 * bound),
                    width_at_play: width,
                    truth_mean: 0.0,
                    sigma: 0.0,
                }
            })
            .collect();
        let filter = random_filter(&mut rng);
        let stats = CellStats::from_records(&class, filter, &records);
        let mut mask = Mask::from_bits((0..nf).map(|_| rng.random_bool(0.6)).collect());
        if mask.is_empty() {
            mask.insert(rng.random_range(0..nf));
        }

        let fit = least_squares_fit(&class, &mask, &stats).unwrap();
        if fit != brute_fit(&class, &mask, filter, &records) {
            id_mismatch += 1;
        }
        let w = cumulative_variance_estimate(&class, fit, &stats);
        worst = worst.max((w - brute_loss(&class, fit, filter, &records)).abs());
        for _ in 0..5 {
            let (f, g) = (rng.random_range(0..nf), rng.random_range(0..nf));
            let d = filtered_distance(&class, f, g, &stats);
            worst = worst.max((d - brute_distance(&class, f, g, filter, &records)).abs());
        }
    }
    let elapsed = started.elapsed();
    let pass = id_mismatch == 0 && worst <= 1e-9 && elapsed < Duration::from_secs(30);
    report(
        "oracle_equivalence",
        pass,
        &format!("1000 histories, fit id mismatches {id_mismatch}, max real error {worst:e} (tol 1e-9)"),
        elapsed,
    );
    assert!(pass);
}

// Coverage, plateau and second-order suites share traces with the domination check.

fn coverage_suite() -> &'static (SweepSummary, Duration) {
    static SUITE: OnceLock<(SweepSummary, Duration)> = OnceLock::new();
    SUITE.get_or_init(|| {
        let mut cfg = generated(ClassKind::Uniform, 1000);
        cfg.noise = NoiseModel::rademacher(0.1);
        cfg.sigma2 = Some(0.01);
        let started = Instant::now();
        let s = sweep(&cfg, 0..200, &PAPER_POLICIES);
        (s, started.elapsed())
    })
}

fn second_order_suite() -> &'static (SweepSummary, Duration) {
    static SUITE: OnceLock<(SweepSummary, Duration)> = OnceLock::new();
    SUITE.get_or_init(|| {
        let mut cfg = generated(ClassKind::Gapped { min_gap: 0.2 }, 2000);
        cfg.noise = NoiseModel::rademacher(0.05);
        cfg.sigma2 = Some(0.0025);
        let started = Instant::now();
        let s = sweep(&cfg, 0..30, &["ols", "sols_estimated", "sols_unknown"]);
        (s, started.elapsed())
    })
}

fn plateau_suite() -> &'static (SweepSummary, Duration) {
    static SUITE: OnceLock<(SweepSummary, Duration)> = OnceLock::new();
    SUITE.get_or_init(|| {
        let mut cfg = generated(ClassKind::Separated { margin: 0.3 }, 2000);
        cfg.noise = NoiseModel::zero();
        cfg.sigma2 = Some(0.0);
        let started = Instant::now();
        let s = sweep(&cfg, 0..10, &PAPER_POLICIES);
        (s, started.elapsed())
    })
}

#[test]
fn optimism_coverage() {
    let (suite, elapsed) = coverage_suite();
    assert_eq!(suite.failures(), 0, "every replication must run");
    let mut pass = *elapsed < Duration::from_secs(300);
    let mut detail = Vec::new();
    for p in PAPER_POLICIES {
        let runs: Vec<&RunResult> = suite.results().filter(|r| r.summary.policy.name() == p).collect();
        let covered = runs.iter().filter(|r| r.optimism_clean()).count() as f64 / runs.len() as f64;
        let degenerate: usize = runs.iter().map(|r| r.summary.degeneracy_events).sum();
        pass &= runs.len() == 200 && covered >= 0.90 && degenerate == 0;
        detail.push(format!("{p} coverage {covered} degeneracy {degenerate}"));
    }
    report("optimism_coverage", pass, &format!("{} (need >= 0.9, 0)", detail.join("; ")), *elapsed);
    assert!(pass);
}

// Variance-estimator sandwich

#[test]
fn variance_sandwich() {
    let started = Instant::now();
    let delta_tilde = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut held = 0usize;
    let histories = 500;
    for h in 0..histories {
        let mut cfg = generated(ClassKind::Uniform, rng.random_range(50..=400));
        cfg.seed = h;
        cfg.policy = sols::PolicyKind::SolsEstimated;
        let phases = vec![
            (cfg.horizon / 3, rng.random_range(0.0..1.0)),
            (2 * cfg.horizon / 3, rng.random_range(0.0..1.0)),
            (cfg.horizon, rng.random_range(0.0..1.0)),
        ];
        cfg.noise = NoiseModel {
            kind: sols::environment::NoiseKind::Rademacher,
            schedule: SigmaSchedule::Phases(phases),
        };
        let result = sols::harness::run_once(&cfg).unwrap();
        let class = &result.class;
        let records: Vec<InteractionRecord> = result
            .rows
            .iter()
            .map(|r| InteractionRecord {
                t: r.t,
                context: r.context,
                action: r.action,
                reward: r.reward,
                width_at_play: r.width_at_play,
                truth_mean: class.value(result.truth, r.context, r.action),
                sigma: cfg.noise.sigma_at(r.t),
            })
            .collect();
        let filter = random_filter(&mut rng);
        let stats = CellStats::from_records(class, filter, &records);
        let fit = least_squares_fit(class, &class.full_mask(), &stats).unwrap();
        let w = cumulative_variance_estimate(class, fit, &stats);
        let truth: f64 = records
            .iter()
            .filter(|r| filter.admits(r.width_at_play))
            .map(|r| r.sigma * r.sigma)
            .sum();
        let b2 = class.bound().powi(2);
        let log = (4.0 * class.num_functions() as f64 / delta_tilde).ln();
        if 2.0 / 3.0 * w - 11.0 * b2 * log <= truth && truth <= 2.0 * w + 48.0 * b2 * log {
            held += 1;
        }
    }
    let frac = held as f64 / histories as f64;
    let pass = frac >= 1.0 - delta_tilde;
    report(
        "variance_sandwich",
        pass,
        &format!("inequality held in {held}/{histories} histories ({frac}, need >= 0.9)"),
        started.elapsed(),
    );
    assert!(pass);
}

// Second-order improvement

#[test]
fn second_order_improvement() {
    let (suite, elapsed) = second_order_suite();
    assert_eq!(suite.failures(), 0, "every replication must run");
    let med = |p: &str| {
        let mut v: Vec<f64> = suite
            .results()
            .filter(|r| r.summary.policy.name() == p)
            .map(|r| r.summary.cum_regret)
            .collect();
        assert_eq!(v.len(), 30);
        median(&mut v)
    };
    let ols = med("ols");
    let unknown = med("sols_unknown");
    let estimated = med("sols_estimated");
    let pass = unknown <= 0.6 * ols && estimated <= 0.6 * ols && *elapsed < Duration::from_secs(600);
    report(
        "second_order_improvement",
        pass,
        &format!(
            "median regret at T=2000: ols {ols:.3}, sols_unknown {unknown:.3} (ratio {:.3}), sols_estimated {estimated:.3} (ratio {:.3}); need both ratios <= 0.6",
            unknown / ols,
            estimated / ols
        ),
        *elapsed,
    );
    assert!(pass);
}

// Zero-variance plateau

#[test]
fn zero_variance_plateau() {
    let (suite, elapsed) = plateau_suite();
    assert_eq!(suite.failures(), 0, "every replication must run");
    let mut late = Vec::new();
    for r in suite.results() {
        if r.cum_regret_at(2000) != r.cum_regret_at(500) {
            late.push(format!("{}-seed{}", r.summary.policy, r.summary.seed));
        }
    }
    let runs = suite.results().count();
    let pass = late.is_empty() && runs == 40;
    report(
        "zero_variance_plateau",
        pass,
        &format!("{runs} runs, regret changed after t=500 in {late:?}"),
        *elapsed,
    );
    assert!(pass);
}

// Eluder oracle values

/// Independent replay: every certified point is ε-independent of its prefix.
fn replay(cert: &EluderCertificate, class: &FunctionClass) -> bool {
    let points: Vec<DomainPoint> = cert.entries.iter().map(|e| e.point).collect();
    points.iter().enumerate().all(|(i, z)| {
        let nf = class.num_functions();
        (0..nf).any(|g| {
            (0..nf).any(|h| {
                let gap = class.value(g, z.context, z.action) - class.value(h, z.context, z.action);
                let prefix: f64 = points[..i]
                    .iter()
                    .map(|p| (class.value(g, p.context, p.action) - class.value(h, p.context, p.action)).powi(2))
                    .sum();
                gap > cert.eps && prefix.sqrt() <= cert.eps
            })
        })
    })
}

#[test]
fn eluder_oracle_values() {
    let started = Instant::now();
    let mut rows: Vec<Vec<f64>> = (0..5)
        .map(|i| (0..5).map(|a| if a == i { 1.0 } else { 0.0 }).collect())
        .collect();
    rows.push(vec![0.0; 5]);
    let indicators = FunctionClass::from_rows(1, 5, 1.0, &rows).unwrap();
    let constants = FunctionClass::from_rows(1, 3, 1.0, &[vec![0.0; 3], vec![1.0; 3]]).unwrap();

    let budget = SearchBudget::default();
    let cases = [
        ("indicators eps=0.5", &indicators, 0.5, 5),
        ("two constants eps=0.5", &constants, 0.5, 1),
        ("two constants eps=1.5", &constants, 1.5, 0),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, class, eps, expected) in cases {
        let mask = class.full_mask();
        let r = eluder_dim(class, &mask, &full_domain(class), eps, &budget).unwrap();
        let ok = r.dimension == expected
            && r.certificate.len() == expected
            && r.certificate.verify(class, &mask)
            && replay(&r.certificate, class);
        pass &= ok;
        detail.push(format!("{name}: {} (want {expected})", r.dimension));
    }
    let elapsed = started.elapsed();
    pass &= elapsed < Duration::from_secs(10);
    report("eluder_oracle_values", pass, &detail.join("; "), elapsed);
    assert!(pass);
}

// Determinism

#[test]
fn determinism() {
    let started = Instant::now();
    let mut pass = true;
    for p in PAPER_POLICIES.iter().chain(&["greedy", "uniform"]) {
        let mut cfg = generated(ClassKind::Uniform, 300);
        cfg.noise = NoiseModel::rademacher(0.1);
        cfg.sigma2 = Some(0.01);
        let cfg = cfg.with_policy(p).unwrap().with_seed(42);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        sols::harness::run_once(&cfg).unwrap().write_to(a.path()).unwrap();
        sols::harness::run_once(&cfg).unwrap().write_to(b.path()).unwrap();
        for f in ["steps.csv", "summary.csv"] {
            pass &= fs::read(a.path().join(f)).unwrap() == fs::read(b.path().join(f)).unwrap();
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    fs::write(
        &config,
        "horizon = 200\nseed = 9\npolicy = sols_unknown\nnoise = rademacher\nsigma = 0.2\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for out in ["one", "two"] {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_sols"))
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .output()
            .unwrap();
        pass &= status.status.code() == Some(0);
        outputs.push(fs::read(dir.path().join(out).join("steps.csv")).unwrap());
    }
    pass &= outputs[0] == outputs[1];
    report(
        "determinism",
        pass,
        "six policies via the library and one via the CLI, repeated runs byte-identical",
        started.elapsed(),
    );
    assert!(pass);
}

// Width/regret domination

#[test]
fn width_regret_domination() {
    let started = Instant::now();
    let (mut traces, mut bad) = (0usize, Vec::new());
    for suite in [coverage_suite(), second_order_suite(), plateau_suite()] {
        for r in suite.0.results().filter(|r| r.optimism_clean()) {
            traces += 1;
            let mut prev = 0.0;
            let ok = r.rows.iter().all(|row| {
                let ok = row.cum_regret <= row.width_sum + 1e-9 && row.width_sum >= prev;
                prev = row.width_sum;
                ok
            });
            if !ok {
                bad.push(format!("{}-seed{}", r.summary.policy, r.summary.seed));
            }
        }
    }
    let pass = traces > 0 && bad.is_empty();
    report(
        "width_regret_domination",
        pass,
        &format!("{traces} optimism-clean traces, violations in {bad:?}"),
        started.elapsed(),
    );
    assert!(pass);
}
