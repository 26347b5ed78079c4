//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use shapval::baselines::{cc_shapley, extended_tmc, extended_tmc_exhaustive};
use shapval::exact::{exact_cc_sv, exact_mc_sv, exact_perm_sv};
use shapval::harness::{fairness_proxies, relative_error};
use shapval::pruned::{ipss, k_greedy, k_star};
use shapval::scenario::{generate, Scenario, ScenarioConfig};
use shapval::seed::rng_from_seed;
use shapval::stratified::{
    default_plan, stratified_estimate, unbiasedness_check, variance_comparison, Scheme,
};
use shapval::utility::{regression_oracle, table_oracle, TableOracle, UtilityTable};
use shapval::{Coalition, Result, UtilityOracle};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn example_oracle() -> TableOracle {
    let table = UtilityTable::from_dense(3, &[0.10, 0.50, 0.70, 0.80, 0.60, 0.90, 0.90, 0.96]).unwrap();
    table_oracle(table).unwrap()
}

fn random_table(n: usize, seed: u64) -> TableOracle {
    let mut rng = rng_from_seed(seed);
    let dense: Vec<f64> = (0..1u64 << n).map(|_| rng.random_range(-1.0..1.0)).collect();
    table_oracle(UtilityTable::from_dense(n, &dense).unwrap()).unwrap()
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

fn federation(n: usize, t: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        scenario: Scenario::SameSizeSameDist,
        n,
        t,
        d: 5,
        sigma: 1.0,
        noise_level: 0.0,
        seed,
    }
}

fn worked_example() -> Outcome {
    let oracle = example_oracle();
    let mc = exact_mc_sv(&oracle).unwrap();
    let cc = exact_cc_sv(&oracle).unwrap();
    let perm = exact_perm_sv(&oracle).unwrap();
    let dev = max_dev(&mc.values, &[0.22, 0.32, 0.32]);
    let agree = max_dev(&mc.values, &cc.values).max(max_dev(&mc.values, &perm.values));
    let efficiency = (mc.sum() - 0.86).abs();
    outcome(
        dev < 1e-10 && agree < 1e-10 && efficiency < 1e-10,
        format!("|mc - (0.22,0.32,0.32)| = {dev:.1e}, forms agree to {agree:.1e}, |sum - 0.86| = {efficiency:.1e}"),
    )
}

fn scheme_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for case in 0..200u64 {
        let n = 2 + (case % 7) as usize;
        let oracle = random_table(n, 1_000 + case);
        let mc = exact_mc_sv(&oracle).unwrap();
        let cc = exact_cc_sv(&oracle).unwrap();
        let perm = exact_perm_sv(&oracle).unwrap();
        worst = worst
            .max(max_dev(&mc.values, &cc.values))
            .max(max_dev(&mc.values, &perm.values));
    }
    outcome(worst < 1e-10, format!("200 tables, n = 2..8, max disagreement {worst:.1e}"))
}

fn unbiasedness() -> Outcome {
    let oracle = example_oracle();
    let plan = default_plan(3, 5).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for scheme in [Scheme::Mc, Scheme::Cc] {
        let report = unbiasedness_check(&oracle, &plan, scheme, 10_000, 2024).unwrap();
        let z = report.max_abs_z();
        pass &= z < 4.0;
        let means: Vec<String> = report.mean.iter().map(|m| format!("{m:.4}")).collect();
        parts.push(format!("{scheme}: mean ({}) max|z| = {z:.1}", means.join(", ")));
    }
    outcome(pass, format!("plan {:?}, 10000 repeats; {}", plan.rounds(), parts.join("; ")))
}

fn variance_ordering() -> Outcome {
    let plan = default_plan(6, 8).unwrap();
    let mut fractions = Vec::new();
    for seed in 0..10u64 {
        let oracle = regression_oracle(generate(&federation(6, 80, seed)).unwrap());
        let report = variance_comparison(&oracle, &plan, 200, 7_000 + seed).unwrap();
        fractions.push(report.fraction_mc_le_cc.unwrap());
    }
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    outcome(
        mean >= 0.8,
        format!("plan {:?}, 200 repeats x 10 federations, mean share var_mc <= var_cc = {mean:.2}", plan.rounds()),
    )
}

fn ipss_full_budget() -> Outcome {
    let mut worst = 0.0f64;
    for n in 3..=8usize {
        for case in 0..5u64 {
            let oracle = random_table(n, 50 * n as u64 + case);
            let exact = exact_mc_sv(&oracle).unwrap();
            let v = ipss(&oracle, 1 << n, &mut rng_from_seed(case)).unwrap();
            worst = worst.max(max_dev(&v.values, &exact.values));
        }
    }
    outcome(worst < 1e-10, format!("n = 3..8, 5 tables each, max deviation {worst:.1e}"))
}

/// Records every distinct coalition requested from the inner oracle.
struct Recording<O> {
    inner: O,
    seen: Mutex<HashSet<u64>>,
}

impl<O: UtilityOracle> UtilityOracle for Recording<O> {
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn evaluate(&self, coalition: Coalition) -> Result<f64> {
        self.seen.lock().unwrap().insert(coalition.bits());
        self.inner.evaluate(coalition)
    }
}

fn ipss_budget() -> Outcome {
    let mut cases = 0;
    let mut violations = Vec::new();
    for n in 2..=12usize {
        let full = 1u64 << n;
        let mut gammas = vec![n as u64 + 1, 2 * n as u64, 3 * n as u64 + 1, (n * n) as u64, full / 2, full - 1, full];
        gammas.retain(|&g| g > n as u64 && g <= full);
        gammas.sort_unstable();
        gammas.dedup();
        for gamma in gammas {
            let oracle = Recording {
                inner: random_table(n, 9_000 + n as u64),
                seen: Mutex::new(HashSet::new()),
            };
            let v = ipss(&oracle, gamma, &mut rng_from_seed(gamma)).unwrap();
            let distinct = oracle.seen.lock().unwrap().len() as u64;
            cases += 1;
            if v.evaluations > gamma || distinct > gamma || distinct != v.evaluations {
                violations.push(format!("(n={n}, gamma={gamma}: {} counted, {distinct} distinct)", v.evaluations));
            }
        }
    }
    outcome(
        violations.is_empty(),
        format!("{cases} (n, gamma) cases, violations: {}", if violations.is_empty() { "none".into() } else { violations.join(" ") }),
    )
}

fn key_combinations_trend() -> Outcome {
    let seeds = 20u64;
    let mut mean_error = [0.0f64; 3];
    for seed in 0..seeds {
        let oracle = regression_oracle(generate(&federation(10, 100, 300 + seed)).unwrap());
        let exact = exact_mc_sv(&oracle).unwrap();
        for k in 1..=3 {
            let v = k_greedy(&oracle, k).unwrap();
            mean_error[k - 1] += relative_error(&v, &exact).unwrap() / seeds as f64;
        }
    }
    let monotone = mean_error[0] >= mean_error[1] && mean_error[1] >= mean_error[2];
    outcome(
        monotone && mean_error[1] < 0.15,
        format!(
            "{seeds} federations, mean relative error K=1: {:.4}, K=2: {:.4}, K=3: {:.4}",
            mean_error[0], mean_error[1], mean_error[2]
        ),
    )
}

fn appearance_counts(n: usize, design: &serde_json::Value) -> Vec<usize> {
    let mut counts = vec![0; n];
    for text in design.as_array().expect("design is a list") {
        let block = Coalition::parse(n, text.as_str().unwrap()).unwrap();
        for c in block.members() {
            counts[c] += 1;
        }
    }
    counts
}

fn fairness() -> Outcome {
    let (n, gamma) = (10, 32);
    let (null, dup_source, dup_copy) = (9, 0, 1);
    let mut free_rider_worst = 0.0f64;
    let mut equal_count_seeds = 0;
    let mut symmetry_worst = 0.0f64;
    for seed in 0..100u64 {
        let fed = generate(&federation(n, 100, 500 + seed))
            .unwrap()
            .with_null_client(null)
            .unwrap()
            .with_duplicate(dup_source, dup_copy)
            .unwrap();
        let oracle = regression_oracle(fed);
        let v = ipss(&oracle, gamma, &mut rng_from_seed(seed)).unwrap();
        let proxies = fairness_proxies(&v, &[null], &[(dup_source, dup_copy)]).unwrap();
        free_rider_worst = free_rider_worst.max(proxies.free_rider_error.unwrap());
        let counts = appearance_counts(n, &v.details["design"]);
        if counts[dup_source] == counts[dup_copy] {
            equal_count_seeds += 1;
            symmetry_worst = symmetry_worst.max(proxies.symmetry_error.unwrap());
        }
    }
    outcome(
        free_rider_worst == 0.0 && equal_count_seeds > 0 && symmetry_worst < 1e-10,
        format!(
            "100 seeds, gamma = {gamma}: max free-rider error {free_rider_worst:e}; \
             {equal_count_seeds} seeds with equal duplicate counts, max symmetry error {symmetry_worst:.1e}"
        ),
    )
}

fn k_star_arithmetic() -> Outcome {
    let four = k_star(4, 10).unwrap();
    let ten = k_star(10, 32).unwrap();
    outcome(
        four.k_star == 1 && four.extra == 5 && ten.k_star == 1,
        format!("k*(4,10) = {} extra {}, k*(10,32) = {} extra {}", four.k_star, four.extra, ten.k_star, ten.extra),
    )
}

fn expected_mse() -> Outcome {
    let redraws = 2_000u64;
    let mut total = 0.0;
    for seed in 0..redraws {
        let oracle = regression_oracle(generate(&federation(1, 100, 80_000 + seed)).unwrap());
        total += -oracle.evaluate(Coalition::grand(1)).unwrap();
    }
    let mean = total / redraws as f64;
    let target = 5.0 / 94.0;
    let rel = (mean - target).abs() / target;
    outcome(
        rel <= 0.15,
        format!("{redraws} redraws, mean test MSE {mean:.5} vs {target:.5} ({:.1}% off)", rel * 100.0),
    )
}

fn tmc_exhaustive() -> Outcome {
    let oracle = example_oracle();
    let tmc = extended_tmc_exhaustive(&oracle, 0.0).unwrap();
    let perm = exact_perm_sv(&oracle).unwrap();
    let dev = max_dev(&tmc.values, &perm.values);
    outcome(dev < 1e-10, format!("all 6 orderings, max deviation {dev:.1e}"))
}

fn determinism() -> Outcome {
    let table = random_table(6, 77);
    let regression = regression_oracle(generate(&federation(6, 40, 77)).unwrap());
    let oracles: [&dyn UtilityOracle; 2] = [&table, &regression];
    let mut runs = 0;
    let mut mismatches = 0;
    for oracle in oracles {
        for seed in [0u64, 1, 99] {
            let mc_plan = default_plan(6, 8).unwrap();
            let methods: Vec<Box<dyn Fn(u64) -> Vec<f64>>> = vec![
                Box::new(|s| stratified_estimate(oracle, &mc_plan, Scheme::Mc, &mut rng_from_seed(s)).unwrap().values),
                Box::new(|s| stratified_estimate(oracle, &mc_plan, Scheme::Cc, &mut rng_from_seed(s)).unwrap().values),
                Box::new(|s| ipss(oracle, 20, &mut rng_from_seed(s)).unwrap().values),
                Box::new(|s| extended_tmc(oracle, 25, 1e-3, &mut rng_from_seed(s)).unwrap().values),
                Box::new(|s| cc_shapley(oracle, 8, &mut rng_from_seed(s)).unwrap().values),
                Box::new(|_| k_greedy(oracle, 2).unwrap().values),
            ];
            for method in &methods {
                let a: Vec<u64> = method(seed).iter().map(|v| v.to_bits()).collect();
                let b: Vec<u64> = method(seed).iter().map(|v| v.to_bits()).collect();
                runs += 1;
                if a != b {
                    mismatches += 1;
                }
            }
        }
    }
    outcome(mismatches == 0, format!("{runs} replays, {mismatches} differ bitwise"))
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("exact values on the three-client table", Duration::from_secs(1), worked_example),
        ("exact solvers agree on random tables", Duration::from_secs(30), scheme_equivalence),
        ("stratified estimator is unbiased (gamma = 5)", Duration::from_secs(60), unbiasedness),
        ("MC variance <= CC variance", Duration::from_secs(600), variance_ordering),
        ("IPSS exact at full budget", Duration::from_secs(60), ipss_full_budget),
        ("IPSS evaluations within budget", Duration::from_secs(60), ipss_budget),
        ("K-Greedy error falls with K", Duration::from_secs(900), key_combinations_trend),
        ("IPSS free-rider and symmetry proxies", Duration::from_secs(300), fairness),
        ("k* arithmetic", Duration::from_secs(1), k_star_arithmetic),
        ("expected test MSE of pooled OLS", Duration::from_secs(300), expected_mse),
        ("exhaustive TMC equals permutation values", Duration::from_secs(1), tmc_exhaustive),
        ("seeded replays are bitwise identical", Duration::from_secs(30), determinism),
    ];
    let mut failed = 0;
    for (index, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && elapsed < *limit, o.detail),
            Err(_) => (false, "panicked".to_string()),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {detail} [{:.2}s of {}s]",
            index + 1,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
