//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured wall time (visible under --nocapture).
//!
//! Statistical gates run on fixed seeds, so the suite is deterministic.

use std::time::Instant;

use rayon::prelude::*;

use sandpile_core::chain::{
    marginal_fullness, mcmc_run, stationary_solve, transition_matrix_empirical, RecurrentState,
    StationaryDist, TransitionMatrix,
};
use sandpile_core::gambler::{SgrFamily, SgrTable};
use sandpile_core::grid2d::{
    density_sweep, height3_set, label_clusters, spanning_probability, spans_left_right,
    spans_left_right_bfs, SweepConfig,
};
use sandpile_core::holes::{hole_closed_form, HoleFamily};
use sandpile_core::lattice::{
    default_budget, stabilize, SandpileConfig, TopplingPolicy, TopplingRule,
};
use sandpile_core::oracle::{oracle_vs_closed_forms, OracleCaps, OracleReport};
use sandpile_core::rng::stream;
use sandpile_core::single_source::single_source;
use sandpile_core::stats::{binomial_stderr, chi_square_critical, two_sample_chi_square};
use sandpile_core::{Exact, Scalar};

fn pass(criterion: &str, started: Instant, detail: &str) {
    println!(
        "ACCEPTANCE {criterion}: PASS ({:.1}s) {detail}",
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn acceptance_01_sgr_recurrence_matches_closed_form() {
    let t0 = Instant::now();
    let family = SgrFamily::<f64>::solve(200).unwrap();
    let mut worst = 0.0f64;
    for n in 1..=200 {
        let closed = SgrTable::<f64>::closed_form(n).unwrap();
        let table = family.table(n);
        for k in 0..=n + 1 {
            worst = worst.max((table.ql(k) - closed.ql(k)).abs());
            worst = worst.max((table.qr(k) - closed.qr(k)).abs());
            worst = worst.max((table.qb(k) - closed.qb(k)).abs());
        }
    }
    assert!(worst < 1e-10, "float deviation {worst:e}");

    let exact = SgrFamily::<Exact>::solve(64).unwrap();
    for n in 1..=64 {
        assert_eq!(
            exact.table(n),
            &SgrTable::<Exact>::closed_form(n).unwrap(),
            "n = {n}"
        );
    }
    pass(
        "1 (exit probabilities)",
        t0,
        &format!("n <= 200 float dev {worst:.1e}; n <= 64 exact"),
    );
}

#[test]
fn acceptance_02_hole_recurrence_matches_closed_form() {
    let t0 = Instant::now();
    let family = HoleFamily::<f64>::solve(50).unwrap();
    let mut worst = 0.0f64;
    let mut worst_sum = 0.0f64;
    for n in 1..=50 {
        let table = family.table(n);
        for i in 1..=n {
            for j in 1..=n {
                let closed = hole_closed_form::<f64>(n, i, j).unwrap();
                worst = worst.max((table.h(i, j) - closed).abs());
            }
            worst_sum = worst_sum.max((table.row_sum(i) - family.sgr().table(n).qb(i)).abs());
        }
    }
    assert!(worst < 1e-10, "hole deviation {worst:e}");
    assert!(worst_sum < 1e-10, "row-sum deviation {worst_sum:e}");
    pass(
        "2 (hole probabilities)",
        t0,
        &format!("n <= 50 dev {worst:.1e}, row sums {worst_sum:.1e}"),
    );
}

#[test]
fn acceptance_03_oracle_agrees_exactly() {
    let t0 = Instant::now();
    let report = oracle_vs_closed_forms(4, &OracleCaps::default()).unwrap();
    for row in &report.rows {
        assert!(
            row.matches(),
            "oracle mismatch at n={} k={} {}: {} vs {}",
            row.n,
            row.k,
            row.quantity,
            row.oracle,
            row.closed
        );
    }
    assert_eq!(report.rows.len(), OracleReport::expected_row_count(4));
    pass(
        "3 (oracle equality)",
        t0,
        &format!("{} exact comparisons", report.rows.len()),
    );
}

#[test]
fn acceptance_04_stationary_solve_matches_closed_form() {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for n in 1..=200 {
        let solved = stationary_solve(&TransitionMatrix::<f64>::exact(n).unwrap()).unwrap();
        worst = worst.max(solved.max_abs_difference(&StationaryDist::<f64>::exact(n).unwrap()));
    }
    assert!(worst < 1e-10, "stationary deviation {worst:e}");
    // Spot values from the closed form.
    let spots = [(1usize, (3i64, 4i64)), (2, (2, 3)), (5, (7, 12))];
    for (n, (num, den)) in spots {
        let dist = StationaryDist::<Exact>::exact(n).unwrap();
        assert_eq!(
            dist.prob(RecurrentState::Full),
            &Exact::from_ratio(num, den)
        );
        let solved = stationary_solve(&TransitionMatrix::<Exact>::exact(n).unwrap()).unwrap();
        assert_eq!(
            solved.prob(RecurrentState::Full),
            &Exact::from_ratio(num, den)
        );
    }
    pass(
        "4 (stationary distribution)",
        t0,
        &format!("n <= 200 dev {worst:.1e}; spots 3/4, 2/3, 7/12"),
    );
}

#[test]
fn acceptance_05_monte_carlo_reproduces_exit_probabilities() {
    let t0 = Instant::now();
    let n = 10usize;
    let samples = 100_000u64;
    let closed = SgrTable::<f64>::closed_form(n).unwrap();
    let worst_z: f64 = (1..=n)
        .into_par_iter()
        .map(|k| {
            let config = SandpileConfig::full_plus_delta(n, k).unwrap();
            let budget = default_budget(&config);
            let mut rng = stream(0xacce5, k as u64);
            let mut counts = [0u64; 3];
            for _ in 0..samples {
                let out = stabilize(
                    &config,
                    &TopplingRule::Uniform1D,
                    TopplingPolicy::FifoQueue,
                    &mut rng,
                    budget,
                )
                .unwrap();
                match (out.exits.left, out.exits.right) {
                    (1, 0) => counts[0] += 1,
                    (0, 1) => counts[1] += 1,
                    (1, 1) => counts[2] += 1,
                    other => panic!("impossible exits {other:?}"),
                }
            }
            let mut z = 0.0f64;
            for (count, want) in counts
                .iter()
                .zip([*closed.ql(k), *closed.qr(k), *closed.qb(k)])
            {
                let freq = *count as f64 / samples as f64;
                z = z.max((freq - want).abs() / binomial_stderr(want, samples));
            }
            z
        })
        .reduce(|| 0.0, f64::max);
    assert!(worst_z <= 4.0, "worst z-score {worst_z}");

    let stats = mcmc_run(1, 1_000, 100_000, 0xa5).unwrap();
    let freq = stats.frequency(RecurrentState::Full);
    assert!((freq - 0.75).abs() <= 0.01, "mcmc freq(full) = {freq}");
    pass(
        "5 (Monte Carlo agreement)",
        t0,
        &format!("worst z {worst_z:.2} over 4se; mcmc freq {freq:.4} vs 0.75"),
    );
}

#[test]
fn acceptance_06_empirical_transition_matrix() {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for n in [2usize, 3] {
        let exact = TransitionMatrix::<f64>::exact(n).unwrap();
        let empirical = transition_matrix_empirical(n, 100_000, 0xbea7 + n as u64).unwrap();
        let dev = exact.max_abs_difference(&empirical);
        assert!(dev < 0.01, "entrywise deviation {dev} at n = {n}");
        worst = worst.max(dev);
    }
    // Solving on a Monte Carlo matrix recovers the stationary weight of
    // the full configuration, 5/8 at n = 3.
    let empirical = transition_matrix_empirical(3, 1_000_000, 0x5e8).unwrap();
    let solved = stationary_solve(&empirical).unwrap();
    let full = solved.probs()[0];
    assert!(
        (full - 0.625).abs() < 0.01,
        "pi(full) from Monte Carlo matrix: {full}"
    );
    pass(
        "6 (transition Monte Carlo)",
        t0,
        &format!("max entry dev {worst:.4} < 0.01; pi(full) {full:.4} vs 5/8"),
    );
}

#[test]
fn acceptance_07_marginal_convergence() {
    let t0 = Instant::now();
    let sizes = [10u64, 100, 1_000];
    let values = marginal_fullness::<Exact>(&sizes, 1).unwrap();
    for (&n, value) in sizes.iter().zip(&values) {
        let want = Exact::from_ratio(1, 1) - Exact::from_ratio(1, 2 * (n as i64 + 1));
        assert_eq!(value, &want, "n = {n}");
    }
    assert!(values.windows(2).all(|w| w[0] < w[1]), "monotone in n");
    assert!(
        values.iter().all(|v| v < &Exact::from_ratio(1, 1)),
        "bounded by one"
    );
    pass(
        "7 (marginal convergence)",
        t0,
        "exact values, monotone toward one",
    );
}

#[test]
fn acceptance_08_conjecture_harnesses() {
    let t0 = Instant::now();

    // (a) Average density decreases from p = 0.5 to p = 1 on L = 20.
    let cfg = SweepConfig {
        side: 20,
        burn_in: None,
        samples: 200,
        thin: None,
        seed: 0xd0,
    };
    let points = density_sweep(&cfg, &[0.5, 1.0]).unwrap();
    let (lo_p, hi_p) = (&points[0], &points[1]);
    let separation = lo_p.rho - hi_p.rho;
    let combined_se = (lo_p.stderr * lo_p.stderr + hi_p.stderr * hi_p.stderr).sqrt();
    assert!(
        separation > 3.0 * combined_se,
        "rho(0.5) = {} +- {}, rho(1.0) = {} +- {}",
        lo_p.rho,
        lo_p.stderr,
        hi_p.rho,
        hi_p.stderr
    );

    // (b) Height-3 spanning brackets the transition on L = 40.
    let cfg = SweepConfig {
        side: 40,
        burn_in: None,
        samples: 200,
        thin: None,
        seed: 0xd1,
    };
    let sub = spanning_probability(&cfg, 0.40, None).unwrap();
    let sup = spanning_probability(&cfg, 0.90, None).unwrap();
    assert!(
        sub.spanning_prob > 0.9,
        "spanning at p=0.40 is {}",
        sub.spanning_prob
    );
    assert!(
        sup.spanning_prob < 0.1,
        "spanning at p=0.90 is {}",
        sup.spanning_prob
    );

    // (c) Single-source toppled set scales like [-n/2, n/2] at n = 10^4.
    let n = 10_000u32;
    let runs = 20u32;
    let results: Vec<_> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = stream(0xd2, u64::from(run));
            single_source(n, &mut rng, None).unwrap()
        })
        .collect();
    let good = results
        .iter()
        .filter(|r| {
            let right = r.normalized_right();
            let left = r.normalized_left();
            (0.9..=1.1).contains(&right) && (0.9..=1.1).contains(&left)
        })
        .count();
    assert!(good >= 19, "only {good} of {runs} runs inside [0.9, 1.1]");

    pass(
        "8 (conjecture harnesses)",
        t0,
        &format!(
            "rho {:.3}>{:.3} at {:.1}se; spanning {:.2}/{:.2}; radius ok {good}/{runs}",
            lo_p.rho,
            hi_p.rho,
            separation / combined_se,
            sub.spanning_prob,
            sup.spanning_prob
        ),
    );
}

#[test]
fn acceptance_09_structural_property_suite() {
    let t0 = Instant::now();

    // Mass conservation and stability across a mixed exercise set.
    let mut rng = stream(0x90, 0);
    for case in 0..300 {
        let config = SandpileConfig::full_plus_delta(6, case % 6 + 1).unwrap();
        let out = stabilize(
            &config,
            &TopplingRule::Uniform1D,
            TopplingPolicy::FifoQueue,
            &mut rng,
            100_000,
        )
        .unwrap();
        assert!(out.final_config.is_stable());
        assert_eq!(
            config.total_mass(),
            out.final_config.total_mass() + out.exits.total()
        );
        assert_eq!(out.steps, out.odometer.total());
    }
    let grid =
        SandpileConfig::box2d(4, vec![7, 0, 0, 3, 0, 5, 0, 0, 0, 0, 9, 0, 3, 0, 0, 6]).unwrap();
    let rule = TopplingRule::p_toppling(0.55).unwrap();
    for run in 0..300 {
        let mut rng = stream(0x91, run);
        let out = stabilize(&grid, &rule, TopplingPolicy::FifoQueue, &mut rng, 1_000_000).unwrap();
        assert!(out.final_config.is_stable());
        assert_eq!(
            grid.total_mass(),
            out.final_config.total_mass() + out.exits.total()
        );
    }

    // Row-stochasticity, complement, and reflection identities, exactly.
    for n in 1..=50 {
        let matrix = TransitionMatrix::<Exact>::exact(n).unwrap();
        assert!(
            matrix.max_row_sum_error() == Exact::from_ratio(0, 1),
            "n = {n}"
        );
    }
    let family = SgrFamily::<Exact>::solve(40).unwrap();
    for n in 1..=40 {
        let table = family.table(n);
        for k in 1..=n {
            let (l, r, b) = table.triple(k);
            assert_eq!(l + r + b, Exact::from_ratio(1, 1));
            assert_eq!(table.qr(k), table.ql(n + 1 - k));
        }
    }

    // Policy invariance: final-configuration laws under FIFO and uniform
    // random selection agree at significance 0.01 for n <= 4.
    for n in 1..=4usize {
        let runs = 100_000u64;
        let k = n / 2 + 1;
        let config = SandpileConfig::full_plus_delta(n, k).unwrap();
        let budget = default_budget(&config);
        let tally = |policy: TopplingPolicy, salt: u64| -> Vec<u64> {
            let mut counts = vec![0u64; n + 1];
            let mut rng = stream(0x92 ^ salt, n as u64);
            for _ in 0..runs {
                let out =
                    stabilize(&config, &TopplingRule::Uniform1D, policy, &mut rng, budget).unwrap();
                let state = sandpile_core::chain::classify_recurrent(&out.final_config).unwrap();
                counts[state.index()] += 1;
            }
            counts
        };
        let fifo = tally(TopplingPolicy::FifoQueue, 0);
        let uniform = tally(TopplingPolicy::UniformRandomUnstable, 1);
        let (stat, df) = two_sample_chi_square(&fifo, &uniform);
        let critical = chi_square_critical(df, 0.01);
        assert!(
            stat < critical,
            "policy chi-square at n={n}: {stat:.2} >= {critical:.2} (df {df})"
        );
    }

    // Union-find and BFS spanning verdicts agree on 100 sampled states.
    let cfg = SweepConfig {
        side: 20,
        burn_in: Some(2_000),
        samples: 100,
        thin: Some(100),
        seed: 0x93,
    };
    let mut agreements = 0;
    for (i, p) in [0.5f64, 0.7].iter().enumerate() {
        let mut per_sample = Vec::new();
        let result = spanning_probability(
            &SweepConfig {
                samples: 50,
                seed: cfg.seed + i as u64,
                ..cfg
            },
            *p,
            Some(&mut per_sample),
        )
        .unwrap();
        // Re-walk the last state both ways as well.
        let mask =
            height3_set(&SandpileConfig::box2d(result.side, result.last_heights.clone()).unwrap())
                .unwrap();
        assert_eq!(
            spans_left_right(&label_clusters(&mask, result.side)),
            spans_left_right_bfs(&mask, result.side)
        );
        agreements += per_sample.len();
    }
    let mut rng = stream(0x94, 0);
    use rand::Rng;
    for case in 0..100 {
        let side = 40u32;
        let q = 0.3 + 0.4 * (case as f64 / 99.0);
        let mask: Vec<bool> = (0..side * side).map(|_| rng.random_bool(q)).collect();
        let clusters = label_clusters(&mask, side);
        assert_eq!(
            spans_left_right(&clusters),
            spans_left_right_bfs(&mask, side),
            "disagreement on random mask {case}"
        );
        let on_cells = mask.iter().filter(|&&b| b).count();
        assert_eq!(clusters.sizes().iter().sum::<usize>(), on_cells);
        agreements += 1;
    }
    assert!(agreements >= 100);

    pass(
        "9 (structural invariants)",
        t0,
        &format!("{agreements} spanning agreements, identities exact"),
    );
}
