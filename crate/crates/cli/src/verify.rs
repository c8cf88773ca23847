//! One-shot cross-validation: closed forms vs recurrences vs the exact
//! oracle vs Monte Carlo vs linear solves, reported as a pass/fail table.

use clap::Args;
use serde_json::json;

use sandpile_core::chain::{
    mcmc_run, stationary_solve, transition_matrix_empirical, RecurrentState, StationaryDist,
    TransitionMatrix,
};
use sandpile_core::gambler::{SgrFamily, SgrTable};
use sandpile_core::holes::{hole_closed_form, HoleFamily};
use sandpile_core::lattice::{
    default_budget, stabilize, SandpileConfig, TopplingPolicy, TopplingRule,
};
use sandpile_core::oracle::{oracle_vs_closed_forms, OracleCaps};
use sandpile_core::rng::stream;
use sandpile_core::stats::binomial_stderr;
use sandpile_core::{Exact, Scalar};

use crate::commands::{json_params, CommonArgs};
use crate::output::Table;
use crate::spec::pick;
use crate::CliError;

/// Cross-validate every route against every other on sizes up to max-n.
#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Largest segment length for the table checks.
    #[arg(long)]
    pub max_n: Option<usize>,
    /// Monte Carlo sample count for the sampling checks.
    #[arg(long)]
    pub mc_samples: Option<u64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

struct Report {
    table: Table,
    failures: usize,
}

impl Report {
    fn new() -> Report {
        Report {
            table: Table::new(
                "verify",
                vec![
                    "check".into(),
                    "n".into(),
                    "measured".into(),
                    "bound".into(),
                    "status".into(),
                ],
            ),
            failures: 0,
        }
    }

    fn push(&mut self, check: &str, n: usize, measured: String, bound: String, pass: bool) {
        if !pass {
            self.failures += 1;
        }
        self.table.push(vec![
            check.to_string(),
            n.to_string(),
            measured,
            bound,
            if pass { "PASS".into() } else { "FAIL".into() },
        ]);
    }

    fn push_float(&mut self, check: &str, n: usize, measured: f64, bound: f64) {
        self.push(
            check,
            n,
            format!("{measured:.3e}"),
            format!("{bound:.1e}"),
            measured <= bound,
        );
    }

    fn push_exact(&mut self, check: &str, n: usize, exact: bool) {
        self.push(
            check,
            n,
            if exact {
                "exact".into()
            } else {
                "mismatch".into()
            },
            "exact".into(),
            exact,
        );
    }
}

pub fn run_verify(args: &VerifyArgs) -> Result<String, CliError> {
    let file = crate::spec::FileValues::load(args.common.config.as_deref())?;
    let resolved = args.common.resolve(&file)?;
    let max_n = pick(args.max_n, file.get("max_n")?, 50);
    let mc_samples = pick(args.mc_samples, file.get("mc_samples")?, 20_000);
    if max_n == 0 {
        return Err(CliError::invalid("max-n must be >= 1".into()));
    }
    args.common.maybe_dump(
        "verify",
        &resolved,
        None,
        json_params(&[("max_n", json!(max_n)), ("mc_samples", json!(mc_samples))]),
    );

    let mut report = Report::new();
    let rational_n = max_n.min(64);
    let holes_float_n = max_n.min(50);
    let holes_rational_n = max_n.min(16);
    let oracle_n = max_n.min(4);

    // Exit probabilities: recurrence vs closed form.
    let sgr_float = SgrFamily::<f64>::solve(max_n)?;
    for n in 1..=max_n {
        let closed = SgrTable::<f64>::closed_form(n)?;
        let table = sgr_float.table(n);
        let mut dev = 0.0f64;
        for k in 0..=n + 1 {
            dev = dev.max((table.ql(k) - closed.ql(k)).abs());
            dev = dev.max((table.qr(k) - closed.qr(k)).abs());
            dev = dev.max((table.qb(k) - closed.qb(k)).abs());
        }
        report.push_float("sgr-recurrence-vs-closed-float", n, dev, 1e-10);
    }
    let sgr_exact = SgrFamily::<Exact>::solve(rational_n)?;
    for n in 1..=rational_n {
        let closed = SgrTable::<Exact>::closed_form(n)?;
        report.push_exact(
            "sgr-recurrence-vs-closed-rational",
            n,
            sgr_exact.table(n) == &closed,
        );
    }

    // Hole probabilities: recurrence vs closed form, plus the row-sum
    // identity against the two-exit probability.
    let holes_float = HoleFamily::<f64>::solve(holes_float_n)?;
    for n in 1..=holes_float_n {
        let table = holes_float.table(n);
        let mut dev = 0.0f64;
        let mut sum_dev = 0.0f64;
        for i in 1..=n {
            for j in 1..=n {
                dev = dev.max((table.h(i, j) - hole_closed_form::<f64>(n, i, j)?).abs());
            }
            sum_dev = sum_dev.max((table.row_sum(i) - holes_float.sgr().table(n).qb(i)).abs());
        }
        report.push_float("holes-recurrence-vs-closed-float", n, dev, 1e-10);
        report.push_float("holes-row-sum-vs-qb", n, sum_dev, 1e-10);
    }
    let holes_exact = HoleFamily::<Exact>::solve(holes_rational_n)?;
    for n in 1..=holes_rational_n {
        let table = holes_exact.table(n);
        let ok = (1..=n).all(|i| {
            (1..=n).all(|j| table.h(i, j) == &hole_closed_form::<Exact>(n, i, j).unwrap())
        });
        report.push_exact("holes-recurrence-vs-closed-rational", n, ok);
    }

    // Oracle vs closed forms, exact.
    for n in 1..=oracle_n {
        let rows = oracle_vs_closed_forms(n, &OracleCaps::default())?;
        let this_n_ok = rows.rows.iter().filter(|r| r.n == n).all(|r| r.matches());
        report.push_exact("oracle-vs-closed-forms", n, this_n_ok);
    }

    // Stationary distribution: linear solve vs closed form, and the
    // transition-matrix row sums feeding the solve.
    for n in 1..=max_n {
        let solved = stationary_solve(&TransitionMatrix::<f64>::exact(n)?)?;
        let dev = solved.max_abs_difference(&StationaryDist::<f64>::exact(n)?);
        report.push_float("stationary-solve-vs-exact-float", n, dev, 1e-10);
    }
    for n in 1..=rational_n {
        let solved = stationary_solve(&TransitionMatrix::<Exact>::exact(n)?)?;
        let ok = solved == StationaryDist::<Exact>::exact(n)?;
        report.push_exact("stationary-solve-vs-exact-rational", n, ok);
        let rows_ok =
            TransitionMatrix::<Exact>::exact(n)?.max_row_sum_error() == Exact::from_ratio(0, 1);
        report.push_exact("transition-row-sums-rational", n, rows_ok);
    }

    // Monte Carlo vs closed forms: exit probabilities on C_10 (or the
    // largest available size), within four binomial standard errors.
    let mc_n = max_n.min(10);
    {
        let closed = SgrTable::<f64>::closed_form(mc_n)?;
        let mut worst_z = 0.0f64;
        for k in 1..=mc_n {
            let config = SandpileConfig::full_plus_delta(mc_n, k)?;
            let budget = default_budget(&config);
            let mut rng = stream(resolved.seed, k as u64);
            let mut counts = [0u64; 3];
            for _ in 0..mc_samples {
                let out = stabilize(
                    &config,
                    &TopplingRule::Uniform1D,
                    TopplingPolicy::FifoQueue,
                    &mut rng,
                    budget,
                )?;
                match (out.exits.left, out.exits.right) {
                    (1, 0) => counts[0] += 1,
                    (0, 1) => counts[1] += 1,
                    (1, 1) => counts[2] += 1,
                    other => {
                        return Err(CliError::invalid(format!(
                            "impossible exit pattern {other:?} from a full-plus-one segment"
                        )))
                    }
                }
            }
            for (count, want) in counts
                .iter()
                .zip([*closed.ql(k), *closed.qr(k), *closed.qb(k)])
            {
                let freq = *count as f64 / mc_samples as f64;
                let se = binomial_stderr(want, mc_samples);
                worst_z = worst_z.max((freq - want).abs() / se);
            }
        }
        report.push_float("sgr-monte-carlo-z", mc_n, worst_z, 4.0);
    }

    // Monte Carlo vs exact transition matrix.
    let tm_n = max_n.min(3);
    {
        let exact = TransitionMatrix::<f64>::exact(tm_n)?;
        let empirical = transition_matrix_empirical(tm_n, mc_samples, resolved.seed ^ 0x7ab)?;
        let mut worst_z = 0.0f64;
        for from in RecurrentState::all(tm_n) {
            for to in RecurrentState::all(tm_n) {
                let want = *exact.entry(from, to);
                let got = *empirical.entry(from, to);
                if want == 0.0 {
                    // Impossible transitions cannot be sampled.
                    if got != 0.0 {
                        worst_z = f64::INFINITY;
                    }
                    continue;
                }
                let se = binomial_stderr(want, mc_samples);
                worst_z = worst_z.max((got - want).abs() / se);
            }
        }
        report.push_float("transition-monte-carlo-z", tm_n, worst_z, 4.0);
    }

    // Chain visit frequency of the full configuration on C_1.
    {
        let stats = mcmc_run(1, 1_000, mc_samples, resolved.seed ^ 0x9c3)?;
        let freq = stats.frequency(RecurrentState::Full);
        let z = (freq - 0.75).abs() / binomial_stderr(0.75, mc_samples);
        report.push_float("mcmc-full-frequency-z", 1, z, 4.0);
    }

    let failures = report.failures;
    let rows = report.table.rows.len();
    let summary = report
        .table
        .write(resolved.output.as_deref(), resolved.format)?;
    if failures > 0 {
        return Err(CliError::ChecksFailed {
            failed: failures,
            summary,
        });
    }
    Ok(format!("{summary}; all {rows} checks pass"))
}
