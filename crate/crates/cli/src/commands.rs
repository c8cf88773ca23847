//! Subcommand argument structs and their run functions.

use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use sandpile_core::chain::{
    marginal_fullness, mcmc_run, stationary_solve, RecurrentState, StationaryDist, TransitionMatrix,
};
use sandpile_core::gambler::{SgrFamily, SgrTable};
use sandpile_core::grid2d::{
    density_sweep, label_clusters, spanning_probability, write_pgm, SweepConfig,
};
use sandpile_core::holes::{hole_closed_form, HoleFamily, HoleTable};
use sandpile_core::oracle::{
    absorption_distribution, oracle_vs_closed_forms, OracleCaps, OracleOrder, OracleRule,
};
use sandpile_core::rng::stream;
use sandpile_core::single_source::{shape_sweep, single_source_with_profile};
use sandpile_core::{Exact, Scalar};

use crate::output::{resolve_output, write_file, Table};
use crate::spec::{pick, pick_required, FileValues, Mode, OutputFormat, ResolvedSpec, TableRoute};
use crate::CliError;

/// Flags shared by every subcommand.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Root seed; every random stream of the run derives from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path. Omitted: stdout. Relative paths land in
    /// $SANDPILE_OUT_DIR when that variable is set.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// JSON config file; keys mirror the long flag names, flags override.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Echo the fully resolved spec as one JSON line on stderr.
    #[arg(long)]
    pub dump_config: bool,
}

pub struct Resolved {
    pub seed: u64,
    pub format: OutputFormat,
    pub output: Option<PathBuf>,
}

impl CommonArgs {
    pub fn resolve(&self, file: &FileValues) -> Result<Resolved, CliError> {
        let seed = pick(self.seed, file.get("seed")?, 0);
        let format = pick(self.format, file.get_enum("format")?, OutputFormat::Csv);
        let output = resolve_output(self.output.clone().or(file.get::<PathBuf>("output")?));
        Ok(Resolved {
            seed,
            format,
            output,
        })
    }

    pub fn maybe_dump(
        &self,
        command: &'static str,
        resolved: &Resolved,
        mode: Option<Mode>,
        params: Map<String, Value>,
    ) {
        if self.dump_config {
            ResolvedSpec {
                command,
                seed: resolved.seed,
                mode,
                format: resolved.format,
                output: resolved.output.clone(),
                params,
            }
            .dump();
        }
    }
}

fn state_labels(n: usize) -> Vec<String> {
    RecurrentState::all(n).map(RecurrentState::label).collect()
}

// ---------------------------------------------------------------------
// sgr
// ---------------------------------------------------------------------

/// Exit-probability table for the full segment plus one particle.
#[derive(Debug, Args)]
pub struct SgrArgs {
    /// Segment length.
    #[arg(long)]
    pub n: Option<usize>,
    /// Numeric mode.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Closed forms or the recurrence solver.
    #[arg(long, value_enum)]
    pub route: Option<TableRoute>,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn sgr_table<S: Scalar>(n: usize, route: TableRoute) -> Result<Table, CliError> {
    let table: SgrTable<S> = match route {
        TableRoute::Closed => SgrTable::closed_form(n)?,
        TableRoute::Recurrence => {
            let family = SgrFamily::solve(n)?;
            family.table(n).clone()
        }
    };
    let mut headers = vec!["n".to_string(), "k".to_string()];
    headers.extend(S::csv_headers("qL"));
    headers.extend(S::csv_headers("qR"));
    headers.extend(S::csv_headers("qB"));
    let mut out = Table::new("sgr", headers);
    for (k, ql, qr, qb) in table.rows() {
        let mut row = vec![n.to_string(), k.to_string()];
        row.extend(ql.csv_cells());
        row.extend(qr.csv_cells());
        row.extend(qb.csv_cells());
        out.push(row);
    }
    Ok(out)
}

pub fn run_sgr(args: &SgrArgs) -> Result<String, CliError> {
    let file = FileValues::load(args.common.config.as_deref())?;
    let resolved = args.common.resolve(&file)?;
    let n = pick_required(args.n, file.get("n")?, "n")?;
    let mode = pick(args.mode, file.get_enum("mode")?, Mode::Float);
    let route = pick(args.route, file.get_enum("route")?, TableRoute::Recurrence);
    args.common.maybe_dump(
        "sgr",
        &resolved,
        Some(mode),
        json_params(&[("n", json!(n)), ("route", json!(route.as_str()))]),
    );
    let table = match mode {
        Mode::Float => sgr_table::<f64>(n, route)?,
        Mode::Rational => sgr_table::<Exact>(n, route)?,
    };
    table.write(resolved.output.as_deref(), resolved.format)
}

// ---------------------------------------------------------------------
// holes
// ---------------------------------------------------------------------

/// Hole-location probability table.
#[derive(Debug, Args)]
pub struct HolesArgs {
    /// Segment length.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, value_enum)]
    pub route: Option<TableRoute>,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn holes_table<S: Scalar>(n: usize, route: TableRoute) -> Result<Table, CliError> {
    let mut headers = vec!["n".to_string(), "i".to_string(), "j".to_string()];
    headers.extend(S::csv_headers("h"));
    let mut out = Table::new("holes", headers);
    let mut push = |i: usize, j: usize, h: &S| {
        let mut row = vec![n.to_string(), i.to_string(), j.to_string()];
        row.extend(h.csv_cells());
        out.push(row);
    };
    match route {
        TableRoute::Closed => {
            for i in 1..=n {
                for j in 1..=n {
                    push(i, j, &hole_closed_form::<S>(n, i, j)?);
                }
            }
        }
        TableRoute::Recurrence => {
            let family: HoleFamily<S> = HoleFamily::solve(n)?;
            let table: &HoleTable<S> = family.table(n);
            for (i, j, h) in table.rows() {
                push(i, j, h);
            }
        }
    }
    Ok(out)
}

pub fn run_holes(args: &HolesArgs) -> Result<String, CliError> {
    let file = FileValues::load(args.common.config.as_deref())?;
    let resolved = args.common.resolve(&file)?;
    let n = pick_required(args.n, file.get("n")?, "n")?;
    let mode = pick(args.mode, file.get_enum("mode")?, Mode::Float);
    let route = pick(args.route, file.get_enum("route")?, TableRoute::Recurrence);
    args.common.maybe_dump(
        "holes",
        &resolved,
        Some(mode),
        json_params(&[("n", json!(n)), ("route", json!(route.as_str()))]),
    );
    let table = match mode {
        Mode::Float => holes_table::<f64>(n, route)?,
        Mode::Rational => holes_table::<Exact>(n, route)?,
    };
    table.write(resolved.output.as_deref(), resolved.format)
}

// ---------------------------------------------------------------------
// transition
// ---------------------------------------------------------------------

/// Transition matrix over the recurrent states.
#[derive(Debug, Args)]
pub struct TransitionArgs {
    /// Segment length.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Estimate each row with this many Monte Carlo steps instead of the
    /// closed forms (always float).
    #[arg(long)]
    pub empirical_samples: Option<u64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn transition_table<S: Scalar>(n: usize, matrix: &TransitionMatrix<S>) -> Table {
    let labels = state_labels(n);
    let mut headers = vec!["n".to_string(), "row".to_string(), "col".to_string()];
    headers.extend(S::csv_headers("p"));
    let mut out = Table::new("transition", headers);
    for from in RecurrentState::all(n) {
        for to in RecurrentState::all(n) {
            let mut row = vec![
                n.to_string(),
                labels[from.index()].clone(),
                labels[to.index()].clone(),
            ];
            row.extend(matrix.entry(from, to).csv_cells());
            out.push(row);
        }
    }
    out
}

pub fn run_transition(args: &TransitionArgs) -> Result<String, CliError> {
    let file = FileValues::load(args.common.config.as_deref())?;
    let resolved = args.common.resolve(&file)?;
    let n = pick_required(args.n, file.get("n")?, "n")?;
    let mode = pick(args.mode, file.get_enum("mode")?, Mode::Float);
    let empirical = args.empirical_samples.or(file.get("empirical_samples")?);
    args.common.maybe_dump(
        "transition",
        &resolved,
        Some(mode),
        json_params(&[("n", json!(n)), ("empirical_samples", json!(empirical))]),
    );
    let table = match (empirical, mode) {
        (Some(samples), _) => {
            let matrix =
                sandpile_core::chain::transition_matrix_empirical(n, samples, resolved.seed)?;
            transition_table(n, &matrix)
        }
        (None, Mode::Float) => transition_table(n, &TransitionMatrix::<f64>::exact(n)?),
        (None, Mode::Rational) => transition_table(n, &TransitionMatrix::<Exact>::exact(n)?),
    };
    table.write(resolved.output.as_deref(), resolved.format)
}

// ---------------------------------------------------------------------
// stationary
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StationaryRoute {
    /// The closed-form distribution.
    Exact,
    /// Solve pi P = pi on the exact transition matrix.
    Solve,
}

/// Stationary distribution over the recurrent states.
#[derive(Debug, Args)]
pub struct StationaryArgs {
    /// Segment length.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, value_enum)]
    pub route: Option<StationaryRoute>,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn stationary_table<S: Scalar>(n: usize, route: StationaryRoute) -> Result<Table, CliError> {
    let dist: StationaryDist<S> = match route {
        StationaryRoute::Exact => StationaryDist::exact(n)?,
        StationaryRoute::Solve => stationary_solve(&TransitionMatrix::<S>::exact(n)?)?,
    };
    let mut headers = vec!["n".to_string(), "state".to_string()];
    headers.extend(S::csv_headers("pi"));
    let mut out = Table::new("stationary", headers);
    for state in RecurrentState::all(n) {
        let mut row = vec![n.to_string(), state.label()];
        row.extend(dist.prob(state).csv_cells());
        out.push(row);
    }
    Ok(out)
}

pub fn run_stationary(args: &StationaryArgs) -> Result<String, CliError> {
    let file = FileValues::load(args.common.config.as_deref())?;
    let resolved = args.common.resolve(&file)?;
    let n = pick_required(args.n, file.get("n")?, "n")?;
    let mode = pick(args.mode, file.get_enum("mode")?, Mode::Rational);
    let route = pick(args.route, file.get_enum("route")?, StationaryRoute::Solve);
    args.common.maybe_dump(
        "stationary",
        &resolved,
        Some(mode),
        json_params(&[("n", json!(n))]),
    );
    let table = match mode {
        Mode::Float => stationary_table::<f64>(n, route)?,
        Mode::Rational => stationary_table::<Exact>(n, route)?,
    };
    table.write(resolved.output.as_deref(), resolved.format)
}

// ---------------------------------------------------------------------
// mcmc
// ---------------------------------------------------------------------

/// Visit frequencies of the driven chain on a segment.
#[derive(Debug, Args)]
pub struct McmcArgs {
    /// Segment length.
    #[arg(long)]
    pub n: Option<usize>,
    /// Steps discarded before tallying.
    #[arg(long)]
    pub burn_in: Option<u64>,
    /// Steps tallied after burn-in.
    #[arg(long)]
    pub samples: Option<u64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn run_mcmc(args: &McmcArgs) -> Result<String, CliError> {
    let file = FileValues::load(args.common.config.as_deref())?;
    let resolved = args.common.resolve(&file)?;
    let n = pick_required(args.n, file.get("n")?, "n")?;
    let burn_in = pick(args.burn_in, file.get("burn_in")?, 1_000);
    let samples = pick(args.samples, file.get("samples")?, 100_000);
    args.common.maybe_dump(
        "mcmc",
        &resolved,
        None,
        json_params(&[
            ("n", json!(n)),
            ("burn_in", json!(burn_in)),
            ("samples", json!(samples)),
        ]),
    );
    let stats = mcmc_run(n, burn_in, samples, resolved.seed)?;
    let mut out = Table::new(
        "mcmc",
        vec![
            "n".into(),
            "state".into(),
            "count".into(),
            "frequency".into(),
        ],
    );
    for state in RecurrentState::all(n) {
        out.push(vec![
            n.to_string(),
            state.label(),
            stats.count(state).to_string(),
            format!("{}", stats.frequency(state)),
        ]);
    }
    out.write(resolved.output.as_deref(), resolved.format)
}

// ---------------------------------------------------------------------
// marginals
// ---------------------------------------------------------------------

/// Stationary probability that a window is fully occupied, per size.
#[derive(Debug, Args)]
pub struct MarginalsArgs {
    /// Segment lengths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<u64>>,
    /// Window size.
    #[arg(long)]
    pub a_size: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn marginals_table<S: Scalar>(n_list: &[u64], a_size: u64) -> Result<Table, CliError> {
    let values: Vec<S> = marginal_fullness(n_list, a_size)?;
    let mut headers = vec!["n".to_string(), "a_size".to_string()];
    headers.extend(S::csv_headers("value"));
    let mut out = Table::new("marginals", headers);
    for (n, v) in n_list.iter().zip(values) {
        let mut row = vec![n.to_string(), a_size.to_string()];
        row.extend(v.csv_cells());
        out.push(row);
    }
    Ok(out)
}

pub fn run_marginals(args: &MarginalsArgs) -> Result<String, CliError> {
    let file = FileValues::load(args.common.config.as_deref())?;
    let resolved = args.common.resolve(&file)?;
    let n_list: Vec<u64> = pick_required(args.n_list.clone(), file.get("n_list")?, "n_list")?;
    let a_size = pick(args.a_size, file.get("a_size")?, 1);
    let mode = pick(args.mode, file.get_enum("mode")?, Mode::Float);
    args.common.maybe_dump(
        "marginals",
        &resolved,
        Some(mode),
        json_params(&[("n_list", json!(n_list)), ("a_size", json!(a_size))]),
    );
    let table = match mode {
        Mode::Float => marginals_table::<f64>(&n_list, a_size)?,
        Mode::Rational => marginals_table::<Exact>(&n_list, a_size)?,
    };
    table.write(resolved.output.as_deref(), resolved.format)
}

// ---------------------------------------------------------------------
// oracle-check
// ---------------------------------------------------------------------

/// Exact comparison of brute-force absorption probabilities against every
/// closed form.
#[derive(Debug, Args)]
pub struct OracleCheckArgs {
    /// Largest segment length to check.
    #[arg(long)]
    pub max_n: Option<usize>,
    /// Reachable-state cap of the absorption solver.
    #[arg(long)]
    pub max_states: Option<usize>,
    /// Directory for per-instance absorption distribution JSON dumps.
    #[arg(long)]
    pub dists_dir: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn run_oracle_check(args: &OracleCheckArgs) -> Result<String, CliError> {
    let file = FileValues::load(args.common.config.as_deref())?;
    let resolved = args.common.resolve(&file)?;
    let max_n = pick(args.max_n, file.get("max_n")?, 4);
    let max_states = pick(
        args.max_states,
        file.get("max_states")?,
        OracleCaps::default().max_states,
    );
    let dists_dir = args.dists_dir.clone().or(file.get("dists_dir")?);
    args.common.maybe_dump(
        "oracle-check",
        &resolved,
        None,
        json_params(&[("max_n", json!(max_n)), ("max_states", json!(max_states))]),
    );
    let caps = OracleCaps {
        max_states,
        ..OracleCaps::default()
    };
    let report = oracle_vs_closed_forms(max_n, &caps)?;

    if let Some(dir) = dists_dir {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        for n in 1..=max_n {
            for k in 1..=n {
                let mut initial = vec![1u32; n];
                initial[k - 1] += 1;
                let dist = absorption_distribution(
                    &initial,
                    OracleRule::Uniform1D,
                    OracleOrder::Leftmost,
                    &caps,
                )?;
                let outcomes: Vec<Value> = dist
                    .outcomes()
                    .iter()
                    .map(|(o, p)| {
                        json!({
                            "heights": o.heights,
                            "exits_left": o.exits_left,
                            "exits_right": o.exits_right,
                            "prob_num": p.numer().to_string(),
                            "prob_den": p.denom().to_string(),
                            "prob_approx": p.approx(),
                        })
                    })
                    .collect();
                let doc = json!({
                    "schema_version": 1,
                    "kind": "absorption-distribution",
                    "n": n,
                    "k": k,
                    "rule": "uniform",
                    "outcomes": outcomes,
                });
                let path = dir.join(format!("absorption_n{n}_k{k}.json"));
                write_file(
                    &path,
                    serde_json::to_string_pretty(&doc).unwrap().as_bytes(),
                )?;
            }
        }
    }

    let mut out = Table::new(
        "oracle-check",
        vec![
            "n".into(),
            "k".into(),
            "j".into(),
            "quantity".into(),
            "oracle_num".into(),
            "oracle_den".into(),
            "closed_num".into(),
            "closed_den".into(),
            "match".into(),
        ],
    );
    let mut mismatches = 0usize;
    for row in &report.rows {
        if !row.matches() {
            mismatches += 1;
        }
        out.push(vec![
            row.n.to_string(),
            row.k.to_string(),
            row.j.map(|j| j.to_string()).unwrap_or_default(),
            row.quantity.to_string(),
            row.oracle.numer().to_string(),
            row.oracle.denom().to_string(),
            row.closed.numer().to_string(),
            row.closed.denom().to_string(),
            row.matches().to_string(),
        ]);
    }
    let summary = out.write(resolved.output.as_deref(), resolved.format)?;
    if mismatches > 0 {
        return Err(CliError::ChecksFailed {
            failed: mismatches,
            summary,
        });
    }
    Ok(format!(
        "{summary}; all {} comparisons match exactly",
        report.rows.len()
    ))
}

// ---------------------------------------------------------------------
// density2d
// ---------------------------------------------------------------------

/// Average stationary density on a box across p-values.
#[derive(Debug, Args)]
pub struct Density2dArgs {
    /// Box side length.
    #[arg(long)]
    pub side: Option<u32>,
    /// p-values, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub p_list: Option<Vec<f64>>,
    /// Chain steps before sampling starts (default 10 * side^2).
    #[arg(long)]
    pub burn_in: Option<u64>,
    /// Recorded samples per p-value.
    #[arg(long)]
    pub samples: Option<u32>,
    /// Chain steps between samples (default side^2).
    #[arg(long)]
    pub thin: Option<u64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn run_density2d(args: &Density2dArgs) -> Result<String, CliError> {
    let file = FileValues::load(args.common.config.as_deref())?;
    let resolved = args.common.resolve(&file)?;
    let side = pick(args.side, file.get("side")?, 20);
    let p_list: Vec<f64> = pick_required(args.p_list.clone(), file.get("p_list")?, "p_list")?;
    let burn_in = args.burn_in.or(file.get("burn_in")?);
    let samples = pick(args.samples, file.get("samples")?, 200);
    let thin = args.thin.or(file.get("thin")?);
    args.common.maybe_dump(
        "density2d",
        &resolved,
        None,
        json_params(&[
            ("side", json!(side)),
            ("p_list", json!(p_list)),
            ("burn_in", json!(burn_in)),
            ("samples", json!(samples)),
            ("thin", json!(thin)),
        ]),
    );
    let cfg = SweepConfig {
        side,
        burn_in,
        samples,
        thin,
        seed: resolved.seed,
    };
    let points = density_sweep(&cfg, &p_list)?;
    let mut out = Table::new(
        "density2d",
        vec![
            "L".into(),
            "p".into(),
            "rho".into(),
            "stderr".into(),
            "samples".into(),
        ],
    );
    for pt in points {
        out.push(vec![
            pt.side.to_string(),
            format!("{}", pt.p),
            format!("{}", pt.rho),
            format!("{}", pt.stderr),
            pt.samples.to_string(),
        ]);
    }
    out.write(resolved.output.as_deref(), resolved.format)
}

// ---------------------------------------------------------------------
// percolation
// ---------------------------------------------------------------------

/// Left-right spanning probability of the height-3 set at one p-value.
#[derive(Debug, Args)]
pub struct PercolationArgs {
    /// Box side length.
    #[arg(long)]
    pub side: Option<u32>,
    /// Edge-firing probability.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long)]
    pub samples: Option<u32>,
    #[arg(long)]
    pub thin: Option<u64>,
    /// Write per-sample cluster-size lists as JSON.
    #[arg(long)]
    pub clusters_json: Option<PathBuf>,
    /// Write the last sampled height field as a plain PGM image.
    #[arg(long)]
    pub heights_pgm: Option<PathBuf>,
    /// Write the last sample's height-3 cluster labels as a plain PGM image.
    #[arg(long)]
    pub labels_pgm: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn run_percolation(args: &PercolationArgs) -> Result<String, CliError> {
    let file = FileValues::load(args.common.config.as_deref())?;
    let resolved = args.common.resolve(&file)?;
    let side = pick(args.side, file.get("side")?, 40);
    let p = pick_required(args.p, file.get("p")?, "p")?;
    let burn_in = args.burn_in.or(file.get("burn_in")?);
    let samples = pick(args.samples, file.get("samples")?, 200);
    let thin = args.thin.or(file.get("thin")?);
    args.common.maybe_dump(
        "percolation",
        &resolved,
        None,
        json_params(&[
            ("side", json!(side)),
            ("p", json!(p)),
            ("burn_in", json!(burn_in)),
            ("samples", json!(samples)),
            ("thin", json!(thin)),
        ]),
    );
    let cfg = SweepConfig {
        side,
        burn_in,
        samples,
        thin,
        seed: resolved.seed,
    };
    let mut per_sample = Vec::new();
    let want_clusters =
        args.clusters_json.is_some() || file.get::<PathBuf>("clusters_json")?.is_some();
    let result = spanning_probability(&cfg, p, want_clusters.then_some(&mut per_sample))?;

    if let Some(path) = args.clusters_json.clone().or(file.get("clusters_json")?) {
        let doc = json!({
            "schema_version": 1,
            "kind": "cluster-sizes",
            "L": side,
            "p": p,
            "per_sample_sizes": per_sample,
        });
        write_file(
            &path,
            serde_json::to_string_pretty(&doc).unwrap().as_bytes(),
        )?;
    }
    if let Some(path) = args.heights_pgm.clone().or(file.get("heights_pgm")?) {
        let mut bytes = Vec::new();
        write_pgm(&mut bytes, side, &result.last_heights, 3).map_err(|e| CliError::io(&path, e))?;
        write_file(&path, &bytes)?;
    }
    if let Some(path) = args.labels_pgm.clone().or(file.get("labels_pgm")?) {
        let mask: Vec<bool> = result.last_heights.iter().map(|&h| h == 3).collect();
        let clusters = label_clusters(&mask, side);
        let maxval = clusters.sizes().len().max(1) as u32;
        let mut bytes = Vec::new();
        write_pgm(&mut bytes, side, clusters.labels(), maxval)
            .map_err(|e| CliError::io(&path, e))?;
        write_file(&path, &bytes)?;
    }

    let mut out = Table::new(
        "percolation",
        vec![
            "L".into(),
            "p".into(),
            "spanning_prob".into(),
            "samples".into(),
        ],
    );
    out.push(vec![
        result.side.to_string(),
        format!("{}", result.p),
        format!("{}", result.spanning_prob),
        result.samples.to_string(),
    ]);
    out.write(resolved.output.as_deref(), resolved.format)
}

// ---------------------------------------------------------------------
// single-source
// ---------------------------------------------------------------------

/// Stabilize n particles dropped at the origin of the integer line.
#[derive(Debug, Args)]
pub struct SingleSourceArgs {
    /// Mass at the origin (per-run table).
    #[arg(long)]
    pub n: Option<u32>,
    /// Masses for a summary sweep, comma separated; implies --summary.
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<u32>>,
    /// Independent runs.
    #[arg(long)]
    pub runs: Option<u32>,
    /// Step budget override (default 1000 * n^2).
    #[arg(long)]
    pub budget: Option<u64>,
    /// Write the final height profile of the last run as CSV.
    #[arg(long)]
    pub profile_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn run_single_source(args: &SingleSourceArgs) -> Result<String, CliError> {
    let file = FileValues::load(args.common.config.as_deref())?;
    let resolved = args.common.resolve(&file)?;
    let runs = pick(args.runs, file.get("runs")?, 20);
    let budget = args.budget.or(file.get("budget")?);
    let n_list: Option<Vec<u32>> = args.n_list.clone().or(file.get("n_list")?);
    let n: Option<u32> = args.n.or(file.get("n")?);
    let profile_out = args.profile_out.clone().or(file.get("profile_out")?);
    args.common.maybe_dump(
        "single-source",
        &resolved,
        None,
        json_params(&[
            ("n", json!(n)),
            ("n_list", json!(n_list)),
            ("runs", json!(runs)),
            ("budget", json!(budget)),
        ]),
    );

    if let Some(n_list) = n_list {
        // Summary sweep over masses.
        let rows = shape_sweep(&n_list, runs, resolved.seed)?;
        let mut out = Table::new(
            "single-source-sweep",
            vec![
                "n".into(),
                "mean_right_over_half_n".into(),
                "mean_left_over_half_n".into(),
                "std".into(),
                "runs".into(),
            ],
        );
        for row in rows {
            out.push(vec![
                row.n.to_string(),
                format!("{}", row.mean_right),
                format!("{}", row.mean_left),
                format!("{}", row.std),
                row.runs.to_string(),
            ]);
        }
        return out.write(resolved.output.as_deref(), resolved.format);
    }

    let n =
        n.ok_or_else(|| CliError::invalid("missing required parameter 'n' or 'n_list'".into()))?;
    let mut out = Table::new(
        "single-source",
        vec![
            "n".into(),
            "run".into(),
            "d_left".into(),
            "d_right".into(),
            "steps".into(),
        ],
    );
    // Runs execute in parallel on derived streams and are reduced in run
    // order, so output bytes do not depend on scheduling.
    let results: Result<Vec<_>, CliError> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = stream(resolved.seed, u64::from(run));
            Ok(single_source_with_profile(n, &mut rng, budget)?)
        })
        .collect();
    let results = results?;
    let mut last_profile = Vec::new();
    for (run, (result, profile)) in results.into_iter().enumerate() {
        let (dl, dr) = match result.toppled_range {
            Some((lo, hi)) => (lo.to_string(), hi.to_string()),
            None => (String::new(), String::new()),
        };
        out.push(vec![
            n.to_string(),
            run.to_string(),
            dl,
            dr,
            result.steps.to_string(),
        ]);
        last_profile = profile;
    }
    if let Some(path) = profile_out {
        let mut profile_table = Table::new(
            "single-source-profile",
            vec!["position".into(), "height".into()],
        );
        for (pos, h) in last_profile {
            profile_table.push(vec![pos.to_string(), h.to_string()]);
        }
        let mut bytes = Vec::new();
        profile_table
            .write_to_vec(&mut bytes, resolved.format)
            .map_err(|e| CliError::io(&path, e))?;
        write_file(&path, &bytes)?;
    }
    out.write(resolved.output.as_deref(), resolved.format)
}

pub fn json_params(pairs: &[(&str, Value)]) -> Map<String, Value> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}
