//! The driven-dissipative sandpile Markov chain and its exact solution on
//! line segments.
//!
//! One chain step adds a particle at a uniformly chosen vertex and
//! stabilizes. On `C_n` the recurrent states are the full configuration
//! and the `n` single-hole configurations; the transition matrix between
//! them has five closed-form entry kinds, and the stationary distribution
//! puts `1/2 + 1/(2(n+1))` on the full configuration and is uniform on
//! the holes.
//!
//! The Monte Carlo side never consults the closed forms: the sampler
//! materializes configurations and runs the stabilization engine, so
//! empirical matrices and visit frequencies independently validate the
//! exact ones.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Result, SandpileError};
use crate::lattice::{
    default_budget, stabilize, SandpileConfig, StabilizationOutcome, TopplingPolicy, TopplingRule,
};
use crate::linalg::solve_dense;
use crate::rng::{stream, RunRng};
use crate::scalar::Scalar;

/// A recurrent state of the chain on `C_n`: the full configuration or the
/// configuration with a single hole at `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecurrentState {
    Full,
    Vacant(usize),
}

impl RecurrentState {
    /// Dense index: `Full` is 0, `Vacant(j)` is `j`.
    pub fn index(self) -> usize {
        match self {
            RecurrentState::Full => 0,
            RecurrentState::Vacant(j) => j,
        }
    }

    pub fn from_index(idx: usize, n: usize) -> RecurrentState {
        assert!(idx <= n, "state index {idx} out of range for n = {n}");
        if idx == 0 {
            RecurrentState::Full
        } else {
            RecurrentState::Vacant(idx)
        }
    }

    /// All `n + 1` recurrent states, in index order.
    pub fn all(n: usize) -> impl Iterator<Item = RecurrentState> {
        (0..=n).map(move |idx| RecurrentState::from_index(idx, n))
    }

    /// Stable CSV label: `full` or `vacant_j`.
    pub fn label(self) -> String {
        match self {
            RecurrentState::Full => "full".to_string(),
            RecurrentState::Vacant(j) => format!("vacant_{j}"),
        }
    }

    /// The corresponding heights on `C_n`.
    pub fn materialize(self, n: usize) -> Result<SandpileConfig> {
        match self {
            RecurrentState::Full => SandpileConfig::full_segment(n),
            RecurrentState::Vacant(j) => SandpileConfig::vacant(n, j),
        }
    }
}

/// Identify a stable segment configuration as a recurrent state.
///
/// Errors when the configuration is not in the recurrent class (a height
/// above one, or more than one hole).
pub fn classify_recurrent(config: &SandpileConfig) -> Result<RecurrentState> {
    let (_, heights) = config.line_heights().ok_or_else(|| {
        SandpileError::InvalidParameter("recurrent states live on segments".into())
    })?;
    let mut hole = None;
    for (offset, h) in heights.iter().enumerate() {
        match h {
            1 => {}
            0 => {
                if hole.replace(offset + 1).is_some() {
                    return Err(SandpileError::InvalidParameter(
                        "configuration has more than one hole".into(),
                    ));
                }
            }
            _ => {
                return Err(SandpileError::InvalidParameter(
                    "configuration has a height above one".into(),
                ))
            }
        }
    }
    Ok(match hole {
        None => RecurrentState::Full,
        Some(j) => RecurrentState::Vacant(j),
    })
}

/// The driven-dissipative chain on any finite domain: add a particle at a
/// uniformly chosen vertex, stabilize, repeat.
#[derive(Debug)]
pub struct DrivenChain {
    config: SandpileConfig,
    rule: TopplingRule,
    rng: RunRng,
}

impl DrivenChain {
    pub fn new(initial: SandpileConfig, rule: TopplingRule, rng: RunRng) -> Result<DrivenChain> {
        if initial.uniform_site(&mut rng.clone()).is_none() {
            return Err(SandpileError::InvalidParameter(
                "the driven chain needs a finite domain to add particles to".into(),
            ));
        }
        if !initial.is_stable() {
            return Err(SandpileError::UnstableInput);
        }
        Ok(DrivenChain {
            config: initial,
            rule,
            rng,
        })
    }

    pub fn config(&self) -> &SandpileConfig {
        &self.config
    }

    /// One chain step; returns the stabilization record of the step.
    pub fn step(&mut self) -> Result<StabilizationOutcome> {
        let site = self
            .config
            .uniform_site(&mut self.rng)
            .expect("finite domain");
        self.config.add_particles(site, 1);
        let budget = default_budget(&self.config);
        let outcome = stabilize(
            &self.config,
            &self.rule,
            TopplingPolicy::FifoQueue,
            &mut self.rng,
            budget,
        )?;
        self.config = outcome.final_config.clone();
        Ok(outcome)
    }

    /// Advance `count` steps, discarding the per-step records.
    pub fn advance(&mut self, count: u64) -> Result<()> {
        for _ in 0..count {
            self.step()?;
        }
        Ok(())
    }
}

/// Row-stochastic transition matrix over the `n + 1` recurrent states.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix<S> {
    n: usize,
    rows: Vec<Vec<S>>,
}

impl<S: Scalar> TransitionMatrix<S> {
    /// The exact matrix, assembled from the five closed-form entry kinds:
    /// `P(full, full) = 2/3`, `P(full, vacant_i) = 1/(3n)`,
    /// `P(vacant_j, full) = (n+2)/(3n)`, `P(vacant_j, vacant_i) = 1/(3n)`
    /// off the diagonal and `(n-1)/(3n)` on it.
    pub fn exact(n: usize) -> Result<TransitionMatrix<S>> {
        if n == 0 {
            return Err(SandpileError::InvalidParameter(
                "segment length n must be >= 1".into(),
            ));
        }
        let ni = n as i64;
        let mut rows = Vec::with_capacity(n + 1);
        let mut full_row = Vec::with_capacity(n + 1);
        full_row.push(S::from_ratio(2, 3));
        full_row.extend((1..=n).map(|_| S::from_ratio(1, 3 * ni)));
        rows.push(full_row);
        for j in 1..=n {
            let mut row = Vec::with_capacity(n + 1);
            row.push(S::from_ratio(ni + 2, 3 * ni));
            for i in 1..=n {
                row.push(if i == j {
                    S::from_ratio(ni - 1, 3 * ni)
                } else {
                    S::from_ratio(1, 3 * ni)
                });
            }
            rows.push(row);
        }
        Ok(TransitionMatrix { n, rows })
    }

    pub fn from_rows(n: usize, rows: Vec<Vec<S>>) -> TransitionMatrix<S> {
        assert_eq!(rows.len(), n + 1);
        assert!(rows.iter().all(|r| r.len() == n + 1));
        TransitionMatrix { n, rows }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, from: RecurrentState, to: RecurrentState) -> &S {
        &self.rows[from.index()][to.index()]
    }

    pub fn row(&self, from: RecurrentState) -> &[S] {
        &self.rows[from.index()]
    }

    /// Largest deviation of a row sum from one.
    pub fn max_row_sum_error(&self) -> S {
        let mut worst = S::zero();
        for row in &self.rows {
            let sum = row.iter().fold(S::zero(), |acc, x| acc + x.clone());
            let dev = (sum - S::one()).abs();
            if dev > worst {
                worst = dev;
            }
        }
        worst
    }

    /// Entrywise maximum absolute difference to another matrix, as `f64`.
    pub fn max_abs_difference(&self, other: &TransitionMatrix<S>) -> f64 {
        assert_eq!(self.n, other.n);
        let mut worst = 0.0f64;
        for (a, b) in self.rows.iter().flatten().zip(other.rows.iter().flatten()) {
            worst = worst.max((a.clone() - b.clone()).abs().approx());
        }
        worst
    }
}

/// One Monte Carlo step of the chain from `state` on `C_n`.
fn mc_step(
    n: usize,
    state: RecurrentState,
    rule: &TopplingRule,
    rng: &mut impl Rng,
) -> Result<RecurrentState> {
    let mut config = state.materialize(n)?;
    let site = config.uniform_site(rng).expect("segments are finite");
    config.add_particles(site, 1);
    let budget = default_budget(&config);
    let outcome = stabilize(&config, rule, TopplingPolicy::FifoQueue, rng, budget)?;
    classify_recurrent(&outcome.final_config)
}

/// Transition matrix estimated row by row with `samples_per_state` Monte
/// Carlo single steps from each recurrent state. Rows are estimated in
/// parallel on streams derived from `seed`, so results are reproducible.
pub fn transition_matrix_empirical(
    n: usize,
    samples_per_state: u64,
    seed: u64,
) -> Result<TransitionMatrix<f64>> {
    if n == 0 {
        return Err(SandpileError::InvalidParameter(
            "segment length n must be >= 1".into(),
        ));
    }
    if samples_per_state == 0 {
        return Err(SandpileError::InvalidParameter(
            "samples_per_state must be >= 1".into(),
        ));
    }
    let rows: Result<Vec<Vec<f64>>> = (0..=n)
        .into_par_iter()
        .map(|row_idx| {
            let state = RecurrentState::from_index(row_idx, n);
            let mut rng = stream(seed, row_idx as u64);
            let mut counts = vec![0u64; n + 1];
            for _ in 0..samples_per_state {
                let next = mc_step(n, state, &TopplingRule::Uniform1D, &mut rng)?;
                counts[next.index()] += 1;
            }
            Ok(counts
                .into_iter()
                .map(|c| c as f64 / samples_per_state as f64)
                .collect())
        })
        .collect();
    Ok(TransitionMatrix { n, rows: rows? })
}

/// Stationary distribution over the recurrent states.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDist<S> {
    n: usize,
    probs: Vec<S>,
}

impl<S: Scalar> StationaryDist<S> {
    /// The closed form: `pi(full) = 1/2 + 1/(2(n+1))`, and `1/(2(n+1))`
    /// on every hole configuration.
    pub fn exact(n: usize) -> Result<StationaryDist<S>> {
        if n == 0 {
            return Err(SandpileError::InvalidParameter(
                "segment length n must be >= 1".into(),
            ));
        }
        let ni = n as i64;
        let mut probs = Vec::with_capacity(n + 1);
        probs.push(S::from_ratio(ni + 2, 2 * (ni + 1)));
        probs.extend((1..=n).map(|_| S::from_ratio(1, 2 * (ni + 1))));
        Ok(StationaryDist { n, probs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn prob(&self, state: RecurrentState) -> &S {
        &self.probs[state.index()]
    }

    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    pub fn total(&self) -> S {
        self.probs.iter().fold(S::zero(), |acc, x| acc + x.clone())
    }

    pub fn max_abs_difference(&self, other: &StationaryDist<S>) -> f64 {
        assert_eq!(self.n, other.n);
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a.clone() - b.clone()).abs().approx())
            .fold(0.0, f64::max)
    }
}

/// Solve `pi P = pi`, `sum pi = 1` by a dense direct solve: the transposed
/// balance equations with one redundant row replaced by the normalization.
pub fn stationary_solve<S: Scalar>(matrix: &TransitionMatrix<S>) -> Result<StationaryDist<S>> {
    let m = matrix.n + 1;
    let mut a = vec![vec![S::zero(); m]; m];
    for (row, a_row) in a.iter_mut().enumerate().take(m - 1) {
        for (col, cell) in a_row.iter_mut().enumerate() {
            // (P^T - I)[row][col]
            let mut v = matrix.rows[col][row].clone();
            if row == col {
                v = v - S::one();
            }
            *cell = v;
        }
    }
    for cell in a[m - 1].iter_mut() {
        *cell = S::one();
    }
    let mut b = vec![S::zero(); m];
    b[m - 1] = S::one();
    let probs = solve_dense(a, b)?;
    Ok(StationaryDist { n: matrix.n, probs })
}

/// Visit counts of a Monte Carlo chain run started from the full
/// configuration.
#[derive(Debug, Clone)]
pub struct McmcStats {
    n: usize,
    counts: Vec<u64>,
    samples: u64,
}

impl McmcStats {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn count(&self, state: RecurrentState) -> u64 {
        self.counts[state.index()]
    }

    pub fn frequency(&self, state: RecurrentState) -> f64 {
        self.counts[state.index()] as f64 / self.samples as f64
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.samples as f64)
            .collect()
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }
}

/// Run the chain on `C_n` for `burn_in + samples` steps and tally the
/// states visited after burn-in. Every visited state is checked to lie in
/// the recurrent class.
pub fn mcmc_run(n: usize, burn_in: u64, samples: u64, seed: u64) -> Result<McmcStats> {
    if burn_in == 0 || samples == 0 {
        return Err(SandpileError::InvalidParameter(
            "burn_in and samples must be >= 1".into(),
        ));
    }
    let initial = SandpileConfig::full_segment(n)?;
    let mut chain = DrivenChain::new(initial, TopplingRule::Uniform1D, stream(seed, 0))?;
    for _ in 0..burn_in {
        chain.step()?;
        classify_recurrent(chain.config())?;
    }
    let mut counts = vec![0u64; n + 1];
    for _ in 0..samples {
        chain.step()?;
        let state = classify_recurrent(chain.config())?;
        counts[state.index()] += 1;
    }
    Ok(McmcStats { n, counts, samples })
}

/// Stationary probability that a window of `a_size` vertices is fully
/// occupied, for each segment length in `n_list`: `1 - a/(2(n+1))`.
/// Independent of where the window sits, by hole uniformity.
pub fn marginal_fullness<S: Scalar>(n_list: &[u64], a_size: u64) -> Result<Vec<S>> {
    if a_size == 0 {
        return Err(SandpileError::InvalidParameter(
            "window size must be >= 1".into(),
        ));
    }
    for &n in n_list {
        if a_size > n {
            return Err(SandpileError::InvalidParameter(format!(
                "window size {a_size} exceeds segment length {n}"
            )));
        }
    }
    Ok(n_list
        .iter()
        .map(|&n| S::one() - S::from_ratio(a_size as i64, 2 * (n as i64 + 1)))
        .collect())
}
