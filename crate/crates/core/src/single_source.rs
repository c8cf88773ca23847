//! Single-source piles: `n` particles at the origin of the integer line,
//! stabilized with uniform topplings and no sink.
//!
//! Mass is conserved (there is nowhere for particles to go), the final
//! heights are all 0 or 1, and the toppled set is tracked against the
//! `[-n/2, n/2]` scaling of its extremes. The default step budget is
//! `1000 n^2`; observed toppling totals grow roughly like `n^3 / 16`, so
//! the default covers the sizes used here with room while still turning a
//! hang into a typed error.

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{Result, SandpileError};
use crate::rng::stream;
use crate::stats;

/// Outcome of one single-source run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingleSourceResult {
    pub n: u32,
    /// Extremes of the set of vertices that toppled; `None` when nothing
    /// toppled (`n <= 1`).
    pub toppled_range: Option<(i64, i64)>,
    /// Whether the toppled set is a contiguous interval. Recorded per run;
    /// nothing in the dynamics forces it, so tests report violations.
    pub toppled_is_interval: bool,
    /// Extremes of the nonzero final heights.
    pub final_support: Option<(i64, i64)>,
    pub steps: u64,
}

impl SingleSourceResult {
    /// Right extent over `n/2`.
    pub fn normalized_right(&self) -> f64 {
        match self.toppled_range {
            Some((_, hi)) => hi as f64 / (f64::from(self.n) / 2.0),
            None => 0.0,
        }
    }

    /// Left extent magnitude over `n/2`.
    pub fn normalized_left(&self) -> f64 {
        match self.toppled_range {
            Some((lo, _)) => -lo as f64 / (f64::from(self.n) / 2.0),
            None => 0.0,
        }
    }
}

pub fn default_single_source_budget(n: u32) -> u64 {
    1000u64
        .saturating_mul(u64::from(n))
        .saturating_mul(u64::from(n))
        .max(1)
}

/// Stabilize `n` particles at the origin.
///
/// Runs a kernel specialized for uniform topplings on the sink-free line;
/// totals around `n^3 / 16` topplings are expected, so large masses are
/// costly by nature. The kernel's outcome law is checked against the
/// general stabilization engine in the test suite.
pub fn single_source(
    n: u32,
    rng: &mut impl Rng,
    budget: Option<u64>,
) -> Result<SingleSourceResult> {
    Ok(single_source_with_profile(n, rng, budget)?.0)
}

/// As [`single_source`], additionally returning the final height profile
/// as `(position, height)` pairs over the support.
pub fn single_source_with_profile(
    n: u32,
    rng: &mut impl Rng,
    budget: Option<u64>,
) -> Result<(SingleSourceResult, Vec<(i64, u32)>)> {
    if n == 0 {
        return Err(SandpileError::InvalidParameter("mass must be >= 1".into()));
    }
    let budget = budget.unwrap_or_else(|| default_single_source_budget(n));
    // A dedicated fast generator, deterministically seeded from the
    // caller's stream.
    let fast = SmallRng::seed_from_u64(rng.random());
    kernel(n, fast, budget)
}

/// Unbiased three-way branch source: Lemire's multiply-shift rejection on
/// a full 64-bit word. The reject zone has 3 words out of 2^64, so the
/// branch is never taken in practice yet the law is exact.
struct TritSource {
    rng: SmallRng,
}

impl TritSource {
    fn new(rng: SmallRng) -> TritSource {
        TritSource { rng }
    }

    #[inline]
    fn next(&mut self) -> u32 {
        loop {
            let m = u128::from(self.rng.random::<u64>()) * 3;
            // 2^64 mod 3 = 1: only a zero low half is biased.
            if m as u64 != 0 {
                return (m >> 64) as u32;
            }
        }
    }
}

/// One lattice cell: height in the low bits, frontier-membership and
/// has-toppled flags in the top bits. A single array keeps the drain loop
/// on one cache stream.
const QUEUED: u32 = 1 << 31;
const TOPPLED: u32 = 1 << 30;
const HEIGHT: u32 = TOPPLED - 1;

struct Kernel {
    cells: Vec<u32>,
    next: Vec<u32>,
    toppled_lo: usize,
    toppled_hi: usize,
    toppled_count: usize,
    steps: u64,
    budget: u64,
    trits: TritSource,
}

/// Tight stabilization loop for `n delta_0` under uniform topplings.
///
/// Processes a worklist of unstable vertices in waves, draining each one
/// to stability per visit. Order does not change the outcome law; large
/// heights are drained in multinomial batches, small ones with one branch
/// draw per toppling.
fn kernel(n: u32, rng: SmallRng, budget: u64) -> Result<(SingleSourceResult, Vec<(i64, u32)>)> {
    // Mass n at final density <= 1 keeps the toppled set well inside
    // [-n, n]; two spare cells absorb bookkeeping at the rim, and `drain`
    // still checks. Index i represents position i - origin.
    let width = 2 * n as usize + 5;
    let origin = n as usize + 2;
    let mut k = Kernel {
        cells: vec![0u32; width],
        next: Vec::new(),
        toppled_lo: usize::MAX,
        toppled_hi: 0,
        toppled_count: 0,
        steps: 0,
        budget,
        trits: TritSource::new(rng),
    };
    k.cells[origin] = n;
    if n >= 2 {
        k.cells[origin] |= QUEUED;
        k.next.push(origin as u32);
    }

    let mut wave: Vec<u32> = Vec::new();
    while !k.next.is_empty() {
        std::mem::swap(&mut wave, &mut k.next);
        for &i in &wave {
            k.drain(i as usize)?;
        }
        wave.clear();
    }

    debug_assert_eq!(
        k.cells.iter().map(|&c| u64::from(c & HEIGHT)).sum::<u64>(),
        u64::from(n)
    );
    let support_lo = k.cells.iter().position(|&c| c & HEIGHT > 0);
    let support_hi = k.cells.iter().rposition(|&c| c & HEIGHT > 0);
    let rel = |i: usize| i as i64 - origin as i64;
    let toppled_range = if k.toppled_count == 0 {
        None
    } else {
        Some((rel(k.toppled_lo), rel(k.toppled_hi)))
    };
    let toppled_is_interval =
        k.toppled_count == 0 || k.toppled_hi - k.toppled_lo + 1 == k.toppled_count;
    let profile = match (support_lo, support_hi) {
        (Some(lo), Some(hi)) => (lo..=hi).map(|i| (rel(i), k.cells[i] & HEIGHT)).collect(),
        _ => Vec::new(),
    };
    let result = SingleSourceResult {
        n,
        toppled_range,
        toppled_is_interval,
        final_support: support_lo.map(|s| (rel(s), rel(support_hi.unwrap()))),
        steps: k.steps,
    };
    Ok((result, profile))
}

impl Kernel {
    /// Topple vertex `i` until it is stable, then enqueue any neighbor the
    /// spill made unstable.
    #[inline]
    fn drain(&mut self, i: usize) -> Result<()> {
        let cell = self.cells[i];
        let mut h = cell & HEIGHT;
        if h < 2 {
            self.cells[i] = cell & !QUEUED;
            return Ok(());
        }
        if i == 0 || i + 1 == self.cells.len() {
            return Err(SandpileError::InvalidParameter(
                "single-source window overflow; mass spread past the allocated rim".into(),
            ));
        }
        // A drain from height h performs at most h - 1 topplings; check
        // the budget once instead of per toppling.
        if self.steps + u64::from(h) > self.budget {
            return Err(SandpileError::BudgetExceeded {
                steps: self.steps,
                budget: self.budget,
            });
        }
        if cell & TOPPLED == 0 {
            self.toppled_count += 1;
            if i < self.toppled_lo {
                self.toppled_lo = i;
            }
            if i > self.toppled_hi {
                self.toppled_hi = i;
            }
        }

        let (mut out_left, mut out_right) = (0u32, 0u32);
        let mut performed = 0u64;
        while h >= 32 {
            // Split floor(h/2) uniform topplings into branch counts.
            let t = u64::from(h / 2);
            let both = Binomial::new(t, 1.0 / 3.0)
                .expect("valid binomial")
                .sample(&mut self.trits.rng);
            let left = Binomial::new(t - both, 0.5)
                .expect("valid binomial")
                .sample(&mut self.trits.rng);
            let right = t - both - left;
            h -= (t + both) as u32;
            out_left += (left + both) as u32;
            out_right += (right + both) as u32;
            performed += t;
        }
        while h >= 2 {
            // Branch-free tally: 0 sends left, 1 sends right, 2 sends both.
            let t = self.trits.next();
            let dl = u32::from(t != 1);
            let dr = u32::from(t != 0);
            h -= dl + dr;
            out_left += dl;
            out_right += dr;
            performed += 1;
        }
        self.steps += performed;
        self.cells[i] = h | TOPPLED;
        if out_left > 0 {
            let c = self.cells[i - 1] + out_left;
            if c & HEIGHT >= 2 && c & QUEUED == 0 {
                self.cells[i - 1] = c | QUEUED;
                self.next.push((i - 1) as u32);
            } else {
                self.cells[i - 1] = c;
            }
        }
        if out_right > 0 {
            let c = self.cells[i + 1] + out_right;
            if c & HEIGHT >= 2 && c & QUEUED == 0 {
                self.cells[i + 1] = c | QUEUED;
                self.next.push((i + 1) as u32);
            } else {
                self.cells[i + 1] = c;
            }
        }
        Ok(())
    }
}

/// Summary of the normalized toppled-set radius at one mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeRow {
    pub n: u32,
    /// Mean of `D_right / (n/2)` over the runs.
    pub mean_right: f64,
    /// Mean of `|D_left| / (n/2)` over the runs.
    pub mean_left: f64,
    /// Sample standard deviation of the pooled left and right normalized
    /// radii.
    pub std: f64,
    pub runs: u32,
}

/// Independent single-source runs for each mass in `n_list`, reduced to
/// normalized-radius statistics. Runs execute in parallel on streams
/// derived from `seed` and are reduced in a fixed order.
pub fn shape_sweep(n_list: &[u32], runs: u32, seed: u64) -> Result<Vec<ShapeRow>> {
    if runs == 0 {
        return Err(SandpileError::InvalidParameter("runs must be >= 1".into()));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for (i, &n) in n_list.iter().enumerate() {
        let results: Result<Vec<SingleSourceResult>> = (0..runs)
            .into_par_iter()
            .map(|run| {
                let mut rng = stream(seed, (i as u64) << 32 | u64::from(run));
                single_source(n, &mut rng, None)
            })
            .collect();
        let results = results?;
        let rights: Vec<f64> = results
            .iter()
            .map(SingleSourceResult::normalized_right)
            .collect();
        let lefts: Vec<f64> = results
            .iter()
            .map(SingleSourceResult::normalized_left)
            .collect();
        let pooled: Vec<f64> = rights.iter().chain(&lefts).copied().collect();
        let (_, std) = stats::mean_std(&pooled);
        rows.push(ShapeRow {
            n,
            mean_right: stats::mean_std(&rights).0,
            mean_left: stats::mean_std(&lefts).0,
            std,
            runs,
        });
    }
    Ok(rows)
}
