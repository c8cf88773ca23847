//! The stabilization loop.
//!
//! One run is strictly sequential. Under the default `FifoQueue` policy a
//! popped vertex is drained: consecutive topplings at the same vertex are
//! drawn as one multinomial batch, which is distributed identically to
//! drawing them one by one (the per-vertex instruction sequence is i.i.d.)
//! and keeps piles with large heights tractable. `UniformRandomUnstable`
//! and `Leftmost` perform literal single topplings so that the selection
//! dynamics match their definitions step for step.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use super::offset_vec::OffsetVec;
use super::{
    apply_emission, Domain, Emission, ExitCounts, Inner, Odometer, OdometerInner, SandpileConfig,
    Side, Site, StabilizationOutcome, TopplingEvent, TopplingPolicy, TopplingRule,
};
use crate::error::{Result, SandpileError};

/// Below this many consecutive topplings the engine draws branches one by
/// one instead of sampling binomial counts.
const BATCH_MIN: u64 = 8;

pub(super) struct EngineOutput {
    pub outcome: StabilizationOutcome,
    pub events: Option<Vec<TopplingEvent>>,
}

pub(super) fn check_rule_domain(rule: &TopplingRule, domain: &Domain) -> Result<()> {
    match (rule, domain) {
        (TopplingRule::Uniform1D | TopplingRule::Srw1D, Domain::Box2D { .. }) => {
            Err(SandpileError::RuleDomainMismatch {
                rule: rule.name().to_string(),
                domain: domain.name().to_string(),
            })
        }
        _ => Ok(()),
    }
}

pub(super) fn run(
    config: &SandpileConfig,
    rule: &TopplingRule,
    policy: TopplingPolicy,
    rng: &mut impl Rng,
    budget: u64,
    track: bool,
) -> Result<EngineOutput> {
    if budget == 0 {
        return Err(SandpileError::InvalidParameter(
            "step budget must be >= 1".into(),
        ));
    }
    check_rule_domain(rule, &config.domain())?;
    if let TopplingRule::PToppling {
        p,
        literal_empty: false,
    } = rule
    {
        if *p == 0.0 && !config.is_stable() {
            // Rejection resampling never yields an emission: no progress.
            return Err(SandpileError::BudgetExceeded { steps: 0, budget });
        }
    }
    let out = match &config.inner {
        Inner::Line { bounds, heights } => {
            run_line(*bounds, heights, rule, policy, rng, budget, track)?
        }
        Inner::Grid { side, heights } => {
            run_grid(*side, heights, rule, policy, rng, budget, track)?
        }
    };
    debug_assert!(out.outcome.final_config.is_stable());
    debug_assert_eq!(
        config.total_mass(),
        out.outcome.final_config.total_mass() + out.outcome.exits.total()
    );
    Ok(out)
}

/// Single-toppling emission draw on a line vertex.
pub(super) fn draw_line_emission(rule: &TopplingRule, rng: &mut impl Rng) -> Emission {
    match rule {
        TopplingRule::Uniform1D => match rng.random_range(0..3u8) {
            0 => Emission::of(&[Side::Left]),
            1 => Emission::of(&[Side::Right]),
            _ => Emission::of(&[Side::Left, Side::Right]),
        },
        TopplingRule::Srw1D => {
            if rng.random_bool(0.5) {
                Emission::of(&[Side::Left])
            } else {
                Emission::of(&[Side::Right])
            }
        }
        TopplingRule::PToppling { p, literal_empty } => loop {
            let mut e = Emission::EMPTY;
            if rng.random_bool(*p) {
                e = e.with(Side::Left);
            }
            if rng.random_bool(*p) {
                e = e.with(Side::Right);
            }
            if *literal_empty || !e.is_empty() {
                return e;
            }
        },
    }
}

/// Single-toppling emission draw on a box vertex.
pub(super) fn draw_grid_emission(rule: &TopplingRule, rng: &mut impl Rng) -> Emission {
    match rule {
        TopplingRule::PToppling { p, literal_empty } => loop {
            let mut e = Emission::EMPTY;
            for side in Side::GRID {
                if rng.random_bool(*p) {
                    e = e.with(side);
                }
            }
            if *literal_empty || !e.is_empty() {
                return e;
            }
        },
        _ => unreachable!("rule/domain compatibility is checked before sampling"),
    }
}

enum Frontier<K: Ord + Copy> {
    Fifo(VecDeque<K>),
    Pool(Vec<K>),
    Heap(BinaryHeap<Reverse<K>>),
}

impl<K: Ord + Copy> Frontier<K> {
    fn new(policy: TopplingPolicy) -> Self {
        match policy {
            TopplingPolicy::FifoQueue => Frontier::Fifo(VecDeque::new()),
            TopplingPolicy::UniformRandomUnstable => Frontier::Pool(Vec::new()),
            TopplingPolicy::Leftmost => Frontier::Heap(BinaryHeap::new()),
        }
    }

    fn push(&mut self, key: K) {
        match self {
            Frontier::Fifo(q) => q.push_back(key),
            Frontier::Pool(v) => v.push(key),
            Frontier::Heap(h) => h.push(Reverse(key)),
        }
    }

    fn pop(&mut self, rng: &mut impl Rng) -> Option<K> {
        match self {
            Frontier::Fifo(q) => q.pop_front(),
            Frontier::Pool(v) => {
                if v.is_empty() {
                    None
                } else {
                    let i = rng.random_range(0..v.len());
                    Some(v.swap_remove(i))
                }
            }
            Frontier::Heap(h) => h.pop().map(|Reverse(k)| k),
        }
    }
}

/// Per-toppling branch law on the line: probability of the two-sided
/// branch, with the remaining mass split evenly between left and right.
fn line_both_probability(rule: &TopplingRule) -> f64 {
    match rule {
        TopplingRule::Uniform1D => 1.0 / 3.0,
        TopplingRule::Srw1D => 0.0,
        // Conditioned on a nonempty emission: p^2 / (1 - (1-p)^2).
        TopplingRule::PToppling { p, .. } => p / (2.0 - p),
    }
}

/// Most topplings a vertex of height `h >= 2` supports in a row without
/// its height ever dropping below zero mid-sequence.
fn line_max_run(rule: &TopplingRule, h: u32) -> u64 {
    match rule {
        // Each toppling removes one or two particles.
        TopplingRule::Uniform1D | TopplingRule::PToppling { .. } => u64::from(h / 2),
        // Each toppling removes exactly one particle; stop at height 1.
        TopplingRule::Srw1D => u64::from(h - 1),
    }
}

struct LineBuffers {
    growable: bool,
    heights: OffsetVec<u32>,
    odometer: OffsetVec<u64>,
    queued: OffsetVec<bool>,
}

impl LineBuffers {
    fn ensure(&mut self, pos: i64) {
        debug_assert!(self.growable || self.heights.contains(pos));
        self.heights.ensure(pos, 0);
        self.odometer.ensure(pos, 0);
        self.queued.ensure(pos, false);
    }
}

#[allow(clippy::too_many_arguments)]
fn run_line(
    bounds: Option<(i64, i64)>,
    heights0: &OffsetVec<u32>,
    rule: &TopplingRule,
    policy: TopplingPolicy,
    rng: &mut impl Rng,
    budget: u64,
    track: bool,
) -> Result<EngineOutput> {
    let mut bufs = LineBuffers {
        growable: bounds.is_none(),
        heights: heights0.clone(),
        odometer: OffsetVec::new(heights0.lo(), heights0.len(), 0u64),
        queued: OffsetVec::new(heights0.lo(), heights0.len(), false),
    };
    let mut frontier = Frontier::new(policy);
    for pos in bufs.heights.lo()..=bufs.heights.hi() {
        if *bufs.heights.get(pos) >= 2 {
            frontier.push(pos);
            *bufs.queued.get_mut(pos) = true;
        }
    }

    let mut exits = ExitCounts::default();
    let mut steps: u64 = 0;
    let mut events: Option<Vec<TopplingEvent>> = track.then(Vec::new);
    // Only the FIFO policy drains and batches; the others are literal
    // one-toppling-per-selection dynamics.
    let single_only = track || policy != TopplingPolicy::FifoQueue;
    let literal = matches!(
        rule,
        TopplingRule::PToppling {
            literal_empty: true,
            ..
        }
    );
    let q_both = line_both_probability(rule);

    while let Some(v) = frontier.pop(rng) {
        *bufs.queued.get_mut(v) = false;
        loop {
            let h = *bufs.heights.get(v);
            if h < 2 {
                break;
            }
            if steps >= budget {
                return Err(SandpileError::BudgetExceeded { steps, budget });
            }

            let mut t = if single_only || literal {
                1
            } else {
                line_max_run(rule, h)
            };
            t = t.min(budget - steps);

            let (mut c_left, mut c_right, mut c_both) = (0u64, 0u64, 0u64);
            let mut performed = 0u64;
            if t >= BATCH_MIN {
                c_both = if q_both > 0.0 {
                    Binomial::new(t, q_both)
                        .expect("valid binomial")
                        .sample(rng)
                } else {
                    0
                };
                let rest = t - c_both;
                c_left = if rest > 0 {
                    Binomial::new(rest, 0.5)
                        .expect("valid binomial")
                        .sample(rng)
                } else {
                    0
                };
                c_right = rest - c_left;
                performed = t;
            } else {
                for _ in 0..t {
                    let e = draw_line_emission(rule, rng);
                    if let Some(log) = events.as_mut() {
                        log.push(TopplingEvent {
                            site: Site::Pos(v),
                            emission: e,
                        });
                    }
                    match (e.contains(Side::Left), e.contains(Side::Right)) {
                        (true, true) => c_both += 1,
                        (true, false) => c_left += 1,
                        (false, true) => c_right += 1,
                        (false, false) => {}
                    }
                    performed += 1;
                }
            }

            let removed = c_left + c_right + 2 * c_both;
            debug_assert!(removed <= u64::from(h));
            *bufs.heights.get_mut(v) = h - removed as u32;
            *bufs.odometer.get_mut(v) += performed;
            steps += performed;

            let left_out = c_left + c_both;
            let right_out = c_right + c_both;
            for (out, side, target) in [
                (left_out, Side::Left, v - 1),
                (right_out, Side::Right, v + 1),
            ] {
                if out == 0 {
                    continue;
                }
                if let Some((a, b)) = bounds {
                    if target < a || target > b {
                        exits.add(side, out);
                        continue;
                    }
                } else {
                    bufs.ensure(target);
                }
                let th = bufs.heights.get_mut(target);
                *th += out as u32;
                if *th >= 2 && !*bufs.queued.get(target) {
                    frontier.push(target);
                    *bufs.queued.get_mut(target) = true;
                }
            }

            if single_only {
                break;
            }
        }
        if *bufs.heights.get(v) >= 2 && !*bufs.queued.get(v) {
            frontier.push(v);
            *bufs.queued.get_mut(v) = true;
        }
    }

    Ok(EngineOutput {
        outcome: StabilizationOutcome {
            final_config: SandpileConfig {
                inner: Inner::Line {
                    bounds,
                    heights: bufs.heights,
                },
            },
            odometer: Odometer {
                inner: OdometerInner::Line(bufs.odometer),
            },
            exits,
            steps,
        },
        events,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_grid(
    side: u32,
    heights0: &[u32],
    rule: &TopplingRule,
    policy: TopplingPolicy,
    rng: &mut impl Rng,
    budget: u64,
    track: bool,
) -> Result<EngineOutput> {
    let n = side as usize;
    let mut heights = heights0.to_vec();
    let mut odometer = vec![0u64; heights.len()];
    let mut queued = vec![false; heights.len()];
    let mut frontier: Frontier<usize> = Frontier::new(policy);
    for (i, &h) in heights.iter().enumerate() {
        if h >= 4 {
            frontier.push(i);
            queued[i] = true;
        }
    }

    let mut exits = ExitCounts::default();
    let mut steps: u64 = 0;
    let mut events: Option<Vec<TopplingEvent>> = track.then(Vec::new);
    let single_only = track || policy != TopplingPolicy::FifoQueue;

    while let Some(i) = frontier.pop(rng) {
        queued[i] = false;
        loop {
            let h = heights[i];
            if h < 4 {
                break;
            }
            if steps >= budget {
                return Err(SandpileError::BudgetExceeded { steps, budget });
            }

            let e = draw_grid_emission(rule, rng);
            if let Some(log) = events.as_mut() {
                let site = Site::Cell {
                    x: (i % n + 1) as u32,
                    y: (i / n + 1) as u32,
                };
                log.push(TopplingEvent { site, emission: e });
            }
            heights[i] -= e.count();
            odometer[i] += 1;
            steps += 1;

            let (x, y) = (i % n, i / n);
            for dir in e.iter() {
                let target = match dir {
                    Side::Left => (x > 0).then(|| i - 1),
                    Side::Right => (x + 1 < n).then(|| i + 1),
                    Side::Up => (y > 0).then(|| i - n),
                    Side::Down => (y + 1 < n).then(|| i + n),
                };
                match target {
                    Some(j) => {
                        heights[j] += 1;
                        if heights[j] >= 4 && !queued[j] {
                            frontier.push(j);
                            queued[j] = true;
                        }
                    }
                    None => exits.add(dir, 1),
                }
            }

            if single_only {
                break;
            }
        }
        if heights[i] >= 4 && !queued[i] {
            frontier.push(i);
            queued[i] = true;
        }
    }

    Ok(EngineOutput {
        outcome: StabilizationOutcome {
            final_config: SandpileConfig {
                inner: Inner::Grid { side, heights },
            },
            odometer: Odometer {
                inner: OdometerInner::Grid {
                    side,
                    counts: odometer,
                },
            },
            exits,
            steps,
        },
        events,
    })
}

/// Re-apply a toppling log to its initial configuration.
///
/// Replay is deterministic, so it reproduces the logged run's final
/// configuration exactly.
pub fn replay(initial: &SandpileConfig, events: &[TopplingEvent]) -> Result<SandpileConfig> {
    let mut config = initial.clone();
    let threshold = config.threshold();
    for event in events {
        if config.height(event.site) < threshold {
            return Err(SandpileError::InvalidParameter(
                "replay: log topples a stable vertex".into(),
            ));
        }
        apply_emission(&mut config, event.site, event.emission);
    }
    Ok(config)
}
