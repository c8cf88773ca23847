//! Brute-force absorption probabilities for tiny line instances, in exact
//! rational arithmetic.
//!
//! The reachable configurations of a small initial pile form a finite
//! graph once a fixed vertex order is chosen for toppling (order choice
//! does not change the outcome law, and [`OracleOrder`] lets tests verify
//! that exactly). Exit counts ride along in the state, so absorbing
//! states distinguish where mass left. The absorption distribution is the
//! solution of a linear system over the transient states, solved layer by
//! layer in the total exit count: transitions never decrease it, so each
//! layer needs one small dense exact solve.
//!
//! This module is deliberately independent of the stabilization engine;
//! it is the ground truth the engine's Monte Carlo estimates and the
//! closed forms are checked against.

use std::collections::HashMap;

use num_traits::Zero;

use crate::error::{Result, SandpileError};
use crate::gambler::sgr_closed_form;
use crate::holes::hole_closed_form;
use crate::linalg::solve_dense;
use crate::scalar::Scalar;
use crate::Exact;

/// Toppling law with rational branch probabilities on the line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleRule {
    /// {left}, {right}, {left, right} each with probability 1/3.
    Uniform1D,
    /// One particle left or right with probability 1/2.
    Srw1D,
    /// p-toppling with `p = num/den`, empty emissions rejected.
    PTopplingRational { num: u32, den: u32 },
}

impl OracleRule {
    /// Branches as `(sends left, sends right, probability)`.
    fn branches(&self) -> Result<Vec<(u32, u32, Exact)>> {
        match self {
            OracleRule::Uniform1D => {
                let third = Exact::from_ratio(1, 3);
                Ok(vec![
                    (1, 0, third.clone()),
                    (0, 1, third.clone()),
                    (1, 1, third),
                ])
            }
            OracleRule::Srw1D => {
                let half = Exact::from_ratio(1, 2);
                Ok(vec![(1, 0, half.clone()), (0, 1, half)])
            }
            OracleRule::PTopplingRational { num, den } => {
                if *den == 0 || num > den || *num == 0 {
                    return Err(SandpileError::InvalidParameter(format!(
                        "rational p must satisfy 0 < num/den <= 1, got {num}/{den}"
                    )));
                }
                let p = Exact::from_ratio(*num as i64, *den as i64);
                let q = Exact::from_ratio(1, 1) - p.clone();
                // Conditioned on at least one edge firing.
                let z = Exact::from_ratio(1, 1) - q.clone() * q.clone();
                let single = p.clone() * q / z.clone();
                let both = p.clone() * p / z;
                Ok(vec![(1, 0, single.clone()), (0, 1, single), (1, 1, both)])
            }
        }
    }
}

/// Which unstable vertex the oracle topples first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OracleOrder {
    #[default]
    Leftmost,
    Rightmost,
}

/// Size limits for the reachable state graph.
#[derive(Debug, Clone, Copy)]
pub struct OracleCaps {
    pub max_mass: u64,
    pub max_vertices: usize,
    pub max_states: usize,
}

impl Default for OracleCaps {
    fn default() -> Self {
        OracleCaps {
            max_mass: 16,
            max_vertices: 8,
            max_states: 20_000,
        }
    }
}

/// A stable final configuration together with its exit counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AbsorbedOutcome {
    pub heights: Vec<u32>,
    pub exits_left: u32,
    pub exits_right: u32,
}

/// Exact distribution over absorbed outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionDistribution {
    outcomes: Vec<(AbsorbedOutcome, Exact)>,
}

impl AbsorptionDistribution {
    /// Outcomes in lexicographic order with their probabilities.
    pub fn outcomes(&self) -> &[(AbsorbedOutcome, Exact)] {
        &self.outcomes
    }

    /// Probability of one outcome; zero when unreachable.
    pub fn prob(&self, heights: &[u32], exits: (u32, u32)) -> Exact {
        self.outcomes
            .iter()
            .find(|(o, _)| o.heights == heights && (o.exits_left, o.exits_right) == exits)
            .map(|(_, p)| p.clone())
            .unwrap_or_else(Exact::zero)
    }

    pub fn total(&self) -> Exact {
        self.outcomes
            .iter()
            .fold(Exact::zero(), |acc, (_, p)| acc + p.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct State {
    heights: Vec<u32>,
    exits_left: u32,
    exits_right: u32,
}

impl State {
    fn layer(&self) -> u32 {
        self.exits_left + self.exits_right
    }

    fn toppled_vertex(&self, order: OracleOrder) -> Option<usize> {
        match order {
            OracleOrder::Leftmost => self.heights.iter().position(|&h| h >= 2),
            OracleOrder::Rightmost => self.heights.iter().rposition(|&h| h >= 2),
        }
    }
}

/// Exact absorption distribution of `initial` (heights on positions
/// `1..=len`) under `rule`, toppling in the fixed `order`.
pub fn absorption_distribution(
    initial: &[u32],
    rule: OracleRule,
    order: OracleOrder,
    caps: &OracleCaps,
) -> Result<AbsorptionDistribution> {
    if initial.is_empty() {
        return Err(SandpileError::InvalidParameter(
            "initial configuration is empty".into(),
        ));
    }
    if initial.len() > caps.max_vertices {
        return Err(SandpileError::InvalidParameter(format!(
            "{} vertices exceed the oracle cap of {}",
            initial.len(),
            caps.max_vertices
        )));
    }
    let mass: u64 = initial.iter().map(|&h| u64::from(h)).sum();
    if mass > caps.max_mass {
        return Err(SandpileError::InvalidParameter(format!(
            "mass {mass} exceeds the oracle cap of {}",
            caps.max_mass
        )));
    }
    let branches = rule.branches()?;
    let len = initial.len();

    // Enumerate the reachable graph.
    let mut states: Vec<State> = vec![State {
        heights: initial.to_vec(),
        exits_left: 0,
        exits_right: 0,
    }];
    let mut ids: HashMap<State, usize> = HashMap::new();
    ids.insert(states[0].clone(), 0);
    // Per transient state: (successor id, probability). None = absorbing.
    let mut succs: Vec<Option<Vec<(usize, Exact)>>> = Vec::new();
    let mut frontier = vec![0usize];
    while let Some(id) = frontier.pop() {
        let state = states[id].clone();
        let Some(v) = state.toppled_vertex(order) else {
            if succs.len() <= id {
                succs.resize(id + 1, None);
            }
            succs[id] = None;
            continue;
        };
        let mut edges = Vec::with_capacity(branches.len());
        for (l, r, p) in &branches {
            let mut next = state.clone();
            next.heights[v] -= l + r;
            if *l > 0 {
                if v == 0 {
                    next.exits_left += 1;
                } else {
                    next.heights[v - 1] += 1;
                }
            }
            if *r > 0 {
                if v == len - 1 {
                    next.exits_right += 1;
                } else {
                    next.heights[v + 1] += 1;
                }
            }
            let next_id = match ids.get(&next) {
                Some(&existing) => existing,
                None => {
                    let new_id = states.len();
                    if new_id >= caps.max_states {
                        return Err(SandpileError::StateSpaceTooLarge {
                            states: new_id + 1,
                            cap: caps.max_states,
                        });
                    }
                    ids.insert(next.clone(), new_id);
                    states.push(next);
                    frontier.push(new_id);
                    new_id
                }
            };
            edges.push((next_id, p.clone()));
        }
        if succs.len() <= id {
            succs.resize(id + 1, None);
        }
        succs[id] = Some(edges);
    }
    succs.resize(states.len(), None);

    // Expected visits, solved layer by layer in the total exit count.
    let is_transient: Vec<bool> = succs.iter().map(|s| s.is_some()).collect();
    if !is_transient[0] {
        let s = &states[0];
        return Ok(AbsorptionDistribution {
            outcomes: vec![(
                AbsorbedOutcome {
                    heights: s.heights.clone(),
                    exits_left: s.exits_left,
                    exits_right: s.exits_right,
                },
                Exact::from_ratio(1, 1),
            )],
        });
    }

    let mut layers: Vec<u32> = states
        .iter()
        .enumerate()
        .filter(|(id, _)| is_transient[*id])
        .map(|(_, s)| s.layer())
        .collect();
    layers.sort_unstable();
    layers.dedup();

    let mut injected = vec![Exact::zero(); states.len()];
    injected[0] = Exact::from_ratio(1, 1);
    let mut absorbed: HashMap<usize, Exact> = HashMap::new();

    for layer in layers {
        let members: Vec<usize> = (0..states.len())
            .filter(|&id| is_transient[id] && states[id].layer() == layer)
            .collect();
        let local: HashMap<usize, usize> =
            members.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let m = members.len();

        // (I - Q)^T restricted to this layer.
        let mut a = vec![vec![Exact::zero(); m]; m];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = Exact::from_ratio(1, 1);
        }
        for (col, &id) in members.iter().enumerate() {
            for (next, p) in succs[id].as_ref().expect("transient") {
                if let Some(&row) = local.get(next) {
                    let upd = a[row][col].clone() - p.clone();
                    a[row][col] = upd;
                }
            }
        }
        let rhs: Vec<Exact> = members.iter().map(|&id| injected[id].clone()).collect();
        let visits = solve_dense(a, rhs)?;

        // Push this layer's mass across layer-leaving edges.
        for (i, &id) in members.iter().enumerate() {
            if visits[i].is_zero() {
                continue;
            }
            for (next, p) in succs[id].as_ref().expect("transient") {
                let flow = visits[i].clone() * p.clone();
                if !is_transient[*next] {
                    let slot = absorbed.entry(*next).or_insert_with(Exact::zero);
                    *slot = slot.clone() + flow;
                } else if states[*next].layer() > layer {
                    injected[*next] = injected[*next].clone() + flow;
                }
            }
        }
    }

    let mut outcomes: Vec<(AbsorbedOutcome, Exact)> = absorbed
        .into_iter()
        .map(|(id, p)| {
            let s = &states[id];
            (
                AbsorbedOutcome {
                    heights: s.heights.clone(),
                    exits_left: s.exits_left,
                    exits_right: s.exits_right,
                },
                p,
            )
        })
        .collect();
    outcomes.sort_by(|(a, _), (b, _)| a.cmp(b));
    let dist = AbsorptionDistribution { outcomes };
    assert!(
        dist.total() == Exact::from_ratio(1, 1),
        "absorption probabilities must sum to one exactly"
    );
    Ok(dist)
}

/// One comparison row of [`oracle_vs_closed_forms`].
#[derive(Debug, Clone)]
pub struct OracleCheckRow {
    pub n: usize,
    pub k: usize,
    /// Hole position for `h` rows.
    pub j: Option<usize>,
    pub quantity: &'static str,
    pub oracle: Exact,
    pub closed: Exact,
}

impl OracleCheckRow {
    pub fn matches(&self) -> bool {
        self.oracle == self.closed
    }
}

/// Report of oracle-vs-closed-form comparisons.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub rows: Vec<OracleCheckRow>,
}

impl OracleReport {
    pub fn all_match(&self) -> bool {
        self.rows.iter().all(OracleCheckRow::matches)
    }

    /// Rows per instance are `qL`, `qR`, `qB`, one `h` row per hole
    /// position, and a support-total row; summed over all instances.
    pub fn expected_row_count(max_n: usize) -> usize {
        (1..=max_n).map(|n| n * (n + 4)).sum()
    }
}

/// Compare the oracle's exit and hole probabilities against every closed
/// form, for all extra-particle positions on segments up to `max_n`.
/// Comparisons are exact rational equalities.
pub fn oracle_vs_closed_forms(max_n: usize, caps: &OracleCaps) -> Result<OracleReport> {
    let mut rows = Vec::new();
    for n in 1..=max_n {
        for k in 1..=n {
            let mut initial = vec![1u32; n];
            initial[k - 1] += 1;
            let dist = absorption_distribution(
                &initial,
                OracleRule::Uniform1D,
                OracleOrder::Leftmost,
                caps,
            )?;
            let full = vec![1u32; n];
            let (ql, qr, qb) = sgr_closed_form::<Exact>(n, k)?;
            rows.push(OracleCheckRow {
                n,
                k,
                j: None,
                quantity: "qL",
                oracle: dist.prob(&full, (1, 0)),
                closed: ql.clone(),
            });
            rows.push(OracleCheckRow {
                n,
                k,
                j: None,
                quantity: "qR",
                oracle: dist.prob(&full, (0, 1)),
                closed: qr.clone(),
            });
            let mut hole_total = Exact::zero();
            let mut hole_rows = Vec::new();
            for j in 1..=n {
                let mut vacant = vec![1u32; n];
                vacant[j - 1] = 0;
                let oracle_h = dist.prob(&vacant, (1, 1));
                hole_total += oracle_h.clone();
                hole_rows.push(OracleCheckRow {
                    n,
                    k,
                    j: Some(j),
                    quantity: "h",
                    oracle: oracle_h,
                    closed: hole_closed_form::<Exact>(n, k, j)?,
                });
            }
            rows.push(OracleCheckRow {
                n,
                k,
                j: None,
                quantity: "qB",
                oracle: hole_total.clone(),
                closed: qb.clone(),
            });
            rows.extend(hole_rows);
            // The three outcome kinds exhaust the distribution.
            rows.push(OracleCheckRow {
                n,
                k,
                j: None,
                quantity: "support_total",
                oracle: dist.prob(&full, (1, 0)) + dist.prob(&full, (0, 1)) + hole_total,
                closed: Exact::from_ratio(1, 1),
            });
        }
    }
    Ok(OracleReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(a: i64, b: i64) -> Exact {
        Exact::from_ratio(a, b)
    }

    #[test]
    fn single_vertex_pile_of_two() {
        let dist = absorption_distribution(
            &[2],
            OracleRule::Uniform1D,
            OracleOrder::Leftmost,
            &OracleCaps::default(),
        )
        .unwrap();
        assert_eq!(dist.prob(&[1], (1, 0)), r(1, 3));
        assert_eq!(dist.prob(&[1], (0, 1)), r(1, 3));
        assert_eq!(dist.prob(&[0], (1, 1)), r(1, 3));
        assert_eq!(dist.outcomes().len(), 3);
    }

    #[test]
    fn two_vertex_segment_extra_at_one() {
        let dist = absorption_distribution(
            &[2, 1],
            OracleRule::Uniform1D,
            OracleOrder::Leftmost,
            &OracleCaps::default(),
        )
        .unwrap();
        assert_eq!(dist.prob(&[1, 1], (1, 0)), r(1, 2));
        assert_eq!(dist.prob(&[1, 1], (0, 1)), r(1, 6));
        assert_eq!(dist.prob(&[0, 1], (1, 1)), r(1, 6));
        assert_eq!(dist.prob(&[1, 0], (1, 1)), r(1, 6));
    }

    #[test]
    fn stable_input_is_a_point_mass() {
        let dist = absorption_distribution(
            &[1, 0, 1],
            OracleRule::Uniform1D,
            OracleOrder::Leftmost,
            &OracleCaps::default(),
        )
        .unwrap();
        assert_eq!(dist.outcomes().len(), 1);
        assert_eq!(dist.prob(&[1, 0, 1], (0, 0)), r(1, 1));
    }

    #[test]
    fn toppling_order_does_not_matter() {
        for k in 1..=3 {
            let mut initial = vec![1u32; 3];
            initial[k - 1] += 1;
            let caps = OracleCaps::default();
            let left = absorption_distribution(
                &initial,
                OracleRule::Uniform1D,
                OracleOrder::Leftmost,
                &caps,
            )
            .unwrap();
            let right = absorption_distribution(
                &initial,
                OracleRule::Uniform1D,
                OracleOrder::Rightmost,
                &caps,
            )
            .unwrap();
            assert_eq!(left, right);
        }
    }

    #[test]
    fn srw_reproduces_classical_ruin() {
        // The extra particle walks until it exits: qL = 1 - k/(n+1).
        let n = 4;
        for k in 1..=n {
            let mut initial = vec![1u32; n];
            initial[k - 1] += 1;
            let dist = absorption_distribution(
                &initial,
                OracleRule::Srw1D,
                OracleOrder::Leftmost,
                &OracleCaps::default(),
            )
            .unwrap();
            let full = vec![1u32; n];
            assert_eq!(
                dist.prob(&full, (1, 0)),
                r((n + 1 - k) as i64, (n + 1) as i64)
            );
            assert_eq!(dist.prob(&full, (0, 1)), r(k as i64, (n + 1) as i64));
        }
    }

    #[test]
    fn half_toppling_matches_uniform() {
        // p = 1/2 conditioned on a nonempty emission is the uniform rule.
        let dist_u = absorption_distribution(
            &[1, 2, 1],
            OracleRule::Uniform1D,
            OracleOrder::Leftmost,
            &OracleCaps::default(),
        )
        .unwrap();
        let dist_p = absorption_distribution(
            &[1, 2, 1],
            OracleRule::PTopplingRational { num: 1, den: 2 },
            OracleOrder::Leftmost,
            &OracleCaps::default(),
        )
        .unwrap();
        assert_eq!(dist_u, dist_p);
    }

    #[test]
    fn caps_are_enforced() {
        assert!(matches!(
            absorption_distribution(
                &[30],
                OracleRule::Uniform1D,
                OracleOrder::Leftmost,
                &OracleCaps::default()
            ),
            Err(SandpileError::InvalidParameter(_))
        ));
        let tight = OracleCaps {
            max_states: 4,
            ..OracleCaps::default()
        };
        assert!(matches!(
            absorption_distribution(
                &[2, 2],
                OracleRule::Uniform1D,
                OracleOrder::Leftmost,
                &tight
            ),
            Err(SandpileError::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn report_matches_closed_forms_exactly() {
        let report = oracle_vs_closed_forms(3, &OracleCaps::default()).unwrap();
        assert!(report.all_match());
        assert_eq!(report.rows.len(), OracleReport::expected_row_count(3));
    }
}
