//! Domains, sandpile configurations, random toppling rules, and the
//! abelian stabilization engine with exit-particle accounting.
//!
//! Supported domains are finite line segments (outside vertices act as a
//! sink), the growable integer line without a sink, and 2D boxes with a
//! sink all around. Thresholds are the vertex degree counting sink edges:
//! 2 on the line, 4 on a box.

mod engine;
mod offset_vec;

use rand::Rng;

use crate::error::{Result, SandpileError};
use offset_vec::OffsetVec;

pub use engine::replay;

/// One of the four lattice directions. Line domains use `Left`/`Right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Up,
    Down,
}

impl Side {
    pub const LINE: [Side; 2] = [Side::Left, Side::Right];
    pub const GRID: [Side; 4] = [Side::Left, Side::Right, Side::Up, Side::Down];

    fn bit(self) -> u8 {
        match self {
            Side::Left => 1,
            Side::Right => 2,
            Side::Up => 4,
            Side::Down => 8,
        }
    }
}

/// The set of edges that carried a particle in one toppling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Emission(u8);

impl Emission {
    pub const EMPTY: Emission = Emission(0);

    pub fn of(sides: &[Side]) -> Emission {
        Emission(sides.iter().fold(0, |acc, s| acc | s.bit()))
    }

    pub fn with(self, side: Side) -> Emission {
        Emission(self.0 | side.bit())
    }

    pub fn contains(self, side: Side) -> bool {
        self.0 & side.bit() != 0
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Side> {
        Side::GRID.into_iter().filter(move |s| self.contains(*s))
    }
}

/// A vertex of one of the supported domains.
///
/// Line vertices are integer positions; box vertices are 1-based cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Site {
    Pos(i64),
    Cell { x: u32, y: u32 },
}

/// The lattice a configuration lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// The segment `{a, ..., b}` with the outside acting as a sink.
    Segment1D { a: i64, b: i64 },
    /// The box `{1, ..., side}^2` with a sink all around.
    Box2D { side: u32 },
    /// The integer line, tracked on a growable window, with no sink.
    LineZ,
}

impl Domain {
    pub fn threshold(&self) -> u32 {
        match self {
            Domain::Segment1D { .. } | Domain::LineZ => 2,
            Domain::Box2D { .. } => 4,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Domain::Segment1D { .. } => "Segment1D",
            Domain::Box2D { .. } => "Box2D",
            Domain::LineZ => "LineZ",
        }
    }
}

/// The randomized law applied when an unstable vertex fires.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopplingRule {
    /// Emit {left}, {right}, or {left, right}, each with probability 1/3.
    /// Line domains only.
    Uniform1D,
    /// Emit one particle, left or right with probability 1/2 each.
    /// Line domains only.
    Srw1D,
    /// Every adjacent edge independently carries one particle with
    /// probability `p`. With `literal_empty` the all-empty draw is kept as
    /// a no-op toppling (it still counts in the odometer); otherwise the
    /// draw is rejected and resampled, which leaves the law of the final
    /// configuration unchanged.
    PToppling { p: f64, literal_empty: bool },
}

impl TopplingRule {
    /// p-toppling with rejection of the empty emission.
    pub fn p_toppling(p: f64) -> Result<TopplingRule> {
        Self::validate_p(p)?;
        Ok(TopplingRule::PToppling {
            p,
            literal_empty: false,
        })
    }

    /// p-toppling that keeps empty emissions as no-op topplings.
    pub fn p_toppling_literal(p: f64) -> Result<TopplingRule> {
        Self::validate_p(p)?;
        Ok(TopplingRule::PToppling {
            p,
            literal_empty: true,
        })
    }

    fn validate_p(p: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(SandpileError::InvalidParameter(format!(
                "p-toppling probability must lie in [0, 1], got {p}"
            )));
        }
        Ok(())
    }

    pub(crate) fn name(&self) -> &'static str {
        match self {
            TopplingRule::Uniform1D => "Uniform1D",
            TopplingRule::Srw1D => "SRW1D",
            TopplingRule::PToppling { .. } => "PToppling",
        }
    }

    /// Draw one emission of this rule for a vertex of the given domain.
    pub fn sample_emission(&self, domain: &Domain, rng: &mut impl Rng) -> Result<Emission> {
        engine::check_rule_domain(self, domain)?;
        if let TopplingRule::PToppling {
            p,
            literal_empty: false,
        } = self
        {
            if *p == 0.0 {
                return Err(SandpileError::InvalidParameter(
                    "p = 0 with rejection of empty emissions has no draw".into(),
                ));
            }
        }
        Ok(match domain {
            Domain::Segment1D { .. } | Domain::LineZ => engine::draw_line_emission(self, rng),
            Domain::Box2D { .. } => engine::draw_grid_emission(self, rng),
        })
    }
}

/// How the next vertex to fire is chosen among the unstable ones.
///
/// The law of the final configuration does not depend on this choice;
/// `FifoQueue` is the default because it needs no selection randomness
/// and visits vertices in cache-friendly waves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TopplingPolicy {
    #[default]
    FifoQueue,
    UniformRandomUnstable,
    Leftmost,
}

/// Heights (particle counts) on a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SandpileConfig {
    inner: Inner,
}

#[derive(Debug, Clone, PartialEq)]
enum Inner {
    Line {
        /// `Some((a, b))` for a segment with sink; `None` for the full line.
        bounds: Option<(i64, i64)>,
        heights: OffsetVec<u32>,
    },
    Grid {
        side: u32,
        heights: Vec<u32>,
    },
}

impl SandpileConfig {
    /// A segment `{a, ..., b}` with the given heights.
    pub fn segment(a: i64, b: i64, heights: Vec<u32>) -> Result<SandpileConfig> {
        if a > b {
            return Err(SandpileError::InvalidParameter(format!(
                "segment requires a <= b, got [{a}, {b}]"
            )));
        }
        let len = (b - a + 1) as usize;
        if heights.len() != len {
            return Err(SandpileError::InvalidParameter(format!(
                "segment [{a}, {b}] needs {len} heights, got {}",
                heights.len()
            )));
        }
        let mut cells = OffsetVec::new(a, len, 0u32);
        for (i, h) in heights.into_iter().enumerate() {
            *cells.get_mut(a + i as i64) = h;
        }
        Ok(SandpileConfig {
            inner: Inner::Line {
                bounds: Some((a, b)),
                heights: cells,
            },
        })
    }

    /// The full configuration (one particle everywhere) on `C_n = {1, ..., n}`.
    pub fn full_segment(n: usize) -> Result<SandpileConfig> {
        if n == 0 {
            return Err(SandpileError::InvalidParameter(
                "segment length must be >= 1".into(),
            ));
        }
        Self::segment(1, n as i64, vec![1; n])
    }

    /// The full configuration on `C_n` plus one extra particle at `k`.
    pub fn full_plus_delta(n: usize, k: usize) -> Result<SandpileConfig> {
        if k == 0 || k > n {
            return Err(SandpileError::InvalidParameter(format!(
                "particle position k must lie in 1..={n}, got {k}"
            )));
        }
        let mut heights = vec![1; n];
        heights[k - 1] += 1;
        Self::segment(1, n as i64, heights)
    }

    /// The full configuration on `C_n` with the particle at `j` removed.
    pub fn vacant(n: usize, j: usize) -> Result<SandpileConfig> {
        if j == 0 || j > n {
            return Err(SandpileError::InvalidParameter(format!(
                "hole position j must lie in 1..={n}, got {j}"
            )));
        }
        let mut heights = vec![1; n];
        heights[j - 1] = 0;
        Self::segment(1, n as i64, heights)
    }

    /// `mass` particles at the origin of the sink-free integer line.
    pub fn single_source(mass: u32) -> SandpileConfig {
        let mut heights = OffsetVec::new(0, 1, 0u32);
        *heights.get_mut(0) = mass;
        SandpileConfig {
            inner: Inner::Line {
                bounds: None,
                heights,
            },
        }
    }

    /// A box `{1, ..., side}^2` with the given row-major heights.
    pub fn box2d(side: u32, heights: Vec<u32>) -> Result<SandpileConfig> {
        if side == 0 {
            return Err(SandpileError::InvalidParameter(
                "box side must be >= 1".into(),
            ));
        }
        let want = (side as usize) * (side as usize);
        if heights.len() != want {
            return Err(SandpileError::InvalidParameter(format!(
                "box of side {side} needs {want} heights, got {}",
                heights.len()
            )));
        }
        Ok(SandpileConfig {
            inner: Inner::Grid { side, heights },
        })
    }

    /// An empty box.
    pub fn box2d_empty(side: u32) -> Result<SandpileConfig> {
        let cells = (side as usize)
            .checked_mul(side as usize)
            .ok_or_else(|| SandpileError::InvalidParameter(format!("box side {side} overflows")))?;
        Self::box2d(side, vec![0; cells])
    }

    pub fn domain(&self) -> Domain {
        match &self.inner {
            Inner::Line {
                bounds: Some((a, b)),
                ..
            } => Domain::Segment1D { a: *a, b: *b },
            Inner::Line { bounds: None, .. } => Domain::LineZ,
            Inner::Grid { side, .. } => Domain::Box2D { side: *side },
        }
    }

    pub fn threshold(&self) -> u32 {
        self.domain().threshold()
    }

    /// Number of vertices (for `LineZ`: the current tracked window).
    pub fn vertex_count(&self) -> u64 {
        match &self.inner {
            Inner::Line { heights, .. } => heights.len() as u64,
            Inner::Grid { heights, .. } => heights.len() as u64,
        }
    }

    /// Height at a site. Sites outside a `LineZ` window hold zero; sites
    /// outside a segment or box are an error in the caller's bookkeeping.
    pub fn height(&self, site: Site) -> u32 {
        match (&self.inner, site) {
            (Inner::Line { bounds, heights }, Site::Pos(p)) => {
                if let Some((a, b)) = bounds {
                    assert!(
                        p >= *a && p <= *b,
                        "position {p} outside segment [{a}, {b}]"
                    );
                }
                if heights.contains(p) {
                    *heights.get(p)
                } else {
                    0
                }
            }
            (Inner::Grid { side, heights }, Site::Cell { x, y }) => {
                assert!(
                    x >= 1 && x <= *side && y >= 1 && y <= *side,
                    "cell ({x}, {y}) outside box of side {side}"
                );
                heights[((y - 1) * side + (x - 1)) as usize]
            }
            _ => panic!("site kind does not match the domain"),
        }
    }

    /// Add `count` particles at a site.
    pub fn add_particles(&mut self, site: Site, count: u32) {
        match (&mut self.inner, site) {
            (Inner::Line { bounds, heights }, Site::Pos(p)) => {
                if let Some((a, b)) = bounds {
                    assert!(p >= *a && p <= *b, "position {p} outside segment");
                } else {
                    heights.ensure(p, 0);
                }
                *heights.get_mut(p) += count;
            }
            (Inner::Grid { side, heights }, Site::Cell { x, y }) => {
                assert!(x >= 1 && x <= *side && y >= 1 && y <= *side);
                heights[((y - 1) * *side + (x - 1)) as usize] += count;
            }
            _ => panic!("site kind does not match the domain"),
        }
    }

    pub fn total_mass(&self) -> u64 {
        match &self.inner {
            Inner::Line { heights, .. } => heights.iter().map(|(_, &h)| u64::from(h)).sum(),
            Inner::Grid { heights, .. } => heights.iter().map(|&h| u64::from(h)).sum(),
        }
    }

    pub fn is_stable(&self) -> bool {
        let t = self.threshold();
        match &self.inner {
            Inner::Line { heights, .. } => heights.iter().all(|(_, &h)| h < t),
            Inner::Grid { heights, .. } => heights.iter().all(|&h| h < t),
        }
    }

    /// A uniformly random vertex. `None` on `LineZ`, which has no finite
    /// vertex set to draw from.
    pub fn uniform_site(&self, rng: &mut impl Rng) -> Option<Site> {
        match &self.inner {
            Inner::Line {
                bounds: Some((a, b)),
                ..
            } => Some(Site::Pos(rng.random_range(*a..=*b))),
            Inner::Line { bounds: None, .. } => None,
            Inner::Grid { side, .. } => Some(Site::Cell {
                x: rng.random_range(1..=*side),
                y: rng.random_range(1..=*side),
            }),
        }
    }

    /// For line domains: `(leftmost position, dense heights)`.
    pub fn line_heights(&self) -> Option<(i64, Vec<u32>)> {
        match &self.inner {
            Inner::Line { heights, .. } => {
                Some((heights.lo(), heights.iter().map(|(_, &h)| h).collect()))
            }
            Inner::Grid { .. } => None,
        }
    }

    /// For box domains: `(side, row-major heights)`.
    pub fn grid_heights(&self) -> Option<(u32, &[u32])> {
        match &self.inner {
            Inner::Grid { side, heights } => Some((*side, heights)),
            Inner::Line { .. } => None,
        }
    }

    /// Extremes of the nonzero heights on a line domain.
    pub fn line_support(&self) -> Option<(i64, i64)> {
        match &self.inner {
            Inner::Line { heights, .. } => {
                let mut range: Option<(i64, i64)> = None;
                for (pos, &h) in heights.iter() {
                    if h > 0 {
                        range = Some(match range {
                            None => (pos, pos),
                            Some((lo, hi)) => (lo.min(pos), hi.max(pos)),
                        });
                    }
                }
                range
            }
            Inner::Grid { .. } => None,
        }
    }
}

/// Apply one emission at a site: the fired vertex loses one particle per
/// emitted edge; in-domain targets gain one, sink targets absorb one.
/// Grows a `LineZ` window as needed. Used by log replay.
fn apply_emission(config: &mut SandpileConfig, site: Site, emission: Emission) {
    match (&mut config.inner, site) {
        (Inner::Line { bounds, heights }, Site::Pos(p)) => {
            *heights.get_mut(p) -= emission.count();
            for side in emission.iter() {
                let target = match side {
                    Side::Left => p - 1,
                    Side::Right => p + 1,
                    _ => panic!("line emission with a vertical side"),
                };
                if let Some((a, b)) = bounds {
                    if target < *a || target > *b {
                        continue;
                    }
                } else {
                    heights.ensure(target, 0);
                }
                *heights.get_mut(target) += 1;
            }
        }
        (Inner::Grid { side, heights }, Site::Cell { x, y }) => {
            let n = *side;
            heights[((y - 1) * n + (x - 1)) as usize] -= emission.count();
            for dir in emission.iter() {
                let target = match dir {
                    Side::Left => (x > 1).then(|| (x - 1, y)),
                    Side::Right => (x < n).then(|| (x + 1, y)),
                    Side::Up => (y > 1).then(|| (x, y - 1)),
                    Side::Down => (y < n).then(|| (x, y + 1)),
                };
                if let Some((tx, ty)) = target {
                    heights[((ty - 1) * n + (tx - 1)) as usize] += 1;
                }
            }
        }
        _ => panic!("site kind does not match the domain"),
    }
}

/// Exit tallies per boundary side. Line domains use only `left`/`right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExitCounts {
    pub left: u64,
    pub right: u64,
    pub up: u64,
    pub down: u64,
}

impl ExitCounts {
    pub fn total(&self) -> u64 {
        self.left + self.right + self.up + self.down
    }

    fn add(&mut self, side: Side, count: u64) {
        match side {
            Side::Left => self.left += count,
            Side::Right => self.right += count,
            Side::Up => self.up += count,
            Side::Down => self.down += count,
        }
    }
}

/// Per-vertex toppling counts of one stabilization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Odometer {
    inner: OdometerInner,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum OdometerInner {
    Line(OffsetVec<u64>),
    Grid { side: u32, counts: Vec<u64> },
}

impl Odometer {
    pub fn count(&self, site: Site) -> u64 {
        match (&self.inner, site) {
            (OdometerInner::Line(counts), Site::Pos(p)) => {
                if counts.contains(p) {
                    *counts.get(p)
                } else {
                    0
                }
            }
            (OdometerInner::Grid { side, counts }, Site::Cell { x, y }) => {
                counts[((y - 1) * side + (x - 1)) as usize]
            }
            _ => panic!("site kind does not match the domain"),
        }
    }

    pub fn total(&self) -> u64 {
        match &self.inner {
            OdometerInner::Line(counts) => counts.iter().map(|(_, &c)| c).sum(),
            OdometerInner::Grid { counts, .. } => counts.iter().sum(),
        }
    }

    /// Extremes of the toppled set on a line domain; `None` when nothing
    /// toppled or on a box.
    pub fn toppled_bounds(&self) -> Option<(i64, i64)> {
        match &self.inner {
            OdometerInner::Line(counts) => {
                let mut range: Option<(i64, i64)> = None;
                for (pos, &c) in counts.iter() {
                    if c > 0 {
                        range = Some(match range {
                            None => (pos, pos),
                            Some((lo, hi)) => (lo.min(pos), hi.max(pos)),
                        });
                    }
                }
                range
            }
            OdometerInner::Grid { .. } => None,
        }
    }

    /// Whether the toppled set on a line domain is a contiguous interval.
    /// Vacuously true when nothing toppled.
    pub fn toppled_is_interval(&self) -> bool {
        match &self.inner {
            OdometerInner::Line(counts) => match self.toppled_bounds() {
                None => true,
                Some((lo, hi)) => (lo..=hi).all(|p| *counts.get(p) > 0),
            },
            OdometerInner::Grid { .. } => true,
        }
    }
}

/// The result of stabilizing a configuration.
#[derive(Debug, Clone)]
pub struct StabilizationOutcome {
    /// The stable final configuration.
    pub final_config: SandpileConfig,
    /// Toppling count per vertex.
    pub odometer: Odometer,
    /// Particles absorbed by the sink, per boundary side.
    pub exits: ExitCounts,
    /// Total topplings performed.
    pub steps: u64,
}

/// One toppling of the event log: which vertex fired and which edges
/// carried a particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopplingEvent {
    pub site: Site,
    pub emission: Emission,
}

/// Default step budget: `10^4 * total mass * vertex count`, clamped to at
/// least 1. Generous against observed stabilization lengths; it converts
/// pathological non-termination into a typed error.
pub fn default_budget(config: &SandpileConfig) -> u64 {
    config
        .total_mass()
        .saturating_mul(config.vertex_count())
        .saturating_mul(10_000)
        .max(1)
}

/// Topple until every vertex is stable.
///
/// The law of `final_config` does not depend on `policy`; odometer and
/// exit counts are determined by the same per-vertex instruction draws,
/// so mass conservation holds on every run.
pub fn stabilize(
    config: &SandpileConfig,
    rule: &TopplingRule,
    policy: TopplingPolicy,
    rng: &mut impl Rng,
    budget: u64,
) -> Result<StabilizationOutcome> {
    let out = engine::run(config, rule, policy, rng, budget, false)?;
    Ok(out.outcome)
}

/// As [`stabilize`], additionally returning the ordered toppling log.
pub fn stabilize_tracked(
    config: &SandpileConfig,
    rule: &TopplingRule,
    policy: TopplingPolicy,
    rng: &mut impl Rng,
    budget: u64,
) -> Result<(StabilizationOutcome, Vec<TopplingEvent>)> {
    let out = engine::run(config, rule, policy, rng, budget, true)?;
    Ok((out.outcome, out.events.expect("tracked run records events")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::SandpileError;

    #[test]
    fn uniform_emission_frequencies() {
        let mut rng = stream(0xfeed, 0);
        let domain = Domain::Segment1D { a: 1, b: 4 };
        let mut counts = [0u64; 3];
        let draws = 1_000_000;
        for _ in 0..draws {
            let e = TopplingRule::Uniform1D
                .sample_emission(&domain, &mut rng)
                .unwrap();
            match (e.contains(Side::Left), e.contains(Side::Right)) {
                (true, false) => counts[0] += 1,
                (false, true) => counts[1] += 1,
                (true, true) => counts[2] += 1,
                _ => panic!("uniform emission is never empty"),
            }
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 1.0 / 3.0).abs() < 0.005);
        }
    }

    #[test]
    fn srw_emission_has_one_particle() {
        let mut rng = stream(2, 0);
        let domain = Domain::LineZ;
        for _ in 0..1000 {
            let e = TopplingRule::Srw1D
                .sample_emission(&domain, &mut rng)
                .unwrap();
            assert_eq!(e.count(), 1);
        }
    }

    #[test]
    fn p_one_fires_every_edge_of_a_box_vertex() {
        let mut rng = stream(3, 0);
        let rule = TopplingRule::p_toppling(1.0).unwrap();
        let domain = Domain::Box2D { side: 5 };
        for _ in 0..100 {
            let e = rule.sample_emission(&domain, &mut rng).unwrap();
            assert_eq!(e.count(), 4);
        }
    }

    #[test]
    fn rule_validation() {
        assert!(TopplingRule::p_toppling(-0.1).is_err());
        assert!(TopplingRule::p_toppling(1.5).is_err());
        assert!(TopplingRule::p_toppling(f64::NAN).is_err());
        let mut rng = stream(4, 0);
        assert!(matches!(
            TopplingRule::Uniform1D.sample_emission(&Domain::Box2D { side: 2 }, &mut rng),
            Err(SandpileError::RuleDomainMismatch { .. })
        ));
        assert!(TopplingRule::p_toppling(0.0)
            .unwrap()
            .sample_emission(&Domain::LineZ, &mut rng)
            .is_err());
    }

    #[test]
    fn pile_of_two_on_a_point_segment() {
        // One toppling resolves [2] on C_1 whatever the branch; the three
        // branches are equally likely.
        let config = SandpileConfig::segment(1, 1, vec![2]).unwrap();
        let mut counts = [0u64; 3];
        let runs = 100_000;
        let mut rng = stream(0xabcd, 0);
        for _ in 0..runs {
            let out = stabilize(
                &config,
                &TopplingRule::Uniform1D,
                TopplingPolicy::FifoQueue,
                &mut rng,
                1000,
            )
            .unwrap();
            assert_eq!(out.steps, 1);
            assert_eq!(
                config.total_mass(),
                out.final_config.total_mass() + out.exits.total()
            );
            match (
                out.final_config.height(Site::Pos(1)),
                out.exits.left,
                out.exits.right,
            ) {
                (1, 1, 0) => counts[0] += 1,
                (1, 0, 1) => counts[1] += 1,
                (0, 1, 1) => counts[2] += 1,
                other => panic!("impossible outcome {other:?}"),
            }
        }
        for c in counts {
            assert!((c as f64 / runs as f64 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn stable_input_is_returned_unchanged() {
        let config = SandpileConfig::full_segment(6).unwrap();
        let mut rng = stream(5, 0);
        let out = stabilize(
            &config,
            &TopplingRule::Uniform1D,
            TopplingPolicy::FifoQueue,
            &mut rng,
            10,
        )
        .unwrap();
        assert_eq!(out.final_config, config);
        assert_eq!(out.steps, 0);
        assert_eq!(out.exits, ExitCounts::default());
        assert_eq!(out.odometer.total(), 0);
    }

    #[test]
    fn mass_conservation_across_policies_and_domains() {
        let policies = [
            TopplingPolicy::FifoQueue,
            TopplingPolicy::UniformRandomUnstable,
            TopplingPolicy::Leftmost,
        ];
        let line = SandpileConfig::full_plus_delta(10, 5).unwrap();
        for (i, policy) in policies.into_iter().enumerate() {
            for run in 0..200 {
                let mut rng = stream(10 + i as u64, run);
                let out =
                    stabilize(&line, &TopplingRule::Uniform1D, policy, &mut rng, 100_000).unwrap();
                assert!(out.final_config.is_stable());
                assert_eq!(11, out.final_config.total_mass() + out.exits.total());
                assert_eq!(out.steps, out.odometer.total());
            }
        }
        let grid = SandpileConfig::box2d(3, vec![0, 2, 0, 9, 0, 1, 4, 0, 4]).unwrap();
        let rule = TopplingRule::p_toppling(0.7).unwrap();
        for run in 0..200 {
            let mut rng = stream(77, run);
            let out =
                stabilize(&grid, &rule, TopplingPolicy::FifoQueue, &mut rng, 100_000).unwrap();
            assert!(out.final_config.is_stable());
            assert_eq!(20, out.final_config.total_mass() + out.exits.total());
        }
    }

    #[test]
    fn tracked_log_replays_to_the_final_config() {
        let inputs = [
            SandpileConfig::full_plus_delta(8, 3).unwrap(),
            SandpileConfig::segment(-2, 4, vec![5, 0, 3, 1, 0, 2, 2]).unwrap(),
            SandpileConfig::single_source(9),
        ];
        for (i, config) in inputs.iter().enumerate() {
            let mut rng = stream(20, i as u64);
            let (out, log) = stabilize_tracked(
                config,
                &TopplingRule::Uniform1D,
                TopplingPolicy::UniformRandomUnstable,
                &mut rng,
                1_000_000,
            )
            .unwrap();
            assert_eq!(log.len() as u64, out.steps);
            let replayed = replay(config, &log).unwrap();
            assert_eq!(replayed, out.final_config);
        }
        let grid = SandpileConfig::box2d(3, vec![6, 0, 2, 0, 7, 0, 2, 0, 6]).unwrap();
        let rule = TopplingRule::p_toppling(0.4).unwrap();
        let mut rng = stream(21, 0);
        let (out, log) =
            stabilize_tracked(&grid, &rule, TopplingPolicy::FifoQueue, &mut rng, 1_000_000)
                .unwrap();
        assert_eq!(log.len() as u64, out.steps);
        assert_eq!(replay(&grid, &log).unwrap(), out.final_config);
    }

    #[test]
    fn tracked_pile_of_two_logs_one_event() {
        let config = SandpileConfig::segment(1, 1, vec![2]).unwrap();
        let mut rng = stream(22, 0);
        let (out, log) = stabilize_tracked(
            &config,
            &TopplingRule::Uniform1D,
            TopplingPolicy::FifoQueue,
            &mut rng,
            10,
        )
        .unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(out.steps, 1);
        assert_eq!(log[0].site, Site::Pos(1));
    }

    #[test]
    fn deterministic_chip_firing_exercises_the_batch_path() {
        // p = 1 always fires both line edges: [64] on C_1 topples exactly
        // 32 times and sheds 32 particles through each side.
        let config = SandpileConfig::segment(1, 1, vec![64]).unwrap();
        let rule = TopplingRule::p_toppling(1.0).unwrap();
        let mut rng = stream(23, 0);
        let out = stabilize(&config, &rule, TopplingPolicy::FifoQueue, &mut rng, 1000).unwrap();
        assert_eq!(out.steps, 32);
        assert_eq!((out.exits.left, out.exits.right), (32, 32));
        assert_eq!(out.final_config.height(Site::Pos(1)), 0);
    }

    #[test]
    fn srw_batch_keeps_one_particle() {
        // SRW topplings shed one particle each; [100] on C_1 ends at
        // height 1 after 99 topplings, all exiting the segment.
        let config = SandpileConfig::segment(1, 1, vec![100]).unwrap();
        let mut rng = stream(24, 0);
        let out = stabilize(
            &config,
            &TopplingRule::Srw1D,
            TopplingPolicy::FifoQueue,
            &mut rng,
            1000,
        )
        .unwrap();
        assert_eq!(out.steps, 99);
        assert_eq!(out.final_config.height(Site::Pos(1)), 1);
        assert_eq!(out.exits.total(), 99);
    }

    #[test]
    fn line_z_grows_and_conserves_mass() {
        let config = SandpileConfig::single_source(2);
        let mut finals = std::collections::HashMap::new();
        for run in 0..30_000 {
            let mut rng = stream(25, run);
            let out = stabilize(
                &config,
                &TopplingRule::Uniform1D,
                TopplingPolicy::FifoQueue,
                &mut rng,
                100,
            )
            .unwrap();
            assert_eq!(out.exits.total(), 0);
            assert_eq!(out.final_config.total_mass(), 2);
            assert_eq!(out.steps, 1);
            let support = out.final_config.line_support().unwrap();
            *finals.entry(support).or_insert(0u64) += 1;
        }
        // Branches: {-1,0}, {0,1}, {-1,1}, each 1/3.
        assert_eq!(finals.len(), 3);
        for (&support, &count) in &finals {
            assert!([(-1, 0), (0, 1), (-1, 1)].contains(&support));
            assert!((count as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.02);
        }
    }

    #[test]
    fn budget_errors_are_typed() {
        // A literal p = 0 toppling never moves mass: the budget runs out.
        let config = SandpileConfig::segment(1, 3, vec![0, 5, 0]).unwrap();
        let literal_frozen = TopplingRule::p_toppling_literal(0.0).unwrap();
        let mut rng = stream(26, 0);
        let err = stabilize(
            &config,
            &literal_frozen,
            TopplingPolicy::FifoQueue,
            &mut rng,
            50,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            SandpileError::BudgetExceeded {
                steps: 50,
                budget: 50
            }
        ));

        // Rejection p = 0 cannot even draw an emission.
        let rejecting_frozen = TopplingRule::p_toppling(0.0).unwrap();
        let mut rng = stream(26, 1);
        let err = stabilize(
            &config,
            &rejecting_frozen,
            TopplingPolicy::FifoQueue,
            &mut rng,
            50,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            SandpileError::BudgetExceeded { steps: 0, .. }
        ));

        // Too-small budgets are reported, not looped on.
        let mut rng = stream(26, 2);
        let err = stabilize(
            &SandpileConfig::full_plus_delta(30, 15).unwrap(),
            &TopplingRule::Uniform1D,
            TopplingPolicy::FifoQueue,
            &mut rng,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, SandpileError::BudgetExceeded { .. }));
    }

    #[test]
    fn literal_empty_topplings_count_in_the_odometer() {
        let config = SandpileConfig::segment(1, 1, vec![2]).unwrap();
        let rule = TopplingRule::p_toppling_literal(0.35).unwrap();
        let mut rng = stream(27, 0);
        let (out, log) =
            stabilize_tracked(&config, &rule, TopplingPolicy::FifoQueue, &mut rng, 10_000).unwrap();
        let empties = log.iter().filter(|e| e.emission.is_empty()).count();
        assert!(
            empties > 0,
            "0.35^0 draws should include empty emissions at this seed"
        );
        assert_eq!(out.odometer.count(Site::Pos(1)), out.steps);
        assert_eq!(log.len() as u64, out.steps);
        assert!(out.steps as usize > log.iter().filter(|e| !e.emission.is_empty()).count());
    }

    #[test]
    fn default_budget_scales_with_instance() {
        let config = SandpileConfig::full_plus_delta(10, 5).unwrap();
        assert_eq!(default_budget(&config), 10_000 * 11 * 10);
        let empty = SandpileConfig::box2d_empty(4).unwrap();
        assert_eq!(default_budget(&empty), 1);
    }
}
