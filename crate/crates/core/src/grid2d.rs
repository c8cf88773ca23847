//! Driven-dissipative experiments on 2D boxes: stationary density under
//! p-topplings and percolation of the height-3 set.
//!
//! The chain adds one particle at a uniformly chosen cell and stabilizes
//! with threshold 4; particles crossing the box boundary are lost. Burn-in
//! and thinning defaults are heuristics (ten full-coverage sweeps to reach
//! stationarity, one sweep between samples to decorrelate) and are
//! configurable.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::chain::DrivenChain;
use crate::error::{Result, SandpileError};
use crate::lattice::{SandpileConfig, TopplingRule};
use crate::rng::stream;
use crate::stats;

/// Common knobs of a 2D chain run.
#[derive(Debug, Clone, Copy)]
pub struct SweepConfig {
    /// Box side length.
    pub side: u32,
    /// Chain steps discarded before sampling; default `10 * side^2`.
    pub burn_in: Option<u64>,
    /// Number of recorded samples.
    pub samples: u32,
    /// Chain steps between consecutive samples; default `side^2`.
    pub thin: Option<u64>,
    /// Root seed; each p-value or replica derives its own stream.
    pub seed: u64,
}

impl SweepConfig {
    pub fn burn_in_steps(&self) -> u64 {
        self.burn_in
            .unwrap_or(10 * u64::from(self.side) * u64::from(self.side))
    }

    pub fn thin_steps(&self) -> u64 {
        self.thin
            .unwrap_or(u64::from(self.side) * u64::from(self.side))
            .max(1)
    }

    fn validate(&self) -> Result<()> {
        if self.side < 2 {
            return Err(SandpileError::InvalidParameter(
                "box side must be >= 2".into(),
            ));
        }
        if self.samples == 0 {
            return Err(SandpileError::InvalidParameter(
                "samples must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

fn validate_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(SandpileError::InvalidParameter(format!(
            "p must lie in (0, 1], got {p} (p = 0 cannot stabilize)"
        )));
    }
    Ok(())
}

/// One point of the density curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityCurvePoint {
    pub side: u32,
    pub p: f64,
    /// Mean particles per cell over the recorded samples; lies in [0, 3].
    pub rho: f64,
    pub stderr: f64,
    pub samples: u32,
    pub burn_in: u64,
}

/// Average stationary density for each `p` in `p_list`.
///
/// Each p-value runs its own chain on stream `(seed, index in p_list)`;
/// p-values are processed in parallel and reported in input order.
pub fn density_sweep(cfg: &SweepConfig, p_list: &[f64]) -> Result<Vec<DensityCurvePoint>> {
    cfg.validate()?;
    for &p in p_list {
        validate_p(p)?;
    }
    p_list
        .par_iter()
        .enumerate()
        .map(|(idx, &p)| {
            let samples = sample_chain(cfg, p, idx as u64, |config| {
                let cells = f64::from(cfg.side) * f64::from(cfg.side);
                Ok(config.total_mass() as f64 / cells)
            })?;
            let (rho, _) = stats::mean_std(&samples);
            Ok(DensityCurvePoint {
                side: cfg.side,
                p,
                rho,
                stderr: stats::stderr(&samples),
                samples: cfg.samples,
                burn_in: cfg.burn_in_steps(),
            })
        })
        .collect()
}

/// Drive one chain and map each recorded sample through `f`.
fn sample_chain<T: Send>(
    cfg: &SweepConfig,
    p: f64,
    stream_index: u64,
    mut f: impl FnMut(&SandpileConfig) -> Result<T>,
) -> Result<Vec<T>> {
    let rule = TopplingRule::p_toppling(p)?;
    let initial = SandpileConfig::box2d_empty(cfg.side)?;
    let mut chain = DrivenChain::new(initial, rule, stream(cfg.seed, stream_index))?;
    chain.advance(cfg.burn_in_steps())?;
    let thin = cfg.thin_steps();
    let mut out = Vec::with_capacity(cfg.samples as usize);
    for i in 0..cfg.samples {
        if i > 0 {
            chain.advance(thin)?;
        }
        out.push(f(chain.config())?);
    }
    Ok(out)
}

/// Mask of the cells at the maximal stable height 3, row-major.
pub fn height3_set(config: &SandpileConfig) -> Result<Vec<bool>> {
    let (_, heights) = config
        .grid_heights()
        .ok_or_else(|| SandpileError::InvalidParameter("height-3 set needs a 2D box".into()))?;
    if !config.is_stable() {
        return Err(SandpileError::UnstableInput);
    }
    Ok(heights.iter().map(|&h| h == 3).collect())
}

/// Connected components of a cell mask under 4-neighbor adjacency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clusters {
    side: u32,
    /// Cluster id per cell (ids are 1-based and dense); 0 for cells
    /// outside the mask.
    labels: Vec<u32>,
    /// Component sizes, sorted descending.
    sizes: Vec<usize>,
}

impl Clusters {
    pub fn side(&self) -> u32 {
        self.side
    }

    /// 0 for off-mask cells, otherwise the 1-based cluster id.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(len: usize) -> UnionFind {
        UnionFind {
            parent: (0..len as u32).collect(),
            size: vec![1; len],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }
}

/// Label the connected components of `mask` (row-major, `side * side`)
/// with union-find. Labels are assigned in first-cell order, so the
/// labeling is a pure function of the mask.
pub fn label_clusters(mask: &[bool], side: u32) -> Clusters {
    let n = side as usize;
    assert_eq!(mask.len(), n * n, "mask length must be side^2");
    let mut uf = UnionFind::new(mask.len());
    for (i, &on) in mask.iter().enumerate() {
        if !on {
            continue;
        }
        if i % n > 0 && mask[i - 1] {
            uf.union(i as u32, (i - 1) as u32);
        }
        if i >= n && mask[i - n] {
            uf.union(i as u32, (i - n) as u32);
        }
    }
    let mut labels = vec![0u32; mask.len()];
    let mut sizes_by_label: Vec<usize> = Vec::new();
    let mut label_of_root: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
    for i in 0..mask.len() {
        if !mask[i] {
            continue;
        }
        let root = uf.find(i as u32);
        let label = *label_of_root.entry(root).or_insert_with(|| {
            sizes_by_label.push(0);
            sizes_by_label.len() as u32
        });
        labels[i] = label;
        sizes_by_label[(label - 1) as usize] += 1;
    }
    let mut sizes = sizes_by_label;
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    Clusters {
        side,
        labels,
        sizes,
    }
}

/// Whether some cluster touches both the left column and the right column.
pub fn spans_left_right(clusters: &Clusters) -> bool {
    let n = clusters.side as usize;
    let mut on_left = std::collections::HashSet::new();
    for row in 0..n {
        let label = clusters.labels[row * n];
        if label != 0 {
            on_left.insert(label);
        }
    }
    (0..n).any(|row| {
        let label = clusters.labels[row * n + n - 1];
        label != 0 && on_left.contains(&label)
    })
}

/// Independent spanning check by breadth-first search from the left
/// column; exists to cross-validate the union-find route.
pub fn spans_left_right_bfs(mask: &[bool], side: u32) -> bool {
    let n = side as usize;
    assert_eq!(mask.len(), n * n);
    let mut seen = vec![false; mask.len()];
    let mut queue = std::collections::VecDeque::new();
    for row in 0..n {
        let i = row * n;
        if mask[i] {
            seen[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        if i % n == n - 1 {
            return true;
        }
        let push =
            |j: usize, seen: &mut Vec<bool>, queue: &mut std::collections::VecDeque<usize>| {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
        if i % n > 0 {
            push(i - 1, &mut seen, &mut queue);
        }
        if i % n < n - 1 {
            push(i + 1, &mut seen, &mut queue);
        }
        if i >= n {
            push(i - n, &mut seen, &mut queue);
        }
        if i + n < mask.len() {
            push(i + n, &mut seen, &mut queue);
        }
    }
    false
}

/// Spanning estimate of the height-3 set at one p-value.
#[derive(Debug, Clone, PartialEq)]
pub struct PercolationResult {
    pub side: u32,
    pub p: f64,
    /// Fraction of samples whose height-3 set connects the left and right
    /// columns.
    pub spanning_prob: f64,
    /// Cluster sizes of the last recorded sample, descending.
    pub cluster_sizes: Vec<usize>,
    pub samples: u32,
    /// Row-major heights of the last recorded sample, for image dumps.
    pub last_heights: Vec<u32>,
}

/// Estimate the left-right spanning probability of the height-3 set under
/// the stationary distribution at `p`. When `per_sample_sizes` is given it
/// receives the descending cluster sizes of every recorded sample.
pub fn spanning_probability(
    cfg: &SweepConfig,
    p: f64,
    mut per_sample_sizes: Option<&mut Vec<Vec<usize>>>,
) -> Result<PercolationResult> {
    cfg.validate()?;
    validate_p(p)?;
    let mut spanning = 0u32;
    let mut last_sizes = Vec::new();
    let mut last_heights = Vec::new();
    let samples = sample_chain(cfg, p, 0, |config| {
        let mask = height3_set(config)?;
        let clusters = label_clusters(&mask, cfg.side);
        let (_, heights) = config.grid_heights().expect("box domain");
        Ok((
            spans_left_right(&clusters),
            clusters.sizes().to_vec(),
            heights.to_vec(),
        ))
    })?;
    for (spans, sizes, heights) in samples {
        if spans {
            spanning += 1;
        }
        if let Some(collect) = per_sample_sizes.as_deref_mut() {
            collect.push(sizes.clone());
        }
        last_sizes = sizes;
        last_heights = heights;
    }
    Ok(PercolationResult {
        side: cfg.side,
        p,
        spanning_prob: f64::from(spanning) / f64::from(cfg.samples),
        cluster_sizes: last_sizes,
        samples: cfg.samples,
        last_heights,
    })
}

/// Write values as a plain (ASCII P2) PGM image of a `side x side` grid.
pub fn write_pgm(w: &mut impl Write, side: u32, values: &[u32], maxval: u32) -> io::Result<()> {
    assert_eq!(values.len(), (side as usize) * (side as usize));
    assert!(
        (1..=65_535).contains(&maxval),
        "PGM maxval must lie in 1..=65535"
    );
    writeln!(w, "P2")?;
    writeln!(w, "{side} {side}")?;
    writeln!(w, "{maxval}")?;
    for row in values.chunks(side as usize) {
        let line: Vec<String> = row.iter().map(|v| v.min(&maxval).to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn height3_trivial_masks() {
        let zeros = SandpileConfig::box2d_empty(3).unwrap();
        assert!(height3_set(&zeros).unwrap().iter().all(|&b| !b));
        let threes = SandpileConfig::box2d(3, vec![3; 9]).unwrap();
        assert!(height3_set(&threes).unwrap().iter().all(|&b| b));
        let unstable = SandpileConfig::box2d(2, vec![4, 0, 0, 0]).unwrap();
        assert!(matches!(
            height3_set(&unstable),
            Err(SandpileError::UnstableInput)
        ));
    }

    #[test]
    fn checkerboard_selects_the_three_class() {
        let mut heights = vec![0u32; 16];
        for (i, h) in heights.iter_mut().enumerate() {
            if (i / 4 + i % 4) % 2 == 0 {
                *h = 3;
            }
        }
        let config = SandpileConfig::box2d(4, heights.clone()).unwrap();
        let mask = height3_set(&config).unwrap();
        for (i, &on) in mask.iter().enumerate() {
            assert_eq!(on, heights[i] == 3);
        }
    }

    #[test]
    fn cluster_labeling_basics() {
        let empty = label_clusters(&[false; 9], 3);
        assert_eq!(empty.count(), 0);
        let full = label_clusters(&[true; 9], 3);
        assert_eq!(full.sizes(), &[9]);
        // Two horizontal runs of lengths 3 and 2 in a 4x4 box.
        let mut mask = vec![false; 16];
        for i in [0usize, 1, 2] {
            mask[i] = true;
        }
        for i in [12usize, 13] {
            mask[i] = true;
        }
        let clusters = label_clusters(&mask, 4);
        assert_eq!(clusters.sizes(), &[3, 2]);
    }

    #[test]
    fn spanning_checks_agree_on_fixtures() {
        let n = 5u32;
        // The full box spans.
        let full = vec![true; 25];
        assert!(spans_left_right(&label_clusters(&full, n)));
        // A full row spans.
        let mut mask = vec![false; 25];
        mask[10..15].fill(true);
        let clusters = label_clusters(&mask, n);
        assert!(spans_left_right(&clusters));
        assert!(spans_left_right_bfs(&mask, n));
        // A full column does not span left-right.
        let mut mask = vec![false; 25];
        for row in 0..5 {
            mask[row * 5 + 2] = true;
        }
        let clusters = label_clusters(&mask, n);
        assert!(!spans_left_right(&clusters));
        assert!(!spans_left_right_bfs(&mask, n));
    }

    #[test]
    fn density_stays_in_stable_range() {
        let cfg = SweepConfig {
            side: 2,
            burn_in: Some(50),
            samples: 20,
            thin: Some(4),
            seed: 9,
        };
        let points = density_sweep(&cfg, &[1.0]).unwrap();
        assert!(points[0].rho >= 0.0 && points[0].rho <= 3.0);
    }

    #[test]
    fn p_zero_is_rejected() {
        let cfg = SweepConfig {
            side: 4,
            burn_in: Some(1),
            samples: 1,
            thin: Some(1),
            seed: 0,
        };
        assert!(density_sweep(&cfg, &[0.0]).is_err());
        assert!(spanning_probability(&cfg, -0.3, None).is_err());
    }

    #[test]
    fn pgm_output_shape() {
        let mut buf = Vec::new();
        write_pgm(&mut buf, 2, &[0, 1, 2, 3], 3).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "P2\n2 2\n3\n0 1\n2 3\n");
    }
}
