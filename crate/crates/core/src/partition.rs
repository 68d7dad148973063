//! Iterated hyperplane partitions of S^n indexed by a complete binary tree.
//!
//! Internal nodes use heap order: the root is node 1 and node `m` has
//! children `2m` (the side its normal points to) and `2m + 1`. A depth-`i`
//! tree has `2^i − 1` internal nodes and `2^i` leaves; leaf `ℓ` is heap
//! node `2^i + ℓ`, so the bits of `ℓ` read from the top spell the path
//! (0 = left / positive side).

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{par_chunks, RngStream};
use crate::sphere::{dot, fill_uniform, normalize, UnitVector};

/// Orbit enumeration is limited to trees of this depth (2^15 automorphisms).
pub const MAX_ORBIT_DEPTH: usize = 4;

/// Dot products below this magnitude count as lying on a cut.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartitionTree {
    depth: usize,
}

impl PartitionTree {
    pub fn new(depth: usize) -> Result<Self> {
        if depth == 0 || depth > 30 {
            return Err(invalid(format!("tree depth {depth} must be in 1..=30")));
        }
        Ok(Self { depth })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn node_count(&self) -> usize {
        (1 << self.depth) - 1
    }

    pub fn leaf_count(&self) -> usize {
        1 << self.depth
    }

    /// Level of heap node `m` (root is level 0).
    pub fn level(m: usize) -> usize {
        (usize::BITS - 1 - m.leading_zeros()) as usize
    }

    /// Leaf labels below internal node `m`, as a half-open range.
    pub fn leaves_below(&self, m: usize) -> std::ops::Range<usize> {
        let shift = self.depth - Self::level(m);
        let first = (m << shift) - self.leaf_count();
        first..first + (1 << shift)
    }
}

/// Leaf index in `0..2^depth`.
pub type LeafLabel = usize;

/// A point of the product of `2^i − 1` spheres: one oriented normal per internal node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedPartition {
    tree: PartitionTree,
    normals: Vec<UnitVector>,
}

impl OrientedPartition {
    pub fn new(normals: Vec<UnitVector>) -> Result<Self> {
        let count = normals.len() + 1;
        if !count.is_power_of_two() || count < 2 {
            return Err(invalid(format!("{} normals do not fill a complete tree", normals.len())));
        }
        let dim = normals[0].dim();
        if let Some(bad) = normals.iter().find(|v| v.dim() != dim) {
            return Err(Error::DimMismatch { expected: dim, found: bad.dim() });
        }
        let tree = PartitionTree::new(count.trailing_zeros() as usize)?;
        Ok(Self { tree, normals })
    }

    pub fn tree(&self) -> PartitionTree {
        self.tree
    }

    pub fn depth(&self) -> usize {
        self.tree.depth
    }

    pub fn dim(&self) -> usize {
        self.normals[0].dim()
    }

    pub fn normals(&self) -> &[UnitVector] {
        &self.normals
    }

    /// Normal attached to heap node `m`.
    pub fn normal(&self, m: usize) -> &UnitVector {
        &self.normals[m - 1]
    }

    /// Leaf containing `x`, or `None` if `x` is within [`BOUNDARY_TOL`] of a cut.
    #[inline]
    pub fn locate(&self, x: &[f64]) -> Option<LeafLabel> {
        let mut m = 1;
        for _ in 0..self.tree.depth {
            let d = dot(x, self.normals[m - 1].coords());
            if d.abs() < BOUNDARY_TOL {
                return None;
            }
            m = 2 * m + (d < 0.0) as usize;
        }
        Some(m - self.tree.leaf_count())
    }

    /// Flattened coordinates, node by node.
    pub fn flat(&self) -> Vec<f64> {
        self.normals.iter().flat_map(|v| v.coords().iter().copied()).collect()
    }

    fn cmp_lex(&self, other: &Self) -> Ordering {
        for (a, b) in self.normals.iter().zip(&other.normals) {
            for (x, y) in a.coords().iter().zip(b.coords()) {
                match x.total_cmp(y) {
                    Ordering::Equal => continue,
                    o => return o,
                }
            }
        }
        Ordering::Equal
    }
}

/// The unique leaf whose open cell contains `x`.
pub fn cell_of(x: &UnitVector, p: &OrientedPartition) -> Result<LeafLabel> {
    if x.dim() != p.dim() {
        return Err(Error::DimMismatch { expected: p.dim(), found: x.dim() });
    }
    let mut m = 1;
    for _ in 0..p.depth() {
        let d = x.dot(p.normal(m));
        if d.abs() < BOUNDARY_TOL {
            return Err(Error::OnBoundary { node: m });
        }
        m = 2 * m + (d < 0.0) as usize;
    }
    Ok(m - p.tree.leaf_count())
}

/// An open intersection of hemispheres `{x : sign·(x·normal) > 0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexCell {
    pub constraints: Vec<(UnitVector, i8)>,
    pub leaf: Option<LeafLabel>,
}

impl ConvexCell {
    pub fn new(constraints: Vec<(UnitVector, i8)>) -> Result<Self> {
        let dim = constraints.first().ok_or_else(|| invalid("cell needs a constraint"))?.0.dim();
        for (v, s) in &constraints {
            if v.dim() != dim {
                return Err(Error::DimMismatch { expected: dim, found: v.dim() });
            }
            if *s != 1 && *s != -1 {
                return Err(invalid("constraint sign must be ±1"));
            }
        }
        Ok(Self { constraints, leaf: None })
    }

    pub fn dim(&self) -> usize {
        self.constraints[0].0.dim()
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        self.constraints.iter().all(|(v, s)| f64::from(*s) * dot(x, v.coords()) > 0.0)
    }

    /// The cell cut by one more hemisphere.
    pub fn refine(&self, normal: UnitVector, sign: i8) -> Result<ConvexCell> {
        let mut constraints = self.constraints.clone();
        constraints.push((normal, sign));
        ConvexCell::new(constraints)
    }

    /// Uniform samples from the cell by rejection; at most `max_proposals` draws.
    pub fn sample(&self, target: usize, max_proposals: usize, stream: RngStream) -> Vec<Vec<f64>> {
        let n1 = self.dim() + 1;
        let per_chunk = crate::rng::CHUNK;
        let mut out = Vec::with_capacity(target);
        let mut drawn = 0usize;
        let mut round = 0u64;
        while out.len() < target && drawn < max_proposals {
            let batch = (16 * per_chunk).min(max_proposals - drawn);
            let found = par_chunks(stream.substream(round), batch, |rng, len| {
                let mut x = vec![0.0; n1];
                let mut acc = Vec::new();
                for _ in 0..len {
                    fill_uniform(rng, &mut x);
                    if self.contains(&x) {
                        acc.push(x.clone());
                    }
                }
                acc
            });
            for pts in found {
                for p in pts {
                    if out.len() < target {
                        out.push(p);
                    }
                }
            }
            drawn += batch;
            round += 1;
        }
        out
    }
}

/// The `depth` signed constraints met on the way from the root to `leaf`.
pub fn cell_constraints(p: &OrientedPartition, leaf: LeafLabel) -> Result<ConvexCell> {
    let tree = p.tree();
    if leaf >= tree.leaf_count() {
        return Err(invalid(format!("leaf {leaf} out of range for depth {}", tree.depth())));
    }
    let target = tree.leaf_count() + leaf;
    let constraints = (0..tree.depth())
        .map(|level| {
            let node = target >> (tree.depth() - level);
            let bit = (target >> (tree.depth() - level - 1)) & 1;
            (p.normal(node).clone(), if bit == 0 { 1 } else { -1 })
        })
        .collect();
    Ok(ConvexCell { constraints, leaf: Some(leaf) })
}

/// Monte Carlo estimate of a normalized volume with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub fraction: f64,
    pub std_error: f64,
}

impl VolumeEstimate {
    pub fn from_counts(hits: u64, total: u64) -> Self {
        let f = hits as f64 / total as f64;
        Self { fraction: f, std_error: (f * (1.0 - f) / total as f64).sqrt() }
    }
}

/// Unbiased estimate of vol(cell)/vol(S^n).
pub fn cell_volume_mc(cell: &ConvexCell, samples: usize, stream: RngStream) -> Result<VolumeEstimate> {
    if samples < 1000 {
        return Err(invalid("cell volume estimation needs at least 10^3 samples"));
    }
    let n1 = cell.dim() + 1;
    let hits: u64 = par_chunks(stream, samples, |rng, len| {
        let mut x = vec![0.0; n1];
        let mut h = 0u64;
        for _ in 0..len {
            fill_uniform(rng, &mut x);
            h += cell.contains(&x) as u64;
        }
        h
    })
    .into_iter()
    .sum();
    Ok(VolumeEstimate::from_counts(hits, samples as u64))
}

/// Per-leaf volume and centroid center from one Monte Carlo pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafStats {
    pub volume: f64,
    pub std_error: f64,
    pub center: Option<UnitVector>,
}

/// How the center of a cell is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CenterMap {
    /// Radial projection of the Euclidean mean of the cell.
    #[default]
    Centroid,
}

/// Raw per-leaf accumulators, mergeable in a fixed order.
#[derive(Clone, Debug)]
pub struct LeafTally {
    pub counts: Vec<u64>,
    pub sums: Vec<f64>,
    pub boundary: u64,
    pub total: u64,
}

impl LeafTally {
    fn new(leaves: usize, n1: usize) -> Self {
        Self { counts: vec![0; leaves], sums: vec![0.0; leaves * n1], boundary: 0, total: 0 }
    }

    fn merge(&mut self, other: &LeafTally) {
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        self.sums.iter_mut().zip(&other.sums).for_each(|(a, b)| *a += b);
        self.boundary += other.boundary;
        self.total += other.total;
    }

    fn record(&mut self, p: &OrientedPartition, x: &[f64]) {
        self.total += 1;
        match p.locate(x) {
            Some(leaf) => {
                let n1 = x.len();
                self.counts[leaf] += 1;
                self.sums[leaf * n1..(leaf + 1) * n1]
                    .iter_mut()
                    .zip(x)
                    .for_each(|(s, v)| *s += v);
            }
            None => self.boundary += 1,
        }
    }

    /// [`record`](Self::record) over a block of points, with the normals flattened.
    fn record_block(&mut self, p: &OrientedPartition, block: &[f64]) {
        const LANES: usize = 16;
        let n1 = p.dim() + 1;
        let flat = p.flat();
        let depth = p.depth();
        let first_leaf = p.tree().leaf_count();
        // Points are pushed through the tree a batch at a time so that the
        // per-point dependency chains interleave.
        for batch in block.chunks(LANES * n1) {
            let lanes = batch.len() / n1;
            let mut m = [1usize; LANES];
            let mut edge = [false; LANES];
            for _ in 0..depth {
                for (j, x) in batch.chunks_exact(n1).enumerate() {
                    let v = &flat[(m[j] - 1) * n1..m[j] * n1];
                    let d: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
                    edge[j] |= d.abs() < BOUNDARY_TOL;
                    m[j] = 2 * m[j] + (d < 0.0) as usize;
                }
            }
            self.total += lanes as u64;
            for (j, x) in batch.chunks_exact(n1).enumerate() {
                if edge[j] {
                    self.boundary += 1;
                    continue;
                }
                let leaf = m[j] - first_leaf;
                self.counts[leaf] += 1;
                for (s, v) in self.sums[leaf * n1..(leaf + 1) * n1].iter_mut().zip(x) {
                    *s += v;
                }
            }
        }
    }

    /// Volumes are fractions of the non-boundary samples; boundary hits are discarded.
    pub fn stats(&self, n1: usize, center: CenterMap) -> Vec<LeafStats> {
        let kept = (self.total - self.boundary).max(1) as f64;
        self.counts
            .iter()
            .enumerate()
            .map(|(leaf, &c)| {
                let f = c as f64 / kept;
                let centre = match center {
                    CenterMap::Centroid if c > 0 => {
                        normalize(&self.sums[leaf * n1..(leaf + 1) * n1]).ok()
                    }
                    CenterMap::Centroid => None,
                };
                LeafStats { volume: f, std_error: (f * (1.0 - f) / kept).sqrt(), center: centre }
            })
            .collect()
    }
}

/// One pass of `samples` uniform points through the tree.
pub fn leaf_statistics(
    p: &OrientedPartition,
    samples: usize,
    stream: RngStream,
    center: CenterMap,
) -> Vec<LeafStats> {
    let n1 = p.dim() + 1;
    let leaves = p.tree().leaf_count();
    let parts = par_chunks(stream, samples, |rng, len| {
        let mut x = vec![0.0; n1];
        let mut t = LeafTally::new(leaves, n1);
        for _ in 0..len {
            fill_uniform(rng, &mut x);
            t.record(p, &x);
        }
        t
    });
    let mut total = LeafTally::new(leaves, n1);
    parts.iter().for_each(|t| total.merge(t));
    total.stats(n1, center)
}

/// A fixed cloud of uniform points reused across many partitions
/// (common random numbers for optimization).
#[derive(Clone, Debug)]
pub struct SampleCloud {
    n1: usize,
    points: Vec<f64>,
}

impl SampleCloud {
    pub fn uniform(n: usize, samples: usize, stream: RngStream) -> Self {
        let n1 = n + 1;
        let chunks = par_chunks(stream, samples, |rng, len| {
            let mut buf = vec![0.0; len * n1];
            for x in buf.chunks_exact_mut(n1) {
                fill_uniform(rng, x);
            }
            buf
        });
        Self { n1, points: chunks.concat() }
    }

    /// `samples` points arranged in antipodal pairs `(x, −x)`.
    ///
    /// Any single hemisphere then receives exactly half of the off-boundary
    /// points, which removes the sampling noise from the root volume split.
    pub fn antithetic(n: usize, samples: usize, stream: RngStream) -> Self {
        let n1 = n + 1;
        let half = samples.div_ceil(2);
        let chunks = par_chunks(stream, half, |rng, len| {
            let mut buf = vec![0.0; 2 * len * n1];
            for pair in buf.chunks_exact_mut(2 * n1) {
                let (x, y) = pair.split_at_mut(n1);
                fill_uniform(rng, x);
                y.iter_mut().zip(x.iter()).for_each(|(b, a)| *b = -a);
            }
            buf
        });
        let mut points = chunks.concat();
        points.truncate(samples * n1);
        Self { n1, points }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.n1
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n1 - 1
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.n1)
    }

    pub fn leaf_statistics(&self, p: &OrientedPartition, center: CenterMap) -> Vec<LeafStats> {
        use rayon::prelude::*;
        let leaves = p.tree().leaf_count();
        let block = crate::rng::CHUNK * self.n1;
        let parts: Vec<LeafTally> = self
            .points
            .par_chunks(block)
            .map(|chunk| {
                let mut t = LeafTally::new(leaves, self.n1);
                t.record_block(p, chunk);
                t
            })
            .collect();
        let mut total = LeafTally::new(leaves, self.n1);
        parts.iter().for_each(|t| total.merge(t));
        total.stats(self.n1, center)
    }
}

/// Aggregates of one internal node: volume and weighted image on each side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeAggregate {
    pub node: usize,
    pub v_plus: f64,
    pub v_minus: f64,
    pub phi_plus: Vec<f64>,
    pub phi_minus: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeAggregates {
    pub nodes: Vec<NodeAggregate>,
    /// Leaves whose center is undefined; they contribute zero.
    pub degenerate_leaves: Vec<LeafLabel>,
}

/// Leaf values `v = vol(cell)` and `φ = v·f(center(cell))`, summed over the
/// left (`+`) and right (`−`) subtrees of every internal node.
pub fn node_aggregates<F>(p: &OrientedPartition, f: F, k: usize, leaves: &[LeafStats]) -> Result<NodeAggregates>
where
    F: Fn(&[f64], &mut [f64]),
{
    let tree = p.tree();
    if leaves.len() != tree.leaf_count() {
        return Err(invalid("one LeafStats per leaf required"));
    }
    let mut degenerate = Vec::new();
    let mut v = vec![0.0; leaves.len()];
    let mut phi = vec![0.0; leaves.len() * k];
    let mut img = vec![0.0; k];
    for (leaf, s) in leaves.iter().enumerate() {
        match &s.center {
            Some(c) => {
                f(c.coords(), &mut img);
                v[leaf] = s.volume;
                for j in 0..k {
                    phi[leaf * k + j] = s.volume * img[j];
                }
            }
            None => degenerate.push(leaf),
        }
    }
    let sum_range = |r: std::ops::Range<usize>| {
        let vol: f64 = v[r.clone()].iter().sum();
        let mut ph = vec![0.0; k];
        for leaf in r {
            for j in 0..k {
                ph[j] += phi[leaf * k + j];
            }
        }
        (vol, ph)
    };
    let nodes = (1..=tree.node_count())
        .map(|m| {
            let (v_plus, phi_plus) = sum_range(tree.leaves_below(2 * m).clamp_leaf(&tree, 2 * m));
            let (v_minus, phi_minus) = sum_range(tree.leaves_below(2 * m + 1).clamp_leaf(&tree, 2 * m + 1));
            NodeAggregate { node: m, v_plus, v_minus, phi_plus, phi_minus }
        })
        .collect();
    Ok(NodeAggregates { nodes, degenerate_leaves: degenerate })
}

trait ClampLeaf {
    fn clamp_leaf(self, tree: &PartitionTree, child: usize) -> std::ops::Range<usize>;
}

impl ClampLeaf for std::ops::Range<usize> {
    // A child index at the leaf level denotes the single leaf itself.
    fn clamp_leaf(self, tree: &PartitionTree, child: usize) -> std::ops::Range<usize> {
        if PartitionTree::level(child) == tree.depth() {
            let l = child - tree.leaf_count();
            l..l + 1
        } else {
            self
        }
    }
}

/// An automorphism of the rooted binary tree, stored as one swap bit per
/// internal node: a set bit exchanges the two subtrees hanging below it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeAutomorphism {
    depth: usize,
    swap: Vec<bool>,
}

impl TreeAutomorphism {
    pub fn identity(depth: usize) -> Self {
        Self { depth, swap: vec![false; (1 << depth) - 1] }
    }

    pub fn from_bits(depth: usize, swap: Vec<bool>) -> Result<Self> {
        if swap.len() != (1 << depth) - 1 {
            return Err(invalid("one swap bit per internal node required"));
        }
        Ok(Self { depth, swap })
    }

    /// Bit `m − 1` of `mask` is the swap bit of node `m`.
    pub fn from_mask(depth: usize, mask: u64) -> Self {
        let swap = (0..(1usize << depth) - 1).map(|j| (mask >> j) & 1 == 1).collect();
        Self { depth, swap }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn swaps(&self, m: usize) -> bool {
        self.swap[m - 1]
    }

    /// `2^(2^depth − 1)`.
    pub fn group_order(depth: usize) -> u128 {
        1u128 << ((1u32 << depth) - 1)
    }

    /// Image of heap node `m` (internal node or leaf).
    pub fn node_image(&self, m: usize) -> usize {
        let level = PartitionTree::level(m);
        let (mut src, mut dst) = (1usize, 1usize);
        for l in (0..level).rev() {
            let bit = (m >> l) & 1;
            let flipped = bit ^ self.swap[src - 1] as usize;
            src = 2 * src + bit;
            dst = 2 * dst + flipped;
        }
        dst
    }

    /// Composition `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &TreeAutomorphism) -> TreeAutomorphism {
        assert_eq!(self.depth, other.depth);
        let swap = (1..=self.swap.len())
            .map(|m| other.swap[m - 1] ^ self.swap[other.node_image(m) - 1])
            .collect();
        Self { depth: self.depth, swap }
    }

    pub fn inverse(&self) -> TreeAutomorphism {
        let mut swap = vec![false; self.swap.len()];
        for m in 1..=self.swap.len() {
            swap[self.node_image(m) - 1] = self.swap[m - 1];
        }
        Self { depth: self.depth, swap }
    }
}

/// Moves the normal of node `m` to node `g(m)`, negated when `g` swaps at `m`.
/// The induced unoriented partition does not change; leaf `ℓ` of `p` and leaf
/// `g(ℓ)` of the image describe the same cell.
pub fn apply_automorphism(g: &TreeAutomorphism, p: &OrientedPartition) -> Result<OrientedPartition> {
    if g.depth != p.depth() {
        return Err(invalid(format!("automorphism depth {} vs partition depth {}", g.depth, p.depth())));
    }
    let mut out = p.normals.clone();
    for m in 1..=p.normals.len() {
        let v = p.normal(m);
        out[g.node_image(m) - 1] = if g.swaps(m) { v.neg() } else { v.clone() };
    }
    Ok(OrientedPartition { tree: p.tree, normals: out })
}

/// Leaf of `g·p` matching leaf `leaf` of `p`.
pub fn leaf_image(g: &TreeAutomorphism, leaf: LeafLabel) -> LeafLabel {
    let leaves = 1usize << g.depth;
    g.node_image(leaves + leaf) - leaves
}

/// All images of `p` under the automorphism group, without duplicates,
/// sorted lexicographically.
pub fn orbit(p: &OrientedPartition) -> Result<Vec<OrientedPartition>> {
    let depth = p.depth();
    if depth > MAX_ORBIT_DEPTH {
        return Err(Error::DepthTooLarge(depth));
    }
    let order = TreeAutomorphism::group_order(depth) as u64;
    let mut out = Vec::with_capacity(order as usize);
    for mask in 0..order {
        out.push(apply_automorphism(&TreeAutomorphism::from_mask(depth, mask), p)?);
    }
    out.sort_by(|a, b| a.cmp_lex(b));
    out.dedup_by(|a, b| a.cmp_lex(b) == Ordering::Equal);
    Ok(out)
}

/// The lexicographically smallest element of the orbit of `p`.
pub fn canonical_form(p: &OrientedPartition) -> Result<OrientedPartition> {
    let depth = p.depth();
    if depth > MAX_ORBIT_DEPTH {
        return Err(Error::DepthTooLarge(depth));
    }
    let order = TreeAutomorphism::group_order(depth) as u64;
    let mut best = p.clone();
    for mask in 1..order {
        let q = apply_automorphism(&TreeAutomorphism::from_mask(depth, mask), p)?;
        if q.cmp_lex(&best) == Ordering::Less {
            best = q;
        }
    }
    Ok(best)
}

/// Text form: a header, then one row per node with 17 significant digits.
///
/// ```text
/// partition depth=2 dim=2
/// 1 1.0000000000000000e0 0.0000000000000000e0 0.0000000000000000e0
/// ...
/// ```
pub fn to_text(p: &OrientedPartition) -> String {
    let mut s = format!("partition depth={} dim={}\n", p.depth(), p.dim());
    for (j, v) in p.normals.iter().enumerate() {
        let _ = write!(s, "{}", j + 1);
        for x in v.coords() {
            let _ = write!(s, " {x:.16e}");
        }
        s.push('\n');
    }
    s
}

pub fn from_text(text: &str) -> Result<OrientedPartition> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::Parse("empty partition document".into()))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("partition") {
        return Err(Error::Parse("missing 'partition' header".into()));
    }
    let mut depth = None;
    let mut dim = None;
    for f in fields {
        let (key, val) = f.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field {f}")))?;
        let val: usize = val.parse().map_err(|_| Error::Parse(format!("bad header value {f}")))?;
        match key {
            "depth" => depth = Some(val),
            "dim" => dim = Some(val),
            _ => return Err(Error::Parse(format!("unknown header field {key}"))),
        }
    }
    let depth = depth.ok_or_else(|| Error::Parse("header lacks depth".into()))?;
    let dim = dim.ok_or_else(|| Error::Parse("header lacks dim".into()))?;
    let tree = PartitionTree::new(depth)?;
    let mut normals = Vec::with_capacity(tree.node_count());
    for (j, line) in lines.enumerate() {
        let mut parts = line.split_whitespace();
        let idx: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad node row: {line}")))?;
        if idx != j + 1 {
            return Err(Error::Parse(format!("expected node {}, found {idx}", j + 1)));
        }
        let coords = parts
            .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {t}"))))
            .collect::<Result<Vec<_>>>()?;
        if coords.len() != dim + 1 {
            return Err(Error::Parse(format!("node {idx} has {} coordinates", coords.len())));
        }
        normals.push(UnitVector::from_coords(coords)?);
    }
    if normals.len() != tree.node_count() {
        return Err(Error::Parse(format!("expected {} nodes, found {}", tree.node_count(), normals.len())));
    }
    OrientedPartition::new(normals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::sample_uniform;
    use proptest::prelude::*;

    fn e(i: usize) -> UnitVector {
        UnitVector::basis(2, i)
    }

    fn random_partition(depth: usize, n: usize, seed: u64) -> OrientedPartition {
        let mut rng = RngStream::new(seed, 99).rng();
        OrientedPartition::new((0..(1 << depth) - 1).map(|_| sample_uniform(&mut rng, n)).collect()).unwrap()
    }

    #[test]
    fn tree_shape() {
        let t = PartitionTree::new(3).unwrap();
        assert_eq!(t.node_count(), 7);
        assert_eq!(t.leaf_count(), 8);
        assert_eq!(t.leaves_below(1), 0..8);
        assert_eq!(t.leaves_below(3), 4..8);
        assert_eq!(t.leaves_below(5), 2..4);
        for leaf in 8..16 {
            assert_eq!(PartitionTree::level(leaf), 3);
        }
    }

    #[test]
    fn cell_of_examples() {
        let p1 = OrientedPartition::new(vec![e(2)]).unwrap();
        assert_eq!(cell_of(&e(2), &p1).unwrap(), 0);
        assert_eq!(cell_of(&e(2).neg(), &p1).unwrap(), 1);
        let p2 = OrientedPartition::new(vec![e(2), e(0), e(1)]).unwrap();
        let x = normalize(&[1.0, 0.0, 0.5]).unwrap();
        assert_eq!(cell_of(&x, &p2).unwrap(), 0);
        assert!(matches!(cell_of(&e(0), &p1), Err(Error::OnBoundary { node: 1 })));
    }

    #[test]
    fn cell_constraint_examples() {
        let p1 = OrientedPartition::new(vec![e(2)]).unwrap();
        assert_eq!(cell_constraints(&p1, 0).unwrap().constraints, vec![(e(2), 1)]);
        let p2 = OrientedPartition::new(vec![e(2), e(0), e(1)]).unwrap();
        assert_eq!(cell_constraints(&p2, 1).unwrap().constraints, vec![(e(2), 1), (e(0), -1)]);
        assert_eq!(cell_constraints(&p2, 2).unwrap().constraints, vec![(e(2), -1), (e(1), 1)]);
        assert!(cell_constraints(&p2, 4).is_err());
    }

    #[test]
    fn cell_volume_examples() {
        let hemi = ConvexCell::new(vec![(e(2), 1)]).unwrap();
        let v = cell_volume_mc(&hemi, 200_000, RngStream::new(5, 0)).unwrap();
        assert!((v.fraction - 0.5).abs() < 3.0 * v.std_error);
        let p2 = OrientedPartition::new(vec![e(2), e(0), e(1)]).unwrap();
        let q = cell_volume_mc(&cell_constraints(&p2, 3).unwrap(), 200_000, RngStream::new(5, 1)).unwrap();
        assert!((q.fraction - 0.25).abs() < 3.0 * q.std_error);
        let empty = ConvexCell::new(vec![(e(2), 1), (e(2), -1)]).unwrap();
        assert_eq!(cell_volume_mc(&empty, 10_000, RngStream::new(5, 2)).unwrap().fraction, 0.0);
        assert!(cell_volume_mc(&hemi, 999, RngStream::new(5, 3)).is_err());
    }

    fn tuple(p: &OrientedPartition) -> Vec<Vec<f64>> {
        p.normals().iter().map(|v| v.coords().to_vec()).collect()
    }

    #[test]
    fn example_automorphisms_depth_two() {
        let p = random_partition(2, 3, 1);
        let (x, y, z) = (p.normal(1).clone(), p.normal(2).clone(), p.normal(3).clone());
        let root = TreeAutomorphism::from_mask(2, 0b001);
        assert_eq!(apply_automorphism(&root, &p).unwrap().normals(), &[x.neg(), z.clone(), y.clone()]);
        let left = TreeAutomorphism::from_mask(2, 0b010);
        assert_eq!(apply_automorphism(&left, &p).unwrap().normals(), &[x.clone(), y.neg(), z.clone()]);
        let id = TreeAutomorphism::identity(2);
        assert_eq!(apply_automorphism(&id, &p).unwrap(), p);
    }

    #[test]
    fn orbit_depth_two_is_the_listed_eight() {
        let p = random_partition(2, 2, 2);
        let (x, y, z) = (p.normal(1).clone(), p.normal(2).clone(), p.normal(3).clone());
        let expected = [
            [x.clone(), y.clone(), z.clone()],
            [x.clone(), y.neg(), z.clone()],
            [x.clone(), y.clone(), z.neg()],
            [x.clone(), y.neg(), z.neg()],
            [x.neg(), z.clone(), y.clone()],
            [x.neg(), z.neg(), y.clone()],
            [x.neg(), z.clone(), y.neg()],
            [x.neg(), z.neg(), y.neg()],
        ];
        let orb = orbit(&p).unwrap();
        assert_eq!(orb.len(), 8);
        let mut got: Vec<_> = orb.iter().map(tuple).collect();
        let mut want: Vec<_> = expected
            .iter()
            .map(|t| t.iter().map(|v| v.coords().to_vec()).collect::<Vec<_>>())
            .collect();
        let key = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| {
            a.iter().flatten().zip(b.iter().flatten()).map(|(u, v)| u.total_cmp(v)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
        };
        got.sort_by(key);
        want.sort_by(key);
        assert_eq!(got, want);
    }

    #[test]
    fn orbit_sizes() {
        let v = normalize(&[0.3, -0.4, 0.5]).unwrap();
        let p1 = OrientedPartition::new(vec![v.clone()]).unwrap();
        let o1 = orbit(&p1).unwrap();
        assert_eq!(o1.len(), 2);
        assert!(o1.iter().any(|q| q.normal(1) == &v.neg()));
        assert_eq!(orbit(&random_partition(3, 2, 3)).unwrap().len(), 128);
        assert!(matches!(orbit(&random_partition(5, 2, 4)), Err(Error::DepthTooLarge(5))));
    }

    #[test]
    fn canonical_form_depth_one() {
        // (-0.6, 0.8, 0) precedes (0.6, -0.8, 0), so it is its own canonical form.
        let v = normalize(&[-0.6, 0.8, 0.0]).unwrap();
        let p = OrientedPartition::new(vec![v.clone()]).unwrap();
        assert_eq!(canonical_form(&p).unwrap().normal(1), &v);
        let q = OrientedPartition::new(vec![v.neg()]).unwrap();
        assert_eq!(canonical_form(&q).unwrap().normal(1), &v);
    }

    #[test]
    fn partition_property_and_additivity() {
        let p = random_partition(3, 2, 7);
        let samples = 100_000;
        let stats = leaf_statistics(&p, samples, RngStream::new(8, 0), CenterMap::Centroid);
        let total: f64 = stats.iter().map(|s| s.volume).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // Every sample lands in exactly one leaf: cells are disjoint.
        let mut rng = RngStream::new(8, 1).rng();
        let cells: Vec<_> = (0..8).map(|l| cell_constraints(&p, l).unwrap()).collect();
        for _ in 0..10_000 {
            let x = sample_uniform(&mut rng, 2);
            let inside: Vec<_> = (0..8).filter(|&l| cells[l].contains(x.coords())).collect();
            assert_eq!(inside, vec![cell_of(&x, &p).unwrap()]);
        }
        // Independent per-cell estimates add up to one.
        let mut sum = 0.0;
        let mut var = 0.0;
        for (l, c) in cells.iter().enumerate() {
            let v = cell_volume_mc(c, 100_000, RngStream::new(9, l as u64)).unwrap();
            sum += v.fraction;
            var += v.std_error * v.std_error;
        }
        assert!((sum - 1.0).abs() <= 4.0 * var.sqrt());
    }

    #[test]
    fn hemisphere_aggregates() {
        let p = OrientedPartition::new(vec![e(2)]).unwrap();
        let stats = leaf_statistics(&p, 400_000, RngStream::new(10, 0), CenterMap::Centroid);
        let agg = node_aggregates(&p, |x, out| out[0] = x[2], 1, &stats).unwrap();
        let root = &agg.nodes[0];
        assert!((root.v_plus - 0.5).abs() < 4e-3);
        assert!((root.v_minus - 0.5).abs() < 4e-3);
        assert!((root.v_plus + root.v_minus - 1.0).abs() < 1e-12);
        // Hemisphere centroids are the poles ±e3.
        assert!((root.phi_plus[0] - 0.5).abs() < 4e-3);
        assert!((root.phi_minus[0] + 0.5).abs() < 4e-3);
    }

    #[test]
    fn constant_map_aggregates_are_scaled_volumes() {
        let p = random_partition(3, 3, 11);
        let stats = leaf_statistics(&p, 50_000, RngStream::new(12, 0), CenterMap::Centroid);
        let agg = node_aggregates(&p, |_, out| { out[0] = 2.5; out[1] = -1.0 }, 2, &stats).unwrap();
        for a in &agg.nodes {
            assert!((a.phi_plus[0] - 2.5 * a.v_plus).abs() < 1e-12);
            assert!((a.phi_minus[1] + a.v_minus).abs() < 1e-12);
        }
        let root = &agg.nodes[0];
        assert!((root.v_plus + root.v_minus - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_cell_contributes_zero() {
        // Node 2 repeats the root cut, so leaf (left, right) is empty.
        let p = OrientedPartition::new(vec![e(2), e(2), e(0)]).unwrap();
        let stats = leaf_statistics(&p, 50_000, RngStream::new(13, 0), CenterMap::Centroid);
        assert_eq!(stats[1].volume, 0.0);
        assert!(stats[1].center.is_none());
        let agg = node_aggregates(&p, |x, out| out[0] = x[0], 1, &stats).unwrap();
        assert_eq!(agg.degenerate_leaves, vec![1]);
        assert_eq!(agg.nodes[1].v_minus, 0.0);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let p = random_partition(3, 4, 14);
        let text = to_text(&p);
        let q = from_text(&text).unwrap();
        assert_eq!(p, q);
        for (a, b) in p.flat().iter().zip(q.flat()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(from_text("partition depth=1 dim=2\n1 1 0\n").is_err());
        assert!(from_text("garbage").is_err());
    }

    fn any_auto(depth: usize) -> impl Strategy<Value = TreeAutomorphism> {
        any::<u64>().prop_map(move |m| TreeAutomorphism::from_mask(depth, m))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn group_law(g in any_auto(3), h in any_auto(3), seed in any::<u32>()) {
            let p = random_partition(3, 2, seed as u64);
            let lhs = apply_automorphism(&g.compose(&h), &p).unwrap();
            let rhs = apply_automorphism(&g, &apply_automorphism(&h, &p).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
            let back = apply_automorphism(&g.inverse(), &apply_automorphism(&g, &p).unwrap()).unwrap();
            prop_assert_eq!(back, p);
        }

        #[test]
        fn canonical_form_constant_on_orbits(g in any_auto(2), seed in any::<u32>()) {
            let p = random_partition(2, 3, seed as u64);
            let c = canonical_form(&p).unwrap();
            prop_assert_eq!(&canonical_form(&apply_automorphism(&g, &p).unwrap()).unwrap(), &c);
            prop_assert_eq!(canonical_form(&c).unwrap(), c);
        }

        #[test]
        fn action_preserves_the_unoriented_partition(g in any_auto(3), seed in any::<u32>()) {
            let p = random_partition(3, 2, seed as u64);
            let q = apply_automorphism(&g, &p).unwrap();
            let mut rng = RngStream::new(seed as u64, 5).rng();
            for _ in 0..2_000 {
                let x = sample_uniform(&mut rng, 2);
                if let (Ok(a), Ok(b)) = (cell_of(&x, &p), cell_of(&x, &q)) {
                    prop_assert_eq!(leaf_image(&g, a), b);
                }
            }
        }
    }
}
