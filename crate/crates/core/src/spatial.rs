//! A static kd-tree over points in `R^d`, answering "is any point within r".

const LEAF_SIZE: usize = 16;

pub struct KdTree {
    dim: usize,
    /// Points stored contiguously, permuted into tree order.
    coords: Vec<f64>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy)]
struct Node {
    start: usize,
    end: usize,
    axis: usize,
    split: f64,
    /// Index of the left child; the right child follows its subtree. `usize::MAX` marks a leaf.
    left: usize,
    right: usize,
}

impl KdTree {
    /// Builds from `points` laid out row-major with `dim` columns.
    pub fn new(points: &[f64], dim: usize) -> Self {
        assert!(dim > 0 && points.len().is_multiple_of(dim));
        let count = points.len() / dim;
        let mut order: Vec<usize> = (0..count).collect();
        let mut nodes = Vec::new();
        if count > 0 {
            build(points, dim, &mut order, 0, count, &mut nodes);
        }
        let mut coords = Vec::with_capacity(points.len());
        for &i in &order {
            coords.extend_from_slice(&points[i * dim..(i + 1) * dim]);
        }
        Self { dim, coords, nodes }
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Whether some stored point lies at Euclidean distance `< r` from `q`.
    pub fn any_within(&self, q: &[f64], r: f64) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let mut off = vec![0.0; self.dim];
        self.search(0, q, r * r, &mut off, 0.0)
    }

    // `off[a]` is the distance from `q` to the current cell along axis `a`
    // and `rd` their squared sum, a lower bound on the distance to any point
    // of the cell.
    fn search(&self, id: usize, q: &[f64], r2: f64, off: &mut [f64], rd: f64) -> bool {
        let node = self.nodes[id];
        if node.left == usize::MAX {
            return self.coords[node.start * self.dim..node.end * self.dim]
                .chunks_exact(self.dim)
                .any(|p| p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < r2);
        }
        let diff = q[node.axis] - node.split;
        let (near, far) = if diff <= 0.0 { (node.left, node.right) } else { (node.right, node.left) };
        if self.search(near, q, r2, off, rd) {
            return true;
        }
        let old = off[node.axis];
        let rd_far = rd - old * old + diff * diff;
        if rd_far >= r2 {
            return false;
        }
        off[node.axis] = diff;
        let found = self.search(far, q, r2, off, rd_far);
        off[node.axis] = old;
        found
    }
}

fn build(points: &[f64], dim: usize, order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    nodes.push(Node { start, end, axis: 0, split: 0.0, left: usize::MAX, right: usize::MAX });
    if end - start <= LEAF_SIZE {
        return id;
    }
    let slice = &mut order[start..end];
    let mut best_axis = 0;
    let mut best_spread = -1.0;
    for a in 0..dim {
        let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = points[i * dim + a];
            (lo.min(v), hi.max(v))
        });
        if hi - lo > best_spread {
            best_spread = hi - lo;
            best_axis = a;
        }
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[a * dim + best_axis].total_cmp(&points[b * dim + best_axis]));
    let split = points[slice[mid] * dim + best_axis];
    let left = build(points, dim, order, start, start + mid, nodes);
    let right = build(points, dim, order, start + mid, end, nodes);
    nodes[id] = Node { start, end, axis: best_axis, split, left, right };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_brute_force(
            pts in prop::collection::vec(-1.0f64..1.0, 0..600),
            q in prop::collection::vec(-1.2f64..1.2, 3),
            r in 0.0f64..0.8,
        ) {
            let n = pts.len() / 3 * 3;
            let pts = &pts[..n];
            let tree = KdTree::new(pts, 3);
            let brute = pts.chunks_exact(3).any(|p| p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < r * r);
            prop_assert_eq!(tree.any_within(&q, r), brute);
        }
    }

    #[test]
    fn empty_tree() {
        let t = KdTree::new(&[], 2);
        assert!(t.is_empty());
        assert!(!t.any_within(&[0.0, 0.0], 10.0));
    }
}
