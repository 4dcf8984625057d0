//! kD-tree over fixed-length descriptors with best-bin-first search.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const LEAF_SIZE: usize = 6;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    points: Vec<f64>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

struct Pending {
    bound: f64,
    node: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // min-heap on bound, then node id for determinism
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl KdTree {
    /// Builds a tree over `points.len() / dim` points stored contiguously.
    pub fn new(points: Vec<f64>, dim: usize) -> Self {
        assert!(dim > 0 && points.len().is_multiple_of(dim));
        let n = points.len() / dim;
        let mut tree = KdTree {
            dim,
            points,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    pub fn from_descriptors<const D: usize>(descs: &[[f64; D]]) -> Self {
        KdTree::new(descs.iter().flatten().copied().collect(), D)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split on the dimension of largest spread at the median
        let dim = (0..self.dim)
            .max_by(|&a, &b| self.spread(start, end, a).total_cmp(&self.spread(start, end, b)))
            .unwrap_or(0);
        if self.spread(start, end, dim) == 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let (points, d) = (&self.points, self.dim);
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a * d + dim].total_cmp(&points[b * d + dim]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid] * self.dim + dim];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    fn spread(&self, start: usize, end: usize, dim: usize) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in &self.order[start..end] {
            let v = self.points[i * self.dim + dim];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi - lo
    }

    fn sq_dist(&self, i: usize, query: &[f64]) -> f64 {
        self.point(i).iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// Approximate nearest neighbor, visiting at most `max_leaves` leaves.
    /// `None` searches exhaustively and returns the exact nearest neighbor
    /// (lowest index among ties).
    pub fn nearest(&self, query: &[f64], max_leaves: Option<usize>) -> Result<(usize, f64)> {
        if self.is_empty() {
            return Err(Error::invalid("nearest-neighbor query on an empty tree"));
        }
        assert_eq!(query.len(), self.dim);
        let budget = max_leaves.unwrap_or(usize::MAX).max(1);
        let mut best = (usize::MAX, f64::INFINITY);
        let mut heap = BinaryHeap::new();
        heap.push(Pending { bound: 0.0, node: 0 });
        let mut visited = 0;
        while let Some(Pending { bound, node }) = heap.pop() {
            if bound > best.1 || visited >= budget {
                break;
            }
            let mut current = node;
            let current_bound = bound;
            loop {
                match self.nodes[current] {
                    Node::Leaf { start, end } => {
                        for &i in &self.order[start..end] {
                            let d = self.sq_dist(i, query);
                            if d < best.1 || (d == best.1 && i < best.0) {
                                best = (i, d);
                            }
                        }
                        visited += 1;
                        break;
                    }
                    Node::Split {
                        dim,
                        value,
                        left,
                        right,
                    } => {
                        let diff = query[dim] - value;
                        let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                        let far_bound = current_bound.max(diff * diff);
                        if far_bound <= best.1 {
                            heap.push(Pending {
                                bound: far_bound,
                                node: far,
                            });
                        }
                        current = near;
                    }
                }
            }
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_scan(points: &[[f64; 16]], q: &[f64]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 16]> {
        (0..n)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn exact_search_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let points = random_points(&mut rng, 100);
        let tree = KdTree::from_descriptors(&points);
        for _ in 0..200 {
            let q: [f64; 16] = std::array::from_fn(|_| rng.random_range(-1.2..1.2));
            let (idx, d) = tree.nearest(&q, None).unwrap();
            let (oidx, od) = linear_scan(&points, &q);
            assert_eq!(idx, oidx);
            assert_eq!(d, od);
        }
    }

    #[test]
    fn stored_point_is_an_exact_hit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let points = random_points(&mut rng, 500);
        let tree = KdTree::from_descriptors(&points);
        for (i, p) in points.iter().enumerate().step_by(17) {
            assert_eq!(tree.nearest(p, Some(32)).unwrap(), (i, 0.0));
        }
    }

    #[test]
    fn budget_limited_search_is_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let points = random_points(&mut rng, 2000);
        let tree = KdTree::from_descriptors(&points);
        let mut exact = 0;
        for _ in 0..200 {
            let q: [f64; 16] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let (_, d) = tree.nearest(&q, Some(32)).unwrap();
            let (_, od) = linear_scan(&points, &q);
            assert!(d >= od);
            if d == od {
                exact += 1;
            }
        }
        assert!(exact > 50, "{exact}");
    }

    #[test]
    fn duplicates_and_empty() {
        let tree = KdTree::new(vec![1.0; 16 * 40], 16);
        assert_eq!(tree.nearest(&[1.0; 16], None).unwrap(), (0, 0.0));
        let empty = KdTree::new(Vec::new(), 16);
        assert!(empty.nearest(&[0.0; 16], None).is_err());
    }
}
