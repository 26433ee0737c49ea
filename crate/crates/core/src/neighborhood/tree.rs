//! Binary space-partitioning trees with a best-first ranked traversal.
//!
//! Both tree backends share the node layout and the traversal; they differ
//! only in how a node bounds its points (axis-aligned box or ball) and how
//! that bound turns into a lower bound on the query distance.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::{distance, Points};

pub(crate) const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
pub(crate) enum Bound {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Bound {
    /// Never exceeds the computed [`distance`] from `query` to any point the
    /// node holds.
    fn min_distance(&self, query: &[f64]) -> f64 {
        match self {
            Bound::Box { lo, hi } => {
                let mut sum = 0.0;
                for ((&q, &l), &h) in query.iter().zip(lo).zip(hi) {
                    let gap = if q < l {
                        q - l
                    } else if q > h {
                        q - h
                    } else {
                        0.0
                    };
                    sum += gap * gap;
                }
                sum.sqrt()
            }
            Bound::Ball { center, radius } => {
                let to_center = distance(query, center);
                let slack = 1e-10 * (to_center + radius);
                (to_center - radius - slack).max(0.0)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub start: usize,
    pub end: usize,
    pub children: Option<(usize, usize)>,
    pub bound: Bound,
}

/// Nodes over a permutation of point indices; node 0 is the root.
#[derive(Debug, Clone)]
pub(crate) struct Tree {
    pub nodes: Vec<Node>,
    pub perm: Vec<usize>,
}

impl Tree {
    pub fn build(points: &Points, make_bound: impl Fn(&Points, &[usize]) -> Bound) -> Tree {
        let mut tree = Tree {
            nodes: Vec::new(),
            perm: (0..points.len()).collect(),
        };
        tree.split(points, 0, points.len(), &make_bound);
        tree
    }

    fn split(
        &mut self,
        points: &Points,
        start: usize,
        end: usize,
        make_bound: &impl Fn(&Points, &[usize]) -> Bound,
    ) -> usize {
        let id = self.nodes.len();
        let bound = make_bound(points, &self.perm[start..end]);
        self.nodes.push(Node {
            start,
            end,
            children: None,
            bound,
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let Some(axis) = widest_axis(points, &self.perm[start..end]) else {
            return id;
        };
        let mid = (end - start) / 2;
        self.perm[start..end].select_nth_unstable_by(mid, |&a, &b| {
            points.row(a)[axis].total_cmp(&points.row(b)[axis])
        });
        let left = self.split(points, start, start + mid, make_bound);
        let right = self.split(points, start + mid, end, make_bound);
        self.nodes[id].children = Some((left, right));
        id
    }
}

/// Dimension of largest extent, or `None` when every point coincides.
fn widest_axis(points: &Points, idx: &[usize]) -> Option<usize> {
    let mut best = None;
    let mut best_extent = 0.0;
    for d in 0..points.dim() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in idx {
            let x = points.row(i)[d];
            lo = lo.min(x);
            hi = hi.max(x);
        }
        if hi - lo > best_extent {
            best_extent = hi - lo;
            best = Some(d);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Item {
    Node(usize),
    Point(usize),
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    key: f64,
    item: Item,
    tie: usize,
}

impl Entry {
    fn rank(&self) -> (u8, usize) {
        match self.item {
            // Nodes go first at equal key so that every point that could
            // tie is already queued before a tied point is emitted.
            Item::Node(_) => (0, self.tie),
            Item::Point(_) => (1, self.tie),
        }
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .total_cmp(&other.key)
            .then_with(|| self.rank().cmp(&other.rank()))
    }
}

/// Yields `(point index, distance)` in ascending `(distance, tie rank)`
/// order, expanding only the nodes it needs.
pub(crate) struct RankedTraversal<'a> {
    tree: &'a Tree,
    points: &'a Points,
    tie_rank: &'a [usize],
    query: &'a [f64],
    heap: BinaryHeap<Reverse<Entry>>,
}

impl<'a> RankedTraversal<'a> {
    pub fn new(tree: &'a Tree, points: &'a Points, tie_rank: &'a [usize], query: &'a [f64]) -> Self {
        let mut heap = BinaryHeap::new();
        if !tree.nodes.is_empty() {
            heap.push(Reverse(Entry {
                key: tree.nodes[0].bound.min_distance(query),
                item: Item::Node(0),
                tie: 0,
            }));
        }
        RankedTraversal {
            tree,
            points,
            tie_rank,
            query,
            heap,
        }
    }
}

impl Iterator for RankedTraversal<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<Self::Item> {
        while let Some(Reverse(entry)) = self.heap.pop() {
            match entry.item {
                Item::Point(i) => return Some((i, entry.key)),
                Item::Node(n) => {
                    let node = &self.tree.nodes[n];
                    match node.children {
                        Some((l, r)) => {
                            for c in [l, r] {
                                self.heap.push(Reverse(Entry {
                                    key: self.tree.nodes[c].bound.min_distance(self.query),
                                    item: Item::Node(c),
                                    tie: c,
                                }));
                            }
                        }
                        None => {
                            for &i in &self.tree.perm[node.start..node.end] {
                                self.heap.push(Reverse(Entry {
                                    key: distance(self.query, self.points.row(i)),
                                    item: Item::Point(i),
                                    tie: self.tie_rank[i],
                                }));
                            }
                        }
                    }
                }
            }
        }
        None
    }
}
