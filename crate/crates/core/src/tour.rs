//! Tours as vertex arrays with an inverse position index.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::instance::{is_permutation, EdgeKey, Instance, Vertex};
use crate::rng::seeded_rng;

#[derive(Debug, Error, PartialEq)]
pub enum TourError {
    #[error("order is not a permutation of 0..{0}")]
    NotAPermutation(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("bad tour dump token `{0}`")]
    BadToken(String),
}

/// Hamiltonian cycle over an instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tour {
    order: Vec<Vertex>,
    pos: Vec<usize>,
    length: i64,
}

impl Tour {
    pub fn from_order(inst: &Instance, order: Vec<Vertex>) -> Result<Self, TourError> {
        let n = inst.dimension();
        if !is_permutation(&order, n) {
            return Err(TourError::NotAPermutation(n));
        }
        let length = inst.cycle_length(&order);
        Ok(Self::from_parts(order, length))
    }

    fn from_parts(order: Vec<Vertex>, length: i64) -> Self {
        let mut pos = vec![0; order.len()];
        for (i, &v) in order.iter().enumerate() {
            pos[v] = i;
        }
        Tour { order, pos, length }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.order.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[Vertex] {
        &self.order
    }

    #[inline]
    pub fn length(&self) -> i64 {
        self.length
    }

    #[inline]
    pub fn pos(&self, v: Vertex) -> usize {
        self.pos[v]
    }

    #[inline]
    pub fn next(&self, v: Vertex) -> Vertex {
        let i = self.pos[v] + 1;
        self.order[if i == self.order.len() { 0 } else { i }]
    }

    #[inline]
    pub fn prev(&self, v: Vertex) -> Vertex {
        let i = self.pos[v];
        self.order[if i == 0 { self.order.len() - 1 } else { i - 1 }]
    }

    #[inline]
    pub fn adjacent(&self, v: Vertex) -> [Vertex; 2] {
        [self.prev(v), self.next(v)]
    }

    #[inline]
    pub fn contains_edge(&self, u: Vertex, v: Vertex) -> bool {
        self.next(u) == v || self.prev(u) == v
    }

    /// Undirected edges in tour order, starting with `{order[0], order[1]}`.
    pub fn edges(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        let n = self.order.len();
        (0..n).map(move |i| EdgeKey::new(self.order[i], self.order[(i + 1) % n]))
    }

    pub fn edge_set(&self) -> EdgeSetView<'_> {
        EdgeSetView { tour: self }
    }

    /// The same cycle traversed backwards.
    pub fn reversed(&self) -> Tour {
        let mut order = self.order.clone();
        order.reverse();
        Self::from_parts(order, self.length)
    }

    /// Permutation, inverse index and stored length all agree.
    pub fn is_consistent(&self, inst: &Instance) -> bool {
        is_permutation(&self.order, inst.dimension())
            && self
                .order
                .iter()
                .enumerate()
                .all(|(i, &v)| self.pos[v] == i)
            && inst.cycle_length(&self.order) == self.length
    }

    /// One line of space-separated 1-based ids.
    pub fn dump(&self) -> String {
        let ids: Vec<String> = self.order.iter().map(|v| (v + 1).to_string()).collect();
        ids.join(" ")
    }

    pub fn parse_dump(inst: &Instance, text: &str) -> Result<Tour, TourError> {
        let order = text
            .split_whitespace()
            .map(|t| match t.parse::<usize>() {
                Ok(id) if id >= 1 => Ok(id - 1),
                _ => Err(TourError::BadToken(t.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Tour::from_order(inst, order)
    }
}

/// Constant-time membership view over a tour's edges.
#[derive(Clone, Copy)]
pub struct EdgeSetView<'a> {
    tour: &'a Tour,
}

impl EdgeSetView<'_> {
    #[inline]
    pub fn contains(&self, e: EdgeKey) -> bool {
        self.tour.contains_edge(e.u, e.v)
    }

    pub fn len(&self) -> usize {
        self.tour.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tour.is_empty()
    }

    pub fn degree(&self, _v: Vertex) -> usize {
        2
    }
}

pub fn tour_length(inst: &Instance, order: &[Vertex]) -> Result<i64, TourError> {
    if !is_permutation(order, inst.dimension()) {
        return Err(TourError::NotAPermutation(inst.dimension()));
    }
    Ok(inst.cycle_length(order))
}

/// Partition of `E_A ∪ E_B`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EdgePartition {
    pub shared: Vec<EdgeKey>,
    pub only_a: Vec<EdgeKey>,
    pub only_b: Vec<EdgeKey>,
}

pub fn shared_and_distinct_edges(a: &Tour, b: &Tour) -> Result<EdgePartition, TourError> {
    if a.len() != b.len() {
        return Err(TourError::DimensionMismatch(a.len(), b.len()));
    }
    let mut part = EdgePartition::default();
    for e in a.edges() {
        if b.contains_edge(e.u, e.v) {
            part.shared.push(e);
        } else {
            part.only_a.push(e);
        }
    }
    part.only_b = b.edges().filter(|e| !a.contains_edge(e.u, e.v)).collect();
    part.shared.sort_unstable();
    part.only_a.sort_unstable();
    part.only_b.sort_unstable();
    Ok(part)
}

/// Randomized nearest-neighbor construction followed by neighbor-list 2-opt
/// to a local optimum.
pub fn greedy_2opt_init(inst: &Instance, seed: u64) -> Tour {
    let n = inst.dimension();
    let mut rng = seeded_rng(seed);
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut cur = rng.gen_range(0..n);
    visited[cur] = true;
    order.push(cur);
    while order.len() < n {
        let next = inst
            .neighbors(cur)
            .iter()
            .copied()
            .find(|&w| !visited[w])
            .unwrap_or_else(|| {
                (0..n)
                    .filter(|&w| !visited[w])
                    .min_by_key(|&w| (inst.distance(cur, w), w))
                    .expect("unvisited vertex remains")
            });
        visited[next] = true;
        order.push(next);
        cur = next;
    }
    let mut tour = Tour::from_parts(order, 0);
    two_opt(inst, &mut tour);
    tour.length = inst.cycle_length(&tour.order);
    tour
}

/// Reverses the cyclic segment from position `i` forward to `j`, or its
/// complement when that is shorter. Either keeps the same cycle.
fn reverse_segment(t: &mut Tour, i: usize, j: usize) {
    let n = t.order.len();
    let len = (j + n - i) % n + 1;
    let (mut lo, mut hi, len) = if 2 * len > n {
        ((j + 1) % n, (i + n - 1) % n, n - len)
    } else {
        (i, j, len)
    };
    for _ in 0..len / 2 {
        let (a, b) = (t.order[lo], t.order[hi]);
        t.order[lo] = b;
        t.order[hi] = a;
        t.pos[b] = lo;
        t.pos[a] = hi;
        lo = (lo + 1) % n;
        hi = (hi + n - 1) % n;
    }
}

/// First-improvement 2-opt over neighbor-list candidates with a work queue.
/// Leaves `length` stale; callers recompute.
fn two_opt(inst: &Instance, t: &mut Tour) {
    let n = t.len();
    let mut queue: VecDeque<Vertex> = t.order.iter().copied().collect();
    let mut queued = vec![true; n];
    while let Some(a) = queue.pop_front() {
        queued[a] = false;
        let mut improved = None;
        'dirs: for succ in [true, false] {
            let b = if succ { t.next(a) } else { t.prev(a) };
            let d_ab = inst.distance(a, b);
            for &c in inst.neighbors(a) {
                let d_ac = inst.distance(a, c);
                if d_ac >= d_ab {
                    break;
                }
                let d = if succ { t.next(c) } else { t.prev(c) };
                if c == b || d == a {
                    continue;
                }
                let delta = d_ac + inst.distance(b, d) - d_ab - inst.distance(c, d);
                if delta < 0 {
                    if succ {
                        reverse_segment(t, t.pos[b], t.pos[c]);
                    } else {
                        reverse_segment(t, t.pos[c], t.pos[b]);
                    }
                    improved = Some([a, b, c, d]);
                    break 'dirs;
                }
            }
        }
        if let Some(touched) = improved {
            for v in touched {
                if !queued[v] {
                    queued[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
}
