//! Union graph of two parents, AB-cycle tracing and E-set application.
//!
//! An AB-cycle alternates between edges of parent A and parent B. Its chain
//! is stored so that `(chain[i], chain[i + 1])` is an A edge for even `i`
//! and a B edge for odd `i`, including the closing edge
//! `(chain[2m - 1], chain[0])`, which is always a B edge.

use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::instance::{EdgeKey, Vertex};
use crate::tour::Tour;

const NONE: Vertex = usize::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum AbError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("E-set edge {0} labeled A is not an edge of parent A")]
    MissingParentEdge(EdgeKey),
    #[error("E-set uses edge {0} twice")]
    RepeatedEdge(EdgeKey),
    #[error("vertex {0} has no free slot for an inserted edge")]
    DegreeOverflow(Vertex),
    #[error("structure is not 2-regular at vertex {0}")]
    NotTwoRegular(Vertex),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    A,
    B,
}

/// Non-shared edges of `A ∪ B`, with per-label adjacency.
///
/// Edges present in both parents are cancelled at construction, so every
/// vertex has the same number (0, 1 or 2) of A and B edges.
#[derive(Clone, Debug)]
pub struct UnionGraph {
    adj_a: Vec<[Vertex; 2]>,
    adj_b: Vec<[Vertex; 2]>,
    deg_a: Vec<u8>,
    deg_b: Vec<u8>,
    edges: usize,
}

impl UnionGraph {
    pub fn build(a: &Tour, b: &Tour) -> Result<Self, AbError> {
        if a.len() != b.len() {
            return Err(AbError::DimensionMismatch(a.len(), b.len()));
        }
        let n = a.len();
        let mut g = UnionGraph {
            adj_a: vec![[NONE; 2]; n],
            adj_b: vec![[NONE; 2]; n],
            deg_a: vec![0; n],
            deg_b: vec![0; n],
            edges: 0,
        };
        for v in 0..n {
            for u in a.adjacent(v) {
                if !b.contains_edge(v, u) {
                    g.adj_a[v][g.deg_a[v] as usize] = u;
                    g.deg_a[v] += 1;
                    g.edges += 1;
                }
            }
            for u in b.adjacent(v) {
                if !a.contains_edge(v, u) {
                    g.adj_b[v][g.deg_b[v] as usize] = u;
                    g.deg_b[v] += 1;
                    g.edges += 1;
                }
            }
        }
        // each undirected edge was counted from both ends
        g.edges /= 2;
        Ok(g)
    }

    pub fn dimension(&self) -> usize {
        self.adj_a.len()
    }

    /// Uncancelled labeled edges remaining.
    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.edges == 0
    }

    pub fn degree(&self, v: Vertex, label: Label) -> usize {
        match label {
            Label::A => self.deg_a[v] as usize,
            Label::B => self.deg_b[v] as usize,
        }
    }

    /// Uncancelled neighbors of `v` under `label`.
    pub fn neighbors(&self, v: Vertex, label: Label) -> &[Vertex] {
        match label {
            Label::A => &self.adj_a[v][..self.deg_a[v] as usize],
            Label::B => &self.adj_b[v][..self.deg_b[v] as usize],
        }
    }

    fn remove(&mut self, u: Vertex, v: Vertex, label: Label) {
        let (adj, deg) = match label {
            Label::A => (&mut self.adj_a, &mut self.deg_a),
            Label::B => (&mut self.adj_b, &mut self.deg_b),
        };
        for (x, y) in [(u, v), (v, u)] {
            let d = deg[x] as usize;
            let slot = adj[x][..d]
                .iter()
                .position(|&w| w == y)
                .expect("edge present");
            adj[x][slot] = adj[x][d - 1];
            adj[x][d - 1] = NONE;
            deg[x] -= 1;
        }
        self.edges -= 1;
    }
}

/// Alternating cycle over the union graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbCycle {
    chain: Vec<Vertex>,
}

impl AbCycle {
    /// Wraps a chain whose even-indexed edges are A edges. Length must be
    /// even and at least 4.
    pub fn from_chain(chain: Vec<Vertex>) -> Self {
        debug_assert!(chain.len() >= 4 && chain.len().is_multiple_of(2));
        AbCycle { chain }
    }

    pub fn chain(&self) -> &[Vertex] {
        &self.chain
    }

    /// Number of edges (equal to the chain length).
    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain.is_empty()
    }

    /// Edge `i` of the cycle with its label.
    #[inline]
    pub fn edge(&self, i: usize) -> (Vertex, Vertex, Label) {
        let m = self.chain.len();
        let label = if i.is_multiple_of(2) {
            Label::A
        } else {
            Label::B
        };
        (self.chain[i], self.chain[(i + 1) % m], label)
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vertex, Vertex, Label)> + '_ {
        (0..self.chain.len()).map(move |i| self.edge(i))
    }

    pub fn a_edges(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        self.edges()
            .filter(|e| e.2 == Label::A)
            .map(|(u, v, _)| EdgeKey::new(u, v))
    }

    pub fn b_edges(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        self.edges()
            .filter(|e| e.2 == Label::B)
            .map(|(u, v, _)| EdgeKey::new(u, v))
    }

    /// Vertices appearing exactly once in the chain.
    pub fn portal_count(&self) -> usize {
        let mut vs = self.chain.clone();
        vs.sort_unstable();
        let mut count = 0;
        let mut i = 0;
        while i < vs.len() {
            let mut j = i;
            while j < vs.len() && vs[j] == vs[i] {
                j += 1;
            }
            if j - i == 1 {
                count += 1;
            }
            i = j;
        }
        count
    }

    /// Change in tour length when applied to parent A.
    pub fn gain(&self, dist: impl Fn(Vertex, Vertex) -> i64) -> i64 {
        self.edges()
            .map(|(u, v, l)| match l {
                Label::A => -dist(u, v),
                Label::B => dist(u, v),
            })
            .sum()
    }
}

impl fmt::Display for AbCycle {
    /// `1 -A- 5 -B- 7 -A- 3 -B- 1` with 1-based ids.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, &v) in self.chain.iter().enumerate() {
            let l = if i % 2 == 0 { "A" } else { "B" };
            write!(f, "{} -{}- ", v + 1, l)?;
        }
        write!(f, "{}", self.chain[0] + 1)
    }
}

/// Edge-disjoint AB-cycles applied jointly to parent A.
#[derive(Clone, Debug)]
pub struct ESet<'a> {
    cycles: Vec<&'a AbCycle>,
}

impl<'a> ESet<'a> {
    pub fn single(c: &'a AbCycle) -> Self {
        ESet { cycles: vec![c] }
    }

    pub fn new(cycles: Vec<&'a AbCycle>) -> Self {
        assert!(!cycles.is_empty(), "an E-set holds at least one cycle");
        ESet { cycles }
    }

    pub fn cycles(&self) -> &[&'a AbCycle] {
        &self.cycles
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vertex, Vertex, Label)> + '_ {
        self.cycles.iter().flat_map(|c| c.edges())
    }

    /// Vertices with exactly two internal edges under the union of cycles.
    pub fn c_count(&self) -> usize {
        let mut vs: Vec<Vertex> = self
            .cycles
            .iter()
            .flat_map(|c| c.chain.iter().copied())
            .collect();
        vs.sort_unstable();
        vs.chunk_by(|x, y| x == y).filter(|g| g.len() == 1).count()
    }

    pub fn gain(&self, dist: impl Fn(Vertex, Vertex) -> i64 + Copy) -> i64 {
        self.cycles.iter().map(|c| c.gain(dist)).sum()
    }
}

/// Randomly traces the union graph into a complete decomposition of AB-cycles.
///
/// The walk starts at a random vertex with an A edge and extends with a
/// random unused edge of the alternating label. When the walk returns to a
/// vertex at a position of matching parity, the closed suffix is extracted
/// as a cycle and the walk continues from the remaining prefix; an emptied
/// walk restarts at a fresh random vertex.
pub fn trace_ab_cycles<R: Rng + ?Sized>(g: &UnionGraph, rng: &mut R) -> Vec<AbCycle> {
    let mut g = g.clone();
    let n = g.dimension();
    let mut active: Vec<Vertex> = (0..n).filter(|&v| g.deg_a[v] > 0).collect();
    let mut active_pos = vec![NONE; n];
    for (i, &v) in active.iter().enumerate() {
        active_pos[v] = i;
    }
    let deactivate = |v: Vertex, active: &mut Vec<Vertex>, active_pos: &mut Vec<usize>| {
        let i = active_pos[v];
        let last = *active.last().expect("nonempty");
        active.swap_remove(i);
        if last != v {
            active_pos[last] = i;
        }
        active_pos[v] = NONE;
    };

    // a vertex can sit on the walk at most three times
    let mut occ: Vec<([usize; 4], u8)> = vec![([0; 4], 0); n];
    let mut path: Vec<Vertex> = Vec::new();
    let mut cycles = Vec::new();

    loop {
        if path.len() <= 1 {
            if let Some(&v) = path.first() {
                occ[v].1 = 0;
            }
            path.clear();
            if active.is_empty() {
                break;
            }
            let v0 = active[rng.gen_range(0..active.len())];
            path.push(v0);
            occ[v0] = ([0; 4], 1);
        }
        let k = path.len() - 1;
        let cur = path[k];
        let label = if k.is_multiple_of(2) {
            Label::A
        } else {
            Label::B
        };
        let nbrs = g.neighbors(cur, label);
        let next = match nbrs.len() {
            0 => unreachable!("alternating walk cannot get stuck at a balanced vertex"),
            1 => nbrs[0],
            d => nbrs[rng.gen_range(0..d)],
        };
        g.remove(cur, next, label);
        for v in [cur, next] {
            if g.deg_a[v] == 0 && g.deg_b[v] == 0 && active_pos[v] != NONE {
                deactivate(v, &mut active, &mut active_pos);
            }
        }
        path.push(next);
        let k2 = k + 1;

        let (slots, cnt) = occ[next];
        let close = slots[..cnt as usize]
            .iter()
            .copied()
            .filter(|&j| j % 2 == k2 % 2)
            .max();
        match close {
            Some(j) => {
                for (idx, &v) in path.iter().enumerate().take(k2).skip(j + 1) {
                    let (s, c) = &mut occ[v];
                    let p = s[..*c as usize]
                        .iter()
                        .position(|&x| x == idx)
                        .expect("recorded");
                    s[p] = s[*c as usize - 1];
                    *c -= 1;
                }
                let mut chain: Vec<Vertex> = path[j..k2].to_vec();
                if j % 2 == 1 {
                    chain.rotate_left(1);
                }
                cycles.push(AbCycle::from_chain(chain));
                path.truncate(j + 1);
            }
            None => {
                let (s, c) = &mut occ[next];
                s[*c as usize] = k2;
                *c += 1;
            }
        }
    }
    cycles
}

/// Adjacency of a 2-regular edge structure (a disjoint union of cycles).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegreeStructure {
    adj: Vec<[Vertex; 2]>,
}

impl DegreeStructure {
    pub fn from_tour(t: &Tour) -> Self {
        DegreeStructure {
            adj: (0..t.len()).map(|v| t.adjacent(v)).collect(),
        }
    }

    /// Builds a structure from explicit undirected edges.
    pub fn from_edges(n: usize, edges: &[EdgeKey]) -> Result<Self, AbError> {
        let mut s = DegreeStructure {
            adj: vec![[NONE; 2]; n],
        };
        for e in edges {
            s.insert(e.u, e.v)?;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn dimension(&self) -> usize {
        self.adj.len()
    }

    #[inline]
    pub fn adjacent(&self, v: Vertex) -> [Vertex; 2] {
        self.adj[v]
    }

    pub fn contains_edge(&self, u: Vertex, v: Vertex) -> bool {
        self.adj[u].contains(&v)
    }

    pub fn edges(&self) -> Vec<EdgeKey> {
        let mut out: Vec<EdgeKey> = (0..self.adj.len())
            .flat_map(|v| {
                self.adj[v]
                    .iter()
                    .filter(move |&&u| u != NONE && v < u)
                    .map(move |&u| EdgeKey::new(v, u))
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub(crate) fn detach(&mut self, u: Vertex, v: Vertex) -> Result<(), AbError> {
        for (x, y) in [(u, v), (v, u)] {
            let slot = self.adj[x]
                .iter()
                .position(|&w| w == y)
                .ok_or(AbError::MissingParentEdge(EdgeKey::new(u, v)))?;
            self.adj[x][slot] = NONE;
        }
        Ok(())
    }

    pub(crate) fn insert(&mut self, u: Vertex, v: Vertex) -> Result<(), AbError> {
        if self.adj[u].contains(&v) {
            return Err(AbError::RepeatedEdge(EdgeKey::new(u, v)));
        }
        for (x, y) in [(u, v), (v, u)] {
            let slot = self.adj[x]
                .iter()
                .position(|&w| w == NONE)
                .ok_or(AbError::DegreeOverflow(x))?;
            self.adj[x][slot] = y;
        }
        Ok(())
    }

    /// Replaces `old` by `new` in the adjacency of `v` (one side only).
    #[inline]
    pub(crate) fn relink(&mut self, v: Vertex, old: Vertex, new: Vertex) {
        let slot = if self.adj[v][0] == old { 0 } else { 1 };
        debug_assert_eq!(self.adj[v][slot], old);
        self.adj[v][slot] = new;
    }

    pub fn validate(&self) -> Result<(), AbError> {
        for (v, nb) in self.adj.iter().enumerate() {
            if nb[0] == NONE || nb[1] == NONE || nb[0] == nb[1] || nb[0] == v || nb[1] == v {
                return Err(AbError::NotTwoRegular(v));
            }
            for &u in nb {
                if !self.adj[u].contains(&v) {
                    return Err(AbError::NotTwoRegular(v));
                }
            }
        }
        Ok(())
    }

    /// Connected components as vertex cycles, each starting at its lowest id.
    pub fn components(&self) -> Vec<Vec<Vertex>> {
        let n = self.adj.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut cyc = vec![start];
            seen[start] = true;
            let (mut prev, mut cur) = (start, self.adj[start][0]);
            while cur != start {
                seen[cur] = true;
                cyc.push(cur);
                let nb = self.adj[cur];
                let nxt = if nb[0] != prev { nb[0] } else { nb[1] };
                prev = cur;
                cur = nxt;
            }
            out.push(cyc);
        }
        out
    }

    /// Component count without materializing the cycles.
    pub fn component_count(&self) -> usize {
        let n = self.adj.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let (mut prev, mut cur) = (start, self.adj[start][0]);
            while cur != start {
                seen[cur] = true;
                let nb = self.adj[cur];
                let nxt = if nb[0] != prev { nb[0] } else { nb[1] };
                prev = cur;
                cur = nxt;
            }
        }
        count
    }

    /// Visit order of a single-component structure starting at vertex 0.
    pub fn cycle_order(&self) -> Option<Vec<Vertex>> {
        let n = self.adj.len();
        let mut order = Vec::with_capacity(n);
        let (mut prev, mut cur) = (NONE, 0);
        loop {
            order.push(cur);
            let nb = self.adj[cur];
            let nxt = if nb[0] != prev { nb[0] } else { nb[1] };
            prev = cur;
            cur = nxt;
            if cur == 0 || order.len() > n {
                break;
            }
        }
        (order.len() == n).then_some(order)
    }
}

/// Removes the E-set's A edges from parent A and inserts its B edges.
pub fn apply_eset(a: &Tour, e: &ESet<'_>) -> Result<DegreeStructure, AbError> {
    let mut s = DegreeStructure::from_tour(a);
    apply_into(&mut s, e)?;
    Ok(s)
}

pub(crate) fn apply_into(s: &mut DegreeStructure, e: &ESet<'_>) -> Result<(), AbError> {
    for (u, v, l) in e.edges() {
        if l == Label::A {
            s.detach(u, v)?;
        }
    }
    for (u, v, l) in e.edges() {
        if l == Label::B {
            s.insert(u, v)?;
        }
    }
    Ok(())
}

/// Brute-force subtour enumeration; the ground truth for the validity check.
pub fn enumerate_subtours(s: &DegreeStructure) -> Result<Vec<Vec<Vertex>>, AbError> {
    s.validate()?;
    Ok(s.components())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::generate_rue;
    use crate::rng::seeded_rng;
    use crate::tour::greedy_2opt_init;
    use rand::seq::SliceRandom;
    use std::collections::HashSet;

    fn random_tour(n: usize, seed: u64) -> Tour {
        let inst = generate_rue(n, 1000, 1).unwrap();
        let mut order: Vec<Vertex> = (0..n).collect();
        order.shuffle(&mut seeded_rng(seed));
        Tour::from_order(&inst, order).unwrap()
    }

    fn check_alternation(a: &Tour, b: &Tour, c: &AbCycle) {
        assert!(c.len() >= 4 && c.len().is_multiple_of(2));
        for (u, v, l) in c.edges() {
            match l {
                Label::A => assert!(a.contains_edge(u, v) && !b.contains_edge(u, v)),
                Label::B => assert!(b.contains_edge(u, v) && !a.contains_edge(u, v)),
            }
        }
        let mut counts = std::collections::HashMap::new();
        for &v in c.chain() {
            *counts.entry(v).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&k| k <= 2));
    }

    #[test]
    fn identical_parents_cancel_everything() {
        let t = random_tour(10, 1);
        let g = UnionGraph::build(&t, &t).unwrap();
        assert!(g.is_empty());
        assert!(trace_ab_cycles(&g, &mut seeded_rng(0)).is_empty());
    }

    #[test]
    fn two_exchange_gives_one_square_cycle() {
        let inst = generate_rue(16, 1000, 2).unwrap();
        let a = greedy_2opt_init(&inst, 0);
        let mut order = a.order().to_vec();
        order[4..11].reverse();
        let b = Tour::from_order(&inst, order).unwrap();
        let g = UnionGraph::build(&a, &b).unwrap();
        assert_eq!(g.edge_count(), 4);
        let cycles = trace_ab_cycles(&g, &mut seeded_rng(3));
        assert_eq!(cycles.len(), 1);
        assert_eq!(cycles[0].len(), 4);
        assert_eq!(cycles[0].portal_count(), 4);
        check_alternation(&a, &b, &cycles[0]);
        let s = apply_eset(&a, &ESet::single(&cycles[0])).unwrap();
        assert_eq!(enumerate_subtours(&s).unwrap().len(), 1);
    }

    #[test]
    fn union_graph_degrees_balance() {
        for seed in 0..50 {
            let a = random_tour(24, seed);
            let b = random_tour(24, seed + 1000);
            let g = UnionGraph::build(&a, &b).unwrap();
            for v in 0..24 {
                assert_eq!(g.degree(v, Label::A), g.degree(v, Label::B));
            }
        }
    }

    #[test]
    fn decomposition_covers_every_uncancelled_edge_once() {
        for seed in 0..300 {
            let n = 8 + (seed as usize % 57);
            let a = random_tour(n, seed);
            let b = random_tour(n, seed + 7777);
            let g = UnionGraph::build(&a, &b).unwrap();
            let cycles = trace_ab_cycles(&g, &mut seeded_rng(seed));
            let mut seen: HashSet<(EdgeKey, bool)> = HashSet::new();
            for c in &cycles {
                check_alternation(&a, &b, c);
                for (u, v, l) in c.edges() {
                    assert!(
                        seen.insert((EdgeKey::new(u, v), l == Label::A)),
                        "edge reused"
                    );
                }
            }
            assert_eq!(seen.len(), g.edge_count());
        }
    }

    #[test]
    fn full_exchange_reproduces_parent_b() {
        for seed in 0..100 {
            let a = random_tour(20, seed);
            let b = random_tour(20, seed + 500);
            let g = UnionGraph::build(&a, &b).unwrap();
            let cycles = trace_ab_cycles(&g, &mut seeded_rng(seed));
            if cycles.is_empty() {
                continue;
            }
            let e = ESet::new(cycles.iter().collect());
            let s = apply_eset(&a, &e).unwrap();
            let want: Vec<EdgeKey> = {
                let mut v: Vec<_> = b.edges().collect();
                v.sort_unstable();
                v
            };
            assert_eq!(s.edges(), want);
            // only vertices touching exactly one shared edge keep two internal edges
            let one_shared = (0..20)
                .filter(|&v| {
                    a.adjacent(v)
                        .iter()
                        .filter(|&&w| b.contains_edge(v, w))
                        .count()
                        == 1
                })
                .count();
            assert_eq!(e.c_count(), one_shared);
        }
    }

    #[test]
    fn applying_twice_is_an_involution() {
        let a = random_tour(30, 4);
        let b = random_tour(30, 5);
        let g = UnionGraph::build(&a, &b).unwrap();
        for c in trace_ab_cycles(&g, &mut seeded_rng(1)) {
            let mut s = apply_eset(&a, &ESet::single(&c)).unwrap();
            // swapping roles: remove the B edges again and restore the A edges
            for (u, v, l) in c.edges() {
                if l == Label::B {
                    s.detach(u, v).unwrap();
                }
            }
            for (u, v, l) in c.edges() {
                if l == Label::A {
                    s.insert(u, v).unwrap();
                }
            }
            assert_eq!(s, DegreeStructure::from_tour(&a));
        }
    }

    #[test]
    fn apply_rejects_foreign_cycles() {
        let a = random_tour(12, 1);
        let b = random_tour(12, 2);
        let g = UnionGraph::build(&a, &b).unwrap();
        let c = trace_ab_cycles(&g, &mut seeded_rng(0)).remove(0);
        // swapping the parents makes every A-labeled edge foreign to the new A
        assert!(matches!(
            apply_eset(&b, &ESet::single(&c)),
            Err(AbError::MissingParentEdge(_))
        ));
    }

    #[test]
    fn components_of_two_squares() {
        let edges: Vec<EdgeKey> = [
            (0, 1),
            (1, 2),
            (2, 3),
            (3, 0),
            (4, 5),
            (5, 6),
            (6, 7),
            (7, 4),
        ]
        .iter()
        .map(|&(u, v)| EdgeKey::new(u, v))
        .collect();
        let s = DegreeStructure::from_edges(8, &edges).unwrap();
        let comps = enumerate_subtours(&s).unwrap();
        assert_eq!(comps.len(), 2);
        assert!(comps.iter().all(|c| c.len() == 4));
        assert_eq!(s.component_count(), 2);
        assert!(s.cycle_order().is_none());
        let t = random_tour(8, 3);
        let s = DegreeStructure::from_tour(&t);
        assert_eq!(enumerate_subtours(&s).unwrap().len(), 1);
        assert_eq!(s.cycle_order().unwrap().len(), 8);
    }

    #[test]
    fn non_two_regular_is_rejected() {
        let edges: Vec<EdgeKey> = [(0, 1), (1, 2), (2, 0), (3, 4)]
            .iter()
            .map(|&(u, v)| EdgeKey::new(u, v))
            .collect();
        assert!(DegreeStructure::from_edges(5, &edges).is_err());
    }

    #[test]
    fn display_uses_one_based_labels() {
        let c = AbCycle::from_chain(vec![0, 4, 6, 2]);
        assert_eq!(c.to_string(), "1 -A- 5 -B- 7 -A- 3 -B- 1");
    }
}
