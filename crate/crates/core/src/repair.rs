//! Subtour repair: repeatedly merge the smallest subtour into another one by
//! the cheapest 2-exchange whose partner vertex lies in the neighbor list of
//! an endpoint of the removed edge.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::ab::{AbError, DegreeStructure};
use crate::instance::{EdgeKey, Instance, Vertex};
use crate::tour::{Tour, TourError};

#[derive(Debug, Error, PartialEq)]
pub enum RepairError {
    #[error(transparent)]
    Structure(#[from] AbError),
    #[error(transparent)]
    Tour(#[from] TourError),
}

/// Edges a repair removed and added, in merge order (two of each per merge).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RepairLedger {
    pub merges: usize,
    pub edges_added: Vec<EdgeKey>,
    pub edges_removed: Vec<EdgeKey>,
    /// Total length change over all merges.
    pub delta: i64,
}

#[derive(Clone, Debug)]
pub struct RepairOutcome {
    pub tour: Tour,
    pub merges: usize,
    pub edges_added: Vec<EdgeKey>,
    pub edges_removed: Vec<EdgeKey>,
    pub elapsed: Duration,
}

/// Repairs a 2-regular structure into a Hamiltonian cycle.
pub fn repair(inst: &Instance, mut s: DegreeStructure) -> Result<RepairOutcome, RepairError> {
    let start = Instant::now();
    let ledger = repair_in_place(inst, &mut s)?;
    let order = s.cycle_order().expect("repair leaves a single component");
    let tour = Tour::from_order(inst, order)?;
    Ok(RepairOutcome {
        tour,
        merges: ledger.merges,
        edges_added: ledger.edges_added,
        edges_removed: ledger.edges_removed,
        elapsed: start.elapsed(),
    })
}

/// Candidate 2-exchange: remove `{u,v}` (smallest subtour) and `{w,x}`,
/// then add `{u,w},{v,x}` (`cross == false`) or `{u,x},{v,w}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Exchange {
    pub delta: i64,
    pub u: Vertex,
    pub v: Vertex,
    pub w: Vertex,
    pub x: Vertex,
    pub cross: bool,
}

impl Exchange {
    fn key(&self) -> (i64, EdgeKey, EdgeKey, bool) {
        (
            self.delta,
            EdgeKey::new(self.u, self.v),
            EdgeKey::new(self.w, self.x),
            self.cross,
        )
    }

    pub fn added(&self) -> [EdgeKey; 2] {
        if self.cross {
            [EdgeKey::new(self.u, self.x), EdgeKey::new(self.v, self.w)]
        } else {
            [EdgeKey::new(self.u, self.w), EdgeKey::new(self.v, self.x)]
        }
    }

    pub fn removed(&self) -> [EdgeKey; 2] {
        [EdgeKey::new(self.u, self.v), EdgeKey::new(self.w, self.x)]
    }
}

fn consider(
    best: &mut Option<Exchange>,
    inst: &Instance,
    u: Vertex,
    v: Vertex,
    w: Vertex,
    x: Vertex,
) {
    let removed = inst.distance(u, v) + inst.distance(w, x);
    for cross in [false, true] {
        let added = if cross {
            inst.distance(u, x) + inst.distance(v, w)
        } else {
            inst.distance(u, w) + inst.distance(v, x)
        };
        let cand = Exchange {
            delta: added - removed,
            u,
            v,
            w,
            x,
            cross,
        };
        if best.is_none_or(|b| cand.key() < b.key()) {
            *best = Some(cand);
        }
    }
}

struct Components {
    id: Vec<usize>,
    members: Vec<Vec<Vertex>>,
    min_vertex: Vec<Vertex>,
    alive: Vec<usize>,
}

impl Components {
    fn label(s: &DegreeStructure) -> Self {
        let cycles = s.components();
        let mut id = vec![0; s.dimension()];
        for (c, cyc) in cycles.iter().enumerate() {
            for &v in cyc {
                id[v] = c;
            }
        }
        Components {
            id,
            min_vertex: cycles.iter().map(|c| c[0]).collect(),
            alive: (0..cycles.len()).collect(),
            members: cycles,
        }
    }

    fn smallest(&self) -> usize {
        *self
            .alive
            .iter()
            .min_by_key(|&&c| (self.members[c].len(), self.min_vertex[c]))
            .expect("at least one component")
    }

    fn merge_into(&mut self, from: usize, into: usize) {
        let moved = std::mem::take(&mut self.members[from]);
        for &v in &moved {
            self.id[v] = into;
        }
        self.members[into].extend(moved);
        self.min_vertex[into] = self.min_vertex[into].min(self.min_vertex[from]);
        self.alive.retain(|&c| c != from);
    }
}

/// Best exchange joining component `small` to any other component, with `w`
/// restricted to the neighbor lists of the removed edge's endpoints.
pub(crate) fn best_restricted_exchange(
    inst: &Instance,
    s: &DegreeStructure,
    comp: &[usize],
    small: usize,
    members: &[Vertex],
) -> Option<Exchange> {
    let mut best = None;
    for &u in members {
        for v in s.adjacent(u) {
            for &w in inst.neighbors(u) {
                if comp[w] == small {
                    continue;
                }
                for x in s.adjacent(w) {
                    consider(&mut best, inst, u, v, w, x);
                }
            }
        }
    }
    best
}

/// Fallback when no neighbor list leaves the smallest component: search all
/// edges of the nearest other component.
fn best_widened_exchange(
    inst: &Instance,
    s: &DegreeStructure,
    comps: &Components,
    small: usize,
) -> Option<Exchange> {
    let n = s.dimension();
    let members = &comps.members[small];
    let (_, nearest_w) = members
        .iter()
        .flat_map(|&u| {
            (0..n)
                .filter(|&w| comps.id[w] != small)
                .map(move |w| (inst.distance(u, w), w))
        })
        .min()?;
    let target = comps.id[nearest_w];
    let mut best = None;
    for &u in members {
        for v in s.adjacent(u) {
            for &w in &comps.members[target] {
                for x in s.adjacent(w) {
                    consider(&mut best, inst, u, v, w, x);
                }
            }
        }
    }
    best
}

/// Merges subtours of `s` in place until one remains.
pub fn repair_in_place(
    inst: &Instance,
    s: &mut DegreeStructure,
) -> Result<RepairLedger, RepairError> {
    s.validate()?;
    let mut comps = Components::label(s);
    let mut ledger = RepairLedger::default();
    while comps.alive.len() > 1 {
        let small = comps.smallest();
        let ex = best_restricted_exchange(inst, s, &comps.id, small, &comps.members[small])
            .or_else(|| best_widened_exchange(inst, s, &comps, small))
            .expect("another component always exists");
        let Exchange {
            u,
            v,
            w,
            x,
            cross,
            delta,
        } = ex;
        if cross {
            s.relink(u, v, x);
            s.relink(v, u, w);
            s.relink(w, x, v);
            s.relink(x, w, u);
        } else {
            s.relink(u, v, w);
            s.relink(v, u, x);
            s.relink(w, x, u);
            s.relink(x, w, v);
        }
        comps.merge_into(small, comps.id[w]);
        ledger.merges += 1;
        ledger.delta += delta;
        ledger.edges_removed.extend(ex.removed());
        ledger.edges_added.extend(ex.added());
    }
    Ok(ledger)
}
