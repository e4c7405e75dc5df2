//! Per-offspring instrumentation: AB-cycle type, gate outcome, optimal
//! edges gained and lost, and check/repair timings.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::ab::{ESet, Label};
use crate::instance::EdgeKey;
use crate::repair::RepairLedger;
use crate::tour::Tour;

/// Optimal edges introduced and removed by an E-set and by its repair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptEdgeCounts {
    pub gained_cycle: u32,
    pub lost_cycle: u32,
    pub gained_repair: u32,
    pub lost_repair: u32,
}

impl std::ops::AddAssign for OptEdgeCounts {
    fn add_assign(&mut self, o: Self) {
        self.gained_cycle += o.gained_cycle;
        self.lost_cycle += o.lost_cycle;
        self.gained_repair += o.gained_repair;
        self.lost_repair += o.lost_repair;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "I")]
    One,
    #[serde(rename = "II")]
    Two,
}

/// One offspring attempt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffspringRecord {
    pub stage: Stage,
    /// Portal (C-vertex) count of the E-set.
    pub portals: u32,
    /// Subtours produced by applying the E-set to parent A.
    pub subtours: u32,
    /// Passed the stage-I gate and produced an offspring.
    pub accepted: bool,
    /// Replaced parent A.
    pub selected: bool,
    /// Repair merges performed (zero when `subtours == 1`).
    pub repairs: u32,
    /// `None` unless instrumentation ran with a known optimal tour.
    pub opt_edges: Option<OptEdgeCounts>,
    pub check_time_us: u64,
    pub repair_time_us: u64,
}

/// Counts optimal edges the E-set adds (its B edges) and removes (its A
/// edges), plus the net effect of a repair ledger.
pub fn optimal_edge_ledger(
    opt: &Tour,
    e: &ESet<'_>,
    repair: Option<&RepairLedger>,
) -> OptEdgeCounts {
    let mut c = OptEdgeCounts::default();
    for (u, v, l) in e.edges() {
        if opt.contains_edge(u, v) {
            match l {
                Label::A => c.lost_cycle += 1,
                Label::B => c.gained_cycle += 1,
            }
        }
    }
    if let Some(r) = repair {
        // an edge may be added by one merge and removed by a later one
        let mut net: HashMap<EdgeKey, i32> = HashMap::new();
        for e in &r.edges_added {
            *net.entry(*e).or_default() += 1;
        }
        for e in &r.edges_removed {
            *net.entry(*e).or_default() -= 1;
        }
        for (e, k) in net {
            if k != 0 && opt.contains_edge(e.u, e.v) {
                if k > 0 {
                    c.gained_repair += 1;
                } else {
                    c.lost_repair += 1;
                }
            }
        }
    }
    c
}

/// Aggregates for one `(portals, subtours)` cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStats {
    pub attempts: u64,
    pub accepted: u64,
    pub selected: u64,
    /// Attempts that carried optimal-edge counts.
    pub instrumented: u64,
    pub opt_edges: OptEdgeCounts,
}

/// Stage-I AB-cycle type histogram keyed by `(portals, subtours)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypeHistogram {
    cells: BTreeMap<(u32, u32), CellStats>,
}

impl TypeHistogram {
    pub fn record(&mut self, r: &OffspringRecord) {
        let cell = self.cells.entry((r.portals, r.subtours)).or_default();
        cell.attempts += 1;
        cell.accepted += r.accepted as u64;
        cell.selected += r.selected as u64;
        if let Some(o) = r.opt_edges {
            cell.instrumented += 1;
            cell.opt_edges += o;
        }
    }

    pub fn merge(&mut self, other: &TypeHistogram) {
        for (k, v) in &other.cells {
            let c = self.cells.entry(*k).or_default();
            c.attempts += v.attempts;
            c.accepted += v.accepted;
            c.selected += v.selected;
            c.instrumented += v.instrumented;
            c.opt_edges += v.opt_edges;
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (&(u32, u32), &CellStats)> {
        self.cells.iter()
    }

    pub fn total_attempts(&self) -> u64 {
        self.cells.values().map(|c| c.attempts).sum()
    }

    pub fn get(&self, portals: u32, subtours: u32) -> Option<&CellStats> {
        self.cells.get(&(portals, subtours))
    }

    /// Share of accepted offspring that replaced parent A.
    pub fn success_rate(&self, portals: u32, subtours: u32) -> Option<f64> {
        self.get(portals, subtours)
            .filter(|c| c.accepted > 0)
            .map(|c| c.selected as f64 / c.accepted as f64)
    }

    /// Optimal edges gained per lost edge, counting both the cycle and its
    /// repair. `None` without instrumented attempts; infinite when nothing
    /// was lost but something was gained.
    pub fn gain_loss_ratio(&self, portals: u32, subtours: u32) -> Option<f64> {
        let c = self.get(portals, subtours).filter(|c| c.instrumented > 0)?;
        let gained = (c.opt_edges.gained_cycle + c.opt_edges.gained_repair) as f64;
        let lost = (c.opt_edges.lost_cycle + c.opt_edges.lost_repair) as f64;
        Some(if lost == 0.0 {
            if gained > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            gained / lost
        })
    }
}
