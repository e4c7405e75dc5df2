//! Benchmark harness for the EAX solver: PAR10 scoring, variant × instance ×
//! seed grids with CSV output, and AB-cycle type instrumentation summaries.

pub mod grid;

use std::collections::BTreeMap;

use thiserror::Error;

pub use grid::{run_grid, GridConfig, GridOutcome, RunRow};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("PAR10 of an empty run list")]
    EmptyRuns,
    #[error("solved run took {runtime}s, above the {cutoff}s cutoff")]
    RuntimeAboveCutoff { runtime: f64, cutoff: f64 },
    #[error("invalid grid config: {0}")]
    Config(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Solver(#[from] eax_core::solver::SolverError),
}

/// Penalized average runtime: timeouts count as ten times the cutoff.
/// `runs` holds `(solved, seconds)`.
pub fn par10(runs: &[(bool, f64)], cutoff: f64) -> Result<f64, BenchError> {
    if runs.is_empty() {
        return Err(BenchError::EmptyRuns);
    }
    let mut total = 0.0;
    for &(solved, t) in runs {
        if solved {
            if t > cutoff {
                return Err(BenchError::RuntimeAboveCutoff { runtime: t, cutoff });
            }
            total += t;
        } else {
            total += 10.0 * cutoff;
        }
    }
    Ok(total / runs.len() as f64)
}

/// Multiset of microsecond durations, kept as counts so long runs stay small.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DurationCounts {
    counts: BTreeMap<u64, u64>,
    total: u64,
}

impl DurationCounts {
    pub fn push(&mut self, us: u64) {
        *self.counts.entry(us).or_default() += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &DurationCounts) {
        for (&k, &v) in &other.counts {
            *self.counts.entry(k).or_default() += v;
        }
        self.total += other.total;
    }

    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Lower median.
    pub fn median(&self) -> Option<u64> {
        if self.total == 0 {
            return None;
        }
        let rank = (self.total - 1) / 2;
        let mut seen = 0;
        for (&k, &v) in &self.counts {
            seen += v;
            if seen > rank {
                return Some(k);
            }
        }
        unreachable!("rank below total")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par10_examples() {
        assert_eq!(
            par10(&[(true, 100.0), (false, 0.0)], 3600.0).unwrap(),
            18050.0
        );
        assert_eq!(par10(&[(true, 1.0), (true, 3.0)], 10.0).unwrap(), 2.0);
        assert_eq!(par10(&[(false, 5.0), (false, 9.0)], 10.0).unwrap(), 100.0);
        assert!(matches!(par10(&[], 10.0), Err(BenchError::EmptyRuns)));
        assert!(par10(&[(true, 11.0)], 10.0).is_err());
    }

    #[test]
    fn par10_never_drops_when_a_run_times_out() {
        let runs = [(true, 1.0), (true, 7.5), (true, 3.0)];
        let base = par10(&runs, 10.0).unwrap();
        for i in 0..runs.len() {
            let mut worse = runs;
            worse[i].0 = false;
            assert!(par10(&worse, 10.0).unwrap() >= base);
        }
    }

    #[test]
    fn duration_median() {
        let mut d = DurationCounts::default();
        assert_eq!(d.median(), None);
        for us in [5, 1, 3, 3, 9] {
            d.push(us);
        }
        assert_eq!(d.median(), Some(3));
        d.push(10);
        assert_eq!(d.median(), Some(3));
        let mut e = DurationCounts::default();
        e.push(100);
        e.push(100);
        d.merge(&e);
        assert_eq!((d.len(), d.median()), (8, Some(5)));
    }
}
