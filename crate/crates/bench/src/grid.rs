//! Variant × instance × seed grids.
//!
//! A grid config is JSON:
//!
//! ```json
//! {
//!   "instances": ["../data/*.tsp"],
//!   "variants": ["vanilla", "only_complete", "ratio_based"],
//!   "seeds": [1, 2, 3],
//!   "cutoff_secs": 60,
//!   "output_dir": "out",
//!   "instrument": false,
//!   "ratio_mask": "mask.json",
//!   "workers": 4,
//!   "solver": { "population_size": 100 }
//! }
//! ```
//!
//! Relative paths resolve against the config file's directory. Runs on
//! instances with a known optimum target it and restart until the cutoff;
//! instances without one run a single epoch to convergence and are left out
//! of the PAR10 table.
//!
//! Output (integer microseconds, one versioned `#` header line per file):
//! `runs.csv` (appended as runs finish, rewritten sorted at the end),
//! `par10.csv`, `histogram.csv` and `timing.csv`.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use eax_core::instance::{Instance, DEFAULT_NEIGHBOR_K};
use eax_core::instrument::{Stage, TypeHistogram};
use eax_core::solver::{evolve_with, RatioMask, SolverConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::{par10, BenchError, DurationCounts};

pub const CSV_VERSION: u32 = 1;
pub const PAR10_MEAN_ROW: &str = "ALL";

fn default_cutoff() -> f64 {
    60.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub instances: Vec<String>,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_cutoff")]
    pub cutoff_secs: f64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub instrument: bool,
    #[serde(default)]
    pub ratio_mask: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl GridConfig {
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut cfg: GridConfig =
            serde_json::from_str(&text).map_err(|e| BenchError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.instances = cfg
            .instances
            .iter()
            .map(|g| resolve(base, Path::new(g)).to_string_lossy().into_owned())
            .collect();
        cfg.output_dir = resolve(base, &cfg.output_dir);
        cfg.ratio_mask = cfg.ratio_mask.as_deref().map(|p| resolve(base, p));
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), BenchError> {
        if self.instances.is_empty() || self.variants.is_empty() || self.seeds.is_empty() {
            return Err(BenchError::Config(
                "instances, variants and seeds must be nonempty".into(),
            ));
        }
        if !(self.cutoff_secs.is_finite() && self.cutoff_secs > 0.0) {
            return Err(BenchError::Config(format!(
                "cutoff_secs must be positive, got {}",
                self.cutoff_secs
            )));
        }
        if self.workers == Some(0) {
            return Err(BenchError::Config("workers must be positive".into()));
        }
        Ok(())
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> BenchError {
    BenchError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRow {
    pub instance: String,
    pub dimension: usize,
    pub variant: Variant,
    pub seed: u64,
    pub solved: bool,
    pub best_length: Option<i64>,
    pub target: Option<i64>,
    pub generations: u64,
    pub restarts: u32,
    pub stage1_repairs: u64,
    pub stage2_repairs: u64,
    pub error: String,
    pub runtime_us: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Par10Row {
    pub instance: String,
    pub variant: Variant,
    pub runs: usize,
    pub solved: usize,
    pub par10_us: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub instance: String,
    pub variant: Variant,
    pub check_calls: u64,
    pub repair_calls: u64,
    pub check_median_us: Option<u64>,
    pub repair_median_us: Option<u64>,
}

#[derive(Clone, Debug, Default)]
pub struct GridOutcome {
    pub rows: Vec<RunRow>,
    pub par10: Vec<Par10Row>,
    pub timing: Vec<TimingRow>,
    /// Stage-I type histograms per variant, merged over all runs.
    pub histograms: BTreeMap<Variant, TypeHistogram>,
    /// `(path, error)` for instance files that failed to load.
    pub parse_failures: Vec<(String, String)>,
}

struct Job<'a> {
    inst: &'a Instance,
    variant: Variant,
    seed: u64,
}

struct JobResult {
    row: RunRow,
    histogram: TypeHistogram,
    check: DurationCounts,
    repair: DurationCounts,
}

/// Loads `path` and runs the grid it describes.
pub fn run_grid(path: &Path) -> Result<GridOutcome, BenchError> {
    run_grid_config(&GridConfig::load(path)?)
}

pub fn run_grid_config(cfg: &GridConfig) -> Result<GridOutcome, BenchError> {
    cfg.validate()?;
    let mask = match &cfg.ratio_mask {
        Some(p) => RatioMask::from_json(&fs::read_to_string(p).map_err(|e| io_err(p, e))?)?,
        None => cfg.solver.ratio_mask.clone(),
    };
    let neighbor_k = if cfg.solver.neighbor_k == 0 {
        DEFAULT_NEIGHBOR_K
    } else {
        cfg.solver.neighbor_k
    };

    let mut outcome = GridOutcome::default();
    let mut instances = Vec::new();
    let mut files: Vec<PathBuf> = Vec::new();
    for pattern in &cfg.instances {
        let paths = glob::glob(pattern)
            .map_err(|e| BenchError::Config(format!("bad glob `{pattern}`: {e}")))?;
        let before = files.len();
        for p in paths {
            files.push(p.map_err(|e| io_err(e.path(), e.error()))?);
        }
        if files.len() == before {
            outcome
                .parse_failures
                .push((pattern.clone(), "pattern matched no files".into()));
        }
    }
    files.sort();
    files.dedup();
    for f in files {
        match Instance::load(&f, neighbor_k) {
            Ok(inst) => instances.push(inst),
            Err(e) => outcome
                .parse_failures
                .push((f.display().to_string(), e.to_string())),
        }
    }

    fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
    let runs_path = cfg.output_dir.join("runs.csv");
    let mut appender = RowAppender::create(&runs_path)?;

    let jobs: Vec<Job> = instances
        .iter()
        .flat_map(|inst| {
            cfg.variants.iter().flat_map(move |&variant| {
                cfg.seeds.iter().map(move |&seed| Job {
                    inst,
                    variant,
                    seed,
                })
            })
        })
        .collect();
    let workers = cfg
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let solver_parallel = workers == 1 && cfg.solver.parallel;

    let mut results = Vec::with_capacity(jobs.len());
    let mut sink = |r: JobResult| -> Result<(), BenchError> {
        appender.append(&r.row)?;
        results.push(r);
        Ok(())
    };
    let run = |job: &Job| run_job(cfg, &mask, job, solver_parallel);
    execute(&jobs, workers, run, &mut sink)?;

    results.sort_by(|a, b| {
        (&a.row.instance, a.row.variant, a.row.seed).cmp(&(
            &b.row.instance,
            b.row.variant,
            b.row.seed,
        ))
    });
    let mut timing: BTreeMap<(String, Variant), (DurationCounts, DurationCounts)> = BTreeMap::new();
    for r in &results {
        outcome
            .histograms
            .entry(r.row.variant)
            .or_default()
            .merge(&r.histogram);
        let t = timing
            .entry((r.row.instance.clone(), r.row.variant))
            .or_default();
        t.0.merge(&r.check);
        t.1.merge(&r.repair);
    }
    outcome.rows = results.into_iter().map(|r| r.row).collect();
    outcome.par10 = par10_table(&outcome.rows, cfg.cutoff_secs)?;
    outcome.timing = timing
        .into_iter()
        .map(|((instance, variant), (c, r))| TimingRow {
            instance,
            variant,
            check_calls: c.len(),
            repair_calls: r.len(),
            check_median_us: c.median(),
            repair_median_us: r.median(),
        })
        .collect();

    write_csv(&runs_path, "runs", &outcome.rows)?;
    write_csv(&cfg.output_dir.join("par10.csv"), "par10", &outcome.par10)?;
    write_csv(
        &cfg.output_dir.join("timing.csv"),
        "timing",
        &outcome.timing,
    )?;
    write_csv(
        &cfg.output_dir.join("histogram.csv"),
        "histogram",
        &histogram_rows(&outcome.histograms),
    )?;
    Ok(outcome)
}

#[cfg(feature = "parallel")]
fn execute<F, S>(jobs: &[Job], workers: usize, run: F, sink: &mut S) -> Result<(), BenchError>
where
    F: Fn(&Job) -> JobResult + Sync,
    S: FnMut(JobResult) -> Result<(), BenchError>,
{
    use rayon::prelude::*;
    use std::sync::mpsc;

    if workers == 1 {
        return jobs.iter().try_for_each(|j| sink(run(j)));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|s| {
        s.spawn(|| {
            pool.install(|| {
                jobs.par_iter()
                    .for_each_with(tx, |tx, j| tx.send(run(j)).expect("writer alive"))
            })
        });
        // single writer: rows are appended as runs finish
        rx.into_iter().try_for_each(&mut *sink)
    })
}

#[cfg(not(feature = "parallel"))]
fn execute<F, S>(jobs: &[Job], _workers: usize, run: F, sink: &mut S) -> Result<(), BenchError>
where
    F: Fn(&Job) -> JobResult + Sync,
    S: FnMut(JobResult) -> Result<(), BenchError>,
{
    jobs.iter().try_for_each(|j| sink(run(j)))
}

fn run_job(grid: &GridConfig, mask: &RatioMask, job: &Job, parallel: bool) -> JobResult {
    let inst = job.inst;
    let target = inst.known_optimum();
    let cfg = SolverConfig {
        variant: job.variant,
        seed: job.seed,
        ratio_mask: mask.clone(),
        cutoff_secs: Some(grid.cutoff_secs),
        target,
        restart: target.is_some(),
        instrument: grid.instrument,
        neighbor_k: inst.neighbor_k().max(1),
        parallel,
        ..grid.solver.clone()
    };
    let mut check = DurationCounts::default();
    let mut repair = DurationCounts::default();
    let result = evolve_with(inst, &cfg, |r| {
        for o in r.offspring.iter().filter(|o| o.stage == Stage::One) {
            check.push(o.check_time_us);
            if o.repairs > 0 {
                repair.push(o.repair_time_us);
            }
        }
    });
    let mut row = RunRow {
        instance: inst.name().to_string(),
        dimension: inst.dimension(),
        variant: job.variant,
        seed: job.seed,
        solved: false,
        best_length: None,
        target,
        generations: 0,
        restarts: 0,
        stage1_repairs: 0,
        stage2_repairs: 0,
        error: String::new(),
        runtime_us: 0,
    };
    let mut histogram = TypeHistogram::default();
    match result {
        Ok(res) => {
            let cutoff_us = (grid.cutoff_secs * 1e6) as u64;
            let to_target = res.time_to_target.map(|d| d.as_micros() as u64);
            row.solved = to_target.is_some_and(|t| t <= cutoff_us);
            row.runtime_us = if row.solved {
                to_target.unwrap_or_default()
            } else {
                res.elapsed.as_micros() as u64
            };
            row.best_length = Some(res.best_length());
            row.generations = res.generations;
            row.restarts = res.restarts;
            row.stage1_repairs = res.stage1_repairs;
            row.stage2_repairs = res.stage2_repairs;
            histogram = res.histogram;
        }
        Err(e) => row.error = e.to_string(),
    }
    JobResult {
        row,
        histogram,
        check,
        repair,
    }
}

/// PAR10 per (instance, variant) over instances with a target, plus a
/// per-variant grand mean of the instance scores under [`PAR10_MEAN_ROW`].
pub fn par10_table(rows: &[RunRow], cutoff_secs: f64) -> Result<Vec<Par10Row>, BenchError> {
    let mut cells: BTreeMap<(String, Variant), Vec<(bool, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.target.is_some()) {
        let secs = if r.solved {
            r.runtime_us as f64 / 1e6
        } else {
            cutoff_secs
        };
        cells
            .entry((r.instance.clone(), r.variant))
            .or_default()
            .push((r.solved, secs.min(cutoff_secs)));
    }
    let mut out = Vec::new();
    let mut per_variant: BTreeMap<Variant, Vec<f64>> = BTreeMap::new();
    for ((instance, variant), runs) in cells {
        let score = par10(&runs, cutoff_secs)?;
        per_variant.entry(variant).or_default().push(score);
        out.push(Par10Row {
            instance,
            variant,
            runs: runs.len(),
            solved: runs.iter().filter(|r| r.0).count(),
            par10_us: (score * 1e6).round() as u64,
        });
    }
    for (variant, scores) in per_variant {
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let inst_rows: Vec<&Par10Row> = out.iter().filter(|r| r.variant == variant).collect();
        out.push(Par10Row {
            instance: PAR10_MEAN_ROW.into(),
            variant,
            runs: inst_rows.iter().map(|r| r.runs).sum(),
            solved: inst_rows.iter().map(|r| r.solved).sum(),
            par10_us: (mean * 1e6).round() as u64,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramRow {
    pub variant: Variant,
    pub portals: u32,
    pub subtours: u32,
    pub attempts: u64,
    pub accepted: u64,
    pub selected: u64,
    pub instrumented: u64,
    pub opt_gained_cycle: u32,
    pub opt_lost_cycle: u32,
    pub opt_gained_repair: u32,
    pub opt_lost_repair: u32,
    pub success_rate: Option<f64>,
    pub gain_loss_ratio: Option<f64>,
}

pub fn histogram_rows(h: &BTreeMap<Variant, TypeHistogram>) -> Vec<HistogramRow> {
    h.iter()
        .flat_map(|(&variant, hist)| {
            hist.cells().map(move |(&(p, s), c)| HistogramRow {
                variant,
                portals: p,
                subtours: s,
                attempts: c.attempts,
                accepted: c.accepted,
                selected: c.selected,
                instrumented: c.instrumented,
                opt_gained_cycle: c.opt_edges.gained_cycle,
                opt_lost_cycle: c.opt_edges.lost_cycle,
                opt_gained_repair: c.opt_edges.gained_repair,
                opt_lost_repair: c.opt_edges.lost_repair,
                success_rate: hist.success_rate(p, s),
                gain_loss_ratio: hist.gain_loss_ratio(p, s).filter(|r| r.is_finite()),
            })
        })
        .collect()
}

fn header_line(kind: &str) -> String {
    format!("# eax-bench {kind} v{CSV_VERSION}; times in microseconds\n")
}

/// Crash-safe incremental writer for `runs.csv`.
struct RowAppender {
    path: PathBuf,
    file: File,
    wrote_header: bool,
}

impl RowAppender {
    fn create(path: &Path) -> Result<Self, BenchError> {
        let mut file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        file.write_all(header_line("runs").as_bytes())
            .map_err(|e| io_err(path, e))?;
        Ok(RowAppender {
            path: path.to_path_buf(),
            file,
            wrote_header: false,
        })
    }

    fn append(&mut self, row: &RunRow) -> Result<(), BenchError> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(!self.wrote_header)
            .from_writer(Vec::new());
        w.serialize(row)?;
        let bytes = w.into_inner().map_err(|e| io_err(&self.path, e))?;
        self.wrote_header = true;
        self.file
            .write_all(&bytes)
            .and_then(|_| self.file.flush())
            .map_err(|e| io_err(&self.path, e))
    }
}

pub fn write_csv<T: Serialize>(path: &Path, kind: &str, rows: &[T]) -> Result<(), BenchError> {
    let mut file = File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(header_line(kind).as_bytes())
        .map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a CSV written by [`write_csv`], skipping the version comment.
pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, BenchError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}
