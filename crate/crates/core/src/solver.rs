//! The generational EAX GA.
//!
//! Each generation shuffles the population into a random cycle of parent
//! pairs, so every individual serves once as A and once as B. A pair yields
//! up to `n_children` offspring from one random AB-cycle decomposition;
//! the shortest offspring replaces A when strictly shorter.
//!
//! Stage I applies single AB-cycles behind a variant-specific gate. Stage II
//! assembles E-sets by a short tabu search over the pair's cycle pool. The
//! switch happens after `stagnation_generations` without improvement of the
//! population best; stagnation in stage II (or zero length spread) ends an
//! epoch, after which the run stops or restarts from a fresh population.
//!
//! Every random decision draws from a stream derived from
//! `(seed, restart, generation, pair)`, and pairs read a snapshot of the
//! population, so results do not depend on whether pairs run in parallel.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ab::{apply_eset, trace_ab_cycles, AbCycle, AbError, DegreeStructure, ESet, UnionGraph};
use crate::instance::{Instance, Vertex};
use crate::instrument::{optimal_edge_ledger, OffspringRecord, Stage, TypeHistogram};
use crate::par;
use crate::repair::{repair_in_place, RepairError};
use crate::rng::{derive_seed, derived_rng};
use crate::tour::{greedy_2opt_init, Tour, TourError};
use crate::validity::{check_profile, classify_vertices, ValidityError};

const TAG_INIT: u64 = 1;
const TAG_PAIRING: u64 = 2;
const TAG_PAIR: u64 = 3;

/// Maximum tabu iterations when assembling a stage-II E-set.
pub const TABU_ITERATIONS: usize = 20;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("invalid ratio mask: {0}")]
    Mask(String),
    #[error("parents are identical; no AB-cycle exists")]
    NoOffspring,
    #[error(transparent)]
    Structure(#[from] AbError),
    #[error(transparent)]
    Validity(#[from] ValidityError),
    #[error(transparent)]
    Repair(#[from] RepairError),
    #[error(transparent)]
    Tour(#[from] TourError),
}

/// Stage-I gate.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Every AB-cycle is applied; broken offspring are repaired.
    #[default]
    Vanilla,
    /// Only AB-cycles that yield a single tour are applied.
    OnlyComplete,
    /// AB-cycles whose `(portals, subtours)` type passes the ratio mask.
    RatioBased,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Vanilla, Variant::OnlyComplete, Variant::RatioBased];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::OnlyComplete => "only_complete",
            Variant::RatioBased => "ratio_based",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "vanilla" => Ok(Variant::Vanilla),
            "only_complete" => Ok(Variant::OnlyComplete),
            "ratio_based" => Ok(Variant::RatioBased),
            other => Err(SolverError::Config(format!("unknown variant `{other}`"))),
        }
    }
}

/// Predicate over AB-cycle types `(portals, subtours)`.
///
/// Without overrides a type is accepted iff it yields one subtour or at most
/// `max(1, portals / 4)` subtours. Overrides replace the rule per cell but
/// can never reject single-subtour types.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, bool>", into = "BTreeMap<String, bool>")]
pub struct RatioMask {
    overrides: BTreeMap<(u32, u32), bool>,
}

impl RatioMask {
    pub fn default_rule(portals: u32, subtours: u32) -> bool {
        subtours == 1 || subtours <= (portals / 4).max(1)
    }

    pub fn accepts(&self, portals: u32, subtours: u32) -> bool {
        if subtours <= 1 {
            return true;
        }
        self.overrides
            .get(&(portals, subtours))
            .copied()
            .unwrap_or_else(|| Self::default_rule(portals, subtours))
    }

    pub fn set(&mut self, portals: u32, subtours: u32, accept: bool) -> Result<(), SolverError> {
        if subtours <= 1 && !accept {
            return Err(SolverError::Mask(format!(
                "type ({portals},{subtours}) yields a complete tour and must be accepted"
            )));
        }
        self.overrides.insert((portals, subtours), accept);
        Ok(())
    }

    pub fn overrides(&self) -> impl Iterator<Item = ((u32, u32), bool)> + '_ {
        self.overrides.iter().map(|(k, v)| (*k, *v))
    }

    /// Parses a JSON object mapping `"portals,subtours"` to a boolean.
    pub fn from_json(text: &str) -> Result<Self, SolverError> {
        let raw: BTreeMap<String, bool> =
            serde_json::from_str(text).map_err(|e| SolverError::Mask(e.to_string()))?;
        Self::try_from(raw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&BTreeMap::<String, bool>::from(self.clone()))
            .expect("string map serializes")
    }

    /// Empirical mask: accept a multi-subtour type iff its instrumented
    /// optimal-edge gain/loss ratio (cycle plus repair) exceeds one. Types
    /// without instrumented data keep the default rule.
    pub fn from_histogram(h: &TypeHistogram) -> Self {
        let mut m = RatioMask::default();
        for (&(p, s), _) in h.cells() {
            if s > 1 {
                if let Some(r) = h.gain_loss_ratio(p, s) {
                    m.overrides.insert((p, s), r > 1.0);
                }
            }
        }
        m
    }
}

impl TryFrom<BTreeMap<String, bool>> for RatioMask {
    type Error = SolverError;

    fn try_from(raw: BTreeMap<String, bool>) -> Result<Self, Self::Error> {
        let mut m = RatioMask::default();
        for (k, v) in raw {
            let (p, s) = k
                .split_once(',')
                .and_then(|(p, s)| Some((p.trim().parse().ok()?, s.trim().parse().ok()?)))
                .ok_or_else(|| {
                    SolverError::Mask(format!("key `{k}` is not \"portals,subtours\""))
                })?;
            m.set(p, s, v)?;
        }
        Ok(m)
    }
}

impl From<RatioMask> for BTreeMap<String, bool> {
    fn from(m: RatioMask) -> Self {
        m.overrides
            .into_iter()
            .map(|((p, s), v)| (format!("{p},{s}"), v))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub population_size: usize,
    pub n_children_stage1: usize,
    pub n_children_stage2: usize,
    pub variant: Variant,
    pub ratio_mask: RatioMask,
    pub stagnation_generations: usize,
    pub restart: bool,
    pub cutoff_secs: Option<f64>,
    pub target: Option<i64>,
    pub seed: u64,
    pub neighbor_k: usize,
    pub max_generations: Option<u64>,
    pub tabu_tenure: usize,
    /// Run parent pairs on the rayon pool (ignored without the `parallel`
    /// feature). Results are identical either way.
    pub parallel: bool,
    /// Count optimal edges gained/lost per offspring (needs an optimal tour).
    pub instrument: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            population_size: 100,
            n_children_stage1: 30,
            n_children_stage2: 20,
            variant: Variant::Vanilla,
            ratio_mask: RatioMask::default(),
            stagnation_generations: 50,
            restart: false,
            cutoff_secs: None,
            target: None,
            seed: 0,
            neighbor_k: crate::instance::DEFAULT_NEIGHBOR_K,
            max_generations: None,
            tabu_tenure: 5,
            parallel: par::PARALLEL_AVAILABLE,
            instrument: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = [
            ("population_size", self.population_size),
            ("n_children_stage1", self.n_children_stage1),
            ("n_children_stage2", self.n_children_stage2),
            ("stagnation_generations", self.stagnation_generations),
            ("neighbor_k", self.neighbor_k),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(SolverError::Config(format!("{name} must be positive")));
            }
        }
        if self.population_size < 2 {
            return Err(SolverError::Config(
                "population_size must be at least 2".into(),
            ));
        }
        if let Some(c) = self.cutoff_secs {
            if !(c.is_finite() && c > 0.0) {
                return Err(SolverError::Config(format!(
                    "cutoff must be a positive number of seconds, got {c}"
                )));
            }
        }
        if self.restart
            && self.target.is_none()
            && self.cutoff_secs.is_none()
            && self.max_generations.is_none()
        {
            return Err(SolverError::Config(
                "restarts need a target, a cutoff or a generation limit".into(),
            ));
        }
        Ok(())
    }

    fn cutoff(&self) -> Option<Duration> {
        self.cutoff_secs.map(Duration::from_secs_f64)
    }
}

/// Offspring produced for one parent pair.
#[derive(Clone, Debug)]
pub struct PairOutcome {
    /// Shortest offspring, present only if strictly shorter than parent A.
    pub replacement: Option<Tour>,
    pub records: Vec<OffspringRecord>,
    /// Number of offspring that needed repair.
    pub repairs: u64,
}

struct Best {
    length: i64,
    record: usize,
    structure: DegreeStructure,
}

struct PairContext<'a> {
    inst: &'a Instance,
    cfg: &'a SolverConfig,
    opt: Option<&'a Tour>,
}

impl PairContext<'_> {
    fn keep_if_better(
        best: &mut Option<Best>,
        length: i64,
        record: usize,
        build: impl FnOnce() -> Result<DegreeStructure, SolverError>,
    ) -> Result<(), SolverError> {
        if best.as_ref().is_none_or(|b| length < b.length) {
            *best = Some(Best {
                length,
                record,
                structure: build()?,
            });
        }
        Ok(())
    }

    fn finish(
        &self,
        a: &Tour,
        best: Option<Best>,
        mut records: Vec<OffspringRecord>,
        repairs: u64,
    ) -> Result<PairOutcome, SolverError> {
        let mut replacement = None;
        if let Some(b) = best.filter(|b| b.length < a.length()) {
            let order = b
                .structure
                .cycle_order()
                .expect("offspring is a single cycle");
            let t = Tour::from_order(self.inst, order)?;
            debug_assert_eq!(t.length(), b.length);
            records[b.record].selected = true;
            replacement = Some(t);
        }
        Ok(PairOutcome {
            replacement,
            records,
            repairs,
        })
    }

    fn stage1<R: Rng + ?Sized>(
        &self,
        a: &Tour,
        b: &Tour,
        rng: &mut R,
    ) -> Result<Option<PairOutcome>, SolverError> {
        let g = UnionGraph::build(a, b)?;
        let mut cycles = trace_ab_cycles(&g, rng);
        if cycles.is_empty() {
            return Ok(None);
        }
        // sampling without replacement bounds gate retries by the pool size
        cycles.shuffle(rng);
        let mut records = Vec::new();
        let mut best: Option<Best> = None;
        let mut produced = 0;
        let mut repairs = 0;
        for c in &cycles {
            if produced == self.cfg.n_children_stage1 {
                break;
            }
            let e = ESet::single(c);
            let t0 = Instant::now();
            let profile = classify_vertices(a, b, &e)?;
            let verdict = check_profile(a, &e, &profile)?;
            let check_time_us = t0.elapsed().as_micros() as u64;
            let portals = profile.portal_count() as u32;
            let subtours = verdict.subtour_count as u32;
            let accepted = match self.cfg.variant {
                Variant::Vanilla => true,
                Variant::OnlyComplete => verdict.is_valid,
                Variant::RatioBased => self.cfg.ratio_mask.accepts(portals, subtours),
            };
            let mut rec = OffspringRecord {
                stage: Stage::One,
                portals,
                subtours,
                accepted,
                selected: false,
                repairs: 0,
                opt_edges: None,
                check_time_us,
                repair_time_us: 0,
            };
            if accepted {
                produced += 1;
                let gain = c.gain(|u, v| self.inst.distance(u, v));
                if verdict.is_valid {
                    rec.opt_edges = self.opt.map(|o| optimal_edge_ledger(o, &e, None));
                    Self::keep_if_better(&mut best, a.length() + gain, records.len(), || {
                        Ok(apply_eset(a, &e)?)
                    })?;
                } else {
                    let t1 = Instant::now();
                    let mut s = apply_eset(a, &e)?;
                    let ledger = repair_in_place(self.inst, &mut s)?;
                    rec.repair_time_us = t1.elapsed().as_micros() as u64;
                    rec.repairs = ledger.merges as u32;
                    rec.opt_edges = self.opt.map(|o| optimal_edge_ledger(o, &e, Some(&ledger)));
                    repairs += 1;
                    Self::keep_if_better(
                        &mut best,
                        a.length() + gain + ledger.delta,
                        records.len(),
                        || Ok(s),
                    )?;
                }
            }
            records.push(rec);
        }
        self.finish(a, best, records, repairs).map(Some)
    }

    fn stage2<R: Rng + ?Sized>(
        &self,
        a: &Tour,
        b: &Tour,
        rng: &mut R,
    ) -> Result<Option<PairOutcome>, SolverError> {
        let g = UnionGraph::build(a, b)?;
        let cycles = trace_ab_cycles(&g, rng);
        if cycles.is_empty() {
            return Ok(None);
        }
        let pool = CyclePool::new(&cycles, a.len());
        let mut starts: Vec<usize> = (0..cycles.len()).collect();
        starts.shuffle(rng);
        let mut records = Vec::new();
        let mut best: Option<Best> = None;
        let mut repairs = 0;
        for &start in starts.iter().take(self.cfg.n_children_stage2) {
            let tabu = pool.search(start, self.cfg.tabu_tenure, rng);
            let e = ESet::new(tabu.cycles.iter().map(|&i| &cycles[i]).collect());
            let gain = e.gain(|u, v| self.inst.distance(u, v));
            let t1 = Instant::now();
            let mut s = apply_eset(a, &e)?;
            let subtours = s.component_count() as u32;
            let ledger = repair_in_place(self.inst, &mut s)?;
            let repair_time_us = if ledger.merges > 0 {
                t1.elapsed().as_micros() as u64
            } else {
                0
            };
            repairs += (ledger.merges > 0) as u64;
            records.push(OffspringRecord {
                stage: Stage::Two,
                portals: tabu.c_count as u32,
                subtours,
                accepted: true,
                selected: false,
                repairs: ledger.merges as u32,
                opt_edges: self.opt.map(|o| optimal_edge_ledger(o, &e, Some(&ledger))),
                check_time_us: 0,
                repair_time_us,
            });
            Self::keep_if_better(
                &mut best,
                a.length() + gain + ledger.delta,
                records.len() - 1,
                || Ok(s),
            )?;
        }
        self.finish(a, best, records, repairs).map(Some)
    }
}

/// Stage-I offspring of one parent pair under `cfg`'s variant gate.
pub fn stage1_offspring<R: Rng + ?Sized>(
    inst: &Instance,
    a: &Tour,
    b: &Tour,
    cfg: &SolverConfig,
    opt: Option<&Tour>,
    rng: &mut R,
) -> Result<PairOutcome, SolverError> {
    PairContext { inst, cfg, opt }
        .stage1(a, b, rng)?
        .ok_or(SolverError::NoOffspring)
}

/// Stage-II offspring of one parent pair.
pub fn stage2_offspring<R: Rng + ?Sized>(
    inst: &Instance,
    a: &Tour,
    b: &Tour,
    cfg: &SolverConfig,
    opt: Option<&Tour>,
    rng: &mut R,
) -> Result<PairOutcome, SolverError> {
    PairContext { inst, cfg, opt }
        .stage2(a, b, rng)?
        .ok_or(SolverError::NoOffspring)
}

/// Result of a tabu E-set assembly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TabuResult {
    /// Indices into the cycle pool, ascending.
    pub cycles: Vec<usize>,
    pub c_count: usize,
    pub iterations: usize,
}

/// Occurrence bookkeeping for C-vertex counting over unions of cycles.
pub struct CyclePool {
    /// Per cycle: distinct vertices with their multiplicity in the chain.
    members: Vec<Vec<(Vertex, u8)>>,
    /// Per vertex: cycles passing through it.
    by_vertex: Vec<Vec<usize>>,
}

impl CyclePool {
    pub fn new(cycles: &[AbCycle], n: usize) -> Self {
        let mut by_vertex = vec![Vec::new(); n];
        let members = cycles
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut vs = c.chain().to_vec();
                vs.sort_unstable();
                let grouped: Vec<(Vertex, u8)> = vs
                    .chunk_by(|x, y| x == y)
                    .map(|g| (g[0], g.len() as u8))
                    .collect();
                for &(v, _) in &grouped {
                    by_vertex[v].push(i);
                }
                grouped
            })
            .collect();
        CyclePool { members, by_vertex }
    }

    fn toggle_delta(&self, occ: &[u8], j: usize, adding: bool) -> isize {
        self.members[j]
            .iter()
            .map(|&(v, m)| {
                let old = occ[v];
                let new = if adding { old + m } else { old - m };
                (new == 1) as isize - (old == 1) as isize
            })
            .sum()
    }

    /// Tabu search from `start`: toggle cycles touching current C-vertices
    /// (add) or in the set (remove) to minimise the union's C-vertex count.
    /// Stops at `#C <= 2`, when no move exists, or after
    /// [`TABU_ITERATIONS`]; returns the best set seen (fewest C-vertices,
    /// then fewest cycles).
    pub fn search<R: Rng + ?Sized>(&self, start: usize, tenure: usize, rng: &mut R) -> TabuResult {
        let mut occ = vec![0u8; self.by_vertex.len()];
        let mut in_set = vec![false; self.members.len()];
        let mut tabu_until = vec![0usize; self.members.len()];
        let mut set = vec![start];
        in_set[start] = true;
        for &(v, m) in &self.members[start] {
            occ[v] += m;
        }
        let mut c = self.members[start].iter().filter(|&&(_, m)| m == 1).count();
        let mut best = (c, 1usize, set.clone());
        let mut iterations = 0;
        while best.0 > 2 && iterations < TABU_ITERATIONS {
            iterations += 1;
            let mut candidates: Vec<usize> =
                set.iter().copied().filter(|_| set.len() > 1).collect();
            for &j in &set {
                for &(v, _) in &self.members[j] {
                    if occ[v] == 1 {
                        candidates
                            .extend(self.by_vertex[v].iter().copied().filter(|&k| !in_set[k]));
                    }
                }
            }
            candidates.sort_unstable();
            candidates.dedup();
            let mut moves: Vec<(usize, usize, usize)> = Vec::new();
            for j in candidates {
                let adding = !in_set[j];
                let nc = (c as isize + self.toggle_delta(&occ, j, adding)) as usize;
                let len = if adding { set.len() + 1 } else { set.len() - 1 };
                let aspirates = (nc, len) < (best.0, best.1);
                if tabu_until[j] <= iterations || aspirates {
                    moves.push((nc, len, j));
                }
            }
            let Some(&(bc, bl, _)) = moves.iter().min() else {
                break;
            };
            let ties: Vec<usize> = moves
                .iter()
                .filter(|m| (m.0, m.1) == (bc, bl))
                .map(|m| m.2)
                .collect();
            let j = *ties.choose(rng).expect("nonempty");
            let adding = !in_set[j];
            for &(v, m) in &self.members[j] {
                if adding {
                    occ[v] += m;
                } else {
                    occ[v] -= m;
                }
            }
            in_set[j] = adding;
            if adding {
                set.push(j);
            } else {
                set.retain(|&k| k != j);
            }
            c = bc;
            tabu_until[j] = iterations + tenure + 1;
            if (c, set.len()) < (best.0, best.1) {
                best = (c, set.len(), set.clone());
            }
        }
        let mut cycles = best.2;
        cycles.sort_unstable();
        TabuResult {
            cycles,
            c_count: best.0,
            iterations,
        }
    }
}

/// Per-generation log record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub restart: u32,
    pub generation: u64,
    pub stage: Stage,
    pub best: i64,
    pub mean: f64,
    pub offspring: Vec<OffspringRecord>,
    pub elapsed_us: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub instance: String,
    pub variant: Variant,
    pub seed: u64,
    pub best_length: i64,
    pub target: Option<i64>,
    pub target_hit: bool,
    pub timed_out: bool,
    pub generations: u64,
    pub restarts: u32,
    pub stage1_repairs: u64,
    pub stage2_repairs: u64,
    pub time_to_target_us: Option<u64>,
    pub elapsed_us: u64,
}

/// One line of a JSON-lines run log. Timing fields end in `_us`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Generation(GenerationReport),
    Summary(RunSummary),
}

impl LogRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log records serialize")
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub best_tour: Tour,
    pub target_hit: bool,
    pub timed_out: bool,
    pub generations: u64,
    pub restarts: u32,
    pub stage1_repairs: u64,
    pub stage2_repairs: u64,
    /// Stage-I AB-cycle types over the whole run.
    pub histogram: TypeHistogram,
    pub time_to_target: Option<Duration>,
    pub elapsed: Duration,
}

impl RunResult {
    pub fn best_length(&self) -> i64 {
        self.best_tour.length()
    }

    pub fn summary(&self, inst: &Instance, cfg: &SolverConfig) -> RunSummary {
        RunSummary {
            instance: inst.name().to_string(),
            variant: cfg.variant,
            seed: cfg.seed,
            best_length: self.best_length(),
            target: cfg.target,
            target_hit: self.target_hit,
            timed_out: self.timed_out,
            generations: self.generations,
            restarts: self.restarts,
            stage1_repairs: self.stage1_repairs,
            stage2_repairs: self.stage2_repairs,
            time_to_target_us: self.time_to_target.map(|d| d.as_micros() as u64),
            elapsed_us: self.elapsed.as_micros() as u64,
        }
    }
}

/// Initial population of randomized nearest-neighbor + 2-opt tours.
pub fn initial_population(inst: &Instance, cfg: &SolverConfig, restart: u32) -> Vec<Tour> {
    par::map_indexed(cfg.population_size, cfg.parallel, |i| {
        greedy_2opt_init(
            inst,
            derive_seed(cfg.seed, &[TAG_INIT, restart as u64, i as u64]),
        )
    })
}

pub fn evolve(inst: &Instance, cfg: &SolverConfig) -> Result<RunResult, SolverError> {
    evolve_with(inst, cfg, |_| {})
}

/// Runs the GA, handing each generation's report to `observer`.
pub fn evolve_with(
    inst: &Instance,
    cfg: &SolverConfig,
    mut observer: impl FnMut(&GenerationReport),
) -> Result<RunResult, SolverError> {
    cfg.validate()?;
    let start = Instant::now();
    let rebuilt;
    let inst = if inst.neighbor_k() == cfg.neighbor_k.min(inst.dimension() - 1) {
        inst
    } else {
        rebuilt = inst.clone().with_neighbor_k(cfg.neighbor_k);
        &rebuilt
    };
    let opt = match (cfg.instrument, inst.optimal_tour()) {
        (true, Some(order)) => Some(Tour::from_order(inst, order.to_vec())?),
        _ => None,
    };
    let ctx = PairContext {
        inst,
        cfg,
        opt: opt.as_ref(),
    };
    let hit = |len: i64| cfg.target.is_some_and(|t| len <= t);
    let cutoff = cfg.cutoff();

    let mut incumbent: Option<Tour> = None;
    let mut res = RunResultBuilder::default();
    let mut restart: u32 = 0;
    'epochs: loop {
        let mut pop = initial_population(inst, cfg, restart);
        let epoch_best = pop
            .iter()
            .min_by_key(|t| t.length())
            .expect("population is nonempty");
        if incumbent
            .as_ref()
            .is_none_or(|b| epoch_best.length() < b.length())
        {
            incumbent = Some(epoch_best.clone());
        }
        if hit(epoch_best.length()) {
            res.target_hit = true;
            res.time_to_target = Some(start.elapsed());
            break 'epochs;
        }
        let mut best = epoch_best.length();
        let mut stage = Stage::One;
        let mut stagnation = 0;
        for generation in 0u64.. {
            if cutoff.is_some_and(|c| start.elapsed() >= c) {
                res.timed_out = true;
                break 'epochs;
            }
            if cfg.max_generations.is_some_and(|m| res.generations >= m) {
                break 'epochs;
            }
            let mut perm: Vec<usize> = (0..pop.len()).collect();
            perm.shuffle(&mut derived_rng(
                cfg.seed,
                &[TAG_PAIRING, restart as u64, generation],
            ));
            let snapshot = &pop;
            let outcomes = par::map_indexed(perm.len(), cfg.parallel, |i| {
                let a = &snapshot[perm[i]];
                let b = &snapshot[perm[(i + 1) % perm.len()]];
                let mut rng =
                    derived_rng(cfg.seed, &[TAG_PAIR, restart as u64, generation, i as u64]);
                match stage {
                    Stage::One => ctx.stage1(a, b, &mut rng),
                    Stage::Two => ctx.stage2(a, b, &mut rng),
                }
            });
            res.generations += 1;
            let mut offspring = Vec::new();
            for (i, out) in outcomes.into_iter().enumerate() {
                let Some(out) = out? else { continue };
                if stage == Stage::One {
                    for r in &out.records {
                        res.histogram.record(r);
                    }
                    res.stage1_repairs += out.repairs;
                } else {
                    res.stage2_repairs += out.repairs;
                }
                if let Some(t) = out.replacement {
                    pop[perm[i]] = t;
                }
                offspring.extend(out.records);
            }

            let lengths: Vec<i64> = pop.iter().map(Tour::length).collect();
            let gen_best = *lengths.iter().min().expect("nonempty");
            let spread = lengths.iter().max().expect("nonempty") - gen_best;
            let mean = lengths.iter().sum::<i64>() as f64 / lengths.len() as f64;
            observer(&GenerationReport {
                restart,
                generation,
                stage,
                best: gen_best,
                mean,
                offspring,
                elapsed_us: start.elapsed().as_micros() as u64,
            });

            if gen_best < best {
                best = gen_best;
                stagnation = 0;
                let t = pop
                    .iter()
                    .find(|t| t.length() == gen_best)
                    .expect("best is in the population");
                if incumbent.as_ref().is_none_or(|b| gen_best < b.length()) {
                    incumbent = Some(t.clone());
                }
                if hit(gen_best) {
                    res.target_hit = true;
                    res.time_to_target = Some(start.elapsed());
                    break 'epochs;
                }
            } else {
                stagnation += 1;
            }
            let converged =
                spread == 0 || (stage == Stage::Two && stagnation >= cfg.stagnation_generations);
            if stage == Stage::One && stagnation >= cfg.stagnation_generations {
                stage = Stage::Two;
                stagnation = 0;
            }
            if converged {
                break;
            }
        }
        if !cfg.restart {
            break;
        }
        restart += 1;
    }
    Ok(RunResult {
        best_tour: incumbent.expect("at least one population was built"),
        target_hit: res.target_hit,
        timed_out: res.timed_out && !res.target_hit,
        generations: res.generations,
        restarts: restart,
        stage1_repairs: res.stage1_repairs,
        stage2_repairs: res.stage2_repairs,
        histogram: res.histogram,
        time_to_target: res.time_to_target,
        elapsed: start.elapsed(),
    })
}

#[derive(Default)]
struct RunResultBuilder {
    target_hit: bool,
    timed_out: bool,
    generations: u64,
    stage1_repairs: u64,
    stage2_repairs: u64,
    histogram: TypeHistogram,
    time_to_target: Option<Duration>,
}
